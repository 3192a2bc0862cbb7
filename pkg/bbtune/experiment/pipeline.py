"""End-to-end runs: task setup, initialization, verbalizers, tuning and artifacts.

One run directory holds ``record.csv`` (one row per charged oracle call),
``generations.csv`` and ``stage2.csv`` (optimizer traces), ``best_vectors.npy``
and ``manifest.json`` (configuration echo, verbalizers, demonstration and
final metrics).
"""
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from bbtune.exceptions import ConfigError, StageAborted
from bbtune.experiment.config import REMOTE, TaskConfig
from bbtune.experiment.report import write_report
from bbtune.optim.scheduler import RunRecord, TuningObjective, run_two_stage
from bbtune.optim.subspace import ScalingParams, build_subspaces, measure_sigma_hat
from bbtune.oracle.base import ModelCard, Oracle
from bbtune.oracle.fixture import make_fixture_task
from bbtune.oracle.metrics import accuracy
from bbtune.oracle.remote import RemoteOracle
from bbtune.prompting.corpus import FewShotCorpus
from bbtune.prompting.initseek import (DemonstrationSearch, Instruction, initial_prompts, prompt_prefix,
                                       select_demonstration)
from bbtune.prompting.templates import Template, encode_batch
from bbtune.prompting.verbalizer import (VerbalizerSet, assemble_m2, auto_candidates, score_batch,
                                         tfidf_candidates)

logger = logging.getLogger(__name__)

SEEDS = (42, 50, 66)

ABLATIONS = {
    "full": {},
    "pure_cma": {"two_stage": False},
    "no_m2": {"m2_verbalizers": False},
    "no_in2": {"in2_init": False},
}


@dataclass(frozen=True, eq=False)
class TaskContext:
    config: TaskConfig
    corpus: FewShotCorpus
    template: Template
    manual_words: Tuple[Tuple[str, ...], ...]
    oracle: Oracle
    card: ModelCard

    @property
    def instruction(self) -> Instruction:
        return Instruction(tuple(self.config.instruction.split()), self.template)


@dataclass(frozen=True, eq=False)
class RunResult:
    record: RunRecord
    manifest: dict
    run_dir: Path


def prepare_task(config: TaskConfig, oracle: Optional[Oracle] = None) -> TaskContext:
    """Build the few-shot corpus and connect the oracle backend the configuration selects."""
    task = make_fixture_task(seed=config.fixture_seed, classes=config.classes, shots=config.shots,
                             layers=config.layers, width=config.width, label_words=config.label_words,
                             template=config.template, instruction=config.instruction)
    if oracle is None:
        oracle = RemoteOracle(config.endpoint) if config.oracle == REMOTE else task.oracle()
    card = oracle.describe()
    if card.layers != config.layers:
        raise ConfigError("Layers", f"the oracle model has {card.layers} layers, configured {config.layers}")
    if card.width != config.width:
        raise ConfigError("Width", f"the oracle model has width {card.width}, configured {config.width}")
    manual = tuple(tuple(words) for words in task.manual_verbalizers)
    return TaskContext(config, task.corpus, task.template, manual, oracle, card)


def search_demonstration(context: TaskContext) -> DemonstrationSearch:
    return select_demonstration(context.corpus, context.instruction, context.oracle,
                                VerbalizerSet.manual(context.manual_words), context.config.workers)


def build_verbalizers(context: TaskContext, prefix: Sequence[str] = ()) -> VerbalizerSet:
    """Manual words mixed with TF-IDF and oracle-ranked candidates."""
    config = context.config
    vocabulary = context.card.vocabulary
    tfidf = auto = None
    if config.tfidf_top_k:
        tfidf = tfidf_candidates(context.corpus, config.tfidf_top_k, exclude=vocabulary.reserved)
    if config.auto_top_k:
        auto = auto_candidates(context.corpus, context.oracle, context.template, config.auto_top_k, prefix)
    return assemble_m2(context.manual_words, tfidf, auto, config.per_class_cap)


def run_verbalizers(context: TaskContext, prefix: Sequence[str] = ()) -> VerbalizerSet:
    config = context.config
    if config.verbalizer_file:
        verbalizers = VerbalizerSet.load(config.verbalizer_file)
    elif config.m2_verbalizers:
        verbalizers = build_verbalizers(context, prefix)
    else:
        verbalizers = VerbalizerSet.manual(context.manual_words)
    if len(verbalizers) != config.classes:
        raise ConfigError("VerbalizerFile", f"holds {len(verbalizers)} classes, configured {config.classes}")
    return verbalizers if config.m2_verbalizers else verbalizers.first_tokens()


def initialization(context: TaskContext):
    """Prompt prefix, initial prompts and the demonstration search, all empty without In2Init."""
    if not context.config.in2_init:
        return (), None, None
    search = search_demonstration(context)
    prefix = prompt_prefix(context.instruction, search.demonstration)
    return prefix, initial_prompts(prefix, context.oracle), search


def member_accuracies(objective: TuningObjective, vectors, verbalizers: VerbalizerSet, vocabulary):
    """Validation accuracy of every single-token verbalizer drawn from the set, from one probe call."""
    probs = objective.probe_probs(vectors)
    labels = objective.labels()
    width = max(len(tokens) for tokens in verbalizers.classes)
    results = []
    for j in range(width):
        single = [[tokens[min(j, len(tokens) - 1)]] for tokens in verbalizers.classes]
        class_probs = score_batch(probs, [vocabulary.encode(tokens) for tokens in single])
        results.append({"tokens": [tokens[0] for tokens in single],
                        "val_accuracy": accuracy(class_probs.argmax(axis=1), labels)})
    return results


def optimize(config: TaskConfig, oracle: Optional[Oracle] = None, run_dir=None, variant: str = "full") -> RunResult:
    run_dir = Path(run_dir) if run_dir is not None else Path(config.output_dir) / f"seed_{config.seed}"
    context = prepare_task(config, oracle)
    prefix, p0, search = initialization(context)
    verbalizers = run_verbalizers(context, prefix)
    vocabulary = context.card.vocabulary

    scaling = ScalingParams(config.alpha, measure_sigma_hat(context.card.embeddings), config.sigma1,
                            config.intrinsic_dim)
    subspaces = build_subspaces(config.layers, context.card.width, scaling, config.seed, p0)
    objective = TuningObjective(
        context.oracle, subspaces,
        encode_batch(context.template, context.corpus.train, vocabulary, prefix),
        encode_batch(context.template, context.corpus.validation, vocabulary, prefix),
        verbalizers.ids(vocabulary), config.workers,
    )
    two_stage = config.two_stage_config()
    try:
        record = run_two_stage(two_stage, objective)
    except StageAborted as exc:
        run_dir.mkdir(parents=True, exist_ok=True)
        exc.record.write_csv(run_dir / "record.partial.csv")
        logger.error(f"Partial record of {len(exc.record)} calls written to {run_dir}")
        raise

    final = dict(record.final)
    final["stage1_max_val_increase"] = record.max_validation_increase(1)
    final["stage2_max_val_increase"] = record.max_validation_increase(2)
    manifest = {
        "variant": variant,
        "seed": config.seed,
        "config": config.document(),
        "two_stage": two_stage.manifest(),
        "subspaces": subspaces.manifest(),
        "verbalizers": verbalizers.to_document(),
        "prefix": list(prefix),
        "demonstration": None if search is None else {
            "index": search.demonstration.index,
            "tokens": list(search.demonstration.tokens),
            "scores": search.table(),
        },
        "final": final,
        "member_accuracies": member_accuracies(objective, record.best_vectors, verbalizers, vocabulary),
        "stage2_start": record.stage2_start,
        "calls": context.oracle.counter.snapshot(),
    }
    write_run(run_dir, record, manifest)
    return RunResult(record, manifest, run_dir)


def _jsonable(value):
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_run(run_dir: Path, record: RunRecord, manifest: dict):
    run_dir.mkdir(parents=True, exist_ok=True)
    record.write_csv(run_dir / "record.csv")
    pd.DataFrame(record.cma_log).to_csv(run_dir / "generations.csv", index=False, float_format="%.10g")
    pd.DataFrame(record.search_log).to_csv(run_dir / "stage2.csv", index=False, float_format="%.10g")
    np.save(run_dir / "best_vectors.npy", np.stack(record.best_vectors))
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))
    logger.info(f"Run artifacts written to {run_dir}")


def write_verbalizers(config: TaskConfig, path, oracle: Optional[Oracle] = None) -> VerbalizerSet:
    context = prepare_task(config, oracle)
    prefix, _, _ = initialization(context)
    verbalizers = build_verbalizers(context, prefix)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    verbalizers.save(path)
    logger.info(f"Verbalizers written to {path}")
    return verbalizers


def write_demonstration_search(config: TaskConfig, path, oracle: Optional[Oracle] = None) -> DemonstrationSearch:
    context = prepare_task(config, oracle)
    search = search_demonstration(context)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(search.table()).to_csv(path, index=False, float_format="%.10g")
    logger.info(f"Demonstration scores written to {path}")
    return search


def run_ablation(config: TaskConfig, seeds: Sequence[int] = SEEDS, variants: Optional[Sequence[str]] = None,
                 oracle_factory=None) -> pd.DataFrame:
    """Full configuration and each technique switched off, every variant over ``seeds``.

    The pure CMA-ES variant spends Budget1 + Budget2 in stage I.
    ``oracle_factory`` builds a fresh oracle per run, the configured backend by default.
    """
    root = Path(config.output_dir)
    for variant in variants or list(ABLATIONS):
        if variant not in ABLATIONS:
            raise ConfigError("variant", f"unknown ablation {variant!r}, expected one of {sorted(ABLATIONS)}")
        for seed in seeds:
            run_config = replace(config.with_seed(seed), **ABLATIONS[variant])
            oracle = oracle_factory() if oracle_factory is not None else None
            logger.info(f"Ablation {variant} seed={seed}")
            optimize(run_config, oracle, root / variant / f"seed_{seed}", variant)
    summary, _ = write_report(root)
    return summary
