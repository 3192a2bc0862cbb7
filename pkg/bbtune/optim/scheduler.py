"""Two-stage derivative-free prompt tuning.

Stage I cycles over the layers and runs one CMA-ES generation per visit, each
layer keeping its own CMA-ES state for the whole stage. Stage II refines the
layers one after another with the simplex trust-region search. While a layer
is optimized every other layer stays at the incumbent, the best vector known
so far.

Every training-loss evaluation is one oracle call charged to the budgets.
Validation probes run at generation (stage I) and step (stage II) boundaries
whenever the incumbent changed; they are counted apart and never charged. The
reported answer is the snapshot with the lowest validation loss.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from bbtune.exceptions import BBTuneError, InvalidParameterError, StageAborted
from bbtune.optim.cmaes import cma_ask, cma_init, cma_tell
from bbtune.optim.cobyla import cobyla_run, line_search_run
from bbtune.optim.subspace import Subspaces
from bbtune.oracle.base import PROBE, TUNE, Oracle
from bbtune.oracle.metrics import accuracy, mean_cross_entropy
from bbtune.oracle.protocol import OracleRequest, PromptedExample
from bbtune.prompting.verbalizer import score_batch

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["call_index", "stage", "layer", "step", "train_loss", "best_train_loss", "val_loss"]


class Stage2Split(str, Enum):
    PER_LAYER_B2_DIV_D = "per_layer_b2_div_d"
    PER_LAYER_B2_DIV_L = "per_layer_b2_div_L"
    ALL_ON_INPUT_LAYER = "all_on_input_layer"


@dataclass(frozen=True)
class TwoStageConfig:
    budget1: int
    budget2: int
    intrinsic_dim: int
    alpha: float
    sigma1: float
    sigma2: float
    layers: int
    seed: int
    popsize: Optional[int] = None
    stage2_split: Stage2Split = Stage2Split.PER_LAYER_B2_DIV_L
    rho_end: float = 1e-6
    workers: int = 1
    two_stage: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stage2_split", Stage2Split(self.stage2_split))
        if self.budget1 < 0 or self.budget2 < 0:
            raise InvalidParameterError(f"budgets must be >= 0, got {self.budget1}, {self.budget2}")
        if self.popsize is not None and self.popsize < 2:
            raise InvalidParameterError(f"popsize must be >= 2, got {self.popsize}")
        if self.intrinsic_dim < 1 or self.layers < 1:
            raise InvalidParameterError(f"intrinsic_dim and layers must be >= 1, "
                                        f"got {self.intrinsic_dim}, {self.layers}")
        for name in ("alpha", "sigma1", "sigma2", "rho_end"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.sigma2 < self.rho_end:
            raise InvalidParameterError(f"sigma2={self.sigma2} starts the search below rho_end={self.rho_end}")
        if self.workers < 1:
            raise InvalidParameterError(f"workers must be >= 1, got {self.workers}")

    def stage2_caps(self) -> List[int]:
        """Per-layer call caps of stage II; they never sum above ``budget2``."""
        b2, layers = self.budget2, self.layers
        if self.stage2_split is Stage2Split.PER_LAYER_B2_DIV_D:
            caps = [b2 // self.intrinsic_dim] * layers
        elif self.stage2_split is Stage2Split.PER_LAYER_B2_DIV_L:
            caps = [b2 // layers + (1 if layer < b2 % layers else 0) for layer in range(layers)]
        else:
            caps = [b2] + [0] * (layers - 1)
        clipped, left = [], b2
        for cap in caps:
            clipped.append(min(cap, left))
            left -= clipped[-1]
        return clipped

    def manifest(self):
        return {
            "Budget1": self.budget1, "Budget2": self.budget2, "Alpha": self.alpha,
            "Sigma1": self.sigma1, "Sigma2": self.sigma2, "Popsize": self.popsize,
            "IntrinsicDim": self.intrinsic_dim, "Layers": self.layers, "Seed": self.seed,
            "Stage2Split": self.stage2_split.value, "RhoEnd": self.rho_end, "TwoStage": self.two_stage,
        }


class TuningObjective:
    """The oracle bound to one task: fixed train and validation batches and verbalizers."""

    def __init__(self, oracle: Oracle, subspaces: Subspaces, train_batch: Sequence[PromptedExample],
                 validation_batch: Sequence[PromptedExample], verbalizer_ids: Sequence[Sequence[int]],
                 workers: int = 1):
        self.oracle = oracle
        self.subspaces = subspaces
        self.train_batch = tuple(train_batch)
        self.validation_batch = tuple(validation_batch)
        self.verbalizer_ids = [list(ids) for ids in verbalizer_ids]
        self.workers = workers
        self._train_labels = np.array([e.label for e in self.train_batch])
        self._validation_labels = np.array([e.label for e in self.validation_batch])

    def _request(self, zs, batch):
        return OracleRequest(self.subspaces.prompts(zs), batch)

    def train_losses(self, candidates: Sequence[Sequence[np.ndarray]]) -> Iterator[float]:
        requests = [self._request(zs, self.train_batch) for zs in candidates]
        for response in self.oracle.iter_evaluate(requests, TUNE, self.workers):
            yield mean_cross_entropy(score_batch(response.probs, self.verbalizer_ids), self._train_labels)

    def train_loss(self, zs) -> float:
        return next(self.train_losses([zs]))

    def labels(self, split: str = "validation") -> np.ndarray:
        return self._validation_labels if split == "validation" else self._train_labels

    def probe_probs(self, zs, split: str = "validation") -> np.ndarray:
        """Mask-position probabilities on a split, charged as a probe call."""
        batch = self.validation_batch if split == "validation" else self.train_batch
        return self.oracle.evaluate(self._request(zs, batch), PROBE).probs

    def probe(self, zs, split: str = "validation") -> Tuple[float, float]:
        labels = self.labels(split)
        class_probs = score_batch(self.probe_probs(zs, split), self.verbalizer_ids)
        return mean_cross_entropy(class_probs, labels), accuracy(class_probs.argmax(axis=1), labels)

    @property
    def tune_calls(self):
        return self.oracle.counter.count(TUNE)


@dataclass
class RunRecord:
    seed: int
    rows: List[dict] = field(default_factory=list)
    best_vectors: List[np.ndarray] = field(default_factory=list)
    final: dict = field(default_factory=dict)
    cma_log: List[dict] = field(default_factory=list)
    search_log: List[dict] = field(default_factory=list)
    stage2_start: Optional[int] = None

    def __len__(self):
        return len(self.rows)

    def append(self, stage, layer, step, train_loss, best_train_loss):
        self.rows.append({
            "call_index": len(self.rows) + 1, "stage": stage, "layer": layer, "step": step,
            "train_loss": train_loss, "best_train_loss": best_train_loss, "val_loss": math.nan,
        })

    def mark_validation(self, val_loss):
        if self.rows:
            self.rows[-1]["val_loss"] = val_loss

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=RECORD_COLUMNS)

    def write_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")

    def calls(self, stage: int) -> int:
        return sum(1 for row in self.rows if row["stage"] == stage)

    def max_validation_increase(self, stage: int) -> float:
        """Largest rise between consecutive validation probes inside one stage."""
        values = [row["val_loss"] for row in self.rows if row["stage"] == stage and not math.isnan(row["val_loss"])]
        rises = [b - a for a, b in zip(values, values[1:])]
        return max(rises, default=0.0)


class _Tuning:
    """Incumbent bookkeeping shared by both stages."""

    def __init__(self, config: TwoStageConfig, objective: TuningObjective, record: RunRecord,
                 incumbent: Optional[List[np.ndarray]] = None, incumbent_loss: float = math.inf):
        self.config = config
        self.objective = objective
        self.record = record
        self.incumbent = [np.array(z, dtype=float) for z in
                          (incumbent if incumbent is not None else objective.subspaces.initial_vectors())]
        self.incumbent_loss = incumbent_loss
        self.best_val = math.inf
        self.snapshot = [z.copy() for z in self.incumbent]

    def with_layer(self, layer, z):
        zs = list(self.incumbent)
        zs[layer] = np.asarray(z, dtype=float)
        return zs

    def accept(self, stage, layer, step, z, loss) -> bool:
        improved = loss < self.incumbent_loss
        if improved:
            self.incumbent[layer] = np.array(z, dtype=float)
            self.incumbent_loss = loss
        self.record.append(stage, layer, step, loss, self.incumbent_loss)
        return improved

    def probe(self):
        val_loss, _ = self.objective.probe(self.incumbent)
        self.record.mark_validation(val_loss)
        if val_loss < self.best_val:
            self.best_val = val_loss
            self.snapshot = [z.copy() for z in self.incumbent]
        return val_loss


def _stage1(run: _Tuning, budget: int):
    config = run.config
    d = config.intrinsic_dim
    states = {}
    calls, visit = 0, 0
    while calls < budget:
        layer = visit % config.layers
        visit += 1
        if layer not in states:
            sigma0 = config.sigma1 if layer == 0 else config.sigma2
            states[layer] = cma_init(d, run.incumbent[layer], sigma0, config.popsize, seed=[config.seed, layer, 1])
        state = states[layer]
        candidates = cma_ask(state)
        width = min(len(candidates), budget - calls)
        changed = False
        losses = run.objective.train_losses([run.with_layer(layer, c.point) for c in candidates[:width]])
        for candidate, loss in zip(candidates[:width], losses):
            candidate.fitness = loss
            calls += 1
            changed |= run.accept(1, layer, state.generation + 1, candidate.point, loss)
        if width == len(candidates):
            cma_tell(state, candidates)
            run.record.cma_log.append({"layer": layer, **state.history[-1]})
        else:
            logger.info(f"Stage I budget ends inside a generation of layer {layer}: "
                        f"{width} of {len(candidates)} candidates evaluated, no update")
        if changed:
            run.probe()
    logger.info(f"Stage I done: {calls} calls, best train loss {run.incumbent_loss:.6g}")


def _stage2(run: _Tuning):
    config = run.config
    d = config.intrinsic_dim
    run.record.stage2_start = len(run.record) + 1
    for layer, cap in enumerate(config.stage2_caps()):
        if cap <= 0:
            continue
        steps = [0]

        def layer_loss(z, layer=layer):
            steps[0] += 1
            loss = run.objective.train_loss(run.with_layer(layer, z))
            if run.accept(2, layer, steps[0], z, loss):
                run.probe()
            return loss

        start = run.incumbent[layer].copy()
        if cap >= d + 1:
            result = cobyla_run(start, config.sigma2, config.rho_end, cap, layer_loss)
        else:
            logger.warning(f"Stage II cap {cap} of layer {layer} is below d + 1 = {d + 1}, "
                           f"falling back to direction-set line search")
            known = run.incumbent_loss if math.isfinite(run.incumbent_loss) else None
            result = line_search_run(start, config.sigma2, config.rho_end, cap, layer_loss, f0=known)
        run.record.search_log.extend({"layer": layer, **row} for row in result.trace)
        logger.info(f"Stage II layer {layer}: {result.evals_used} calls of {cap}, best {result.fitness:.6g}")


def _aborted(stage, run, exc):
    logger.error(f"Stage {stage} aborted after {len(run.record)} calls: {exc}")
    return StageAborted(f"stage {stage} aborted after {len(run.record)} calls: {exc}", run.record)


def run_stage1(config: TwoStageConfig, objective: TuningObjective,
               record: Optional[RunRecord] = None) -> Tuple[List[np.ndarray], RunRecord]:
    record = record if record is not None else RunRecord(config.seed)
    run = _Tuning(config, objective, record)
    if config.budget1:
        try:
            _stage1(run, config.budget1)
        except BBTuneError as exc:
            raise _aborted(1, run, exc) from exc
    return run.incumbent, record


def run_stage2(config: TwoStageConfig, objective: TuningObjective, stage1_vectors: Sequence[np.ndarray],
               record: Optional[RunRecord] = None) -> Tuple[List[np.ndarray], RunRecord]:
    record = record if record is not None else RunRecord(config.seed)
    run = _Tuning(config, objective, record, incumbent=stage1_vectors)
    if config.budget2:
        try:
            _stage2(run)
        except BBTuneError as exc:
            raise _aborted(2, run, exc) from exc
    return run.incumbent, record


def run_two_stage(config: TwoStageConfig, objective: TuningObjective) -> RunRecord:
    """Stage I, then stage II on the remaining budget; ``two_stage=False`` spends both budgets in stage I."""
    if not config.two_stage:
        config = replace(config, budget1=config.budget1 + config.budget2, budget2=0)
    record = RunRecord(config.seed)
    run = _Tuning(config, objective, record)
    start_calls = objective.tune_calls
    try:
        run.probe()
        if config.budget1:
            _stage1(run, config.budget1)
    except BBTuneError as exc:
        raise _aborted(1, run, exc) from exc
    try:
        if config.budget2:
            _stage2(run)
    except BBTuneError as exc:
        raise _aborted(2, run, exc) from exc

    charged = objective.tune_calls - start_calls
    if charged != len(record):
        raise BBTuneError(f"run record holds {len(record)} calls but the oracle charged {charged}")
    record.best_vectors = [z.copy() for z in run.snapshot]
    train_loss, train_accuracy = objective.probe(run.snapshot, "train")
    val_loss, val_accuracy = objective.probe(run.snapshot, "validation")
    record.final = {
        "train_loss": train_loss, "train_accuracy": train_accuracy,
        "val_loss": val_loss, "val_accuracy": val_accuracy,
        "best_train_loss": run.incumbent_loss, "calls": len(record),
        "stage1_calls": record.calls(1), "stage2_calls": record.calls(2),
    }
    logger.info(f"Run seed={config.seed} finished: {len(record)} calls, "
                f"val_accuracy={val_accuracy:.4f}, train_loss={train_loss:.4g}")
    return record
