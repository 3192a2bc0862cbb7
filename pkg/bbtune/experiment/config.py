"""Per-run task configuration.

A task configuration is a flat JSON object. The hyperparameter keys are
Budget1, Budget2, Alpha, Sigma1 and Sigma2; the rest select the backend,
the task and the toggles. Values are layered: preset, then file, then
explicit overrides, then the environment.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Tuple

from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError

from bbtune.exceptions import ConfigError, InvalidParameterError
from bbtune.optim.scheduler import Stage2Split, TwoStageConfig
from bbtune.prompting.templates import DEFAULT_INSTRUCTION, DEFAULT_TEMPLATE, Template, get_preset

logger = logging.getLogger(__name__)

SIMULATED = "simulated"
REMOTE = "remote"

DEFAULTS = {
    "Popsize": None,
    "IntrinsicDim": 100,
    "Layers": 3,
    "Width": 128,
    "Seed": 42,
    "Stage2Split": Stage2Split.PER_LAYER_B2_DIV_L.value,
    "RhoEnd": 1e-6,
    "TwoStage": True,
    "M2Verbalizers": True,
    "In2Init": True,
    "Oracle": SIMULATED,
    "FixtureSeed": 42,
    "Classes": 2,
    "Shots": 16,
    "Template": DEFAULT_TEMPLATE,
    "Instruction": DEFAULT_INSTRUCTION,
    "PerClassCap": 3,
    "TfidfTopK": 3,
    "AutoTopK": 3,
}


class PositiveFloatField(forms.FloatField):
    def validate(self, value):
        super().validate(value)
        if value is not None and not value > 0:
            raise ValidationError("must be strictly positive")


class TaskConfigForm(forms.Form):
    Budget1 = forms.IntegerField(min_value=0)
    Budget2 = forms.IntegerField(min_value=0)
    Alpha = PositiveFloatField()
    Sigma1 = PositiveFloatField()
    Sigma2 = PositiveFloatField()
    Popsize = forms.IntegerField(min_value=2, required=False)
    IntrinsicDim = forms.IntegerField(min_value=1)
    Layers = forms.IntegerField(min_value=1)
    Width = forms.IntegerField(min_value=2)
    Seed = forms.IntegerField(min_value=0)
    Stage2Split = forms.ChoiceField(choices=[(s.value, s.value) for s in Stage2Split])
    RhoEnd = PositiveFloatField()
    Workers = forms.IntegerField(min_value=1)
    TwoStage = forms.BooleanField(required=False)
    M2Verbalizers = forms.BooleanField(required=False)
    In2Init = forms.BooleanField(required=False)
    VerbalizerFile = forms.CharField(required=False)
    Oracle = forms.ChoiceField(choices=[(SIMULATED, SIMULATED), (REMOTE, REMOTE)])
    Endpoint = forms.URLField(required=False)
    FixtureSeed = forms.IntegerField(min_value=0)
    Classes = forms.IntegerField(min_value=2)
    Shots = forms.IntegerField(min_value=1)
    OutputDir = forms.CharField()
    Template = forms.CharField()
    Instruction = forms.CharField(required=False, strip=True)
    LabelWords = forms.JSONField(required=False)
    PerClassCap = forms.IntegerField(min_value=1)
    TfidfTopK = forms.IntegerField(min_value=0)
    AutoTopK = forms.IntegerField(min_value=0)

    def clean_Template(self):
        template = self.cleaned_data["Template"]
        try:
            Template.parse(template)
        except InvalidParameterError as exc:
            raise ValidationError(str(exc))
        return template

    def clean_VerbalizerFile(self):
        path = self.cleaned_data["VerbalizerFile"]
        if path and not Path(path).is_file():
            raise ValidationError(f"verbalizer file {path} does not exist")
        return path or None

    def clean_LabelWords(self):
        words = self.cleaned_data["LabelWords"]
        if words is None:
            return None
        if not isinstance(words, list) or not all(
                isinstance(group, list) and group and all(isinstance(w, str) for w in group) for group in words):
            raise ValidationError("must be a list of non-empty lists of words, one list per class")
        return tuple(tuple(group) for group in words)

    def clean(self):
        cleaned = super().clean()
        backend, endpoint = cleaned.get("Oracle"), cleaned.get("Endpoint")
        if backend == REMOTE and not endpoint:
            self.add_error("Endpoint", "the remote oracle needs an endpoint")
        if backend == SIMULATED and endpoint:
            self.add_error("Endpoint", "an endpoint selects the remote oracle, set Oracle to remote")
        if cleaned.get("IntrinsicDim") and cleaned.get("Width") and cleaned["IntrinsicDim"] > cleaned["Width"]:
            self.add_error("IntrinsicDim", f"must not exceed Width={cleaned['Width']}")
        words = cleaned.get("LabelWords")
        if words is not None and cleaned.get("Classes") and len(words) != cleaned["Classes"]:
            self.add_error("LabelWords", f"covers {len(words)} classes, expected {cleaned['Classes']}")
        if cleaned.get("Sigma2") and cleaned.get("RhoEnd") and cleaned["Sigma2"] < cleaned["RhoEnd"]:
            self.add_error("RhoEnd", f"must not exceed Sigma2={cleaned['Sigma2']}")
        return cleaned


@dataclass(frozen=True)
class TaskConfig:
    budget1: int
    budget2: int
    alpha: float
    sigma1: float
    sigma2: float
    popsize: Optional[int]
    intrinsic_dim: int
    layers: int
    width: int
    seed: int
    stage2_split: Stage2Split
    rho_end: float
    workers: int
    two_stage: bool
    m2_verbalizers: bool
    in2_init: bool
    verbalizer_file: Optional[str]
    oracle: str
    endpoint: Optional[str]
    fixture_seed: int
    classes: int
    shots: int
    output_dir: str
    template: str
    instruction: str
    label_words: Optional[Tuple[Tuple[str, ...], ...]]
    per_class_cap: int
    tfidf_top_k: int
    auto_top_k: int

    def with_seed(self, seed: int) -> "TaskConfig":
        return replace(self, seed=seed)

    def two_stage_config(self) -> TwoStageConfig:
        return TwoStageConfig(
            budget1=self.budget1, budget2=self.budget2, intrinsic_dim=self.intrinsic_dim,
            alpha=self.alpha, sigma1=self.sigma1, sigma2=self.sigma2, layers=self.layers,
            seed=self.seed, popsize=self.popsize, stage2_split=self.stage2_split,
            rho_end=self.rho_end, workers=self.workers, two_stage=self.two_stage,
        )

    def document(self) -> dict:
        """The configuration under its file keys, as echoed into run manifests."""
        values = asdict(self)
        values["stage2_split"] = self.stage2_split.value
        if self.label_words is not None:
            values["label_words"] = [list(words) for words in self.label_words]
        return {key: values[attribute] for key, attribute in FIELD_ATTRIBUTES.items()}


FIELD_ATTRIBUTES = {
    "Budget1": "budget1", "Budget2": "budget2", "Alpha": "alpha", "Sigma1": "sigma1", "Sigma2": "sigma2",
    "Popsize": "popsize", "IntrinsicDim": "intrinsic_dim", "Layers": "layers", "Width": "width",
    "Seed": "seed", "Stage2Split": "stage2_split", "RhoEnd": "rho_end", "Workers": "workers",
    "TwoStage": "two_stage", "M2Verbalizers": "m2_verbalizers", "In2Init": "in2_init",
    "VerbalizerFile": "verbalizer_file", "Oracle": "oracle", "Endpoint": "endpoint",
    "FixtureSeed": "fixture_seed", "Classes": "classes", "Shots": "shots", "OutputDir": "output_dir",
    "Template": "template", "Instruction": "instruction", "LabelWords": "label_words",
    "PerClassCap": "per_class_cap", "TfidfTopK": "tfidf_top_k", "AutoTopK": "auto_top_k",
}


def parse_task_config(document) -> TaskConfig:
    """Validate a configuration object; the first violation raises ``ConfigError`` naming its key."""
    if not isinstance(document, dict):
        raise ConfigError("<root>", "a task configuration must be a JSON object")
    unknown = sorted(set(document) - set(FIELD_ATTRIBUTES))
    if unknown:
        raise ConfigError(unknown[0], f"unknown key, expected one of {sorted(FIELD_ATTRIBUTES)}")
    data = {**DEFAULTS, "Workers": settings.ORACLE_WORKERS, "OutputDir": settings.OUTPUT_DIR}
    data.update(document)
    form = TaskConfigForm(data={key: value for key, value in data.items() if value is not None})
    if not form.is_valid():
        for key in FIELD_ATTRIBUTES:
            if key in form.errors:
                raise ConfigError(key, " ".join(form.errors[key]))
        raise ConfigError("<root>", form.errors.as_text())
    values = {FIELD_ATTRIBUTES[key]: value for key, value in form.cleaned_data.items()}
    values["stage2_split"] = Stage2Split(values["stage2_split"])
    values["endpoint"] = values["endpoint"] or None
    return TaskConfig(**values)


def read_config_file(path) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read configuration: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(path), f"not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError(str(path), "a task configuration must be a JSON object")
    return document


def environment_overrides() -> dict:
    overrides = {}
    endpoint = os.getenv("BBTUNE_ENDPOINT")
    if endpoint:
        overrides.update(Oracle=REMOTE, Endpoint=endpoint)
    output_dir = os.getenv("BBTUNE_OUTPUT_DIR")
    if output_dir:
        overrides["OutputDir"] = output_dir
    return overrides


def load_task_config(path=None, preset: Optional[str] = None, overrides: Optional[dict] = None) -> TaskConfig:
    document = {}
    if preset:
        try:
            document.update(get_preset(preset).config_values())
        except InvalidParameterError as exc:
            raise ConfigError("preset", str(exc)) from exc
    if path:
        document.update(read_config_file(path))
    document.update(overrides or {})
    document.update(environment_overrides())
    config = parse_task_config(document)
    logger.info(f"Task configuration: Budget1={config.budget1} Budget2={config.budget2} Alpha={config.alpha} "
                f"Sigma1={config.sigma1} Sigma2={config.sigma2} seed={config.seed} oracle={config.oracle}")
    return config
