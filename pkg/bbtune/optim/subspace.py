"""Prompt reparameterization ``p = p0 + Pi @ z``.

A tunable prompt of width D is never searched directly. Each layer owns a frozen
Gaussian projection ``Pi`` (D x d) and the optimizers only ever see the
low-dimensional vector ``z``. The projection standard deviation follows

    sigma_A = alpha * sigma_hat / (sqrt(d) * sigma_z)

so that ``Pi @ z`` has entries of standard deviation ``alpha * sigma_hat`` when
``z`` is drawn with standard deviation ``sigma_z``.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from bbtune.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)


def _frozen_vector(values, name):
    array = np.array(values, dtype=float)
    if array.ndim != 1:
        raise InvalidParameterError(f"{name} must be a vector, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidParameterError(f"{name} has non-finite entries")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class IntrinsicVector:
    values: np.ndarray
    layer_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_vector(self.values, "IntrinsicVector"))
        if self.layer_index < 0:
            raise InvalidParameterError(f"layer_index must be >= 0, got {self.layer_index}")

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class PromptVector:
    values: np.ndarray
    layer_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_vector(self.values, "PromptVector"))

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def zeros(cls, width, layer_index=0):
        return cls(np.zeros(width), layer_index)


@dataclass(frozen=True)
class ScalingParams:
    alpha: float
    sigma_hat: float
    sigma_z: float
    d: int

    def __post_init__(self):
        for name in ("alpha", "sigma_hat", "sigma_z"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be strictly positive, got {value}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidParameterError(f"d must be an integer >= 1, got {self.d}")


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    entries: np.ndarray
    sigma_a: float
    seed: int

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2:
            raise InvalidParameterError(f"projection must be a matrix, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def intrinsic_dim(self):
        return self.entries.shape[1]

    @property
    def width(self):
        return self.entries.shape[0]


def compute_sigma_a(params: ScalingParams) -> float:
    return params.alpha * params.sigma_hat / (math.sqrt(params.d) * params.sigma_z)


def measure_sigma_hat(embeddings) -> float:
    """Sample standard deviation of every entry of an embedding table."""
    table = np.asarray(embeddings, dtype=float)
    if table.size < 2:
        raise InvalidParameterError("embedding table needs at least two entries")
    sigma_hat = float(np.std(table))
    if sigma_hat <= 0:
        raise InvalidParameterError("embedding table is constant, sigma_hat would be 0")
    return sigma_hat


def make_projection(d: int, D: int, sigma_a: float, seed: int) -> ProjectionMatrix:
    if d < 1:
        raise InvalidParameterError(f"intrinsic dimension must be >= 1, got {d}")
    if D < d:
        raise InvalidParameterError(f"prompt width D={D} is smaller than intrinsic dimension d={d}")
    if not sigma_a > 0:
        raise InvalidParameterError(f"sigma_a must be strictly positive, got {sigma_a}")
    rng = np.random.default_rng(seed)
    return ProjectionMatrix(rng.normal(0.0, sigma_a, size=(D, d)), sigma_a=float(sigma_a), seed=seed)


def project(pi: ProjectionMatrix, z: IntrinsicVector) -> PromptVector:
    if len(z) != pi.intrinsic_dim:
        raise InvalidParameterError(
            f"intrinsic vector has length {len(z)}, projection expects {pi.intrinsic_dim}")
    return PromptVector(pi.entries @ z.values, z.layer_index)


def compose_prompt(p0: PromptVector, p_theta: PromptVector) -> PromptVector:
    if len(p0) != len(p_theta):
        raise InvalidParameterError(f"prompt widths differ: {len(p0)} != {len(p_theta)}")
    if p0.layer_index != p_theta.layer_index:
        raise InvalidParameterError(
            f"prompts belong to different layers: {p0.layer_index} != {p_theta.layer_index}")
    return PromptVector(p0.values + p_theta.values, p0.layer_index)


@dataclass(frozen=True, eq=False)
class LayerSubspace:
    """Frozen projection and initial prompt of one model layer."""
    projection: ProjectionMatrix
    p0: PromptVector

    @property
    def layer_index(self):
        return self.p0.layer_index

    @property
    def intrinsic_dim(self):
        return self.projection.intrinsic_dim

    def prompt(self, z) -> PromptVector:
        if not isinstance(z, IntrinsicVector):
            z = IntrinsicVector(z, self.layer_index)
        return compose_prompt(self.p0, project(self.projection, z))

    def manifest(self):
        return {
            "layer": self.layer_index,
            "seed": self.projection.seed,
            "d": self.projection.intrinsic_dim,
            "D": self.projection.width,
            "sigma_a": self.projection.sigma_a,
            "p0_norm": float(np.linalg.norm(self.p0.values)),
        }


@dataclass(frozen=True, eq=False)
class Subspaces:
    layers: Sequence[LayerSubspace]
    scaling: ScalingParams
    sigma_a: float
    base_seed: int

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, index):
        return self.layers[index]

    @property
    def intrinsic_dim(self):
        return self.scaling.d

    def prompts(self, zs) -> np.ndarray:
        """Stack the composed prompt of every layer into an L x D array."""
        if len(zs) != len(self.layers):
            raise InvalidParameterError(f"expected {len(self.layers)} intrinsic vectors, got {len(zs)}")
        return np.stack([layer.prompt(z).values for layer, z in zip(self.layers, zs)])

    def initial_vectors(self) -> List[np.ndarray]:
        return [np.zeros(self.intrinsic_dim) for _ in self.layers]

    def manifest(self):
        return {
            "d": self.scaling.d,
            "alpha": self.scaling.alpha,
            "sigma_hat": self.scaling.sigma_hat,
            "sigma_z": self.scaling.sigma_z,
            "sigma_a": self.sigma_a,
            "base_seed": self.base_seed,
            "layers": [layer.manifest() for layer in self.layers],
        }


def build_subspaces(layers: int, width: int, scaling: ScalingParams, base_seed: int,
                    p0: Optional[Sequence[PromptVector]] = None) -> Subspaces:
    """One independent projection per layer, seeded ``base_seed + layer``."""
    if layers < 1:
        raise InvalidParameterError(f"layers must be >= 1, got {layers}")
    sigma_a = compute_sigma_a(scaling)
    if p0 is None:
        p0 = [PromptVector.zeros(width, layer) for layer in range(layers)]
    if len(p0) != layers:
        raise InvalidParameterError(f"expected {layers} initial prompts, got {len(p0)}")
    built = []
    for layer in range(layers):
        if len(p0[layer]) != width or p0[layer].layer_index != layer:
            raise InvalidParameterError(f"initial prompt of layer {layer} does not match width {width}")
        projection = make_projection(scaling.d, width, sigma_a, base_seed + layer)
        built.append(LayerSubspace(projection, p0[layer]))
    logger.info(f"Built {layers} projections d={scaling.d} D={width} sigma_a={sigma_a:.6g}")
    return Subspaces(tuple(built), scaling, sigma_a, base_seed)
