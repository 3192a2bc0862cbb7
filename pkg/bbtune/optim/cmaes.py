"""Covariance Matrix Adaptation Evolution Strategy with an ask/tell interface.

Constants follow Hansen's tutorial defaults. The state is a plain mutable
record owned by one caller; ``cma_ask`` hands out candidates that may be
evaluated anywhere (threads, a remote oracle) and ``cma_tell`` consumes the
whole evaluated generation at once. Selection only looks at fitness ranks.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import linalg

from bbtune.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-20


@dataclass
class Candidate:
    point: np.ndarray
    fitness: Optional[float] = None
    # position in the global evaluation order, used to break fitness ties
    index: int = -1


@dataclass(frozen=True)
class CmaEsParameters:
    """Static strategy parameters, derived once from ``d`` and ``popsize``."""
    dim: int
    popsize: int
    mu: int
    weights: np.ndarray
    mueff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float
    chiN: float

    @classmethod
    def default(cls, dim, popsize=None):
        if popsize is None:
            popsize = 4 + int(math.floor(3 * math.log(dim)))
        mu = popsize // 2
        weights = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        weights = weights / weights.sum()
        mueff = float(1.0 / np.sum(weights ** 2))
        cc = (4 + mueff / dim) / (dim + 4 + 2 * mueff / dim)
        cs = (mueff + 2) / (dim + mueff + 5)
        c1 = 2 / ((dim + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((dim + 2) ** 2 + mueff))
        damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (dim + 1)) - 1) + cs
        chiN = math.sqrt(dim) * (1 - 1 / (4 * dim) + 1 / (21 * dim ** 2))
        weights.setflags(write=False)
        return cls(dim, popsize, mu, weights, mueff, cc, cs, c1, cmu, damps, chiN)


@dataclass
class CmaEsState:
    mean: np.ndarray
    step_size: float
    covariance: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    params: CmaEsParameters
    rng_seed: object
    rng: np.random.Generator
    generation: int = 0
    evaluations: int = 0
    eigenbasis: np.ndarray = None
    eigenscale: np.ndarray = None
    best: Optional[Candidate] = None
    covariance_repairs: int = 0
    history: List[dict] = field(default_factory=list)

    @property
    def popsize(self):
        return self.params.popsize

    @property
    def dim(self):
        return self.params.dim


def cma_init(d: int, m0, sigma0: float, popsize: Optional[int] = None, seed=0) -> CmaEsState:
    if int(d) != d or d < 1:
        raise InvalidParameterError(f"dimension must be an integer >= 1, got {d}")
    if not (sigma0 > 0 and math.isfinite(sigma0)):
        raise InvalidParameterError(f"sigma0 must be strictly positive, got {sigma0}")
    if popsize is not None and popsize < 2:
        raise InvalidParameterError(f"popsize must be >= 2, got {popsize}")
    mean = np.array(m0, dtype=float)
    if mean.shape != (d,):
        raise InvalidParameterError(f"m0 must have length {d}, got shape {mean.shape}")
    params = CmaEsParameters.default(d, popsize)
    return CmaEsState(
        mean=mean,
        step_size=float(sigma0),
        covariance=np.eye(d),
        path_sigma=np.zeros(d),
        path_c=np.zeros(d),
        params=params,
        rng_seed=seed,
        rng=np.random.default_rng(seed),
        eigenbasis=np.eye(d),
        eigenscale=np.ones(d),
    )


def cma_ask(state: CmaEsState) -> List[Candidate]:
    """Draw ``popsize`` points from N(m, step_size^2 C)."""
    _check_state(state)
    params = state.params
    normal = state.rng.standard_normal((params.popsize, params.dim))
    steps = (normal * state.eigenscale) @ state.eigenbasis.T
    points = state.mean + state.step_size * steps
    return [Candidate(point) for point in points]


def cma_tell(state: CmaEsState, evaluated: List[Candidate]) -> CmaEsState:
    params = state.params
    if len(evaluated) != params.popsize:
        raise InvalidParameterError(f"expected {params.popsize} evaluated candidates, got {len(evaluated)}")
    fitness = []
    for candidate in evaluated:
        if candidate.fitness is None or math.isnan(candidate.fitness):
            raise InvalidParameterError("every candidate needs a fitness before tell")
        if np.shape(candidate.point) != (params.dim,):
            raise InvalidParameterError(f"candidate has shape {np.shape(candidate.point)}, expected ({params.dim},)")
        fitness.append(float(candidate.fitness))
    fitness = np.array(fitness)

    for candidate in evaluated:
        candidate.index = state.evaluations
        state.evaluations += 1
        if state.best is None or candidate.fitness < state.best.fitness:
            state.best = Candidate(np.array(candidate.point, dtype=float), float(candidate.fitness), candidate.index)

    order = np.argsort(fitness, kind="stable")
    points = np.array([evaluated[i].point for i in order[:params.mu]], dtype=float)
    old_mean = state.mean
    state.mean = params.weights @ points

    sigma = state.step_size
    y = (state.mean - old_mean) / sigma
    inv_sqrt_c = state.eigenbasis @ np.diag(1.0 / state.eigenscale) @ state.eigenbasis.T
    state.path_sigma = ((1 - params.cs) * state.path_sigma
                        + math.sqrt(params.cs * (2 - params.cs) * params.mueff) * (inv_sqrt_c @ y))
    ps_norm = float(np.linalg.norm(state.path_sigma))
    threshold = (1.4 + 2 / (params.dim + 1)) * params.chiN
    hsig = ps_norm / math.sqrt(1 - (1 - params.cs) ** (2 * (state.generation + 1))) < threshold
    state.path_c = ((1 - params.cc) * state.path_c
                    + hsig * math.sqrt(params.cc * (2 - params.cc) * params.mueff) * y)

    artmp = (points - old_mean) / sigma
    rank_one = np.outer(state.path_c, state.path_c) + (1 - hsig) * params.cc * (2 - params.cc) * state.covariance
    rank_mu = artmp.T @ np.diag(params.weights) @ artmp
    covariance = (1 - params.c1 - params.cmu) * state.covariance + params.c1 * rank_one + params.cmu * rank_mu

    state.step_size = sigma * math.exp((params.cs / params.damps) * (ps_norm / params.chiN - 1))
    state.covariance, state.eigenbasis, state.eigenscale, smallest = _decompose(covariance)
    if smallest < EIGENVALUE_FLOOR:
        state.covariance_repairs += 1
        log = logger.warning if state.covariance_repairs == 1 else logger.debug
        log(f"Repairing covariance at generation {state.generation + 1}, smallest eigenvalue {smallest:.3g}")
    state.generation += 1

    row = {
        "generation": state.generation,
        "evals": state.evaluations,
        "best_f": state.best.fitness,
        "mean_f": float(fitness.mean()),
        "step_size": state.step_size,
    }
    state.history.append(row)
    logger.debug(f"CMA-ES generation {row['generation']} evals={row['evals']} "
                 f"best_f={row['best_f']:.6g} step_size={row['step_size']:.4g}")
    return state


def cma_best(state: CmaEsState) -> Candidate:
    """Lowest fitness ever told; on ties the earliest evaluation wins."""
    if state.best is None:
        raise InvalidParameterError("no generation has been told yet")
    return state.best


def _decompose(covariance):
    # symmetrize, then floor the spectrum so C stays positive definite
    covariance = np.triu(covariance) + np.triu(covariance, 1).T
    eigenvalues, eigenbasis = linalg.eigh(covariance)
    smallest = float(eigenvalues.min())
    if smallest < EIGENVALUE_FLOOR:
        eigenvalues = np.maximum(eigenvalues, EIGENVALUE_FLOOR)
        covariance = (eigenbasis * eigenvalues) @ eigenbasis.T
        covariance = np.triu(covariance) + np.triu(covariance, 1).T
    return covariance, eigenbasis, np.sqrt(eigenvalues), smallest


def _check_state(state):
    if not state.step_size > 0:
        raise InvalidParameterError(f"step size must stay positive, got {state.step_size}")


def minimize(objective: Callable[[np.ndarray], float], m0, sigma0: float, budget: int,
             popsize: Optional[int] = None, seed=0, target: Optional[float] = None) -> CmaEsState:
    """Run ask/tell generations until ``budget`` evaluations are spent.

    The last generation is skipped when it would not fit in the budget.
    Stops early once the best fitness drops below ``target``.
    """
    m0 = np.asarray(m0, dtype=float)
    state = cma_init(len(m0), m0, sigma0, popsize, seed)
    while state.evaluations + state.popsize <= budget:
        candidates = cma_ask(state)
        for candidate in candidates:
            candidate.fitness = float(objective(candidate.point))
        cma_tell(state, candidates)
        if target is not None and state.best.fitness < target:
            break
        if state.step_size < 1e-300:
            logger.info(f"Step size collapsed after {state.evaluations} evaluations")
            break
    logger.info(f"CMA-ES finished: {state.evaluations} evaluations, best_f={_best_or_nan(state):.6g}")
    return state


def _best_or_nan(state):
    return state.best.fitness if state.best is not None else float("nan")
