"""Linear-model trust-region search over a simplex (unconstrained COBYLA core).

The method keeps ``d + 1`` interpolation points. Every step spends exactly one
objective evaluation on one of two moves:

* a geometry move, when the simplex is too wide for the current radius or
  nearly flat, which re-seeds one vertex orthogonally to the others around
  the best point;
* a model move, which fits the linear model through the simplex and tries its
  minimizer on the trust-region boundary.

A failed model move halves ``rho`` down to ``rho_end``. The run has converged
once a model move fails at ``rho_end``.

``line_search_run`` is the small-budget fallback: probes along a direction
set, renewed after each improving sweep.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import linalg

from bbtune.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

SHRINK = 0.5
FLAT_SIMPLEX_RATIO = 0.1
WIDE_SIMPLEX_RATIO = 2.0


@dataclass
class CobylaState:
    simplex: np.ndarray
    values: np.ndarray
    rho: float
    rho_end: float
    objective: Callable[[np.ndarray], float]
    best_index: int = 0
    eval_count: int = 0
    budget: Optional[int] = None
    converged: bool = False
    trace: List[dict] = field(default_factory=list)

    @property
    def dim(self):
        return self.simplex.shape[1]

    @property
    def best_point(self):
        return self.simplex[self.best_index].copy()

    @property
    def best_value(self):
        return float(self.values[self.best_index])

    def exhausted(self):
        return self.budget is not None and self.eval_count >= self.budget


@dataclass
class CobylaResult:
    point: np.ndarray
    fitness: float
    evals_used: int
    converged: bool
    trace: List[dict]


class DirectionSet:
    """Ordered unit search directions."""

    def __init__(self, directions):
        directions = np.array(directions, dtype=float)
        if directions.ndim != 2 or directions.shape[0] == 0:
            raise InvalidParameterError("a direction set needs at least one direction")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(norms == 0):
            raise InvalidParameterError("directions must be non-zero")
        self.directions = directions / norms[:, None]

    @classmethod
    def coordinate(cls, d):
        return cls(np.eye(d))

    def __len__(self):
        return self.directions.shape[0]

    def __iter__(self):
        return iter(self.directions)

    def renew(self, displacement):
        """Put ``displacement`` first and orthonormalize the rest against it."""
        norm = np.linalg.norm(displacement)
        if norm == 0:
            return self
        stacked = np.column_stack([displacement / norm, self.directions.T])
        q, _ = linalg.qr(stacked)
        renewed = q.T[: len(self)].copy()
        # QR may flip the first column; keep it pointing along the displacement
        if renewed[0] @ displacement < 0:
            renewed[0] = -renewed[0]
        return DirectionSet(renewed)


def _evaluate(state: CobylaState, point) -> float:
    value = float(state.objective(point))
    state.eval_count += 1
    return value


def _record(state: CobylaState, move: str):
    row = {"eval_count": state.eval_count, "rho": state.rho, "best_f": state.best_value, "move": move}
    state.trace.append(row)
    logger.debug(f"COBYLA {move} eval_count={state.eval_count} rho={state.rho:.3g} best_f={state.best_value:.6g}")


def cobyla_init(x0, rho_start: float, rho_end: float, objective: Callable[[np.ndarray], float],
                budget: Optional[int] = None) -> CobylaState:
    x0 = np.array(x0, dtype=float)
    if x0.ndim != 1 or x0.shape[0] < 1:
        raise InvalidParameterError(f"x0 must be a non-empty vector, got shape {x0.shape}")
    if not rho_end > 0:
        raise InvalidParameterError(f"rho_end must be strictly positive, got {rho_end}")
    if rho_start < rho_end:
        raise InvalidParameterError(f"rho_start={rho_start} is smaller than rho_end={rho_end}")
    d = x0.shape[0]
    if budget is not None and budget < d + 1:
        raise InvalidParameterError(f"budget {budget} cannot cover the {d + 1} initial evaluations")
    simplex = np.vstack([x0, x0 + rho_start * np.eye(d)])
    state = CobylaState(simplex, np.empty(d + 1), float(rho_start), float(rho_end), objective, budget=budget)
    for i in range(d + 1):
        state.values[i] = _evaluate(state, simplex[i])
        if state.values[i] < state.values[state.best_index]:
            state.best_index = i
    _record(state, "init")
    return state


def _edges(state, others):
    return state.simplex[others] - state.simplex[state.best_index]


def _model_gradient(state, others):
    edges = _edges(state, others)
    deltas = state.values[others] - state.values[state.best_index]
    gradient, *_ = linalg.lstsq(edges, deltas)
    return gradient


def _orthogonal_direction(state, others, replaced):
    remaining = [i for i in others if i != replaced]
    if remaining:
        q, _ = linalg.qr(_edges(state, remaining).T)
        direction = q[:, -1]
    else:
        direction = np.ones(state.dim)
    if direction @ _model_gradient(state, others) > 0:
        direction = -direction
    return direction / np.linalg.norm(direction)


def _replace_vertex(state, index, point, value):
    state.simplex[index] = point
    state.values[index] = value
    if value < state.best_value:
        state.best_index = index


def cobyla_step(state: CobylaState) -> CobylaState:
    if state.converged:
        raise InvalidParameterError("the search has already converged")
    if state.exhausted():
        raise InvalidParameterError(f"budget of {state.budget} evaluations is spent")
    others = [i for i in range(state.dim + 1) if i != state.best_index]
    edges = _edges(state, others)
    distances = np.linalg.norm(edges, axis=1)

    far = int(np.argmax(distances))
    if distances[far] > WIDE_SIMPLEX_RATIO * state.rho:
        return _geometry_move(state, others, others[far], "geometry-wide")

    _, r, pivots = linalg.qr(edges.T, pivoting=True)
    if abs(r[-1, -1]) < FLAT_SIMPLEX_RATIO * state.rho:
        return _geometry_move(state, others, others[pivots[-1]], "geometry-flat")

    gradient = _model_gradient(state, others)
    norm = np.linalg.norm(gradient)
    if norm > 0:
        step = -gradient / norm
    else:
        step = -edges[0] / distances[0]
    trial = state.best_point + state.rho * step
    value = _evaluate(state, trial)
    worst = others[int(np.argmax(state.values[others]))]
    if value < state.best_value:
        _replace_vertex(state, worst, trial, value)
        _record(state, "model")
        return state
    if value < state.values[worst]:
        _replace_vertex(state, worst, trial, value)
    if state.rho <= state.rho_end:
        state.converged = True
    state.rho = max(state.rho * SHRINK, state.rho_end)
    _record(state, "shrink")
    return state


def _geometry_move(state, others, replaced, move):
    point = state.best_point + state.rho * _orthogonal_direction(state, others, replaced)
    value = _evaluate(state, point)
    _replace_vertex(state, replaced, point, value)
    _record(state, move)
    return state


def cobyla_run(x0, rho_start: float, rho_end: float, budget: int,
               objective: Callable[[np.ndarray], float]) -> CobylaResult:
    """Search until convergence or until ``budget`` evaluations, whichever comes first."""
    d = len(np.atleast_1d(x0))
    if budget < d + 1:
        raise InvalidParameterError(f"budget {budget} is below the d + 1 = {d + 1} initial evaluations")
    state = cobyla_init(x0, rho_start, rho_end, objective, budget=budget)
    while not state.converged and not state.exhausted():
        cobyla_step(state)
    logger.info(f"COBYLA stopped after {state.eval_count} evaluations, rho={state.rho:.3g}, "
                f"best_f={state.best_value:.6g}, converged={state.converged}")
    return CobylaResult(state.best_point, state.best_value, state.eval_count, state.converged, state.trace)


def line_search_run(x0, rho_start: float, rho_end: float, budget: int,
                    objective: Callable[[np.ndarray], float],
                    directions: Optional[DirectionSet] = None, f0: Optional[float] = None) -> CobylaResult:
    """Direction-set search usable with any positive budget.

    Each sweep probes ``x + rho * u`` then ``x - rho * u`` for every direction
    ``u``, moving on any improvement. A sweep without improvement halves
    ``rho``; an improving sweep renews the direction set around the net
    displacement. ``f0`` is the known value of ``x0`` and saves one evaluation.
    """
    x = np.array(x0, dtype=float)
    if budget < 1:
        raise InvalidParameterError(f"budget must be >= 1, got {budget}")
    if not rho_end > 0 or rho_start < rho_end:
        raise InvalidParameterError(f"need rho_start >= rho_end > 0, got {rho_start}, {rho_end}")
    directions = directions or DirectionSet.coordinate(len(x))
    evals = 0
    if f0 is None:
        fx = float(objective(x))
        evals += 1
    else:
        fx = float(f0)
    rho = float(rho_start)
    trace = [{"eval_count": evals, "rho": rho, "best_f": fx, "move": "init"}]
    converged = False
    while evals < budget and not converged:
        start = x.copy()
        improved = False
        for direction in directions:
            for sign in (1.0, -1.0):
                if evals >= budget:
                    break
                trial = x + sign * rho * direction
                value = float(objective(trial))
                evals += 1
                trace.append({"eval_count": evals, "rho": rho, "best_f": min(fx, value), "move": "probe"})
                if value < fx:
                    x, fx, improved = trial, value, True
                    break
        if improved:
            directions = directions.renew(x - start)
        elif rho <= rho_end:
            converged = True
        else:
            rho = max(rho * SHRINK, rho_end)
    logger.info(f"Line search stopped after {evals} evaluations, rho={rho:.3g}, best_f={fx:.6g}")
    return CobylaResult(x, fx, evals, converged, trace)
