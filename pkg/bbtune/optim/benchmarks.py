"""Standard test functions for checking the optimizers in isolation."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def sphere(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * x))


def rosenbrock(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (x[:-1] - 1.0) ** 2))


def rastrigin(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2 * np.pi * x)))


def shifted_quadratic(center):
    center = np.asarray(center, dtype=float)

    def quadratic(x):
        delta = np.asarray(x, dtype=float) - center
        return float(delta @ delta)

    return quadratic


@dataclass(frozen=True)
class BenchSuite:
    name: str
    fn: Callable[[np.ndarray], float]
    dim: int
    m0: float
    sigma0: float
    budget: int
    popsize: Optional[int] = None
    rho_end: float = 1e-8


SUITES = {
    "sphere": BenchSuite("sphere", sphere, dim=10, m0=5.0, sigma0=0.5, budget=5000),
    "rosenbrock": BenchSuite("rosenbrock", rosenbrock, dim=5, m0=0.0, sigma0=0.5, budget=30000,
                             popsize=16),
    "rastrigin": BenchSuite("rastrigin", rastrigin, dim=10, m0=3.0, sigma0=2.0, budget=40000, popsize=40),
}
