"""Optimizer convergence on the standard test functions."""
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from bbtune.exceptions import InvalidParameterError
from bbtune.optim.benchmarks import SUITES, BenchSuite
from bbtune.optim.cmaes import minimize
from bbtune.optim.cobyla import cobyla_run

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["suite", "optimizer", "seed", "evals", "best_f"]


def get_suite(name: str) -> BenchSuite:
    try:
        return SUITES[name]
    except KeyError:
        raise InvalidParameterError(f"unknown suite {name!r}, available suites: {', '.join(sorted(SUITES))}") \
            from None


def run_bench(name: str, seed: int = 42) -> pd.DataFrame:
    """Best-so-far fitness of CMA-ES per generation and of COBYLA per step."""
    suite = get_suite(name)
    m0 = np.full(suite.dim, suite.m0)
    state = minimize(suite.fn, m0, suite.sigma0, suite.budget, suite.popsize, seed)
    rows = [{"suite": name, "optimizer": "cmaes", "seed": seed, "evals": row["evals"], "best_f": row["best_f"]}
            for row in state.history]
    result = cobyla_run(m0, suite.sigma0, suite.rho_end, suite.budget, suite.fn)
    rows += [{"suite": name, "optimizer": "cobyla", "seed": seed, "evals": row["eval_count"],
              "best_f": row["best_f"]} for row in result.trace]
    logger.info(f"Bench {name} seed={seed}: cmaes best {state.best.fitness:.6g} after {state.evaluations} evals, "
                f"cobyla best {result.fitness:.6g} after {result.evals_used} evals")
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def write_bench(name: str, seed: int, path) -> pd.DataFrame:
    frame = run_bench(name, seed)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g")
    return frame
