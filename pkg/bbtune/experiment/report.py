"""Aggregate finished runs into a seed summary and call-aligned curves."""
import json
import logging
from pathlib import Path
from typing import List, Tuple

import pandas as pd

from bbtune.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

METRICS = ("val_accuracy", "val_loss", "train_accuracy", "train_loss",
           "stage1_max_val_increase", "stage2_max_val_increase")


def load_runs(run_dir) -> List[Tuple[dict, Path]]:
    root = Path(run_dir)
    if not root.is_dir():
        raise InvalidParameterError(f"run directory {root} does not exist")
    runs = []
    for path in sorted(root.rglob("manifest.json")):
        try:
            runs.append((json.loads(path.read_text()), path.parent))
        except ValueError as exc:
            raise InvalidParameterError(f"unreadable manifest {path}: {exc}") from exc
    if not runs:
        raise InvalidParameterError(f"no completed runs under {root}")
    return runs


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def summarize(runs) -> pd.DataFrame:
    """Mean and population standard deviation of the final metrics, per variant."""
    frame = pd.DataFrame([{"variant": manifest.get("variant", "full"), "seed": manifest["seed"],
                           **{metric: manifest["final"].get(metric) for metric in METRICS}}
                          for manifest, _ in runs])
    rows = []
    for variant, group in frame.groupby("variant", sort=True):
        row = {"variant": variant, "seeds": " ".join(str(seed) for seed in sorted(group["seed"]))}
        for metric in METRICS:
            values = group[metric].astype(float)
            mean, std = values.mean(), values.std(ddof=0)
            row[f"{metric}_mean"] = mean
            row[f"{metric}_std"] = std
            row[metric] = format_mean_std(mean, std)
        rows.append(row)
    return pd.DataFrame(rows)


def curves(runs) -> pd.DataFrame:
    """Every run's record, one row per oracle call, validation loss carried forward between probes."""
    frames = []
    for manifest, directory in runs:
        record = pd.read_csv(directory / "record.csv")
        record["val_loss"] = record["val_loss"].ffill()
        record.insert(0, "seed", manifest["seed"])
        record.insert(0, "variant", manifest.get("variant", "full"))
        frames.append(record)
    return pd.concat(frames, ignore_index=True)


def write_report(run_dir) -> Tuple[pd.DataFrame, pd.DataFrame]:
    runs = load_runs(run_dir)
    summary = summarize(runs)
    curve_frame = curves(runs)
    root = Path(run_dir)
    summary.to_csv(root / "summary.csv", index=False, float_format="%.10g")
    curve_frame.to_csv(root / "curves.csv", index=False, float_format="%.10g")
    logger.info(f"Report over {len(runs)} runs written to {root}")
    return summary, curve_frame
