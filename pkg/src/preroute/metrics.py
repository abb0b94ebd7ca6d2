"""Evaluation metrics: flatten / un-flatten R^2, VAR/MSE ratios, per-level MSE.

Multi-channel predictions can be scored two ways: per channel with the four
coefficients averaged (un-flatten), or on the channel-concatenated vector
(flatten). Flattening inflates the score whenever channel means differ,
because the pooled variance grows faster than the pooled error; both views
plus their VAR/MSE ratios are reported so the inflation is visible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DegenerateMetricError(ValueError):
    """Raised when variance (or error) is zero and the metric is undefined."""


def mse(y: np.ndarray, yhat: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    return float(np.mean((y - yhat) ** 2))


def variance(y: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean((y - y.mean()) ** 2))


def r2(y: np.ndarray, yhat: np.ndarray) -> float:
    """Determination coefficient 1 - MSE/VAR on a single channel."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if len(y) < 2:
        raise DegenerateMetricError(f"need at least 2 samples, got {len(y)}")
    var = variance(y)
    if var == 0.0:
        raise DegenerateMetricError("zero variance in ground truth")
    return 1.0 - mse(y, yhat) / var


def r2_unflatten(y: np.ndarray, yhat: np.ndarray) -> float:
    """Mean of the per-channel determination coefficients."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    yhat = np.atleast_2d(np.asarray(yhat, dtype=np.float64))
    return float(np.mean([r2(y[:, c], yhat[:, c]) for c in range(y.shape[1])]))


def r2_flatten(y: np.ndarray, yhat: np.ndarray) -> float:
    """Determination coefficient on the channel-concatenated vector."""
    return r2(np.asarray(y).reshape(-1), np.asarray(yhat).reshape(-1))


def k_ratio(y: np.ndarray, yhat: np.ndarray) -> tuple[float, float]:
    """(k_uf, k_f): mean per-channel VAR/MSE and flattened VAR/MSE."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    yhat = np.atleast_2d(np.asarray(yhat, dtype=np.float64))
    ks = []
    for c in range(y.shape[1]):
        err = mse(y[:, c], yhat[:, c])
        if err == 0.0:
            raise DegenerateMetricError(f"zero MSE on channel {c}")
        ks.append(variance(y[:, c]) / err)
    err_f = mse(y.reshape(-1), yhat.reshape(-1))
    if err_f == 0.0:
        raise DegenerateMetricError("zero MSE on flattened data")
    return float(np.mean(ks)), float(variance(y.reshape(-1)) / err_f)


def channel_pairs(y: np.ndarray, yhat: np.ndarray) -> list[tuple[float, float]]:
    """(r2, VAR/MSE) per channel; each pair satisfies r2 = 1 - 1/k exactly."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    yhat = np.atleast_2d(np.asarray(yhat, dtype=np.float64))
    out = []
    for c in range(y.shape[1]):
        err = mse(y[:, c], yhat[:, c])
        if err == 0.0:
            raise DegenerateMetricError(f"zero MSE on channel {c}")
        out.append((r2(y[:, c], yhat[:, c]), variance(y[:, c]) / err))
    return out


def mse_by_level(node_level, y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    """Mean squared error per topological level, averaged over channels."""
    node_level = np.asarray(node_level, dtype=np.int64)
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    yhat = np.atleast_2d(np.asarray(yhat, dtype=np.float64))
    if len(node_level) != len(y):
        raise ValueError(f"{len(y)} predictions for {len(node_level)} nodes")
    n_levels = int(node_level.max()) + 1
    sq = ((y - yhat) ** 2).mean(axis=1)
    sums = np.zeros(n_levels)
    counts = np.zeros(n_levels)
    np.add.at(sums, node_level, sq)
    np.add.at(counts, node_level, 1.0)
    return sums / counts


TASKS = ("slack", "slew", "net_delay", "cell_delay")


@dataclass
class TaskScores:
    r2_uf: float | None
    r2_f: float | None
    k_uf: float | None
    k_f: float | None
    mse: float
    channel_pairs: list[tuple[float, float]] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "r2_uf": self.r2_uf,
            "r2_f": self.r2_f,
            "k_uf": self.k_uf,
            "k_f": self.k_f,
            "mse": self.mse,
            "channel_pairs": [list(p) for p in self.channel_pairs],
        }


@dataclass
class CircuitReport:
    circuit: str
    split: str
    tasks: dict[str, TaskScores]
    mse_by_level: list[float]
    level_slope: float | None

    def to_doc(self) -> dict:
        return {
            "circuit": self.circuit,
            "split": self.split,
            "tasks": {name: scores.to_doc() for name, scores in sorted(self.tasks.items())},
            "mse_by_level": self.mse_by_level,
            "level_slope": self.level_slope,
        }


@dataclass
class EvalReport:
    circuits: list[CircuitReport]

    def split_average(self, split: str, task: str, key: str) -> float | None:
        vals = [
            getattr(c.tasks[task], key)
            for c in self.circuits
            if c.split == split and task in c.tasks and getattr(c.tasks[task], key) is not None
        ]
        return float(np.mean(vals)) if vals else None

    def to_doc(self) -> dict:
        splits = sorted({c.split for c in self.circuits})
        return {
            "format_version": 1,
            "circuits": [c.to_doc() for c in self.circuits],
            "split_averages": {
                split: {
                    task: {
                        key: self.split_average(split, task, key)
                        for key in ("r2_uf", "r2_f", "k_uf", "k_f", "mse")
                    }
                    for task in TASKS
                }
                for split in splits
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), separators=(",", ":")) + "\n"

    def to_csv(self) -> str:
        lines = ["circuit,split,task,r2_uf,r2_f,k_uf,k_f,mse"]
        for c in self.circuits:
            for task in TASKS:
                if task not in c.tasks:
                    continue
                s = c.tasks[task]
                cells = [c.circuit, c.split, task] + [
                    "" if v is None else repr(float(v))
                    for v in (s.r2_uf, s.r2_f, s.k_uf, s.k_f, s.mse)
                ]
                lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def score_task(y: np.ndarray, yhat: np.ndarray) -> TaskScores:
    """All scores for one task; degenerate channels reported as missing."""
    try:
        pairs = channel_pairs(y, yhat)
        kk = k_ratio(y, yhat)
        return TaskScores(
            r2_uf=r2_unflatten(y, yhat),
            r2_f=r2_flatten(y, yhat),
            k_uf=kk[0],
            k_f=kk[1],
            mse=mse(y, yhat),
            channel_pairs=pairs,
        )
    except DegenerateMetricError:
        return TaskScores(r2_uf=None, r2_f=None, k_uf=None, k_f=None, mse=mse(y, yhat))


def level_slope(curve: np.ndarray) -> float | None:
    """Least-squares slope of the per-level MSE curve, None if underdefined."""
    curve = np.asarray(curve, dtype=np.float64)
    if len(curve) < 2 or not np.isfinite(curve).all():
        return None
    xs = np.arange(len(curve), dtype=np.float64)
    return float(np.polyfit(xs, curve, 1)[0])
