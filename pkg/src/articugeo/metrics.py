"""Depth evaluation metrics (abs rel, sq rel, RMSE, RMSE log, delta thresholds)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyEvaluationError, FormatError
from .rasters import check_same_shape

DEFAULT_MAX_DEPTH = 100.0
MIN_CLAMP = 1e-3


@dataclass(frozen=True)
class MetricReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    pixel_count: int

    def to_text(self) -> str:
        return "".join(f"{k} {v:.17g}\n" if isinstance(v, float) else f"{k} {v}\n"
                       for k, v in asdict(self).items())

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def _valid(pred, gt, max_depth):
    return (gt > 0) & (gt <= max_depth) & (pred > 0)


def _mean(x) -> float:
    # correctly rounded sum: uniform-scale inputs give their exact ratio
    return math.fsum(np.ravel(x)) / x.size


def _from_sums(p, g) -> MetricReport:
    n = p.size
    if n == 0:
        raise EmptyEvaluationError("no pixels with 0 < gt <= max_depth and pred > 0")
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricReport(
        abs_rel=_mean(np.abs(diff) / g),
        sq_rel=_mean(diff ** 2 / g),
        rmse=math.sqrt(_mean(diff ** 2)),
        rmse_log=math.sqrt(_mean((np.log(p) - np.log(g)) ** 2)),
        delta1=_mean(ratio < 1.25),
        delta2=_mean(ratio < 1.25 ** 2),
        delta3=_mean(ratio < 1.25 ** 3),
        pixel_count=int(n),
    )


def _select(pred, gt, max_depth, median_scale):
    if not max_depth > 0:
        raise ValueError("max_depth must be positive")
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    check_same_shape(pred, gt, names=["pred", "gt"])
    m = _valid(pred, gt, max_depth)
    p, g = pred[m], gt[m]
    if median_scale and p.size:
        p = p * (np.median(g) / np.median(p))
    return np.clip(p, MIN_CLAMP, max_depth), g


def evaluate(pred, gt, max_depth: float = DEFAULT_MAX_DEPTH, median_scale: bool = False) -> MetricReport:
    """Metrics over ``0 < gt <= max_depth`` and ``pred > 0``.

    Predictions are clamped to ``[MIN_CLAMP, max_depth]``.  With
    ``median_scale`` each map is first rescaled by ``median(gt)/median(pred)``.
    """
    return _from_sums(*_select(pred, gt, max_depth, median_scale))


def evaluate_many(pairs, max_depth: float = DEFAULT_MAX_DEPTH, median_scale: bool = False) -> MetricReport:
    """Pool pixels of several (pred, gt) maps; median scaling stays per map."""
    ps, gs = [], []
    for pred, gt in pairs:
        p, g = _select(pred, gt, max_depth, median_scale)
        ps.append(p)
        gs.append(g)
    if not ps:
        raise EmptyEvaluationError("no depth maps to evaluate")
    return _from_sums(np.concatenate(ps), np.concatenate(gs))


def read_report(path) -> dict[str, float]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'key value'")
        out[parts[0]] = float(parts[1])
    return out
