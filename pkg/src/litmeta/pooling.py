"""Fixed- and random-effects pooling of partial correlations with heterogeneity statistics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._io import csv_text
from ._stats import Z_95, chi2_sf, normal_two_sided_p
from .effects import ONSETS, UNASSIGNED, EffectRecord

log = logging.getLogger(__name__)

MODELS = ("FEM", "REM")
POOLING_HEADER = ("group", "model", "mean", "ci_low", "ci_high", "I2", "Q_pvalue", "k", "n_studies")
BOXPLOT_HEADER = ("onset", "study_id", "n", "min", "q1", "median", "q3", "max")
FUNNEL_HEADER = ("onset", "study_id", "estimate_id", "pcc", "se", "precision")


class PoolingError(ValueError):
    pass


@dataclass(frozen=True)
class PooledResult:
    model: str
    mean: float
    ci_low: float
    ci_high: float
    Q: float
    Q_pvalue: float
    I2: float
    tau2: float
    k: int
    n_studies: int

    @property
    def se(self) -> float:
        return (self.ci_high - self.ci_low) / (2.0 * Z_95)

    @property
    def p_value(self) -> float:
        return normal_two_sided_p(self.mean / self.se) if self.se > 0 else 0.0


def _arrays(effects: Sequence[EffectRecord]):
    pcc = np.fromiter((e.pcc for e in effects), dtype=np.float64, count=len(effects))
    se = np.fromiter((e.se for e in effects), dtype=np.float64, count=len(effects))
    return pcc, se


def _check(pcc, se):
    k = pcc.shape[0]
    if k < 2:
        raise PoolingError(f"pooling needs at least 2 estimates, got {k}")
    if not np.all(se > 0):
        raise PoolingError("every standard error must be positive")


def weighted_mean(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * x) / np.sum(w))


def q_from_arrays(pcc: np.ndarray, se: np.ndarray) -> tuple[float, int, float]:
    _check(pcc, se)
    w = 1.0 / se ** 2
    mean = weighted_mean(pcc, w)
    q = float(np.sum(w * (pcc - mean) ** 2))
    df = pcc.shape[0] - 1
    return q, df, chi2_sf(q, df)


def q_statistic(effects: Sequence[EffectRecord]) -> tuple[float, int, float]:
    """Cochran's Q around the fixed-effect mean, its df and chi-square p-value."""
    return q_from_arrays(*_arrays(effects))


def i_squared(q: float, k: int) -> float:
    """Share of variability due to heterogeneity, in percent."""
    if k < 2:
        raise PoolingError("I2 needs k >= 2")
    if q < 0:
        raise PoolingError("Q must be non-negative")
    if q == 0:
        return 0.0
    return max(0.0, (q - (k - 1)) / q) * 100.0


def dl_tau2(pcc: np.ndarray, se: np.ndarray) -> float:
    """DerSimonian-Laird method-of-moments between-study variance."""
    q, df, _ = q_from_arrays(pcc, se)
    w = 1.0 / se ** 2
    sw = float(np.sum(w))
    c = sw - float(np.sum(w ** 2)) / sw
    if c <= 0:
        return 0.0
    return max(0.0, (q - df) / c)


def pool_arrays(pcc: np.ndarray, se: np.ndarray, model: str = "FEM",
                n_studies: int | None = None, tau2: float | None = None) -> PooledResult:
    pcc = np.asarray(pcc, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    _check(pcc, se)
    if model not in MODELS:
        raise PoolingError(f"model must be one of {MODELS}, got {model!r}")
    q, df, p = q_from_arrays(pcc, se)
    if model == "FEM":
        tau2 = 0.0
    elif tau2 is None:
        tau2 = dl_tau2(pcc, se)
    w = 1.0 / (se ** 2 + tau2)
    mean = weighted_mean(pcc, w)
    half = Z_95 * math.sqrt(1.0 / float(np.sum(w)))
    k = pcc.shape[0]
    return PooledResult(model, mean, mean - half, mean + half, q, p, i_squared(q, k), tau2, k,
                        k if n_studies is None else n_studies)


def pool(effects: Sequence[EffectRecord], model: str = "FEM") -> PooledResult:
    """Inverse-variance pooled mean; REM adds the DerSimonian-Laird tau^2 to each variance."""
    pcc, se = _arrays(effects)
    return pool_arrays(pcc, se, model, len({e.study_id for e in effects}))


# -- grouped pooling -----------------------------------------------------------

def group_effects(effects: Iterable[EffectRecord], partition=None) -> dict[tuple[str, str], list[EffectRecord]]:
    """Split effects into ``(onset, group)`` buckets: ``overall`` plus one per cluster.

    With ``partition`` the cluster is looked up by study id; otherwise each
    record's own ``cluster`` is used.  Buckets come back in deterministic order.
    """
    effects = list(effects)
    assignment = partition.assignment if partition is not None else None
    buckets: dict[tuple[str, str], list[EffectRecord]] = {}
    for onset in ONSETS:
        sub = [e for e in effects if e.onset == onset]
        if not sub:
            continue
        buckets[(onset, "overall")] = sub
        clusters: dict[int, list[EffectRecord]] = {}
        for e in sub:
            c = assignment.get(e.study_id, UNASSIGNED) if assignment is not None else e.cluster
            if c == UNASSIGNED:
                continue
            clusters.setdefault(int(c), []).append(e)
        for c in sorted(clusters):
            buckets[(onset, f"cluster_{c + 1}")] = clusters[c]
    return buckets


@dataclass(frozen=True)
class PoolingTable:
    results: dict[tuple[str, str, str], PooledResult]
    skipped: tuple[tuple[str, str, str], ...]

    def rows(self):
        for (onset, group, model), r in self.results.items():
            yield (f"{onset}/{group}", model, r.mean, r.ci_low, r.ci_high, r.I2, r.Q_pvalue,
                   r.k, r.n_studies)

    def to_csv(self) -> str:
        return csv_text(POOLING_HEADER, self.rows())


def pool_by_cluster(effects: Sequence[EffectRecord], partition=None,
                    models: Sequence[str] = MODELS) -> PoolingTable:
    """Pool every ``(onset, overall | cluster)`` group under each model; k < 2 is skipped."""
    results = {}
    skipped = []
    for (onset, group), sub in group_effects(effects, partition).items():
        if len(sub) < 2:
            skipped.append((onset, group, f"k={len(sub)} < 2"))
            log.info("pooling skipped %s/%s: only %d estimate(s)", onset, group, len(sub))
            continue
        pcc, se = _arrays(sub)
        n_studies = len({e.study_id for e in sub})
        for model in models:
            results[(onset, group, model)] = pool_arrays(pcc, se, model, n_studies)
    return PoolingTable(results, tuple(skipped))


def boxplot_rows(effects: Sequence[EffectRecord]):
    """Five-number summary of pcc per study and onset."""
    by_study: dict[tuple[str, str], list[float]] = {}
    for e in effects:
        by_study.setdefault((e.onset, e.study_id), []).append(e.pcc)
    for onset in ONSETS:
        for (o, study) in sorted(k for k in by_study if k[0] == onset):
            x = np.asarray(by_study[(o, study)])
            q1, med, q3 = np.percentile(x, [25, 50, 75])
            yield (o, study, x.shape[0], float(x.min()), float(q1), float(med), float(q3),
                   float(x.max()))


def boxplot_csv(effects: Sequence[EffectRecord]) -> str:
    return csv_text(BOXPLOT_HEADER, boxplot_rows(effects))


def funnel_csv(effects: Sequence[EffectRecord]) -> str:
    return csv_text(FUNNEL_HEADER, ((e.onset, e.study_id, e.estimate_id, e.pcc, e.se, e.precision)
                                    for e in effects))
