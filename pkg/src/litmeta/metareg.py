"""Publication-bias meta-regressions and moderated multiple meta-regression.

Every regression here is the precision-weighted level equation

    pcc_i = b0 + b1 * se_i + sum_j g_j * m_ij + e_i,    weights 1 / se_i^2

estimated in its transformed form (divide through by ``se_i``)

    t_i = b1 + b0 / se_i + sum_j g_j * m_ij / se_i + e_i / se_i

by ordinary least squares.  ``b1`` tests funnel asymmetry, ``b0`` is the
precision-effect estimate.  PEESE swaps ``se_i`` for ``se_i^2`` in the level
equation, which leaves no intercept in the transformed one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from . import taxonomy
from ._io import csv_text
from ._stats import Z_95, normal_two_sided_p, t_critical, t_two_sided_p
from .effects import EffectRecord
from .pooling import group_effects

log = logging.getLogger(__name__)

FAT_PET = "FAT_PET"
PEESE = "PEESE"
MULTIPLE_MRA = "MULTIPLE_MRA"

FAT = "fat_beta1"
PET = "pet_beta0"
PEESE_SE = "peese_se_beta1"
PEESE_B0 = "peese_beta0"

WEIGHTS_KIND = "precision squared (1/se^2), via the t-transformed equation"
REPORT_HEADER = ("term", "estimate", "se", "p", "ci_low", "ci_high")
RANK_TOL = 1e-9


class RegressionError(ValueError):
    pass


class RankDeficientError(RegressionError):
    def __init__(self, columns: Sequence[str], indices: Sequence[int] = ()):
        self.columns = tuple(columns)
        self.indices = tuple(indices)
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(self.columns)}")


class StepwiseError(RegressionError):
    def __init__(self, message: str, trace: "StepwiseTrace"):
        self.trace = trace
        super().__init__(message)


@dataclass(frozen=True)
class Coefficient:
    estimate: float
    se: float
    p_value: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class RegressionResult:
    spec: str | None
    coefficients: dict[str, Coefficient]
    weights_kind: str
    se_kind: str
    n_obs: int
    n_studies: int | None
    included_moderators: tuple[str, ...] = ()
    dropped: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()
    n_clusters: int | None = None
    inference_df: float | None = None
    beta: np.ndarray = field(default=None, repr=False)
    cov: np.ndarray = field(default=None, repr=False)
    residuals: np.ndarray = field(default=None, repr=False)
    columns: tuple[str, ...] = ()

    def __getitem__(self, name: str) -> Coefficient:
        return self.coefficients[name]

    def to_csv(self, extra: dict[str, Coefficient] | None = None) -> str:
        items = list(self.coefficients.items()) + list((extra or {}).items())
        return csv_text(REPORT_HEADER, ((n, c.estimate, c.se, c.p_value, c.ci_low, c.ci_high)
                                        for n, c in items))


# -- weighted least squares ----------------------------------------------------

def dependent_columns(x: np.ndarray, tol: float = RANK_TOL) -> list[int]:
    """Indices of columns lying (numerically) in the span of the columns before them.

    Householder QR without pivoting makes ``|R[j, j]|`` the norm of column j's
    component orthogonal to columns ``0..j-1``; a column whose orthogonal part
    is below ``tol`` times its own norm adds nothing.
    """
    if x.shape[1] == 0:
        return []
    r = np.linalg.qr(x, mode="r")
    norms = np.linalg.norm(x, axis=0)
    diag = np.abs(np.diag(r))
    return [j for j in range(x.shape[1]) if norms[j] == 0 or diag[j] <= tol * norms[j]]


@dataclass(frozen=True)
class _Fit:
    beta: np.ndarray
    cov: np.ndarray
    resid: np.ndarray
    se_kind: str
    n_clusters: int | None
    inference_df: float | None


def _cluster_codes(cluster_ids) -> tuple[np.ndarray, int]:
    _, codes = np.unique(np.asarray(cluster_ids), return_inverse=True)
    codes = codes.ravel()
    return codes, int(codes.max()) + 1 if codes.size else 0


def _wls_fit(y, x, w, codes=None, n_groups=None, names=None) -> _Fit:
    n, k = x.shape
    sw = np.sqrt(w)
    xw = x * sw[:, None]
    q, r = np.linalg.qr(xw)
    norms = np.linalg.norm(xw, axis=0)
    diag = np.abs(np.diag(r))
    bad = [j for j in range(k) if norms[j] == 0 or diag[j] <= RANK_TOL * norms[j]]
    if bad:
        names = names or [f"x{j}" for j in range(k)]
        raise RankDeficientError([names[j] for j in bad], bad)
    beta = solve_triangular(r, q.T @ (y * sw))
    resid = y - x @ beta
    r_inv = solve_triangular(r, np.eye(k))
    bread = r_inv @ r_inv.T
    if codes is None:
        if n <= k:
            raise RegressionError(f"need more observations ({n}) than columns ({k})")
        sigma2 = float(np.sum(w * resid ** 2)) / (n - k)
        return _Fit(beta, sigma2 * bread, resid, "classical", None, None)
    if n_groups < 2:
        raise RegressionError("cluster-robust errors need at least 2 clusters")
    if n <= k:
        raise RegressionError(f"need more observations ({n}) than columns ({k})")
    scores = x * (w * resid)[:, None]
    sums = np.empty((n_groups, k))
    for j in range(k):
        sums[:, j] = np.bincount(codes, scores[:, j], n_groups)
    meat = sums.T @ sums
    factor = n_groups / (n_groups - 1) * (n - 1) / (n - k)
    return _Fit(beta, factor * (bread @ meat @ bread), resid, "cluster_robust", n_groups,
                float(n_groups - 1))


def _coefficients(fit: _Fit, names: Sequence[str]) -> dict[str, Coefficient]:
    out = {}
    se = np.sqrt(np.maximum(np.diag(fit.cov), 0.0))
    if fit.inference_df is None:
        crit = Z_95
    else:
        crit = t_critical(fit.inference_df)
    for name, b, s in zip(names, fit.beta.tolist(), se.tolist()):
        if s > 0:
            stat = b / s
            p = (normal_two_sided_p(stat) if fit.inference_df is None
                 else t_two_sided_p(stat, fit.inference_df))
        else:
            p = 0.0 if b != 0 else 1.0
        out[name] = Coefficient(b, s, p, b - crit * s, b + crit * s)
    return out


def wls(y, X, weights=None, cluster_ids=None, names: Sequence[str] | None = None) -> RegressionResult:
    """Weighted least squares via QR of ``sqrt(W) X``.

    Classical covariance is ``sigma^2 (X'WX)^-1``.  With ``cluster_ids`` the
    sandwich ``(X'WX)^-1 (sum_g s_g s_g') (X'WX)^-1`` is used, where ``s_g`` sums
    ``x_i w_i e_i`` over cluster g, scaled by ``G/(G-1) * (N-1)/(N-K)``.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(X, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if y.shape != (n,) or w.shape != (n,):
        raise RegressionError("y, X and weights must have matching row counts")
    if not np.all(w > 0):
        raise RegressionError("weights must be positive")
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if cluster_ids is not None:
        codes, g = _cluster_codes(cluster_ids)
        fit = _wls_fit(y, x, w, codes, g, names)
    else:
        fit = _wls_fit(y, x, w, names=names)
    return RegressionResult(None, _coefficients(fit, names), "user supplied" if weights is not None
                            else "unit", fit.se_kind, n, None, n_clusters=fit.n_clusters,
                            inference_df=fit.inference_df, beta=fit.beta, cov=fit.cov,
                            residuals=fit.resid, columns=tuple(names))


# -- meta-regressions ----------------------------------------------------------

class _MRAData:
    """Arrays shared by every fit on one set of effects."""

    def __init__(self, effects: Sequence[EffectRecord], cluster_robust: bool):
        if len(effects) < 3:
            raise RegressionError(f"meta-regression needs at least 3 estimates, got {len(effects)}")
        self.effects = effects
        self.pcc = np.fromiter((e.pcc for e in effects), np.float64, len(effects))
        self.se = np.fromiter((e.se for e in effects), np.float64, len(effects))
        self.y = self.pcc / self.se
        self.inv_se = 1.0 / self.se
        self.n = len(effects)
        self.w = np.ones(self.n)
        self.study = [e.study_id for e in effects]
        self.n_studies = len(set(self.study))
        self.cluster_robust = cluster_robust
        if cluster_robust:
            self.codes, self.n_groups = _cluster_codes(self.study)
        else:
            self.codes, self.n_groups = None, None
        self._mod_cache: dict[str, np.ndarray] = {}

    def moderator(self, name: str) -> np.ndarray:
        col = self._mod_cache.get(name)
        if col is None:
            try:
                raw = np.fromiter((e.moderators[name] for e in self.effects), np.float64, self.n)
            except KeyError:
                raise RegressionError(f"moderator {name!r} missing from some effect records") from None
            col = raw
            self._mod_cache[name] = col
        return col

    def fit(self, columns: Sequence[np.ndarray], names: Sequence[str]) -> _Fit:
        x = np.column_stack(columns)
        return _wls_fit(self.y, x, self.w, self.codes, self.n_groups, list(names))


def _result(spec, data: _MRAData, fit: _Fit, names, order, moderators=(), dropped=(), warns=()):
    coefs = _coefficients(fit, names)
    return RegressionResult(spec, {n: coefs[n] for n in order}, WEIGHTS_KIND, fit.se_kind, data.n,
                            data.n_studies, tuple(moderators), tuple(dropped), tuple(warns),
                            fit.n_clusters, fit.inference_df, fit.beta, fit.cov, fit.resid,
                            tuple(names))


def fat_pet(effects: Sequence[EffectRecord], cluster_robust: bool = True) -> RegressionResult:
    """Funnel-asymmetry (intercept, ``fat_beta1``) and precision-effect (``pet_beta0``) test."""
    data = _MRAData(effects, cluster_robust)
    names = [FAT, PET]
    fit = data.fit([np.ones(data.n), data.inv_se], names)
    return _result(FAT_PET, data, fit, names, [FAT, PET])


def peese(effects: Sequence[EffectRecord], cluster_robust: bool = True) -> RegressionResult:
    """Regress t on ``se`` and ``1/se`` without intercept; ``peese_beta0`` is the corrected effect."""
    data = _MRAData(effects, cluster_robust)
    names = [PEESE_SE, PEESE_B0]
    fit = data.fit([data.se, data.inv_se], names)
    return _result(PEESE, data, fit, names, [PEESE_SE, PEESE_B0])


def _mra_on(data: _MRAData, moderators: Sequence[str], quiet: bool = False) -> RegressionResult:
    mods = taxonomy.canonical(set(moderators))
    warns = []
    dropped = []
    cols = [np.ones(data.n), data.inv_se]
    names = [FAT, PET]
    for m in mods:
        raw = data.moderator(m)
        if np.all(raw == raw[0]):
            dropped.append(m)
            warns.append(f"moderator {m} is constant in this sample and was dropped")
            continue
        cols.append(raw * data.inv_se)
        names.append(m)
    try:
        fit = data.fit(cols, names)
    except RankDeficientError as exc:
        dep = list(exc.indices)
        if dep[0] < 2:
            raise
        # drop right-to-left: each dependent column is spanned by those before it
        for j in dep:
            dropped.append(names[j])
            warns.append(f"moderator {names[j]} is collinear with earlier columns and was dropped")
        keep = [j for j in range(len(names)) if j not in set(dep)]
        cols = [cols[j] for j in keep]
        names = [names[j] for j in keep]
        fit = data.fit(cols, names)
    if not quiet:
        for msg in warns:
            log.warning(msg)
    kept = names[2:]
    return _result(MULTIPLE_MRA, data, fit, names, [PET, FAT] + kept, kept,
                   taxonomy.canonical(dropped), warns)


def multiple_mra(effects: Sequence[EffectRecord], moderators: Sequence[str],
                 cluster_robust: bool = True) -> RegressionResult:
    """FAT-PET extended with moderators, each entering the transformed equation as ``m / se``.

    Constant moderators are dropped, then any moderator spanned by the columns
    before it in canonical order; both cases are reported in ``warnings``.
    """
    return _mra_on(_MRAData(effects, cluster_robust), moderators)


# -- stepwise selection --------------------------------------------------------

@dataclass(frozen=True)
class TraceEntry:
    step: int
    action: str
    moderator: str
    p_value: float
    criterion: float


@dataclass(frozen=True)
class StepwiseTrace:
    entries: tuple[TraceEntry, ...] = ()
    excluded_constant: tuple[str, ...] = ()

    def additions(self) -> list[str]:
        return [e.moderator for e in self.entries if e.action == "add"]

    def check(self) -> None:
        included: set[str] = set()
        for e in self.entries:
            if e.action == "add":
                if e.moderator in included:
                    raise AssertionError(f"{e.moderator} added twice without a drop")
                included.add(e.moderator)
            else:
                if e.moderator not in included:
                    raise AssertionError(f"{e.moderator} dropped while not included")
                included.discard(e.moderator)

    def to_list(self) -> list[dict]:
        return [{"step": e.step, "action": e.action, "moderator": e.moderator,
                 "p_value": e.p_value, "criterion": e.criterion} for e in self.entries]


def stepwise(effects: Sequence[EffectRecord], candidate_moderators: Sequence[str],
             enter_p: float = 0.05, remove_p: float = 0.10,
             cluster_robust: bool = True) -> tuple[RegressionResult, StepwiseTrace]:
    """Forward selection with backward pruning over moderators; FAT/PET terms always stay.

    Each round adds the candidate with the smallest p-value below ``enter_p``
    (ties to canonical order), then drops included moderators whose p-value
    exceeds ``remove_p``, largest first, refitting after each drop.  A
    candidate is not added if it would make an included term collinear or, with
    cluster-robust errors, leave no more clusters than regressors.
    """
    if not 0 < enter_p <= remove_p < 1:
        raise ValueError("need 0 < enter_p <= remove_p < 1")
    data = _MRAData(effects, cluster_robust)
    candidates = taxonomy.canonical(set(candidate_moderators))
    constant = [m for m in candidates if np.all(data.moderator(m) == data.moderator(m)[0])]
    candidates = [m for m in candidates if m not in constant]
    entries: list[TraceEntry] = []
    included: list[str] = []
    guard = 10 * max(len(candidates), 1)

    def p_values(mods):
        res = _mra_on(data, mods, quiet=True)
        return res, {m: c.p_value for m, c in res.coefficients.items() if m in mods}

    while True:
        changed = False
        best, best_p = None, None
        for m in candidates:
            if m in included:
                continue
            try:
                res, ps = p_values(included + [m])
            except RegressionError:
                continue
            # every term must survive the trial fit, and a cluster-robust fit
            # needs more clusters than columns for the sandwich to be usable
            if any(x not in ps for x in included + [m]):
                continue
            if data.n_groups is not None and len(res.columns) >= data.n_groups:
                continue
            p = ps[m]
            if p < enter_p and (best_p is None or p < best_p):
                best, best_p = m, p
        if best is not None:
            included = taxonomy.canonical(included + [best])
            entries.append(TraceEntry(len(entries) + 1, "add", best, best_p, enter_p))
            changed = True
        while included:
            _, ps = p_values(included)
            over = [(p, m) for m, p in ps.items() if p > remove_p]
            if not over:
                break
            worst_p = max(p for p, _ in over)
            worst = next(m for m in included if ps.get(m) == worst_p)
            included = [m for m in included if m != worst]
            entries.append(TraceEntry(len(entries) + 1, "drop", worst, worst_p, remove_p))
            changed = True
        trace = StepwiseTrace(tuple(entries), tuple(constant))
        if not changed:
            break
        if len(entries) > guard:
            raise StepwiseError(f"stepwise selection did not settle within {guard} steps", trace)
    return _mra_on(data, included), trace


# -- battery -------------------------------------------------------------------

@dataclass(frozen=True)
class GroupReport:
    onset: str
    group: str
    n_obs: int
    n_studies: int
    fat_pet: RegressionResult
    peese: RegressionResult
    mra: RegressionResult
    trace: StepwiseTrace

    @property
    def name(self) -> str:
        return f"{self.onset}_{self.group}"

    def fatpet_csv(self) -> str:
        extra = {k: v for k, v in self.peese.coefficients.items()}
        return self.fat_pet.to_csv(extra)

    def mra_csv(self) -> str:
        return self.mra.to_csv({PEESE_B0: self.peese.coefficients[PEESE_B0]})

    def row_groups(self) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {"Publication bias": [PET, FAT]}
        for m in self.mra.included_moderators:
            groups.setdefault(taxonomy.GROUP_OF[m], []).append(m)
        groups["PEESE correction"] = [PEESE_B0]
        return groups


@dataclass(frozen=True)
class BatteryReport:
    groups: tuple[GroupReport, ...]
    skipped: tuple[tuple[str, str, str], ...]

    def manifest(self) -> dict:
        return {
            "weights": WEIGHTS_KIND,
            "note": "random-effects and multilevel meta-regression columns are not estimated; "
                    "all regressions are precision-weighted least squares",
            "groups": [
                {
                    "onset": g.onset,
                    "group": g.group,
                    "n_obs": g.n_obs,
                    "n_studies": g.n_studies,
                    "se_kind": g.fat_pet.se_kind,
                    "fatpet_rows": [FAT, PET, PEESE_SE, PEESE_B0],
                    "mra_row_groups": g.row_groups(),
                    "selected_moderators": list(g.mra.included_moderators),
                    "stepwise_trace": g.trace.to_list(),
                    "excluded_constant": list(g.trace.excluded_constant),
                    "warnings": list(g.mra.warnings),
                }
                for g in self.groups
            ],
            "skipped": [{"onset": o, "group": grp, "reason": why} for o, grp, why in self.skipped],
        }


def run_paper_battery(effects: Sequence[EffectRecord], partition=None,
                      moderators: Sequence[str] | None = None, enter_p: float = 0.05,
                      remove_p: float = 0.10, cluster_robust: bool = True,
                      min_k: int = 10) -> BatteryReport:
    """FAT-PET, PEESE and stepwise MRA for each onset, overall and per cluster.

    Groups with fewer than ``min_k`` estimates, or whose regressions fail, are
    skipped with a reason instead of aborting the battery.
    """
    if moderators is None:
        names: set[str] = set()
        for e in effects:
            names.update(e.moderators)
        moderators = taxonomy.canonical(names)
    groups, skipped = [], []
    for (onset, group), sub in group_effects(effects, partition).items():
        if len(sub) < min_k:
            skipped.append((onset, group, f"k={len(sub)} < {min_k}"))
            log.info("battery skipped %s/%s: k=%d", onset, group, len(sub))
            continue
        try:
            fp = fat_pet(sub, cluster_robust)
            pe = peese(sub, cluster_robust)
            mra, trace = stepwise(sub, moderators, enter_p, remove_p, cluster_robust)
        except RegressionError as exc:
            skipped.append((onset, group, str(exc)))
            log.info("battery skipped %s/%s: %s", onset, group, exc)
            continue
        groups.append(GroupReport(onset, group, len(sub), len({e.study_id for e in sub}),
                                  fp, pe, mra, trace))
    return BatteryReport(tuple(groups), tuple(skipped))


def _finite(x: float) -> bool:
    return math.isfinite(x)
