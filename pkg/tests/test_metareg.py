import math

import numpy as np
import pytest

from litmeta.effects import EffectRecord
from litmeta.metareg import (FAT, PEESE_B0, PEESE_SE, PET, RankDeficientError, RegressionError,
                             dependent_columns, fat_pet, multiple_mra, peese, run_paper_battery,
                             stepwise, wls)
from litmeta.synthetic import simulate_effects
from oracles import dense_wls


def design(rng, n=40, k=3):
    x = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    y = x @ rng.standard_normal(k) + rng.standard_normal(n)
    return y, x, rng.uniform(0.5, 2.0, n)


def test_wls_matches_normal_equations():
    rng = np.random.default_rng(20)
    for _ in range(50):
        y, x, w = design(rng)
        res = wls(y, x, w)
        beta, cov = dense_wls(y, x, w)
        np.testing.assert_allclose(res.beta, beta, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(res.cov, cov, rtol=1e-9, atol=1e-14)
        # weighted residuals are orthogonal to every regressor
        np.testing.assert_allclose(x.T @ (w * res.residuals), 0.0, atol=1e-9)


def test_cluster_sandwich_matches_dense_oracle():
    rng = np.random.default_rng(21)
    for g in range(5, 16):
        y, x, w = design(rng, n=6 * g)
        clusters = [f"c{i % g}" for i in range(y.size)]
        res = wls(y, x, w, clusters)
        _, cov = dense_wls(y, x, w, clusters)
        np.testing.assert_allclose(np.sqrt(np.diag(res.cov)), np.sqrt(np.diag(cov)), rtol=1e-8)
        assert res.n_clusters == g and res.inference_df == g - 1


def test_singleton_clusters_reduce_to_hc1():
    rng = np.random.default_rng(22)
    y, x, w = design(rng, n=30)
    res = wls(y, x, w, list(range(30)))
    xw = x * w[:, None]
    bread = np.linalg.inv(x.T @ xw)
    e = res.residuals
    hc1 = bread @ (xw.T * e**2) @ xw @ bread * 30 / (30 - x.shape[1])
    np.testing.assert_allclose(res.cov, hc1, rtol=1e-9)


def test_equivariance():
    rng = np.random.default_rng(23)
    y, x, w = design(rng)
    base = wls(y, x, w)
    np.testing.assert_allclose(wls(3.0 * y, x, w).beta, 3.0 * base.beta, rtol=1e-12)
    np.testing.assert_allclose(wls(y, x, 5.0 * w).beta, base.beta, rtol=1e-10)
    np.testing.assert_allclose(wls(y, x, 5.0 * w).cov, base.cov, rtol=1e-9)
    scaled = wls(y, x * np.array([1.0, 2.0, 4.0]), w)
    np.testing.assert_allclose(scaled.beta * [1.0, 2.0, 4.0], base.beta, rtol=1e-10)


def test_rank_detection():
    x = np.column_stack([np.ones(5), np.arange(5.0), 2 * np.arange(5.0), np.arange(5.0) ** 2])
    assert dependent_columns(x) == [2]
    with pytest.raises(RankDeficientError) as info:
        wls(np.arange(5.0), x, names=["a", "b", "c", "d"])
    assert tuple(info.value.columns) == ("c",)
    with pytest.raises(RegressionError):
        wls(np.arange(3.0), np.ones((3, 1)), np.array([1.0, 0.0, 1.0]))


def test_fat_pet_and_peese_raise_on_constant_se():
    # identical estimates share one se, so 1/se duplicates the intercept
    effects = [EffectRecord(f"s{i}", "e", 2.0, 100, "slow") for i in range(6)]
    with pytest.raises(RankDeficientError):
        fat_pet(effects, cluster_robust=False)
    with pytest.raises(RankDeficientError):
        peese(effects, cluster_robust=False)
    with pytest.raises(RegressionError):
        fat_pet(effects[:2])


def test_level_and_transformed_forms_agree():
    rng = np.random.default_rng(24)
    for _ in range(50):
        effects = simulate_effects(40, 0.05, rng)
        pcc = np.array([e.pcc for e in effects])
        se = np.array([e.se for e in effects])
        level = wls(pcc, np.column_stack([np.ones_like(se), se]), 1.0 / se**2)
        fp = fat_pet(effects, cluster_robust=False)
        assert fp[PET].estimate == pytest.approx(level.beta[0], rel=1e-10, abs=1e-14)
        assert fp[FAT].estimate == pytest.approx(level.beta[1], rel=1e-10, abs=1e-14)
        assert fp[PET].se == pytest.approx(math.sqrt(level.cov[0, 0]), rel=1e-9)


def test_peese_level_form():
    rng = np.random.default_rng(25)
    effects = simulate_effects(60, 0.05, rng, selection=True)
    pcc = np.array([e.pcc for e in effects])
    se = np.array([e.se for e in effects])
    level = wls(pcc, np.column_stack([np.ones_like(se), se**2]), 1.0 / se**2)
    res = peese(effects, cluster_robust=False)
    assert res[PEESE_B0].estimate == pytest.approx(level.beta[0], rel=1e-10)
    assert res[PEESE_SE].estimate == pytest.approx(level.beta[1], rel=1e-10)


def with_moderators(rng, k=200, slope=0.1, n_studies=40):
    effects = []
    for i in range(k):
        df = int(rng.integers(50, 400))
        m = float(rng.integers(0, 2))
        noise = float(rng.standard_normal())
        pcc = 0.02 + slope * m + noise / math.sqrt(df)
        mods = {"published": m, "est_panel": float(rng.integers(0, 2)),
                "impact_factor": float(rng.uniform(0, 5)), "est_iv": float(rng.integers(0, 2))}
        effects.append(EffectRecord.from_pcc(f"s{i % n_studies:03d}", f"e{i}", pcc, df, "slow",
                                             moderators=mods))
    return effects


def test_mra_without_moderators_is_fat_pet():
    rng = np.random.default_rng(26)
    effects = with_moderators(rng)
    a, b = multiple_mra(effects, []), fat_pet(effects)
    for term in (FAT, PET):
        assert a[term] == b[term]


def test_planted_moderator_recovered():
    rng = np.random.default_rng(27)
    effects = with_moderators(rng)
    res = multiple_mra(effects, ["published", "est_panel"])
    assert res["published"].estimate == pytest.approx(0.1, abs=0.02)
    assert res["published"].p_value < 1e-6
    mra, trace = stepwise(effects, ["published", "est_panel", "impact_factor", "est_iv"])
    trace.check()
    assert "published" in mra.included_moderators


def test_constant_and_collinear_moderators_dropped(caplog):
    rng = np.random.default_rng(28)
    base = with_moderators(rng)
    effects = [EffectRecord(e.study_id, e.estimate_id, e.t_value, e.df, e.onset,
                            moderators={**e.moderators, "est_linear": e.moderators["published"],
                                        "est_logit": 1.0})
               for e in base]
    res = multiple_mra(effects, ["published", "est_linear", "est_logit"])
    assert res.included_moderators == ("published",)
    assert set(res.dropped) == {"est_linear", "est_logit"} and len(res.warnings) == 2
    mra, trace = stepwise(effects, ["est_linear", "published", "est_logit"])
    assert trace.additions() == ["published"] and trace.excluded_constant == ("est_logit",)


def test_null_stepwise_trace_consistent():
    rng = np.random.default_rng(29)
    effects = with_moderators(rng, slope=0.0)
    mra, trace = stepwise(effects, ["published", "est_panel", "impact_factor", "est_iv"])
    trace.check()
    assert len(mra.included_moderators) <= 1
    with pytest.raises(ValueError):
        stepwise(effects, [], enter_p=0.2, remove_p=0.1)


def test_battery_groups_and_skips():
    from litmeta.community import Partition

    rng = np.random.default_rng(30)
    effects = with_moderators(rng, k=120, n_studies=30)
    effects += [EffectRecord(f"f{i}", "e", 1.0 + 0.3 * i, 80 + i, "fast") for i in range(5)]
    assignment = {f"s{i:03d}": i % 2 for i in range(30)}
    report = run_paper_battery(effects, Partition(assignment), ["published", "est_panel"])
    names = [g.name for g in report.groups]
    assert names == ["slow_overall", "slow_cluster_1", "slow_cluster_2"]
    assert report.skipped == (("fast", "overall", "k=5 < 10"),)
    first = report.groups[0]
    assert first.fatpet_csv().splitlines()[0] == "term,estimate,se,p,ci_low,ci_high"
    assert [r.split(",")[0] for r in first.fatpet_csv().splitlines()[1:]] == [FAT, PET, PEESE_SE, PEESE_B0]
    assert first.mra_csv().splitlines()[-1].startswith(PEESE_B0)
    assert list(first.row_groups())[0] == "Publication bias"
    assert report.manifest()["groups"][0]["onset"] == "slow"
