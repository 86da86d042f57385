"""Sweep engine tests: Wilson intervals, determinism, slope fitting."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimodet.channel import sample_instance, substream
from mimodet.constellation import make_constellation
from mimodet.detect import detect_ml_exhaustive, detect_zf
from mimodet.montecarlo import (
    TRIAL_BLOCK,
    ExperimentConfig,
    PointStats,
    VepCurve,
    estimate_vep,
    fit_slope,
    run_trial,
    sweep,
)

QPSK = make_constellation("psk", 4)
QAM16 = make_constellation("qam", 16)


def wilson_oracle(errors, trials, z=1.96):
    """Independent arithmetic for the Wilson score interval."""
    p = errors / trials
    center = (p + z * z / (2 * trials)) / (1 + z * z / trials)
    half = (z / (1 + z * z / trials)) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials**2))
    return center - half, center + half


def test_wilson_zero_errors():
    vep, lo, hi = estimate_vep(0, 100)
    assert vep == 0.0
    assert lo == 0.0
    _, oracle_hi = wilson_oracle(0, 100)
    assert hi == pytest.approx(oracle_hi, abs=1e-12)
    assert hi == pytest.approx(0.0370, abs=5e-5)


def test_wilson_all_errors_symmetry():
    vep, lo, hi = estimate_vep(100, 100)
    assert vep == 1.0 and hi == 1.0
    assert lo == pytest.approx(1.0 - estimate_vep(0, 100)[2], abs=1e-12)


def test_wilson_ten_of_thousand():
    vep, lo, hi = estimate_vep(10, 1000)
    assert vep == pytest.approx(0.01)
    o_lo, o_hi = wilson_oracle(10, 1000)
    assert lo == pytest.approx(o_lo, abs=1e-12)
    assert hi == pytest.approx(o_hi, abs=1e-12)
    assert lo == pytest.approx(0.00545, abs=1e-4)
    assert hi == pytest.approx(0.01832, abs=1e-4)


@settings(max_examples=100, deadline=None)
@given(trials=st.integers(min_value=1, max_value=10**6), frac=st.floats(min_value=0, max_value=1))
def test_wilson_interval_contains_estimate(trials, frac):
    errors = min(trials, int(frac * trials))
    vep, lo, hi = estimate_vep(errors, trials)
    assert 0.0 <= lo <= vep <= hi <= 1.0


def test_wilson_validation():
    with pytest.raises(ValueError):
        estimate_vep(5, 0)
    with pytest.raises(ValueError):
        estimate_vep(-1, 10)
    with pytest.raises(ValueError):
        estimate_vep(11, 10)


# ---------------------------------------------------------------------------
# config validation


def base_config(**kw) -> ExperimentConfig:
    defaults = dict(
        constellation=QAM16,
        detectors=("zf",),
        snr_db=0.0,
        m_grid=(8, 12),
        n=2,
        trials=64,
        master_seed=7,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def test_config_rejects_bad_grid():
    with pytest.raises(ValueError, match="ascending"):
        base_config(m_grid=(12, 8))
    with pytest.raises(ValueError, match="empty"):
        base_config(m_grid=())


def test_config_rejects_user_rule_conflicts():
    with pytest.raises(ValueError, match="exactly one"):
        base_config(n=2, delta=0.5)
    with pytest.raises(ValueError, match="exactly one"):
        base_config(n=None)
    with pytest.raises(ValueError, match="m=8 gives n=12"):
        base_config(n=12)


def test_config_rejects_infeasible_ml():
    with pytest.raises(ValueError, match="ml-exhaustive infeasible"):
        base_config(detectors=("ml-exhaustive",), n=8, m_grid=(8, 16), ml_budget=1000)


def test_config_rejects_sphere_on_psk():
    with pytest.raises(ValueError, match="QAM"):
        base_config(constellation=QPSK, detectors=("ml-sphere",))


def test_config_rejects_unknown_detector():
    with pytest.raises(ValueError, match="unknown detector"):
        base_config(detectors=("mmse",))


def test_config_delta_rounding_half_away_from_zero():
    cfg = base_config(n=None, delta=1.0 / 8.0, m_grid=(8, 12, 16, 20, 24, 28, 32))
    assert [cfg.users_for(m) for m in cfg.m_grid] == [1, 2, 2, 3, 3, 4, 4]


# ---------------------------------------------------------------------------
# run_trial


def test_run_trial_deterministic():
    cfg = base_config(detectors=("zf", "ml-exhaustive"), snr_db=-3.0)
    a = run_trial(8, 2, cfg, trial_index=5)
    b = run_trial(8, 2, cfg, trial_index=5)
    for det in cfg.detectors:
        np.testing.assert_array_equal(a[det].x_hat, b[det].x_hat)
        assert a[det].vector_error == b[det].vector_error


def test_run_trial_all_detectors_see_same_instance():
    cfg = base_config(detectors=("zf", "ml-exhaustive"), snr_db=-3.0, m_grid=(8, 12))
    out = run_trial(12, 2, cfg, trial_index=9)
    # reconstruct the instance from the keyed stream (point index 1) and
    # verify each decision equals the detector run directly on it
    inst = sample_instance(12, 2, QAM16, cfg.sigma2, substream(7, 1, 9))
    np.testing.assert_array_equal(out["zf"].x_hat, detect_zf(inst.H, inst.r, QAM16).x_hat)
    np.testing.assert_array_equal(
        out["ml-exhaustive"].x_hat, detect_ml_exhaustive(inst.H, inst.r, QAM16).x_hat
    )
    np.testing.assert_array_equal(out["zf"].symbol_errors, out["zf"].x_hat != inst.x_true)


def test_run_trial_near_noiseless():
    # at 60 dB the failure probability is negligible: no errors in 1e3 trials
    cfg = base_config(snr_db=60.0, m_grid=(8,), trials=1)
    for t in range(1000):
        out = run_trial(8, 2, cfg, t)
        assert not out["zf"].vector_error


# ---------------------------------------------------------------------------
# sweep


def test_sweep_single_point_matches_run_trial_aggregation():
    cfg = base_config(m_grid=(8,), trials=100, snr_db=-5.0)
    res = sweep(cfg)
    errors = sum(int(run_trial(8, 2, cfg, t)["zf"].vector_error) for t in range(100))
    pt = res.curves["zf"].points[0]
    assert pt.errors == errors
    assert pt.trials == 100
    assert pt.vep_hat == errors / 100


def test_sweep_worker_count_invariance():
    cfg = base_config(m_grid=(8, 10), trials=3 * TRIAL_BLOCK + 17, snr_db=-5.0)
    res1 = sweep(cfg, workers=1)
    res2 = sweep(cfg, workers=2)
    res3 = sweep(cfg, workers=3)
    for det in cfg.detectors:
        for a, b, c in zip(res1.curves[det].points, res2.curves[det].points, res3.curves[det].points):
            assert a == b == c


def test_sweep_adaptive_stop_deterministic_and_block_aligned():
    cfg = base_config(m_grid=(8,), trials=10 * TRIAL_BLOCK, snr_db=-8.0, target_errors=30)
    res1 = sweep(cfg, workers=1)
    res2 = sweep(cfg, workers=4)
    p1, p2 = res1.curves["zf"].points[0], res2.curves["zf"].points[0]
    assert p1 == p2
    assert p1.errors >= 30
    assert p1.trials % TRIAL_BLOCK == 0
    assert p1.trials < 10 * TRIAL_BLOCK  # actually stopped early


def test_sweep_counting_identity_zf():
    cfg = base_config(m_grid=(8, 12), trials=400, snr_db=-6.0)
    res = sweep(cfg)
    for pt in res.curves["zf"].points:
        assert pt.sep_hat <= pt.vep_hat + 1e-12
        assert pt.vep_hat <= pt.n * pt.sep_hat + 1e-12
        assert pt.vep_hat == pt.errors / pt.trials


def test_sweep_ml_dominates_zf():
    cfg = base_config(detectors=("ml-exhaustive", "zf"), m_grid=(6, 8), n=2, trials=600, snr_db=-6.0)
    res = sweep(cfg)
    for ml_pt, zf_pt in zip(res.curves["ml-exhaustive"].points, res.curves["zf"].points):
        slack = 1.96 * math.sqrt(zf_pt.vep_hat * (1 - zf_pt.vep_hat) / zf_pt.trials + 1e-9)
        assert ml_pt.vep_hat <= zf_pt.vep_hat + 2 * slack


def test_sweep_overlays_attached():
    cfg = base_config(m_grid=(8, 12), trials=32)
    res = sweep(cfg)
    assert len(res.overlays) == 2
    o = res.overlays[0]
    assert o.m == 8 and o.n == 2
    assert math.isfinite(o.log_ml_lower) and math.isfinite(o.log_ml_union)
    assert o.f_ml_ref == pytest.approx(math.log(1.1), abs=1e-12)
    # fixed-n campaign: family delta is 0, ZF reference equals ML
    assert o.f_zf_ref == o.f_ml_ref


def test_sweep_delta_campaign_reference_slope():
    cfg = base_config(n=None, delta=1.0 / 3.0, m_grid=(9, 12), trials=32)
    res = sweep(cfg)
    assert res.overlays[0].f_zf_ref == pytest.approx((2.0 / 3.0) * math.log(1.1), abs=1e-12)


def test_sweep_zf_curve_monotone_modulo_ci():
    cfg = base_config(n=None, delta=1.0 / 3.0, m_grid=(12, 24, 36), trials=2000, snr_db=0.0)
    res = sweep(cfg)
    pts = res.curves["zf"].points
    for prev, nxt in zip(pts, pts[1:]):
        # decreasing in m, up to confidence-interval overlap
        assert nxt.ci_low <= prev.ci_high


# ---------------------------------------------------------------------------
# slope fit


def synthetic_curve(ms, veps, errors=10**6) -> VepCurve:
    curve = VepCurve(detector="zf")
    for m, vep in zip(ms, veps):
        trials = int(errors / vep)
        curve.points.append(
            PointStats(
                m=m,
                n=2,
                trials=trials,
                errors=errors,
                symbol_errors_total=errors,
                user1_errors=errors,
                vep_hat=vep,
                ci_low=vep,
                ci_high=vep,
                sep_hat=vep,
            )
        )
    return curve


def test_fit_exact_exponential():
    ms = [10, 20, 30, 40, 50]
    curve = synthetic_curve(ms, [math.exp(-0.1 * m) for m in ms])
    fit = fit_slope(curve)
    assert fit.f_hat == pytest.approx(0.1, abs=1e-12)
    assert fit.stderr == pytest.approx(0.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.points_used == tuple(ms)


def test_fit_constant_curve():
    curve = synthetic_curve([10, 20, 30], [0.25, 0.25, 0.25])
    fit = fit_slope(curve)
    assert fit.f_hat == pytest.approx(0.0, abs=1e-12)


def test_fit_two_points():
    curve = synthetic_curve([10, 20], [0.3, 0.03], errors=1000)
    fit = fit_slope(curve)
    assert fit.f_hat == pytest.approx(math.log(10.0) / 10.0, rel=1e-12)
    assert fit.stderr == 0.0
    assert fit.r_squared == 1.0


def test_fit_excludes_low_error_points():
    curve = synthetic_curve([10, 20, 30], [0.5, 0.05, 0.005])
    # starve the last point of errors
    last = curve.points[-1]
    curve.points[-1] = PointStats(
        m=last.m, n=last.n, trials=1000, errors=5, symbol_errors_total=5,
        user1_errors=5, vep_hat=0.005, ci_low=0.0, ci_high=0.01, sep_hat=0.005,
    )
    fit = fit_slope(curve, min_errors=50)
    assert fit.points_used == (10, 20)


def test_fit_insufficient_points():
    curve = synthetic_curve([10], [0.5])
    with pytest.raises(ValueError, match="2 grid points"):
        fit_slope(curve)
    zero = synthetic_curve([10, 20], [0.5, 0.25])
    for i, p in enumerate(zero.points):
        zero.points[i] = PointStats(
            m=p.m, n=p.n, trials=p.trials, errors=0, symbol_errors_total=0,
            user1_errors=0, vep_hat=0.0, ci_low=0.0, ci_high=0.0, sep_hat=0.0,
        )
    with pytest.raises(ValueError):
        fit_slope(zero, min_errors=0)  # zero-error points never qualify


def test_fit_weighting_pulls_toward_heavy_points():
    # two segments with different slopes; weights decide the mix
    ms = [10, 20, 30]
    veps = [math.exp(-0.2 * 10), math.exp(-0.2 * 20), math.exp(-0.2 * 20 - 0.05 * 10)]
    heavy_left = VepCurve(detector="zf")
    heavy_right = VepCurve(detector="zf")
    for which, curve in ((0, heavy_left), (2, heavy_right)):
        for i, (m, vep) in enumerate(zip(ms, veps)):
            errors = 10**6 if i == which else 100
            curve.points.append(
                PointStats(m=m, n=2, trials=int(errors / vep), errors=errors,
                           symbol_errors_total=errors, user1_errors=errors,
                           vep_hat=vep, ci_low=vep, ci_high=vep, sep_hat=vep)
            )
    f_left = fit_slope(heavy_left, min_errors=1).f_hat
    f_right = fit_slope(heavy_right, min_errors=1).f_hat
    assert f_left > f_right  # left-heavy fit leans to the steeper first segment


def test_fit_slope_recovers_bound_curve_slopes():
    # treat closed-form bound curves as exact with flat huge weights
    from mimodet import theory

    rho = 0.5
    ms = list(range(200, 401, 50))
    veps = [
        math.exp(theory.ml_union_bound_log(theory.SystemParams(M=4, d_min=2 * math.sqrt(rho), sigma2=1.0, m=m, n=4)))
        for m in ms
    ]
    fit = fit_slope(synthetic_curve(ms, veps))
    assert fit.f_hat == pytest.approx(math.log1p(rho), abs=1e-3)
