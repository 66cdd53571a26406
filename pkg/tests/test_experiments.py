"""Region logic, sup errors, and the replication harness."""
import numpy as np
import pytest

from clipkde.clipping import make_clipping
from clipkde.densities import get_density
from clipkde.errors import (ConfigError, DimensionError, RegionError,
                            ScheduleError, UnknownIdError)
from clipkde.estimators import EstimateField
from clipkde.experiments import (build_region, containment_experiment,
                                 default_clip_constant, gap_experiment,
                                 rate_and_gap, rate_experiment, sup_error,
                                 _rep_seed)

GAUSS = get_density("gaussian-1d")


def test_default_clip_constant():
    c = default_clip_constant(0.05)
    assert c == pytest.approx(0.1, rel=1e-15)
    # taper threshold t0 c^2 sits at 2r/5, below the region floor
    assert 2.0 * c * c == pytest.approx(0.02, rel=1e-12)


def test_build_region_oracle_mask():
    grid = np.linspace(-4.0, 4.0, 401)
    clip = make_clipping(0.1, 2.0)
    reg = build_region("oracle", GAUSS, 0.05, clip, grid)
    expect = (GAUSS.pdf(grid) > 0.05) & (np.abs(grid) < 20.0)
    assert np.array_equal(reg.mask, expect)
    assert reg.kind == "oracle" and reg.r == 0.05
    assert reg.grid.shape == (401, 1)
    # the mask is symmetric and ends where the density crosses the floor
    kept = grid[reg.mask]
    assert kept.min() == pytest.approx(-kept.max(), abs=1e-12)
    assert 2.0 < kept.max() < 2.1


def test_build_region_floor_must_clear_clip_threshold():
    grid = np.linspace(-3, 3, 11)
    hard = make_clipping(0.5, 2.0)
    with pytest.raises(RegionError):
        build_region("oracle", GAUSS, 0.05, hard, grid)
    # r above t0 c^2 is fine
    build_region("oracle", GAUSS, 0.6, hard, grid)


def test_build_region_estimated():
    grid = np.linspace(-3.0, 3.0, 61)
    vals = GAUSS.pdf(grid)
    fit = EstimateField(grid[:, None], vals, "classical")
    clip = make_clipping(0.1, 2.0)
    reg = build_region("estimated", fit, 0.05, clip, grid)
    assert np.array_equal(reg.mask, (vals > 0.1) & (np.abs(grid) < 20.0))

    other = EstimateField(np.linspace(-2, 2, 61)[:, None], vals, "classical")
    with pytest.raises(RegionError):
        build_region("estimated", other, 0.05, clip, grid)
    with pytest.raises(RegionError):
        build_region("estimated", GAUSS, 0.05, clip, grid)
    with pytest.raises(RegionError):
        build_region("oracle", fit, 0.05, clip, grid)
    with pytest.raises(RegionError):
        build_region("interior", GAUSS, 0.05, clip, grid)
    with pytest.raises(RegionError):
        build_region("oracle", GAUSS, 0.0, clip, grid)


def test_sup_error_hand_cases():
    grid = np.linspace(-2.0, 2.0, 41)
    reg = build_region("oracle", GAUSS, 0.05, None, grid)
    exact = EstimateField(grid[:, None], GAUSS.pdf(grid), "classical")
    assert sup_error(exact, GAUSS, reg) == 0.0

    bumped = GAUSS.pdf(grid).copy()
    i = int(np.flatnonzero(reg.mask)[3])
    bumped[i] += 0.025
    assert sup_error(EstimateField(grid[:, None], bumped, "classical"),
                     GAUSS, reg) == pytest.approx(0.025, abs=1e-15)

    off = EstimateField(np.linspace(0, 1, 41)[:, None], bumped, "classical")
    with pytest.raises(DimensionError):
        sup_error(off, GAUSS, reg)
    empty = build_region("oracle", GAUSS, 0.05, None, np.linspace(5, 6, 5))
    with pytest.raises(RegionError):
        sup_error(EstimateField(np.linspace(5, 6, 5)[:, None], np.zeros(5),
                                "classical"), GAUSS, empty)


def test_rep_seed_keyed_by_triple():
    seen = {_rep_seed(7, n, rep) for n in (100, 200) for rep in range(50)}
    assert len(seen) == 100
    assert _rep_seed(7, 100, 3) == _rep_seed(7, 100, 3)
    assert _rep_seed(7, 100, 3) != _rep_seed(8, 100, 3)


def test_rate_experiment_bitwise_across_workers():
    a = rate_experiment("classical", "gaussian-1d", (256, 512, 1024), 3, 5,
                        workers=1)
    b = rate_experiment("classical", "gaussian-1d", (256, 512, 1024), 3, 5,
                        workers=2)
    assert np.array_equal(a.raw_errors, b.raw_errors)
    assert a.slope == b.slope and a.intercept == b.intercept
    assert np.array_equal(a.medians, b.medians)
    assert a.quantity == "sup_error" and a.mode == "h4"
    assert a.raw_errors.shape == (3, 3)


def test_rate_experiment_validation():
    with pytest.raises(UnknownIdError):
        rate_experiment("parzen", "gaussian-1d", (64, 128, 256), 2, 0)
    with pytest.raises(ConfigError):
        rate_experiment("classical", "gaussian-1d", (256, 128, 512), 2, 0)
    with pytest.raises(ConfigError):
        rate_experiment("classical", "gaussian-1d", (128, 256), 2, 0)
    with pytest.raises(ConfigError):
        rate_experiment("classical", "gaussian-1d", (64, 128, 256), 0, 0)
    with pytest.raises(ScheduleError):
        rate_experiment("jkh_real", "gaussian-1d", (64, 128, 256), 2, 0,
                        mode="h4")
    with pytest.raises(ScheduleError):
        rate_experiment("classical", "gaussian-1d", (64, 128, 256), 2, 0,
                        mode="h6")


def test_rate_and_gap_shares_the_replication_pass():
    rate, gap = rate_and_gap("gaussian-1d", (128, 256, 512), 2, 9)
    rr = rate_experiment("mckay_real", "gaussian-1d", (128, 256, 512), 2, 9)
    gg = gap_experiment("gaussian-1d", (128, 256, 512), 2, 9)
    assert np.array_equal(rate.raw_errors, rr.raw_errors)
    assert np.array_equal(gap.raw_errors, gg.raw_errors)
    assert gap.quantity == "gap" and rate.quantity == "sup_error"
    assert np.all(gap.raw_errors > 0) and np.all(np.isfinite(gap.raw_errors))
    assert gap.clamp_events == 0
    assert gap.max_integral_dev < 1e-6


def test_classical_median_errors_respect_doubling_guard():
    # doubling n must not raise the median sup error by more than 10%
    r = rate_experiment("classical", "gaussian-1d",
                        (256, 512, 1024, 2048, 4096), 20, 777)
    ratios = r.medians[1:] / r.medians[:-1]
    assert np.max(ratios) <= 1.1
    assert 0.2 < r.slope < 0.8


def test_containment_smoke():
    cont = containment_experiment("gaussian-1d", 4096, 3, 31)
    assert cont.shape == (3,)
    assert cont.dtype == bool
    assert np.all(cont)
