import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracspread import evolution as ev
from fracspread import spread_analysis as sa
from fracspread import stable_law as sl
from fracspread import wave_family as wf

TIMES = np.linspace(0.5, 20.0, 40)


def snapshots(grid, p, profiles, times):
    return [ev.Field(grid, p, v, 0.0, 1.0, ev.Carrier(0.0, 1.0), t) for v, t in zip(profiles, times)]


# -- tracking ------------------------------------------------------------------


def test_track_cauchy_profile_at_three_quarters():
    p = sl.make_params(1.0, 0.0)
    grid = ev.Grid(200.0, 4096)
    times = [0.5, 1.0, 2.0, 4.0]
    snaps = snapshots(grid, p, [sl.cdf(p, grid.x / t) for t in times], times)
    track = sa.track_level(snaps, 0.75)
    # the cdf is concave there, so linear interpolation errs by at most dx^2 |F''| / 8
    assert np.allclose(track.positions, times, atol=grid.dx**2)


@pytest.mark.parametrize("c, tau", [(1.0, 1.0), (2.5, 0.5)])
def test_track_symmetric_wave(c, tau):
    p = sl.make_params(1.4, 0.0)
    grid = ev.Grid(100.0, 2048)
    wave = wf.WaveParams(c, tau)
    times = [1.0, 3.0, 7.0]
    snaps = snapshots(grid, p, [wf.wave_profile(p, wave, grid.x + c * t) for t in times], times)
    track = sa.track_level(snaps)
    assert np.allclose(track.positions, [-c * t for t in times], atol=grid.dx)


def test_track_wave_at_cdf_zero_level():
    p = sl.make_params(1.3, 0.6)
    grid = ev.Grid(100.0, 2048)
    wave = wf.WaveParams(1.5, 1.0)
    times = [0.5, 2.0, 5.0]
    snaps = snapshots(grid, p, [wf.wave_profile(p, wave, grid.x + 1.5 * t) for t in times], times)
    track = sa.track_level(snaps, p.cdf_at_zero())
    assert np.allclose(track.positions, [-1.5 * t for t in times], atol=grid.dx)


def test_track_piecewise_linear_by_hand():
    p = sl.make_params(1.5, 0.0)
    grid = ev.Grid(128.0, 256)  # integer nodes
    x = grid.x
    v = np.select([x < -2, x > 1], [0.0, 1.0], 0.0)
    v[(x >= -2) & (x <= 1)] = [0.2, 0.6, 0.4, 0.8]
    snap = ev.Field(grid, p, v, 0.0, 1.0, ev.Carrier(0.0, 1.0), 1.0)
    # leftmost crossing of 0.5 lies between -2 (0.2) and -1 (0.6)
    assert sa.track_level([snap], 0.5).positions[0] == pytest.approx(-1.25)
    assert sa.track_level([snap], 0.7).positions[0] == pytest.approx(0.75)


def test_track_raises_without_crossing():
    p = sl.make_params(1.5, 0.0)
    grid = ev.Grid(10.0, 256)
    snap = ev.Field(grid, p, np.full(256, 0.3), 0.3, 0.3, None, 2.0)
    with pytest.raises(sa.TrackingError) as info:
        sa.track_level([snap], 0.5)
    assert info.value.time == 2.0


@pytest.mark.parametrize("level", [0.0, 1.0, -0.5])
def test_track_level_domain(level):
    with pytest.raises(sl.DomainError):
        sa.track_level([], level)


def test_front_track_validation():
    with pytest.raises(sl.DomainError):
        sa.FrontTrack(0.5, [1.0, 1.0], [0.0, 0.0])
    with pytest.raises(sl.DomainError):
        sa.FrontTrack(0.5, [1.0, 2.0], [0.0])


def test_track_csv(tmp_path):
    track = sa.FrontTrack(0.5, [1.0, 2.0], [-1.0, -2.5])
    path = sa.write_track_csv(track, tmp_path / "track.csv")
    lines = path.read_text().splitlines()
    assert lines[0].startswith(f"# schema: {sa.TRACK_SCHEMA}")
    assert lines[1:] == ["t,m", "1.0,-1.0", "2.0,-2.5"]


# -- classification --------------------------------------------------------------


def test_fit_linear_example():
    fit = sa.fit_spread(sa.FrontTrack(0.5, TIMES, -3.0 * TIMES))
    assert fit.classification == "linear"
    assert fit.rate == pytest.approx(3.0, rel=1e-12)
    assert fit.residual < 1e-12
    assert fit.n_points == 20
    assert fit.window == (TIMES[20], TIMES[-1])


def test_fit_exponential_example():
    fit = sa.fit_spread(sa.FrontTrack(0.5, TIMES, -np.exp(0.5 * TIMES)))
    assert fit.classification == "exponential"
    assert fit.rate == pytest.approx(0.5, rel=1e-12)


def test_fit_positive_exponential_branch():
    # fronts that run right use log(m) instead of log(-m)
    fit = sa.fit_spread(sa.FrontTrack(0.5, TIMES, np.exp(0.3 * TIMES)))
    assert fit.classification == "exponential"
    assert fit.rate == pytest.approx(0.3, rel=1e-12)


def test_fit_stationary_front_is_linear_with_zero_rate():
    fit = sa.fit_spread(sa.FrontTrack(0.5, TIMES, np.full(TIMES.size, -2.0)))
    assert fit.classification == "linear"
    assert fit.rate == pytest.approx(0.0, abs=1e-12)


def test_fit_too_few_points():
    t = TIMES[:30]
    fit = sa.fit_spread(sa.FrontTrack(0.5, t, -3.0 * t))
    assert fit.classification == "indeterminate"
    assert math.isnan(fit.rate)
    assert "15 points" in fit.note


def test_fit_sign_change_is_indeterminate():
    fit = sa.fit_spread(sa.FrontTrack(0.5, TIMES, 15.0 - TIMES))
    assert fit.classification == "indeterminate"
    assert "sign" in fit.note
    assert fit.residual_linear < 1e-12


def test_fit_ambiguous_ratio():
    # mild curvature: neither model wins by a factor of four
    m = -(TIMES + 0.02 * TIMES**2)
    fit = sa.fit_spread(sa.FrontTrack(0.5, TIMES, m), ratio=1e6)
    assert fit.classification == "indeterminate"
    assert fit.residual_linear > 0 and fit.residual_exponential > 0


def test_fit_window_domain():
    with pytest.raises(sl.DomainError):
        sa.fit_spread(sa.FrontTrack(0.5, TIMES, -TIMES), window=0.0)


def test_fit_to_dict_documents_thresholds():
    d = sa.fit_spread(sa.FrontTrack(0.5, TIMES, -TIMES)).to_dict()
    assert d["schema"] == sa.FIT_SCHEMA
    assert d["ratio_threshold"] == 4.0
    assert d["min_points"] == 20
    json.dumps(d)


@given(st.floats(0.1, 10.0), st.floats(0.05, 5.0), st.floats(0.01, 1.0))
def test_fit_scale_equivariance(k, c, r):
    t = np.linspace(1.0, 10.0, 60)
    lin, lin_k = (sa.fit_spread(sa.FrontTrack(0.5, t, -s * c * t)) for s in (1.0, k))
    assert lin.classification == lin_k.classification == "linear"
    assert lin_k.rate == pytest.approx(k * lin.rate, rel=1e-9)
    ex, ex_k = (sa.fit_spread(sa.FrontTrack(0.5, t, -s * np.exp(r * t))) for s in (1.0, k))
    assert ex.classification == ex_k.classification == "exponential"
    assert ex_k.rate == pytest.approx(ex.rate, rel=1e-9)


# -- runs ------------------------------------------------------------------------


@pytest.mark.parametrize("alpha, beta", [(1.5, 0.0), (0.8, 0.4)])
def test_free_equation_track_is_self_similar(alpha, beta):
    p = sl.make_params(alpha, beta)
    cfg = sa.ExperimentConfig(half_width=200.0, n_points=4096, dt=0.1, T=4.0, snapshots=8, initial_tau=0.0)
    traj = sa.run_trajectory(p, wf.builtin_reaction("zero"), cfg)
    for zeta in (0.3, 0.5, 0.8):
        track = sa.track_level(traj.snapshots, zeta)
        exact = sl.quantile(p, zeta) * track.times ** (1 / alpha)
        assert np.allclose(track.positions, exact, atol=cfg.grid().dx)


def test_kpp_monotone_dependence():
    p = sl.make_params(1.5, 0.0)
    cfg = sa.ExperimentConfig(half_width=200.0, n_points=2048, dt=0.01, T=4.0, snapshots=20)
    tracks = [sa.track_level(sa.run_trajectory(p, wf.kpp_logistic(r), cfg).snapshots) for r in (0.5, 1.0, 2.0)]
    for weak, strong in zip(tracks, tracks[1:]):
        # the front moves left, so more reaction means a smaller m(t)
        assert np.all(strong.positions <= weak.positions + 1e-6)


def test_run_trajectory_zero_data():
    p = sl.make_params(1.2, 0.0)
    cfg = sa.ExperimentConfig(half_width=50.0, n_points=512, T=1.0, snapshots=4)
    zero = ev.Field(cfg.grid(), p, np.zeros(512))
    traj = sa.run_trajectory(p, wf.bistable(0.3), cfg, zero)
    assert traj.stopped is None
    assert all(np.all(u.values == 0) for u in traj.snapshots)


def test_run_trajectory_stops_near_boundary():
    p = sl.make_params(1.5, 0.0)
    cfg = sa.ExperimentConfig(half_width=25.0, n_points=512, dt=0.02, T=20.0, snapshots=40)
    traj = sa.run_trajectory(p, wf.kpp_logistic(), cfg)
    assert traj.stopped is not None
    assert traj.horizon < 20.0
    assert traj.horizon == traj.snapshots[-1].time


def test_experiment_config_validation():
    with pytest.raises(sl.DomainError):
        sa.ExperimentConfig(snapshots=0)
    with pytest.raises(sl.DomainError):
        sa.ExperimentConfig(n_points=1000)
    with pytest.raises(sl.DomainError):
        sa.ExperimentConfig(level=1.0)


# -- theorem experiments -----------------------------------------------------------


SMALL = sa.ExperimentConfig(half_width=400.0, n_points=4096, dt=0.02, T=6.0, snapshots=30, initial_tau=4.0)


def test_kpp_experiment_small_run():
    p = sl.make_params(1.5, 0.0)
    rep = sa.theorem31_experiment(p, wf.kpp_logistic(), [0.0, 1.0], SMALL)
    assert rep.passed, rep.infima
    assert 0.0 <= rep.min_value and rep.max_value <= 1.0
    d = rep.to_dict()
    assert d["schema"] == sa.THEOREM31_SCHEMA and d["threshold"] == sa.PASS_INF
    json.dumps(d)


def test_kpp_experiment_rejects_bistable_reaction():
    with pytest.raises(wf.HypothesisError):
        sa.theorem31_experiment(sl.make_params(1.5, 0.0), wf.bistable(0.3), [1.0], SMALL)


def test_kpp_experiment_rejects_negative_speed():
    with pytest.raises(sl.DomainError):
        sa.theorem31_experiment(sl.make_params(1.5, 0.0), wf.kpp_logistic(), [-1.0], SMALL)


def test_bistable_experiment_rejects_kpp_reaction():
    with pytest.raises(wf.HypothesisError):
        sa.theorem32_experiment(sl.make_params(1.2, 0.0), wf.kpp_logistic(), SMALL)


def test_bistable_experiment_small_run():
    p = sl.make_params(1.2, 0.0)
    cfg = sa.ExperimentConfig(half_width=400.0, n_points=4096, dt=0.05, T=20.0, snapshots=40, initial_tau=4.0)
    rep = sa.theorem32_experiment(p, wf.bistable(0.3), cfg)
    assert rep.certificate.c > 0
    assert rep.supremum < sa.PASS_SUP
    assert rep.fit.classification == "linear"
    assert rep.surrogate["name"].startswith("half-")
    json.dumps(rep.to_dict())


def test_upper_surrogate_bounds_half_scaled_reaction():
    g = wf.bistable(0.3)
    sur = sa.upper_surrogate(g)
    w = np.linspace(0.0, 0.5, 101)
    assert np.allclose(sur.func(w), 0.5 * g.func(2.0 * w))
    assert np.all(sur.func(np.linspace(0.51, 1.0, 50)) == 0.0)
    truncated = wf.truncated(g)
    assert sa.upper_surrogate(truncated) is truncated
