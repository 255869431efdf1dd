"""Reservoir dynamics, noise model, and the flow-density curve."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sbopt as sb
from sbopt.bench.problems import complex_toll_scenario, simple_toll_scenario

TRAPEZOID = sb.NfdCurve(k_cr_low=20.0, k_cr_high=30.0, k_jam=80.0, q_max=600.0)


def noiseless(cfg, **overrides):
    fields = dict(lane_km=cfg.lane_km, avg_trip_length_km=cfg.avg_trip_length_km,
                  demand_segments=cfg.demand_segments,
                  toll_elasticity=cfg.toll_elasticity,
                  value_of_time=cfg.value_of_time, dt_s=cfg.dt_s,
                  demand_composition_gain=cfg.demand_composition_gain)
    fields.update(overrides)
    return sb.ReservoirConfig(**fields)


def test_nfd_flow_shape():
    assert sb.nfd_flow(0.0, TRAPEZOID) == 0.0
    assert sb.nfd_flow(80.0, TRAPEZOID) == 0.0
    assert sb.nfd_flow(25.0, TRAPEZOID) == 600.0  # plateau membership
    assert sb.nfd_flow(10.0, TRAPEZOID) == pytest.approx(300.0)
    assert sb.nfd_flow(55.0, TRAPEZOID) == pytest.approx(300.0)
    with pytest.raises(sb.SimulationError):
        sb.nfd_flow(-1.0, TRAPEZOID)
    with pytest.raises(sb.SimulationError):
        sb.nfd_flow(81.0, TRAPEZOID)


def test_nfd_curve_validation_and_speed():
    assert TRAPEZOID.free_flow_speed == pytest.approx(30.0)
    with pytest.raises(ValueError):
        sb.NfdCurve(30.0, 20.0, 80.0, 600.0)
    with pytest.raises(ValueError):
        sb.NfdCurve(20.0, 90.0, 80.0, 600.0)


def test_network_average():
    k_bar, q_bar = sb.network_average([(2.0, 12.0, 300.0)])
    assert (k_bar, q_bar) == (12.0, 300.0)
    k_bar, _ = sb.network_average([(1.0, 10.0, 0.0), (3.0, 20.0, 0.0)])
    assert k_bar == pytest.approx(17.5)
    k_bar, q_bar = sb.network_average([(5.0, 10.0, 100.0), (5.0, 30.0, 200.0)])
    assert (k_bar, q_bar) == (pytest.approx(20.0), pytest.approx(150.0))
    with pytest.raises(ValueError):
        sb.network_average([])


@given(st.floats(0.5, 10.0), st.floats(0.0, 50.0), st.floats(0.0, 700.0))
@settings(max_examples=40)
def test_network_average_split_invariance(lane, k, q):
    whole, _ = sb.network_average([(lane, k, q)])
    halves, _ = sb.network_average([(lane / 2.0, k, q), (lane / 2.0, k, q)])
    assert whole == pytest.approx(halves)


def test_numerical_noise_contract():
    tau = np.array([0.3, 0.7])
    assert sb.apply_numerical_noise(5.0, tau, 0.0, 3) == 5.0
    a = sb.apply_numerical_noise(5.0, tau, 0.5, 3)
    assert a == sb.apply_numerical_noise(5.0, tau, 0.5, 3)
    assert a != sb.apply_numerical_noise(5.0, tau, 0.5, 4)
    assert abs(a - 5.0) <= 0.5
    with pytest.raises(ValueError):
        sb.apply_numerical_noise(5.0, tau, -0.1, 3)


def test_numerical_noise_decorrelates_nearby_inputs():
    rng = np.random.default_rng(0)
    taus = rng.random((1000, 2))
    u = np.array([sb.apply_numerical_noise(0.0, t, 1.0, 0) for t in taus])
    v = np.array([sb.apply_numerical_noise(0.0, t + 1e-2, 1.0, 0) for t in taus])
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.1


def test_zero_demand_stays_empty():
    cfg = sb.ReservoirConfig(lane_km=40.0, avg_trip_length_km=5.0,
                             demand_segments=((90.0, 0.0),), toll_elasticity=0.3)
    out = sb.run_reservoir(cfg, TRAPEZOID, sb.TollScheme(30.0, 60.0, 30.0, [0.4]), 0)
    assert np.all(out.n == 0.0)
    assert np.all(out.k_bar == 0.0)


def test_extreme_elasticity_chokes_inflow():
    cfg, curve, template = simple_toll_scenario()
    hard = noiseless(cfg, toll_elasticity=50.0)
    tolled = sb.run_reservoir(hard, curve, template.with_tau([1.0, 1.0]), 0)
    free = sb.run_reservoir(hard, curve, template, 0)
    assert np.all(tolled.k_bar_clean < 0.15 * free.k_bar_clean)


def test_accumulation_matches_flow_balance():
    """Final accumulation equals total inflow minus total outflow."""
    curve = sb.NfdCurve(15.0, 15.0, 60.0, 600.0)
    cfg = sb.ReservoirConfig(lane_km=40.0, avg_trip_length_km=5.0,
                             demand_segments=((30.0, 2000.0), (30.0, 4000.0), (30.0, 0.0)),
                             toll_elasticity=0.3)
    out = sb.run_reservoir(cfg, curve, sb.TollScheme(30.0, 90.0, 30.0, np.zeros(2)), 0)
    assert out.k.max() < curve.k_jam  # uncongested path: no capacity caps bind
    dt_h = cfg.dt_s / 3600.0
    t_min = (np.arange(out.t_s.size) + 0.5) * cfg.dt_s / 60.0
    demand = np.zeros(out.t_s.size)
    edge = 0.0
    for dur, rate in cfg.demand_segments:
        demand[(t_min >= edge) & (t_min < edge + dur)] = rate
        edge += dur
    total_in = demand.sum() * dt_h  # zero toll, so inflow is the raw demand
    total_out = out.q.sum() * cfg.lane_km / cfg.avg_trip_length_km * dt_h
    assert out.n[-1] == pytest.approx(total_in - total_out, rel=1e-6)


def test_raising_distance_tolls_weakly_lowers_density():
    cfg, curve, template = simple_toll_scenario()
    clean = noiseless(cfg)
    k_soft = sb.run_reservoir(clean, curve, template.with_tau([0.2, 0.2]), 0).k_bar_clean
    k_hard = sb.run_reservoir(clean, curve, template.with_tau([0.5, 0.5]), 0).k_bar_clean
    assert np.all(k_hard <= k_soft + 1e-9)
    assert np.any(k_hard < k_soft - 1.0)


def test_delay_toll_relieves_congestion():
    cfg, curve, template = complex_toll_scenario()
    clean = noiseless(cfg)
    k_free = sb.run_reservoir(clean, curve, template, 0).k_bar_clean
    tau = np.concatenate([np.zeros(8), np.full(8, 15.0)])
    k_toll = sb.run_reservoir(clean, curve, template.with_tau(tau), 0).k_bar_clean
    assert np.all(k_toll <= k_free + 1e-9)
    assert np.sum(k_toll < k_free - 0.5) >= 6


def test_untolled_fixtures_cross_critical_density():
    cfg, curve, template = simple_toll_scenario()
    out = sb.run_reservoir(noiseless(cfg), curve, template, 0)
    assert out.k_bar_clean.max() > 15.0

    cfg, curve, template = complex_toll_scenario()
    out = sb.run_reservoir(noiseless(cfg), curve, template, 0)
    assert out.k_bar_clean.max() > 30.0


def test_noiseless_output_continuous_in_tau():
    cfg, curve, template = simple_toll_scenario()
    clean = noiseless(cfg)

    def f(tau):
        out = sb.run_reservoir(clean, curve, template.with_tau(tau), 0)
        return sb.objective_density(out, 15.0)

    rng = np.random.default_rng(5)
    tau0 = rng.random(2)
    d = rng.random(2)
    d /= np.linalg.norm(d)
    base = f(tau0)
    diffs = [abs(f(tau0 + delta * d) - base) for delta in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert diffs[-1] < 1e-3
    assert diffs[0] < 1.0
    assert all(b < a for a, b in zip(diffs, diffs[1:]))  # shrinks with delta


def test_amplitude_noise_breaks_continuity_by_design():
    cfg, curve, template = simple_toll_scenario()
    clean = noiseless(cfg)
    noisy = noiseless(cfg, noise_amplitude=0.5)

    def f(config, tau):
        out = sb.run_reservoir(config, curve, template.with_tau(tau), 0)
        return sb.objective_density(out, 15.0)

    tau0 = np.array([0.30003, 0.40003])  # interior of a quantization cell
    # below the hash grid resolution the perturbation is unchanged
    assert abs(f(noisy, tau0 + 1e-6) - f(noisy, tau0)) < 1e-4
    # across cells the rough term dominates the smooth trend
    cross = [abs(f(noisy, tau0 + (i + 1) * 2.2e-4) - f(noisy, tau0)) for i in range(8)]
    smooth = [abs(f(clean, tau0 + (i + 1) * 2.2e-4) - f(clean, tau0)) for i in range(8)]
    assert max(smooth) < 0.1
    assert max(cross) > 0.2


def test_stochastic_noise_is_seeded_and_separate():
    cfg, curve, template = simple_toll_scenario()
    stoch = noiseless(cfg, stochastic_noise_sd=0.5)
    a = sb.run_reservoir(stoch, curve, template, 7)
    b = sb.run_reservoir(stoch, curve, template, 7)
    c = sb.run_reservoir(stoch, curve, template, 8)
    assert np.array_equal(a.k_bar, b.k_bar)
    assert not np.allclose(a.k_bar, c.k_bar)
    # the clean aggregates are untouched by either noise source
    assert np.array_equal(a.k_bar_clean, c.k_bar_clean)


def test_composition_narrows_the_productive_plateau():
    curve = sb.NfdCurve(20.0, 30.0, 38.0, 700.0)
    segments = ((30.0, 4400.0), (120.0, 6000.0), (30.0, 0.0))
    template = sb.TollScheme(30.0, 150.0, 30.0, np.zeros(4), np.zeros(4))
    tau = np.concatenate([np.full(4, 0.2), np.full(4, 25.0)])
    base = dict(lane_km=40.0, avg_trip_length_km=10.0, demand_segments=segments,
                toll_elasticity=0.3)
    q_off = sb.run_reservoir(sb.ReservoirConfig(**base), curve,
                             template.with_tau(tau), 0).q_bar_clean
    q_on = sb.run_reservoir(sb.ReservoirConfig(**base, demand_composition_gain=8.0),
                            curve, template.with_tau(tau), 0).q_bar_clean
    assert q_on.mean() < q_off.mean() - 50.0


def test_objective_arithmetic():
    out = sb.SimOutput(t_s=np.zeros(1), n=np.zeros(1), k=np.zeros(1), q=np.zeros(1),
                       k_bar=np.array([20.0, 10.0]), q_bar=np.array([600.0, 300.0]),
                       k_bar_clean=np.array([20.0, 10.0]),
                       q_bar_clean=np.array([600.0, 300.0]))
    assert sb.objective_density(out, 15.0) == pytest.approx(5.0)
    assert sb.objective_density(out, 20.0) == pytest.approx(5.0)
    assert sb.objective_flow(out) == pytest.approx(450.0)


def test_objective_translation_and_permutation_invariance():
    k = np.array([22.0, 14.0, 31.0])
    out = lambda kk: sb.SimOutput(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1),
                                  kk, kk, kk, kk)
    v = sb.objective_density(out(k), 15.0)
    assert sb.objective_density(out(k + 3.0), 18.0) == pytest.approx(v)
    assert sb.objective_flow(out(k[::-1].copy())) == pytest.approx(
        sb.objective_flow(out(k)))


def test_interval_without_steps_is_rejected():
    curve = sb.NfdCurve(15.0, 15.0, 60.0, 600.0)
    cfg = sb.ReservoirConfig(lane_km=40.0, avg_trip_length_km=5.0,
                             demand_segments=((30.0, 1000.0), (60.0, 2000.0), (30.0, 0.0)),
                             toll_elasticity=0.3, dt_s=1200.0)
    with pytest.raises(ValueError, match="contains no simulation steps"):
        sb.run_reservoir(cfg, curve, sb.TollScheme(30.0, 90.0, 10.0, np.zeros(6)), 0)


def test_horizon_must_fit_demand_profile():
    cfg, curve, _ = simple_toll_scenario()
    with pytest.raises(ValueError, match="beyond the demand profile"):
        sb.run_reservoir(cfg, curve, sb.TollScheme(30.0, 200.0, 17.0, np.zeros(10)), 0)


def test_toll_scheme_validation():
    with pytest.raises(ValueError):
        sb.TollScheme(30.0, 90.0, 25.0, np.zeros(2))  # not an integer split
    with pytest.raises(ValueError):
        sb.TollScheme(30.0, 90.0, 30.0, np.zeros(2), np.zeros(3))
    scheme = sb.TollScheme(30.0, 90.0, 30.0, [0.1, 0.2], [1.0, 2.0])
    assert scheme.joint and scheme.m_intervals == 2
    assert np.allclose(scheme.tau(), [0.1, 0.2, 1.0, 2.0])
    swapped = scheme.with_tau([0.2, 0.1, 2.0, 1.0])
    assert np.allclose(swapped.eta, [0.2, 0.1])
    assert scheme.interval_at(45.0) == 0
    assert scheme.interval_at(29.9) is None


def test_scenario_roundtrip(tmp_path):
    cfg, curve, template = simple_toll_scenario()
    path = tmp_path / "scenario.json"
    sb.save_scenario(path, cfg, curve, template)
    cfg2, curve2, scheme2 = sb.load_scenario(path)
    assert cfg2 == cfg
    assert curve2 == curve
    assert np.allclose(scheme2.tau(), template.tau())
    out1 = sb.run_reservoir(cfg, curve, template, 3)
    out2 = sb.run_reservoir(cfg2, curve2, scheme2, 3)
    assert np.array_equal(out1.k_bar, out2.k_bar)


def test_series_csv_row_count(tmp_path):
    cfg, curve, template = simple_toll_scenario()
    out = sb.run_reservoir(noiseless(cfg, dt_s=60.0), curve, template, 0)
    path = tmp_path / "series.csv"
    sb.write_series_csv(out, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t_s,n,k,q"
    assert len(lines) == out.t_s.size + 1
