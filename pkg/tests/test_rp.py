import numpy as np
import pytest

from cpinn_rp.cpinn import LossData, TrainConfig, hierarchical_train, loss_parts
from cpinn_rp.exceptions import ConfigError, DataError, StructuralError
from cpinn_rp.metrics import evaluate
from cpinn_rp.network import NetSpec, forward, init_xavier
from cpinn_rp.pde import exact_wave, heat_problem, wave_problem
from cpinn_rp.rp import (FALLBACK, HARD, RpConfig, SensorSeries, build_rp_input, equispaced_taps, init_rp_network,
                         load_sensors, masked_sensor_experiment, predict, save_sensors, synthetic_series,
                         tap_sources, train_netu_rp)
from cpinn_rp.sampling import sample_heat

HEAT = heat_problem()
WAVE = wave_problem()
NET = init_xavier(NetSpec("NetU", 2, 8, seed=3))


def dense_wave_series(x, hz=2048):
    n = int(WAVE.T * hz) + 1
    t = np.linspace(0, WAVE.T, n)
    return SensorSeries(x, 0.0, t[1] - t[0], exact_wave(np.full(n, x), t))


def test_equispaced_taps():
    assert equispaced_taps(np.pi) == pytest.approx([np.pi * i / 5 for i in range(1, 5)])


@pytest.mark.parametrize("kw", [dict(delay=0), dict(sensor_availability=("x",)), dict(depth=0),
                                dict(sensor_availability=(HARD, HARD))])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RpConfig(**{"tap_points": (1.0,), "delay": 0.1, **kw})


def test_config_checks_domain():
    with pytest.raises(ConfigError):
        RpConfig((4.0,), 0.1).check(HEAT)
    with pytest.raises(ConfigError):
        RpConfig((1.0,), 11.0).check(HEAT)


def test_early_times_read_the_initial_condition():
    cfg = RpConfig((0.5, 2.0), 0.3)
    rows = build_rp_input([1.0, 1.0], [0.0, 0.2], cfg, None, NET, HEAT)
    assert np.allclose(rows[:, 2], np.sin(0.25))
    assert np.allclose(rows[:, 3], np.sin(1.0))


def test_fallback_taps_ignore_sensors():
    cfg = RpConfig((0.5, 2.0), 0.3)
    junk = {0: SensorSeries(0.5, 0.0, 0.1, np.full(200, 99.0))}
    a = build_rp_input([1.0], [5.0], cfg, None, NET, HEAT)
    b = build_rp_input([1.0], [5.0], cfg, junk, NET, HEAT)
    assert np.array_equal(a, b)
    assert a[0, 2] == forward(NET, np.array([0.5, 4.7]))


def test_hard_tap_reads_dense_series_within_interpolation_error():
    x = np.pi / 5
    cfg = RpConfig((x,), 0.03, (HARD,))
    t = np.random.default_rng(0).uniform(0.1, 6.0, 300)
    rows = build_rp_input(np.full(300, 1.0), t, cfg, {0: dense_wave_series(x)}, NET, WAVE)
    assert np.max(np.abs(rows[:, 2] - exact_wave(np.full(300, x), t - 0.03))) <= 1e-6


def test_either_or_sources():
    cfg = RpConfig((0.5, 1.0), 0.1, (HARD, FALLBACK))
    with pytest.raises(DataError):
        tap_sources(cfg, {})
    with pytest.raises(ConfigError):
        tap_sources(cfg, {0: SensorSeries(0.7, 0, 0.1, np.zeros(10))})
    assert tap_sources(cfg, {0: SensorSeries(0.5, 0, 0.1, np.zeros(10))}) == [HARD, FALLBACK]


def test_no_future_samples_are_read():
    # poison everything after the sample bracketing t - tau from above
    s = SensorSeries(1.0, 0.0, 0.01, np.linspace(0, 1, 1001))
    cfg = RpConfig((1.0,), 0.05, (HARD,))
    for t in (3.0, 3.004, 7.777):
        base = build_rp_input([0.5], [t], cfg, {0: s}, NET, HEAT)
        last = int(np.ceil((t - 0.05) / 0.01 - 1e-9))
        bad = s.values.copy()
        bad[last + 1:] = 1e6
        poisoned = build_rp_input([0.5], [t], cfg, {0: SensorSeries(1.0, 0.0, 0.01, bad)}, NET, HEAT)
        assert np.array_equal(base, poisoned)


def test_on_grid_query_reads_exactly_one_sample():
    s = SensorSeries(1.0, 0.0, 0.5, np.array([0.0, 1.0, 2.0, 3.0]))
    bad = SensorSeries(1.0, 0.0, 0.5, np.array([0.0, 1.0, 2.0, np.nan]))
    assert bad.at(1.0) == s.at(1.0) == 2.0


def test_sensor_gap():
    s = SensorSeries(1.0, 2.0, 0.1, np.zeros(10))
    cfg = RpConfig((1.0,), 0.05, (HARD,))
    with pytest.raises(DataError):
        build_rp_input([0.5], [1.0], cfg, {0: s}, NET, HEAT)


def test_series_validation():
    with pytest.raises(DataError):
        SensorSeries.from_samples(0.5, [0.0, 0.1, 0.3], [1, 2, 3])
    with pytest.raises(DataError):
        SensorSeries.from_samples(0.5, [0.0, 0.0], [1, 2])
    s = SensorSeries.from_samples(0.5, np.linspace(0, 1, 11), np.arange(11.0))
    assert s.dt == pytest.approx(0.1) and s.t_end == pytest.approx(1.0)


def test_sensor_files_roundtrip(tmp_path):
    series = synthetic_series(WAVE, equispaced_taps(np.pi), n_samples=64)
    save_sensors(tmp_path, series)
    back = load_sensors(tmp_path)
    assert [s.x for s in back] == [s.x for s in series]
    for a, b in zip(series, back):
        assert np.array_equal(a.values, b.values)
    (tmp_path / "manifest.csv").write_text("name,pos\n")
    with pytest.raises(StructuralError):
        load_sensors(tmp_path)


def test_initialization_copies_xt_block():
    u = init_xavier(NetSpec("NetU", 3, 30, seed=4))
    rp = init_rp_network(u, RpConfig((0.5, 1.0, 1.5), 0.1, depth=2), seed=9)
    assert rp.layer_sizes == [8, 30, 30, 30, 1]
    assert np.array_equal(rp.weights[0][:, :2], u.weights[0])
    assert np.array_equal(rp.biases[0], u.biases[0])
    for a, b in zip(rp.weights[1:], u.weights[1:]):
        assert np.array_equal(a, b)
    bound = np.sqrt(6 / (8 + 30))
    assert np.all(np.abs(rp.weights[0][:, 2:]) <= bound)


def test_zero_taps_is_continued_training():
    ds = sample_heat(HEAT, seed=0)
    specs = {"NetU": NetSpec("NetU", 2, 10, seed=0), "NetG": NetSpec("NetG", 2, 10, seed=1)}
    cfg = TrainConfig(max_outer_iters=3, inner_iters_u=10, inner_iters_g=10, tol_stall=1e-15)
    u, g, rep = hierarchical_train(HEAT, ds, specs, cfg)
    cfg0 = RpConfig((), 0.1)
    assert init_rp_network(u, cfg0).equals(u)
    rp, _, rep_rp = train_netu_rp(u, g, ds, HEAT, cfg0, cfg)
    assert rep_rp.totals()[-1] <= rep.totals()[-1] * (1 + 1e-12)
    # one point, no taps: predict is the plain network
    assert predict(rp, cfg0, None, u, np.array([[1.0, 2.0]]), HEAT)[0] == forward(rp, np.array([[1.0, 2.0]]))[0]


def test_taps_enter_training_as_constants():
    ds = sample_heat(HEAT, seed=0)
    cfg = RpConfig((1.0, 2.0), 0.2)
    col = ds.collocation
    taps = build_rp_input(col[:, 0], col[:, 1], cfg, None, NET, HEAT)[:, 2:]
    data = LossData.build(ds, HEAT, build_rp_input(ds.labeled[:, 0], ds.labeled[:, 1], cfg, None, NET, HEAT)[:, 2:], taps)
    assert data.col_inputs.shape == (len(col), 4)
    rp = init_rp_network(init_xavier(NetSpec("NetU", 2, 8, seed=3)), cfg)
    g = init_xavier(NetSpec("NetG", 2, 8, seed=1))
    assert np.isfinite(loss_parts(rp, g, data, HEAT).total)


def test_predictions_at_t0_use_padded_taps():
    cfg = RpConfig((0.5, 2.0), 0.3)
    rp = init_rp_network(NET, cfg, seed=1)
    x = np.array([0.3, 1.3])
    out = predict(rp, cfg, None, NET, np.column_stack([x, [0.0, 0.0]]), HEAT)
    manual = forward(rp, np.column_stack([x, [0.0, 0.0], np.full(2, np.sin(0.25)), np.full(2, np.sin(1.0))]))
    assert np.array_equal(out, manual)


def test_predict_checks_layout():
    rp = init_rp_network(NET, RpConfig((0.5,), 0.3))
    with pytest.raises(StructuralError):
        predict(rp, RpConfig((0.5, 1.0), 0.3), None, NET, np.array([[1.0, 1.0]]), HEAT)


def test_masked_index_out_of_range():
    with pytest.raises(ConfigError):
        masked_sensor_experiment(WAVE, masked_idx=4, cfg=TrainConfig(max_outer_iters=0))
    with pytest.raises(ConfigError):
        masked_sensor_experiment(WAVE, sensor_locs=[1.0], masked_idx=None, cfg=TrainConfig(max_outer_iters=0))


def test_no_mask_scores_match_plain_evaluation():
    cfg = TrainConfig(max_outer_iters=1, inner_iters_u=5, inner_iters_g=5)
    specs = {"NetU": NetSpec("NetU", 2, 8, seed=0), "NetG": NetSpec("NetG", 2, 8, seed=1)}
    res = masked_sensor_experiment(WAVE, masked_idx=None, cfg=cfg, specs=specs, n_collocation=10)
    assert not any(s.masked for s in res.scores)
    s0 = synthetic_series(WAVE, equispaced_taps(np.pi))[0]
    pts = np.column_stack([np.full(s0.values.size, s0.x), s0.times])
    pred = predict(res.net_u_rp, res.rp_cfg, {i: s for i, s in enumerate(synthetic_series(WAVE, equispaced_taps(np.pi)))},
                   res.net_u, pts, WAVE)
    ref = evaluate(pred, s0.values)
    assert res.scores[0].full.rmse == ref.rmse
    assert res.scores[0].full.cc == ref.cc
    rows = res.rows()
    assert rows[0] == ["sensor", "x", "masked", "scope", "n", "rmse", "cc"]
    assert len(rows) == 1 + 2 * 4
