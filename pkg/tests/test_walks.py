import numpy as np
import pytest

import fractalrcm as fr
from fractalrcm.resistance import EdgeNetwork, TargetUnreachableError
from fractalrcm.streams import SeededStream
from fractalrcm.walks import _statistic

from conftest import interval_spec


def one_edge_field(w=2.0):
    g = fr.build_graph(interval_spec(), 0)
    return fr.ConductanceField(g, np.array([w]))


def triangle_field(weights=(1.0, 2.0, 3.0)):
    net = EdgeNetwork(3, [(0, 1), (0, 2), (1, 2)])
    return fr.ConductanceField(net, np.asarray(weights, dtype=float))


def test_config_validation():
    with pytest.raises(ValueError):
        fr.WalkConfig("lazy", 0, hit_set=[1])
    with pytest.raises(ValueError):
        fr.WalkConfig("vsrw", 0)  # nothing ever stops this walk
    with pytest.raises(ValueError):
        fr.WalkConfig("vsrw", 0, time_horizon=-1.0)
    with pytest.raises(ValueError):
        fr.WalkConfig("vsrw", 0, hit_set=[])


def test_mode_mismatch_rejected():
    field = one_edge_field()
    cfg = fr.WalkConfig("csrw", 0, hit_set=[1])
    with pytest.raises(ValueError):
        fr.simulate_vsrw(field, cfg, SeededStream(0, "w"))


def test_vsrw_single_edge_exponential():
    # rate w = 2 to the only neighbour: mean crossing 1/2
    field = one_edge_field(2.0)
    cfg = fr.WalkConfig("vsrw", 0, hit_set=[1])
    stream = SeededStream(17, "vsrw")
    times = np.array([
        fr.simulate_vsrw(field, cfg, stream.child(None, i)).elapsed_time
        for i in range(4000)
    ])
    se = times.std(ddof=1) / np.sqrt(len(times))
    assert abs(times.mean() - 0.5) < 3 * se
    oracle = fr.crossing_oracle(field, np.ones(2), 0, [1])
    assert oracle == pytest.approx(0.5, rel=1e-12)


def test_csrw_triangle_first_step():
    # from a corner, either neighbour is in the hit set: exactly one jump
    field = triangle_field((1.0, 1.0, 1.0))
    cfg = fr.WalkConfig("csrw", 0, hit_set=[1, 2])
    stream = SeededStream(23, "csrw")
    res = [fr.simulate_csrw(field, cfg, stream.child(None, i)) for i in range(2000)]
    assert all(r.jumps == 1 for r in res)
    times = np.array([r.elapsed_time for r in res])
    se = times.std(ddof=1) / np.sqrt(len(times))
    assert abs(times.mean() - 1.0) < 3 * se
    assert fr.crossing_oracle(field, field.nu(), 0, [1, 2]) == pytest.approx(1.0, rel=1e-12)


def test_crossing_oracle_weighted_triangle():
    field = triangle_field()
    assert fr.crossing_oracle(field, field.nu(), 0, [2]) == pytest.approx(16 / 11, rel=1e-12)


def test_csrw_mc_matches_oracle(gasket_g2):
    gen = SeededStream(31, "env").generator()
    field = fr.ConductanceField(gasket_g2, gen.uniform(0.5, 3.0, gasket_g2.n_edges))
    start, targets = int(gasket_g2.boundary[0]), gasket_g2.boundary[1:]
    oracle = fr.crossing_oracle(field, field.nu(), start, targets)
    cfg = fr.WalkConfig("csrw", start, hit_set=targets)
    stream = SeededStream(31, "walk")
    times = np.array([
        fr.simulate_csrw(field, cfg, stream.child(None, i)).elapsed_time
        for i in range(1500)
    ])
    z = (times.mean() - oracle) / (times.std(ddof=1) / np.sqrt(len(times)))
    assert abs(z) < 4.0


def test_vsrw_mc_matches_oracle(gasket_g2):
    gen = SeededStream(33, "env").generator()
    field = fr.ConductanceField(gasket_g2, gen.uniform(0.5, 3.0, gasket_g2.n_edges))
    start, targets = int(gasket_g2.boundary[0]), gasket_g2.boundary[1:]
    oracle = fr.crossing_oracle(field, np.ones(gasket_g2.n_vertices), start, targets)
    cfg = fr.WalkConfig("vsrw", start, hit_set=targets)
    stream = SeededStream(33, "walk")
    times = np.array([
        fr.simulate_vsrw(field, cfg, stream.child(None, i)).elapsed_time
        for i in range(1500)
    ])
    z = (times.mean() - oracle) / (times.std(ddof=1) / np.sqrt(len(times)))
    assert abs(z) < 4.0


def test_vsrw_and_csrw_share_jump_chain(gasket_g2):
    gen = SeededStream(37, "env").generator()
    field = fr.ConductanceField(gasket_g2, gen.uniform(0.5, 3.0, gasket_g2.n_edges))
    start, targets = int(gasket_g2.boundary[0]), gasket_g2.boundary[1:]
    a = fr.simulate_vsrw(field, fr.WalkConfig("vsrw", start, hit_set=targets,
                                              skeleton_stride=1, collapse=False),
                         SeededStream(5, "shared"))
    b = fr.simulate_csrw(field, fr.WalkConfig("csrw", start, hit_set=targets,
                                              skeleton_stride=1, collapse=False),
                         SeededStream(5, "shared"))
    assert np.array_equal(a.skeleton[1], b.skeleton[1])
    assert a.jumps == b.jumps and a.exit_vertex == b.exit_vertex


def test_budget_zero_stays_put():
    field = one_edge_field()
    res = fr.simulate_vsrw(field, fr.WalkConfig("vsrw", 0, jump_budget=0),
                           SeededStream(0, "w"))
    assert res.jumps == 0 and res.exit_vertex == 0 and res.elapsed_time == 0.0


def test_start_in_hit_set():
    field = one_edge_field()
    res = fr.simulate_vsrw(field, fr.WalkConfig("vsrw", 1, hit_set=[1]),
                           SeededStream(0, "w"))
    assert res.jumps == 0 and res.elapsed_time == 0.0 and res.exit_vertex == 1


def test_unreachable_hit_set_raises():
    net = EdgeNetwork(4, [(0, 1), (2, 3)])
    field = fr.ConductanceField(net, np.ones(2))
    with pytest.raises(TargetUnreachableError):
        fr.simulate_vsrw(field, fr.WalkConfig("vsrw", 0, hit_set=[3]),
                         SeededStream(0, "w"))
    with pytest.raises(TargetUnreachableError):
        fr.crossing_oracle(field, np.ones(4), 0, [3])


def test_statistic_parsing():
    x = np.arange(1.0, 101.0)
    assert _statistic(x, "median") == pytest.approx(np.median(x))
    assert _statistic(x, "mean") == pytest.approx(x.mean())
    # q:P takes a percentile in [0, 100]
    assert _statistic(x, "q:25") == pytest.approx(np.percentile(x, 25))
    with pytest.raises(ValueError):
        _statistic(x, "mode")
    with pytest.raises(ValueError):
        _statistic(x, "q:150")


def test_oracle_mode_decimation(gasket):
    rep = fr.scaling_experiment(gasket, None, "csrw", [1, 2, 3], trials=1)
    assert rep.trials == 0
    # unit-weight crossing times quintuple per level, exactly
    assert rep.values[0] == pytest.approx(5.0, rel=1e-9)
    for a, b in zip(rep.values, rep.values[1:]):
        assert b / a == pytest.approx(5.0, rel=1e-9)
    assert rep.fitted_log_slope == pytest.approx(np.log(5.0), abs=1e-9)
    assert rep.c_hat == pytest.approx(1.0, rel=1e-9)


def test_scaling_experiment_reproducible_across_threads(gasket):
    law = fr.ConductanceLaw(alpha=0.5)
    a = fr.scaling_experiment(gasket, law, "vsrw", [1, 2, 3], 30, rng=6, threads=1)
    b = fr.scaling_experiment(gasket, law, "vsrw", [1, 2, 3], 30, rng=6, threads=3)
    assert a.rows == b.rows
    assert np.array_equal(a.values, b.values)


def test_scaling_experiment_level_checks(gasket):
    law = fr.ConductanceLaw(alpha=0.5)
    with pytest.raises(ValueError):
        fr.scaling_experiment(gasket, law, "vsrw", [1, 2], 10)
    with pytest.raises(ValueError):
        fr.scaling_experiment(gasket, law, "vsrw", [0, 1, 2], 10)
    with pytest.raises(ValueError):
        fr.scaling_experiment(gasket, law, "vsrw", [1, 2, 2], 10)


def test_predicted_slopes(gasket):
    law = fr.ConductanceLaw(alpha=0.5)
    v = fr.scaling_experiment(gasket, law, "vsrw", [1, 2, 3], 5, rng=0)
    c = fr.scaling_experiment(gasket, law, "csrw", [1, 2, 3], 5, rng=0)
    assert v.predicted_log_slope == pytest.approx(np.log(5.0), rel=1e-12)
    # csrw under an alpha = 1/2 tail: time factor rho * N^(1/alpha) = 15
    assert c.predicted_log_slope == pytest.approx(np.log(15.0), rel=1e-12)
