import numpy as np
import pytest

import fractalrcm as fr
from fractalrcm.homogenize import field_kernel_on_v0
from fractalrcm.streams import SeededStream


def test_constant_law_c_hat_is_exact(gasket, gasket_fp):
    # flat environments differ from q_star = 1/2 weights by the factor 2
    law = fr.ConductanceLaw(family="constant", lower_bound=1.0)
    est = fr.estimate_c(gasket, gasket_fp, law, n_ref=2, trials=100, rng=0)
    assert est.c_hat == pytest.approx(2.0, rel=1e-10)
    assert est.spread < 1e-10


def test_constant_law_distance_vanishes(gasket, gasket_fp):
    law = fr.ConductanceLaw(family="constant", lower_bound=1.0)
    rep = fr.run_homogenization(gasket, law, [1, 2], 5, rng=0, result=gasket_fp)
    assert np.all(rep.medians <= 1e-9)
    assert rep.passed


def test_q_pattern_environment_is_exact(gasket, gasket_fp):
    # an environment equal to the fixed point itself homogenizes with c = 1
    law = fr.ConductanceLaw(lower_bound=0.25,
                            cell_sampler=lambda gen, m: np.full(m, 0.5))
    est = fr.estimate_c(gasket, gasket_fp, law, n_ref=2, trials=100, rng=0)
    assert est.c_hat == pytest.approx(1.0, rel=1e-10)


def test_random_resistance_scales_inversely(gasket, gasket_fp):
    g = fr.build_graph(gasket, 2)
    gen = SeededStream(1, "env").generator()
    field = fr.ConductanceField(g, gen.uniform(1.0, 4.0, g.n_edges))
    base = fr.random_resistance(gasket, 2, gasket_fp, field, c_hat=1.0,
                                subset=g.boundary)
    double = fr.random_resistance(gasket, 2, gasket_fp,
                                  field.replace(2.0 * field.weights), c_hat=1.0,
                                  subset=g.boundary)
    assert np.allclose(double.matrix, base.matrix / 2, rtol=1e-10)
    halved_c = fr.random_resistance(gasket, 2, gasket_fp, field, c_hat=2.0,
                                    subset=g.boundary)
    assert np.allclose(halved_c.matrix, 2 * base.matrix, rtol=1e-10)


def test_random_resistance_level_mismatch(gasket, gasket_fp):
    g = fr.build_graph(gasket, 2)
    field = fr.ConductanceField(g, np.ones(g.n_edges))
    with pytest.raises(ValueError):
        fr.random_resistance(gasket, 3, gasket_fp, field)


def test_field_kernel_on_v0_matches_pairwise(gasket):
    g = fr.build_graph(gasket, 2)
    gen = SeededStream(2, "env").generator()
    field = fr.ConductanceField(g, gen.uniform(0.5, 3.0, g.n_edges))
    a = field_kernel_on_v0(field).matrix
    b = fr.pairwise_resistance(field, g.boundary).matrix
    assert np.allclose(a, b, atol=1e-10)


def test_estimate_c_stable_across_reference_level(gasket, gasket_fp):
    law = fr.ConductanceLaw(alpha=0.5)
    a = fr.estimate_c(gasket, gasket_fp, law, n_ref=2, trials=200, rng=0)
    b = fr.estimate_c(gasket, gasket_fp, law, n_ref=3, trials=200, rng=0)
    assert a.c_hat == pytest.approx(b.c_hat, rel=0.25)
    assert a.spread > 0


def test_estimate_c_argument_checks(gasket, gasket_fp):
    law = fr.ConductanceLaw(alpha=0.5)
    with pytest.raises(ValueError):
        fr.estimate_c(gasket, gasket_fp, law, n_ref=1, trials=100)
    with pytest.raises(ValueError):
        fr.estimate_c(gasket, gasket_fp, law, n_ref=2, trials=50)


def test_run_homogenization_report(gasket, gasket_fp):
    law = fr.ConductanceLaw(alpha=0.5)
    rep = fr.run_homogenization(gasket, law, [1, 2, 3], 40, rng=0, result=gasket_fp)
    assert rep.levels == [1, 2, 3]
    assert rep.medians.shape == (3,)
    assert np.all(np.isfinite(rep.medians))
    assert np.all(rep.upper_quartiles >= rep.medians)
    assert len(rep.rows) == 3 * 40
    # sup distance over the full vertex set is recorded at small levels
    assert all(np.isfinite(r[3]) for r in rep.rows)
    # the common-set distance is a sub-maximum of the full-set one
    assert all(r[2] <= r[3] + 1e-8 for r in rep.rows)


def test_run_homogenization_thread_invariance(gasket, gasket_fp):
    law = fr.ConductanceLaw(alpha=0.5)
    a = fr.run_homogenization(gasket, law, [1, 2], 30, rng=4, threads=3, result=gasket_fp)
    b = fr.run_homogenization(gasket, law, [1, 2], 30, rng=4, result=gasket_fp)
    assert a.rows == b.rows
    assert a.c_estimate.c_hat == b.c_estimate.c_hat


def test_run_homogenization_argument_checks(gasket, gasket_fp):
    law = fr.ConductanceLaw(alpha=0.5)
    with pytest.raises(ValueError):
        fr.run_homogenization(gasket, law, [2], 10, result=gasket_fp)
    with pytest.raises(ValueError):
        fr.run_homogenization(gasket, law, [1, 2], 0, result=gasket_fp)
