import numpy as np
import pytest

import fractalrcm as fr
from fractalrcm.ifs import InvalidFractalError
from fractalrcm.specfile import ConfigError, load_fractal, parse_fractal_file

from conftest import interval_spec


def test_gasket_boundary_is_three_corners(gasket):
    v0 = gasket.boundary_points()
    assert v0.shape == (3, 2)
    expected = np.array([[0.0, 0.0], [0.5, np.sqrt(3) / 2], [1.0, 0.0]])
    assert np.allclose(v0, expected, atol=1e-12)


def test_vicsek_center_is_not_essential(vicsek):
    # the middle map's fixed point meets no other cell's fixed points
    v0 = vicsek.boundary_points()
    assert v0.shape == (4, 2)
    center = np.array([0.5, 0.5])
    assert all(np.linalg.norm(p - center) > 0.1 for p in v0)


def test_interval_boundary():
    v0 = interval_spec().boundary_points()
    assert sorted(v0[:, 0].tolist()) == [0.0, 1.0]


def test_single_map_rejected():
    with pytest.raises(InvalidFractalError):
        fr.IFSSpec(1, 2.0, [(np.eye(1), np.zeros(1))])


def test_nonorthogonal_map_rejected():
    shear = np.array([[1.0, 0.3], [0.0, 1.0]])
    with pytest.raises(InvalidFractalError):
        fr.IFSSpec(2, 2.0, [(np.eye(2), np.zeros(2)), (shear, np.ones(2))])


def test_gasket_counts(gasket):
    # |V_n| = (3^(n+1) + 3) / 2, |E_n| = 3^(n+1), cells = 3^n
    for n in range(4):
        g = fr.build_graph(gasket, n)
        assert g.n_vertices == (3 ** (n + 1) + 3) // 2
        assert g.n_edges == 3 ** (n + 1)
        assert len(g.cells) == 3**n


def test_vicsek_counts(vicsek):
    expected_v = {0: 4, 1: 16, 2: 76}
    for n, nv in expected_v.items():
        g = fr.build_graph(vicsek, n)
        assert g.n_vertices == nv
        assert g.n_edges == 6 * 5**n


def test_vertices_nest(gasket):
    # V_n sits inside V_{n+1} as a point set
    g2 = fr.build_graph(gasket, 2)
    g3 = fr.build_graph(gasket, 3)
    ids = g3.locate(g2.coords)
    assert np.allclose(g3.coords[ids], g2.coords, atol=1e-12)


def test_boundary_ids_locate_v0(gasket, gasket_g2):
    v0 = gasket.boundary_points()
    assert np.allclose(gasket_g2.coords[gasket_g2.boundary], v0, atol=1e-12)


def test_locate_miss_raises(gasket_g2):
    with pytest.raises(KeyError):
        gasket_g2.locate(np.array([[0.123, 0.456]]))


def test_cell_index_is_lexicographic(gasket_g2):
    words = [w for w, _ in gasket_g2.cells]
    assert words == sorted(words)
    for w, _ in gasket_g2.cells:
        assert gasket_g2.cells[gasket_g2.cell_index(w)][0] == w


def test_edges_stay_within_cells(gasket_g2):
    # finite ramification: each edge joins two vertices of one cell
    for (a, b), ci in zip(gasket_g2.edges, gasket_g2.edge_cell):
        _, vids = gasket_g2.cells[ci]
        assert a in vids and b in vids


def test_build_graph_deterministic(gasket):
    a = fr.build_graph(gasket, 3)
    b = fr.build_graph(gasket, 3)
    assert np.array_equal(a.coords, b.coords)
    assert np.array_equal(a.edges, b.edges)


def test_nesting_axiom_passes(gasket, vicsek):
    for spec in (gasket, vicsek):
        rep = fr.verify_nesting(spec, 2)
        assert rep.passed, rep.violations


def test_symmetry_axiom_passes(gasket, vicsek):
    for spec in (gasket, vicsek):
        for n in (1, 2):
            rep = fr.verify_symmetry(spec, n)
            assert rep.passed, rep.violations


def test_symmetry_catches_perturbed_gasket(gasket):
    maps = [(m.matrix, m.shift) for m in gasket.maps]
    maps[2] = (maps[2][0], maps[2][1] + np.array([0.07, 0.0]))
    bad = fr.IFSSpec(2, 2.0, maps)
    rep = fr.verify_symmetry(bad, 2)
    assert not rep.passed
    assert len(rep.violations) > 0


def test_overlapping_maps_fail_nesting():
    # three interval maps with ratio 1/2 overlap on open sets
    maps = [(np.eye(1), np.array([s])) for s in (0.0, 0.25, 0.5)]
    bad = fr.IFSSpec(1, 2.0, maps)
    rep = fr.verify_nesting(bad, 1)
    assert not rep.passed


def test_sample_self_similar_lands_on_vertices(gasket):
    # a depth-d draw is psi_word(0), a vertex of the level-d graph
    gen = np.random.default_rng(0)
    g = fr.build_graph(gasket, 3)
    pts = np.array([fr.sample_self_similar(gasket, 3, gen) for _ in range(50)])
    ids = g.locate(pts)
    assert len(ids) == 50
    assert np.allclose(g.coords[ids], pts, atol=1e-12)


def test_sample_self_similar_uniform_over_maps(gasket):
    # depth-1 draws land on the three cell anchors with equal frequency
    gen = np.random.default_rng(1)
    pts = np.array([fr.sample_self_similar(gasket, 1, gen) for _ in range(3000)])
    anchors = np.array([m.shift for m in gasket.maps])
    counts = np.array([
        np.sum(np.all(np.abs(pts - a) < 1e-12, axis=1)) for a in anchors
    ])
    assert counts.sum() == 3000
    assert np.all(np.abs(counts - 1000) < 150)  # ~4.5 sigma for p = 1/3


def test_preset_names():
    names = fr.preset_names()
    assert "sierpinski-gasket" in names and "vicsek-2d" in names
    with pytest.raises(KeyError):
        fr.preset("no-such-fractal")


def test_fractal_file_roundtrip(tmp_path, gasket):
    p = tmp_path / "tri.frac"
    lines = ["dim = 2", "beta = 2.0"]
    for m in gasket.maps:
        u = " ".join(repr(float(x)) for x in m.matrix.ravel())
        s = " ".join(repr(float(x)) for x in m.shift)
        lines.append(f"map U = {u} ; gamma = {s}")
    p.write_text("\n".join(lines) + "\n")
    spec = parse_fractal_file(p)
    assert spec.n_maps == 3
    assert np.allclose(spec.boundary_points(), gasket.boundary_points(), atol=1e-12)


def test_fractal_file_preset_line(tmp_path):
    p = tmp_path / "v.frac"
    p.write_text("preset = vicsek-2d\n")
    spec = load_fractal(str(p))
    assert spec.n_maps == 5


def test_fractal_file_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.frac"
    p.write_text("dim = 2\nbeta = 2.0\nmap U = 1 0 0 1 ; gamma = 0 0\nmap U = 1 0 0 1\n")
    with pytest.raises(ConfigError) as ei:
        parse_fractal_file(p)
    assert ei.value.line == 4


def test_fractal_file_rejects_unknown_key(tmp_path):
    p = tmp_path / "bad.frac"
    p.write_text("dim = 1\nbeta = 2.0\ncolor = blue\nmap U = 1 ; gamma = 0\nmap U = 1 ; gamma = 0.5\n")
    with pytest.raises(ConfigError):
        parse_fractal_file(p)


def test_load_fractal_preset_passthrough():
    spec = load_fractal("sierpinski-gasket")
    assert spec.preset_name == "sierpinski-gasket"
