import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dirbench.analysis import (
    ApproximationSet,
    common_def_magnitude,
    dominated_flags,
    export_report,
    front_hypervolume,
    hypervolumes_from_csv,
    median_index,
    read_fronts_csv,
    reevaluate_set,
    reference_point,
    render_svg,
    select_highlights,
    select_median_run,
    similarity_range,
)
from dirbench.analysis.metrics import locality_probe
from dirbench.bspline import BSplineEvaluator, BSplineGrid
from dirbench.imaging import DeformationField
from dirbench.mesh import MeshEvaluator, build_mesh
from dirbench.pareto import dominates
from dirbench.storage import read_archive, write_archive


def field(vectors):
    v = np.asarray(vectors, dtype=float)
    return DeformationField(v, (1.0,) * (v.ndim - 1), (0.0,) * (v.ndim - 1))


def brute_force_magnitude(v):
    dims = v.shape[:-1]
    total = 0.0
    for p in np.ndindex(*dims):
        nbrs = []
        for k in range(len(dims)):
            for step in (-1, 1):
                q = list(p)
                q[k] += step
                if 0 <= q[k] < dims[k]:
                    nbrs.append(tuple(q))
        total += sum(np.sum((v[p] - v[q]) ** 2) for q in nbrs) / len(nbrs)
    return total


def test_magnitude_hand_examples():
    v = np.zeros((2, 2, 2))
    v[:, 1] = [1.0, 0.0]
    assert common_def_magnitude(field(v)) == 2.0
    assert common_def_magnitude(field(np.full((5, 4, 2), 3.5))) == 0.0


def test_magnitude_matches_brute_force():
    rng = np.random.default_rng(0)
    for shape in [(5, 6, 2), (3, 4, 5, 3), (1, 4, 2)]:
        v = rng.normal(size=shape)
        assert common_def_magnitude(field(v)) == pytest.approx(brute_force_magnitude(v), rel=1e-12)


@given(arrays(np.float64, (4, 5, 2), elements=st.floats(-5, 5)),
       arrays(np.float64, (2,), elements=st.floats(-5, 5)))
def test_magnitude_translation_invariant_and_zero_iff_constant(v, c):
    base = common_def_magnitude(field(v))
    assert common_def_magnitude(field(v + c)) == pytest.approx(base, rel=1e-9, abs=1e-9)
    constant = bool(np.all(v == v[0, 0]))
    assert (base == 0.0) == constant


def make_set(objs, approach="bspline-mo", rep=0):
    objs = np.asarray(objs, dtype=float).reshape(-1, 2)
    grid = BSplineGrid((4, 4), (3.0, 3.0), (0.0, 0.0), (3.0, 3.0))
    params = [np.zeros(grid.n_vars) for _ in objs]
    s = ApproximationSet(approach, rep, rep, grid, params, objs.copy())
    s.reevaluated = objs.copy()
    s.valid = np.ones(len(objs), dtype=bool)
    s.dominated = dominated_flags(objs)
    return s


def test_dominated_flag_examples():
    assert list(dominated_flags([(1, 2), (2, 1), (2, 2)])) == [False, False, True]
    assert list(dominated_flags([(3, 3)])) == [False]


@given(arrays(np.float64, (12, 2), elements=st.integers(0, 4).map(float)))
def test_dominated_flags_consistent(objs):
    flags = dominated_flags(objs)
    free = np.nonzero(~flags)[0]
    for i in free:
        for j in free:
            assert not dominates(objs[i], objs[j])
    for i in np.nonzero(flags)[0]:
        assert any(dominates(objs[j], objs[i]) for j in range(len(objs)))


def test_median_rules():
    assert median_index([3, 1, 2]) == 2
    assert median_index([1, 2, 3, 4]) == 1
    assert median_index([7.0] * 10) == 0
    fronts = [np.array([[1.0, 1.0]]), np.array([[0.5, 0.5]]), np.array([[2.0, 2.0]])]
    assert select_median_run(fronts) == 0


def test_highlight_rules():
    trip = select_highlights([(0, 1), (0.5, 0.5), (1, 0)])
    assert trip.trade_off == 1 and trip.best_magnitude == 2 and trip.best_similarity == 0
    two = select_highlights([(1, 4), (3, 2)])
    assert two.trade_off == 0
    assert select_highlights([(1, 5), (2, 2), (5, 1)]).trade_off == 1
    single = select_highlights([(2, 2), (3, 3)])
    assert (single.best_magnitude, single.best_similarity, single.trade_off) == (0, 0, 0)
    ties = select_highlights([(1, 3), (1, 3), (2, 1)])
    assert ties.best_similarity == 0


def test_reference_rule():
    ref = reference_point([[(1, 4), (2, 2)], [(3, 1), (9, 9)]])
    np.testing.assert_allclose(ref, [3.3, 4.4])
    np.testing.assert_array_equal(reference_point([]), [1.0, 1.0])


def test_similarity_range_and_probe():
    assert similarity_range([(1, 5), (4, 1), (5, 5)]) == 3.0
    v = np.zeros((9, 9, 2))
    v[0, 0] = [3.0, 4.0]
    probe = locality_probe(field(v), (4.0, 4.0), 4.5)
    outside = sum(1 for i in range(9) for j in range(9) if (i - 4) ** 2 + (j - 4) ** 2 > 4.5 ** 2)
    assert probe == pytest.approx(5.0 / outside)


def test_reevaluate_set_of_one_and_invalid(blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 5)
    ev = BSplineEvaluator(blob_problem, grid)
    g = ev.random_genotype(np.random.default_rng(0))
    s = ApproximationSet("bspline-mo", 0, 0, grid, [g], np.array([ev.evaluate(g).objectives]))
    reevaluate_set(s, blob_problem)
    assert s.valid.tolist() == [True] and s.dominated.tolist() == [False]
    broken = ApproximationSet("bspline-mo", 0, 0, grid, [g, g[:3]], np.zeros((2, 2)))
    reevaluate_set(broken, blob_problem)
    assert broken.valid.tolist() == [True, False]
    assert len(broken.front()) == 1


def test_mesh_similarity_unchanged_by_reevaluation(blob_problem):
    mesh = build_mesh(blob_problem.target, 30)
    ev = MeshEvaluator(blob_problem, mesh)
    rng = np.random.default_rng(3)
    sols = [ev.evaluate(ev.random_genotype(rng)) for _ in range(5)]
    s = ApproximationSet.from_members("mesh-mo", 0, 0, mesh, sols)
    reevaluate_set(s, blob_problem, blob_problem.samples)
    np.testing.assert_allclose(s.reevaluated[:, 0], s.original[:, 0], rtol=1e-6, atol=1e-9)


def test_archive_round_trip(tmp_path, blob_problem):
    grid = BSplineGrid.for_image(blob_problem.target, 5)
    ev = BSplineEvaluator(blob_problem, grid)
    rng = np.random.default_rng(1)
    sols = [ev.evaluate(ev.random_genotype(rng)) for _ in range(4)]
    write_archive(tmp_path / "a", "bspline-mo", sols, grid, {"repetition": 2, "seed": 9})
    manifest, model, params, objs = read_archive(tmp_path / "a")
    assert manifest["repetition"] == 2 and model.control_dims == grid.control_dims
    expected = sorted((tuple(s.objectives), tuple(s.genotype)) for s in sols)
    assert [tuple(o) for o in objs] == [e[0] for e in expected]
    for p, e in zip(params, expected):
        np.testing.assert_array_equal(p, e[1])
    aset = ApproximationSet.from_archive(tmp_path / "a")
    assert (aset.approach, aset.repetition, aset.seed, len(aset)) == ("bspline-mo", 2, 9, 4)


def test_export_empty(tmp_path):
    export_report([], tmp_path)
    assert (tmp_path / "fronts.csv").read_text().count("\n") == 1
    svg = (tmp_path / "fronts.svg").read_text()
    assert "<line" in svg and "<circle" not in svg
    assert json.loads((tmp_path / "highlights.json").read_text())["approaches"] == {}


def test_export_rows_and_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    sets = [make_set(rng.uniform(0.1, 3.0, size=(n, 2)), a, r)
            for (a, r, n) in [("bspline-mo", 0, 7), ("bspline-mo", 1, 4), ("mesh-mo", 0, 9)]]
    result = export_report(sets, tmp_path)
    rows = read_fronts_csv(tmp_path / "fronts.csv")
    assert len(rows) == 20
    again = hypervolumes_from_csv(tmp_path / "fronts.csv", result["reference"])
    for s, hv in zip(sets, result["hypervolumes"]):
        assert abs(again[(s.approach, s.repetition)] - hv) <= 1e-9
    with open(tmp_path / "hypervolume.csv") as fh:
        table = fh.read().splitlines()
    assert len(table) == 4
    roles = [r["highlight_role"] for r in rows if r["highlight_role"]]
    assert any("trade_off" in r for r in roles)


def test_svg_colors_and_shading():
    a = make_set([(1, 3), (2, 2), (3, 3)], "bspline-mo")
    b = make_set([(1, 1)], "mesh-mo")
    svg = render_svg([a, b])
    assert svg.count('fill-opacity="0.25"') == 1
    assert svg.count('fill-opacity="0.9"') == 3
    assert "#1f77b4" in svg and "#d62728" in svg
    assert "bspline-mo" in svg and "mesh-mo" in svg


def test_front_hypervolume_ignores_dominated_and_nonfinite():
    assert front_hypervolume([(1, 3), (2, 2), (3, 1), (3, 3), (np.inf, 0)], (4, 4)) == 6.0
