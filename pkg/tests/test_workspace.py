import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tetherperturb.core import ForceCommand, Geometry, allocate_tensions
from tetherperturb.errors import Infeasible, ParticipantOutsideTreadmill
from tetherperturb.workspace import (
    grid_centres,
    is_omnidirectional_feasible,
    render_svg,
    workspace_map,
)

GEOM = Geometry()


@pytest.fixture(scope="module")
def maps():
    return {f: workspace_map(f) for f in (100.0, 200.0, 300.0, 400.0)}


def test_centre_feasible_at_300n():
    assert is_omnidirectional_feasible((0.0, 0.0), 300.0)


def test_zero_magnitude_always_feasible():
    for p in [(0.9, 1.625), (-0.9, -1.625), (0.0, 0.0)]:
        assert is_omnidirectional_feasible(p, 0.0)


def test_near_front_right_corner_infeasible_at_400n():
    assert not is_omnidirectional_feasible((0.85, 1.575), 400.0)


def test_feasibility_agrees_with_allocator():
    p, mag = (0.3, -0.7), 250.0
    expected = True
    for k in range(36):
        try:
            allocate_tensions(ForceCommand(mag, 10.0 * k), GEOM, p)
        except Infeasible:
            expected = False
    assert is_omnidirectional_feasible(p, mag) == expected


def test_off_treadmill_propagates():
    with pytest.raises(ParticipantOutsideTreadmill):
        is_omnidirectional_feasible((2.0, 0.0), 100.0)


@pytest.mark.parametrize("kwargs", [{"n_directions": 3}, {"magnitude": -1.0}])
def test_bad_arguments(kwargs):
    args = {"pos": (0.0, 0.0), "magnitude": 100.0, **kwargs}
    with pytest.raises(ValueError):
        is_omnidirectional_feasible(**args)


def test_zero_magnitude_covers_treadmill():
    assert workspace_map(0.0).area == pytest.approx(5.85)


def test_resolution_bounds():
    with pytest.raises(ValueError):
        workspace_map(100.0, resolution=0.6)
    with pytest.raises(ValueError):
        workspace_map(100.0, resolution=0.0)


def test_frozen_default_areas(maps):
    # computed once with the default geometry, 0.05 m grid and 36 directions
    assert [round(maps[f].area, 3) for f in (100.0, 200.0, 300.0, 400.0)] == [2.805, 2.185, 1.385, 0.425]


def test_area_is_count_times_cell(maps):
    m = maps[200.0]
    assert m.area == pytest.approx(m.feasible.sum() * 0.05**2)
    assert m.area_rounded == round(m.area, 2)


def test_feasible_cells_lie_on_treadmill(maps):
    for x, y, ok in maps[100.0].cells():
        if ok:
            assert GEOM.contains((x, y))


def test_monotone_nesting(maps):
    forces = sorted(maps)
    for lo, hi in zip(forces, forces[1:]):
        assert not np.any(maps[hi].feasible & ~maps[lo].feasible)


def test_left_right_symmetry(maps):
    for m in maps.values():
        assert np.array_equal(m.feasible, m.feasible[::-1, :])


def test_grid_is_mirror_exact():
    xs, ys = grid_centres(GEOM, 0.05)
    assert np.array_equal(xs, -xs[::-1])
    assert np.array_equal(ys, -ys[::-1])


def test_grid_convergence_at_300n(maps):
    coarse = workspace_map(300.0, resolution=0.10)
    assert abs(coarse.area - maps[300.0].area) < 0.15


def test_more_directions_never_add_cells():
    few = workspace_map(300.0, 0.1, n_directions=8)
    many = workspace_map(300.0, 0.1, n_directions=64)
    assert not np.any(many.feasible & ~few.feasible)


def test_map_matches_pointwise_predicate():
    m = workspace_map(300.0, resolution=0.3)
    for x, y, ok in m.cells():
        assert ok == is_omnidirectional_feasible((x, y), 300.0)


def test_map_is_deterministic():
    a = workspace_map(250.0, 0.1)
    b = workspace_map(250.0, 0.1)
    assert np.array_equal(a.feasible, b.feasible)


def test_csv_and_svg(maps):
    text = maps[400.0].to_csv()
    lines = text.splitlines()
    assert lines[0] == "x_m,y_m,feasible"
    assert len(lines) == maps[400.0].feasible.size + 1
    assert sum(int(line.rsplit(",", 1)[1]) for line in lines[1:]) == int(maps[400.0].feasible.sum())
    svg = render_svg(maps[400.0], GEOM)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert f"area_m2={maps[400.0].area:.2f}" in maps[400.0].summary()


@given(st.floats(-0.9, 0.9), st.floats(-1.625, 1.625), st.floats(10.0, 400.0), st.floats(1.0, 100.0))
def test_pointwise_monotone_in_magnitude(x, y, f, df):
    if is_omnidirectional_feasible((x, y), f + df):
        assert is_omnidirectional_feasible((x, y), f)

