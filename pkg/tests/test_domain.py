import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetloc.domain import Dataset, Grid, RssScan, TowerInventory


def brute_cell(grid, p):
    """Scan every cell for half-open containment; clamp first."""
    x0, y0, x1, y1 = grid.extent
    eps = 1e-9
    px = min(max(p[0], x0), x1 - eps)
    py = min(max(p[1], y0), y1 - eps)
    for k in range(grid.K):
        cx, cy = grid.cell_center(k)
        h = grid.cell_size / 2
        if cx - h <= px < cx + h and cy - h <= py < cy + h:
            return k
    raise AssertionError("no cell contains the point")


def nearest_center(grid, p):
    c = grid.centers()
    return int(np.argmin(np.hypot(*(c - np.asarray(p)).T)))


def test_cell_of_examples(grid2x2):
    assert grid2x2.cell_of((50, 50)) == 0
    assert grid2x2.cell_of((150, 150)) == 3
    assert grid2x2.cell_of((100, 0)) == 1
    assert brute_cell(grid2x2, (100, 0)) == 1


def test_cell_of_clamps_outside(grid2x2):
    assert grid2x2.cell_of((-30, -5)) == 0
    assert grid2x2.cell_of((999, 999)) == 3
    assert grid2x2.cell_of((250, 10)) == 1


def test_cell_center_examples(grid2x2):
    assert grid2x2.cell_center(0) == (50.0, 50.0)
    assert grid2x2.cell_center(3) == (150.0, 150.0)
    with pytest.raises(ValueError):
        grid2x2.cell_center(4)
    with pytest.raises(ValueError):
        grid2x2.cell_center(-1)


@pytest.mark.parametrize("cols,rows,size", [(2, 2, 100.0), (5, 4, 100.0), (7, 3, 37.5)])
def test_round_trip(cols, rows, size):
    g = Grid((10.0, -20.0), size, cols, rows)
    for c in range(g.K):
        assert g.cell_of(g.cell_center(c)) == c


@given(st.floats(-50, 600), st.floats(-50, 500))
def test_cell_of_matches_containment_oracle(x, y):
    g = Grid((0.0, 0.0), 100.0, 5, 4)
    assert g.cell_of((x, y)) == brute_cell(g, (x, y))


@given(st.floats(0, 499.999), st.floats(0, 399.999))
def test_interior_within_half_diagonal(x, y):
    g = Grid((0.0, 0.0), 100.0, 5, 4)
    c = g.cell_of((x, y))
    cx, cy = g.cell_center(c)
    assert math.hypot(x - cx, y - cy) <= g.cell_size * math.sqrt(2) / 2 + 1e-9
    # away from boundaries the containing cell is also the nearest center
    fx, fy = x % 100, y % 100
    if min(fx, 100 - fx, fy, 100 - fy) > 1e-6:
        assert c == nearest_center(g, (x, y))


def test_grid_covering():
    g = Grid.covering(500, 400, 100)
    assert (g.cols, g.rows, g.K) == (5, 4, 20)
    assert Grid.covering(510, 400, 100).cols == 6


def test_inventory_rules():
    inv = TowerInventory.from_ids(["C", "A", "B", "A"])
    assert inv.ids == ("A", "B", "C") and inv.M == 3
    assert inv.index_of("B") == 1 and inv.index_of("Z") is None
    with pytest.raises(ValueError):
        TowerInventory(("B", "A"))
    with pytest.raises(ValueError):
        TowerInventory(("A",))


def test_inventory_is_order_independent():
    scans = [RssScan("d", 1, (0, 0), (("X", -70), ("B", -80))),
             RssScan("d", 2, (0, 0), (("A", -60),))]
    a = TowerInventory.from_scans(scans)
    b = TowerInventory.from_scans(scans[::-1])
    assert a == b and a.ids == ("A", "B", "X")


def test_scan_limits():
    RssScan("d", 0, (0, 0), tuple((f"T{k}", -70.0) for k in range(7)))
    with pytest.raises(ValueError):
        RssScan("d", 0, (0, 0), tuple((f"T{k}", -70.0) for k in range(8)))
    with pytest.raises(ValueError):
        RssScan("d", 0, (0, 0), ())
    with pytest.raises(ValueError):
        RssScan("d", 0, (0, 0), (("A", -70), ("A", -71)))


def test_dataset_validation(abc, grid2x2):
    X = np.zeros((2, 3))
    ds = Dataset(abc, grid2x2, X, [0, 3], ("a", "b"), [[0, 0], [1, 1]])
    assert len(ds) == 2 and ds.width == 3
    assert not ds.X.flags.writeable
    with pytest.raises(ValueError):
        Dataset(abc, grid2x2, X, [0, 4], ("a", "b"), [[0, 0], [1, 1]])
    abcd = TowerInventory(("A", "B", "C", "D"))
    with pytest.raises(ValueError):
        Dataset(abcd, grid2x2, np.zeros((2, 4)), [0, 1], ("a", "b"),
                [[0, 0], [1, 1]], mode="ratio")
    ratio = Dataset(abcd, grid2x2, np.zeros((2, 6)), [0, 1], ("a", "b"),
                    [[0, 0], [1, 1]], mode="ratio")
    assert ratio.width == 6
    pair = Dataset(abc, grid2x2, np.zeros((2, 3)), [0, 1], ("a", "b"),
                   [[0, 0], [1, 1]], mode="difference")
    assert pair.width == 3  # C(3,2) == 3
    sub = ds.subset([1])
    assert len(sub) == 1 and sub.labels[0] == 3
