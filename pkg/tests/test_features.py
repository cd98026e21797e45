import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetloc.domain import RssScan, TowerInventory
from hetloc.features import (LinearMap, apply_linear_map, fit_linear_map,
                             pair_index, pair_scans, power_difference, power_ratio,
                             vectorize, vectorize_scans)


def test_vectorize_zero_fill(abc):
    s = RssScan("d", 0, (0, 0), (("A", -70), ("C", -90)))
    assert vectorize(s, abc).tolist() == [-70, 0, -90]
    full = RssScan("d", 0, (0, 0), (("A", -70), ("B", -80), ("C", -90)))
    assert vectorize(full, abc).tolist() == [-70, -80, -90]


def test_vectorize_drops_unknown(abc, caplog):
    s = RssScan("d", 0, (0, 0), (("Q", -70), ("Z", -80)))
    X, dropped = vectorize_scans([s], abc)
    assert X.tolist() == [[0, 0, 0]] and dropped == 2
    assert "dropped 2 readings" in caplog.text


def test_pair_index_matches_enumeration():
    for M in range(2, 31):
        for flat, (i, j) in enumerate(itertools.combinations(range(M), 2)):
            assert pair_index(i, j, M) == flat
    with pytest.raises(ValueError):
        pair_index(2, 1, 4)


def test_pairwise_order_matches_enumeration(rng):
    x = rng.uniform(-110, -40, 6)
    d = power_difference(x)
    for flat, (i, j) in enumerate(itertools.combinations(range(6), 2)):
        assert d[flat] == x[i] - x[j]


def test_power_ratio_examples():
    assert power_ratio([-60.0, -30.0]).tolist() == [2.0]
    assert power_ratio([-70.0, 0.0, -90.0]).tolist() == [0.0, 7 / 9, 0.0]
    assert power_ratio(np.full(25, -70.0)).shape == (300,)


def test_power_difference_examples():
    assert power_difference([-70.0, -80.0, -90.0]).tolist() == [10.0, 20.0, 10.0]
    assert power_difference([-70.0, -70.0]).tolist() == [0.0]
    assert power_difference([-70.0, 0.0, -90.0]).tolist() == [0.0, 20.0, 0.0]


def test_batched_equals_rowwise(rng):
    X = rng.uniform(-110, -40, (5, 7))
    X[X > -60] = 0
    for f in (power_ratio, power_difference):
        B = f(X)
        for n in range(5):
            assert np.array_equal(B[n], f(X[n]))


def test_difference_offset_invariance_randomized(rng):
    # integer dBm keeps x + c exact, so the comparison can be bitwise
    for _ in range(1000):
        M = rng.integers(2, 12)
        x = rng.integers(-120, -30, M).astype(float)
        heard = rng.random(M) < 0.7
        x[~heard] = 0
        c = float(rng.integers(-20, 21))
        shifted = np.where(heard, x + c, 0.0)
        if np.any(shifted[heard] == 0):
            continue
        assert np.array_equal(power_difference(shifted), power_difference(x))


@settings(max_examples=200)
@given(st.lists(st.integers(-120, -30), min_size=2, max_size=10),
       st.integers(-9, 9).filter(lambda g: g != 0))
def test_ratio_scale_invariance(vals, g):
    x = np.array(vals, dtype=float)
    assert np.array_equal(power_ratio(g * x), power_ratio(x))


@given(st.lists(st.sampled_from([0, -50, -75, -100, -61]), min_size=2, max_size=8))
def test_zero_preservation(vals):
    x = np.array(vals, dtype=float)
    M = len(x)
    r, d = power_ratio(x), power_difference(x)
    for i, j in itertools.combinations(range(M), 2):
        if x[i] == 0 or x[j] == 0:
            k = pair_index(i, j, M)
            assert r[k] == 0 and d[k] == 0


def test_fit_exact_line():
    slave = np.array([[1.0], [2.0], [3.0]])
    master = np.array([[3.0], [5.0], [7.0]])
    m = fit_linear_map(master, slave)
    assert m.slopes[0] == pytest.approx(2.0, abs=1e-12)
    assert m.intercepts[0] == pytest.approx(1.0, abs=1e-12)
    assert m.fitted[0] and m.counts[0] == 3


def test_fit_identity(rng):
    X = rng.uniform(-110, -40, (50, 4))
    m = fit_linear_map(X, X.copy())
    assert np.allclose(m.slopes, 1, atol=1e-9) and np.allclose(m.intercepts, 0, atol=1e-9)


def test_fit_noisy_against_polyfit():
    rng = np.random.default_rng(7)
    slave = rng.uniform(-110, -50, 1000)
    master = 0.9 * slave - 4 + rng.normal(0, 0.5, 1000)
    m = fit_linear_map(master[:, None], slave[:, None])
    slope, icept = np.polyfit(slave, master, 1)
    assert abs(m.slopes[0] - 0.9) < 0.05 and abs(m.intercepts[0] + 4) < 1.5
    assert m.slopes[0] == pytest.approx(slope, abs=1e-9)
    assert m.intercepts[0] == pytest.approx(icept, abs=1e-7)


def test_fit_uses_only_coheard_and_flags_sparse():
    master = np.array([[-70.0, -80.0], [-71.0, 0.0], [-72.0, -85.0]])
    slave = np.array([[-60.0, 0.0], [-61.0, -90.0], [-62.0, -75.0]])
    m = fit_linear_map(master, slave)
    assert m.fitted.tolist() == [True, False]
    assert m.counts.tolist() == [3, 1]
    assert (m.slopes[1], m.intercepts[1]) == (1.0, 0.0)


def test_fit_degenerate_variance_falls_back():
    m = fit_linear_map(np.array([[-70.0], [-75.0]]), np.array([[-60.0], [-60.0]]))
    assert not m.fitted[0] and m.slopes[0] == 1.0


def test_fit_rejects_empty():
    with pytest.raises(ValueError):
        fit_linear_map(np.zeros((0, 3)), np.zeros((0, 3)))


def test_apply_examples():
    m = LinearMap(np.array([2.0, 1.0]), np.array([1.0, 0.0]), np.array([3, 3]),
                  np.array([True, True]))
    assert apply_linear_map(m, [3.0, 0.0]).tolist() == [7.0, 0.0]
    x = np.array([-70.0, 0.0, -85.5])
    assert np.array_equal(apply_linear_map(LinearMap.identity(3), x), x)


def test_fit_then_apply_reconstructs_affine(rng):
    M = 6
    a = rng.uniform(0.7, 1.3, M)
    b = rng.uniform(-12, 12, M)
    master = rng.uniform(-110, -40, (40, M))
    master[rng.random((40, M)) < 0.3] = 0
    slave = np.where(master != 0, (master - b) / a, 0.0)
    m = fit_linear_map(master, slave)
    assert np.allclose(m.slopes, a, atol=1e-6) and np.allclose(m.intercepts, b, atol=1e-6)
    assert np.max(np.abs(apply_linear_map(m, slave) - master)) < 1e-6


def test_linear_map_dict_round_trip():
    m = LinearMap(np.array([1.5, 1.0]), np.array([-3.0, 0.0]), np.array([4, 0]),
                  np.array([True, False]))
    back = LinearMap.from_dict(m.to_dict())
    for f in ("slopes", "intercepts", "counts", "fitted"):
        assert np.array_equal(getattr(back, f), getattr(m, f))


def test_pair_scans_window():
    mk = lambda dev, t: RssScan(dev, t, (0, 0), (("A", -70),))
    master = [mk("m", t) for t in (10, 11, 12, 20)]
    slave = [mk("s", t) for t in (10, 12, 15, 30)]
    pairs = pair_scans(master, slave, window=2.0)
    assert [(m.timestamp, s.timestamp) for m, s in pairs] == [(10, 10), (12, 12)]
    assert pair_scans(master, slave, window=5.0)[-1][1].timestamp == 15
