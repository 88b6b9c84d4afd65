import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from billoc.classical import ChaoticGrid
from billoc.errors import DimensionMismatch
from billoc.husimi import (
    HusimiGrid,
    classical_threshold,
    classify,
    coherent_overlap,
    entropy_A,
    husimi_grid,
    information_entropy,
    localization_record,
    nipr,
    overlap_index,
    window_average,
)
from billoc.quantum import EigenstateRecord, circle_oracle

N = 400 * 400


def _uniform():
    return np.full((400, 400), 1.0 / N)


def _single():
    H = np.zeros((400, 400))
    H[17, 230] = 1.0
    return H


def _half():
    H = np.zeros((400, 400))
    H[:, :200] = 2.0 / N
    return H


def test_measures_analytic():
    assert entropy_A(_uniform()) == pytest.approx(1.0, abs=1e-12)
    assert nipr(_uniform()) == pytest.approx(1.0, abs=1e-12)
    assert entropy_A(_single()) == pytest.approx(1.0 / N, abs=1e-12)
    assert 1.0 / N == pytest.approx(6.25e-6)
    assert nipr(_single()) == pytest.approx(1.0 / N, abs=1e-12)
    assert entropy_A(_half()) == pytest.approx(0.5, abs=1e-12)
    assert nipr(_half()) == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (20, 20), elements=st.floats(0, 1)))
def test_measure_bounds(raw):
    if raw.sum() <= 0:
        return
    H = raw / raw.sum()
    n = H.size
    A, P = entropy_A(H), nipr(H)
    assert 1.0 / n - 1e-12 <= A <= 1 + 1e-12
    assert 1.0 / n - 1e-12 <= P <= 1 + 1e-12
    assert P <= math.e * A + 1e-12
    # the participation ratio never exceeds the entropy measure
    assert P <= A + 1e-12


def test_entropy_permutation_invariant(rng):
    H = rng.random((50, 60))
    H /= H.sum()
    perm = rng.permutation(H.size)
    assert information_entropy(H.ravel()[perm].reshape(60, 50)) == pytest.approx(information_entropy(H), rel=1e-13)


def test_overlap_index_examples():
    K = np.ones((400, 400), dtype=np.int8)
    K[:, 200:] = -1
    H = np.zeros((400, 400))
    H[:, :200] = 1.0 / (400 * 200)
    assert overlap_index(H, K) == pytest.approx(1.0)
    assert overlap_index(H[:, ::-1], K) == pytest.approx(-1.0)
    mix = 0.75 * H + 0.25 * H[:, ::-1]
    assert overlap_index(mix, K) == pytest.approx(0.5)


def test_overlap_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        overlap_index(np.ones((10, 10)) / 100, np.ones((20, 10), dtype=np.int8))


def test_classify():
    assert classify(0.9, 0.5) == "chaotic"
    assert classify(-0.8) == "regular"
    assert classify(0.5) == "chaotic"


def test_classical_threshold_quantile(rng):
    M = np.concatenate([rng.uniform(-1, 0.2, 300), rng.uniform(0.3, 1, 700)])
    rng.shuffle(M)
    chi_c = 0.7
    t = classical_threshold(M, 1 - chi_c)
    n_reg = sum(classify(m, t) == "regular" for m in M)
    assert abs(n_reg - round((1 - chi_c) * M.size)) <= 1
    assert classical_threshold(M, 0.0) < M.min()
    assert classical_threshold(M, 1.0) > M.max()


def test_window_average():
    A = np.arange(10.0)
    a, n = window_average(A, 2 * A, 5)
    np.testing.assert_allclose(a, [2.0, 7.0])
    np.testing.assert_allclose(n, [4.0, 14.0])


# ----------------------------------------------------------------- overlaps

def _synthetic(k, L, n, u):
    return EigenstateRecord(k, u, 0.0, L)


def test_self_overlap_peak():
    k, L, n = 60.0, 2 * math.pi, 600
    s = np.arange(n) * L / n
    q0, p0 = 2.2, 0.35
    x = s - q0
    c = np.exp(1j * k * p0 * x - 0.5 * k * x * x)
    rec = _synthetic(k, L, n, c)
    H = husimi_grid(rec, (200, 100))
    i, j = np.unravel_index(np.argmax(H.values), H.dims)
    assert abs(H.q[i] - q0) <= L / 200
    assert abs(H.p[j] - p0) <= 2.0 / 100


def test_overlap_periodic(circle_window):
    rec = circle_window.levels[5]
    a = coherent_overlap(rec, 0.7, 0.3)
    b = coherent_overlap(rec, 0.7 + rec.perimeter, 0.3)
    assert abs(a - b) < 1e-12 * max(1.0, abs(a))


def test_gaussian_width_point_source():
    k, L, n = 100.0, 2 * math.pi, 4000
    u = np.zeros(n)
    i0 = 1000
    u[i0] = n / L
    rec = _synthetic(k, L, n, u)
    q0 = i0 * L / n
    peak = abs(coherent_overlap(rec, q0, 0.2)) ** 2
    side = abs(coherent_overlap(rec, q0 + 1 / math.sqrt(k), 0.2)) ** 2
    assert side / peak == pytest.approx(math.exp(-1), rel=1e-10)


def test_grid_matches_direct_overlap(quarter_window):
    rec = quarter_window.levels[1]
    H = husimi_grid(rec, (40, 30), normalize=False)
    for i, j in [(0, 0), (13, 7), (39, 29), (20, 15)]:
        direct = abs(coherent_overlap(rec, H.q[i], H.p[j])) ** 2
        assert H.values[i, j] == pytest.approx(direct, rel=1e-9, abs=1e-12 * H.values.max())


def test_normalized_and_symmetric(quarter_window):
    for rec in quarter_window.levels[:5]:
        H = husimi_grid(rec)
        assert abs(H.values.sum() - 1) < 1e-12
        assert np.all(H.values >= 0)
        corr = np.corrcoef(H.values.ravel(), H.values[:, ::-1].ravel())[0, 1]
        assert corr > 0.99


def test_circle_state_on_momentum_lines(circle_window):
    ref = [(n, z) for n, _, z in circle_oracle(42.0) if z >= 40.0]
    checked = 0
    for rec in circle_window.levels:
        n, z = min(ref, key=lambda t: abs(t[1] - rec.k))
        if n < 5:
            continue
        H = husimi_grid(rec, (200, 400))
        marg = H.values.sum(axis=0)
        target = n / rec.k
        # coherent-state momentum spread is 1 / sqrt(2 k)
        near = np.abs(np.abs(H.p) - target) < 2 / math.sqrt(rec.k)
        assert marg[near].sum() > 0.95
        if target > 3 / math.sqrt(2 * rec.k):
            # the two lines are resolved, so the marginal peaks on them
            assert abs(abs(H.p[np.argmax(marg)]) - target) < 2.0 / 400 + 0.01
            checked += 1
    assert checked >= 5


def test_grid_resolution_robust(quarter_window):
    for rec in quarter_window.levels[:4]:
        a400 = entropy_A(husimi_grid(rec, (400, 400)))
        a200 = entropy_A(husimi_grid(rec, (200, 200)))
        assert abs(a200 - a400) / a400 < 0.05


def test_localization_record(quarter_window):
    rec = quarter_window.levels[0]
    H = husimi_grid(rec, (100, 100))
    K = ChaoticGrid(np.ones((100, 100), dtype=np.int8), 0.25, rec.perimeter, 0, 0)
    lr = localization_record(rec, H, K)
    assert lr.M == pytest.approx(1.0)
    assert lr.classification == "chaotic"
    assert lr.A_normalized == pytest.approx(lr.A)
    assert 0 < lr.nIPR <= 1 and 0 < lr.A <= 1
    assert set(lr.as_dict()) == {"k", "A", "A_normalized", "nIPR", "M", "class"}


def test_husimi_grid_type():
    H = HusimiGrid(np.ones((4, 6)) / 24, 50.0, 0.2, 6.0)
    assert H.dims == (4, 6)
    np.testing.assert_allclose(H.p, [-5 / 6, -0.5, -1 / 6, 1 / 6, 0.5, 5 / 6])
    np.testing.assert_allclose(H.q, [0.75, 2.25, 3.75, 5.25])
