import math
import numpy as np
import pytest

from errors import DomainError, ResourceError
from geometry import Params, StripTriangulation, SpinConfiguration
from transfer import (CoupledState, CoupledOperator, enumerate_states, k_entry, build_coupled_operator,
                      interface_transfer, xi_n_truncated, trace_KKT_direct, trace_KKT_closed,
                      principal_eigenvalue_K, xi_lower_bound, xi_upper_bound, strip_marginal,
                      limiting_marginal, z_n_enumerated)

LN2 = math.log(2.0)


def state(code, signs):
    return CoupledState(StripTriangulation.decode(code), SpinConfiguration(signs))


@pytest.mark.parametrize("s_max, expected", [(2, 4), (3, 28), (6, 2604)])
def test_state_counts(s_max, expected):
    assert len(enumerate_states(s_max)) == expected


def test_state_bounds():
    with pytest.raises(ResourceError):
        enumerate_states(9)
    with pytest.raises(DomainError):
        enumerate_states(1)


def test_state_order():
    states = enumerate_states(3)
    assert [s.encode() for s in states[:4]] == ["UD:++", "UD:+-", "UD:-+", "UD:--"]
    assert states[4].encode() == "UUD:+++"
    assert states == enumerate_states(3)


def test_k_entry_examples():
    mu = 1.7
    a = state("UD", (1, 1))
    assert k_entry(a, a, Params(0.0, mu)) == pytest.approx(math.exp(-2 * mu), rel=1e-15)
    b = state("UUD", (1, 1, 1))
    assert k_entry(a, b, Params(0.4, mu)) == 0.0
    p = Params(0.4, mu)
    c, d = state("UUDD", (1, -1, -1, 1)), state("UUDD", (-1, 1, 1, 1))
    assert k_entry(c, d, p) == pytest.approx(k_entry(c.flipped(), d.flipped(), p), rel=1e-15)


def test_dense_operator_matches_k_entry():
    p = Params(0.4, 2.0)
    op = build_coupled_operator(p, 4)
    for i, a in enumerate(op.states):
        for j, b in enumerate(op.states):
            expected = k_entry(a, b, p)
            if expected == 0.0:
                assert op.entries[i, j] == 0.0
            else:
                assert op.entries[i, j] == pytest.approx(expected, rel=1e-12)


def test_dense_operator_cap():
    with pytest.raises(ResourceError):
        build_coupled_operator(Params(0.4, 2.0), 7)


def test_zero_pattern_follows_consistency():
    op = build_coupled_operator(Params(0.8, 2.5), 5)
    n_down = np.array([s.strip.n_down for s in op.states])
    n_up = np.array([s.strip.n_up for s in op.states])
    consistent = n_down[:, None] == n_up[None, :]
    assert (op.entries[consistent] > 0).all()
    assert (op.entries[~consistent] == 0).all()


def test_global_flip_commutes_with_K():
    op = build_coupled_operator(Params(0.6, 2.2), 5)
    perm = op.flip_permutation()
    np.testing.assert_allclose(op.entries[np.ix_(perm, perm)], op.entries, rtol=1e-13)


@pytest.mark.parametrize("s_max", [4, 5])
def test_K_squared_positive_on_reachable_sizes(s_max):
    op = build_coupled_operator(Params(0.5, 2.5), s_max)
    K2 = op.entries @ op.entries
    n_down = np.array([s.strip.n_down for s in op.states])
    n_up = np.array([s.strip.n_up for s in op.states])
    reachable = n_down[:, None] + n_up[None, :] <= s_max
    assert (K2[reachable] > 0).all()
    assert (K2[~reachable] == 0).all()


def test_xi_single_strip():
    p = Params(0.3, 1.9)
    states = enumerate_states(2)
    expected = sum(k_entry(a, a, p) for a in states)
    assert xi_n_truncated(1, p, 2) == pytest.approx(expected, rel=1e-13)


def test_xi_matches_dense_trace():
    p = Params(0.45, 2.3)
    K = build_coupled_operator(p, 4).entries
    for N in (1, 2, 3):
        assert xi_n_truncated(N, p, 4) == pytest.approx(np.trace(np.linalg.matrix_power(K, N)), rel=1e-12)


def test_xi_nondecreasing_in_truncation():
    p = Params(0.3, 2.5)
    values = [xi_n_truncated(3, p, s) for s in range(2, 8)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_xi_rejects_nonpositive_N():
    with pytest.raises(DomainError):
        xi_n_truncated(0, Params(0.3, 2.5), 4)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
@pytest.mark.parametrize("s_max", [2, 3, 4, 5, 6])
def test_beta0_reduction(N, s_max):
    mu = 2.0
    xi = xi_n_truncated(N, Params(0.0, mu), s_max)
    pure = z_n_enumerated(N, Params(0.0, mu - LN2), s_max - 1, strip_cap=s_max)
    assert xi == pytest.approx(pure, rel=1e-12)


@pytest.mark.parametrize("beta, mu", [(0.3, 2.5), (0.5, 3.0), (1.0, 4.0)])
@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("s_max", [3, 4, 5])
def test_sandwich_bounds(beta, mu, N, s_max):
    p = Params(beta, mu)
    xi = xi_n_truncated(N, p, s_max)
    assert xi_lower_bound(N, p, s_max) < xi < xi_upper_bound(N, p, s_max)


def test_trace_direct_matches_dense_sum():
    p = Params(0.5, 3.0)
    K = build_coupled_operator(p, 4).entries
    assert trace_KKT_direct(p, 4) == pytest.approx(float((K ** 2).sum()), rel=1e-12)


def test_trace_direct_approaches_closed_form():
    p = Params(0.5, 3.0)
    closed = trace_KKT_closed(p)
    direct = [trace_KKT_direct(p, s) for s in (4, 5, 6)]
    assert direct[0] < direct[1] < direct[2] < closed
    gaps = [abs(v - closed) / closed for v in direct]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_trace_direct_beta0():
    mu = 2 * LN2 + 0.3
    p = Params(0.0, mu)
    closed = trace_KKT_closed(p)
    direct = [trace_KKT_direct(p, s) for s in (4, 6, 8)]
    assert direct[0] < direct[1] < direct[2] < closed


def test_trace_direct_grows_without_saturation_outside_region():
    p = Params(0.0, 1.0)
    values = [trace_KKT_direct(p, s) for s in range(4, 9)]
    increments = [b - a for a, b in zip(values, values[1:])]
    assert all(d > 0 for d in increments)
    assert all(d2 > d1 for d1, d2 in zip(increments, increments[1:]))


def test_principal_eigenvalue_report():
    p = Params(0.3, 2.5)
    report = principal_eigenvalue_K(p, 6)
    assert report.min_entry > 0
    assert report.gap > 0
    assert report.residual < 1e-8
    assert report.n_states == 2604
    B = interface_transfer(p, 6).B
    assert report.principal_eigenvalue == pytest.approx(np.abs(np.linalg.eigvals(B)).max(), rel=1e-10)


def test_free_energy_trend():
    p = Params(0.3, 2.5)
    log_lam = math.log(principal_eigenvalue_K(p, 6).principal_eigenvalue)
    gaps = [abs(math.log(xi_n_truncated(N, p, 6)) / N - log_lam) for N in (8, 16, 32)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_interface_reduction_matches_dense_spectrum():
    p = Params(0.7, 2.8)
    K = build_coupled_operator(p, 4).entries
    B = interface_transfer(p, 4).B
    assert np.abs(np.linalg.eigvals(K)).max() == pytest.approx(np.abs(np.linalg.eigvals(B)).max(), rel=1e-10)


def test_marginals():
    p = Params(0.3, 2.5)
    s_max = 4
    report = principal_eigenvalue_K(p, s_max)
    ratio = 1 - report.gap / report.principal_eigenvalue
    N = int(math.ceil(math.log(1e-10) / math.log(ratio))) + 1
    exact = strip_marginal(N, p, s_max)
    limit = limiting_marginal(p, s_max)
    assert exact.sum() == pytest.approx(1.0, rel=1e-12)
    assert limit.sum() == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(exact, limit, atol=1e-6)
    op = build_coupled_operator(p, s_max)
    perm = op.flip_permutation()
    np.testing.assert_allclose(exact[perm], exact, rtol=1e-10)


def test_small_N_marginal_is_a_probability_table():
    p = Params(0.5, 2.0)
    marginal = strip_marginal(2, p, 4)
    K = build_coupled_operator(p, 4).entries
    np.testing.assert_allclose(marginal, np.diag(K @ K) / np.trace(K @ K), rtol=1e-12)
    assert (marginal >= 0).all()


def test_snapshot_round_trip(tmp_path):
    op = build_coupled_operator(Params(0.4, 2.0), 3)
    path = tmp_path / "operator.npz"
    op.save(path)
    with np.load(path) as data:
        assert tuple(data["dims"]) == (28, 28)
        assert data["entries"].shape == (28 * 28,)
    loaded = CoupledOperator.load(path)
    assert loaded.index() == op.index()
    np.testing.assert_array_equal(loaded.entries, op.entries)
