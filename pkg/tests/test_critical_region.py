import math
import numpy as np
import pytest

import region.critical_region as critical_region
from errors import BracketError, DomainError
from geometry import Params
from region import (CriticalCurve, solve_boundary_mu, region_classify, beta_grid, bound_lines, curve_crossings,
                    write_curves_csv, t_boundary_mu)
from transfer import spectral_radius_Q
from utils import fmt

LN2 = math.log(2.0)


@pytest.fixture(scope="module")
def default_curves():
    return bound_lines(beta_grid())


def test_boundary_pinned_at_beta0():
    assert solve_boundary_mu(0.0) == pytest.approx(2 * LN2, abs=1e-9)


@pytest.mark.parametrize("beta", [0.25, 0.8, 1.6])
def test_boundary_solves_defining_equation(beta):
    mu = solve_boundary_mu(beta, tol=1e-10)
    assert mu > t_boundary_mu(beta)
    assert abs(spectral_radius_Q(Params(beta, mu)) - 1) <= 1e-10


def test_boundary_rejects_bad_input():
    with pytest.raises(DomainError):
        solve_boundary_mu(-0.1)
    with pytest.raises(DomainError):
        solve_boundary_mu(math.nan)
    with pytest.raises(DomainError):
        solve_boundary_mu(0.5, tol=1e-3)
    with pytest.raises(DomainError):
        solve_boundary_mu(0.5, tol=1e-15)


def test_boundary_bracket_failure(monkeypatch):
    monkeypatch.setattr(critical_region, "spectral_radius_Q", lambda p: 0.5)
    with pytest.raises(BracketError, match="no sign change"):
        solve_boundary_mu(0.3)


def test_beta_grid():
    grid = beta_grid()
    assert len(grid) == 101
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(np.diff(grid), 0.02, rtol=1e-9)
    with pytest.raises(DomainError):
        beta_grid(beta_step=0.0)
    with pytest.raises(DomainError):
        beta_grid(beta_min=1.0, beta_max=0.5)


def test_bound_lines_small_grid():
    betas = [0.0, 0.5, 1.0]
    curves = {c.id: c for c in bound_lines(betas)}
    assert set(curves) == set(critical_region.CURVE_IDS)
    np.testing.assert_allclose(curves["lambda_T_eq_1"].mus, [t_boundary_mu(b) for b in betas], rtol=1e-15)
    np.testing.assert_allclose(curves["beta0_bound"].mus, 2 * LN2, rtol=1e-15)
    np.testing.assert_allclose(curves["ground_state_bound"].mus, [LN2 + 1.5 * b for b in betas], rtol=1e-15)
    np.testing.assert_allclose(curves["sufficient_bound"].mus, [2 * LN2 + 1.5 * b for b in betas], rtol=1e-15)
    for beta, mu in curves["lambda_Q_eq_1"].points:
        assert abs(spectral_radius_Q(Params(beta, mu)) - 1) <= 1e-12


def test_bound_lines_rejects_bad_grid():
    with pytest.raises(DomainError):
        bound_lines([])
    with pytest.raises(DomainError):
        bound_lines([0.5, 0.2])


def test_default_curves_shape(default_curves):
    curves = {c.id: c for c in default_curves}
    q, t = curves["lambda_Q_eq_1"], curves["lambda_T_eq_1"]
    assert len(q.points) == 101
    assert (q.mus >= t.mus).all()
    assert q.mus[0] == pytest.approx(2 * LN2, abs=1e-9)
    assert (np.diff(q.mus) >= 0).all()


def test_classification_examples():
    assert region_classify(Params(0.0, 0.5)) == "divergent_T"
    assert region_classify(Params(0.0, 1.0)) == "T_only"
    assert region_classify(Params(0.0, 2 * LN2 + 0.1)) == "Q_convergent"
    assert region_classify(Params(0.5, 3.0)) == "Q_convergent"


@pytest.mark.parametrize("beta", [0.0, 0.4, 1.2])
def test_classification_consistent_with_boundary(beta):
    mu_star = solve_boundary_mu(beta)
    assert region_classify(Params(beta, mu_star + 1e-6)) == "Q_convergent"
    below = mu_star - 1e-6
    assert below > t_boundary_mu(beta)
    assert region_classify(Params(beta, below)) == "T_only"
    assert region_classify(Params(beta, t_boundary_mu(beta) - 1e-6)) == "divergent_T"


def test_curve_validation():
    with pytest.raises(DomainError):
        CriticalCurve("no_such_curve", ((0.0, 1.0),))
    with pytest.raises(DomainError):
        CriticalCurve("beta0_bound", ((0.5, 1.0), (0.5, 1.2)))
    curve = CriticalCurve("beta0_bound", [(0, 1), (1, 2)])
    assert curve.points == ((0.0, 1.0), (1.0, 2.0))


def test_curve_crossings():
    a = CriticalCurve("lambda_Q_eq_1", ((0.0, 0.0), (1.0, 2.0), (2.0, 4.0)))
    b = CriticalCurve("sufficient_bound", ((0.0, 1.0), (1.0, 1.0), (2.0, 1.0)))
    assert curve_crossings(a, b) == [pytest.approx(0.5)]
    assert curve_crossings(b, b) == [0.0, 1.0, 2.0]
    c = CriticalCurve("beta0_bound", ((0.0, 1.0), (1.5, 1.0)))
    with pytest.raises(DomainError):
        curve_crossings(a, c)


def test_write_curves_csv(tmp_path):
    curves = bound_lines([0.0, 0.1])
    path = tmp_path / "curves.csv"
    write_curves_csv(curves, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "beta,mu_lambdaQ,mu_lambdaT,mu_beta0,mu_ground,mu_sufficient"
    assert len(lines) == 3
    row = [float(x) for x in lines[1].split(",")]
    assert row[0] == 0.0
    assert row[1] == pytest.approx(2 * LN2, abs=1e-9)
    assert row[2] == pytest.approx(LN2, rel=1e-11)
    assert all(field == fmt(float(field)) for line in lines[1:] for field in line.split(","))
    first = path.read_bytes()
    write_curves_csv(curves, path)
    assert path.read_bytes() == first
