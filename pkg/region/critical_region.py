import csv
import math
from dataclasses import dataclass
import numpy as np
from scipy.optimize import bisect
from tqdm import tqdm

from errors import DomainError, BracketError, NumericError
from geometry import Params
from transfer import spectral_radius_Q, t_region_holds
from utils import fmt

CURVE_IDS = ("lambda_Q_eq_1", "lambda_T_eq_1", "beta0_bound", "ground_state_bound", "sufficient_bound")
CSV_COLUMNS = {"lambda_Q_eq_1": "mu_lambdaQ", "lambda_T_eq_1": "mu_lambdaT", "beta0_bound": "mu_beta0",
               "ground_state_bound": "mu_ground", "sufficient_bound": "mu_sufficient"}

# bracket for mu above ln(2 cosh beta)
BRACKET_EPS = 1e-9
BRACKET_WIDTH = 40.0
LN2 = math.log(2.0)


@dataclass(frozen=True)
class CriticalCurve:
    id: str
    points: tuple

    def __post_init__(self):
        if self.id not in CURVE_IDS:
            raise DomainError(f"unknown curve id {self.id!r}")
        points = tuple((float(b), float(m)) for b, m in self.points)
        if any(b1 >= b2 for (b1, _), (b2, _) in zip(points, points[1:])):
            raise DomainError(f"beta must be strictly increasing along curve {self.id}")
        object.__setattr__(self, "points", points)

    @property
    def betas(self):
        return np.array([b for b, _ in self.points])

    @property
    def mus(self):
        return np.array([m for _, m in self.points])


def t_boundary_mu(beta):
    return math.log(2.0 * math.cosh(beta))


def solve_boundary_mu(beta, tol=1e-12, max_iter=200):
    """mu*(beta) where the spectral radius of Q crosses 1, by bisection above ln(2 cosh beta)."""
    if beta < 0 or not math.isfinite(beta):
        raise DomainError(f"beta must be finite and >= 0, got {beta}")
    if not 1e-14 < tol < 1e-4:
        raise DomainError(f"tol must lie in (1e-14, 1e-4), got {tol}")
    base = t_boundary_mu(beta)

    def excess(mu):
        return spectral_radius_Q(Params(beta=beta, mu=mu)) - 1.0

    lo, hi = base + BRACKET_EPS, base + BRACKET_WIDTH
    f_lo, f_hi = excess(lo), excess(hi)
    if not (f_lo > 0 > f_hi):
        raise BracketError(f"no sign change of rho(Q) - 1 on [{lo:.12g}, {hi:.12g}] at beta={beta}: "
                           f"values {f_lo:.3e}, {f_hi:.3e}")
    mu = bisect(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
    residual = abs(excess(mu))
    if residual > tol:
        raise NumericError(f"bisection stopped at mu={mu:.15g} with |rho(Q) - 1| = {residual:.3e} > tol={tol:g}")
    return mu


def region_classify(p):
    if not t_region_holds(p):
        return "divergent_T"
    if spectral_radius_Q(p) < 1.0:
        return "Q_convergent"
    return "T_only"


def beta_grid(beta_min=0.0, beta_max=2.0, beta_step=0.02):
    if beta_step <= 0 or beta_min > beta_max:
        raise DomainError(f"grid needs a positive step and min <= max, got "
                          f"[{beta_min}, {beta_max}] step {beta_step}")
    n = int(round((beta_max - beta_min) / beta_step)) + 1
    return np.linspace(beta_min, beta_min + (n - 1) * beta_step, n)


def bound_lines(betas, tol=1e-12, progress=False, writer=None):
    betas = np.asarray(betas, dtype=float)
    if betas.size == 0:
        raise DomainError("beta grid is empty")
    if (np.diff(betas) <= 0).any():
        raise DomainError("beta grid must be strictly increasing")
    solved = []
    for i, beta in enumerate(tqdm(betas, desc="boundary", disable=not progress)):
        mu = solve_boundary_mu(float(beta), tol=tol)
        solved.append(mu)
        if writer is not None:
            writer.add_scalar("critical_line/mu_lambdaQ", mu, i)
    analytic = {"lambda_T_eq_1": [t_boundary_mu(b) for b in betas],
                "beta0_bound": [2 * LN2 for _ in betas],
                "ground_state_bound": [LN2 + 1.5 * b for b in betas],
                "sufficient_bound": [2 * LN2 + 1.5 * b for b in betas]}
    curves = [CriticalCurve("lambda_Q_eq_1", tuple(zip(betas, solved)))]
    curves += [CriticalCurve(cid, tuple(zip(betas, analytic[cid]))) for cid in CURVE_IDS[1:]]
    return curves


def curve_crossings(curve_a, curve_b):
    """Betas where two curves on a shared grid swap order, by linear interpolation."""
    if not np.array_equal(curve_a.betas, curve_b.betas):
        raise DomainError(f"curves {curve_a.id} and {curve_b.id} are not on the same grid")
    b = curve_a.betas
    d = curve_a.mus - curve_b.mus
    crossings = []
    for i in range(len(d) - 1):
        if d[i] == 0:
            crossings.append(float(b[i]))
        elif d[i] * d[i + 1] < 0:
            crossings.append(float(b[i] - d[i] * (b[i + 1] - b[i]) / (d[i + 1] - d[i])))
    if len(d) and d[-1] == 0:
        crossings.append(float(b[-1]))
    return crossings


def write_curves_csv(curves, path):
    by_id = {c.id: c for c in curves}
    betas = by_id["lambda_Q_eq_1"].betas
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["beta"] + [CSV_COLUMNS[cid] for cid in CURVE_IDS])
        for i, beta in enumerate(betas):
            w.writerow([fmt(beta)] + [fmt(by_id[cid].mus[i]) for cid in CURVE_IDS])
