import math
from dataclasses import dataclass
from collections import namedtuple
import numpy as np

from errors import DomainError, DivergenceError, NumericError

SERIES_TOL = 1e-14
SERIES_MAX_TERMS = 1_000_000

# pair-spin states (s1, s2) in the order ++, +-, -+, --
PAIR_STATES = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])
_SPIN_INDEX = (PAIR_STATES == -1).astype(int)

QFamily = namedtuple("QFamily", ["Q", "Q_m", "Q_t", "Q_tm"])


@dataclass(frozen=True)
class SmallMatrix:
    name: str
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.shape not in ((2, 2), (4, 4)):
            raise DomainError(f"{self.name} must be 2x2 or 4x4, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self):
        return self.entries.shape[0]

    def spectral_radius(self):
        return float(np.abs(np.linalg.eigvals(self.entries)).max())


@dataclass(frozen=True)
class CmParams:
    c: float
    m: float


def _t_region_message(p):
    return (f"requires mu > ln(2 cosh beta) = {math.log(2.0 * math.cosh(p.beta)):.12g}, "
            f"got mu={p.mu:.12g} at beta={p.beta:.12g}")


def matrix_T(p):
    b = p.beta
    return SmallMatrix("T", p.g * np.array([[math.exp(b), math.exp(-b)],
                                            [math.exp(-b), math.exp(b)]]))


def t_eigenvalues(p):
    lp = math.exp(p.beta - p.mu) + math.exp(-p.beta - p.mu)
    lm = math.exp(p.beta - p.mu) - math.exp(-p.beta - p.mu)
    return lp, lm


def t_region_holds(p):
    return t_eigenvalues(p)[0] < 1.0


def _require_t_region(p):
    if not t_region_holds(p):
        raise DivergenceError(_t_region_message(p))


def cm_params(p):
    _require_t_region(p)
    b, mu = p.beta, p.mu
    denom = math.exp(2 * b) * (1.0 - math.exp(b - mu)) ** 2 - math.exp(-2 * mu)
    if not denom > 0:
        raise DivergenceError(f"c denominator is {denom:.3e}; " + _t_region_message(p))
    c = math.exp(b - mu) / denom
    m = math.exp(2 * b) + (1.0 - math.exp(4 * b)) * math.exp(-b - mu)
    return CmParams(c=c, m=m)


def _m_series(p):
    T = matrix_T(p).entries
    lp = t_eigenvalues(p)[0]
    total = np.zeros((2, 2))
    term = T.copy()
    for k in range(1, SERIES_MAX_TERMS + 1):
        total += term
        # remaining geometric tail is at most lp**k / (1 - lp) times the term scale
        if np.abs(term).max() * lp / (1.0 - lp) < SERIES_TOL * max(np.abs(total).max(), 1.0):
            return total
        term = term @ T
    raise NumericError(f"series for M did not reach {SERIES_TOL:g} in {SERIES_MAX_TERMS} terms (lambda_+={lp:.12g})")


def matrix_M(p, mode="closed_form"):
    _require_t_region(p)
    if mode == "closed_form":
        cm = cm_params(p)
        return SmallMatrix("M", cm.c * np.array([[cm.m, 1.0], [1.0, cm.m]]))
    if mode == "series":
        return SmallMatrix("M", _m_series(p))
    raise DomainError(f"unknown mode {mode!r}; expected 'closed_form' or 'series'")


def _pair_matrix(L, R, beta):
    r"""Q_X[(s1,s2),(s1',s2')] = e^{beta (s1 s2 + s1' s2')} L[s1,s1'] R[s2,s2']."""
    w = np.exp(beta * PAIR_STATES[:, 0] * PAIR_STATES[:, 1])
    i1, i2 = _SPIN_INDEX[:, 0], _SPIN_INDEX[:, 1]
    core = L[np.ix_(i1, i1)] * R[np.ix_(i2, i2)]
    return w[:, None] * core * w[None, :]


def build_Q_family(p, pattern="corrected"):
    """
    The four 4x4 pair matrices (Q, Q_m, Q_t, Q_tm).

    ``pattern="printed"`` reproduces the displayed entry layout verbatim.
    It writes m_{++} m2_{++} at (+-, +-) of Q_m, which equals the pair-product
    value since M and M**2 have equal diagonals, and m_{++} m2_{++} at (-+, --)
    where the pair product gives m_{--} m2_{+-}; Q_tm likewise with t in place
    of m. Only the corrected layout feeds ``trace_KKT_closed``.
    """
    if pattern not in ("corrected", "printed"):
        raise DomainError(f"unknown pattern {pattern!r}; expected 'corrected' or 'printed'")
    M = matrix_M(p).entries
    M2 = M @ M
    T = matrix_T(p).entries
    b = p.beta
    family = {"Q": _pair_matrix(M, M, b), "Q_m": _pair_matrix(M, M2, b),
              "Q_t": _pair_matrix(T, M, b), "Q_tm": _pair_matrix(T, M2, b)}
    if pattern == "printed":
        for name, L in (("Q_m", M), ("Q_tm", T)):
            X = family[name].copy()
            X[2, 3] = L[0, 0] * M2[0, 0]
            family[name] = X
    return QFamily(**{name: SmallMatrix(name, X) for name, X in family.items()})


def q_spectrum(p):
    """Moduli of the eigenvalues of Q, descending."""
    Q = build_Q_family(p).Q.entries
    return np.sort(np.abs(np.linalg.eigvals(Q)))[::-1]


def spectral_radius_Q(p):
    return float(q_spectrum(p)[0])


def lambda_condition(p):
    """Spectral radius of Q, or (inf, status) outside the T-region."""
    if not t_region_holds(p):
        return math.inf, "divergent_T"
    return spectral_radius_Q(p), "ok"


def lambda_closed_forms(p):
    """Both printed closed-form eigenvalue lists of Q, each sorted descending."""
    cm = cm_params(p)
    c2, m2, b = cm.c ** 2, cm.m ** 2, p.beta

    def _family(ch, ep, em):
        root = math.sqrt(max(1.0 - (m2 - 1.0) ** 2 / ((m2 + 1.0) ** 2 * ch ** 2), 0.0))
        vals = [c2 * ep * (m2 - 1.0), c2 * em * (m2 - 1.0),
                c2 * (m2 + 1.0) * ch * (1.0 - root), c2 * (m2 + 1.0) * ch * (1.0 + root)]
        return sorted(vals, key=abs, reverse=True)

    return {"cosh2beta": _family(math.cosh(2 * b), math.exp(2 * b), math.exp(-2 * b)),
            "coshbeta": _family(math.cosh(b), math.exp(b), math.exp(-b))}


def adjudicate_lambda(points, tol=1e-8):
    """
    Compare the closed-form largest eigenvalue of each family against the
    numeric spectral radius of Q at every point of ``points`` (Params list).
    """
    errors = {"cosh2beta": [], "coshbeta": []}
    for p in points:
        rho = spectral_radius_Q(p)
        for name, vals in lambda_closed_forms(p).items():
            errors[name].append(abs(vals[0] - rho) / rho)
    report = {}
    for name, errs in errors.items():
        errs = np.asarray(errs)
        report[name] = {"max_relative_error": float(errs.max()),
                        "matches_everywhere": bool((errs <= tol).all()),
                        "matched_points": int((errs <= tol).sum())}
    matching = [name for name in report if report[name]["matches_everywhere"]]
    report["matching_form"] = matching[0] if len(matching) == 1 else None
    report["points"] = len(points)
    return report


def _trace_resolvent(Q, X):
    return float(np.trace(np.linalg.solve(np.eye(4) - Q, X)))


def trace_KKT_closed(p):
    """tr((I - Q)^-1 Q_m) - tr((I - Q_t)^-1 Q_tm); finite only where the spectral radius of Q is < 1."""
    fam = build_Q_family(p)
    rho = fam.Q.spectral_radius()
    if rho >= 1.0:
        raise DivergenceError(f"trace of K K^T diverges: spectral radius of Q is {rho:.12g} >= 1 "
                              f"at beta={p.beta:.12g} mu={p.mu:.12g}")
    value = _trace_resolvent(fam.Q.entries, fam.Q_m.entries) - _trace_resolvent(fam.Q_t.entries, fam.Q_tm.entries)
    if not value > 0:
        raise NumericError(f"closed-form trace of K K^T is not positive ({value})")
    return value


def trace_KKT_printed(p):
    """The verbatim displayed expression: printed Q_m/Q_tm layout and an extra Q_t in the second term."""
    fam = build_Q_family(p, pattern="printed")
    if fam.Q.spectral_radius() >= 1.0:
        return math.inf
    Qt = fam.Q_t.entries
    return _trace_resolvent(fam.Q.entries, fam.Q_m.entries) - _trace_resolvent(Qt, Qt @ fam.Q_tm.entries)
