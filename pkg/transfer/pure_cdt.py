import math
from itertools import product
from dataclasses import dataclass
import numpy as np
from scipy.special import gammaln
from scipy.stats import nbinom

from errors import DomainError, ResourceError
from utils import log_trace_power, spectral_report

MAX_TRUNCATION = 4096
MAX_ENUMERATION = 10 ** 6
# exp(-mu) may land a few ulps off a closed upper bound such as 1/2
BOUNDARY_RTOL = 4 * np.finfo(float).eps
# below this size entries use exact integer binomials
_EXACT_ENTRY_DIM = 64
# C(n + n' - 1, n - 1) stays below 2**999 while n + n' <= 1000
_EXACT_WEIGHT_SUM = 1000


@dataclass(frozen=True)
class TruncatedOperator:
    """Finite section of a boundary-size transfer operator; row/column k is boundary size k + 1."""
    entries: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DomainError(f"truncated operator must be square, got shape {entries.shape}")
        if (entries < 0).any():
            raise DomainError("truncated operator entries must be nonnegative")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self):
        return self.entries.shape[0]

    def boundary_sizes(self):
        return np.arange(1, self.dim + 1)


def _check_fugacity(p, upper=1.0, inclusive=False):
    g = p.g
    ok = g < upper or (inclusive and g <= upper * (1.0 + BOUNDARY_RTOL))
    if not (0 < g and ok):
        bound = "<=" if inclusive else "<"
        raise DomainError(f"requires 0 < g {bound} {upper:g}, got g={g:.12g} (mu={p.mu:.12g})")
    return g


def _binomial_weight(n, n_prime, g):
    """C(n + n' - 1, n - 1) g**(n + n'), in log space once the binomial leaves float range."""
    if n + n_prime <= _EXACT_WEIGHT_SUM:
        return math.comb(n + n_prime - 1, n - 1) * g ** (n + n_prime)
    return math.exp(gammaln(n + n_prime) - gammaln(n) - gammaln(n_prime + 1) + (n + n_prime) * math.log(g))


def u_entry(n, n_prime, p):
    if n < 1 or n_prime < 1:
        raise DomainError(f"boundary sizes must be >= 1, got ({n}, {n_prime})")
    g = _check_fugacity(p)
    return _binomial_weight(n, n_prime, g)


def u_tilde_entry(n, n_prime, p):
    """Unmarked-boundary entry u(n, n')/n, symmetric in its arguments."""
    return u_entry(n, n_prime, p) / n


def _u_matrix(g, n_max):
    if n_max <= _EXACT_ENTRY_DIM:
        return np.array([[math.comb(n + k - 1, n - 1) * g ** (n + k) for k in range(1, n_max + 1)]
                         for n in range(1, n_max + 1)], dtype=float)
    n = np.arange(1, n_max + 1, dtype=float)
    N, K = np.meshgrid(n, n, indexing="ij")
    return np.exp(gammaln(N + K) - gammaln(N) - gammaln(K + 1) + (N + K) * math.log(g))


def build_truncated_U(p, n_max, symmetric=False):
    g = _check_fugacity(p)
    if n_max < 2:
        raise DomainError(f"n_max must be >= 2, got {n_max}")
    if n_max > MAX_TRUNCATION:
        raise ResourceError(f"n_max={n_max} exceeds the truncation cap {MAX_TRUNCATION}")
    entries = _u_matrix(g, n_max)
    if symmetric:
        entries = entries / np.arange(1, n_max + 1)[:, None]
    return TruncatedOperator(entries=entries, symmetric=symmetric)


def principal_root(g):
    """Largest root a of g a**2 - a + g = 0 taken with a <= 1, so that Lambda = a**2."""
    if not 0 < g <= 0.5 * (1.0 + BOUNDARY_RTOL):
        raise DomainError(f"requires 0 < g <= 1/2, got g={g:.12g}")
    # rationalized form of (1 - sqrt(1 - 4g^2)) / (2g), stable as g -> 0
    return 2.0 * g / (1.0 + math.sqrt(max(1.0 - 4.0 * g * g, 0.0)))


def lambda_pure(p):
    g = _check_fugacity(p, upper=0.5, inclusive=True)
    return principal_root(g) ** 2


def eigenvectors_pure(p, n_max):
    """
    Right and left principal eigenvectors of U sampled at n = 1..n_max.

    phi(n) = n a**n and phi_star(n) = a**n with a = sqrt(Lambda); both are
    geometric in a < 1, so truncation tails are bounded by a**n_max.
    """
    g = _check_fugacity(p, upper=0.5)
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    a = principal_root(g)
    n = np.arange(1, n_max + 1, dtype=float)
    phi_star = a ** n
    return n * phi_star, phi_star


def row_sum_closed(n, p):
    g = _check_fugacity(p)
    return (g / (1.0 - g)) ** n * (1.0 - (1.0 - g) ** n)


def row_sum_tail(n, p, n_max):
    """Exact mass of row n beyond column n_max (negative binomial survival function)."""
    g = _check_fugacity(p)
    return (g / (1.0 - g)) ** n * float(nbinom.sf(n_max, n, 1.0 - g))


def z_n_truncated(N, p, n_max):
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    if n_max > MAX_TRUNCATION:
        raise ResourceError(f"n_max={n_max} exceeds the truncation cap {MAX_TRUNCATION}")
    g = _check_fugacity(p)
    return math.exp(log_trace_power(_u_matrix(g, n_max), N))


def z_n_enumerated(N, p, n_max, strip_cap=None):
    """
    Sum over cyclic boundary sequences (n^0, ..., n^{N-1}) in [1, n_max]^N of
    g^(2 sum n^i) times the product of binomial(n^i + n^{i+1} - 1, n^i - 1).

    With ``strip_cap`` every strip must satisfy n^i + n^{i+1} <= strip_cap.
    """
    if N < 1 or n_max < 1:
        raise DomainError(f"N and n_max must be >= 1, got N={N} n_max={n_max}")
    if n_max ** N > MAX_ENUMERATION:
        raise ResourceError(f"enumerating {n_max}**{N} boundary sequences exceeds the cap {MAX_ENUMERATION}")
    g = _check_fugacity(p)
    total = 0.0
    for seq in product(range(1, n_max + 1), repeat=N):
        weight = 1.0
        for i in range(N):
            n, n_next = seq[i], seq[(i + 1) % N]
            if strip_cap is not None and n + n_next > strip_cap:
                weight = 0.0
                break
            # the strip weights g**(n + n') multiply to g**(2 sum n) around the cycle
            weight *= _binomial_weight(n, n_next, g)
        total += weight
    return total


def free_energy_pure(N_list, p, n_max):
    _check_fugacity(p, upper=0.5)
    entries = build_truncated_U(p, n_max).entries
    return [log_trace_power(entries, N) / N for N in N_list]


def spectral_report_pure(p, n_max, writer=None):
    U = build_truncated_U(p, n_max)
    return spectral_report(U.entries, writer=writer, tag="pure/power_iteration")


def trace_ratio(N, p, n_max):
    """tr(U**N) / Lambda**N at finite truncation (reported, not certified)."""
    lam = lambda_pure(p)
    U = build_truncated_U(p, n_max)
    return math.exp(log_trace_power(U.entries, N) - N * math.log(lam))


def hilbert_schmidt_sum(p, n_max):
    U = build_truncated_U(p, n_max)
    return float((U.entries ** 2).sum())


def eigen_residuals(p, n_max):
    """Relative residuals of the right and left eigen-identities on the truncation."""
    U = build_truncated_U(p, n_max).entries
    lam = lambda_pure(p)
    phi, phi_star = eigenvectors_pure(p, n_max)
    right = np.linalg.norm(U @ phi - lam * phi) / np.linalg.norm(phi)
    left = np.linalg.norm(U.T @ phi_star - lam * phi_star) / np.linalg.norm(phi_star)
    return float(right), float(left)


def gibbs_probability(widths, p, n_max):
    """N-strip Gibbs probability of a cyclic boundary-size string under the truncated pure model."""
    widths = [int(n) for n in widths]
    if not widths or min(widths) < 1 or max(widths) > n_max:
        raise DomainError(f"widths must lie in [1, {n_max}], got {widths}")
    N = len(widths)
    weight = 1.0
    for i in range(N):
        weight *= u_entry(widths[i], widths[(i + 1) % N], p)
    return weight / z_n_truncated(N, p, n_max)
