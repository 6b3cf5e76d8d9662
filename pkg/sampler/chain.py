import csv
import json
from bisect import bisect_right
from dataclasses import dataclass, asdict, field
import numpy as np
from scipy.stats import nbinom
from tqdm import tqdm

from errors import DomainError, ResourceError
from transfer import principal_root
from utils import VERSION, fmt, make_generator

TAIL_TOL = 1e-9
DEFAULT_N_CAP = 10_000


def _check_g(g):
    if not 0 < g < 0.5:
        raise DomainError(f"the limiting chain requires 0 < g < 1/2, got g={g}")


@dataclass(frozen=True)
class ChainConfig:
    g: float
    steps: int
    burn_in: int = 0
    seed: int = 0
    n_cap: int = DEFAULT_N_CAP

    def __post_init__(self):
        _check_g(self.g)
        if self.steps < 1:
            raise DomainError(f"steps must be >= 1, got {self.steps}")
        if not 0 <= self.burn_in < self.steps:
            raise DomainError(f"burn_in must satisfy 0 <= burn_in < steps, got {self.burn_in} (steps={self.steps})")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.n_cap < 1:
            raise DomainError(f"n_cap must be >= 1, got {self.n_cap}")


def _success_prob(g):
    # n' - 1 given n is negative binomial with n + 1 successes
    return 1.0 - g * principal_root(g)


def transition_row(n, g, n_cap=DEFAULT_N_CAP):
    """P(n, n') for n' = 1..n_cap and the mass beyond n_cap."""
    _check_g(g)
    if n < 1:
        raise DomainError(f"width must be >= 1, got {n}")
    q = _success_prob(g)
    probs = nbinom.pmf(np.arange(n_cap), n + 1, q)
    tail = float(nbinom.sf(n_cap - 1, n + 1, q))
    if tail > TAIL_TOL:
        raise ResourceError(f"row {n} leaves mass {tail:.3e} beyond n_cap={n_cap}; raise n_cap")
    return probs, tail


def transition_entry(n, n_prime, g):
    """u(n, n') phi(n') / (Lambda phi(n)), which is the NegativeBinomial(n + 1, 1 - g a) mass at n' - 1."""
    _check_g(g)
    if n < 1 or n_prime < 1:
        raise DomainError(f"widths must be >= 1, got ({n}, {n_prime})")
    return float(nbinom.pmf(n_prime - 1, n + 1, _success_prob(g)))


def kernel_matrix(g, n_cap):
    """Truncated kernel over widths 1..n_cap; row tails are returned separately."""
    _check_g(g)
    q = _success_prob(g)
    n = np.arange(1, n_cap + 1)
    k = np.arange(n_cap)
    P = nbinom.pmf(k[None, :], n[:, None] + 1, q)
    tails = nbinom.sf(n_cap - 1, n + 1, q)
    return P, tails


def stationary_pi(n, g):
    """pi(n) = n Lambda**(n-1) (1 - Lambda)**2, i.e. 1 + NegativeBinomial(2, 1 - Lambda)."""
    _check_g(g)
    lam = principal_root(g) ** 2
    n = np.asarray(n)
    if (n < 1).any():
        raise DomainError("widths must be >= 1")
    pi = n * lam ** (n - 1.0) * (1.0 - lam) ** 2
    return float(pi) if pi.ndim == 0 else pi


def stationary_tail(n_max, g):
    """Stationary mass of widths above n_max."""
    _check_g(g)
    lam = principal_root(g) ** 2
    return float(nbinom.sf(n_max - 1, 2, 1.0 - lam))


def mean_width(g):
    _check_g(g)
    lam = principal_root(g) ** 2
    return (1.0 + lam) / (1.0 - lam)


def tv_distance(visits, g):
    """Total variation between a visit histogram (index = width) and pi."""
    visits = np.asarray(visits, dtype=float)
    total = visits.sum()
    widths = np.arange(1, len(visits))
    empirical = visits[1:] / total
    return 0.5 * (float(np.abs(empirical - stationary_pi(widths, g)).sum()) + stationary_tail(len(visits) - 1, g))


@dataclass
class ChainSummary:
    config: ChainConfig
    visits: np.ndarray = field(repr=False)
    transitions: dict = field(repr=False)
    tv_distance: float
    empirical_mean_width: float
    expected_mean_width: float
    tail_events: int

    @property
    def samples(self):
        return int(self.visits.sum())

    def conditional_counts(self, n):
        return {n2: c for (n1, n2), c in self.transitions.items() if n1 == n}

    def report(self):
        return {"inputs": asdict(self.config),
                "outputs": {"visits": {str(w): int(c) for w, c in enumerate(self.visits) if c},
                            "transitions": [[int(a), int(b), int(c)] for (a, b), c in sorted(self.transitions.items())],
                            "empirical_mean_width": self.empirical_mean_width},
                "diagnostics": {"tv_distance": self.tv_distance,
                                "expected_mean_width": self.expected_mean_width,
                                "tail_events": self.tail_events,
                                "samples": self.samples,
                                "seed": self.config.seed},
                "version": VERSION}

    def to_json(self):
        return json.dumps(self.report(), indent=2, sort_keys=True)

    def write_histogram_csv(self, path):
        widths = np.arange(1, len(self.visits))
        pi = stationary_pi(widths, self.config.g)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["width", "visits", "empirical", "stationary"])
            for n in widths:
                w.writerow([int(n), int(self.visits[n]), fmt(self.visits[n] / self.samples), fmt(pi[n - 1])])


class _InverseCDF:
    """Tabulated cumulative rows, built on first use."""

    def __init__(self, g, n_cap, rng):
        self.g = g
        self.n_cap = n_cap
        self.rng = rng
        self.q = _success_prob(g)
        self.rows = {}
        self.tail_events = 0

    def _row(self, n):
        row = self.rows.get(n)
        if row is None:
            probs, tail = transition_row(n, self.g, self.n_cap)
            row = (np.cumsum(probs).tolist(), tail)
            self.rows[n] = row
        return row

    def step(self, n, u):
        cdf, tail = self._row(n)
        k = bisect_right(cdf, u)
        if k < self.n_cap:
            return k + 1
        # tail event: invert the survival function restricted to n' > n_cap
        self.tail_events += 1
        mass = (1.0 - self.rng.random()) * tail
        k = int(nbinom.isf(mass, n + 1, self.q))
        return max(k, self.n_cap) + 1


def run_chain(cfg, writer=None, progress=False, log_every=10_000):
    rng = make_generator(cfg.seed)
    sampler = _InverseCDF(cfg.g, cfg.n_cap, rng)
    uniforms = rng.random(cfg.steps)
    path = np.empty(cfg.steps + 1, dtype=np.int64)
    n = 1
    path[0] = n
    for t in tqdm(range(cfg.steps), desc="chain", disable=not progress, mininterval=1.0):
        n = sampler.step(n, uniforms[t])
        path[t + 1] = n
        if writer is not None and (t + 1) % log_every == 0 and t >= cfg.burn_in:
            kept = path[cfg.burn_in + 1:t + 2]
            writer.add_scalar("sampler/tv_distance", tv_distance(np.bincount(kept), cfg.g), t + 1)
            writer.add_scalar("sampler/mean_width", float(kept.mean()), t + 1)

    # visits and transitions after burn-in
    kept = path[cfg.burn_in + 1:]
    prev = path[cfg.burn_in:-1]
    visits = np.bincount(kept)
    pairs, counts = np.unique(np.stack([prev, kept], axis=1), axis=0, return_counts=True)
    transitions = {(int(a), int(b)): int(c) for (a, b), c in zip(pairs, counts)}
    return ChainSummary(config=cfg, visits=visits, transitions=transitions,
                        tv_distance=tv_distance(visits, cfg.g),
                        empirical_mean_width=float(kept.mean()),
                        expected_mean_width=mean_width(cfg.g),
                        tail_events=sampler.tail_events)
