import math
from dataclasses import dataclass, field
import numpy as np
import scipy.sparse as sp

from errors import DomainError, ConsistencyError, ResourceError, NumericError
from geometry import (StripTriangulation, SpinConfiguration, strips_of_size, spin_block, strip_energies,
                      strip_energy, interaction_energy, down_spins, up_spins)
from utils import (SpectralReport, power_iteration, log_trace_power, scaled_matrix_power,
                   second_eigenvalue_modulus)
from .pure_cdt import z_n_enumerated

MAX_STATE_CAP = 8
MAX_DENSE_CAP = 6


@dataclass(frozen=True)
class CoupledState:
    strip: StripTriangulation
    spins: SpinConfiguration

    def __post_init__(self):
        if len(self.spins) != self.strip.size:
            raise ConsistencyError(f"{len(self.spins)} spins for a strip of size {self.strip.size}")

    @property
    def size(self):
        return self.strip.size

    def flipped(self):
        return CoupledState(self.strip, self.spins.flipped())

    def encode(self):
        return f"{self.strip.encode()}:{self.spins.encode()}"


def _check_cap(s_max, cap=MAX_STATE_CAP):
    if s_max < 2:
        raise DomainError(f"s_max must be >= 2, got {s_max}")
    if s_max > cap:
        raise ResourceError(f"s_max={s_max} exceeds the cap {cap}")


def _interface_offset(k):
    return 2 ** k - 2


def _interface_codes(spins):
    # lexicographic index of each +-1 row, + before -
    k = spins.shape[1]
    if k == 0:
        return np.zeros(spins.shape[0], dtype=np.int64)
    weights = 2 ** np.arange(k - 1, -1, -1)
    return ((spins == -1).astype(np.int64) * weights).sum(axis=1)


def _strip_blocks(s_max):
    """(strip, spin rows) for every strip of size 2..s_max in state order."""
    for s in range(2, s_max + 1):
        spins = spin_block(s)
        for strip in strips_of_size(s):
            yield strip, spins


def enumerate_states(s_max):
    _check_cap(s_max)
    states = []
    for strip, spins in _strip_blocks(s_max):
        for row in spins:
            states.append(CoupledState(strip, SpinConfiguration(tuple(row))))
    return states


def k_entry(a, b, p):
    if a.strip.n_down != b.strip.n_up:
        return 0.0
    energy = 0.5 * (strip_energy(a.strip, a.spins) + strip_energy(b.strip, b.spins))
    energy += interaction_energy(down_spins(a.strip, a.spins), up_spins(b.strip, b.spins))
    return math.exp(-0.5 * p.mu * (a.size + b.size) - p.beta * energy)


class InterfaceTransfer:
    """
    K factorized through boundary spin strings: K = L W R.

    L[a, (k, x)] = f(a) when strip a has k down-triangles carrying spins x,
    R[(k, y), b] = f(b) when strip b has k up-triangles carrying spins y,
    W[(k, x), (k, y)] = exp(beta x.y), with f(a) = exp(-mu s_a / 2 - beta H_a / 2).
    B = W R L has the nonzero spectrum of K and tr(B**N) = tr(K**N).
    """

    def __init__(self, p, s_max):
        _check_cap(s_max)
        self.p = p
        self.s_max = s_max
        self.dim = _interface_offset(s_max)
        rows_l, cols_l, vals_l = [], [], []
        rows_r, cols_r, vals_r = [], [], []
        state = 0
        for strip, spins in _strip_blocks(s_max):
            f = np.exp(-0.5 * p.mu * strip.size - 0.5 * p.beta * strip_energies(spins))
            idx = np.arange(state, state + len(spins))
            down = _interface_offset(strip.n_down) + _interface_codes(spins[:, list(strip.down_positions)])
            up = _interface_offset(strip.n_up) + _interface_codes(spins[:, list(strip.up_positions)])
            rows_l.append(idx)
            cols_l.append(down)
            vals_l.append(f)
            rows_r.append(up)
            cols_r.append(idx)
            vals_r.append(f)
            state += len(spins)
        self.n_states = state
        cat = np.concatenate
        self.L = sp.csr_matrix((cat(vals_l), (cat(rows_l), cat(cols_l))), shape=(state, self.dim))
        self.R = sp.csr_matrix((cat(vals_r), (cat(rows_r), cat(cols_r))), shape=(self.dim, state))
        self.W = self._coupling_matrix()
        # G = R L aggregates the weight of every strip between its two boundaries
        self.G = (self.R @ self.L).toarray()
        self.B = self.W @ self.G

    def _coupling_matrix(self):
        W = np.zeros((self.dim, self.dim))
        for k in range(1, self.s_max):
            x = spin_block(k)
            lo = _interface_offset(k)
            W[lo:lo + len(x), lo:lo + len(x)] = np.exp(self.p.beta * (x @ x.T))
        return W

    def matvec(self, v):
        return self.L @ (self.W @ (self.R @ v))

    def rmatvec(self, v):
        return self.R.T @ (self.W @ (self.L.T @ v))

    def log_trace_power(self, N):
        return log_trace_power(self.B, N)

    def trace_KKT(self):
        # sum over a, b of f(a)^2 f(b)^2 exp(2 beta x.y) with x = down spins of a, y = up spins of b
        return float(self.G.sum(axis=0) @ (self.W ** 2) @ self.G.sum(axis=1))


def interface_transfer(p, s_max):
    return InterfaceTransfer(p, s_max)


@dataclass
class CoupledOperator:
    states: list
    entries: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return len(self.states)

    def index(self):
        return [s.encode() for s in self.states]

    def flip_permutation(self):
        position = {s.encode(): i for i, s in enumerate(self.states)}
        return np.array([position[s.flipped().encode()] for s in self.states])

    def save(self, path):
        """Snapshot with ``dims``, ``index`` (strip:spins codes) and row-major ``entries``."""
        np.savez(path, dims=np.array(self.entries.shape), index=np.array(self.index()),
                 entries=np.ascontiguousarray(self.entries).ravel())

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            dims = tuple(int(d) for d in data["dims"])
            codes = [str(c) for c in data["index"]]
            entries = data["entries"].reshape(dims)
        states = []
        for code in codes:
            strip_code, spin_code = code.split(":")
            signs = tuple(1 if c == "+" else -1 for c in spin_code)
            states.append(CoupledState(StripTriangulation.decode(strip_code), SpinConfiguration(signs)))
        return cls(states=states, entries=entries)


def build_coupled_operator(p, s_max):
    _check_cap(s_max, cap=MAX_DENSE_CAP)
    op = InterfaceTransfer(p, s_max)
    entries = (op.L @ sp.csr_matrix(op.W) @ op.R).toarray()
    return CoupledOperator(states=enumerate_states(s_max), entries=entries)


def xi_n_truncated(N, p, s_max):
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    return math.exp(InterfaceTransfer(p, s_max).log_trace_power(N))


def trace_KKT_direct(p, s_max):
    return InterfaceTransfer(p, s_max).trace_KKT()


def xi_lower_bound(N, p, s_max):
    """2 Z_N(mu - 3 beta / 2) restricted to strips of size <= s_max (ground-state terms only)."""
    return 2.0 * z_n_enumerated(N, p.shifted(-1.5 * p.beta), s_max - 1, strip_cap=s_max)


def xi_upper_bound(N, p, s_max):
    """Z_N(mu - 3 beta / 2 - ln 2) restricted to strips of size <= s_max (energy floor times spin count)."""
    return z_n_enumerated(N, p.shifted(-1.5 * p.beta - math.log(2.0)), s_max - 1, strip_cap=s_max)


@dataclass
class CoupledSpectralReport(SpectralReport):
    min_entry: float = 0.0
    n_states: int = 0

    def as_dict(self):
        report = super().as_dict()
        report.update(min_entry=self.min_entry, n_states=self.n_states)
        return report


def principal_eigenvalue_K(p, s_max, tol=1e-13, max_iter=100_000, writer=None):
    op = InterfaceTransfer(p, s_max)
    lam, vec, iters = power_iteration(op.matvec, dim=op.n_states, tol=tol, max_iter=max_iter,
                                      writer=writer, tag="coupled/power_iteration")
    residual = float(np.linalg.norm(op.matvec(vec) - lam * vec) / np.linalg.norm(vec))
    gap = max(lam - second_eigenvalue_modulus(op.B), 0.0)
    if not vec.min() > 0:
        raise NumericError(f"principal eigenvector of K has a nonpositive entry ({vec.min():.3e}) "
                           f"at beta={p.beta} mu={p.mu} s_max={s_max}")
    return CoupledSpectralReport(principal_eigenvalue=lam, residual=residual, gap=gap, iterations=iters,
                                 eigenvector=vec, min_entry=float(vec.min()), n_states=op.n_states)


def strip_marginal(N, p, s_max):
    """Probability that a given strip of the N-strip cylinder is in each state: diag(K**N) / tr(K**N)."""
    K = build_coupled_operator(p, s_max).entries
    P, _ = scaled_matrix_power(K, N)
    diag = np.diag(P)
    return diag / diag.sum()


def limiting_marginal(p, s_max, tol=1e-13, max_iter=100_000):
    """phi * phi_star / <phi, phi_star> from the right and left principal eigenvectors of K."""
    op = InterfaceTransfer(p, s_max)
    _, phi, _ = power_iteration(op.matvec, dim=op.n_states, tol=tol, max_iter=max_iter)
    _, phi_star, _ = power_iteration(op.rmatvec, dim=op.n_states, tol=tol, max_iter=max_iter)
    weights = phi * phi_star
    return weights / weights.sum()
