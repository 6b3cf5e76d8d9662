import math
from enum import Enum
from itertools import combinations, product
from dataclasses import dataclass
import numpy as np

from errors import DomainError, ConsistencyError, ResourceError

DEFAULT_STRIP_CAP = 16


class Kind(str, Enum):
    UP = "U"
    DOWN = "D"


@dataclass(frozen=True)
class Params:
    beta: float
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.mu)):
            raise DomainError(f"beta and mu must be finite, got beta={self.beta} mu={self.mu}")
        if self.beta < 0:
            raise DomainError(f"beta must be >= 0, got {self.beta}")
        if self.mu <= 0:
            raise DomainError(f"mu must be > 0, got {self.mu}")

    @property
    def g(self):
        return math.exp(-self.mu)

    @classmethod
    def from_fugacity(cls, g, beta=0.0):
        if not 0 < g < 1:
            raise DomainError(f"fugacity g must lie in (0, 1), got {g}")
        return cls(beta=beta, mu=-math.log(g))

    def shifted(self, delta_mu):
        """Same beta, mu moved by ``delta_mu``."""
        return Params(beta=self.beta, mu=self.mu + delta_mu)


@dataclass(frozen=True)
class StripTriangulation:
    """Root-anchored up/down sequence of one strip; index 0 is the root."""
    kinds: tuple

    def __post_init__(self):
        kinds = tuple(Kind(k) for k in self.kinds)
        object.__setattr__(self, "kinds", kinds)
        if not kinds or kinds[0] is not Kind.UP:
            raise DomainError("a strip must start with its root up-triangle")
        if Kind.DOWN not in kinds:
            raise DomainError("a strip needs at least one down-triangle")

    @classmethod
    def decode(cls, code):
        return cls(tuple(Kind(c) for c in code))

    def encode(self):
        return "".join(k.value for k in self.kinds)

    @property
    def size(self):
        return len(self.kinds)

    @property
    def up_positions(self):
        return tuple(i for i, k in enumerate(self.kinds) if k is Kind.UP)

    @property
    def down_positions(self):
        return tuple(i for i, k in enumerate(self.kinds) if k is Kind.DOWN)

    @property
    def n_up(self):
        return len(self.up_positions)

    @property
    def n_down(self):
        return self.size - self.n_up

    def __len__(self):
        return self.size


@dataclass(frozen=True)
class SpinConfiguration:
    signs: tuple

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (1, -1) for s in signs):
            raise DomainError(f"spins must be +1 or -1, got {self.signs}")
        object.__setattr__(self, "signs", signs)

    def __len__(self):
        return len(self.signs)

    def flipped(self):
        return SpinConfiguration(tuple(-s for s in self.signs))

    def restricted(self, positions):
        return SpinConfiguration(tuple(self.signs[i] for i in positions))

    def encode(self):
        return "".join("+" if s > 0 else "-" for s in self.signs)


def _check_count(name, value):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value}")


def count_strips(n_up, n_down):
    _check_count("n_up", n_up)
    _check_count("n_down", n_down)
    return math.comb(int(n_up) + int(n_down) - 1, int(n_up) - 1)


def enumerate_strips(n_up, n_down, cap=DEFAULT_STRIP_CAP):
    """All strips with the given counts, lexicographic in kinds with Up < Down."""
    _check_count("n_up", n_up)
    _check_count("n_down", n_down)
    s = n_up + n_down
    if s > cap:
        raise ResourceError(f"strip size {s} exceeds the enumeration cap {cap}")
    strips = []
    # root is always Up; choose the remaining up slots among positions 1..s-1
    for ups in combinations(range(1, s), n_up - 1):
        kinds = [Kind.DOWN] * s
        kinds[0] = Kind.UP
        for i in ups:
            kinds[i] = Kind.UP
        strips.append(StripTriangulation(tuple(kinds)))
    return strips


def strips_of_size(s):
    """Every strip with s triangles in lexicographic order (Up < Down)."""
    if s < 2:
        raise DomainError(f"a strip has at least 2 triangles, got {s}")
    strips = []
    for tail in product((Kind.UP, Kind.DOWN), repeat=s - 1):
        if Kind.DOWN in tail:
            strips.append(StripTriangulation((Kind.UP,) + tail))
    return strips


def spin_block(s):
    """All 2**s spin rows for s triangles, +1 before -1, as an int array."""
    return np.array(list(product((1, -1), repeat=s)), dtype=np.int64).reshape(-1, s)


def strip_energy(t, sigma):
    if len(sigma) != t.size:
        raise ConsistencyError(f"spin configuration has {len(sigma)} entries for a strip of size {t.size}")
    signs = sigma.signs
    return -float(sum(a * b for a, b in zip(signs, signs[1:] + signs[:1])))


def strip_energies(spins):
    """Vectorized cyclic energy for rows of a spin block."""
    return -(spins * np.roll(spins, -1, axis=1)).sum(axis=1).astype(float)


def interaction_energy(sigma_lower, sigma_upper):
    if len(sigma_lower) != len(sigma_upper):
        raise ConsistencyError(f"lower strip has {len(sigma_lower)} down-triangles but upper strip "
                               f"has {len(sigma_upper)} up-triangles")
    return -float(sum(a * b for a, b in zip(sigma_lower.signs, sigma_upper.signs)))


def down_spins(t, sigma):
    return sigma.restricted(t.down_positions)


def up_spins(t, sigma):
    return sigma.restricted(t.up_positions)


def cylinder_energy(strips, spins):
    """Total Ising energy of a cyclic stack of strips with periodic time direction."""
    if len(strips) != len(spins) or not strips:
        raise ConsistencyError("need one spin configuration per strip")
    total = 0.0
    N = len(strips)
    for i in range(N):
        t, sigma = strips[i], spins[i]
        t_next, sigma_next = strips[(i + 1) % N], spins[(i + 1) % N]
        if t.n_down != t_next.n_up:
            raise ConsistencyError(f"strip {i} has {t.n_down} down-triangles but strip {(i + 1) % N} "
                                   f"has {t_next.n_up} up-triangles")
        total += strip_energy(t, sigma)
        total += interaction_energy(down_spins(t, sigma), up_spins(t_next, sigma_next))
    return total
