"""Shared domain types and the elementary functions of the two-state model.

States are ``x in {-1, +1}``; a probability on the state space is encoded by
its mean ``m in [-1, 1]``.  The running cost is ``a**2 / 2`` and the terminal
cost ``G(x, m) = -m x`` rewards agreeing with the majority.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import check_bounded, check_int, check_mean, check_positive, check_state


@dataclass(frozen=True)
class MeanState:
    """Mean ``m`` of a probability on ``{-1, 1}``."""

    m: float

    def __post_init__(self):
        object.__setattr__(self, "m", check_mean(self.m))

    @property
    def fraction(self):
        return mean_to_fraction(self.m)


@dataclass(frozen=True)
class PlayerState:
    x: int

    def __post_init__(self):
        object.__setattr__(self, "x", check_state(self.x))

    def flipped(self):
        return PlayerState(-self.x)


@dataclass(frozen=True)
class SimplexFraction:
    """Exact point ``k / n`` of the discrete simplex ``S_n = {0, 1/n, ..., 1}``.

    Kept as an integer pair so that neighbour shifts ``k -> k +/- 1`` and the
    reflection ``k -> n - k`` never accumulate rounding error.
    """

    k: int
    n: int

    def __post_init__(self):
        n = check_int(self.n, "n", minimum=1)
        k = check_int(self.k, "k")
        if not 0 <= k <= n:
            raise ValueError(f"k must lie in [0, {n}], got {k}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "n", n)

    @property
    def value(self):
        return self.k / self.n

    def as_fraction(self):
        return Fraction(self.k, self.n)

    def reflected(self):
        """The point ``1 - mu``."""
        return SimplexFraction(self.n - self.k, self.n)

    def shifted(self, step):
        return SimplexFraction(self.k + step, self.n)

    @classmethod
    def from_value(cls, mu, n):
        k = round(check_bounded(mu, 0.0, 1.0, "mu") * n)
        if abs(k / n - mu) > 1e-9:
            raise ValueError(f"{mu} is not a point of S_{n}")
        return cls(int(k), n)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing nodes from 0 to ``horizon`` with gaps at most ``step``."""

    horizon: float
    nodes: np.ndarray
    step: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if nodes[0] != 0.0 or nodes[-1] != self.horizon:
            raise ValueError("grid nodes must run from 0 to the horizon")
        gaps = np.diff(nodes)
        if np.any(gaps <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        if gaps.max() > self.step * (1 + 1e-12):
            raise ValueError("grid gap exceeds the step bound")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, horizon, step):
        horizon = check_positive(horizon, "horizon")
        step = check_positive(step, "step")
        n = max(1, int(np.ceil(horizon / step - 1e-9)))
        nodes = np.linspace(0.0, horizon, n + 1)
        nodes[-1] = horizon
        return cls(horizon, nodes, horizon / n)

    def __len__(self):
        return self.nodes.size


def hamiltonian(p):
    """``H(p) = (p^-)^2 / 2``; accepts scalars or arrays."""
    rate = optimal_rate(p)
    return 0.5 * rate * rate


def optimal_rate(p):
    """Maximiser ``p^- = max(-p, 0)`` of the Hamiltonian."""
    out = np.maximum(np.negative(p), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def terminal_cost(x, m):
    return -check_mean(m) * check_state(x)


def monotonicity_gap(m, m2):
    """Lasry-Lions pairing of the terminal cost; equals ``-(m - m2)**2``.

    Evaluated from the definition ``sum_x (G(x, m) - G(x, m2)) (m_x - m2_x)``
    so that the sign can be checked rather than assumed.
    """
    m, m2 = check_mean(m, "m"), check_mean(m2, "m2")
    total = 0.0
    for x in (-1, 1):
        weight = (1 + x * m) / 2 - (1 + x * m2) / 2
        total += (terminal_cost(x, m) - terminal_cost(x, m2)) * weight
    return total


def mean_to_fraction(m):
    """Probability of state ``+1`` given the mean ``m``."""
    return (1.0 + check_mean(m)) / 2.0


def fraction_to_mean(mu):
    return 2.0 * check_bounded(mu, 0.0, 1.0, "mu") - 1.0


def sgn(x):
    """Sign with ``sgn(0) = 0``."""
    return (x > 0) - (x < 0)
