"""Symmetric Nash equilibrium of the N+1-player game.

By exchangeability and the sign-flip symmetry the value of player 0 reduces to
``V(t, mu) = V^N(t, +1, mu)`` on the grid ``mu in {0, 1/N, ..., 1}`` of
fractions of the *other* players at ``+1``.  ``V`` solves a closed system of
``N + 1`` ODEs, integrated backward from ``V(T, mu) = -(2 mu - 1)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_int, check_positive, check_state
from .core import SimplexFraction, TimeGrid, hamiltonian
from .master import u_star

ATOL = 1e-10
RTOL = 1e-10


class IntegrationError(ArithmeticError):
    """The adaptive integrator could not complete the solve."""


def value_rhs(t, V, N):
    """Time derivative ``dV/dt`` of the reduced Nash system.

    ``V[j]`` is the value at ``mu = j / N``.  The other players at ``+1``
    (there are ``N mu`` of them) flip at rate ``Z(mu)^-``, moving player 0's
    view to ``mu - 1/N``; those at ``-1`` flip at rate ``Z(mu + 1/N)^+``.
    """
    Z = V[::-1] - V
    j = np.arange(N + 1)
    down = np.zeros_like(V)
    down[1:] = (j[1:] * np.maximum(-Z[1:], 0.0)) * (V[:-1] - V[1:])
    up = np.zeros_like(V)
    up[:-1] = ((N - j[:-1]) * np.maximum(Z[1:], 0.0)) * (V[1:] - V[:-1])
    return hamiltonian(Z) - down - up


@dataclass(frozen=True)
class ValueTable:
    """``V^N`` on a time grid times ``S_N``; linear interpolation in time.

    Only the ``x = +1`` values are stored; ``V(t, -1, mu) = V(t, +1, 1 - mu)``.
    """

    N: int
    T: float
    grid: TimeGrid
    values: np.ndarray  # shape (len(grid), N + 1)
    n_steps: int = 0

    @property
    def mu(self):
        return np.arange(self.N + 1) / self.N

    def _weights(self, t):
        t = float(t)
        if t < -1e-12 or t > self.T + 1e-12:
            raise ValueError(f"t={t} outside [0, {self.T}]")
        nodes = self.grid.nodes
        i = int(np.searchsorted(nodes, t, side="right")) - 1
        i = min(max(i, 0), nodes.size - 2)
        w = (t - nodes[i]) / (nodes[i + 1] - nodes[i])
        return i, min(max(w, 0.0), 1.0)

    def row(self, t):
        """``V(t, .)`` on all of ``S_N``."""
        i, w = self._weights(t)
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def value(self, t, mu, x=1):
        k = _as_index(mu, self.N)
        if check_state(x) == -1:
            k = self.N - k
        return float(self.row(t)[k])

    def z_row(self, t):
        r = self.row(t)
        return r[::-1] - r

    def z_grid(self):
        """``Z^N`` at every stored node, shape ``(len(grid), N + 1)``."""
        return self.values[:, ::-1] - self.values


def _as_index(mu, N):
    if isinstance(mu, SimplexFraction):
        if mu.n != N:
            raise ValueError(f"fraction has denominator {mu.n}, table has N={N}")
        return mu.k
    return SimplexFraction.from_value(mu, N).k


def default_step(T):
    return min(1e-3, T / 1000.0)


def solve_value(N, T, atol=ATOL, rtol=RTOL, step=None):
    """Solve the reduced Nash system for ``N + 1`` players on ``[0, T]``.

    The system is integrated with an explicit embedded Runge-Kutta 4(5) pair
    in reversed time ``s = T - t`` and sampled on a uniform grid of spacing at
    most ``step`` (default ``min(1e-3, T/1000)``).
    """
    N = check_int(N, "N", minimum=1)
    T = check_positive(T, "T")
    grid = TimeGrid.uniform(T, step if step is not None else default_step(T))
    mu = np.arange(N + 1) / N
    V_T = -(2.0 * mu - 1.0)
    s_eval = T - grid.nodes[::-1]
    s_eval[0] = 0.0
    s_eval[-1] = T
    sol = solve_ivp(
        lambda s, V: -value_rhs(T - s, V, N),
        (0.0, T),
        V_T,
        method="RK45",
        t_eval=s_eval,
        atol=atol,
        rtol=rtol,
    )
    if not sol.success:
        raise IntegrationError(f"value system integration failed: {sol.message}")
    values = sol.y.T[::-1].copy()
    values[-1] = V_T
    values.setflags(write=False)
    return ValueTable(N=N, T=T, grid=grid, values=values, n_steps=int(sol.nfev))


def z_n(table, t, mu):
    """``Z^N(t, mu) = V(t, 1 - mu) - V(t, mu)``."""
    k = _as_index(mu, table.N)
    r = table.row(t)
    return float(r[table.N - k] - r[k])


def w_n(table, t, mu):
    """``W^N(t, mu) = V(t, mu) - V(t, mu + 1/N)``; undefined at ``mu = 1``."""
    k = _as_index(mu, table.N)
    if k == table.N:
        raise ValueError("W^N is undefined at mu = 1")
    r = table.row(t)
    return float(r[k] - r[k + 1])


def nash_rate(table, t, x, mu):
    """Equilibrium flip rate of a player at ``x`` seeing fraction ``mu`` at ``+1``."""
    z = z_n(table, t, mu)
    if check_state(x) == 1:
        return max(-z, 0.0)
    return max(z, 0.0)


def verify_sign_property(table):
    """Largest violation of ``Z >= 0`` for ``mu >= 1/2`` and ``Z <= 0`` for ``mu <= 1/2``."""
    Z = table.z_grid()
    k = np.arange(table.N + 1)
    upper = 2 * k >= table.N
    lower = 2 * k <= table.N
    viol = max(
        float(np.max(np.maximum(-Z[:, upper], 0.0), initial=0.0)),
        float(np.max(np.maximum(Z[:, lower], 0.0), initial=0.0)),
    )
    return viol


def outside_band(N, eps):
    """Mask of ``mu in S_N`` with ``|mu - 1/2| >= eps``."""
    mu = np.arange(N + 1) / N
    return np.abs(mu - 0.5) >= eps - 1e-12


def convergence_error(N, T, eps, table=None):
    """Sup distance between ``V^N`` and ``U*`` on the grid, away from ``mu = 1/2``."""
    eps = check_positive(eps, "eps")
    if table is None:
        table = solve_value(N, T)
    mask = outside_band(table.N, eps)
    if not np.any(mask):
        return 0.0
    t = table.grid.nodes[:, None]
    mu = table.mu[mask][None, :]
    ref = u_star(np.broadcast_to(t, (t.size, mu.size)), np.broadcast_to(mu, (t.size, mu.size)), table.T)
    return float(np.max(np.abs(table.values[:, mask] - ref)))


def lipschitz_constant(table, eps):
    """``N * max |V(t, mu + 1/N) - V(t, mu)|`` over pairs inside ``S_N^eps``."""
    mask = outside_band(table.N, eps)
    pair = mask[:-1] & mask[1:]
    # both neighbours on the same side of 1/2
    mu = table.mu
    pair &= (mu[:-1] - 0.5) * (mu[1:] - 0.5) > 0
    if not np.any(pair):
        return 0.0
    diffs = np.abs(np.diff(table.values, axis=1))[:, pair]
    return float(table.N * diffs.max())


class NashValueFunction(BaseEstimator):
    """Value function of the symmetric N+1-player Nash equilibrium.

    ``fit`` solves the backward ODE system; ``predict`` evaluates
    ``V^N(t, mu)`` at rows ``(t, mu)`` of ``X`` with ``mu`` in ``S_N``.

    Parameters
    ----------
    N : int
        Number of players other than the representative one.
    T : float
        Horizon.
    atol, rtol : float
        Integrator tolerances.
    step : float or None
        Output grid spacing; ``None`` selects ``min(1e-3, T/1000)``.
    """

    def __init__(self, N=32, T=2.0, atol=ATOL, rtol=RTOL, step=None):
        self.N = N
        self.T = T
        self.atol = atol
        self.rtol = rtol
        self.step = step

    def fit(self, X=None, y=None):
        self.table_ = solve_value(self.N, self.T, self.atol, self.rtol, self.step)
        return self

    def predict(self, X):
        check_is_fitted(self, "table_")
        X = check_array(X, ensure_min_features=2)
        return np.array([self.table_.value(t, mu) for t, mu in X[:, :2]])

    def rate(self, t, x, mu):
        check_is_fitted(self, "table_")
        return nash_rate(self.table_, t, x, mu)

    def score(self, X=None, y=None, eps=0.2):
        """Negative sup error against the entropy value away from ``mu = 1/2``."""
        check_is_fitted(self, "table_")
        return -convergence_error(self.table_.N, self.table_.T, eps, table=self.table_)
