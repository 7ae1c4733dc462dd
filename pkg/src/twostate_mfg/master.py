"""Entropy solution of the reduced master equation.

With ``Z(tau, m) = U(T - tau, -1, m) - U(T - tau, 1, m)`` the master equation
collapses to the scalar conservation law

    dZ/dtau + d/dm [ m Z|Z|/2 - Z^2/2 ] = 0,    Z(0, m) = 2m,

whose entropy solution is built from the MFG root that shares the sign of
``m``.  For ``tau > 1/2`` it has a stationary shock at ``m = 0``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import (
    check_bounded_array,
    check_fraction,
    check_mean,
    check_nonnegative,
    check_positive,
    check_state,
)
from .core import TimeGrid

#: Tolerances of the adaptive integrator used for the induced flow.
FLOW_ATOL = 1e-9
FLOW_RTOL = 1e-8


def flux(m, z):
    """Flux ``m z|z|/2 - z^2/2`` of the conservation law."""
    return m * z * np.abs(z) / 2.0 - z * z / 2.0


def branch_root_at_zero(tau, side=1):
    """Nonzero root of the cubic at ``m = 0`` on the given side, or 0.

    For ``M != 0`` the cubic divides by ``M`` into the quadratic
    ``tau^2 M^2 + side tau(2 - tau) M + (1 - 2 tau) = 0``; its root with sign
    ``side`` exists only for ``tau > 1/2``.
    """
    tau = check_nonnegative(tau, "tau")
    if tau <= 0.5:
        return 0.0
    disc = math.sqrt(tau * tau + 4.0 * tau)
    if side > 0:
        return ((tau - 2.0) + disc) / (2.0 * tau)
    return ((2.0 - tau) - disc) / (2.0 * tau)


def _positive_root(tau, m, n_bisect=64):
    """Positive root of ``g(., tau, m)`` for arrays with ``tau > 0``, ``0 < m <= 1``."""
    a2 = tau * tau
    b = tau * (2.0 - tau)
    c = 1.0 - 2.0 * tau

    def g(M):
        return ((a2 * M + b) * M + c) * M - m

    def dg(M):
        return (3.0 * a2 * M + 2.0 * b) * M + c

    # left end of the monotone piece; for tiny tau the critical point is far negative
    with np.errstate(over="ignore"):
        lo = np.maximum((2.0 * tau - 1.0) / (3.0 * tau), 0.0)
    hi = np.ones_like(m)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        neg = g(mid) < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    root = 0.5 * (lo + hi)
    for _ in range(2):
        d = dg(root)
        safe = d != 0.0
        step = np.where(safe, root - g(root) / np.where(safe, d, 1.0), root)
        better = safe & (np.abs(g(step)) < np.abs(g(root))) & (step >= lo) & (step <= hi)
        root = np.where(better, step, root)
    return root


def sign_root(tau, m):
    """Root ``M(tau, m)`` of the cubic with the sign of ``m``; zero at ``m = 0``.

    Vectorised over broadcastable ``tau`` and ``m``.
    """
    tau_a = np.asarray(tau, dtype=float)
    m_a = check_bounded_array(m, -1.0, 1.0, "m")
    if np.any(tau_a < 0):
        raise ValueError("tau must be nonnegative")
    tau_b, m_b = np.broadcast_arrays(tau_a, m_a)
    out = np.zeros(tau_b.shape)
    mag = np.abs(m_b)
    at_zero_time = (tau_b == 0.0) & (mag > 0)
    out[at_zero_time] = mag[at_zero_time]
    todo = (tau_b > 0.0) & (mag > 0)
    if np.any(todo):
        out[todo] = _positive_root(tau_b[todo], mag[todo])
    out = np.sign(m_b) * out
    return float(out) if out.ndim == 0 else out


def entropy_Z(tau, m):
    """Entropy solution ``Z(tau, m) = 2M / (tau |M| + 1)``."""
    M = np.asarray(sign_root(tau, m))
    out = 2.0 * M / (np.asarray(tau) * np.abs(M) + 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class JumpCheck:
    """Diagnostics of the stationary shock at ``m = 0``."""

    tau: float
    z_plus: float
    z_minus: float
    jump_ok: bool
    rh_residual: float

    def __iter__(self):
        return iter((self.jump_ok, self.rh_residual))


def check_entropy_jump(tau, tol=1e-10):
    """Check ``Z+ = -Z- >= 0`` and the Rankine-Hugoniot balance at the shock.

    The one-sided limits are computed from the explicit roots of the two
    branch quadratics, independently for each side.
    """
    tau = check_nonnegative(tau, "tau")
    if tau <= 0.5:
        raise ValueError("no discontinuity at m = 0 for tau <= 1/2")
    M_plus = branch_root_at_zero(tau, 1)
    M_minus = branch_root_at_zero(tau, -1)
    z_plus = 2.0 * M_plus / (tau * abs(M_plus) + 1.0)
    z_minus = 2.0 * M_minus / (tau * abs(M_minus) + 1.0)
    jump_ok = abs(z_plus + z_minus) <= tol and z_plus > 0.0
    rh = abs(flux(0.0, z_minus) - flux(0.0, z_plus))
    return JumpCheck(tau, z_plus, z_minus, bool(jump_ok), float(rh))


def value_U(t, x, m, T):
    """Value ``U(t, x, m)`` of the representative player.

    For ``m > 0`` the ``+1`` player does not move, so ``U(t, 1, m) = -M`` and
    ``U(t, -1, m) = -M + 2M / (tau M + 1)`` with ``tau = T - t``; negative
    means follow from ``U(t, x, m) = U(t, -x, -m)``.  Vectorised in ``t``, ``m``.
    """
    x = check_state(x)
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > T + 1e-12):
        raise ValueError("t must lie in [0, T]")
    tau = np.clip(T - t, 0.0, None)
    m = check_bounded_array(m, -1.0, 1.0, "m")
    tau, m = np.broadcast_arrays(tau, m)
    # reduce to m >= 0 and the state x' = x * sign(m)
    s = np.where(m < 0, -1.0, 1.0)
    M = np.abs(np.asarray(sign_root(tau, m)))
    x_eff = x * s
    u_plus = -M
    u_minus = -M + 2.0 * M / (tau * M + 1.0)
    out = np.where(x_eff > 0, u_plus, u_minus)
    out = np.where(m == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def u_star(t, mu, T):
    """``U*(t, mu) = U(t, 1, 2 mu - 1)``."""
    mu = check_bounded_array(mu, 0.0, 1.0, "mu")
    out = value_U(t, 1, 2.0 * mu - 1.0, T)
    return out


def value_U_by_shooting(t, x, m, T, rtol=1e-12, atol=1e-13):
    """Independent numerical value of ``U(t, x, m)`` for checking :func:`value_U`.

    Solves the MFG started at time ``t`` from mean ``m`` by shooting on the
    terminal mean: for a trial ``M`` with the sign of ``m`` the MFG system
    together with the two HJB equations for ``u(., +1)``, ``u(., -1)`` is
    integrated backward from ``T`` and ``M`` is adjusted until the mean at
    time ``t`` equals ``m``.  No closed form and no cubic are used.
    """
    x = check_state(x)
    m = check_mean(m)
    if m == 0.0:
        return 0.0
    if m < 0:
        return value_U_by_shooting(t, -x, -m, T, rtol, atol)
    if t >= T:
        return -m * x

    def rhs(s, y):
        z, mm, u1, um1 = y
        a1 = max(-(um1 - u1), 0.0)
        am1 = max(-(u1 - um1), 0.0)
        return [z * abs(z) / 2.0, -mm * abs(z) + z, a1 * a1 / 2.0, am1 * am1 / 2.0]

    def backward(M):
        y_T = [2.0 * M, M, -M, M]
        sol = solve_ivp(rhs, (T, t), y_T, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise ArithmeticError(sol.message)
        return sol.y[:, -1]

    M = brentq(lambda M: backward(M)[1] - m, 1e-14, 1.0, xtol=1e-15, rtol=1e-15)
    _, _, u1, um1 = backward(M)
    return float(u1 if x == 1 else um1)


def pde_residual(field, tau, m, h):
    """Central-difference residual of the conservation law at ``(tau, m)``.

    Only valid on the smooth region: the stencil must stay on one side of
    ``m = 0`` and inside ``tau >= 0``.
    """
    h = check_positive(h, "h")
    m = check_mean(m)
    if abs(m) <= h or (m - h) * (m + h) <= 0:
        raise ValueError("stencil straddles the shock at m = 0")
    if tau - h < 0:
        raise ValueError("stencil leaves tau >= 0")
    Z = field.Z
    dz_dtau = (Z(tau + h, m) - Z(tau - h, m)) / (2.0 * h)
    dflux_dm = (flux(m + h, Z(tau, m + h)) - flux(m - h, Z(tau, m - h))) / (2.0 * h)
    return abs(dz_dtau + dflux_dm)


@dataclass(frozen=True)
class InducedFlow:
    """Mean flow driven by the entropy field, sampled on a time grid.

    ``values[i]`` is the mean at ``grid.nodes[i]``; calling the object
    evaluates the dense interpolant of the integrator.
    """

    m0: float
    T: float
    grid: TimeGrid
    values: np.ndarray
    _dense: object

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self._dense(np.clip(t, 0.0, self.T))
        out = np.clip(out, -1.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def terminal(self):
        return float(self.values[-1])


def induced_flow(m0, T, grid=None, atol=FLOW_ATOL, rtol=FLOW_RTOL):
    """Integrate ``m' = -m|Z(T - t, m)| + Z(T - t, m)`` forward from ``m0 != 0``."""
    m0 = check_mean(m0, "m0")
    T = check_positive(T, "T")
    if m0 == 0.0:
        raise ValueError("the induced flow is not unique from m0 = 0")
    if grid is None:
        grid = TimeGrid.uniform(T, min(1e-2, T / 100))
    elif abs(grid.horizon - T) > 1e-12:
        raise ValueError("grid horizon does not match T")

    def rhs(t, y):
        mm = min(max(y[0], -1.0), 1.0)
        z = entropy_Z(max(T - t, 0.0), mm)
        return [-mm * abs(z) + z]

    sol = solve_ivp(
        rhs, (0.0, T), [m0], method="RK45", atol=atol, rtol=rtol, dense_output=True
    )
    if not sol.success:
        raise ArithmeticError(f"induced flow integration failed: {sol.message}")
    dense = sol.sol
    values = np.clip(dense(grid.nodes)[0], -1.0, 1.0)
    values.setflags(write=False)
    return InducedFlow(m0, T, grid, values, lambda t: dense(t)[0])


class EntropyField(BaseEstimator):
    """Entropy solution ``Z`` and value ``U`` of the master equation on ``[0, T]``.

    ``fit`` validates the horizon and tabulates the shock diagnostics;
    ``predict`` returns ``U*(t, mu)`` for rows ``(t, mu)`` of ``X``, which is
    the object the N-player values converge to.

    Parameters
    ----------
    T : float, default=2.0
        Horizon of the game.
    """

    def __init__(self, T=2.0):
        self.T = T

    def fit(self, X=None, y=None):
        self.T_ = check_positive(self.T, "T")
        self.has_shock_ = self.T_ > 0.5
        self.shock_ = check_entropy_jump(self.T_) if self.has_shock_ else None
        return self

    def M(self, tau, m):
        return sign_root(tau, m)

    def Z(self, tau, m):
        return entropy_Z(tau, m)

    def U(self, t, x, m):
        check_is_fitted(self, "T_")
        return value_U(t, x, m, self.T_)

    def Ustar(self, t, mu):
        check_is_fitted(self, "T_")
        return u_star(t, mu, self.T_)

    def induced_flow(self, m0, grid=None):
        check_is_fitted(self, "T_")
        return induced_flow(m0, self.T_, grid)

    def predict(self, X):
        check_is_fitted(self, "T_")
        X = check_array(X, ensure_min_features=2)
        return np.atleast_1d(self.Ustar(X[:, 0], X[:, 1]))
