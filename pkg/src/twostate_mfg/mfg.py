"""Solutions of the two-state mean field game system.

The forward-backward system

    z' = z|z|/2,  m' = -m|z| + z,  z(T) = 2 m(T),  m(0) = m0

is solved in closed form once the terminal mean ``M = m(T)`` is known, and
``M`` must be a root of the consistency cubic

    T^2 M^3 + T(2 - T) M|M| + (1 - 2T) M - m0 = 0.

Depending on ``T`` relative to the threshold ``T(m0)`` there are one, two or
three roots, hence as many MFG solutions.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_mean, check_positive
from .core import TimeGrid, sgn

#: Roots closer than this are reported once.
MERGE_TOL = 1e-9
#: |f| below this at a critical point is read as a double root.
DOUBLE_ROOT_TOL = 1e-12
#: Width of the band around ``T(m0)`` treated as the degenerate case.
DEGENERACY_BAND = 1e-6
#: Largest residual accepted by :func:`build_trajectory`.
ROOT_RESIDUAL_TOL = 1e-8


def consistency_poly(M, T, m0):
    """Residual of the consistency cubic at ``M`` (vectorised in ``M``)."""
    M = np.asarray(M, dtype=float)
    out = T * T * M**3 + T * (2.0 - T) * M * np.abs(M) + (1.0 - 2.0 * T) * M - m0
    return float(out) if out.ndim == 0 else out


def _threshold_rhs(T):
    return (2.0 * T - 1.0) ** 2 * (T + 4.0) / (27.0 * T)


def threshold_time(m0):
    """Horizon ``T(m0)`` in ``[1/2, 2]`` at which MFG uniqueness is lost.

    Solves ``|m0| = (2T - 1)^2 (T + 4) / (27 T)`` by bisection.  Only the sign
    change at the bracket ends is relied on, not monotonicity of the map.
    """
    target = abs(check_mean(m0, "m0"))
    lo, hi = 0.5, 2.0
    f_lo, f_hi = _threshold_rhs(lo) - target, _threshold_rhs(hi) - target
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise ArithmeticError("threshold equation is not bracketed on [1/2, 2]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = _threshold_rhs(mid) - target
        if f_mid == 0.0:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _half_cubic(T, m0, side):
    """The cubic restricted to ``side * M >= 0`` as a polynomial and derivative."""
    b = side * T * (2.0 - T)
    c = 1.0 - 2.0 * T

    def f(M):
        return ((T * T * M + b) * M + c) * M - m0

    def df(M):
        return (3.0 * T * T * M + 2.0 * b) * M + c

    return f, df


def _bisect_newton(f, df, a, b, fa):
    """Root of ``f`` in ``[a, b]`` given a strict sign change, Newton polished."""
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0.0) == (fa < 0.0):
            a, fa = mid, fm
        else:
            b = mid
    root = 0.5 * (a + b)
    lo, hi = min(a, b), max(a, b)
    for _ in range(3):
        d = df(root)
        if d == 0.0:
            break
        step = root - f(root) / d
        if not lo <= step <= hi or abs(f(step)) >= abs(f(root)):
            break
        root = step
    return root


def _roots_on_half(T, m0, side):
    """Real roots with ``side * M`` in ``[0, 1]``."""
    f, df = _half_cubic(T, m0, side)
    breaks = [0.0, float(side)]
    crit = side * (2.0 * T - 1.0) / (3.0 * T)
    has_crit = 0.0 < side * crit < 1.0
    if has_crit:
        breaks.insert(1, crit)
    values = [f(b) for b in breaks]
    # f(0) = -m0 exactly, so 0 is a root only for m0 = 0; tiny m0 gets a bracketed root
    hits = [v == 0.0 if b == 0.0 else abs(v) <= DOUBLE_ROOT_TOL for b, v in zip(breaks, values)]
    roots = [b for b, hit in zip(breaks, hits) if hit]
    for n in range(len(breaks) - 1):
        a, b = breaks[n], breaks[n + 1]
        fa, fb = values[n], values[n + 1]
        if hits[n] or hits[n + 1]:
            continue
        if (fa < 0.0) != (fb < 0.0):
            roots.append(_bisect_newton(f, df, a, b, fa))
    return roots


@dataclass(frozen=True)
class ConsistencyRoots:
    """Sorted terminal means of all MFG solutions for one ``(T, m0)``.

    Labels follow the convention that ``M3`` is the root with the sign of
    ``m0`` and ``M1``, ``M2`` the two others, ``M2`` being the one closer to
    zero.  For ``m0 >= 0`` this means ``M1 < M2 < M3``; for ``m0 < 0`` the
    labels are mirrored.  A merged double root carries the label ``M2``.
    """

    T: float
    m0: float
    roots: tuple
    labels: tuple

    def __len__(self):
        return len(self.roots)

    def __iter__(self):
        return iter(zip(self.labels, self.roots))

    def __getitem__(self, label):
        for lab, root in zip(self.labels, self.roots):
            if lab == label:
                return root
        raise KeyError(label)

    def residuals(self):
        return [abs(consistency_poly(M, self.T, self.m0)) for M in self.roots]


def _label_roots(roots, m0):
    n = len(roots)
    # work in the frame where m0 >= 0, then mirror
    side = -1 if m0 < 0 else 1
    mirrored = sorted(side * r for r in roots)
    if n == 3:
        names = ["M1", "M2", "M3"]
    elif n == 2:
        names = ["M2", "M3"]
    else:
        names = ["M3"]
    by_root = {side * r: lab for r, lab in zip(mirrored, names)}
    return tuple(by_root[r] for r in roots)


def enumerate_terminal_means(T, m0):
    """All roots of the consistency cubic in ``[-1, 1]``, sorted and labelled."""
    T = check_positive(T, "T")
    m0 = check_mean(m0, "m0")
    candidates = _roots_on_half(T, m0, 1) + _roots_on_half(T, m0, -1)
    candidates.sort()
    merged = []
    for r in candidates:
        if merged and abs(r - merged[-1]) <= MERGE_TOL:
            # keep the representative with the smaller residual
            if abs(consistency_poly(r, T, m0)) < abs(consistency_poly(merged[-1], T, m0)):
                merged[-1] = r
            continue
        merged.append(r)
    merged = [0.0 if r == 0.0 else r for r in merged]
    roots = tuple(merged)
    return ConsistencyRoots(T=T, m0=m0, roots=roots, labels=_label_roots(roots, m0))


def expected_root_count(T, m0):
    """Number of MFG solutions predicted by the threshold classification.

    Returns ``None`` inside the degeneracy band around ``T(m0)`` (except
    exactly at the threshold, where the double root gives 2).
    """
    thr = threshold_time(m0)
    if m0 == 0.0:
        return 1 if T <= thr else 3
    if T == thr:
        return 2
    if abs(T - thr) <= DEGENERACY_BAND:
        return None
    return 1 if T < thr else 3


@dataclass(frozen=True)
class MfgTrajectory:
    """Closed-form solution ``(z(t), m(t))`` on ``[0, T]`` for one root ``M``."""

    T: float
    m0: float
    M: float
    label: str = field(default="", compare=False)

    def z(self, t):
        t = np.asarray(t, dtype=float)
        out = 2.0 * self.M / (abs(self.M) * (self.T - t) + 1.0)
        return float(out) if out.ndim == 0 else out

    def m(self, t):
        t = np.asarray(t, dtype=float)
        if self.M == 0.0:
            out = np.full_like(t, self.m0)
        else:
            s = sgn(self.M)
            a = abs(self.M)
            ratio = (a * (self.T - t) + 1.0) / (a * self.T + 1.0)
            out = (self.m0 - s) * ratio * ratio + s
        return float(out) if out.ndim == 0 else out

    def rates(self, t):
        """Optimal flip rates ``(alpha_+1, alpha_-1) = (z^-, z^+)``."""
        z = np.asarray(self.z(t))
        return np.maximum(-z, 0.0), np.maximum(z, 0.0)


def build_trajectory(T, m0, M, label=""):
    """Closed-form MFG solution ending at the terminal mean ``M``."""
    T = check_positive(T, "T")
    m0 = check_mean(m0, "m0")
    M = float(M)
    if M == 0.0 and m0 != 0.0:
        raise ValueError("M = 0 is a root only when m0 = 0")
    resid = abs(consistency_poly(M, T, m0))
    if resid > ROOT_RESIDUAL_TOL:
        raise ValueError(f"M={M!r} is not a consistency root (residual {resid:.3g})")
    return MfgTrajectory(T=T, m0=m0, M=M, label=label)


def verify_mfg_residual(traj, grid):
    """Largest finite-difference residual of the MFG ODEs over ``grid``.

    Derivatives come from second-order differences on the grid nodes, so the
    value is O(h^2) for a smooth trajectory.
    """
    t = grid.nodes
    z = np.atleast_1d(traj.z(t))
    m = np.atleast_1d(traj.m(t))
    dz = np.gradient(z, t, edge_order=2)
    dm = np.gradient(m, t, edge_order=2)
    r_z = np.abs(dz - z * np.abs(z) / 2.0)
    r_m = np.abs(dm - (-m * np.abs(z) + z))
    return float(max(r_z.max(), r_m.max()))


def check_branch_ordering(T, m0, n_points=50):
    """Monotonicity and ordering of the branch roots ``M_i(m)`` for ``m`` in ``(0, m0]``.

    Returns a dict of boolean flags, one per property.  Requires ``m0 > 0``
    and ``T > T(m0)`` so that three roots exist along the whole segment.
    """
    if not m0 > 0:
        raise ValueError("m0 must be positive")
    if not T > threshold_time(m0):
        raise ValueError("T must exceed the threshold T(m0)")
    q = -(2.0 * T - 1.0) / (3.0 * T)
    zero = enumerate_terminal_means(T, 0.0)
    m_plus = zero["M3"]
    ms = np.linspace(0.0, m0, n_points + 1)
    table = np.array([enumerate_terminal_means(T, m).roots for m in ms])
    M1, M2, M3 = table[:, 0], table[:, 1], table[:, 2]
    inner = slice(1, None)
    return {
        "M3_nondecreasing": bool(np.all(np.diff(M3) >= -1e-12)),
        "M2_nonincreasing": bool(np.all(np.diff(M2) <= 1e-12)),
        "M1_nondecreasing": bool(np.all(np.diff(M1) >= -1e-12)),
        "chain": bool(
            np.all(M3[inner] > m_plus)
            and np.all(m_plus > np.abs(M1[inner]))
            and np.all(np.abs(M1[inner]) > np.abs(M2[inner]))
            and np.all(np.abs(M2[inner]) > 0.0)
        ),
        "straddle_q": bool(np.all(M1[inner] < q) and np.all(q < M2[inner]) and np.all(M2[inner] < 0)),
        "asymmetry": bool(np.all(np.abs(M2[inner] - q) > np.abs(M1[inner] - q))),
    }


class MeanFieldGame(BaseEstimator):
    """All solutions of the MFG for one horizon and initial mean.

    ``fit`` enumerates the consistency roots and builds one trajectory per
    root.  ``predict`` evaluates the mean flow of the selected branch, the one
    whose terminal mean has the sign of ``m0`` (the minimiser of the
    potential cost; see :mod:`twostate_mfg.potential`).

    Parameters
    ----------
    T : float
        Horizon.
    m0 : float
        Initial mean in ``[-1, 1]``.
    """

    def __init__(self, T=2.0, m0=0.0):
        self.T = T
        self.m0 = m0

    def fit(self, X=None, y=None):
        T = check_positive(self.T, "T")
        m0 = check_mean(self.m0, "m0")
        self.threshold_ = threshold_time(m0)
        self.roots_ = enumerate_terminal_means(T, m0)
        self.trajectories_ = {
            label: build_trajectory(T, m0, M, label=label) for label, M in self.roots_
        }
        self.n_solutions_ = len(self.roots_)
        return self

    @property
    def selected_(self):
        check_is_fitted(self, "trajectories_")
        return self.trajectories_["M3"]

    def predict(self, X):
        """Mean of the selected branch at the times in ``X``."""
        check_is_fitted(self, "trajectories_")
        t = np.asarray(X, dtype=float).ravel()
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError("times must lie in [0, T]")
        return np.atleast_1d(self.selected_.m(t))
