"""The MFG as optimality system of a deterministic control problem.

The population ``(m_1, m_-1)`` is steered by open-loop rates at cost

    J(alpha) = int_0^T [m_1 alpha_1^2/2 + m_-1 alpha_-1^2/2] dt - (m_1 - m_-1)^2(T)/2,

and every MFG solution is a critical point.  Along the branch ending at ``M``
the cost equals ``phi(M) = M^2 (T - 1/2 - T|M|)``; the branch with the sign of
``m0`` is the unique minimiser when ``m0 != 0``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from ._validation import check_bounded, check_mean, check_positive
from .mfg import build_trajectory, enumerate_terminal_means

QUAD_TOL = 1e-10


def phi(M, T):
    M = check_bounded(M, -1.0, 1.0, "M")
    return M * M * (T - 0.5 - T * abs(M))


def terminal_potential(m):
    """``-(m_1 - m_-1)^2 / 2`` written in terms of the mean."""
    return -0.5 * m * m


def running_cost(traj, t):
    a_up, a_down = traj.rates(t)
    m = traj.m(t)
    m1, m_1 = (1.0 + m) / 2.0, (1.0 - m) / 2.0
    return m1 * a_up**2 / 2.0 + m_1 * a_down**2 / 2.0


def cost_quadrature(traj, tol=QUAD_TOL):
    """Cost of the branch by adaptive Gauss-Kronrod quadrature.

    ``z`` keeps the sign of ``M`` along a branch, so the integrand is smooth
    and needs no splitting.
    """
    integral, _ = quad(
        lambda t: float(running_cost(traj, t)),
        0.0,
        traj.T,
        epsabs=tol,
        epsrel=tol,
        limit=200,
    )
    return integral + terminal_potential(traj.m(traj.T))


@dataclass(frozen=True)
class BranchCosts:
    T: float
    m0: float
    labels: tuple
    roots: tuple
    costs: tuple
    argmin: tuple

    def __getitem__(self, label):
        return self.costs[self.labels.index(label)]

    @property
    def tie(self):
        return len(self.argmin) > 1

    def ordering_holds(self):
        """``phi(M3) < phi(M1) < phi(M2)`` when three branches exist."""
        if len(self.roots) != 3:
            return False
        return self["M3"] < self["M1"] < self["M2"]


def branch_costs(T, m0, tie_tol=1e-12):
    """Cost ``phi(M)`` of every MFG branch and the minimising label(s)."""
    T = check_positive(T, "T")
    m0 = check_mean(m0, "m0")
    roots = enumerate_terminal_means(T, m0)
    costs = tuple(phi(M, T) for M in roots.roots)
    best = min(costs)
    argmin = tuple(lab for lab, c in zip(roots.labels, costs) if c - best <= tie_tol)
    return BranchCosts(T, m0, roots.labels, roots.roots, costs, argmin)


def ordering_checks(T, m0, n_points=25):
    """Inequalities between branch costs along ``m in (0, m0]``.

    Checks ``phi(M3(m)) < phi(M+) < phi(M1(m))``, ``phi(M1(m)) < phi(M2(m))``
    and ``phi(M2(m)) > 0`` on a grid, plus the tie
    ``phi(M+) = phi(M-) < 0`` at ``m = 0``.
    """
    if not m0 > 0:
        raise ValueError("m0 must be positive (negative m0 is the mirror case)")
    zero = branch_costs(T, 0.0)
    phi_plus, phi_minus = zero["M3"], zero["M1"]
    ok_outer = ok_inner = ok_positive = True
    for m in np.linspace(m0 / n_points, m0, n_points):
        c = branch_costs(T, float(m))
        if len(c.roots) != 3:
            raise ValueError(f"fewer than three branches at m={m}")
        ok_outer &= c["M3"] < phi_plus < c["M1"]
        ok_inner &= c["M1"] < c["M2"]
        ok_positive &= c["M2"] > 0.0
    return {
        "tie_at_zero": abs(phi_plus - phi_minus) <= 1e-15 and phi_plus < 0.0,
        "M3_below_Mplus_below_M1": bool(ok_outer),
        "M1_below_M2": bool(ok_inner),
        "M2_positive": bool(ok_positive),
    }


def quadrature_residuals(T, m0):
    """``|cost_quadrature - phi|`` for every branch at ``(T, m0)``."""
    roots = enumerate_terminal_means(T, m0)
    out = {}
    for label, M in roots:
        traj = build_trajectory(T, m0, M, label)
        out[label] = abs(cost_quadrature(traj) - phi(M, T))
    return out
