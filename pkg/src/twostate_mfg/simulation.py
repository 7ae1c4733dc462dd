"""Event-driven simulation of the N+1-player Nash dynamics and its limit.

Every player carries a Poisson clock of rate ``LAMBDA = 2``, which dominates
all equilibrium rates because ``|Z^N| <= 2``.  At a tick of player ``i`` a
process at state ``x`` flips iff the shared uniform mark is below
``rate / LAMBDA`` (uniformization with thinning, exact in law).  Running the
Nash process ``Y`` and the i.i.d. limit process ``X~`` on the same clocks and
marks gives the synchronous coupling used for propagation of chaos.

Random streams
--------------
Player ``i`` of replication ``r`` draws from
``Generator(Philox(SeedSequence(seed, spawn_key=(r, i))))`` in a fixed order:
one uniform for the initial state, the Poisson tick count on ``[0, T]``, the
tick times, then one mark per tick.  Replications therefore do not depend on
each other or on execution order.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_bounded, check_int, check_positive
from .master import entropy_Z

LAMBDA = 2.0
#: Relative slack before a rate above ``LAMBDA`` counts as a contract violation.
RATE_SLACK = 1e-9


class RateBoundError(ArithmeticError):
    """A simulated rate exceeded the dominating rate ``LAMBDA``."""


@dataclass(frozen=True)
class SimConfig:
    """Parameters of a batch of replications.

    ``N`` counts the players other than the representative one, so a
    replication has ``N + 1`` players.  Initial states are i.i.d. with
    ``P(+1) = mu0`` unless ``initial`` fixes the configuration.
    ``flip_initial`` negates whatever initial configuration would be used,
    leaving all clocks and marks unchanged.
    """

    N: int
    T: float
    mu0: float = 0.5
    seed: int = 0
    reps: int = 1
    initial: tuple = None
    flip_initial: bool = False

    def __post_init__(self):
        object.__setattr__(self, "N", check_int(self.N, "N", minimum=1))
        object.__setattr__(self, "T", check_positive(self.T, "T"))
        object.__setattr__(self, "mu0", check_bounded(self.mu0, 0.0, 1.0, "mu0"))
        object.__setattr__(self, "seed", check_int(self.seed, "seed", minimum=0))
        object.__setattr__(self, "reps", check_int(self.reps, "reps", minimum=1))
        if self.initial is not None:
            init = tuple(int(s) for s in self.initial)
            if len(init) != self.N + 1 or any(s not in (-1, 1) for s in init):
                raise ValueError("initial must list N + 1 states in {-1, +1}")
            object.__setattr__(self, "initial", init)

    @property
    def n_players(self):
        return self.N + 1

    @property
    def m0(self):
        return 2.0 * self.mu0 - 1.0


def player_stream(seed, rep, player):
    """Independent counter-based generator for one (replication, player)."""
    ss = np.random.SeedSequence(seed, spawn_key=(rep, player))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Clocks:
    """Initial uniforms, tick times, owners and marks of one replication."""

    init_uniforms: np.ndarray
    times: np.ndarray
    players: np.ndarray
    marks: np.ndarray


def draw_clocks(cfg, rep):
    n = cfg.n_players
    init = np.empty(n)
    times, owners, marks = [], [], []
    for i in range(n):
        rng = player_stream(cfg.seed, rep, i)
        init[i] = rng.random()
        k = rng.poisson(LAMBDA * cfg.T)
        times.append(np.sort(rng.uniform(0.0, cfg.T, size=k)))
        owners.append(np.full(k, i, dtype=np.int64))
        marks.append(rng.random(size=k))
    times = np.concatenate(times)
    order = np.argsort(times, kind="stable")
    return Clocks(
        init,
        times[order],
        np.concatenate(owners)[order],
        np.concatenate(marks)[order],
    )


def initial_states(cfg, clocks):
    if cfg.initial is not None:
        states = np.array(cfg.initial, dtype=np.int64)
    else:
        states = np.where(clocks.init_uniforms < cfg.mu0, 1, -1).astype(np.int64)
    return -states if cfg.flip_initial else states


@dataclass(frozen=True)
class CoupledPaths:
    """Piecewise-constant paths of one replication, stored as a flip log.

    ``y_flip[e]`` / ``x_flip[e]`` say whether the Nash process / limit process
    of player ``players[e]`` jumped at ``times[e]``.  Only ticks at which at
    least one process jumps are kept.  ``x_flip`` is ``None`` when only the
    Nash process was simulated.
    """

    N: int
    T: float
    rep: int
    initial: np.ndarray
    times: np.ndarray
    players: np.ndarray
    y_flip: np.ndarray
    x_flip: np.ndarray = None
    n_ticks: int = 0
    ever_differ: np.ndarray = field(default=None, repr=False)

    def _state_at(self, t, flips):
        states = self.initial.copy()
        upto = np.searchsorted(self.times, t, side="right")
        hit = self.players[:upto][flips[:upto]]
        parity = np.bincount(hit, minlength=self.N + 1) % 2
        states[parity == 1] *= -1
        return states

    def y_at(self, t):
        return self._state_at(t, self.y_flip)

    def x_at(self, t):
        if self.x_flip is None:
            raise ValueError("limit process was not simulated")
        return self._state_at(t, self.x_flip)

    def count_path(self):
        """Initial count and, after each Nash jump, the number of players at ``+1``."""
        sel = self.y_flip
        times = self.times[sel]
        was_up = np.empty(times.size, dtype=bool)
        states = self.initial.copy()
        for e, i in enumerate(self.players[sel]):
            was_up[e] = states[i] == 1
            states[i] = -states[i]
        k0 = int(np.sum(self.initial == 1))
        ks = k0 + np.cumsum(np.where(was_up, -1, 1))
        return k0, times, ks

    def jump_counts(self, process="y"):
        flips = self.y_flip if process == "y" else self.x_flip
        return np.bincount(self.players[flips], minlength=self.N + 1)

    def sup_distance(self):
        """``sup_t |Y_i(t) - X~_i(t)|`` for every player, each 0 or 2."""
        if self.ever_differ is None:
            raise ValueError("limit process was not simulated")
        return 2 * self.ever_differ.astype(np.int64)

    def terminal_mean(self):
        return float(np.mean(self.y_at(self.T)))


def limit_rate_field(flow):
    """``t -> Z(T - t, m*(t))``, the signed rate driving the limit process."""
    T = flow.T

    def z(t):
        t = np.asarray(t, dtype=float)
        if t.size == 0:
            return np.zeros(t.shape)
        return entropy_Z(np.clip(T - t, 0.0, None), flow(t))

    return z


def _nash_z_at_ticks(table, times):
    """Interpolation indices and weights of the value table at the tick times."""
    nodes = table.grid.nodes
    idx = np.clip(np.searchsorted(nodes, times, side="right") - 1, 0, nodes.size - 2)
    w = (times - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    return idx, np.clip(w, 0.0, 1.0)


def _check_rate(rate, t, who):
    if rate > LAMBDA * (1.0 + RATE_SLACK):
        raise RateBoundError(f"{who} rate {rate!r} at t={t} exceeds {LAMBDA}")


def run_replication(cfg, rep, table=None, limit_z=None):
    """Simulate one replication of the Nash process, the limit process, or both.

    ``table`` drives the Nash process ``Y``; ``limit_z`` (a vectorised
    ``t -> Z`` as returned by :func:`limit_rate_field`) drives ``X~``.
    """
    if table is None and limit_z is None:
        raise ValueError("nothing to simulate")
    if table is not None and (table.N != cfg.N or abs(table.T - cfg.T) > 1e-12):
        raise ValueError("value table was solved for a different N or T")
    clocks = draw_clocks(cfg, rep)
    init = initial_states(cfg, clocks)
    times, owners, marks = clocks.times, clocks.players, clocks.marks
    n_ticks = times.size
    N = cfg.N

    y = init.tolist()
    x = init.tolist()
    k = sum(1 for s in y if s == 1)
    differ = [False] * (N + 1)
    y_flip = np.zeros(n_ticks, dtype=bool)
    x_flip = np.zeros(n_ticks, dtype=bool)

    if table is not None:
        idx, w = _nash_z_at_ticks(table, times)
        Zg = table.z_grid()
        z_lo = Zg[idx]
        z_hi = Zg[np.minimum(idx + 1, Zg.shape[0] - 1)]
        w_list = w.tolist()
    if limit_z is not None:
        zt = np.atleast_1d(limit_z(times)).tolist()

    owner_list = owners.tolist()
    mark_list = (marks * LAMBDA).tolist()
    for e in range(n_ticks):
        i = owner_list[e]
        u = mark_list[e]
        if table is not None:
            yi = y[i]
            j = k - 1 if yi == 1 else k
            we = w_list[e]
            z = (1.0 - we) * z_lo[e, j] + we * z_hi[e, j]
            rate = -z if yi == 1 else z
            if rate > 0.0:
                _check_rate(rate, times[e], "Nash")
                if u < rate:
                    y[i] = -yi
                    k += -1 if yi == 1 else 1
                    y_flip[e] = True
        if limit_z is not None:
            xi = x[i]
            z = zt[e]
            rate = -z if xi == 1 else z
            if rate > 0.0:
                _check_rate(rate, times[e], "limit")
                if u < rate:
                    x[i] = -xi
                    x_flip[e] = True
        if table is not None and limit_z is not None and y[i] != x[i]:
            differ[i] = True

    keep = y_flip | x_flip
    return CoupledPaths(
        N=N,
        T=cfg.T,
        rep=rep,
        initial=init,
        times=times[keep],
        players=owners[keep],
        y_flip=y_flip[keep],
        x_flip=x_flip[keep] if limit_z is not None else None,
        n_ticks=n_ticks,
        ever_differ=np.array(differ) if (table is not None and limit_z is not None) else None,
    )


def simulate_nash(cfg, table):
    """All replications of the Nash dynamics (the limit process is not run)."""
    return [run_replication(cfg, r, table=table) for r in range(cfg.reps)]


def simulate_iid_limit(cfg, flow):
    """All replications of the i.i.d. limit process driven by the induced flow."""
    if cfg.mu0 == 0.5 and cfg.initial is None:
        raise ValueError("the limit process is undefined for mu0 = 1/2")
    _check_flow(cfg, flow)
    z = limit_rate_field(flow)
    return [run_replication(cfg, r, limit_z=z) for r in range(cfg.reps)]


def simulate_coupled(cfg, table, flow):
    """Nash and limit processes on shared clocks and marks."""
    if cfg.mu0 == 0.5 and cfg.initial is None:
        raise ValueError("the limit process is undefined for mu0 = 1/2")
    _check_flow(cfg, flow)
    z = limit_rate_field(flow)
    return [run_replication(cfg, r, table=table, limit_z=z) for r in range(cfg.reps)]


def _check_flow(cfg, flow):
    if abs(flow.T - cfg.T) > 1e-12:
        raise ValueError("flow horizon does not match the configuration")
    if cfg.initial is None and abs(flow.m0 - cfg.m0) > 1e-12:
        raise ValueError("flow initial mean does not match mu0")


@dataclass(frozen=True)
class ChaosEstimate:
    """Monte Carlo estimate of ``E[sup_t |Y_i - X~_i|]`` for one ``N``."""

    N: int
    estimate: float
    stderr: float
    reps: int


def chaos_estimate(paths):
    """Mean of the per-replication player average of the sup distance.

    Averaging over the exchangeable players of a replication estimates the
    same expectation as player 0 alone with lower variance; the standard
    error is taken across independent replications.
    """
    per_rep = np.array([p.sup_distance().mean() for p in paths])
    reps = per_rep.size
    se = float(per_rep.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return ChaosEstimate(paths[0].N, float(per_rep.mean()), se, reps)


def chaos_metric(N_list, mu0, T, reps, seed=0, tables=None, flow=None):
    """Chaos estimates for every ``N`` in ``N_list``.

    ``tables`` may map ``N`` to precomputed value tables; missing ones are
    solved here.  ``flow`` defaults to the induced flow from ``2 mu0 - 1``.
    """
    from .master import induced_flow
    from .nash import solve_value

    if mu0 == 0.5:
        raise ValueError("propagation of chaos needs mu0 != 1/2")
    tables = dict(tables or {})
    if flow is None:
        flow = induced_flow(2.0 * mu0 - 1.0, T)
    out = []
    for N in N_list:
        table = tables.get(N) or solve_value(N, T)
        cfg = SimConfig(N=N, T=T, mu0=mu0, seed=seed, reps=reps)
        out.append(chaos_estimate(simulate_coupled(cfg, table, flow)))
    return out


def loglog_slope(estimates):
    """Least-squares slope of ``log(estimate)`` against ``log(N)``."""
    N = np.array([e.N for e in estimates], dtype=float)
    v = np.array([e.estimate for e in estimates], dtype=float)
    if np.any(v <= 0):
        raise ValueError("estimates must be positive for a log-log fit")
    return float(np.polyfit(np.log(N), np.log(v), 1)[0])


@dataclass(frozen=True)
class ZeroStartResult:
    """Terminal-sign histogram of the Nash dynamics started at ``mu0 = 1/2``."""

    N: int
    T: float
    reps: int
    frequencies: dict
    terminal_means: np.ndarray
    checkpoints: np.ndarray
    mean_abs_path: np.ndarray

    @property
    def mean_abs_terminal(self):
        return float(np.mean(np.abs(self.terminal_means)))


def classify_sign(mean, N):
    """``'+'``, ``'-'`` or ``'0'`` with a dead band ``|mean| < 1/N``."""
    if abs(mean) < 1.0 / N:
        return "0"
    return "+" if mean > 0 else "-"


def zero_start_experiment(cfg, table, n_checkpoints=21):
    """Run the Nash dynamics from ``mu0 = 1/2`` and histogram the terminal sign."""
    if cfg.mu0 != 0.5:
        raise ValueError("the zero-start experiment needs mu0 = 1/2")
    checkpoints = np.linspace(0.0, cfg.T, n_checkpoints)
    terminal = np.empty(cfg.reps)
    abs_path = np.zeros(n_checkpoints)
    counts = {"+": 0, "-": 0, "0": 0}
    for r in range(cfg.reps):
        p = run_replication(cfg, r, table=table)
        for c, t in enumerate(checkpoints):
            abs_path[c] += abs(np.mean(p.y_at(t)))
        terminal[r] = p.terminal_mean()
        counts[classify_sign(terminal[r], cfg.N)] += 1
    freqs = {s: c / cfg.reps for s, c in counts.items()}
    return ZeroStartResult(cfg.N, cfg.T, cfg.reps, freqs, terminal, checkpoints, abs_path / cfg.reps)


def band_exit_bound(N, eps, mu0=None):
    """Chebyshev bound on ``P(xi not in Sigma_N^eps)`` for i.i.d. initial states.

    With ``mu0 = 1/2 + 2 eps`` (the default) this is
    ``Var[mu] / (2 eps - eps_N)^2``; valid for ``N >= 2 / eps``.
    """
    if mu0 is None:
        mu0 = 0.5 + 2.0 * eps
    eps_N = (N / 2.0 + N * eps + 1.0) / (N + 1.0) - 0.5
    gap = (mu0 - 0.5) - eps_N
    if gap <= 0:
        return 1.0
    return min(1.0, mu0 * (1.0 - mu0) / (N + 1.0) / gap**2)


def in_band_complement(states, eps):
    """Whether a configuration of ``N + 1`` players lies in ``Sigma_N^eps``.

    The configuration is inside iff the number of players at ``+1`` avoids
    the open interval ``(N/2 - N eps, N/2 + N eps + 1)``.
    """
    states = np.asarray(states)
    N = states.size - 1
    k = int(np.sum(states == 1))
    return not (N / 2.0 - N * eps < k < N / 2.0 + N * eps + 1.0)


def expected_jumps_two_players(table, initial, n_steps=4000):
    """Expected number of Nash jumps for ``N = 1`` by solving the forward equation.

    The two-player chain lives on ``{-1, 1}^2``; the probability vector is
    propagated with the trapezoidal rule and the jump intensity integrated
    along the way.  Serves as a brute-force check of the simulator.
    """
    if table.N != 1:
        raise ValueError("only the two-player game is supported")
    configs = [(a, b) for a in (-1, 1) for b in (-1, 1)]
    index = {c: n for n, c in enumerate(configs)}
    p = np.zeros(4)
    p[index[tuple(initial)]] = 1.0

    def generator(t):
        Q = np.zeros((4, 4))
        Z = table.z_row(t)
        for c in configs:
            for who in (0, 1):
                me, other = c[who], c[1 - who]
                mu_k = 1 if other == 1 else 0
                z = Z[mu_k]
                rate = max(-z, 0.0) if me == 1 else max(z, 0.0)
                new = list(c)
                new[who] = -me
                Q[index[c], index[tuple(new)]] += rate
                Q[index[c], index[c]] -= rate
        return Q

    ts = np.linspace(0.0, table.T, n_steps + 1)
    total = 0.0
    Q0 = generator(ts[0])
    for a, b in zip(ts[:-1], ts[1:]):
        Q1 = generator(b)
        h = b - a
        # Crank-Nicolson step for p' = p Q
        A = np.eye(4) - 0.5 * h * Q1
        rhs = p @ (np.eye(4) + 0.5 * h * Q0)
        p_new = np.linalg.solve(A.T, rhs)
        intensity0 = -p @ np.diag(Q0)
        intensity1 = -p_new @ np.diag(Q1)
        total += 0.5 * h * (intensity0 + intensity1)
        p, Q0 = p_new, Q1
    return total
