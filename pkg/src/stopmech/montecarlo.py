"""Monte Carlo cross-checks of the quadrature values.

Simulates truthful play under a threshold exit rule and accumulates the
discounted payoff ledgers of both participants and the realized stopping
times.  Initial states and tabular kernel rows are piecewise-linear node
densities, so sampling inverts the exact piecewise-quadratic mass function
cell by cell — the empirical law matches the quadrature law exactly, not
just asymptotically, which is what makes the 3-standard-error agreement
checks sharp.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from . import gridtools as gt
from .mechanism import ReportingStrategy, StoppingPolicy, compose_report

# ===================== exact density sampling =====================


def sample_pl_density(points, density, u):
    """Inverse-CDF draws from a piecewise-linear node density.

    ``u`` are uniform variates on (0, 1); the density needs unit
    piecewise-linear mass.  Within a cell the mass function is quadratic and
    is inverted in the numerically stable root form.
    """
    points = np.asarray(points, dtype=float)
    density = np.asarray(density, dtype=float)
    cdf = gt.cumulative_integral(points, density)
    total = cdf[-1]
    m = np.asarray(u, dtype=float) * total
    idx = np.clip(np.searchsorted(cdf, m, side="right") - 1, 0, points.size - 2)
    x0 = points[idx]
    h = points[idx + 1] - x0
    d0 = density[idx]
    slope = (density[idx + 1] - d0) / h
    rem = m - cdf[idx]
    disc = np.sqrt(np.maximum(d0 * d0 + 2.0 * slope * rem, 0.0))
    denom = d0 + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(denom > 0.0, 2.0 * rem / denom, 0.0)
    return x0 + np.minimum(y, h)


def _sample_initial(env, rng, n):
    return sample_pl_density(env.grid(1).points, env.f1, rng.random(n))


def _sample_next(ker, next_points, theta, a, rng):
    """One kernel step for each (state, allocation) pair."""
    n = theta.size
    if ker.kind == "affine-uniform":
        return ker.c1 * theta + ker.c2 * a + ker.w * rng.random(n)
    u = rng.random(n)
    out = np.empty(n)
    for k in range(n):
        row = ker._interp_row(theta[k], a[k])
        out[k] = sample_pl_density(ker.next_points, row, u[k])
    return np.interp(out, next_points, next_points)  # clamp into the grid span


# ===================== single trajectories =====================


@dataclass
class Trajectory:
    states: list
    reports: list
    allocations: list
    payments: list                 # flow transfer received each active period
    rho_received: float
    tau: int
    agent_payoff: float
    principal_payoff: float
    seed: int
    index: int = 0

    def to_dict(self):
        return {
            "states": [float(v) for v in self.states],
            "reports": [float(v) for v in self.reports],
            "allocations": [float(v) for v in self.allocations],
            "payments": [float(v) for v in self.payments],
            "rho_received": float(self.rho_received),
            "tau": int(self.tau),
            "agent_payoff": float(self.agent_payoff),
            "principal_payoff": float(self.principal_payoff),
            "seed": int(self.seed), "index": int(self.index),
        }


def sample_trajectory(env, mech, strategy, stop, seed, index=0):
    """One realized path under a reporting strategy and stopping policy.

    The mechanism sees reports (and the previous report as final-period
    memory); utilities accrue at the true state; the payoff ledger books the
    flow payment each continuing period and the stop payment plus the posted
    price at exit.  The random stream derives from (seed, index), so batches
    are reproducible under any scheduling.
    """
    if strategy is None:
        strategy = ReportingStrategy.truthful()
    if not isinstance(stop, StoppingPolicy):
        stop = StoppingPolicy.threshold(np.atleast_1d(np.asarray(stop, dtype=float)))
    rng = np.random.default_rng([int(seed), int(index)])
    T, delta = env.T, env.delta
    theta = float(_sample_initial(env, rng, 1)[0])
    states, reports, allocs, pays = [], [], [], []
    agent = principal = 0.0
    prev_report = None
    tau = T
    for t in range(1, T + 1):
        grid = env.grid(t)
        report = float(compose_report(strategy, t, theta, grid))
        use_mem = t == T and T >= 2 and (mech.alloc.needs_memory(t)
                                         or mech.pay.xi[t - 1].needs_memory)
        mm = prev_report if use_mem else None
        a = float(mech.alloc(t, report, mm))
        u1 = float(env.u1.u(t, theta, a))
        u0 = float(env.u0.u(t, theta, a))
        stopping = bool(stop.stops(t, theta, T=T))
        if stopping:
            pay = float(mech.pay.xi_at(t, report, mm))
            rho = float(mech.pay.rho[t - 1])
            agent += delta ** t * (u1 + pay) + rho
            principal += delta ** t * (u0 - pay) - rho
            tau = t
        else:
            pay = float(mech.pay.phi_at(t, report))
            rho = 0.0
            agent += delta ** t * (u1 + pay)
            principal += delta ** t * (u0 - pay)
        states.append(theta)
        reports.append(report)
        allocs.append(a)
        pays.append(pay)
        if stopping:
            break
        theta = float(_sample_next(env.kernel(t), env.grid(t + 1).points,
                                   np.array([theta]), np.array([a]), rng)[0])
        prev_report = report
    return Trajectory(states=states, reports=reports, allocations=allocs,
                      payments=pays, rho_received=float(mech.pay.rho[tau - 1]),
                      tau=tau, agent_payoff=agent, principal_payoff=principal,
                      seed=int(seed), index=int(index))


# ===================== statistics =====================


@dataclass
class MCStats:
    agent_mean: float
    agent_stderr: float
    principal_mean: float
    principal_stderr: float
    tau_mean: float
    tau_stderr: float
    paths: int
    seed: int

    def to_dict(self):
        return {
            "agent_mean": self.agent_mean, "agent_stderr": self.agent_stderr,
            "principal_mean": self.principal_mean, "principal_stderr": self.principal_stderr,
            "tau_mean": self.tau_mean, "tau_stderr": self.tau_stderr,
            "paths": self.paths, "seed": self.seed,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _mean_stderr(x):
    m = float(np.mean(x))
    if x.size < 2:
        return m, 0.0
    return m, float(np.std(x, ddof=1) / np.sqrt(x.size))


# ===================== simulation =====================


def monte_carlo(env, mech, policy, paths, seed):
    """Empirical payoff and stopping-time statistics under truthful play.

    ``policy`` is a StoppingPolicy or a threshold vector: stop at period
    t < T when the state is at or below eta(t) (the solver's tie rule),
    always stop at T.  Both ledgers follow the mechanism: the agent books
    the flow payment while continuing and the stop payment plus the posted
    price at exit; the principal books her own flow minus every transfer.
    Deterministic given (config, seed): a single generator drives all draws
    in period order.
    """
    paths = int(paths)
    if paths < 1:
        raise ValueError("paths must be >= 1")
    T, delta = env.T, env.delta
    if not isinstance(policy, StoppingPolicy):
        eta = np.atleast_1d(np.asarray(policy, dtype=float)) if T > 1 else np.zeros(0)
        if T > 1 and eta.size == 1:
            eta = np.full(T - 1, eta[0])
        if T > 1 and eta.size == T:
            eta = eta[:-1]
        if T > 1 and eta.size != T - 1:
            raise ValueError(f"need {T - 1} thresholds, got {eta.size}")
        policy = StoppingPolicy.threshold(eta if T > 1 else np.zeros(1))

    rng = np.random.default_rng(seed)
    th = _sample_initial(env, rng, paths)
    mem = np.zeros(paths)
    agent = np.zeros(paths)
    principal = np.zeros(paths)
    tau = np.zeros(paths, dtype=int)
    alive = np.ones(paths, dtype=bool)

    for t in range(1, T + 1):
        use_mem = t == T and T >= 2 and (mech.alloc.needs_memory(t)
                                         or mech.pay.xi[t - 1].needs_memory)
        mm = mem[alive] if use_mem else None
        a = mech.alloc(t, th[alive], mm)
        u1 = env.u1.u(t, th[alive], a)
        u0 = env.u0.u(t, th[alive], a)
        stop_now = np.asarray(policy.stops(t, th[alive], T=T), dtype=bool)

        xi = mech.pay.xi_at(t, th[alive][stop_now], mm[stop_now] if use_mem else None)
        rho = mech.pay.rho[t - 1]
        stop_idx = np.flatnonzero(alive)[stop_now]
        agent[stop_idx] += delta ** t * (u1[stop_now] + xi) + rho
        principal[stop_idx] += delta ** t * (u0[stop_now] - xi) - rho
        tau[stop_idx] = t

        cont_idx = np.flatnonzero(alive)[~stop_now]
        if cont_idx.size:
            phi = mech.pay.phi_at(t, th[cont_idx])
            agent[cont_idx] += delta ** t * (u1[~stop_now] + phi)
            principal[cont_idx] += delta ** t * (u0[~stop_now] - phi)
            nxt = _sample_next(env.kernel(t), env.grid(t + 1).points,
                               th[cont_idx], a[~stop_now], rng)
            mem[cont_idx] = th[cont_idx]
            th[cont_idx] = nxt
        alive[stop_idx] = False
        if not alive.any():
            break

    am, ase = _mean_stderr(agent)
    pm, pse = _mean_stderr(principal)
    tm, tse = _mean_stderr(tau.astype(float))
    return MCStats(agent_mean=am, agent_stderr=ase, principal_mean=pm,
                   principal_stderr=pse, tau_mean=tm, tau_stderr=tse,
                   paths=paths, seed=int(seed))
