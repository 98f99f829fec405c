"""Incentive-compatibility audit: one-shot deviation scan and exhaustive oracle.

The one-shot scan evaluates a single misreport theta_hat at period t against
truthful play everywhere else, separately on the stop branch

    U_S,t(theta, theta_hat) = delta^t [u1(theta, alpha_t(theta_hat))
                                       + xi_t(theta_hat)] + rho(t)

and on the continue branch (the same flow with phi instead of xi plus the
cross-measure continuation, equivalently the stop form plus mu_bar), and also
in the raw Bellman form (max of both branches against the truthful value).
Branch gaps and raw gaps can disagree in principle; the report carries both
verdicts and flags any difference instead of assuming equivalence.

The exhaustive oracle solves the full deviation dynamic program on small
instances: state (period, true state, and - in the final period - the previous
report), choice = any grid report plus the stop/continue decision.  Backward
induction over that program is an exact maximum over every pure Markov
reporting strategy joint with every stopping policy, because the expectation
is linear in the continuation table, so the per-node maximum equals the
maximum over strategy maps.  It is the ground truth the one-shot scan is
tested against on small random instances.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError
from .valuesolver import _final_tables, solve_value

# ===================== report containers =====================


@dataclass
class ICEntry:
    """Worst deviation found for one (period, branch) cell of the scan."""
    period: int
    branch: str  # "stop" | "continue" | "raw"
    gap: float
    theta: float
    theta_hat: float
    memory: float = None

    def to_dict(self):
        d = {"period": self.period, "branch": self.branch, "gap": self.gap,
             "theta": self.theta, "theta_hat": self.theta_hat}
        if self.memory is not None:
            d["memory"] = self.memory
        return d


@dataclass
class ICReport:
    entries: list
    tolerance: float
    passed: bool
    worst_gap: float
    branch_passed: bool
    raw_passed: bool
    verdicts_differ: bool

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"

    def worst(self, branch=None, period=None):
        pool = [e for e in self.entries
                if (branch is None or e.branch == branch)
                and (period is None or e.period == period)]
        return max(pool, key=lambda e: e.gap) if pool else None

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "worst_gap": self.worst_gap,
            "branch_passed": self.branch_passed,
            "raw_passed": self.raw_passed,
            "verdicts_differ": self.verdicts_differ,
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self, **kw):
        kw.setdefault("sort_keys", True)
        kw.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kw)


# ===================== one-shot deviation scan =====================


def _cross_expect(ker, nxt, table, theta, a_hat):
    """E[table(next) | theta_i, a_hat_j] for the full (true, report) product."""
    n_i, n_j = theta.size, a_hat.size
    tt = np.broadcast_to(theta[:, None], (n_i, n_j)).ravel()
    aa = np.broadcast_to(a_hat[None, :], (n_i, n_j)).ravel()
    return np.asarray(ker.expect(nxt, table, tt, aa)).reshape(n_i, n_j)


def _worst_pair(gap, pts_true, pts_rep):
    k = int(np.argmax(gap))
    i, j = divmod(k, gap.shape[1])
    return float(gap[i, j]), float(pts_true[i]), float(pts_rep[j])


def one_shot_check(env, mech, solution=None, tol=1e-3):
    """Grid-exhaustive one-shot misreport scan; PASS iff every gap <= tol.

    Gaps are max over (theta, theta_hat) pairs of deviation payoff minus the
    truthful payoff of the same branch; the raw entries compare the max of
    both branches against the truthful value function.  The default tolerance
    is quadrature-limited at 201 nodes; exact zeros appear only for
    analytically flat cases (constant allocation and payments).
    """
    if solution is None:
        solution = solve_value(env, mech)
    if solution.strict_literal:
        raise ValueError("IC audit needs a standard-ledger solution, not strict-literal")
    T = env.T
    entries = []

    for t in range(1, T):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        disc = env.delta ** t
        a_hat = mech.alloc(t, pts)
        phi_hat = mech.pay.phi_at(t, pts)
        xi_hat = mech.pay.xi_at(t, pts)
        U1 = env.u1.u(t, pts[:, None], a_hat[None, :])
        US = disc * (U1 + xi_hat[None, :]) + mech.pay.rho[t - 1]
        v_next = solution.V[t]
        if v_next.ndim == 2:
            # final-period memory: the continuation table row is the report
            EV = np.empty((pts.size, pts.size))
            for j in range(pts.size):
                EV[:, j] = ker.expect(nxt, v_next[j], pts, np.full(pts.size, a_hat[j]))
        else:
            EV = _cross_expect(ker, nxt, v_next, pts, a_hat)
        USbar = disc * (U1 + phi_hat[None, :]) + EV

        g, th, thh = _worst_pair(US - np.diag(US)[:, None], pts, pts)
        entries.append(ICEntry(t, "stop", g, th, thh))
        g, th, thh = _worst_pair(USbar - np.diag(USbar)[:, None], pts, pts)
        entries.append(ICEntry(t, "continue", g, th, thh))
        raw = np.maximum(US, USbar) - solution.V[t - 1][:, None]
        g, th, thh = _worst_pair(raw, pts, pts)
        entries.append(ICEntry(t, "raw", g, th, thh))

    # final period: stop branch only (the raw Bellman form coincides with it)
    ptsT = env.grid(T).points
    discT = env.delta ** T
    rhoT = mech.pay.rho[T - 1]
    jT, mem2d = _final_tables(env, mech)
    if mem2d:
        mem_pts = env.grid(T - 1).points
        best = (-math.inf, 0.0, 0.0, 0.0)
        for k, m in enumerate(mem_pts):
            mem = np.full_like(ptsT, m)
            a_hat = mech.alloc(T, ptsT, mem)
            xi_hat = mech.pay.xi_at(T, ptsT, mem)
            U1 = env.u1.u(T, ptsT[:, None], a_hat[None, :])
            US = discT * (U1 + xi_hat[None, :]) + rhoT
            g, th, thh = _worst_pair(US - np.diag(US)[:, None], ptsT, ptsT)
            if g > best[0]:
                best = (g, th, thh, float(m))
        g, th, thh, m = best
        entries.append(ICEntry(T, "stop", g, th, thh, memory=m))
        entries.append(ICEntry(T, "raw", g, th, thh, memory=m))
    else:
        a_hat = mech.alloc(T, ptsT)
        xi_hat = mech.pay.xi_at(T, ptsT)
        U1 = env.u1.u(T, ptsT[:, None], a_hat[None, :])
        US = discT * (U1 + xi_hat[None, :]) + rhoT
        g, th, thh = _worst_pair(US - np.diag(US)[:, None], ptsT, ptsT)
        entries.append(ICEntry(T, "stop", g, th, thh))
        entries.append(ICEntry(T, "raw", g, th, thh))

    for e in entries:
        if not math.isfinite(e.gap):
            raise FloatingPointError(f"non-finite deviation gap at period {e.period}")
    branch_gaps = [e.gap for e in entries if e.branch != "raw"]
    raw_gaps = [e.gap for e in entries if e.branch == "raw"]
    branch_passed = max(branch_gaps) <= tol
    raw_passed = max(raw_gaps) <= tol
    worst = max(e.gap for e in entries)
    return ICReport(entries=entries, tolerance=tol, passed=branch_passed and raw_passed,
                    worst_gap=worst, branch_passed=branch_passed, raw_passed=raw_passed,
                    verdicts_differ=branch_passed != raw_passed)


def gap_matrices(env, mech, solution=None):
    """Per-period deviation-gap matrices (true state x report) for heat maps.

    Entries are the worse of the two branch gaps; the final period reduces
    over memory rows by the maximum.  Positive values mark profitable
    one-shot misreports.
    """
    if solution is None:
        solution = solve_value(env, mech)
    T = env.T
    out = []
    for t in range(1, T):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        disc = env.delta ** t
        a_hat = mech.alloc(t, pts)
        phi_hat = mech.pay.phi_at(t, pts)
        xi_hat = mech.pay.xi_at(t, pts)
        U1 = env.u1.u(t, pts[:, None], a_hat[None, :])
        US = disc * (U1 + xi_hat[None, :]) + mech.pay.rho[t - 1]
        v_next = solution.V[t]
        if v_next.ndim == 2:
            EV = np.empty((pts.size, pts.size))
            for j in range(pts.size):
                EV[:, j] = ker.expect(nxt, v_next[j], pts, np.full(pts.size, a_hat[j]))
        else:
            EV = _cross_expect(ker, nxt, v_next, pts, a_hat)
        USbar = disc * (U1 + phi_hat[None, :]) + EV
        G = np.maximum(US - np.diag(US)[:, None], USbar - np.diag(USbar)[:, None])
        out.append({"t": t, "true_points": pts, "report_points": pts, "gaps": G})
    ptsT = env.grid(T).points
    discT = env.delta ** T
    rhoT = mech.pay.rho[T - 1]
    _, mem2d = _final_tables(env, mech)
    if mem2d:
        mem_pts = env.grid(T - 1).points
        G = np.full((ptsT.size, ptsT.size), -math.inf)
        for m in mem_pts:
            mem = np.full_like(ptsT, m)
            a_hat = mech.alloc(T, ptsT, mem)
            xi_hat = mech.pay.xi_at(T, ptsT, mem)
            U1 = env.u1.u(T, ptsT[:, None], a_hat[None, :])
            US = discT * (U1 + xi_hat[None, :]) + rhoT
            G = np.maximum(G, US - np.diag(US)[:, None])
    else:
        a_hat = mech.alloc(T, ptsT)
        xi_hat = mech.pay.xi_at(T, ptsT)
        U1 = env.u1.u(T, ptsT[:, None], a_hat[None, :])
        US = discT * (U1 + xi_hat[None, :]) + rhoT
        G = US - np.diag(US)[:, None]
    out.append({"t": T, "true_points": ptsT, "report_points": ptsT, "gaps": G})
    return out


# ===================== exhaustive deviation oracle =====================


@dataclass
class OracleReport:
    truthful_exante: float
    best_exante: float
    exante_gain: float
    improvements: list = field(default_factory=list)  # {period, improvement, theta[, memory]}
    profitable: bool = False
    tolerance: float = 1e-9

    def to_dict(self):
        return {
            "truthful_exante": self.truthful_exante,
            "best_exante": self.best_exante,
            "exante_gain": self.exante_gain,
            "improvements": self.improvements,
            "profitable": self.profitable,
            "tolerance": self.tolerance,
        }


def _strategy_space(env):
    """Count of pure Markov report maps joint with stopping policies."""
    total = 1.0
    for t in range(1, env.T + 1):
        n = env.grid(t).n
        total *= float(n) ** n
        if t < env.T:
            total *= 2.0 ** n
    return total


def brute_force_deviation_oracle(env, mech, budget=None, tol=1e-9, solution=None):
    """Exact best deviation payoff on a small instance, vs. truthful play.

    Solves the deviation program by backward induction over (period, true
    state, previous report where it matters); the result equals the maximum
    over every pure Markov reporting strategy joint with every stopping
    policy.  Hard caps T <= 3 and 9-node grids keep the instance in the
    regime where that equivalence is literally checkable; ``budget``, when
    given, additionally bounds the size of the enumerated strategy space.
    """
    ns = [env.grid(t).n for t in range(1, env.T + 1)]
    if env.T > 3 or max(ns) > 9:
        raise BudgetError(f"exhaustive mode supports T <= 3 with <= 9-node grids, "
                          f"got T={env.T}, grids={ns}")
    if budget is not None and _strategy_space(env) > budget:
        raise BudgetError(f"strategy space {_strategy_space(env):.3g} exceeds budget {budget:.3g}")
    if solution is None:
        solution = solve_value(env, mech)
    T = env.T

    # ---- period T: best stop payoff over reports, per (memory, true state)
    ptsT = env.grid(T).points
    discT = env.delta ** T
    rhoT = mech.pay.rho[T - 1]
    jT, mem2d = _final_tables(env, mech)
    if mem2d:
        mem_pts = env.grid(T - 1).points
        W_T = np.empty((mem_pts.size, ptsT.size))
        for k, m in enumerate(mem_pts):
            mem = np.full_like(ptsT, m)
            a_hat = mech.alloc(T, ptsT, mem)
            xi_hat = mech.pay.xi_at(T, ptsT, mem)
            U1 = env.u1.u(T, ptsT[:, None], a_hat[None, :])
            W_T[k] = (discT * (U1 + xi_hat[None, :]) + rhoT).max(axis=1)
    else:
        a_hat = mech.alloc(T, ptsT)
        xi_hat = mech.pay.xi_at(T, ptsT)
        U1 = env.u1.u(T, ptsT[:, None], a_hat[None, :])
        W_T = (discT * (U1 + xi_hat[None, :]) + rhoT).max(axis=1)

    W = [None] * T
    W[T - 1] = W_T
    for t in range(T - 1, 0, -1):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        disc = env.delta ** t
        a_hat = mech.alloc(t, pts)
        phi_hat = mech.pay.phi_at(t, pts)
        xi_hat = mech.pay.xi_at(t, pts)
        U1 = env.u1.u(t, pts[:, None], a_hat[None, :])
        stop_tab = disc * (U1 + xi_hat[None, :]) + mech.pay.rho[t - 1]
        w_next = W[t]
        if w_next.ndim == 2:
            EV = np.empty((pts.size, pts.size))
            for j in range(pts.size):
                EV[:, j] = ker.expect(nxt, w_next[j], pts, np.full(pts.size, a_hat[j]))
        else:
            EV = _cross_expect(ker, nxt, w_next, pts, a_hat)
        cont_tab = disc * (U1 + phi_hat[None, :]) + EV
        W[t - 1] = np.maximum(stop_tab, cont_tab).max(axis=1)

    improvements = []
    worst_improve = -math.inf
    for t in range(1, T + 1):
        diff = W[t - 1] - solution.V[t - 1]
        if diff.ndim == 2:
            k = int(np.argmax(diff))
            ki, xi_idx = divmod(k, diff.shape[1])
            improvements.append({"period": t, "improvement": float(diff[ki, xi_idx]),
                                 "theta": float(env.grid(t).points[xi_idx]),
                                 "memory": float(env.grid(t - 1).points[ki])})
            worst_improve = max(worst_improve, float(diff[ki, xi_idx]))
        else:
            k = int(np.argmax(diff))
            improvements.append({"period": t, "improvement": float(diff[k]),
                                 "theta": float(env.grid(t).points[k])})
            worst_improve = max(worst_improve, float(diff[k]))

    pts1 = env.grid(1).points
    from . import gridtools as gt
    truthful = float(gt.product_integral(pts1, env.f1, solution.V[0]))
    best = float(gt.product_integral(pts1, env.f1, W[0]))
    return OracleReport(truthful_exante=truthful, best_exante=best,
                        exante_gain=best - truthful, improvements=improvements,
                        profitable=worst_improve > tol, tolerance=tol)
