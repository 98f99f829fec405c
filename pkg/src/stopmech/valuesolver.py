"""Agent-side optimal stopping by backward induction, plus payoff machinery.

Value objects follow the agent's ledger: stopping at t pays
delta^t [u1 + xi_t] + rho(t); continuing pays the period flow
delta^t [u1 + phi_t] plus the expected next value.  Ties between stopping
and continuing resolve to STOP.

Final-period memory: when the terminal allocation/payments take the previous
report, all period-T tables are 2-D with a leading memory axis over the
period-(T-1) grid; truthful evaluation reads the diagonal (memory = current
node), deviation machinery picks the reported column.
"""

from dataclasses import dataclass, field

import numpy as np

from . import gridtools as gt
from .environment import ValidationReport
from .errors import AssumptionError, NotThresholdError

# ===================== solution container =====================


@dataclass
class ValueSolution:
    env: object
    mech: object
    V: list
    J_stop: list
    C: list
    L: list
    mu: list
    mu_bar: list
    stop: list
    eta: np.ndarray
    down_closed: list
    tie_tol: float
    strict_literal: bool = False
    tau_bar: float = float("nan")

    def table(self, name, t):
        return getattr(self, name)[t - 1]


def _final_tables(env, mech):
    """Period-T stop tables; 2-D (mem, state) when final-period memory is on."""
    T = env.T
    pts = env.grid(T).points
    rho_T = mech.pay.rho[T - 1]
    disc = env.delta ** T
    needs_mem = T >= 2 and (mech.alloc.needs_memory(T) or mech.pay.phi[T - 1].needs_memory
                            or mech.pay.xi[T - 1].needs_memory)
    if not needs_mem:
        a = mech.alloc(T, pts)
        j = disc * (env.u1.u(T, pts, a) + mech.pay.xi_at(T, pts)) + rho_T
        return j, False
    mem_pts = env.grid(T - 1).points
    MM, XX = np.meshgrid(mem_pts, pts, indexing="ij")
    a = mech.alloc(T, XX, MM)
    xi = mech.pay.xi_at(T, XX, MM)
    j = disc * (env.u1.u(T, XX, a) + xi) + rho_T
    return j, True


def solve_value(env, mech, strict=False, strict_literal=False, tie_tol=1e-9):
    """Backward induction for V, J_stop, C, L, mu, mu_bar, stop regions, eta.

    ``strict`` re-validates the single-crossing scan afterwards and raises
    AssumptionError on failure.  ``strict_literal`` switches the continuation
    branch to the flowless printed variant (comparison mode only).
    """
    T = env.T
    mech.pay.assert_valid()
    V = [None] * T
    J = [None] * T
    C = [None] * T
    L = [None] * T
    MU = [None] * T
    MB = [None] * T
    STOP = [None] * T

    jT, mem2d = _final_tables(env, mech)
    J[T - 1] = jT
    V[T - 1] = jT.copy()
    C[T - 1] = jT.copy()
    MU[T - 1] = np.zeros_like(jT)
    MB[T - 1] = np.full_like(jT, mech.pay.rho[T - 1])
    L[T - 1] = np.full_like(jT, np.nan)
    STOP[T - 1] = np.ones(jT.shape, dtype=bool)

    for t in range(T - 1, 0, -1):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        disc = env.delta ** t
        a = mech.alloc(t, pts)
        phi = mech.pay.phi_at(t, pts)
        xi = mech.pay.xi_at(t, pts)
        u1 = env.u1.u(t, pts, a)
        j_stop = disc * (u1 + xi) + mech.pay.rho[t - 1]
        if mem2d and t == T - 1:
            ev = ker.expect_rows(nxt, V[t], pts, a)
            ej = ker.expect_rows(nxt, J[t], pts, a)
        else:
            ev = ker.expect(nxt, V[t], pts, a)
            ej = ker.expect(nxt, J[t], pts, a)
        flow = disc * (u1 + phi)
        c = (ev if strict_literal else flow + ev)
        mu = c - j_stop
        J[t - 1] = j_stop
        C[t - 1] = c
        V[t - 1] = np.maximum(j_stop, c)
        MU[t - 1] = mu
        MB[t - 1] = mu + mech.pay.rho[t - 1]
        STOP[t - 1] = mu <= tie_tol
        # marginal value of postponing the stop exactly one period
        L[t - 1] = disc * (phi - xi) + ej - mech.pay.rho[t - 1]

    eta = np.empty(T)
    down = []
    for t in range(1, T + 1):
        g = env.grid(t)
        mask = STOP[t - 1]
        flat = mask.all(axis=0) if mask.ndim == 2 else mask
        if not flat.any():
            eta[t - 1] = g.lo - g.step  # sentinel: never stop on this grid
            down.append(True)
            continue
        k = int(np.flatnonzero(flat)[-1])
        eta[t - 1] = g.points[k]
        down.append(bool(flat[: k + 1].all()))

    sol = ValueSolution(env=env, mech=mech, V=V, J_stop=J, C=C, L=L, mu=MU, mu_bar=MB,
                        stop=STOP, eta=eta, down_closed=down, tie_tol=tie_tol,
                        strict_literal=strict_literal)
    if strict:
        rep = check_single_crossing(env, mech, sol)
        if not rep.passed:
            raise AssumptionError(f"single-crossing validation failed: worst violation {rep.worst:.3e}")
    if all(down):
        try:
            sol.tau_bar = mean_first_passage(env, mech, eta)
        except Exception:
            sol.tau_bar = float("nan")
    return sol


# ===================== point evaluators =====================


def stop_payoff(env, mech, t, theta, memory=None):
    """J_{1,t}(t, theta): the immediate-stop interim payoff."""
    a = mech.alloc(t, theta, memory)
    xi = mech.pay.xi_at(t, theta, memory)
    return env.delta ** t * (env.u1.u(t, theta, a) + xi) + mech.pay.rho[t - 1]


def marginal_value(env, mech, t, theta, solution=None):
    """L_t(theta): expected gain from postponing the stop by one period."""
    if t >= env.T:
        raise IndexError("marginal value is defined for t < T only")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    disc = env.delta ** t
    a = mech.alloc(t, theta)
    phi = mech.pay.phi_at(t, theta)
    xi = mech.pay.xi_at(t, theta)
    nxt = env.grid(t + 1).points
    ker = env.kernel(t)
    jT, mem2d = _final_tables(env, mech)
    if t + 1 == env.T:
        if mem2d:
            rows = np.stack([mech_jstop_column(env, mech, th) for th in theta])
            ej = ker.expect_rows(nxt, rows, theta, a)
        else:
            ej = ker.expect(nxt, jT, theta, a)
    else:
        pts2 = env.grid(t + 1).points
        a2 = mech.alloc(t + 1, pts2)
        j2 = env.delta ** (t + 1) * (env.u1.u(t + 1, pts2, a2) + mech.pay.xi_at(t + 1, pts2)) \
            + mech.pay.rho[t]
        ej = ker.expect(nxt, j2, theta, a)
    out = disc * (phi - xi) + ej - mech.pay.rho[t - 1]
    return out if out.size > 1 else out[0]


def mech_jstop_column(env, mech, mem_value):
    """Period-T stop payoff table for one memory value."""
    T = env.T
    pts = env.grid(T).points
    mem = np.full_like(pts, float(mem_value))
    a = mech.alloc(T, pts, mem)
    xi = mech.pay.xi_at(T, pts, mem)
    return env.delta ** T * (env.u1.u(T, pts, a) + xi) + mech.pay.rho[T - 1]


def continuing_values(env, mech, t, theta, theta_hat, solution=None):
    """(mu, mu_bar) at a (true state, report) pair, cross-measure continuation.

    mu_bar strips the current posted-price term; the identity
    mu = mu_bar - rho(t) holds by construction and is what downstream
    invariants assert.
    """
    if solution is None:
        solution = solve_value(env, mech)
    if t >= env.T:
        mu_bar = np.zeros(np.broadcast(np.asarray(theta), np.asarray(theta_hat)).shape) \
            + mech.pay.rho[t - 1]
        return mu_bar - mech.pay.rho[t - 1], mu_bar
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    disc = env.delta ** t
    a_hat = mech.alloc(t, theta_hat)
    phi = mech.pay.phi_at(t, theta_hat)
    xi = mech.pay.xi_at(t, theta_hat)
    nxt = env.grid(t + 1).points
    ker = env.kernel(t)
    v_next = solution.V[t]
    if v_next.ndim == 2:
        rows = np.stack([_memory_slice(env, nxt, v_next, th) for th in theta_hat])
        ev = ker.expect_rows(nxt, rows, theta, a_hat)
    else:
        ev = ker.expect(nxt, v_next, theta, a_hat)
    mu_bar = disc * (phi - xi) + ev
    mu = mu_bar - mech.pay.rho[t - 1]
    if mu.size == 1:
        return mu[0], mu_bar[0]
    return mu, mu_bar


def _memory_slice(env, pts_T, table2d, mem_value):
    """Linear interpolation of a (mem, state) table along the memory axis."""
    mp = env.grid(env.T - 1).points
    i = int(np.clip(np.searchsorted(mp, mem_value) - 1, 0, mp.size - 2))
    u = np.clip((mem_value - mp[i]) / (mp[i + 1] - mp[i]), 0.0, 1.0)
    return (1 - u) * table2d[i] + u * table2d[i + 1]


# ===================== validators / extractors =====================


def check_single_crossing(env, mech, solution=None, tol=1e-9):
    """Adjacent-node monotonicity of the postponement gain (chi, equiv. L)."""
    if solution is None:
        solution = solve_value(env, mech)
    failures = []
    worst = 0.0
    for t in range(1, env.T):
        L = solution.L[t - 1]
        drop = L[:-1] - L[1:]
        m = float(drop.max(initial=0.0))
        worst = max(worst, m)
        if m > tol:
            k = int(np.argmax(drop))
            failures.append({"period": t, "node": k, "violation": m})
    return ValidationReport("single-crossing", not failures, failures, worst)


def extract_threshold(solution):
    """Threshold vector from the stop masks; NotThresholdError on any gap."""
    env = solution.env
    for t in range(1, env.T + 1):
        mask = solution.stop[t - 1]
        flat = mask.all(axis=0) if mask.ndim == 2 else mask
        if not flat.any():
            continue
        k = int(np.flatnonzero(flat)[-1])
        if not flat[: k + 1].all():
            first_gap = int(np.flatnonzero(~flat[: k + 1])[0])
            raise NotThresholdError(t, first_gap)
    return solution.eta.copy()


def check_boundedness(env, mech):
    """Finiteness of every fixed-horizon payoff table (stopping-condition check)."""
    failures = []
    for tau in range(1, env.T + 1):
        for t, tab in enumerate(fixed_horizon_tables(env, mech, tau), start=1):
            if not np.all(np.isfinite(tab)):
                failures.append({"tau": tau, "period": t})
    return ValidationReport("boundedness", not failures, failures)


# ===================== fixed-horizon payoffs and telescoping =====================


def fixed_horizon_tables(env, mech, tau):
    """Interim payoff tables J_{1,t}(tau, .) for t = 1..tau under truthful play.

    The period-tau table is the stop payoff; earlier periods add the
    continuing flow and the expected next table.  The tau = T table is 2-D
    under final-period memory; the pullback to T-1 reads the diagonal.
    """
    T = env.T
    tabs = [None] * tau
    if tau == T:
        jT, mem2d = _final_tables(env, mech)
        tabs[tau - 1] = jT
    else:
        pts = env.grid(tau).points
        a = mech.alloc(tau, pts)
        tabs[tau - 1] = env.delta ** tau * (env.u1.u(tau, pts, a) + mech.pay.xi_at(tau, pts)) \
            + mech.pay.rho[tau - 1]
        mem2d = False
    for t in range(tau - 1, 0, -1):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        a = mech.alloc(t, pts)
        flow = env.delta ** t * (env.u1.u(t, pts, a) + mech.pay.phi_at(t, pts))
        nxt_tab = tabs[t]
        if nxt_tab.ndim == 2:
            ev = ker.expect_rows(nxt, nxt_tab, pts, a)
        else:
            ev = ker.expect(nxt, nxt_tab, pts, a)
        tabs[t - 1] = flow + ev
    return tabs


def payoff_representation_check(env, mech, tau, solution=None, tol=1e-6):
    """Fixed-horizon payoff vs. its telescoped marginal-value representation.

    Route A: direct backward quadrature of J_{1,t}(tau, .).
    Route B: J_{1,t}(t, .) plus the pulled-back sum of marginal values
    L_s for s = t..tau-1.  Gap is the worst node difference over t <= tau.
    """
    if solution is None:
        solution = solve_value(env, mech)
    direct = fixed_horizon_tables(env, mech, tau)
    worst = 0.0
    details = []
    for t in range(1, tau + 1):
        # route B: immediate-stop payoff plus pulled-back marginal values
        acc = np.array(solution.J_stop[t - 1], dtype=float, copy=True)
        for s in range(t, tau):
            pulled = solution.L[s - 1]
            for r in range(s - 1, t - 1, -1):
                rpts = env.grid(r).points
                a = mech.alloc(r, rpts)
                pulled = env.kernel(r).expect(env.grid(r + 1).points, pulled, rpts, a)
            acc = acc + pulled
        gap = float(np.max(np.abs(direct[t - 1] - acc)))
        worst = max(worst, gap)
        details.append({"t": t, "gap": gap})
    return ValidationReport("payoff-representation", worst <= tol, details, worst)


# ===================== mean first passage time =====================


def _restricted_pushforward(env, t, alloc, p, eta_cut):
    """Density at grid t+1 of survivors (theta > eta_cut) pushed through kernel t."""
    pts = env.grid(t).points
    nxt = env.grid(t + 1).points
    ker = env.kernel(t)
    a = alloc(t, pts)
    if ker.kind == "affine-uniform":
        s = ker.c1 * pts + ker.c2 * a
        P = gt.cumulative_integral(pts, p)
        lo_lim = max(eta_cut, pts[0])
        if np.all(np.diff(s) > 0):
            inv_hi = np.interp(nxt, s, pts, left=pts[0], right=pts[-1])
            inv_lo = np.interp(nxt - ker.w, s, pts, left=pts[0], right=pts[-1])
            hi_b = np.minimum(inv_hi, pts[-1])
            lo_b = np.clip(inv_lo, lo_lim, hi_b)
            hi_b = np.maximum(hi_b, lo_b)
            q = (gt.partial_integral(pts, p, P, hi_b)
                 - gt.partial_integral(pts, p, P, np.maximum(lo_b, lo_lim))) / ker.w
            q = np.maximum(q, 0.0)
            return q
        # non-monotone shift: per-cell linear inversion, accumulated per next node
        q = np.zeros_like(nxt)
        for j in range(pts.size - 1):
            x0, x1 = pts[j], pts[j + 1]
            if x1 <= lo_lim:
                continue
            s0, s1 = s[j], s[j + 1]
            for yi, y in enumerate(nxt):
                seg = _segment_in_band(x0, x1, s0, s1, y - ker.w, y)
                if seg is None:
                    continue
                a_, b_ = max(seg[0], lo_lim), seg[1]
                if b_ > a_:
                    q[yi] += gt.integral_between(pts, p, a_, b_, P) / ker.w
        return q
    # tabular: mix stored rows with survivor-restricted trapezoid weights
    wts = gt.restricted_trapz_weights(pts, lo_cut=eta_cut)
    rows = np.stack([ker.density_row(nxt, pts[k], a[k]) for k in range(pts.size)])
    return (wts * p) @ rows


def _segment_in_band(x0, x1, s0, s1, lo, hi):
    """Sub-interval of [x0, x1] where the linear map x -> s lands in [lo, hi]."""
    if s0 == s1:
        return (x0, x1) if lo <= s0 <= hi else None
    r0 = x0 + (lo - s0) * (x1 - x0) / (s1 - s0)
    r1 = x0 + (hi - s0) * (x1 - x0) / (s1 - s0)
    a, b = (r0, r1) if r0 <= r1 else (r1, r0)
    a, b = max(a, x0), min(b, x1)
    return (a, b) if b > a else None


def mean_first_passage(env, mech_or_alloc, eta):
    """E[tau] under the threshold rule, by exact survival-measure propagation.

    Stop masses are exact interval integrals of the current survival density;
    the surviving mass is carried by exact bookkeeping (alive - stopped) and
    the propagated density is renormalized to it, so no quadrature mass leaks
    through the kernel pushforward.
    """
    alloc = mech_or_alloc.alloc if hasattr(mech_or_alloc, "alloc") else mech_or_alloc
    eta = np.asarray(eta, dtype=float)
    p = env.f1.copy()
    alive = 1.0
    expected = 0.0
    for t in range(1, env.T):
        pts = env.grid(t).points
        cut = min(max(eta[t - 1], pts[0] - 1.0), pts[-1])
        stopped = float(gt.integral_between(pts, p, pts[0], cut)) if cut >= pts[0] else 0.0
        stopped = min(max(stopped, 0.0), alive)
        expected += t * stopped
        alive -= stopped
        if alive <= 0.0:
            return expected
        p = _restricted_pushforward(env, t, alloc, p, cut)
        nxt = env.grid(t + 1).points
        mass = float(gt.integral_between(nxt, p, nxt[0], nxt[-1]))
        if mass > 0:
            p = p * (alive / mass)
    expected += env.T * alive
    return expected


# ===================== principal's mirror ledger =====================


def _principal_branch_tables(env, mech, eta):
    """Per-period (stop, continue) payoff branch tables for the principal.

    The combined payoff jumps at the threshold (the principal is not
    indifferent there), so the recursion keeps the smooth branches separate
    and pulls the next period back through support-restricted expectations
    split exactly at eta instead of integrating across the jump.
    """
    T = env.T
    eta = np.asarray(eta, dtype=float)
    pairs = [None] * T
    pts = env.grid(T).points
    if T >= 2 and (mech.alloc.needs_memory(T) or mech.pay.xi[T - 1].needs_memory):
        mem_pts = env.grid(T - 1).points
        MM, XX = np.meshgrid(mem_pts, pts, indexing="ij")
        a = mech.alloc(T, XX, MM)
        stop_T = env.delta ** T * (env.u0.u(T, XX, a) - mech.pay.xi_at(T, XX, MM)) \
            - mech.pay.rho[T - 1]
    else:
        a = mech.alloc(T, pts)
        stop_T = env.delta ** T * (env.u0.u(T, pts, a) - mech.pay.xi_at(T, pts)) \
            - mech.pay.rho[T - 1]
    pairs[T - 1] = (stop_T, stop_T)
    for t in range(T - 1, 0, -1):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        a = mech.alloc(t, pts)
        u0 = env.u0.u(t, pts, a)
        stop_val = env.delta ** t * (u0 - mech.pay.xi_at(t, pts)) - mech.pay.rho[t - 1]
        n_stop, n_cont = pairs[t]
        if n_stop.ndim == 2:
            ev = ker.expect_rows(nxt, n_stop, pts, a)
        elif t + 1 == T:
            ev = ker.expect(nxt, n_stop, pts, a)
        else:
            lo_s, _ = ker.expect_restricted(nxt, n_stop, pts, a, hi_cut=eta[t])
            hi_c, _ = ker.expect_restricted(nxt, n_cont, pts, a, lo_cut=eta[t])
            ev = lo_s + hi_c
        cont_val = env.delta ** t * (u0 - mech.pay.phi_at(t, pts)) + ev
        pairs[t - 1] = (stop_val, cont_val)
    return pairs


def principal_value_tables(env, mech, eta):
    """Principal's expected discounted payoff tables under the threshold rule.

    Mirror of the agent's ledger: -phi while continuing, -xi - rho(t) at the
    stop, own flow u0 every active period.  Node values are exact; the table
    jumps at each threshold, so ex-ante integration should use
    principal_exante rather than a product quadrature of the spliced table.
    """
    eta = np.asarray(eta, dtype=float)
    pairs = _principal_branch_tables(env, mech, eta)
    tabs = []
    for t, (stop_val, cont_val) in enumerate(pairs, start=1):
        if t == env.T:
            tabs.append(stop_val)
        else:
            tabs.append(np.where(env.grid(t).points <= eta[t - 1], stop_val, cont_val))
    return tabs


def principal_exante(env, mech, eta):
    """E[principal payoff] under the threshold rule, split exactly at eta(1)."""
    eta = np.asarray(eta, dtype=float)
    pairs = _principal_branch_tables(env, mech, eta)
    pts = env.grid(1).points
    stop_val, cont_val = pairs[0]
    if env.T == 1:
        return float(gt.product_integral(pts, env.f1, stop_val))
    cut = min(max(eta[0], pts[0]), pts[-1])
    lo_part = gt.product_between(pts, env.f1, stop_val, pts[0], cut)
    hi_part = gt.product_between(pts, env.f1, cont_val, cut, pts[-1])
    return float(lo_part + hi_part)
