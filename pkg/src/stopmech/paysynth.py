"""Payment synthesis from allocation rules via envelope potentials.

Pipeline: the envelope recursion produces the state-derivatives gamma of the
fixed-horizon payoffs; anchored cumulative integrals of gamma give the
potential tables (stop potential beta_S, continue potential beta_Sbar as the
pointwise best horizon); payments follow by the potential formulas

    xi_t  = delta^{-t} beta_S,t(theta) - u1_t(theta, alpha_t(theta)),
    phi_t = delta^{-t} [beta_Sbar,t(theta) - E[beta_Sbar,t+1(next) | theta]]
            - u1_t(theta, alpha_t(theta)),

and the posted price per period is the continuing-value curve evaluated at
the target threshold.  The module also verifies the sufficiency inequalities
(potential differences bounded by length functions), checks revenue
equivalence across anchor choices, and decides posted-price feasibility
(membership of an r-vector with the implied threshold).

Final-period memory: when the terminal allocation takes the previous report,
the period-T gamma/potential/payment tables are 2-D with a leading memory
axis; truthful pullbacks read the diagonal (memory = current node) and
deviation machinery picks the reported row.
"""

from dataclasses import dataclass, field

import numpy as np

from . import gridtools as gt
from .errors import NonFiniteError
from .mechanism import Mechanism, PaymentRules, TabularFn
from .valuesolver import _final_tables, solve_value

# ===================== envelope tables =====================


@dataclass
class EnvelopeTable:
    """State-derivatives gamma[t][tau] of the fixed-horizon payoffs, plus the
    impulse-response tables G[t][s] (iterated kernel-derivative of 1)."""
    env: object
    alloc: object
    gamma: dict
    G: dict
    memory_final: bool

    def gamma_table(self, t, tau):
        return self.gamma[t][tau]


def _alloc_memory_final(env, alloc):
    return env.T >= 2 and alloc.needs_memory(env.T)


def _kd_pullback(ker, nxt, table, pts, a, allow_fd):
    """One envelope step: Kd applied to the next-period derivative table.

    2-D tables (final-period memory) are pulled back on the truthful
    diagonal: row k is conditioned on (pts[k], a[k]).
    """
    table = np.asarray(table, dtype=float)
    if table.ndim == 2:
        if ker.kind == "affine-uniform":
            return ker.c1 * ker.expect_rows(nxt, table, pts, a)
        out = np.empty(pts.size)
        for k in range(pts.size):
            out[k] = ker.kd_apply(nxt, table[k], pts[k:k + 1], a[k:k + 1], allow_fd=allow_fd)
        return out
    return ker.kd_apply(nxt, table, pts, a, allow_fd=allow_fd)


def envelope_gamma(env, alloc, allow_fd=True):
    """Backward envelope recursion for gamma_t(tau, .) over all t <= tau.

    Base: gamma_tau(tau) = delta^tau * du1/dtheta at the truthful allocation.
    Step: gamma_s(tau) = delta^s * du1/dtheta + Kd_s[gamma_{s+1}(tau)], where
    Kd integrates the downstream derivative against -dF/dtheta.  The
    impulse-response tables G are the same chain applied to the constant 1.
    """
    T = env.T
    mem2d = _alloc_memory_final(env, alloc)
    gamma = {t: {} for t in range(1, T + 1)}
    for tau in range(1, T + 1):
        if tau == T and mem2d:
            mem_pts = env.grid(T - 1).points
            ptsT = env.grid(T).points
            MM, XX = np.meshgrid(mem_pts, ptsT, indexing="ij")
            A = alloc(T, XX, MM)
            cur = env.delta ** T * env.u1.du_dtheta(T, XX, A)
        else:
            pts = env.grid(tau).points
            a = alloc(tau, pts)
            cur = env.delta ** tau * env.u1.du_dtheta(tau, pts, a)
        gamma[tau][tau] = cur
        for s in range(tau - 1, 0, -1):
            pts = env.grid(s).points
            a = alloc(s, pts)
            kd = _kd_pullback(env.kernel(s), env.grid(s + 1).points, cur, pts, a, allow_fd)
            cur = env.delta ** s * env.u1.du_dtheta(s, pts, a) + kd
            gamma[s][tau] = cur

    G = {t: {} for t in range(1, T + 1)}
    for s in range(1, T + 1):
        cur = np.ones(env.grid(s).n)
        G[s][s] = cur
        for t in range(s - 1, 0, -1):
            pts = env.grid(t).points
            a = alloc(t, pts)
            cur = env.kernel(t).kd_apply(env.grid(t + 1).points, cur, pts, a, allow_fd=allow_fd)
            cur = np.atleast_1d(np.asarray(cur, dtype=float))
            G[t][s] = cur

    for t in range(1, T + 1):
        for tau, tab in gamma[t].items():
            if not np.all(np.isfinite(tab)):
                raise NonFiniteError(f"gamma[{t}][{tau}] has non-finite entries")
    return EnvelopeTable(env=env, alloc=alloc, gamma=gamma, G=G, memory_final=mem2d)


# ===================== potential tables =====================


@dataclass
class PotentialTable:
    """Anchored potentials: stop potential beta_S and best-horizon potential
    beta_Sbar per period (2-D with memory axis in the final period)."""
    env: object
    alloc: object
    beta_S: list
    beta_Sbar: list
    anchors: np.ndarray
    envelope: EnvelopeTable

    def anchor(self, t):
        return self.anchors[t - 1]


def _anchored_cumint(pts, g, anchor):
    """Integral of the interpolant of g from the anchor to each node (rows ok)."""
    g = np.asarray(g, dtype=float)
    I = gt.cumulative_integral(pts, g)
    if g.ndim == 2:
        off = gt.partial_integral_rows(pts, g, I, np.full(g.shape[0], float(anchor)))
        return I - off[:, None]
    off = gt.partial_integral(pts, g, I, np.array([float(anchor)]))[0]
    return I - off


def potentials(env, alloc, theta_eps=None, envelope=None):
    """Anchored potential tables from the envelope derivatives.

    beta_S,t integrates gamma_t(t, .); beta_Sbar,t is the pointwise max over
    horizons tau >= t of the integrals of gamma_t(tau, .).  The max is taken
    on the bottom-referenced curves and the result shifted to vanish at the
    anchor: taking the max of integrals re-based at an interior anchor would
    flip the branch choice below the anchor and destroy the constant-shift
    (revenue-equivalence) property, whereas for bottom anchors the two
    readings coincide.  Anchors default to each period's grid bottom;
    beta_Sbar >= beta_S holds node-wise for bottom anchors, with equality in
    the final period.
    """
    if envelope is None:
        envelope = envelope_gamma(env, alloc)
    T = env.T
    if theta_eps is None:
        anchors = np.array([env.grid(t).lo for t in range(1, T + 1)])
    else:
        anchors = np.asarray(theta_eps, dtype=float)
        if anchors.size != T:
            raise ValueError(f"need {T} anchors, got {anchors.size}")
    beta_S = [None] * T
    beta_Sbar = [None] * T
    for t in range(1, T + 1):
        pts = env.grid(t).points
        bottom = pts[0]
        cands = {tau: _anchored_cumint(pts, envelope.gamma[t][tau], bottom)
                 for tau in range(t, T + 1)}
        best = cands[t]
        for tau in range(t + 1, T + 1):
            best = np.maximum(best, cands[tau])
        beta_S[t - 1] = _rebase(pts, cands[t], anchors[t - 1])
        beta_Sbar[t - 1] = _rebase(pts, best, anchors[t - 1])
    beta_Sbar[T - 1] = beta_S[T - 1].copy()
    return PotentialTable(env=env, alloc=alloc, beta_S=beta_S, beta_Sbar=beta_Sbar,
                          anchors=anchors, envelope=envelope)


def _rebase(pts, curve, anchor):
    """Shift a node curve (or its rows) to vanish at the anchor point."""
    if curve.ndim == 2:
        off = np.array([np.interp(anchor, pts, row) for row in curve])
        return curve - off[:, None]
    return curve - np.interp(anchor, pts, curve)


# ===================== payment construction =====================


def construct_phi_xi(env, alloc, pot, strict_literal=False):
    """Payment rules from potentials (posted prices left at zero).

    ``strict_literal`` switches the xi coefficient to the printed delta^{-1}
    variant; the default delta^{-t} is dimensionally consistent with phi and
    coincides with it at delta = 1.  The final period has no continuing
    branch, so phi_T is aliased to xi_T (the empty continuation expectation).
    """
    T = env.T
    mem2d = _alloc_memory_final(env, alloc)
    phi_fns = [None] * T
    xi_fns = [None] * T
    for t in range(1, T + 1):
        pts = env.grid(t).points
        xi_disc = env.delta ** -1 if strict_literal else env.delta ** -t
        if t == T and mem2d:
            mem_pts = env.grid(T - 1).points
            MM, XX = np.meshgrid(mem_pts, pts, indexing="ij")
            u1v = env.u1.u(T, XX, alloc(T, XX, MM))
            xi_tab = xi_disc * pot.beta_S[T - 1] - u1v
            fn = TabularFn(pts, xi_tab, mem_points=mem_pts)
            xi_fns[T - 1] = fn
            phi_fns[T - 1] = fn
            continue
        a = alloc(t, pts)
        u1v = env.u1.u(t, pts, a)
        xi_tab = xi_disc * pot.beta_S[t - 1] - u1v
        xi_fns[t - 1] = TabularFn(pts, xi_tab)
        if t == T:
            phi_fns[t - 1] = xi_fns[t - 1]
            continue
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        b_next = pot.beta_Sbar[t]
        if b_next.ndim == 2:
            eb = ker.expect_rows(nxt, b_next, pts, a)
        else:
            eb = ker.expect(nxt, b_next, pts, a)
        phi_tab = env.delta ** -t * (pot.beta_Sbar[t - 1] - eb) - u1v
        phi_fns[t - 1] = TabularFn(pts, phi_tab)
    return PaymentRules(phi=phi_fns, xi=xi_fns, rho=np.zeros(T))


def construct_rho(env, alloc, pot, eta, payments=None, strict_literal=False):
    """Posted prices implementing the threshold eta: rho(t) = mu_bar_t(eta(t)).

    Backward pass with rho(T) = 0: at each period the continuing-value curve
    (which depends only on later posted prices) is evaluated at the target
    threshold, then folded into the stop values for the next step down.
    """
    T = env.T
    eta = np.asarray(eta, dtype=float)
    if eta.size == T - 1:
        eta = np.append(eta, env.grid(T).hi)
    if eta.size != T:
        raise ValueError(f"threshold vector needs {T - 1} or {T} entries, got {eta.size}")
    if payments is None:
        payments = construct_phi_xi(env, alloc, pot, strict_literal=strict_literal)
    rho = np.zeros(T)
    mech = Mechanism(alloc, payments)
    v_next, mem2d = _final_tables(env, mech)
    for t in range(T - 1, 0, -1):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        disc = env.delta ** t
        a = alloc(t, pts)
        phi = payments.phi_at(t, pts)
        xi = payments.xi_at(t, pts)
        u1v = env.u1.u(t, pts, a)
        if mem2d and t == T - 1:
            ev = ker.expect_rows(nxt, v_next, pts, a)
        else:
            ev = ker.expect(nxt, v_next, pts, a)
        mu_bar = disc * (phi - xi) + ev
        rho[t - 1] = float(np.interp(eta[t - 1], pts, mu_bar))
        j_stop = disc * (u1v + xi) + rho[t - 1]
        v_next = np.maximum(j_stop, disc * (u1v + phi) + ev)
    return rho


def synthesize_mechanism(env, alloc, theta_eps=None, eta=None, strict_literal=False):
    """Allocation -> (mechanism, potentials): the full synthesis pipeline."""
    envl = envelope_gamma(env, alloc)
    pot = potentials(env, alloc, theta_eps, envelope=envl)
    pay = construct_phi_xi(env, alloc, pot, strict_literal=strict_literal)
    if eta is not None:
        rho = construct_rho(env, alloc, pot, eta, payments=pay, strict_literal=strict_literal)
    else:
        rho = np.zeros(env.T)
    return Mechanism(alloc, PaymentRules(pay.phi, pay.xi, rho)), pot


# ===================== length tables and sufficiency =====================


@dataclass
class LengthTable:
    """Length matrices indexed [report, true] per period; the continue-branch
    table is the sup over horizons.  Final period with memory: leading
    memory axis."""
    env: object
    ell_S: list
    ell_Sbar: list


def _stop_length(env, alloc, t, mem=None):
    """ell_S matrix [report j, true i] = delta^t [u1(j, a_j) - u1(i, a_j)]."""
    pts = env.grid(t).points
    a = alloc(t, pts) if mem is None else alloc(t, pts, np.full_like(pts, mem))
    disc = env.delta ** t
    own = env.u1.u(t, pts, a)  # u1 at (theta_j, a_j)
    cross = env.u1.u(t, pts[None, :], a[:, None])  # [j, i]: u1(theta_i, a_j)
    return disc * (own[:, None] - cross)


def _horizon_tables(env, alloc, payments, tau, down_to):
    """H-table at level ``down_to``: flows from down_to..tau plus xi at tau."""
    T = env.T
    mem2d = _alloc_memory_final(env, alloc)
    if tau == T and mem2d:
        mem_pts = env.grid(T - 1).points
        ptsT = env.grid(T).points
        MM, XX = np.meshgrid(mem_pts, ptsT, indexing="ij")
        cur = env.delta ** T * (env.u1.u(T, XX, alloc(T, XX, MM))
                                 + payments.xi_at(T, XX, MM))
    else:
        pts = env.grid(tau).points
        a = alloc(tau, pts)
        cur = env.delta ** tau * (env.u1.u(tau, pts, a) + payments.xi_at(tau, pts))
    for s in range(tau - 1, down_to - 1, -1):
        pts = env.grid(s).points
        ker = env.kernel(s)
        a = alloc(s, pts)
        if cur.ndim == 2:
            ev = ker.expect_rows(env.grid(s + 1).points, cur, pts, a)
        else:
            ev = ker.expect(env.grid(s + 1).points, cur, pts, a)
        cur = env.delta ** s * env.u1.u(s, pts, a) + ev
    return cur


def build_lengths(env, alloc, payments):
    """Length tables for every period; the continue branch needs the
    synthesized xi (the horizon-end payment), which cancels at tau = t."""
    T = env.T
    mem2d = _alloc_memory_final(env, alloc)
    ell_S = [None] * T
    ell_Sbar = [None] * T
    for t in range(1, T):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        a_hat = alloc(t, pts)
        lS = _stop_length(env, alloc, t)
        best = lS.copy()  # tau = t candidate: the xi at the shared report cancels
        for tau in range(t + 1, T + 1):
            H = _horizon_tables(env, alloc, payments, tau, t + 1)
            n = pts.size
            cand = np.empty((n, n))
            if H.ndim == 2:
                # t = T-1 under memory: the period-T memory is the period-t
                # report, for both the own and the cross measure
                for j in range(n):
                    own = ker.expect(nxt, H[j], pts[j:j + 1], a_hat[j:j + 1])
                    crs = ker.expect(nxt, H[j], pts, np.full(n, a_hat[j]))
                    cand[j] = lS[j] + own[0] - crs
            else:
                I = gt.cumulative_integral(nxt, H)
                own = ker.expect(nxt, H, pts, a_hat, I=I)
                for j in range(n):
                    crs = ker.expect(nxt, H, pts, np.full(n, a_hat[j]), I=I)
                    cand[j] = lS[j] + own[j] - crs
            best = np.maximum(best, cand)
        ell_S[t - 1] = lS
        ell_Sbar[t - 1] = best
    if mem2d:
        mem_pts = env.grid(T - 1).points
        lT = np.stack([_stop_length(env, alloc, T, mem=m) for m in mem_pts])
    else:
        lT = _stop_length(env, alloc, T)
    ell_S[T - 1] = lT
    ell_Sbar[T - 1] = lT.copy()
    return LengthTable(env=env, ell_S=ell_S, ell_Sbar=ell_Sbar)


@dataclass
class SufficiencyReport:
    passed: bool
    worst_slack: float
    families: dict  # name -> {"worst_slack", "period", "theta", "theta_hat"}
    tolerance: float

    def to_dict(self):
        return {"passed": bool(self.passed), "worst_slack": self.worst_slack,
                "tolerance": self.tolerance, "families": self.families}


def _slack_scan(slack, pts, entry, t):
    """Track the most negative slack with its (true, report) location."""
    k = int(np.argmin(slack))
    if slack.ndim == 3:
        m, rest = divmod(k, slack.shape[1] * slack.shape[2])
        j, i = divmod(rest, slack.shape[2])
    else:
        j, i = divmod(k, slack.shape[1])
    val = float(slack.reshape(-1)[k])
    if val < entry["worst_slack"]:
        entry.update(worst_slack=val, period=t, theta=float(pts[i]), theta_hat=float(pts[j]))


def verify_sufficiency(env, alloc, pot, tol=-1e-6, payments=None):
    """Checks the three sufficiency families on every grid pair and period:
    stop-potential differences below ell_S, continue-potential differences
    below the best-horizon ell_Sbar, and beta_Sbar >= beta_S (equality at T).
    PASS iff the worst slack >= tol."""
    if payments is None:
        payments = construct_phi_xi(env, alloc, pot)
    lengths = build_lengths(env, alloc, payments)
    T = env.T
    fam = {name: {"worst_slack": np.inf, "period": None, "theta": None, "theta_hat": None}
           for name in ("stop", "continue", "order")}
    for t in range(1, T + 1):
        pts = env.grid(t).points
        bS, bB = pot.beta_S[t - 1], pot.beta_Sbar[t - 1]
        lS, lB = lengths.ell_S[t - 1], lengths.ell_Sbar[t - 1]
        if bS.ndim == 2:  # final period with memory: scan per memory row
            dS = bS[:, :, None] - bS[:, None, :]   # [m, report, true]
            dB = bB[:, :, None] - bB[:, None, :]
        else:
            dS = bS[:, None] - bS[None, :]         # [report, true]
            dB = bB[:, None] - bB[None, :]
        _slack_scan(lS - dS, pts, fam["stop"], t)
        _slack_scan(lB - dB, pts, fam["continue"], t)
        order = bB - bS
        k = int(np.argmin(order))
        val = float(order.reshape(-1)[k])
        if val < fam["order"]["worst_slack"]:
            node = pts[k % pts.size]
            fam["order"].update(worst_slack=val, period=t, theta=float(node), theta_hat=float(node))
    worst = min(v["worst_slack"] for v in fam.values())
    eqT = float(np.max(np.abs(pot.beta_Sbar[T - 1] - pot.beta_S[T - 1])))
    fam["order"]["final_period_equality_gap"] = eqT
    return SufficiencyReport(passed=worst >= tol and eqT <= 1e-12,
                             worst_slack=worst, families=fam, tolerance=tol)


# ===================== revenue equivalence =====================


@dataclass
class RevenueReport:
    constants: dict          # (t, tau) -> stream-difference constant
    state_deviation: float   # worst deviation of any stream difference from its mean
    rho_a: np.ndarray
    rho_b: np.ndarray
    C_rho: np.ndarray
    passed: bool
    tolerance: float

    def C_tau(self, tau):
        return self.constants[(1, tau)]

    def to_dict(self):
        return {"constants": {f"t={t},tau={tau}": v for (t, tau), v in self.constants.items()},
                "state_deviation": self.state_deviation,
                "rho_a": self.rho_a.tolist(), "rho_b": self.rho_b.tolist(),
                "C_rho": self.C_rho.tolist(), "passed": bool(self.passed),
                "tolerance": self.tolerance}


def _payment_stream(env, alloc, payments, rho, tau):
    """Expected discounted payments over periods t..tau (phi flows, the
    period-tau phi and xi, and the posted price), one table per t <= tau."""
    T = env.T
    mem2d = _alloc_memory_final(env, alloc)
    tabs = [None] * tau
    if tau == T and mem2d:
        mem_pts = env.grid(T - 1).points
        ptsT = env.grid(T).points
        MM, XX = np.meshgrid(mem_pts, ptsT, indexing="ij")
        tabs[tau - 1] = env.delta ** tau * (payments.phi_at(T, XX, MM)
                                            + payments.xi_at(T, XX, MM)) + rho[tau - 1]
    else:
        pts = env.grid(tau).points
        tabs[tau - 1] = env.delta ** tau * (payments.phi_at(tau, pts)
                                            + payments.xi_at(tau, pts)) + rho[tau - 1]
    for t in range(tau - 1, 0, -1):
        pts = env.grid(t).points
        ker = env.kernel(t)
        a = alloc(t, pts)
        nxt_tab = tabs[t]
        if nxt_tab.ndim == 2:
            ev = ker.expect_rows(env.grid(t + 1).points, nxt_tab, pts, a)
        else:
            ev = ker.expect(env.grid(t + 1).points, nxt_tab, pts, a)
        tabs[t - 1] = env.delta ** t * payments.phi_at(t, pts) + ev
    return tabs


def revenue_equivalence(env, alloc, theta_eps_a, theta_eps_b, eta, tol=1e-6):
    """Payment families from two anchor choices: per-horizon expected stream
    differences must be state-constant; posted prices from the same threshold
    differ by per-period constants that vanish in the final period."""
    envl = envelope_gamma(env, alloc)
    pot_a = potentials(env, alloc, theta_eps_a, envelope=envl)
    pot_b = potentials(env, alloc, theta_eps_b, envelope=envl)
    pay_a = construct_phi_xi(env, alloc, pot_a)
    pay_b = construct_phi_xi(env, alloc, pot_b)
    rho_a = construct_rho(env, alloc, pot_a, eta, payments=pay_a)
    rho_b = construct_rho(env, alloc, pot_b, eta, payments=pay_b)
    constants = {}
    worst_dev = 0.0
    for tau in range(1, env.T + 1):
        streams_a = _payment_stream(env, alloc, pay_a, rho_a, tau)
        streams_b = _payment_stream(env, alloc, pay_b, rho_b, tau)
        for t in range(1, tau + 1):
            d = streams_a[t - 1] - streams_b[t - 1]
            c = float(np.mean(d))
            constants[(t, tau)] = c
            worst_dev = max(worst_dev, float(np.max(np.abs(d - c))))
    C_rho = rho_a - rho_b
    passed = worst_dev <= tol and abs(C_rho[-1]) == 0.0
    return RevenueReport(constants=constants, state_deviation=worst_dev,
                         rho_a=rho_a, rho_b=rho_b, C_rho=C_rho,
                         passed=passed, tolerance=tol)


# ===================== posted-price feasibility =====================


@dataclass
class MembershipReport:
    member: bool
    eta: np.ndarray
    first_infeasible: int
    details: list = field(default_factory=list)

    @property
    def verdict(self):
        return "MEMBER" if self.member else "NOT-MEMBER"

    def to_dict(self):
        return {"verdict": self.verdict,
                "eta": None if self.eta is None else self.eta.tolist(),
                "first_infeasible": self.first_infeasible,
                "details": self.details}


def regular_set_membership(env, alloc, r, theta_eps=None, pot=None):
    """Is r a feasible posted-price sequence, and with which threshold?

    Builds the synthesized payments with r as the posted prices, solves the
    agent's problem, and per period looks for a state where the
    continuing-value curve equals r_t (the indifference point that makes the
    threshold rule optimal).  The row range is checked first; a bracketed
    root is refined to 1e-9.  MEMBER iff every non-final period has a root.
    """
    r = np.asarray(r, dtype=float)
    if r.size != env.T:
        raise ValueError(f"posted-price vector needs length {env.T}, got {r.size}")
    if r[-1] != 0.0:
        raise ValueError("the final-period posted price must be exactly 0")
    if pot is None:
        pot = potentials(env, alloc, theta_eps)
    pay = construct_phi_xi(env, alloc, pot)
    mech = Mechanism(alloc, PaymentRules(pay.phi, pay.xi, r))
    sol = solve_value(env, mech)
    T = env.T
    eta = np.full(T, np.nan)
    eta[T - 1] = env.grid(T).hi  # everyone stops in the final period
    details = []
    for t in range(1, T):
        pts = env.grid(t).points
        mb = sol.mu_bar[t - 1]
        row = {"period": t, "r": float(r[t - 1]),
               "mu_bar_min": float(mb.min()), "mu_bar_max": float(mb.max())}
        if r[t - 1] < mb.min() - 1e-9 or r[t - 1] > mb.max() + 1e-9:
            row["eta"] = None
            details.append(row)
            return MembershipReport(member=False, eta=None, first_infeasible=t,
                                    details=details)
        root = gt.monotone_root(pts, mb, r[t - 1])
        eta[t - 1] = root
        row["eta"] = float(root)
        details.append(row)
    return MembershipReport(member=True, eta=eta, first_infeasible=None, details=details)
