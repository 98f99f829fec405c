"""Principal's relaxed profit maximization over parametric allocation families.

The relaxed problem keeps only the envelope necessary conditions of incentive
compatibility: payments drop out of the objective, leaving the expected
discounted flow surplus of both participants minus the information rent
E[(1-F_1)/f_1 * sum_t delta^t du_1/dtheta * G_{1,t}] accrued over the random
horizon induced by the exit threshold.  Flows accrue on the mass still active
at each period (the same survival measure that drives the mean first passage
time); the impulse-response weights G_{1,t} enter through the kernel's
state-derivative operator, chained backward exactly as in the envelope
recursion.

The participation constraint is handled by anchoring: the bottom initial
state's interim payoff is forced to zero by shifting the first period's
payments by a constant, which leaves local incentives and the posted prices
unchanged.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import gridtools as gt
from .errors import NonFiniteError
from .mechanism import Mechanism, PaymentRules, PolyFn, TabularFn, AllocationRule
from .valuesolver import solve_value, fixed_horizon_tables

# ===================== allocation families =====================


class AffineFamily:
    """Per-period affine allocations a_t = p_t * theta + q_t.

    With final-period memory the last rule is a_T = p * theta_T
    + m * theta_{T-1} + q.  Parameters are concatenated period by period;
    ``build`` materializes an AllocationRule clipped into the environment's
    declared ranges.
    """

    def __init__(self, env, memory=None, box=8.0):
        self.env = env
        self.memory = env.memory_final if memory is None else bool(memory)
        self.box = float(box)
        names = []
        for t in range(1, env.T + 1):
            if t == env.T and self.memory and env.T >= 2:
                names += [f"p{t}", f"m{t}", f"q{t}"]
            else:
                names += [f"p{t}", f"q{t}"]
        self.names = names

    @property
    def dim(self):
        return len(self.names)

    @property
    def bounds(self):
        return [(-self.box, self.box)] * self.dim

    def build(self, params):
        params = np.asarray(params, dtype=float)
        if params.size != self.dim:
            raise ValueError(f"family has {self.dim} parameters, got {params.size}")
        fns = []
        k = 0
        for t in range(1, self.env.T + 1):
            if t == self.env.T and self.memory and self.env.T >= 2:
                p, m, q = params[k], params[k + 1], params[k + 2]
                fns.append(PolyFn({(1, 0): p, (0, 1): m, (0, 0): q}))
                k += 3
            else:
                p, q = params[k], params[k + 1]
                fns.append(PolyFn({(1, 0): p, (0, 0): q}))
                k += 2
        return AllocationRule(fns, list(self.env.alloc_ranges))

    def describe(self):
        return {"kind": "affine", "memory": self.memory, "names": list(self.names)}


class TabularFamily:
    """Free node values per period, interpolated linearly between the nodes.

    Nodes are placed uniformly over each period's grid span; parameters are
    the concatenated node values.  Final-period rules are typed on the
    current state only.
    """

    def __init__(self, env, nodes=4, box=8.0):
        self.env = env
        self.box = float(box)
        if np.isscalar(nodes):
            nodes = [int(nodes)] * env.T
        self.node_grids = [np.linspace(env.grid(t).lo, env.grid(t).hi, int(nodes[t - 1]))
                           for t in range(1, env.T + 1)]
        self.names = [f"a{t}@{i}" for t in range(1, env.T + 1)
                      for i in range(self.node_grids[t - 1].size)]

    @property
    def dim(self):
        return len(self.names)

    @property
    def bounds(self):
        return [(-self.box, self.box)] * self.dim

    def build(self, params):
        params = np.asarray(params, dtype=float)
        if params.size != self.dim:
            raise ValueError(f"family has {self.dim} parameters, got {params.size}")
        fns = []
        k = 0
        for t in range(1, self.env.T + 1):
            ng = self.node_grids[t - 1]
            fns.append(TabularFn(ng, params[k:k + ng.size]))
            k += ng.size
        return AllocationRule(fns, list(self.env.alloc_ranges))

    def describe(self):
        return {"kind": "tabular", "nodes": [g.size for g in self.node_grids],
                "names": list(self.names)}


# ===================== relaxed objective =====================


def _normalize_eta(env, eta):
    """Exit thresholds for periods 1..T-1 (scalar broadcast allowed)."""
    if env.T == 1:
        return np.zeros(0)
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if eta.size == 1:
        eta = np.full(env.T - 1, eta[0])
    if eta.size == env.T:
        eta = eta[:-1]
    if eta.size != env.T - 1:
        raise ValueError(f"need {env.T - 1} thresholds, got {eta.size}")
    return eta


def _kd_rows(ker, nxt, G, pts, a):
    """Row-wise state-derivative pullback of a final-period memory table."""
    if ker.kind == "affine-uniform":
        return ker.c1 * ker.expect_rows(nxt, G, pts, a)
    out = np.empty(pts.size)
    for k in range(pts.size):
        out[k] = ker.kd_apply(nxt, G[k], pts[k], a[k])
    return out


def _kd_restricted(ker, nxt, g, pts, a, lo_cut):
    """State-derivative pullback of g * 1{next > lo_cut}.

    Exact partial-support integration for affine-uniform kernels; tabular
    kernels apply the gate node-wise before differencing (desk-scale
    approximation, gates snap to the next period's grid).
    """
    if ker.kind == "affine-uniform":
        val, _ = ker.expect_restricted(nxt, g, pts, a, lo_cut=lo_cut)
        return ker.c1 * val
    gated = np.where(nxt > lo_cut, g, 0.0)
    return ker.kd_apply(nxt, gated, pts, a)


def relaxed_objective(env, alloc, eta):
    """Expected virtual surplus of an allocation rule under exit thresholds.

    Backward accumulation over the survival measure: the period flow
    u_0 + u_1 accrues on all mass alive at t, continuation past t requires
    theta_t > eta(t), and the final period is a forced stop.  The rent
    recursion chains delta^t du_1/dtheta through the kernel's
    state-derivative operator over the same gated horizon; its initial-state
    weight (1-F_1)/f_1 cancels against the density in the ex-ante integral.
    """
    eta = _normalize_eta(env, eta)
    T, delta = env.T, env.delta
    ptsT = env.grid(T).points
    if T >= 2 and alloc.needs_memory(T):
        mem = env.grid(T - 1).points
        MM, XX = np.meshgrid(mem, ptsT, indexing="ij")
        aT = alloc(T, XX, MM)
        flow = delta ** T * (env.u0.u(T, XX, aT) + env.u1.u(T, XX, aT))
        rflow = delta ** T * env.u1.du_dtheta(T, XX, aT)
    else:
        aT = alloc(T, ptsT)
        flow = delta ** T * (env.u0.u(T, ptsT, aT) + env.u1.u(T, ptsT, aT))
        rflow = delta ** T * env.u1.du_dtheta(T, ptsT, aT)
    cont = rcont = None
    for t in range(T - 1, 0, -1):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        ker = env.kernel(t)
        a = alloc(t, pts)
        if flow.ndim == 2:
            ev = ker.expect_rows(nxt, flow, pts, a)
            rv = _kd_rows(ker, nxt, rflow, pts, a)
        else:
            ev = ker.expect(nxt, flow, pts, a)
            rv = ker.kd_apply(nxt, rflow, pts, a)
        if cont is not None:
            gv, _ = ker.expect_restricted(nxt, cont, pts, a, lo_cut=eta[t])
            ev = ev + gv
            rv = rv + _kd_restricted(ker, nxt, rcont, pts, a, eta[t])
        cont, rcont = ev, rv
        flow = delta ** t * (env.u0.u(t, pts, a) + env.u1.u(t, pts, a))
        rflow = delta ** t * env.u1.du_dtheta(t, pts, a)
    pts1 = env.grid(1).points
    rent_w = 1.0 - env.f1_cdf
    total = gt.product_integral(pts1, env.f1, flow)
    rent = gt.product_integral(pts1, rent_w, rflow)
    if T >= 2:
        total += gt.product_between(pts1, env.f1, cont, eta[0], pts1[-1])
        rent += gt.product_between(pts1, rent_w, rcont, eta[0], pts1[-1])
    value = float(total - rent)
    if not np.isfinite(value):
        raise NonFiniteError("relaxed objective evaluated non-finite")
    return value


@dataclass
class RelaxedObjective:
    """Objective bound to (environment, family, thresholds); pure in params."""

    env: object
    family: object
    eta: object
    value: float = None
    gradient: np.ndarray = None

    def __call__(self, params):
        return relaxed_objective(self.env, self.family.build(params), self.eta)

    def evaluate(self, params):
        self.value = self(params)
        return self.value

    def fd_gradient(self, params, step=1e-5):
        """Central finite-difference gradient in the family parameters."""
        params = np.asarray(params, dtype=float)
        g = np.empty(params.size)
        for i in range(params.size):
            h = step * (1.0 + abs(params[i]))
            up = params.copy(); up[i] += h
            dn = params.copy(); dn[i] -= h
            g[i] = (self(up) - self(dn)) / (2 * h)
        self.gradient = g
        return g


# ===================== optimizer =====================


@dataclass
class OptimizerConfig:
    starts: int = 8
    sweeps: int = 40
    seed: int = 7
    xatol: float = 1e-7
    value_tol: float = 1e-11
    fd_step: float = 1e-5


@dataclass
class OptimizerReport:
    family: dict
    eta: list
    best_params: np.ndarray
    best_value: float
    gradient_norm: float
    restart_values: list
    n_evals: int
    config: dict

    def to_dict(self):
        return {
            "family": self.family,
            "eta": list(np.atleast_1d(self.eta)),
            "best_params": [float(v) for v in self.best_params],
            "best_value": float(self.best_value),
            "gradient_norm": float(self.gradient_norm),
            "restart_values": [float(v) for v in self.restart_values],
            "n_evals": int(self.n_evals),
            "config": dict(self.config),
        }


def optimize_allocation(env, family, eta, config=None):
    """Maximize the relaxed objective by bounded coordinate refinement.

    Deterministic multi-start (one centered start plus seeded uniform draws
    over the parameter box); each start runs coordinate-wise bounded scalar
    maximization until a full sweep improves by less than the value
    tolerance.  Raises NonFiniteError if any probed value is non-finite.
    """
    if family.dim > 16:
        raise ValueError(f"family dimension {family.dim} exceeds the desk-scale cap 16")
    cfg = config or OptimizerConfig()
    evals = [0]

    def obj(params):
        evals[0] += 1
        return relaxed_objective(env, family.build(params), eta)

    bounds = family.bounds
    rng = np.random.default_rng(cfg.seed)
    starts = [np.array([0.5 * (lo + hi) for lo, hi in bounds])]
    for _ in range(max(cfg.starts - 1, 0)):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))

    lo_b = np.array([b[0] for b in bounds])
    hi_b = np.array([b[1] for b in bounds])
    best_x, best_v = None, -np.inf
    restart_values = []
    for x0 in starts:
        x = x0.copy()
        v = obj(x)
        for _ in range(cfg.sweeps):
            x_prev = x.copy()
            improved = 0.0
            for i in range(family.dim):
                lo, hi = bounds[i]

                def line(s, i=i, x=x):
                    trial = x.copy()
                    trial[i] = s
                    return -obj(trial)

                res = minimize_scalar(line, bounds=(lo, hi), method="bounded",
                                      options={"xatol": cfg.xatol})
                if -res.fun > v:
                    improved += (-res.fun) - v
                    v = -res.fun
                    x[i] = res.x
            # pattern move along the sweep displacement: coordinate descent
            # alone zigzags in curved valleys of correlated parameters
            d = x - x_prev
            dmax = float(np.max(np.abs(d)))
            if dmax > 0.0:
                with np.errstate(divide="ignore"):
                    room_hi = np.where(d > 0, (hi_b - x) / np.where(d > 0, d, 1.0), np.inf)
                    room_lo = np.where(d < 0, (lo_b - x) / np.where(d < 0, d, 1.0), np.inf)
                s_max = float(min(np.min(room_hi), np.min(room_lo), 16.0))
                if s_max > 0.0:
                    def pattern(s, x=x, d=d):
                        return -obj(x + s * d)

                    res = minimize_scalar(pattern, bounds=(0.0, s_max), method="bounded",
                                          options={"xatol": cfg.xatol})
                    if -res.fun > v:
                        improved += (-res.fun) - v
                        v = -res.fun
                        x = x + res.x * d
            if improved < cfg.value_tol:
                break
        restart_values.append(v)
        if v > best_v:
            best_v, best_x = v, x.copy()

    ro = RelaxedObjective(env, family, eta)
    grad = ro.fd_gradient(best_x, step=cfg.fd_step)
    return OptimizerReport(
        family=family.describe(),
        eta=list(np.atleast_1d(np.asarray(eta, dtype=float))),
        best_params=best_x,
        best_value=best_v,
        gradient_norm=float(np.linalg.norm(grad)),
        restart_values=restart_values,
        n_evals=evals[0],
        config={"starts": cfg.starts, "sweeps": cfg.sweeps, "seed": cfg.seed,
                "xatol": cfg.xatol, "value_tol": cfg.value_tol, "fd_step": cfg.fd_step},
    )


@dataclass
class EtaSweepReport:
    reports: list
    best_index: int

    @property
    def best(self):
        return self.reports[self.best_index]

    def to_dict(self):
        return {"best_index": int(self.best_index),
                "reports": [r.to_dict() for r in self.reports]}


def optimize_over_eta(env, family, etas, config=None):
    """Fixed-threshold optimizations over a sweep grid; best (alpha, eta) pair.

    Joint optimization over the threshold is out of scope by design: each
    sweep point solves an independent fixed-eta problem (evaluations are
    pure) and the report ranks them.
    """
    reports = [optimize_allocation(env, family, e, config=config) for e in etas]
    best = int(np.argmax([r.best_value for r in reports]))
    return EtaSweepReport(reports=reports, best_index=best)


# ===================== participation and payoff checks =====================


@dataclass
class RPReport:
    passed: bool
    exante: float
    bottom: float
    tau_bar: float

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"

    def to_dict(self):
        return {"verdict": self.verdict, "exante": float(self.exante),
                "bottom": float(self.bottom), "tau_bar": float(self.tau_bar)}


def rp_check(env, mech, tau_bar=None, solution=None, tol=1e-9):
    """Ex-ante participation: E[V_1] >= 0 within slack.

    Also reports the bottom initial state's interim payoff, the point where
    the constraint binds under monotone payoffs.
    """
    if solution is None:
        solution = solve_value(env, mech)
    pts1 = env.grid(1).points
    exante = float(gt.product_integral(pts1, env.f1, solution.V[0]))
    bottom = float(solution.V[0][0])
    tb = float(tau_bar) if tau_bar is not None else float(solution.tau_bar)
    return RPReport(passed=exante >= -tol, exante=exante, bottom=bottom, tau_bar=tb)


@dataclass
class MonotonePayoffReport:
    passed: bool
    worst_drop: float
    details: list

    @property
    def verdict(self):
        return "PASS" if self.passed else "FAIL"

    def to_dict(self):
        return {"verdict": self.verdict, "worst_drop": float(self.worst_drop),
                "details": list(self.details)}


def monotone_payoff_check(env, mech, tol=1e-9):
    """Fixed-horizon interim payoffs non-decreasing in the state.

    Scans J_{1,t}(tau, .) for every horizon tau and period t <= tau; the
    final-period memory table is scanned along the state axis row by row.
    """
    worst = 0.0
    details = []
    for tau in range(1, env.T + 1):
        tabs = fixed_horizon_tables(env, mech, tau)
        for t in range(1, tau + 1):
            tab = tabs[t - 1]
            d = np.diff(tab, axis=-1)
            drop = float(-d.min()) if d.size else 0.0
            worst = max(worst, drop)
            details.append({"tau": tau, "t": t, "worst_drop": drop})
    return MonotonePayoffReport(passed=worst <= tol, worst_drop=worst, details=details)


def _shift_fn(fn, c):
    """Same-kind payment rule shifted by a constant."""
    if isinstance(fn, PolyFn):
        coeffs = dict(fn.coeffs)
        coeffs[(0, 0)] = coeffs.get((0, 0), 0.0) + c
        return PolyFn(coeffs)
    if isinstance(fn, TabularFn):
        return TabularFn(fn.points, fn.values + c, mem_points=fn.mem_points)
    base = fn

    def shifted(theta, mem=None):
        return base(theta, mem) + c

    shifted.needs_memory = getattr(base, "needs_memory", False)
    return shifted


def enforce_participation(env, mech, solution=None):
    """Anchor the bottom initial state's interim payoff at zero.

    Shifts the first period's continuing and stopping payments by the same
    constant, which moves every period-1 payoff branch uniformly: posted
    prices, stop premia, and incentive gaps are unchanged while the RP
    constraint binds exactly at the bottom state.  Returns the adjusted
    mechanism and the flow-level shift applied.
    """
    if solution is None:
        solution = solve_value(env, mech)
    bottom = float(solution.V[0][0])
    kappa = -bottom / env.delta
    if bottom == 0.0:
        return mech, 0.0
    phi = list(mech.pay.phi)
    xi = list(mech.pay.xi)
    phi[0] = _shift_fn(phi[0], kappa)
    xi[0] = _shift_fn(xi[0], kappa)
    return Mechanism(mech.alloc, PaymentRules(phi, xi, mech.pay.rho.copy())), kappa
