"""Mechanisms (allocation + payment rules) and agent-side strategies.

Rules are stored per period as either bivariate polynomials in
(current state, previous report) or node tables; one-period memory (the
previous-report argument) is permitted only at the final period, which is
how a terminal allocation like a_T(theta_T; theta_{T-1}) is expressed
without changing the single-argument signature elsewhere.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, MissingMemoryError, SchemaError

# ===================== grid functions =====================


class PolyFn:
    """Polynomial rule: sum of c * state^i * mem^j terms."""

    def __init__(self, coeffs):
        self.coeffs = {(int(i), int(j)): float(c) for (i, j), c in coeffs.items()}
        self.needs_memory = any(j > 0 for (_, j) in self.coeffs)

    def __call__(self, theta, mem=None):
        theta = np.asarray(theta, dtype=float)
        if self.needs_memory and mem is None:
            raise MissingMemoryError("two-argument rule evaluated without the previous report")
        mem_arr = np.asarray(mem, dtype=float) if mem is not None else 0.0
        out = np.zeros(np.broadcast(theta, mem_arr).shape)
        for (i, j), c in self.coeffs.items():
            term = c * theta ** i
            if j:
                term = term * mem_arr ** j
            out = out + term
        return out


class TabularFn:
    """Node-table rule; linear interpolation off the nodes (clamped).

    1-D: values over ``points``.  2-D (memory form): values[mem_node, state_node]
    over (mem_points, points); evaluation interpolates linearly in both axes.
    """

    def __init__(self, points, values, mem_points=None):
        self.points = np.asarray(points, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.mem_points = np.asarray(mem_points, dtype=float) if mem_points is not None else None
        self.needs_memory = self.values.ndim == 2
        if self.needs_memory and self.mem_points is None:
            raise DegenerateError("2-D tabular rule requires mem_points")

    def __call__(self, theta, mem=None):
        theta = np.asarray(theta, dtype=float)
        if not self.needs_memory:
            return np.interp(theta, self.points, self.values)
        if mem is None:
            raise MissingMemoryError("two-argument rule evaluated without the previous report")
        mem = np.asarray(mem, dtype=float)
        shape = np.broadcast(theta, mem).shape
        th = np.broadcast_to(theta, shape).ravel()
        mm = np.broadcast_to(mem, shape).ravel()
        mp, pts, V = self.mem_points, self.points, self.values
        i = np.clip(np.searchsorted(mp, mm) - 1, 0, mp.size - 2)
        u = np.clip((mm - mp[i]) / (mp[i + 1] - mp[i]), 0.0, 1.0)
        k = np.clip(np.searchsorted(pts, th) - 1, 0, pts.size - 2)
        v = np.clip((th - pts[k]) / (pts[k + 1] - pts[k]), 0.0, 1.0)
        out = ((1 - u) * ((1 - v) * V[i, k] + v * V[i, k + 1])
               + u * ((1 - v) * V[i + 1, k] + v * V[i + 1, k + 1]))
        return out.reshape(shape) if shape else float(out[0])

    def table_on(self, points, mem_points=None):
        """Values resampled on the given grid(s); exact at stored nodes."""
        if not self.needs_memory:
            return np.interp(points, self.points, self.values)
        mem_points = self.mem_points if mem_points is None else np.asarray(mem_points)
        return np.stack([self(points, np.full_like(points, m)) for m in mem_points])


def constant_fn(value):
    return PolyFn({(0, 0): float(value)})


# ===================== rules =====================


@dataclass
class AllocationRule:
    """Per-period allocation functions with declared ranges.

    Evaluation clips into the declared range so downstream quadrature always
    sees admissible allocations; construction-time validation catches rules
    that leave the range at grid nodes.
    """

    fns: list
    ranges: list

    def __call__(self, t, theta, mem=None):
        lo, hi = self.ranges[t - 1]
        return np.clip(self.fns[t - 1](theta, mem), lo, hi)

    def needs_memory(self, t):
        return self.fns[t - 1].needs_memory


@dataclass
class PaymentRules:
    phi: list                      # per-period continuing payment functions
    xi: list                       # per-period stopping payment functions
    rho: np.ndarray                # posted-price vector indexed by stopping period

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.assert_valid()

    def assert_valid(self):
        if self.rho[-1] != 0.0:
            raise DegenerateError(f"rho(T) must be exactly 0, got {self.rho[-1]!r}")

    def phi_at(self, t, theta, mem=None):
        return self.phi[t - 1](theta, mem)

    def xi_at(self, t, theta, mem=None):
        return self.xi[t - 1](theta, mem)


@dataclass
class Mechanism:
    alloc: AllocationRule
    pay: PaymentRules

    def with_rho(self, rho):
        """Copy with a replacement posted-price vector."""
        return Mechanism(self.alloc, PaymentRules(self.pay.phi, self.pay.xi, np.asarray(rho, float)))


def eval_mechanism(mech, t, theta_hat, memory=None):
    """(allocation, phi, xi) at the report; memory is the previous report."""
    a = mech.alloc(t, theta_hat, memory)
    phi = mech.pay.phi_at(t, theta_hat, memory)
    xi = mech.pay.xi_at(t, theta_hat, memory)
    return a, phi, xi


# ===================== strategies and stopping policies =====================


@dataclass
class ReportingStrategy:
    """Per-period report maps; reports are clamped into the period interval."""

    kind: str = "truthful"
    period: int = 0
    deviation: object = None       # callable theta -> report for the one-shot period
    maps: list = field(default_factory=list)   # per-period callables for "arbitrary"

    @staticmethod
    def truthful():
        return ReportingStrategy("truthful")

    @staticmethod
    def one_shot(period, deviation):
        dev = deviation if callable(deviation) else (lambda th, _v=float(deviation): np.full_like(np.asarray(th, dtype=float), _v))
        return ReportingStrategy("one-shot", period=period, deviation=dev)

    @staticmethod
    def arbitrary(maps):
        return ReportingStrategy("arbitrary", maps=list(maps))


def compose_report(strategy, t, theta, grid=None):
    theta = np.asarray(theta, dtype=float)
    if strategy.kind == "truthful":
        out = theta
    elif strategy.kind == "one-shot":
        out = strategy.deviation(theta) if t == strategy.period else theta
    elif strategy.kind == "arbitrary":
        out = strategy.maps[t - 1](theta)
    else:
        raise DegenerateError(f"unknown strategy kind {strategy.kind!r}")
    out = np.asarray(out, dtype=float)
    if grid is not None:
        out = np.clip(out, grid.lo, grid.hi)
    return out


@dataclass
class StoppingPolicy:
    """Threshold form (stop iff theta_t <= eta(t)) or explicit regions."""

    kind: str
    eta: np.ndarray = None
    regions: list = None           # per-period callables theta -> bool

    @staticmethod
    def threshold(eta):
        return StoppingPolicy("threshold", eta=np.asarray(eta, dtype=float))

    @staticmethod
    def explicit(regions):
        return StoppingPolicy("explicit", regions=list(regions))

    def stops(self, t, theta, T=None):
        theta = np.asarray(theta, dtype=float)
        if T is not None and t == T:
            return np.ones(theta.shape, dtype=bool)
        if self.kind == "threshold":
            return theta <= self.eta[t - 1]
        return np.asarray(self.regions[t - 1](theta), dtype=bool)


# ===================== scenario-side construction =====================


def _parse_fn(spec, grid, mem_grid=None, allow_memory=False):
    kind = spec.get("kind", "poly")
    if kind == "poly":
        coeffs = {}
        for key, c in spec["coeffs"].items():
            parts = key.split(",")
            i = int(parts[0])
            j = int(parts[1]) if len(parts) > 1 else 0
            coeffs[(i, j)] = float(c)
        fn = PolyFn(coeffs)
    elif kind == "tabular":
        values = np.asarray(spec["values"], dtype=float)
        if values.ndim == 2:
            fn = TabularFn(grid.points, values, mem_points=mem_grid.points)
        else:
            fn = TabularFn(grid.points, values)
    else:
        raise SchemaError(f"unknown rule kind {kind!r}")
    if fn.needs_memory and not allow_memory:
        raise SchemaError("memory (previous-report) rules are only allowed at the final period")
    return fn


def build_mechanism(config, env):
    """Materialize the scenario's mechanism block; None when absent."""
    blk = config.mechanism if hasattr(config, "mechanism") else config.get("mechanism")
    if not blk:
        return None
    T = env.T
    mem_ok = env.memory_final

    def fn_list(specs, what):
        if len(specs) != T:
            raise SchemaError(f"mechanism block {what} must list one rule per period")
        out = []
        for t, spec in enumerate(specs, start=1):
            allow = mem_ok and t == T
            mem_grid = env.grid(T - 1) if (allow and T >= 2) else None
            out.append(_parse_fn(spec, env.grid(t), mem_grid, allow_memory=allow))
        return out

    alloc = AllocationRule(fn_list(blk["alpha"], "alpha"), env.alloc_ranges)
    phi = fn_list(blk["phi"], "phi")
    xi = fn_list(blk["xi"], "xi")
    rho = np.asarray(blk["rho"], dtype=float)
    if rho.size != T:
        raise SchemaError("rho must have one entry per period")
    if rho[-1] != 0.0:
        raise SchemaError("rho at the final period must be exactly 0")

    # allocations must stay inside the declared range at the grid nodes
    for t in range(1, T + 1):
        pts = env.grid(t).points
        mem = env.grid(T - 1).points[pts.size // 2] if (alloc.needs_memory(t)) else None
        vals = alloc.fns[t - 1](pts, mem if mem is None else np.full_like(pts, mem))
        lo, hi = env.alloc_ranges[t - 1]
        if np.any(vals < lo - 1e-9) or np.any(vals > hi + 1e-9):
            raise SchemaError(f"allocation rule leaves its declared range at period {t}")

    return Mechanism(alloc, PaymentRules(phi, xi, rho))
