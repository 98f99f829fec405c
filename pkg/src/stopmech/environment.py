"""Discretized Markovian environment: grids, kernels, utilities, validators.

The environment is immutable after construction; every operation here is a
pure read, so concurrent use is safe.  Periods are 1-based throughout, like
the payoff ledger they feed.
"""

from dataclasses import dataclass, field

import numpy as np

from . import gridtools as gt
from .errors import DegenerateError, DerivativeError, SupportError

# ===================== grids =====================


@dataclass(frozen=True)
class PeriodGrid:
    """Uniformly spaced state grid for one period."""

    period: int
    lo: float
    hi: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if self.lo >= self.hi:
            raise DegenerateError(f"period {self.period}: lo {self.lo} >= hi {self.hi}")
        if pts.size < 3:
            raise DegenerateError(f"period {self.period}: fewer than 3 grid nodes")
        if not np.all(np.diff(pts) > 0):
            raise DegenerateError(f"period {self.period}: grid nodes not strictly increasing")
        if not (np.isclose(pts[0], self.lo) and np.isclose(pts[-1], self.hi)):
            raise DegenerateError(f"period {self.period}: grid does not span [lo, hi]")

    @property
    def n(self):
        return self.points.size

    @property
    def step(self):
        return (self.hi - self.lo) / (self.n - 1)


# ===================== transition kernels =====================


class TransitionKernel:
    """Conditional next-state law for one period transition t -> t+1.

    Two kinds:

    * ``affine-uniform``: next = c1*theta + c2*a + omega, omega ~ U[0, w].
      CDF, expectations and state-derivatives are closed-form.
    * ``tabular``: a conditional density table over
      (prev-state node, prev-allocation node, next-state node); conditioning
      off the stored nodes interpolates rows bilinearly, and every row used
      is renormalized so its trapezoid integral is exactly 1.
    """

    def __init__(self, kind, *, c1=None, c2=None, w=None,
                 prev_points=None, alloc_points=None, next_points=None, density=None):
        self.kind = kind
        if kind == "affine-uniform":
            if w is None or w <= 0:
                raise DegenerateError("affine-uniform kernel needs noise width w > 0")
            self.c1, self.c2, self.w = float(c1), float(c2), float(w)
        elif kind == "tabular":
            self.prev_points = np.asarray(prev_points, dtype=float)
            self.alloc_points = np.asarray(alloc_points, dtype=float)
            self.next_points = np.asarray(next_points, dtype=float)
            dens = np.asarray(density, dtype=float)
            if dens.shape != (self.prev_points.size, self.alloc_points.size, self.next_points.size):
                raise DegenerateError("tabular kernel density shape mismatch")
            if np.any(dens < 0):
                raise DegenerateError("tabular kernel density has negative entries")
            # renormalize every stored row to integrate to 1 exactly
            w_tr = gt.trapz_weights(self.next_points)
            mass = dens @ w_tr
            if np.any(mass <= 0):
                raise DegenerateError("tabular kernel row with zero mass")
            self.density_table = dens / mass[:, :, None]
        else:
            raise DegenerateError(f"unknown kernel kind {kind!r}")

    # ---------- support ----------

    def support(self, theta, a):
        """(lo, hi) of the conditional support; arrays broadcast."""
        if self.kind == "affine-uniform":
            s = self.c1 * np.asarray(theta, dtype=float) + self.c2 * np.asarray(a, dtype=float)
            return s, s + self.w
        lo = np.full(np.broadcast(np.asarray(theta), np.asarray(a)).shape, self.next_points[0])
        hi = np.full_like(lo, self.next_points[-1])
        return lo, hi

    def reach_bounds(self, theta_lo, theta_hi, a_lo, a_hi):
        """Interval-arithmetic reachable support over a state/allocation box."""
        if self.kind == "affine-uniform":
            corners_t = np.array([theta_lo, theta_hi])
            corners_a = np.array([a_lo, a_hi])
            vals = self.c1 * corners_t[:, None] + self.c2 * corners_a[None, :]
            return float(vals.min()), float(vals.max() + self.w)
        return float(self.next_points[0]), float(self.next_points[-1])

    # ---------- rows ----------

    def density_row(self, next_points, theta, a):
        """Density at the next-period nodes for one conditioning pair."""
        if self.kind == "affine-uniform":
            s = self.c1 * theta + self.c2 * a
            row = np.where((next_points >= s) & (next_points <= s + self.w), 1.0 / self.w, 0.0)
            return row
        row = self._interp_row(theta, a)
        if not np.array_equal(next_points, self.next_points):
            row = np.interp(next_points, self.next_points, row)
        return row

    def _interp_row(self, theta, a):
        """Bilinearly interpolated (and renormalized) tabular row."""
        tp, ap = self.prev_points, self.alloc_points
        i = int(np.clip(np.searchsorted(tp, theta) - 1, 0, tp.size - 2))
        j = int(np.clip(np.searchsorted(ap, a) - 1, 0, ap.size - 2))
        ut = np.clip((theta - tp[i]) / (tp[i + 1] - tp[i]), 0.0, 1.0)
        ua = np.clip((a - ap[j]) / (ap[j + 1] - ap[j]), 0.0, 1.0)
        row = ((1 - ut) * (1 - ua) * self.density_table[i, j]
               + ut * (1 - ua) * self.density_table[i + 1, j]
               + (1 - ut) * ua * self.density_table[i, j + 1]
               + ut * ua * self.density_table[i + 1, j + 1])
        mass = np.trapezoid(row, self.next_points)
        return row / mass

    # ---------- CDF ----------

    def cdf(self, x, theta, a):
        """F(x | theta, a); exact for affine-uniform, quadrature for tabular."""
        if self.kind == "affine-uniform":
            s = self.c1 * np.asarray(theta, dtype=float) + self.c2 * np.asarray(a, dtype=float)
            return np.clip((np.asarray(x, dtype=float) - s) / self.w, 0.0, 1.0)
        row = self._interp_row(float(theta), float(a))
        I = gt.cumulative_integral(self.next_points, row)
        return np.clip(gt.partial_integral(self.next_points, row, I, x), 0.0, 1.0)

    # ---------- expectations of grid tables ----------

    def expect(self, next_points, gtable, theta, a, I=None):
        """E[ghat(next) | theta, a] for each conditioning pair (vectorized).

        ``gtable`` is a 1-D table over ``next_points``; exact integration of
        its interpolant over the conditional law.
        """
        gtable = np.asarray(gtable, dtype=float)
        if self.kind == "affine-uniform":
            if I is None:
                I = gt.cumulative_integral(next_points, gtable)
            s, hi = self.support(theta, a)
            return (gt.partial_integral(next_points, gtable, I, hi)
                    - gt.partial_integral(next_points, gtable, I, s)) / self.w
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        a = np.atleast_1d(np.asarray(a, dtype=float))
        out = np.empty(theta.size)
        for k in range(theta.size):
            row = self._interp_row(theta[k], a[k])
            out[k] = gt.product_integral(next_points, row, gtable)
        return out if out.size > 1 else out[0]

    def expect_rows(self, next_points, G, theta, a, I=None):
        """Row-wise expectation: row k of 2-D table G under (theta[k], a[k]).

        Used for final-period memory tables, where the continuation table at
        T depends on the period-(T-1) report.
        """
        G = np.asarray(G, dtype=float)
        theta = np.asarray(theta, dtype=float)
        a = np.asarray(a, dtype=float)
        if self.kind == "affine-uniform":
            if I is None:
                I = gt.cumulative_integral(next_points, G)
            s = self.c1 * theta + self.c2 * a
            return (gt.partial_integral_rows(next_points, G, I, s + self.w)
                    - gt.partial_integral_rows(next_points, G, I, s)) / self.w
        out = np.empty(theta.size)
        for k in range(theta.size):
            row = self._interp_row(theta[k], a[k])
            out[k] = gt.product_integral(next_points, row, G[k])
        return out

    def expect_restricted(self, next_points, gtable, theta, a, lo_cut=-np.inf, hi_cut=np.inf):
        """(E[ghat * 1{lo_cut < next <= hi_cut}], restricted mass)."""
        gtable = np.asarray(gtable, dtype=float)
        if self.kind == "affine-uniform":
            I = gt.cumulative_integral(next_points, gtable)
            s, hi = self.support(theta, a)
            lo = np.maximum(s, lo_cut)
            up = np.minimum(hi, hi_cut)
            up = np.maximum(up, lo)  # empty intersection -> zero length
            val = (gt.partial_integral(next_points, gtable, I, up)
                   - gt.partial_integral(next_points, gtable, I, lo)) / self.w
            mass = (up - lo) / self.w
            return val, mass
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        a = np.atleast_1d(np.asarray(a, dtype=float))
        val = np.empty(theta.size)
        mass = np.empty(theta.size)
        lo = max(lo_cut, next_points[0])
        up = min(hi_cut, next_points[-1])
        up = max(up, lo)
        ones = np.ones_like(np.asarray(gtable))
        for k in range(theta.size):
            row = self._interp_row(theta[k], a[k])
            val[k] = gt.product_between(next_points, row, gtable, lo, up)
            mass[k] = gt.product_between(next_points, row, ones, lo, up)
        if val.size == 1:
            return val[0], mass[0]
        return val, mass

    # ---------- state-derivative operator ----------

    def kd_apply(self, next_points, gtable, theta, a, allow_fd=True):
        """Kd(g)(theta) = -integral ghat(x) dF/dtheta(x|theta,a) dx.

        For affine-uniform kernels dF/dtheta = -c1 * density on the support,
        so Kd(g) = c1 * E[g].  Tabular kernels fall back to a central finite
        difference of CDF rows in theta unless ``allow_fd`` is off.
        """
        if self.kind == "affine-uniform":
            return self.c1 * self.expect(next_points, gtable, theta, a)
        if not allow_fd:
            raise DerivativeError("tabular kernel has no closed-form state derivative "
                                  "and the finite-difference fallback is disabled")
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        a = np.atleast_1d(np.asarray(a, dtype=float))
        eps = 1e-5 * (self.prev_points[-1] - self.prev_points[0])
        out = np.empty(theta.size)
        for k in range(theta.size):
            tp = min(theta[k] + eps, self.prev_points[-1])
            tm = max(theta[k] - eps, self.prev_points[0])
            row_p = self._interp_row(tp, a[k])
            row_m = self._interp_row(tm, a[k])
            Ip = gt.cumulative_integral(next_points, np.interp(next_points, self.next_points, row_p))
            Im = gt.cumulative_integral(next_points, np.interp(next_points, self.next_points, row_m))
            dF = (Ip - Im) / (tp - tm)  # dF/dtheta sampled at next nodes
            out[k] = -gt.product_integral(next_points, dF, gtable)
        return out if out.size > 1 else out[0]


# ===================== utilities =====================


class UtilitySpec:
    """Per-period bivariate polynomial utility u(theta, a).

    ``coeffs[t]`` maps (i, j) -> c with u = sum c * theta^i * a^j.  The state
    derivative is the analytic coefficient shift unless explicit derivative
    coefficients are supplied.
    """

    def __init__(self, participant, coeffs, dtheta_coeffs=None):
        self.participant = int(participant)
        self.coeffs = [dict(c) for c in coeffs]
        self.dtheta_coeffs = [dict(c) for c in dtheta_coeffs] if dtheta_coeffs else None

    def _eval(self, cmap, theta, a):
        theta = np.asarray(theta, dtype=float)
        a = np.asarray(a, dtype=float)
        out = np.zeros(np.broadcast(theta, a).shape)
        for (i, j), c in cmap.items():
            out = out + c * theta ** i * a ** j
        return out

    def u(self, t, theta, a):
        return self._eval(self.coeffs[t - 1], theta, a)

    def du_dtheta(self, t, theta, a):
        if self.dtheta_coeffs is not None:
            return self._eval(self.dtheta_coeffs[t - 1], theta, a)
        shifted = {}
        for (i, j), c in self.coeffs[t - 1].items():
            if i >= 1:
                shifted[(i - 1, j)] = shifted.get((i - 1, j), 0.0) + i * c
        return self._eval(shifted, theta, a)


# ===================== environment =====================


@dataclass(frozen=True)
class Environment:
    T: int
    delta: float
    grids: list
    kernels: list
    u0: UtilitySpec
    u1: UtilitySpec
    f1: np.ndarray                 # initial density at grid-1 nodes, trapz-normalized
    alloc_ranges: list             # per-period (a_lo, a_hi)
    memory_final: bool = False     # final-period rules may take the previous report
    meta: dict = field(default_factory=dict)

    def grid(self, t):
        return self.grids[t - 1]

    def kernel(self, t):
        """Kernel for the transition t -> t+1 (valid for 1 <= t < T)."""
        if not 1 <= t < self.T:
            raise IndexError(f"kernel index t={t} out of range for T={self.T}")
        return self.kernels[t - 1]

    @property
    def f1_cdf(self):
        return gt.cumulative_integral(self.grid(1).points, self.f1)


def _make_density(spec, points):
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        vals = np.ones_like(points)
    elif kind == "poly":
        coeffs = np.asarray(spec["coeffs"], dtype=float)
        vals = sum(c * points ** i for i, c in enumerate(coeffs))
    else:
        raise DegenerateError(f"unknown initial density kind {kind!r}")
    if np.any(vals < 0):
        raise DegenerateError("initial density negative on the grid")
    mass = np.trapezoid(vals, points)
    if mass <= 0:
        raise DegenerateError("initial density has zero mass")
    return vals / mass


def build_environment(config):
    """Materialize an Environment from a scenario's environment/solver blocks.

    ``config`` is a ScenarioConfig (or any object with ``environment`` and
    ``solver`` dict attributes).  Grids for periods >= 2 default to the
    interval-arithmetic reachable-support envelope widened by 1% per side;
    explicitly configured bounds must cover that envelope.
    """
    env_blk = config.environment if hasattr(config, "environment") else config["environment"]
    sol_blk = config.solver if hasattr(config, "solver") else config.get("solver", {})
    T = int(env_blk["horizon"])
    delta = float(env_blk["discount"])
    if T < 1:
        raise DegenerateError(f"horizon T={T} must be >= 1")
    if not 0.0 < delta <= 1.0:
        raise DegenerateError(f"discount {delta} outside (0, 1]")
    n = int(sol_blk.get("grid", 201))

    alloc_ranges = [tuple(map(float, r)) for r in env_blk["allocation_ranges"]]
    if len(alloc_ranges) != T:
        raise DegenerateError("allocation_ranges must list one (lo, hi) per period")

    kernel_specs = env_blk.get("kernels", [])
    if len(kernel_specs) != T - 1:
        raise DegenerateError(f"expected {T - 1} kernels for horizon {T}, got {len(kernel_specs)}")

    explicit = {int(b["period"]): (float(b["lo"]), float(b["hi"]))
                for b in env_blk.get("grid_bounds", []) if int(b["period"]) > 1}

    g1 = env_blk["state_bounds"]
    lo, hi = float(g1[0]), float(g1[1])
    grids = [PeriodGrid(1, lo, hi, np.linspace(lo, hi, n))]
    kernels = []
    for t in range(1, T):
        spec = kernel_specs[t - 1]
        if spec["kind"] == "affine-uniform":
            ker = TransitionKernel("affine-uniform", c1=spec["c1"], c2=spec["c2"], w=spec["w"])
        else:
            ker = TransitionKernel(
                "tabular",
                prev_points=spec["prev_points"], alloc_points=spec["alloc_points"],
                next_points=spec["next_points"], density=spec["density"])
        kernels.append(ker)
        prev = grids[-1]
        a_lo, a_hi = alloc_ranges[t - 1]
        rlo, rhi = ker.reach_bounds(prev.lo, prev.hi, a_lo, a_hi)
        if (t + 1) in explicit:
            blo, bhi = explicit[t + 1]
            if blo > rlo + 1e-12 or bhi < rhi - 1e-12:
                raise SupportError(
                    f"grid bounds [{blo}, {bhi}] for period {t + 1} do not cover the "
                    f"reachable support [{rlo}, {rhi}]")
            glo, ghi = blo, bhi
        else:
            span = rhi - rlo
            glo, ghi = rlo - 0.01 * span, rhi + 0.01 * span
        grids.append(PeriodGrid(t + 1, glo, ghi, np.linspace(glo, ghi, n)))

    u0 = UtilitySpec(0, _parse_poly_list(env_blk["u0"], T))
    u1 = UtilitySpec(1, _parse_poly_list(env_blk["u1"], T))
    f1 = _make_density(env_blk.get("initial_density", {"kind": "uniform"}), grids[0].points)
    memory_final = bool(env_blk.get("memory_final", False))
    return Environment(T=T, delta=delta, grids=grids, kernels=kernels, u0=u0, u1=u1,
                       f1=f1, alloc_ranges=alloc_ranges, memory_final=memory_final,
                       meta={"grid_nodes": n})


def _parse_poly_list(spec, T):
    """Utility block: either one {"i,j": c} map reused every period or a list per period."""
    def parse_map(m):
        out = {}
        for key, c in m.items():
            i, j = (int(p) for p in key.split(","))
            out[(i, j)] = float(c)
        return out

    if isinstance(spec, dict):
        return [parse_map(spec)] * T
    if len(spec) != T:
        raise DegenerateError("per-period utility list length does not match horizon")
    return [parse_map(m) for m in spec]


# ===================== spec-level convenience ops =====================


def kernel_cdf(env, t, x, theta_prev, a_prev):
    """F_{t+1}(x | theta_t, a_t); raises IndexError for t outside [1, T)."""
    return env.kernel(t).cdf(x, theta_prev, a_prev)


# ===================== validators =====================


@dataclass
class ValidationReport:
    name: str
    passed: bool
    failures: list = field(default_factory=list)
    worst: float = 0.0

    def __bool__(self):
        return self.passed


def check_full_support(env):
    """Assumption: realized states are fully supported (density > 0 inside)."""
    failures = []
    pts1 = env.grid(1).points
    bad = np.flatnonzero(env.f1[1:-1] <= 0)
    failures += [{"period": 1, "node": int(k + 1), "value": float(env.f1[k + 1])} for k in bad]
    for t in range(1, env.T):
        ker = env.kernel(t)
        if ker.kind == "affine-uniform":
            continue  # density = 1/w > 0 on its support
        for i in range(ker.prev_points.size):
            for j in range(ker.alloc_points.size):
                row = ker.density_table[i, j]
                inside = np.flatnonzero(row[1:-1] <= 0)
                failures += [{"period": t + 1, "node": int(k + 1),
                              "prev_node": i, "alloc_node": j} for k in inside]
    return ValidationReport("full-support", not failures, failures)


def check_fosd(env, alloc, tol=1e-10):
    """First-order stochastic dominance of the controlled chain under ``alloc``.

    For each period and each adjacent state pair theta < theta', checks
    F(x | theta', a') <= F(x | theta, a) at every next-grid node x.
    """
    failures = []
    worst = 0.0
    for t in range(1, env.T):
        pts = env.grid(t).points
        nxt = env.grid(t + 1).points
        a = alloc(t, pts)
        ker = env.kernel(t)
        cdf_rows = np.stack([np.asarray(ker.cdf(nxt, pts[k], a[k])) for k in range(pts.size)])
        viol = cdf_rows[1:] - cdf_rows[:-1]   # should be <= 0
        m = float(viol.max(initial=-np.inf))
        worst = max(worst, m)
        if m > tol:
            k, j = np.unravel_index(np.argmax(viol), viol.shape)
            failures.append({"period": t, "pair": (int(k), int(k + 1)),
                             "x_node": int(j), "violation": m})
    return ValidationReport("fosd", not failures, failures, worst)


def check_lipschitz(env, bound=1e3):
    """Bounded difference-quotient scan of the agent utility in the state."""
    failures = []
    worst = 0.0
    for t in range(1, env.T + 1):
        pts = env.grid(t).points
        a_lo, a_hi = env.alloc_ranges[t - 1]
        for a in (a_lo, 0.5 * (a_lo + a_hi), a_hi):
            vals = env.u1.u(t, pts, a)
            quot = np.abs(np.diff(vals) / np.diff(pts))
            m = float(quot.max(initial=0.0))
            worst = max(worst, m)
            if m > bound:
                failures.append({"period": t, "alloc": a, "quotient": m})
    return ValidationReport("lipschitz", not failures, failures, worst)
