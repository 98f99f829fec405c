"""Environment construction, transition kernels, and the assumption checks."""

import numpy as np
import pytest

import stopmech.gridtools as gt
from conftest import build_instance, make_env_doc
from stopmech import (DegenerateError, SchemaError, SupportError,
                      build_environment, check_fosd, check_full_support,
                      check_lipschitz, kernel_cdf, parse_scenario)
from stopmech.environment import TransitionKernel, UtilitySpec
from stopmech.mechanism import AllocationRule, PolyFn, constant_fn

RNG = np.random.default_rng(20260815)


# ===================== construction =====================


def test_bundled_grids_cover_reachable_support(env_sb):
    g1, g2 = env_sb.grid(1), env_sb.grid(2)
    assert (g1.lo, g1.hi) == (0.0, 1.0)
    # reach = c1*[0,1] + c2*[0,6] + [0,1] = [0, 4.5], padded 1% per side
    assert g2.lo <= 0.0 and g2.hi >= 4.5
    assert abs(g2.lo - (-0.045)) < 1e-12 and abs(g2.hi - 4.545) < 1e-12
    assert env_sb.T == 2 and env_sb.delta == 1.0 and env_sb.memory_final


def test_horizon_one_env_has_no_kernels():
    doc = make_env_doc(np.random.default_rng(1), T=1, grid=11)
    _, env, _ = build_instance(doc)
    assert env.T == 1 and len(env.kernels) == 0 and len(env.grids) == 1
    with pytest.raises(IndexError):
        env.kernel(1)


def test_initial_density_normalized(env_sb):
    pts = env_sb.grid(1).points
    assert abs(np.trapezoid(env_sb.f1, pts) - 1.0) < 1e-12
    cdf = env_sb.f1_cdf
    assert cdf[0] == 0.0 and abs(cdf[-1] - 1.0) < 1e-12


def test_degenerate_configs_raise():
    rng = np.random.default_rng(2)
    bad = make_env_doc(rng, T=2, grid=9)
    bad["environment"]["horizon"] = 0
    with pytest.raises(Exception):  # schema or degeneracy, depending on layer
        build_instance(bad)
    bad2 = make_env_doc(rng, T=2, grid=9)
    bad2["environment"]["discount"] = 0.0
    with pytest.raises(DegenerateError):
        build_environment(parse_scenario(bad2, name="bad2"))
    bad3 = make_env_doc(rng, T=3, grid=9)
    bad3["environment"]["kernels"] = bad3["environment"]["kernels"][:1]
    with pytest.raises(SchemaError):  # caught by the scenario cross-checks
        parse_scenario(bad3, name="bad3")
    bad4 = make_env_doc(rng, T=2, grid=9)
    bad4["environment"]["initial_density"] = {"kind": "poly", "coeffs": [1.0, -4.0]}
    with pytest.raises(DegenerateError):
        build_environment(parse_scenario(bad4, name="bad4"))


def test_narrow_grid_bounds_raise_support_error():
    rng = np.random.default_rng(3)
    doc = make_env_doc(rng, T=2, grid=9)
    doc["environment"]["grid_bounds"] = [{"period": 2, "lo": 0.0, "hi": 0.5}]
    with pytest.raises(SupportError):
        build_environment(parse_scenario(doc, name="narrow"))


# ===================== kernel CDF =====================


def test_kernel_cdf_closed_form(env_sb):
    # theta=0, a=4/3: support shift 2/3, width 1 -> F(7/6) = 0.5
    val = kernel_cdf(env_sb, 1, 7.0 / 6.0, 0.0, 4.0 / 3.0)
    assert abs(val - 0.5) < 1e-12
    assert kernel_cdf(env_sb, 1, 0.5, 0.0, 4.0 / 3.0) == 0.0  # below support
    assert kernel_cdf(env_sb, 1, 3.0, 0.0, 4.0 / 3.0) == 1.0  # above support


def test_affine_kernel_expectations_exact():
    ker = TransitionKernel("affine-uniform", c1=0.5, c2=0.25, w=1.0)
    nxt = np.linspace(-1.0, 4.0, 401)
    g_lin = 2.0 * nxt - 1.0
    theta = np.array([0.0, 0.4, 1.0])
    a = np.array([1.0, 0.5, 2.0])
    got = ker.expect(nxt, g_lin, theta, a)
    mean = 0.5 * theta + 0.25 * a + 0.5
    assert np.max(np.abs(got - (2.0 * mean - 1.0))) < 1e-12


def test_affine_expect_restricted_split():
    ker = TransitionKernel("affine-uniform", c1=0.5, c2=0.0, w=1.0)
    nxt = np.linspace(-1.0, 3.0, 321)
    g = np.ones_like(nxt)
    theta, a = np.array([0.5]), np.array([0.0])
    cut = 0.6  # support is [0.25, 1.25]
    hi_val, hi_mass = ker.expect_restricted(nxt, g, theta, a, lo_cut=cut)
    lo_val, lo_mass = ker.expect_restricted(nxt, g, theta, a, hi_cut=cut)
    assert abs(hi_mass - (1.25 - 0.6)) < 1e-12
    assert abs(lo_mass - (0.6 - 0.25)) < 1e-12
    assert abs((hi_val + lo_val) - 1.0) < 1e-12
    full = ker.expect(nxt, g, theta, a)
    assert abs(full[0] - 1.0) < 1e-12


def test_kd_apply_affine_is_scaled_expectation():
    ker = TransitionKernel("affine-uniform", c1=0.7, c2=0.3, w=0.8)
    nxt = np.linspace(-1.0, 4.0, 201)
    g = np.sin(nxt)
    theta = np.linspace(0.1, 0.9, 5)
    a = np.linspace(0.2, 1.8, 5)
    got = ker.kd_apply(nxt, g, theta, a)
    ref = 0.7 * ker.expect(nxt, g, theta, a)
    assert np.max(np.abs(got - ref)) < 1e-12


def test_tabular_kernel_matches_affine_rows():
    # tabulate the affine-uniform density on a fine lattice; expectations of a
    # linear integrand agree with the closed form up to interpolation error
    c1, c2, w = 0.5, 0.5, 1.0
    prev = np.linspace(0.0, 1.0, 41)
    alloc = np.linspace(0.0, 2.0, 41)
    nxt = np.linspace(0.0, 2.5, 401)
    dens = np.zeros((prev.size, alloc.size, nxt.size))
    for i, th in enumerate(prev):
        for j, av in enumerate(alloc):
            s = c1 * th + c2 * av
            dens[i, j] = np.where((nxt >= s) & (nxt <= s + w), 1.0, 0.0)
    tab = TransitionKernel("tabular", prev_points=prev, alloc_points=alloc,
                           next_points=nxt, density=dens)
    g = 1.5 * nxt + 0.25
    th = prev[::8]
    av = alloc[::8]
    got = tab.expect(nxt, g, th, av)
    ref = 1.5 * (c1 * th + c2 * av + 0.5 * w) + 0.25
    err = np.max(np.abs(got - ref))
    print(f"tabular vs affine expectation err {err:.2e}")
    assert err < 5e-3


# ===================== assumption battery =====================


def test_full_support_bundled_passes(env_sb):
    rep = check_full_support(env_sb)
    assert rep.passed, rep.failures[:3]


def test_full_support_zeroed_tabular_row_fails():
    prev = np.linspace(0.0, 1.0, 3)
    alloc = np.linspace(0.0, 1.0, 3)
    nxt = np.linspace(0.0, 2.0, 5)
    dens = np.ones((3, 3, 5))
    dens[1, 1, 2] = 0.0  # interior hole
    doc = make_env_doc(np.random.default_rng(5), T=2, grid=5)
    doc["environment"]["kernels"] = [{
        "kind": "tabular",
        "prev_points": prev.tolist(), "alloc_points": alloc.tolist(),
        "next_points": nxt.tolist(), "density": dens.tolist()}]
    _, env, _ = build_instance(doc)
    rep = check_full_support(env)
    assert not rep.passed
    assert rep.failures, "failure list must locate the hole"
    print("full-support failures:", rep.failures[:3])


def test_fosd_increasing_allocation_passes(env_sb, alpha_star):
    rep = check_fosd(env_sb, alpha_star)
    assert rep.passed, rep.failures[:3]


def test_fosd_decreasing_allocation_fails(env_sb):
    down = AllocationRule([PolyFn({(1, 0): -2.0}), PolyFn({(1, 0): -2.0})],
                          [(-6.0, 6.0), (-6.0, 6.0)])
    rep = check_fosd(env_sb, down)
    assert not rep.passed
    print("fosd worst violation:", rep.worst)


def test_fosd_constant_alloc_no_state_feedback_exact_zero():
    doc = make_env_doc(np.random.default_rng(7), T=2, grid=21)
    doc["environment"]["kernels"][0]["c1"] = 0.0
    _, env, _ = build_instance(doc)
    const = AllocationRule([constant_fn(1.0), constant_fn(1.0)], env.alloc_ranges)
    rep = check_fosd(env, const)
    assert rep.passed
    assert rep.worst == 0.0  # identical conditional distributions


def test_lipschitz_bundled_passes(env_sb):
    assert check_lipschitz(env_sb).passed


# ===================== utilities =====================


def test_utility_values_and_state_derivative(env_sb):
    th = np.array([0.0, 0.5, 1.0])
    a = np.array([1.0, 2.0, 3.0])
    assert np.allclose(env_sb.u1.u(1, th, a), (1.0 + th) * a)
    assert np.allclose(env_sb.u1.du_dtheta(2, th, a), a)
    assert np.allclose(env_sb.u0.u(1, th, a), th - 0.5 * a**2)
    assert np.allclose(env_sb.u0.du_dtheta(1, th, a), 1.0)


def test_explicit_derivative_coefficients_override():
    spec = UtilitySpec(1, [{(2, 1): 1.0}], dtheta_coeffs=[{(0, 0): 42.0}])
    assert spec.du_dtheta(1, 0.3, 2.0) == 42.0
    auto = UtilitySpec(1, [{(2, 1): 1.0}])
    assert abs(auto.du_dtheta(1, 0.3, 2.0) - 2 * 0.3 * 2.0) < 1e-15
