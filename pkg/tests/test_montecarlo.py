"""Exact piecewise-linear sampling, simulation ledgers, and agreement of the
Monte Carlo statistics with the quadrature values."""

import numpy as np
import pytest

import stopmech.gridtools as gt
from conftest import build_instance, make_env_doc
from stopmech import (mean_first_passage, monte_carlo, principal_exante,
                      sample_pl_density, sample_trajectory)

# ===================== density sampling =====================


def test_pl_sampler_matches_closed_form_cdf():
    # triangular density f(x) = 2x on [0, 1]: CDF is x^2
    pts = np.linspace(0.0, 1.0, 41)
    draws = sample_pl_density(pts, 2.0 * pts, np.random.default_rng(71).random(100_000))
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    xs = np.sort(draws)
    emp = np.arange(1, xs.size + 1) / xs.size
    ks = np.max(np.abs(emp - xs**2))
    print(f"KS distance {ks:.4f}")
    assert ks < 0.01


def test_pl_sampler_uniform_density():
    pts = np.linspace(0.0, 1.0, 11)
    u = np.random.default_rng(73).random(100_000)
    draws = sample_pl_density(pts, np.ones(11), u)
    # inverse-CDF of the uniform is the identity: draws equal the variates
    assert np.max(np.abs(draws - u)) < 1e-12


# ===================== statistics vs quadrature =====================


def test_mc_agrees_with_quadrature_on_bundled(env_sb, mech_synth, sol_synth):
    eta = np.array([0.0])
    stats = monte_carlo(env_sb, mech_synth, eta, paths=100_000, seed=811)
    pts1 = env_sb.grid(1).points
    agent_q = float(gt.product_integral(pts1, env_sb.f1, sol_synth.V[0]))
    principal_q = principal_exante(env_sb, mech_synth, eta)
    tau_q = mean_first_passage(env_sb, mech_synth, eta)
    for label, mean, err, target in [
            ("agent", stats.agent_mean, stats.agent_stderr, agent_q),
            ("principal", stats.principal_mean, stats.principal_stderr, principal_q),
            ("tau", stats.tau_mean, stats.tau_stderr, tau_q)]:
        z = (mean - target) / err if err > 0 else 0.0
        print(f"{label}: mc {mean:.5f} quad {target:.5f} z={z:+.2f}")
        assert abs(mean - target) <= 3.0 * err + 1e-9


def test_degenerate_kernel_stopping_time():
    # near-point-mass kernel: the chain is effectively deterministic and the
    # empirical stopping time must match the survival computation tightly
    doc = make_env_doc(np.random.default_rng(79), T=2, grid=81)
    doc["environment"]["kernels"] = [
        {"kind": "affine-uniform", "c1": 0.5, "c2": 0.0, "w": 1e-6}]
    _, env, _ = build_instance(doc)
    from stopmech.mechanism import AllocationRule, PaymentRules, Mechanism, constant_fn
    mech = Mechanism(AllocationRule([constant_fn(1.0)] * 2, env.alloc_ranges),
                     PaymentRules([constant_fn(0.0)] * 2, [constant_fn(0.0)] * 2,
                                  np.zeros(2)))
    eta = np.array([env.grid(1).lo])  # nobody exits early
    exact = mean_first_passage(env, mech, eta)
    stats = monte_carlo(env, mech, eta, paths=100_000, seed=83)
    assert abs(exact - 2.0) < 1e-12
    assert abs(stats.tau_mean - exact) < 0.001
    # an interior threshold still agrees to sampling error
    eta2 = np.array([0.3])
    exact2 = mean_first_passage(env, mech, eta2)
    stats2 = monte_carlo(env, mech, eta2, paths=100_000, seed=89)
    print(f"interior threshold: exact {exact2:.5f} mc {stats2.tau_mean:.5f}")
    assert abs(stats2.tau_mean - exact2) <= 4.0 * stats2.tau_stderr


def test_always_stop_immediately_matches_stop_table(env_sb, mech_synth):
    top = env_sb.grid(1).hi
    stats = monte_carlo(env_sb, mech_synth, np.array([top]), paths=50_000, seed=97)
    assert stats.tau_mean == 1.0 and stats.tau_stderr == 0.0
    pts1 = env_sb.grid(1).points
    a = mech_synth.alloc(1, pts1)
    j_stop = env_sb.delta * (env_sb.u1.u(1, pts1, a)
                             + mech_synth.pay.xi_at(1, pts1)) + mech_synth.pay.rho[0]
    agent_q = float(gt.product_integral(pts1, env_sb.f1, j_stop))
    assert abs(stats.agent_mean - agent_q) <= 3.0 * stats.agent_stderr


# ===================== determinism =====================


def test_fixed_seed_statistics_are_bit_identical(env_sb, mech_synth):
    a = monte_carlo(env_sb, mech_synth, np.array([0.25]), paths=1, seed=5)
    b = monte_carlo(env_sb, mech_synth, np.array([0.25]), paths=1, seed=5)
    assert a.to_dict() == b.to_dict()
    c = monte_carlo(env_sb, mech_synth, np.array([0.25]), paths=64, seed=5)
    d = monte_carlo(env_sb, mech_synth, np.array([0.25]), paths=64, seed=5)
    assert c.to_dict() == d.to_dict()
    assert monte_carlo(env_sb, mech_synth, np.array([0.25]), paths=64,
                       seed=6).to_dict() != c.to_dict()
    assert c.to_json() == d.to_json()


def test_monte_carlo_input_guards(env_sb, mech_synth):
    with pytest.raises(ValueError):
        monte_carlo(env_sb, mech_synth, np.array([0.25]), paths=0, seed=1)
    with pytest.raises(ValueError):
        monte_carlo(env_sb, mech_synth, np.array([0.25, 0.5, 0.75]), paths=5, seed=1)


# ===================== single trajectories =====================


def test_trajectory_ledger_identities(env_sb, mech_star):
    traj = sample_trajectory(env_sb, mech_star, None, np.array([0.4]), seed=202)
    tau = traj.tau
    assert tau == len(traj.states) == len(traj.payments)
    assert traj.rho_received == mech_star.pay.rho[tau - 1]
    assert traj.reports == traj.states  # truthful inside the grid span
    agent = principal = 0.0
    d = env_sb.delta
    for t in range(1, tau + 1):
        th, a, pay = traj.states[t - 1], traj.allocations[t - 1], traj.payments[t - 1]
        mm = traj.reports[t - 2] if (t == env_sb.T and t >= 2) else None
        assert abs(a - float(mech_star.alloc(t, traj.reports[t - 1], mm))) < 1e-12
        agent += d ** t * (env_sb.u1.u(t, th, a) + pay)
        principal += d ** t * (env_sb.u0.u(t, th, a) - pay)
    agent += traj.rho_received
    principal -= traj.rho_received
    assert abs(agent - traj.agent_payoff) < 1e-12
    assert abs(principal - traj.principal_payoff) < 1e-12
    # states stay inside each period's grid span
    for t, th in enumerate(traj.states, start=1):
        g = env_sb.grid(t)
        assert g.lo - 1e-12 <= th <= g.hi + 1e-12


def test_trajectory_streams_reproducible_and_indexed(env_sb, mech_star):
    a = sample_trajectory(env_sb, mech_star, None, np.array([0.4]), seed=9, index=3)
    b = sample_trajectory(env_sb, mech_star, None, np.array([0.4]), seed=9, index=3)
    assert a.to_dict() == b.to_dict()
    c = sample_trajectory(env_sb, mech_star, None, np.array([0.4]), seed=9, index=4)
    assert c.states[0] != a.states[0]


def test_trajectory_always_stop_formula(env_sb, mech_synth):
    top = env_sb.grid(1).hi
    traj = sample_trajectory(env_sb, mech_synth, None, np.array([top]), seed=41)
    assert traj.tau == 1
    th = traj.states[0]
    a = float(mech_synth.alloc(1, th))
    want = env_sb.delta * (env_sb.u1.u(1, th, a)
                           + float(mech_synth.pay.xi_at(1, th))) + mech_synth.pay.rho[0]
    assert abs(traj.agent_payoff - want) < 1e-12
