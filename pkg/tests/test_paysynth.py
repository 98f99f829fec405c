"""Payment synthesis: envelope derivatives, anchored potentials, payment and
posted-price construction, sufficiency audit, revenue equivalence, and
posted-price feasibility."""

import dataclasses

import numpy as np
import pytest

from conftest import build_instance, make_env_doc, random_alloc
from stopmech import (Mechanism, PaymentRules, construct_phi_xi, construct_rho,
                      envelope_gamma, one_shot_check, potentials,
                      regular_set_membership, revenue_equivalence, solve_value,
                      synthesize_mechanism, verify_sufficiency)
from stopmech.mechanism import TabularFn
from stopmech.valuesolver import fixed_horizon_tables

# ===================== envelope derivatives =====================


def test_envelope_tables_match_closed_forms(env_sb, alpha_star):
    # gamma_1(1) = alpha_1; gamma_1(2) = alpha_1 + c1*E[alpha_2] compounds to
    # (14/3) theta + 13/6; gamma_2(2)[m, x] = alpha_2(x; m)
    envl = envelope_gamma(env_sb, alpha_star)
    pts1 = env_sb.grid(1).points
    assert np.allclose(envl.gamma[1][1], (10 / 3) * pts1 + 4 / 3, atol=1e-12)
    assert np.allclose(envl.gamma[1][2], (14 / 3) * pts1 + 13 / 6, atol=1e-12)
    g22 = envl.gamma[2][2]
    assert g22.ndim == 2
    mem, pts2 = env_sb.grid(1).points, env_sb.grid(2).points
    MM, XX = np.meshgrid(mem, pts2, indexing="ij")
    assert np.allclose(g22, XX + 0.5 * MM + 0.5, atol=1e-12)
    # impulse responses: one kernel-derivative application contributes c1
    assert np.allclose(envl.G[1][1], 1.0, atol=0)
    assert np.allclose(envl.G[2][2], 1.0, atol=0)
    assert np.allclose(envl.G[1][2], 0.5, atol=1e-12)


def test_envelope_matches_finite_differences(env_sb, alpha_star, mech_synth,
                                             synth_bundle):
    # under the synthesized (deviation-proof) payments the fixed-horizon
    # interim payoff is the anchored potential, so its central difference
    # across nodes recovers the envelope derivative
    envl = synth_bundle[1].envelope
    for tau in (1, 2):
        tabs = fixed_horizon_tables(env_sb, mech_synth, tau)
        for t in range(1, tau + 1):
            tab = tabs[t - 1]
            pts = env_sb.grid(t).points
            h = pts[1] - pts[0]
            fd = (tab[..., 2:] - tab[..., :-2]) / (2 * h)
            err = np.max(np.abs(fd - envl.gamma[t][tau][..., 1:-1]))
            print(f"t={t} tau={tau}: max |fd - gamma| = {err:.2e}")
            assert err < 1e-4


# ===================== anchored potentials =====================


def test_potentials_match_hand_integrals(env_sb, alpha_star):
    pot = potentials(env_sb, alpha_star, theta_eps=np.array([0.0, 0.0]))
    pts1 = env_sb.grid(1).points
    assert np.allclose(pot.beta_S[0], (5 / 3) * pts1**2 + (4 / 3) * pts1, atol=1e-12)
    assert np.allclose(pot.beta_Sbar[0], (7 / 3) * pts1**2 + (13 / 6) * pts1, atol=1e-12)
    mem, pts2 = env_sb.grid(1).points, env_sb.grid(2).points
    MM, XX = np.meshgrid(mem, pts2, indexing="ij")
    # the period-2 anchor 0.0 sits off-node, so the subtracted offset carries
    # the interpolant's local O(h^2) error
    assert np.max(np.abs(pot.beta_S[1] - (XX**2 / 2 + (0.5 * MM + 0.5) * XX))) < 2e-5
    assert np.array_equal(pot.beta_Sbar[1], pot.beta_S[1])


def test_potentials_vanish_at_interior_anchors(env_sb, alpha_star):
    anchors = np.array([0.3, 0.7])
    pot = potentials(env_sb, alpha_star, theta_eps=anchors)
    pts1 = env_sb.grid(1).points
    assert abs(np.interp(0.3, pts1, pot.beta_S[0])) < 1e-12
    assert abs(np.interp(0.3, pts1, pot.beta_Sbar[0])) < 1e-12
    pts2 = env_sb.grid(2).points
    for row in pot.beta_S[1][::40]:
        assert abs(np.interp(0.7, pts2, row)) < 1e-12
    with pytest.raises(ValueError):
        potentials(env_sb, alpha_star, theta_eps=np.array([0.3]))


def test_bottom_anchor_orders_potentials(pot_synth):
    # with bottom anchors the best-horizon potential dominates node-wise
    for bS, bB in zip(pot_synth.beta_S, pot_synth.beta_Sbar):
        assert np.all(bB >= bS - 1e-12)


# ===================== payment construction =====================


def test_payment_point_values(env_sb, alpha_star):
    pot = potentials(env_sb, alpha_star, theta_eps=np.array([0.0, 0.0]))
    pay = construct_phi_xi(env_sb, alpha_star, pot)
    # hand-integrated values; the continuation expectation of a quadratic
    # carries the interpolant's O(h^2) quadrature error (~4e-5 at 201 nodes)
    assert abs(pay.phi_at(1, np.array([0.0]))[0] - (-95 / 36)) < 1e-4
    assert abs(pay.phi_at(1, np.array([1.0]))[0] - (-991 / 72)) < 1e-4
    th = np.array([0.2, 0.7, 1.4])
    mm = np.array([0.3, 0.9, 0.1])
    a2 = th + 0.5 * mm + 0.5
    assert np.max(np.abs(pay.xi_at(2, th, mm) - (-a2 - th**2 / 2))) < 2e-4
    # final period: no continuing branch, phi aliased to the stop payment
    assert pay.phi[1] is pay.xi[1]
    assert np.array_equal(pay.rho, np.zeros(2))


def test_rho_hits_target_threshold(env_sb, alpha_star):
    pot = potentials(env_sb, alpha_star, theta_eps=np.array([0.0, 0.0]))
    pay = construct_phi_xi(env_sb, alpha_star, pot)
    rho = construct_rho(env_sb, alpha_star, pot, np.array([0.5]), payments=pay)
    # mu_bar_1 = beta_Sbar - beta_S = (2/3) th^2 + (5/6) th, exactly 7/12 at 1/2
    assert abs(rho[0] - 7 / 12) < 1e-9
    assert rho[1] == 0.0
    rho_full = construct_rho(env_sb, alpha_star, pot,
                             np.array([0.5, env_sb.grid(2).hi]), payments=pay)
    assert np.allclose(rho, rho_full, atol=0)
    with pytest.raises(ValueError):
        construct_rho(env_sb, alpha_star, pot, np.array([0.5, 0.5, 0.5]))


def test_margin_equals_potential_gap(env_sb, sol_synth):
    # with zero posted prices the stop margin is the potential difference
    pts1 = env_sb.grid(1).points
    assert np.max(np.abs(sol_synth.mu_bar[0]
                         - ((2 / 3) * pts1**2 + (5 / 6) * pts1))) < 1e-9


def test_strict_literal_coincides_at_unit_discount(env_sb, alpha_star):
    a, _ = synthesize_mechanism(env_sb, alpha_star, eta=np.array([0.5]))
    b, _ = synthesize_mechanism(env_sb, alpha_star, eta=np.array([0.5]),
                                strict_literal=True)
    pts1 = env_sb.grid(1).points
    assert np.array_equal(a.pay.phi_at(1, pts1), b.pay.phi_at(1, pts1))
    assert np.array_equal(a.pay.xi_at(1, pts1), b.pay.xi_at(1, pts1))
    assert np.array_equal(a.pay.rho, b.pay.rho)


# ===================== anchor covariance =====================


def test_anchor_shift_moves_payments_by_constants(env_sb, alpha_star):
    # shared final-period anchor: each period's payment rules move by exact
    # constants and the posted price absorbs their difference
    b2lo = env_sb.grid(2).lo
    envl = envelope_gamma(env_sb, alpha_star)
    pot_a = potentials(env_sb, alpha_star, np.array([0.0, b2lo]), envelope=envl)
    pot_b = potentials(env_sb, alpha_star, np.array([0.5, b2lo]), envelope=envl)
    pay_a = construct_phi_xi(env_sb, alpha_star, pot_a)
    pay_b = construct_phi_xi(env_sb, alpha_star, pot_b)
    pts1 = env_sb.grid(1).points
    d_phi = pay_a.phi_at(1, pts1) - pay_b.phi_at(1, pts1)
    d_xi = pay_a.xi_at(1, pts1) - pay_b.xi_at(1, pts1)
    assert np.max(np.abs(d_phi - 5 / 3)) < 1e-12   # beta_Sbar_1 at 1/2
    assert np.max(np.abs(d_xi - 13 / 12)) < 1e-12  # beta_S_1 at 1/2
    rho_a = construct_rho(env_sb, alpha_star, pot_a, np.array([0.5]), payments=pay_a)
    rho_b = construct_rho(env_sb, alpha_star, pot_b, np.array([0.5]), payments=pay_b)
    assert abs((rho_a - rho_b)[0] - 7 / 12) < 1e-12
    assert (rho_a - rho_b)[1] == 0.0


def test_deviation_gaps_invariant_to_anchors():
    # plant the same non-truthful wiggle on two anchor variants: every
    # deviation gap must agree exactly, anchors only re-zero the potentials
    doc = make_env_doc(np.random.default_rng(53), T=2, grid=41)
    _, env, _ = build_instance(doc)
    alloc = random_alloc(np.random.default_rng(54), env)
    eta = np.array([0.5])
    mechs = []
    for anchors in (None, np.array([0.3, 0.7])):
        mech, _ = synthesize_mechanism(env, alloc, theta_eps=anchors, eta=eta)
        pts1 = env.grid(1).points
        wiggle = 0.3 * np.sin(5.0 * pts1)
        phi1 = TabularFn(pts1, mech.pay.phi_at(1, pts1) + wiggle)
        pay = PaymentRules([phi1, mech.pay.phi[1]], mech.pay.xi, mech.pay.rho)
        mechs.append(Mechanism(alloc, pay))
    r_a = one_shot_check(env, mechs[0])
    r_b = one_shot_check(env, mechs[1])
    gaps_a = {(e.period, e.branch): e.gap for e in r_a.entries}
    gaps_b = {(e.period, e.branch): e.gap for e in r_b.entries}
    assert r_a.worst_gap > 1e-3  # the wiggle does plant real violations
    assert gaps_a.keys() == gaps_b.keys()
    for key, g in gaps_a.items():
        assert abs(g - gaps_b[key]) < 1e-12


# ===================== revenue equivalence =====================


def test_revenue_equivalence_seller_buyer(env_sb, alpha_star):
    b2lo = env_sb.grid(2).lo
    rep = revenue_equivalence(env_sb, alpha_star,
                              np.array([0.0, b2lo]), np.array([0.5, b2lo]),
                              np.array([0.5]))
    assert rep.passed
    assert rep.state_deviation < 1e-9
    assert abs(rep.C_tau(1) - 10 / 3) < 1e-9
    assert abs(rep.C_tau(2) - 5 / 3) < 1e-9
    assert abs(rep.constants[(2, 2)]) < 1e-12
    assert abs(rep.C_rho[0] - 7 / 12) < 1e-9
    assert rep.C_rho[-1] == 0.0
    d = rep.to_dict()
    assert d["passed"] and "t=1,tau=2" in d["constants"]
    print(f"stream-difference constants {rep.constants}, "
          f"state deviation {rep.state_deviation:.2e}")


def test_revenue_equivalence_same_anchors_is_zero(env_sb, alpha_star):
    anchors = np.array([0.25, 0.75])
    rep = revenue_equivalence(env_sb, alpha_star, anchors, anchors, np.array([0.4]))
    assert rep.state_deviation < 1e-12
    assert all(abs(c) < 1e-12 for c in rep.constants.values())
    assert np.allclose(rep.C_rho, 0.0, atol=1e-12)


def test_revenue_equivalence_random_memoryless_instances():
    rng = np.random.default_rng(59)
    for k in range(4):
        doc = make_env_doc(rng, T=3, grid=41)
        _, env, _ = build_instance(doc)
        alloc = random_alloc(rng, env)
        anch_a = np.array([env.grid(t).lo for t in range(1, 4)])
        anch_b = anch_a + rng.uniform(0.1, 0.4, size=3)
        eta = np.array([rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)])
        rep = revenue_equivalence(env, alloc, anch_a, anch_b, eta)
        print(f"instance {k}: deviation {rep.state_deviation:.2e}")
        assert rep.passed
        assert rep.state_deviation < 1e-6
        assert rep.C_rho[-1] == 0.0


# ===================== sufficiency audit =====================


def test_sufficiency_passes_on_synthesized(env_sb, alpha_star, pot_synth):
    rep = verify_sufficiency(env_sb, alpha_star, pot_synth)
    assert rep.passed
    # diagonal pairs make zero slack the attainable best
    assert -1e-9 <= rep.worst_slack <= 0.0
    assert set(rep.families) == {"stop", "continue", "order"}
    assert rep.families["order"]["final_period_equality_gap"] == 0.0
    d = rep.to_dict()
    assert d["passed"] and d["tolerance"] == -1e-6


def test_sufficiency_locates_planted_spike(env_sb, alpha_star, pot_synth):
    pay = construct_phi_xi(env_sb, alpha_star, pot_synth)
    k = 120
    spiked = [pot_synth.beta_S[0].copy(), pot_synth.beta_S[1]]
    spiked[0][k] += 0.5
    pot_bad = dataclasses.replace(pot_synth, beta_S=spiked)
    rep = verify_sufficiency(env_sb, alpha_star, pot_bad, payments=pay)
    assert not rep.passed
    worst = rep.families["stop"]
    assert worst["period"] == 1
    node = env_sb.grid(1).points[k]
    assert abs(worst["theta_hat"] - node) < 1e-12
    assert -0.51 < worst["worst_slack"] < -0.49


# ===================== posted-price feasibility =====================


def test_membership_round_trip(env_sb, alpha_star, pot_synth):
    pay = construct_phi_xi(env_sb, alpha_star, pot_synth)
    r = construct_rho(env_sb, alpha_star, pot_synth, np.array([0.5]), payments=pay)
    rep = regular_set_membership(env_sb, alpha_star, r, pot=pot_synth)
    assert rep.member and rep.verdict == "MEMBER"
    cell = env_sb.grid(1).points[1] - env_sb.grid(1).points[0]
    assert abs(rep.eta[0] - 0.5) <= cell
    assert rep.eta[-1] == env_sb.grid(2).hi
    assert rep.first_infeasible is None
    row = rep.details[0]
    assert row["period"] == 1 and row["mu_bar_min"] <= row["r"] <= row["mu_bar_max"]


def test_membership_rejects_out_of_range_price(env_sb, alpha_star, pot_synth):
    pay = construct_phi_xi(env_sb, alpha_star, pot_synth)
    r = construct_rho(env_sb, alpha_star, pot_synth, np.array([0.5]), payments=pay)
    sol = solve_value(env_sb, Mechanism(alpha_star, PaymentRules(pay.phi, pay.xi, r)))
    r_bad = r.copy()
    r_bad[0] = float(sol.mu_bar[0].max()) + 0.1
    rep = regular_set_membership(env_sb, alpha_star, r_bad, pot=pot_synth)
    assert not rep.member and rep.verdict == "NOT-MEMBER"
    assert rep.first_infeasible == 1
    assert rep.eta is None
    assert rep.to_dict()["verdict"] == "NOT-MEMBER"


def test_membership_accepts_zero_prices(env_sb, alpha_star, pot_synth):
    rep = regular_set_membership(env_sb, alpha_star, np.zeros(2), pot=pot_synth)
    assert rep.member
    assert abs(rep.eta[0]) < 1e-6


def test_membership_input_guards(env_sb, alpha_star, pot_synth):
    with pytest.raises(ValueError):
        regular_set_membership(env_sb, alpha_star, np.zeros(3), pot=pot_synth)
    with pytest.raises(ValueError):
        regular_set_membership(env_sb, alpha_star, np.array([0.1, 0.2]),
                               pot=pot_synth)
