"""Shared fixtures: the bundled seller-buyer scenario at several grids, its
displayed and synthesized mechanisms, and deterministic random-instance
generators used by the property batteries."""

import json
import os

import numpy as np
import pytest

import stopmech
from stopmech import (build_environment, build_mechanism, load_scenario,
                      parse_scenario, solve_value, synthesize_mechanism)

SCENARIO_PATH = os.path.join(os.path.dirname(stopmech.__file__),
                             "scenarios", "seller_buyer_T2.json")


# ===================== bundled scenario =====================


@pytest.fixture(scope="session")
def scenario_path():
    return SCENARIO_PATH


@pytest.fixture(scope="session")
def cfg_sb():
    return load_scenario(SCENARIO_PATH)


@pytest.fixture(scope="session")
def env_sb(cfg_sb):
    """Seller-buyer environment at the scenario's 201-node grid."""
    return build_environment(cfg_sb)


@pytest.fixture(scope="session")
def env_sb_coarse():
    """Same environment at 81 nodes for cheaper structural tests."""
    doc = json.load(open(SCENARIO_PATH))
    doc["solver"]["grid"] = 81
    return build_environment(parse_scenario(doc, name="sb81"))


@pytest.fixture(scope="session")
def mech_star(cfg_sb, env_sb):
    """The scenario's displayed mechanism (its printed stop payment is not
    incentive compatible; tests that need an IC mechanism use mech_synth)."""
    return build_mechanism(cfg_sb, env_sb)


@pytest.fixture(scope="session")
def alpha_star(mech_star):
    return mech_star.alloc


@pytest.fixture(scope="session")
def sol_star(env_sb, mech_star):
    return solve_value(env_sb, mech_star)


@pytest.fixture(scope="session")
def synth_bundle(env_sb, alpha_star):
    """(mechanism, potentials) synthesized from the displayed allocation rule
    with bottom anchors and eta = (0,)."""
    return synthesize_mechanism(env_sb, alpha_star, eta=np.array([0.0]))


@pytest.fixture(scope="session")
def mech_synth(synth_bundle):
    return synth_bundle[0]


@pytest.fixture(scope="session")
def pot_synth(synth_bundle):
    return synth_bundle[1]


@pytest.fixture(scope="session")
def sol_synth(env_sb, mech_synth):
    return solve_value(env_sb, mech_synth)


# ===================== random instance generators =====================


def poly_block(**coeffs):
    """{"kind": "poly", "coeffs": {...}} with "i,j" exponent keys."""
    return {"kind": "poly", "coeffs": {k: float(v) for k, v in coeffs.items()}}


def lin(intercept, slope):
    return poly_block(**{"0,0": intercept, "1,0": slope})


def make_env_doc(rng, T=None, grid=41, amax=2.0, monotone=True):
    """Scenario document for a random affine-uniform environment.

    monotone=True keeps the instance inside the hypotheses of the structural
    lemmas: FOSD kernel (c1, c2 >= 0), du1/dtheta >= 0.
    """
    T = int(T if T is not None else rng.integers(1, 4))
    c1 = round(float(rng.uniform(0.2, 0.8)), 6)
    c2 = round(float(rng.uniform(0.05, 0.6)), 6)
    w = round(float(rng.uniform(0.6, 1.6)), 6)
    u1_slope = round(float(rng.uniform(0.2, 1.0)), 6)
    if not monotone:
        u1_slope = -u1_slope
    return {
        "name": "rand",
        "environment": {
            "horizon": T,
            "discount": round(float(rng.uniform(0.85, 1.0)), 6),
            "state_bounds": [0.0, 1.0],
            "allocation_ranges": [[0.0, amax] for _ in range(T)],
            "kernels": [{"kind": "affine-uniform", "c1": c1, "c2": c2, "w": w}
                        for _ in range(T - 1)],
            "u0": {"1,0": 1.0, "0,2": round(float(-rng.uniform(0.2, 0.8)), 6)},
            "u1": {"0,1": round(float(rng.uniform(0.5, 1.5)), 6),
                   "1,1": u1_slope},
            "initial_density": {"kind": "uniform"},
            "memory_final": False,
        },
        "solver": {"grid": int(grid), "tie_tol": 1e-9, "ic_tolerance": 1e-3},
        "simulation": {"paths": 1000, "seed": int(rng.integers(1, 2**31 - 1))},
        "output": {"directory": "out", "format": "csv"},
    }


def doc_reach(doc):
    """Largest state any period's grid can reach under a scenario document
    (kernel supports compounded from the initial bounds, plus grid padding)."""
    blk = doc["environment"]
    hi = float(blk["state_bounds"][1])
    worst = hi
    for ker, rng_a in zip(blk["kernels"], blk["allocation_ranges"]):
        hi = ker["c1"] * hi + ker["c2"] * rng_a[1] + ker["w"]
        worst = max(worst, hi)
    return 1.02 * worst


def make_mech_block(rng, T, amax=2.0, monotone=True, reach=1.0):
    """Random polynomial mechanism block (not incentive compatible in general).

    reach: largest state value any period's grid can attain; the affine
    allocation is drawn so intercept + slope*reach stays inside [0, amax].
    """
    alpha, phi, xi = [], [], []
    for _ in range(T):
        # floor > 0 keeps the rule inside range on the grids' small low-side padding
        intercept = round(float(rng.uniform(0.05 * amax, 0.2 * amax)), 6)
        top = (amax - intercept) / max(reach, 1.0)
        slope = round(float(rng.uniform(0.1 * top, 0.8 * top)), 6)
        if not monotone:
            slope = -slope
        alpha.append(lin(intercept, slope))
        phi.append(lin(round(float(rng.uniform(-1.0, 1.0)), 6),
                       round(float(rng.uniform(-0.5, 0.5)), 6)))
        xi.append(lin(round(float(rng.uniform(-1.0, 1.0)), 6),
                      round(float(rng.uniform(-0.5, 0.5)), 6)))
    rho = [round(float(rng.uniform(-0.5, 0.5)), 6) for _ in range(T - 1)] + [0.0]
    return {"alpha": alpha, "phi": phi, "xi": xi, "rho": rho}


def build_instance(doc):
    """(cfg, env, mech-or-None) from a scenario document."""
    cfg = parse_scenario(doc, name=doc.get("name", "rand"))
    env = build_environment(cfg)
    mech = build_mechanism(cfg, env) if "mechanism" in doc and doc["mechanism"] else None
    return cfg, env, mech


def random_alloc(rng, env, amax=2.0):
    """Random monotone affine allocation rule on env (no payments)."""
    from stopmech.mechanism import AllocationRule, PolyFn
    fns = []
    for _ in range(env.T):
        fns.append(PolyFn({(0, 0): float(rng.uniform(0.0, amax * 0.3)),
                           (1, 0): float(rng.uniform(0.1, amax * 0.8))}))
    return AllocationRule(fns, env.alloc_ranges)
