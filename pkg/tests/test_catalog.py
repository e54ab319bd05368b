"""Family catalog: branch assembly, parameter constraints, presets."""

import json
import math

import numpy as np
import pytest
import sympy as sp

from pss.catalog import (
    Branch,
    CatalogError,
    ConstraintViolation,
    FamilyParams,
    MissingExpression,
    PRESETS,
    build_family,
    evaluate_F,
    evaluate_G,
    family_from_dict,
    novikov_preset,
    sine_gordon_preset,
    t22_demo_preset,
    validate_params,
)
from pss.jets import JetPoint


def jp(z0=0.0, z1=0.0, z2=0.0, z3=0.0):
    return JetPoint(z=(z0, z1, z2, z3), w=(0.0,), v=(0.0,))


# ----------------------------------------------------------------------
# validate_params


def test_t24_degenerate_parameters_violation():
    p = FamilyParams(branch=Branch.T24, lam=0.0, eta2=5.0, C=0.0)
    v = validate_params(p)
    assert any("(lam*eta2)^2 + C^2 != 0" in s for s in v)


def test_t22_valid_params_empty_list():
    assert validate_params(FamilyParams(branch=Branch.T22, eta2=1.0)) == []


def test_t25ii_tau_positive_violation():
    p = FamilyParams(branch=Branch.T25II, tau=-1.0, m=1.0, eta2=1.0)
    v = validate_params(p)
    assert any("tau > 0" in s for s in v)


def test_t22_eta2_zero_violation():
    v = validate_params(FamilyParams(branch=Branch.T22, eta2=0.0))
    assert any("eta2 != 0" in s for s in v)


def test_t23_inconsistent_eta3_is_a_constraint_error():
    p = FamilyParams(branch=Branch.T23, lam=1.0, eta2=1.0, mu2=0.0, mu3=0.0, eta3=0.5)
    v = validate_params(p)
    assert any("eta2^2 - eta3^2" in s for s in v)
    with pytest.raises(ConstraintViolation):
        build_family(p, f="s")


def test_t23_eta3_solved_with_root_flag():
    for root in (1, -1):
        p = FamilyParams(branch=Branch.T23, lam=1.0, eta2=1.0, mu2=0.3, mu3=0.4, root=root)
        fam = build_family(p, f="s")
        e2, e3, m2, m3 = fam.params.eta2, fam.params.eta3, fam.params.mu2, fam.params.mu3
        quad = e2**2 - e3**2 - (m2 * e3 - m3 * e2) ** 2
        assert abs(quad) < 1e-12
        assert fam.params.gamma != 0
    pp = FamilyParams(branch=Branch.T23, lam=1.0, eta2=1.0, mu2=0.3, mu3=0.4, root=1)
    pm = FamilyParams(branch=Branch.T23, lam=1.0, eta2=1.0, mu2=0.3, mu3=0.4, root=-1)
    assert build_family(pp, f="s").params.eta3 != build_family(pm, f="s").params.eta3


def test_missing_expression():
    with pytest.raises(MissingExpression):
        build_family(FamilyParams(branch=Branch.T22, eta2=1.0), f="s")  # phi12 missing


# ----------------------------------------------------------------------
# build_family / evaluate_G examples


def test_t22_demo_g_is_z2_plus_z1():
    fam = t22_demo_preset()
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = rng.uniform(-2, 2, 4)
        got = evaluate_G(fam, jp(*z))
        assert got == pytest.approx(z[2] + z[1], rel=0, abs=1e-14)
    # the spec's point: (z1, z2) = (2, 3) -> 5
    assert evaluate_G(fam, jp(0.0, 2.0, 3.0)) == pytest.approx(5.0)


def test_sine_gordon_f12_at_pi_over_2():
    fam = sine_gordon_preset(eta=1.0)
    assert fam.fij_value(1, 2, jp(math.pi / 2)) == pytest.approx(1.0)
    assert fam.fij_value(1, 1, jp(0.3)) == 0.0
    assert fam.fij_value(2, 1, jp(0.3)) == 1.0
    assert fam.fij_value(3, 1, JetPoint(z=(0.3, 0.7, 0.0), w=(0.0,), v=(0.0,))) == 0.7


def test_novikov_g_hand_value():
    fam = novikov_preset()
    # (z0, z1, z2, z3) = (1, 1, 0, 0): G = 1 - 3 - 2 + 0 - 0 = -4
    assert evaluate_G(fam, jp(1.0, 1.0, 0.0, 0.0)) == pytest.approx(-4.0, abs=1e-14)


def test_g_vanishes_at_zero_jet_when_phi12_does():
    for name in ("novikov", "t22-demo", "t23-demo"):
        fam = PRESETS[name]()
        assert evaluate_G(fam, jp()) == pytest.approx(0.0, abs=1e-15)


def test_novikov_matches_symbolic_expansion():
    """Re-derivation oracle: expand the T24 right-hand side symbolically with
    lam=1, mu2=0, eta2=1, C=0, f=s, phi12=z0(z1-z0)^2 and compare on 200 jets."""
    z0, z1, z2 = sp.symbols("z0 z1 z2")
    s = sp.Symbol("s")
    phi12 = z0 * (z1 - z0) ** 2
    f = z0 - z2  # f(s) = s
    fprime = 1
    G_sym = (
        z1 * sp.diff(phi12, z0)
        + z2 * sp.diff(phi12, z1)
        - z0**2 * z1 * fprime
        + phi12
        - (2 * z0 * z1 + z0**2 + 0) * f
    ) / fprime
    target = z1**3 - 3 * z0 * z1**2 - 2 * z0**2 * z1 + 4 * z0 * z1 * z2 - z0**2 * z2
    assert sp.simplify(sp.expand(G_sym - target)) == 0

    fam = novikov_preset()
    tgt = sp.lambdify((z0, z1, z2), target)
    rng = np.random.default_rng(123)
    for _ in range(200):
        z = rng.uniform(-2, 2, 4)
        got = evaluate_G(fam, jp(*z))
        want = tgt(z[0], z[1], z[2])
        assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_novikov_validates_and_f12_example():
    fam = novikov_preset()
    assert validate_params(fam.params) == []
    # f12 = -lam z0^2 f + phi12 at (z0=1, z1=1, z2=0): f = 1, phi12 = 0 -> -1
    assert fam.fij_value(1, 2, jp(1.0, 1.0, 0.0)) == pytest.approx(-1.0)


def test_evaluate_F_is_lam_z0sq_z3_plus_G():
    fam = novikov_preset()
    p = jp(0.7, -0.3, 0.2, 0.9)
    assert evaluate_F(fam, p) == pytest.approx(0.7**2 * 0.9 + evaluate_G(fam, p), abs=1e-14)


def test_evaluate_G_rejects_sine_gordon():
    with pytest.raises(CatalogError):
        evaluate_G(sine_gordon_preset(), jp(1.0))


def test_fprime_zero_is_an_error():
    fam = build_family(FamilyParams(branch=Branch.T22, eta2=1.0), f="s^2", phi12="z1")
    with pytest.raises(CatalogError):
        evaluate_G(fam, jp(0.5, 1.0, 0.5))  # s = 0 -> f' = 2s = 0


# ----------------------------------------------------------------------
# Structural invariants of the coefficient functions


@pytest.mark.parametrize("name", sorted(set(PRESETS) - {"sine-gordon"}))
def test_fi1_structure_invariants(name):
    """f_i1 is independent of z1 and a function of z0 - z2 only; the
    combination f_i2 + lam z0^2 f_i1 never depends on z2; f_p1 - mu_p f11
    is the constant eta_p."""
    fam = PRESETS[name]()
    p = fam.params
    rng = np.random.default_rng(99)
    from pss.verifier import sample_envs

    env = sample_envs(fam, 200, rng)
    from pss import dual

    for i in (1, 2, 3):
        lvl, seeded = dual.seed(env, ("z0", "z1", "z2"))
        r = fam.fij(i, 1)(seeded)
        _, grads = dual.value_grad(r, lvl, 3)
        assert np.max(np.abs(grads[1])) < 1e-13  # no z1 dependence
        assert np.max(np.abs(grads[0] + grads[2])) < 1e-12  # function of z0 - z2

    f11 = fam.fij(1, 1)(env)
    assert np.max(np.abs(fam.fij(2, 1)(env) - p.mu2 * f11 - p.eta2)) < 1e-12
    assert np.max(np.abs(fam.fij(3, 1)(env) - p.mu3 * f11 - p.eta3)) < 1e-12

    env_b = dict(env)
    env_b["z2"] = env["z2"] + 0.5
    for i in (1, 2, 3):
        va = fam.fij(i, 2)(env) + p.lam * env["z0"] ** 2 * fam.fij(i, 1)(env)
        vb = fam.fij(i, 2)(env_b) + p.lam * env_b["z0"] ** 2 * fam.fij(i, 1)(env_b)
        assert np.max(np.abs(va - vb)) < 1e-11 * max(1.0, float(np.max(np.abs(va))))


@pytest.mark.parametrize("name", sorted(set(PRESETS) - {"sine-gordon"}))
def test_condition_42_bounded_away_from_zero_on_samples(name):
    fam = PRESETS[name]()
    rng = np.random.default_rng(5)
    from pss.verifier import sample_envs

    env = sample_envs(fam, 500, rng)
    p12 = fam.phi12_fn(env)
    p22 = fam.phi22_fn(env)
    w = (fam.params.mu2 * p12 - p22) * fam.fij(1, 1)(env) + fam.params.eta2 * p12
    assert np.min(np.abs(w)) > 1e-9


# ----------------------------------------------------------------------
# Serialization


def test_family_spec_roundtrip(tmp_path):
    fam = novikov_preset()
    doc = fam.to_dict()
    path = tmp_path / "novikov.json"
    path.write_text(json.dumps(doc))
    from pss.catalog import load_family

    fam2 = load_family(path)
    assert fam2.params.branch == Branch.T24
    p = jp(0.4, -0.2, 0.8, 0.1)
    assert evaluate_G(fam2, p) == pytest.approx(evaluate_G(fam, p), abs=1e-15)


def test_family_spec_unknown_keys_rejected():
    with pytest.raises(CatalogError):
        family_from_dict({"branch": "T24", "params": {}, "frobnicate": 1})
    with pytest.raises(CatalogError):
        family_from_dict({"branch": "T24", "params": {"lambda": 1.0}})


def test_sign_flip_changes_eta3_sign_t22():
    pp = build_family(FamilyParams(branch=Branch.T22, mu2=0.5, eta2=1.0, sign=1), f="s", phi12="z1")
    pm = build_family(FamilyParams(branch=Branch.T22, mu2=0.5, eta2=1.0, sign=-1), f="s", phi12="z1")
    assert pp.params.mu3 == -pm.params.mu3
    assert pp.params.eta3 == -pm.params.eta3


def test_t25i_m1_and_eta3_are_derived():
    fam = PRESETS["t25i-demo"]()
    p = fam.params
    k = math.sqrt(1 + p.mu2**2)
    assert p.mu3 == pytest.approx(p.sign * k)
    assert p.eta3 == pytest.approx(p.sign * (p.theta + p.m * p.mu2 * p.eta2) / (p.m * k))
    assert p.m1 == pytest.approx(2 * p.n / p.m - 1 / p.theta + (p.eta2**2 - p.eta3**2) / p.theta)


def test_t25ii_mu3_quadratic_and_m2():
    fam = PRESETS["t25ii-demo"]()
    p = fam.params
    assert p.mu3**2 == pytest.approx(1 + p.mu2**2 - (p.tau / p.m) ** 2)
    assert p.eta3 == pytest.approx(p.eta2 * (p.mu2 * p.mu3 - p.sign * p.tau / p.m) / (1 + p.mu2**2))
    X = p.eta2 * (p.mu3 + p.sign * p.tau * p.mu2 / p.m) / (1 + p.mu2**2)
    assert p.m2 == pytest.approx(p.n / p.m - p.sign * X / p.tau)


def test_t25ii_requires_real_mu3():
    p = FamilyParams(branch=Branch.T25II, lam=1.0, tau=3.0, m=1.0, eta2=1.0)
    v = validate_params(p)
    assert any("no real root" in s for s in v)


def test_onshell_dt_of_higher_jet_against_symbolic_flux():
    """D_t(z0*z3) on-shell needs z_{3,t} = v1 - D_x F; cross-check the nested
    forward-mode D_x F against a fully symbolic expansion of the Novikov flux."""
    import sympy as sp
    from pss.jets import total_derivative_t_onshell
    from pss.expr import parse_expression

    fam = novikov_preset()
    zs = sp.symbols("z0 z1 z2 z3 z4")
    G = zs[1] ** 3 - 3 * zs[0] * zs[1] ** 2 - 2 * zs[0] ** 2 * zs[1] \
        + 4 * zs[0] * zs[1] * zs[2] - zs[0] ** 2 * zs[2]
    F = zs[0] ** 2 * zs[3] + G
    DxF = sum(sp.diff(F, zs[i]) * zs[i + 1] for i in range(4))
    dxf = sp.lambdify(zs, DxF)

    h = parse_expression("z0*z3", ["z0", "z3"])
    rng = np.random.default_rng(21)
    for _ in range(50):
        z = rng.uniform(-1, 1, 5)
        w1, v1 = rng.uniform(-1, 1, 2)
        p = JetPoint(z=tuple(z), w=(w1,), v=(v1,))
        got = total_derivative_t_onshell(h, p, fam.F_fn)
        z3t = v1 - dxf(*z)
        want = z[3] * w1 + z[0] * z3t
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))
