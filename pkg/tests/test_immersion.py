"""Universal triples: closed forms, strips, the b-ODE march, non-existence."""

import copy
import math

import numpy as np
import pytest

from pss.catalog import Branch, FamilyParams, PRESETS, build_family, novikov_preset, sine_gordon_preset, t22_demo_preset
from pss.immersion import (
    DiscriminantCollapse,
    ImmersionParams,
    ImmersionTriple,
    InvalidStrip,
    NoImmersion,
    Representation,
    TripleDomainError,
    closed_form_triple,
    codazzi_residuals,
    gauss_residual,
    integrate_b_ode,
    ode_backsubstitution_residuals,
    solve_triple,
    strip_bounds,
)
from pss.jets import JetPoint
from pss.verifier import sample_envs


def _jets(fam, n, seed=0):
    env = sample_envs(fam, n, np.random.default_rng(seed))
    return JetPoint(z=tuple(env[f"z{i}"] for i in range(6)), w=(env["w1"],), v=(env["v1"],))


# ----------------------------------------------------------------------
# gauss_residual


def test_gauss_residual_values():
    assert gauss_residual(0.0, 1.0, 0.0) == 0.0
    assert gauss_residual(1.0, -1.0, 0.0) == 0.0
    assert gauss_residual(2.0, 1.0, 1.0) == 2.0


# ----------------------------------------------------------------------
# Prop 4.1(i) closed form


def test_strip_endpoints_golden_ratio_like():
    fam = t22_demo_preset()
    ip = ImmersionParams(beta=1.0, C_strip=3.0)
    lo, hi = strip_bounds(fam, ip)
    assert math.exp(2 * lo) == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-12)
    assert math.exp(2 * hi) == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-12)


def test_strip_requires_strict_inequality():
    fam = t22_demo_preset()
    with pytest.raises(InvalidStrip):
        strip_bounds(fam, ImmersionParams(beta=1.0, C_strip=1.0))
    with pytest.raises(InvalidStrip):
        strip_bounds(fam, ImmersionParams(beta=0.0, C_strip=-2.0))
    with pytest.raises(InvalidStrip):
        strip_bounds(fam, ImmersionParams(beta=1.0, C_strip=None))


def test_strip_one_sided_for_beta_zero():
    fam = t22_demo_preset()
    lo, hi = strip_bounds(fam, ImmersionParams(beta=0.0, C_strip=2.0))
    assert lo == pytest.approx(-0.5 * math.log(2.0), abs=1e-14)
    assert hi == math.inf


def test_prop41i_hand_values_at_origin():
    fam = t22_demo_preset()
    ip = ImmersionParams(beta=1.0, C_strip=3.0, a_sign=1)
    a, b, c = closed_form_triple(fam, ip, 0.0)
    assert (a, b, c) == (pytest.approx(1.0), pytest.approx(-1.0), pytest.approx(0.0))
    trip = solve_triple(fam, ip)
    a, b, c, ap, bp, cp = trip.abc_derivs(0.0)
    assert ap == pytest.approx(1.0)  # L'(0)/2 sqrt(L) = (6-4)/2
    # Codazzi reductions: -a' + eta2 (a - c) = 0 and -b' + 2 eta2 b = 0
    assert -ap + 1.0 * (a - c) == pytest.approx(0.0, abs=1e-14)
    assert -bp + 2.0 * b == pytest.approx(0.0, abs=1e-14)


def test_prop41i_gauss_on_strip():
    fam = t22_demo_preset()
    trip = solve_triple(fam, ImmersionParams(beta=1.0, C_strip=3.0))
    s = trip.strip_samples(1000)
    assert np.max(np.abs(trip.gauss_residual_at(s))) <= 1e-12


def test_prop41i_codazzi_sampled():
    fam = t22_demo_preset()
    trip = solve_triple(fam, ImmersionParams(beta=1.0, C_strip=3.0))
    p = _jets(fam, 500)
    xs = trip.strip_samples(500)
    e1, e2 = codazzi_residuals(fam, trip, p, xs, np.zeros(500))
    assert np.max(np.abs(e1)) <= 1e-9 and np.max(np.abs(e2)) <= 1e-9


def test_sign_coherence_mirrors_strip():
    """Flipping the family sign maps the Prop 4.1(i) data to x -> -x."""
    base = FamilyParams(branch=Branch.T22, mu2=0.0, eta2=1.0, sign=1)
    famp = build_family(base, f="s", phi12="z1")
    famm = build_family(FamilyParams(branch=Branch.T22, mu2=0.0, eta2=1.0, sign=-1), f="s", phi12="z1")
    ip = ImmersionParams(beta=0.7, C_strip=3.0)
    tp, tm = solve_triple(famp, ip), solve_triple(famm, ip)
    lo_p, hi_p = tp.validity
    lo_m, hi_m = tm.validity
    assert lo_m == pytest.approx(-hi_p) and hi_m == pytest.approx(-lo_p)
    s = tp.strip_samples(64)
    ap, bp_, cp = tp.abc(s)
    am, bm, cm = tm.abc(-s)
    assert np.allclose(ap, am) and np.allclose(bp_, bm) and np.allclose(cp, cm)


def test_outside_strip_is_an_error():
    fam = t22_demo_preset()
    trip = solve_triple(fam, ImmersionParams(beta=1.0, C_strip=3.0))
    with pytest.raises(TripleDomainError):
        trip.abc(trip.validity[1] + 0.5)


def test_ac_nonzero_at_sampled_interior_points():
    """a*c != 0 at seeded random interior points (zeros of c are isolated,
    e.g. c(0) = 0 for the C_strip = 3, beta = 1 data, so exact sampling of
    a zero almost surely never happens)."""
    rng = np.random.default_rng(17)
    fam = t22_demo_preset()
    for ip in (ImmersionParams(beta=1.0, C_strip=3.0),
               ImmersionParams(beta=0.25, C_strip=2.0),
               ImmersionParams(beta=0.0, C_strip=2.0)):
        trip = solve_triple(fam, ip)
        lo, hi = trip.validity
        if not np.isfinite(hi):
            hi = lo + 3.0
        s = rng.uniform(lo + 1e-6 * (hi - lo), hi - 1e-6 * (hi - lo), 500)
        a, b, c = trip.abc(s)
        assert np.all(a * c != 0.0)


# ----------------------------------------------------------------------
# Prop 4.3 closed forms


def _t24_t_only():
    p = FamilyParams(branch=Branch.T24, lam=0.0, mu2=0.0, eta2=0.0, C=1.5, sign=1)
    return build_family(p, f="s", phi12="z1 + 1", name="t24-tonly")


def test_prop43i_triple_in_t():
    fam = _t24_t_only()
    ip = ImmersionParams(beta=0.0, sigma=2.0)
    trip = solve_triple(fam, ip)
    assert trip.branch_label == "Prop4.3(i)" and trip.svar == "t"
    assert (trip.sx, trip.st) == (0.0, 1.0)
    # beta = 0 collapses: b = 0, a = sqrt(sigma e^{2Ct} - 1), c = a - a'/C
    t = trip.strip_samples(100)
    a, b, c, ap, _, _ = trip.abc_derivs(t)
    assert np.allclose(b, 0.0)
    assert np.allclose(a, np.sqrt(2.0 * np.exp(2 * 1.5 * t) - 1.0))
    assert np.allclose(c, a - ap / 1.5)
    assert np.max(np.abs(gauss_residual(a, b, c))) < 1e-12


def test_prop43i_codazzi():
    fam = _t24_t_only()
    trip = solve_triple(fam, ImmersionParams(beta=0.4, sigma=3.0))
    p = _jets(fam, 300)
    ts = trip.strip_samples(300)
    e1, e2 = codazzi_residuals(fam, trip, p, np.zeros(300), ts)
    assert np.max(np.abs(e1)) <= 1e-9 and np.max(np.abs(e2)) <= 1e-9


def test_novikov_triple_runs_in_eta2x_plus_Ct():
    fam = novikov_preset()
    trip = solve_triple(fam, ImmersionParams(beta=0.5, sigma=3.0))
    assert trip.branch_label == "Prop4.3(ii)"
    assert trip.svar == "xi" and trip.sx == 1.0 and trip.st == 0.0  # eta2 = 1, C = 0
    s = trip.strip_samples(1000)
    assert np.max(np.abs(trip.gauss_residual_at(s))) <= 1e-12
    p = _jets(fam, 500)
    xs = trip.strip_samples(500)
    e1, e2 = codazzi_residuals(fam, trip, p, xs, np.zeros(500))
    assert np.max(np.abs(e1)) <= 1e-8 and np.max(np.abs(e2)) <= 1e-8


def test_prop43ii_with_drift():
    p = FamilyParams(branch=Branch.T24, lam=0.5, mu2=0.0, eta2=2.0, C=0.7, sign=1)
    fam = build_family(p, f="s", phi12="z1", name="t24-drift")
    trip = solve_triple(fam, ImmersionParams(beta=0.3, sigma=2.5))
    assert (trip.sx, trip.st) == (2.0, 0.7)
    pj = _jets(fam, 200)
    s = trip.strip_samples(200)
    # split s between x and t so that s = eta2 x + C t
    x = 0.25 * s / trip.sx
    t = 0.75 * s / trip.st
    e1, e2 = codazzi_residuals(fam, trip, pj, x, t)
    assert np.max(np.abs(e1)) <= 1e-8 and np.max(np.abs(e2)) <= 1e-8


# ----------------------------------------------------------------------
# ODE branches


def _t22_ode_family(mu2=0.5, eta2=3.0):
    p = FamilyParams(branch=Branch.T22, mu2=mu2, eta2=eta2, sign=1)
    return build_family(p, f="s", phi12="z1", name="t22-ode")


def test_ode_march_gauss_by_construction():
    fam = _t22_ode_family()
    ip = ImmersionParams(beta=0.5, b0=1.2, s0=0.0, h=1e-3, eps=0.3)
    trip = solve_triple(fam, ip)
    assert trip.representation == Representation.ODE_TABLE
    a, b, c = trip.abc(trip.form.s)
    assert np.max(np.abs(gauss_residual(a, b, c))) <= 1e-10


def _fd6(y, h):
    return (-y[:-6] + 9 * y[1:-5] - 45 * y[2:-4] + 45 * y[4:-2] - 9 * y[5:-1] + y[6:]) / (60 * h)


def _trim(trip, m=3):
    form = copy.copy(trip.form)
    form.s = trip.form.s[m:-m]
    form.b = trip.form.b[m:-m]
    form.bprime = trip.form.bprime[m:-m]
    return ImmersionTriple(trip.representation, trip.branch_label, trip.svar,
                           trip.sx, trip.st, (form.s[0], form.s[-1]), form)


def test_ode_backsubstitution_and_richardson():
    fam = _t22_ode_family()
    res = {}
    for h in (1e-3, 5e-4):
        ip = ImmersionParams(beta=0.5, b0=1.2, s0=0.0, h=h, eps=0.3)
        trip = solve_triple(fam, ip)
        fd = _fd6(trip.form.b, h)
        r = ode_backsubstitution_residuals(_trim(trip), bprime=fd)
        res[h] = float(np.max(np.abs(r)))
    assert res[1e-3] <= 1e-6
    ratio = res[1e-3] / res[5e-4]
    assert 16 / 1.25 <= ratio <= 16 * 1.25


def test_ode_codazzi_cross_check():
    fam = _t22_ode_family()
    trip = solve_triple(fam, ImmersionParams(beta=0.5, b0=1.2, s0=0.0, h=1e-3, eps=0.3))
    p = _jets(fam, 300)
    lo, hi = trip.validity
    s = np.linspace(lo + 1e-3, hi - 1e-3, 300)
    e1, e2 = codazzi_residuals(fam, trip, p, s, np.zeros(300))
    assert np.max(np.abs(e1)) <= 1e-7 and np.max(np.abs(e2)) <= 1e-7


def test_t24_ode_branch_codazzi():
    p = FamilyParams(branch=Branch.T24, lam=1.0, mu2=0.8, eta2=1.0, C=0.5, sign=1)
    fam = build_family(p, f="s", phi12="z1", name="t24-ode")
    trip = solve_triple(fam, ImmersionParams(beta=0.2, b0=1.3, s0=0.0, h=1e-3, eps=0.3))
    assert trip.branch_label == "Prop4.3(iii)" and trip.svar == "xi"
    a, b, c = trip.abc(trip.form.s)
    assert np.max(np.abs(gauss_residual(a, b, c))) <= 1e-10
    pj = _jets(fam, 200)
    lo, hi = trip.validity
    s = np.linspace(lo + 1e-3, hi - 1e-3, 200)
    e1, e2 = codazzi_residuals(fam, trip, pj, s / 2 / trip.sx, s / 2 / trip.st)
    assert np.max(np.abs(e1)) <= 1e-7 and np.max(np.abs(e2)) <= 1e-7


def test_ode_independent_root_still_satisfies_geometry():
    """a_sign opposite to the family sign marches fine; Gauss and Codazzi hold."""
    fam = _t22_ode_family()
    trip = solve_triple(fam, ImmersionParams(beta=0.5, b0=1.2, s0=0.0, h=1e-3, eps=0.2, a_sign=-1))
    a, b, c = trip.abc(trip.form.s)
    assert np.max(np.abs(gauss_residual(a, b, c))) <= 1e-10
    p = _jets(fam, 200)
    lo, hi = trip.validity
    s = np.linspace(lo + 1e-3, hi - 1e-3, 200)
    e1, e2 = codazzi_residuals(fam, trip, p, s, np.zeros(200))
    assert np.max(np.abs(e1)) <= 1e-7 and np.max(np.abs(e2)) <= 1e-7


def test_ode_discriminant_collapse_at_start():
    fam = _t22_ode_family()
    with pytest.raises(DiscriminantCollapse):
        integrate_b_ode(fam, ImmersionParams(beta=0.5, b0=0.0, s0=0.0, h=1e-3, eps=0.2))


def test_ode_stops_are_reported():
    fam = _t22_ode_family()
    trip = solve_triple(fam, ImmersionParams(beta=0.5, b0=1.2, s0=0.0, h=1e-3, eps=0.6))
    assert "backward" in trip.form.stops
    assert trip.form.stops["backward"]["reason"] in ("discriminant", "denominator")


# ----------------------------------------------------------------------
# Non-existence branches and dispatch totality


def test_no_immersion_citations():
    for name, prop in (("t23-demo", "Proposition 4.2"),
                       ("t25i-demo", "Proposition 4.4"),
                       ("t25ii-demo", "Proposition 4.5")):
        out = solve_triple(PRESETS[name](), ImmersionParams())
        assert isinstance(out, NoImmersion)
        assert out.proposition == prop


def test_solve_triple_total_over_random_parameterizations():
    """Every catalog branch yields a triple or a citation - never an unhandled case."""
    rng = np.random.default_rng(2024)
    count_no = 0
    for _ in range(50):
        mu3 = rng.uniform(-0.9, 0.9)
        fam = build_family(
            FamilyParams(branch=Branch.T23, lam=rng.uniform(0.5, 2), eta2=rng.uniform(0.5, 2),
                         mu2=rng.uniform(-1, 1), mu3=mu3, root=rng.choice([1, -1])),
            f="s")
        out = solve_triple(fam, ImmersionParams())
        assert isinstance(out, NoImmersion) and out.proposition == "Proposition 4.2"
        count_no += 1

        fam = build_family(
            FamilyParams(branch=Branch.T25I, lam=rng.uniform(0.5, 2), theta=rng.uniform(0.5, 2),
                         B=rng.uniform(-1, 1), mu2=rng.uniform(-1, 1), eta2=rng.uniform(0.5, 2),
                         m=rng.uniform(0.5, 2), n=rng.uniform(-1, 1),
                         sign=rng.choice([1, -1])))
        out = solve_triple(fam, ImmersionParams())
        assert isinstance(out, NoImmersion) and out.proposition == "Proposition 4.4"

        m = rng.uniform(1.5, 3)
        fam = build_family(
            FamilyParams(branch=Branch.T25II, lam=rng.uniform(0.5, 2), tau=rng.uniform(0.2, 1),
                         mu2=rng.uniform(-1, 1), eta2=rng.uniform(0.5, 2), m=m,
                         n=rng.uniform(-1, 1), sign=rng.choice([1, -1]), root=rng.choice([1, -1])),
            phi="exp(z0)")
        out = solve_triple(fam, ImmersionParams())
        assert isinstance(out, NoImmersion) and out.proposition == "Proposition 4.5"
    assert count_no == 50


def test_sine_gordon_triple_is_solution_dependent():
    fam = sine_gordon_preset()
    trip = solve_triple(fam, ImmersionParams(a_sign=1))
    assert trip.representation == Representation.SOLUTION_DEPENDENT
    a, b, c = trip.form.abc_of_u(np.pi / 4)
    assert a == pytest.approx(2.0 / math.tan(np.pi / 4))
    assert b == -1.0 and c == 0.0
    assert gauss_residual(a, b, c) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(TripleDomainError):
        trip.form.abc_of_u(0.0)  # pole at sin u = 0 is reported


def test_sine_gordon_codazzi_identity():
    fam = sine_gordon_preset(eta=1.3)
    trip = solve_triple(fam, ImmersionParams(a_sign=1))
    rng = np.random.default_rng(6)
    env = sample_envs(fam, 300, rng)
    p = JetPoint(z=tuple(env[f"z{i}"] for i in range(6)), w=(env["w1"],), v=(env["v1"],))
    e1, e2 = codazzi_residuals(fam, trip, p, 0.0, 0.0)
    assert np.max(np.abs(e1)) <= 1e-12 and np.max(np.abs(e2)) <= 1e-12


def test_constant_triple_trivial_codazzi():
    """a = c, b = 0 makes both combinations collapse termwise to zero."""
    fam = t22_demo_preset()

    class Const:
        representation = Representation.CLOSED_FORM
        svar, sx, st = "x", 1.0, 0.0
        validity = (-10.0, 10.0)

        def reduced_coordinate(self, x, t):
            return np.asarray(x, dtype=float)

        def abc_derivs(self, s):
            one = np.ones_like(np.asarray(s, dtype=float))
            return 2.0 * one, 0.0 * one, 2.0 * one, 0.0 * one, 0.0 * one, 0.0 * one

    p = _jets(fam, 100)
    e1, e2 = codazzi_residuals(fam, Const(), p, np.zeros(100), np.zeros(100))
    assert np.max(np.abs(e1)) == 0.0 and np.max(np.abs(e2)) == 0.0


def test_csv_export(tmp_path):
    fam = t22_demo_preset()
    trip = solve_triple(fam, ImmersionParams(beta=1.0, C_strip=3.0))
    path = tmp_path / "triple.csv"
    trip.export_csv(path, n=100)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "s,a,b,c,gauss_residual"
    assert len(lines) == 101

    fam2 = _t22_ode_family()
    trip2 = solve_triple(fam2, ImmersionParams(beta=0.5, b0=1.2, h=1e-3, eps=0.1))
    path2 = tmp_path / "ode.csv"
    trip2.export_csv(path2)
    assert path2.read_text().splitlines()[0] == "s,a,b,c,gauss_residual,bprime"


def test_ode_codazzi_with_nonlinear_f():
    """The universal triple is blind to the family's f and phi12 choices."""
    p = FamilyParams(branch=Branch.T22, mu2=0.5, eta2=3.0, sign=1)
    fam = build_family(p, f="2*s + s^3", phi12="z1 + sin(z0)", name="t22-ode-nl")
    trip = solve_triple(fam, ImmersionParams(beta=0.5, b0=1.2, s0=0.0, h=1e-3, eps=0.25))
    pj = _jets(fam, 300, seed=8)
    lo, hi = trip.validity
    s = np.linspace(lo + 1e-3, hi - 1e-3, 300)
    e1, e2 = codazzi_residuals(fam, trip, pj, s, np.zeros(300))
    assert np.max(np.abs(e1)) <= 1e-7 and np.max(np.abs(e2)) <= 1e-7
