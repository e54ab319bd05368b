"""Universal second-fundamental-form triples {a, b, c} and their domains.

For each catalog branch this module either produces the universal triple
(closed form or an ODE march for b), or the proven negative result:

    T22, mu2 = 0              closed form in x
    T22, mu2 != 0             b solves a first-order ODE in x
    T23                       no immersion (Proposition 4.2)
    T24, mu2 = eta2 = 0       closed form in t
    T24, mu2 = 0, eta2 != 0   closed form in xi = eta2*x + C*t
    T24, mu2 != 0             b solves a first-order ODE in xi
    T25i / T25ii              no immersion (Propositions 4.4 / 4.5)
    SINE_GORDON               a = 2/tan(u), b = -1, c = 0 up to sign;
                              depends on the solution (poles at sin u = 0)

Closed forms: with E(s) = exp(ce*s),

    L = A*E - beta^2*E^2 - 1,   a = a_sign*sqrt(L),   c = a - sign*a'/cbar,

valid on the strip where L > 0 (A > 0 and A^2 > 4*beta^2).  The b-ODE for
the mu2 != 0 branches is marched with classical RK4 and back-substitution
tested against the displayed equation; a and c are recovered pointwise
from the quadratic the Gauss equation imposes, so a*c - b^2 = -1 holds to
rounding along the march by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import Branch, CatalogError, Family
from .jets import JetPoint

__all__ = [
    "Representation",
    "ImmersionParams",
    "ImmersionTriple",
    "NoImmersion",
    "InvalidStrip",
    "TripleDomainError",
    "DiscriminantCollapse",
    "DenominatorCollapse",
    "solve_triple",
    "closed_form_triple",
    "strip_bounds",
    "integrate_b_ode",
    "gauss_residual",
    "codazzi_residuals",
    "ode_backsubstitution_residuals",
]


class Representation:
    CLOSED_FORM = "CLOSED_FORM"
    ODE_TABLE = "ODE_TABLE"
    SOLUTION_DEPENDENT = "SOLUTION_DEPENDENT"


class InvalidStrip(ValueError):
    pass


class TripleDomainError(ValueError):
    pass


class DiscriminantCollapse(RuntimeError):
    def __init__(self, s):
        self.s = s
        super().__init__(f"discriminant collapsed at s = {s}")


class DenominatorCollapse(RuntimeError):
    def __init__(self, s):
        self.s = s
        super().__init__(f"ODE denominator collapsed at s = {s}")


@dataclass(frozen=True)
class ImmersionParams:
    beta: float = 0.0
    C_strip: float | None = None
    sigma: float | None = None
    b0: float = 0.0
    s0: float = 0.0
    h: float = 1e-3
    eps: float = 1.0
    a_sign: int = 1
    delta_min: float = 1e-8
    denom_min: float = 1e-8


@dataclass(frozen=True)
class NoImmersion:
    """Negative result: the branch admits no finite-jet immersion triple."""

    branch: str
    proposition: str
    reason: str


# ----------------------------------------------------------------------
# Triple representations


class _ClosedForm:
    """a = a_sign*sqrt(L), L = A*E - beta^2*E^2 - 1, E = exp(ce*s)."""

    def __init__(self, A, beta, ce, cbar, bsign, sign, a_sign):
        self.A = A
        self.beta = beta
        self.ce = ce
        self.cbar = cbar
        self.bsign = bsign
        self.sign = sign
        self.a_sign = a_sign

    def L(self, s):
        E = np.exp(self.ce * s)
        return self.A * E - self.beta**2 * E * E - 1.0

    def abc_derivs(self, s):
        E = np.exp(self.ce * s)
        b2 = self.beta**2
        L = self.A * E - b2 * E * E - 1.0
        if np.any(L <= 0):
            raise TripleDomainError("L(s) <= 0: outside the validity strip")
        Lp = self.ce * (self.A * E - 2.0 * b2 * E * E)
        Lpp = self.ce**2 * (self.A * E - 4.0 * b2 * E * E)
        sq = np.sqrt(L)
        a = self.a_sign * sq
        ap = self.a_sign * Lp / (2.0 * sq)
        app = self.a_sign * (Lpp / (2.0 * sq) - Lp * Lp / (4.0 * L * sq))
        b = self.bsign * self.beta * E
        bp = self.ce * b
        c = a - self.sign * ap / self.cbar
        cp = ap - self.sign * app / self.cbar
        return a, b, c, ap, bp, cp


class _OdeForm:
    """Recover (a, c) from b on a marched table; Hermite-interpolated."""

    def __init__(self, mu2, beta, rho, sign, a_sign, s, b, bprime, stops):
        self.mu2 = mu2
        self.beta = beta
        self.rho = rho
        self.k = math.sqrt(1.0 + mu2 * mu2)
        self.ce = sign * 2.0 * rho / self.k
        self.sign = sign
        self.a_sign = a_sign
        self.s = np.asarray(s)
        self.b = np.asarray(b)
        self.bprime = np.asarray(bprime)
        self.stops = stops

    def phi_delta(self, s, b):
        E = np.exp(self.ce * s)
        phi = ((self.mu2**2 - 1.0) * b - self.beta * E) / self.mu2
        delta = phi * phi - 4.0 * (1.0 - b * b)
        return phi, delta, E

    def g(self, s, b):
        mu2, k, r, sg = self.mu2, self.k, self.a_sign, self.sign
        phi, delta, E = self.phi_delta(s, b)
        if np.any(delta <= 0):
            raise DiscriminantCollapse(s)
        sq = np.sqrt(delta)
        den = (mu2**2 + 1.0) * sq + r * (mu2**2 - 1.0) * phi + 4.0 * r * mu2 * b
        if np.any(np.abs(den) < 1e-300):
            raise DenominatorCollapse(s)
        num = 2.0 * sg * self.rho * k * b * sq + r * sg * (2.0 * self.beta * self.rho / k) * phi * E
        return num / den

    def _interp_b(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.s[0], self.s[-1]
        if np.any(s < lo) or np.any(s > hi):
            raise TripleDomainError(f"s outside the marched interval [{lo}, {hi}]")
        i = np.clip(np.searchsorted(self.s, s) - 1, 0, len(self.s) - 2)
        h = self.s[i + 1] - self.s[i]
        tt = (s - self.s[i]) / h
        h00 = (1 + 2 * tt) * (1 - tt) ** 2
        h10 = tt * (1 - tt) ** 2
        h01 = tt * tt * (3 - 2 * tt)
        h11 = tt * tt * (tt - 1)
        return (
            h00 * self.b[i]
            + h10 * h * self.bprime[i]
            + h01 * self.b[i + 1]
            + h11 * h * self.bprime[i + 1]
        )

    def abc_derivs(self, s):
        b = self._interp_b(s)
        mu2, r = self.mu2, self.a_sign
        phi, delta, E = self.phi_delta(s, b)
        if np.any(delta <= 0):
            raise DiscriminantCollapse(s)
        sq = np.sqrt(delta)
        a = 0.5 * (-phi + r * sq)
        c = a + phi
        bp = self.g(s, b)
        phip = ((mu2**2 - 1.0) * bp - self.beta * self.ce * E) / mu2
        deltap = 2.0 * phi * phip + 8.0 * b * bp
        ap = 0.5 * (-phip + r * deltap / (2.0 * sq))
        cp = ap + phip
        return a, b, c, ap, bp, cp


class _SineGordonForm:
    def __init__(self, a_sign):
        self.a_sign = a_sign

    def abc_of_u(self, u):
        su = np.sin(u)
        if np.any(su == 0):
            raise TripleDomainError("sine-Gordon triple has a pole where sin u = 0")
        a = self.a_sign * 2.0 * np.cos(u) / su
        b = -self.a_sign * np.ones_like(np.asarray(u, dtype=float))
        c = np.zeros_like(np.asarray(u, dtype=float))
        return a, b, c

    def da_du(self, u):
        su = np.sin(u)
        if np.any(su == 0):
            raise TripleDomainError("sine-Gordon triple has a pole where sin u = 0")
        return -self.a_sign * 2.0 / (su * su)


@dataclass(frozen=True)
class ImmersionTriple:
    representation: str
    branch_label: str
    svar: str  # "x", "t", "xi", or "u" (solution-dependent)
    sx: float  # s = sx*x + st*t
    st: float
    validity: tuple
    form: object

    def reduced_coordinate(self, x, t):
        return self.sx * x + self.st * t

    def abc(self, s):
        a, b, c, *_ = self.form.abc_derivs(s)
        return a, b, c

    def abc_derivs(self, s):
        return self.form.abc_derivs(s)

    def gauss_residual_at(self, s):
        a, b, c = self.abc(s)
        return gauss_residual(a, b, c)

    def strip_samples(self, n, coverage=0.99):
        lo, hi = self.validity
        if not np.isfinite(lo) and not np.isfinite(hi):
            lo, hi = -1.0, 1.0
        elif not np.isfinite(hi):
            hi = lo + 2.0
        elif not np.isfinite(lo):
            lo = hi - 2.0
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * coverage
        return np.linspace(mid - half, mid + half, n)

    def export_csv(self, path, n=1000):
        if self.representation == Representation.ODE_TABLE:
            s = self.form.s
            a, b, c, ap, bp, cp = self.form.abc_derivs(s)
            rows = zip(s, a, b, c, gauss_residual(a, b, c), bp)
            header = "s,a,b,c,gauss_residual,bprime"
        elif self.representation == Representation.CLOSED_FORM:
            s = self.strip_samples(n)
            a, b, c = self.abc(s)
            rows = zip(s, a, b, c, gauss_residual(a, b, c))
            header = "s,a,b,c,gauss_residual"
        else:
            u = np.linspace(0.1, math.pi - 0.1, n)
            a, b, c = self.form.abc_of_u(u)
            rows = zip(u, a, b, c, gauss_residual(a, b, c))
            header = "u,a,b,c,gauss_residual"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


# ----------------------------------------------------------------------


def gauss_residual(a, b, c):
    """ac - b^2 + 1; zero iff the Gauss equation for K = -1 holds."""
    return a * c - b * b + 1.0


def _strip_interval(A, beta, ce, what):
    if A is None:
        raise InvalidStrip(f"{what} is required for this closed form")
    if not A > 0:
        raise InvalidStrip(f"{what} > 0 violated ({what} = {A})")
    if beta == 0.0:
        bound = -math.log(A) / ce
        return (bound, math.inf) if ce > 0 else (-math.inf, bound)
    if not A * A > 4.0 * beta * beta:
        raise InvalidStrip(f"{what}^2 > 4*beta^2 violated ({what} = {A}, beta = {beta})")
    disc = math.sqrt(A * A - 4.0 * beta * beta)
    ylo = (A - disc) / (2.0 * beta * beta)
    yhi = (A + disc) / (2.0 * beta * beta)
    s1, s2 = math.log(ylo) / ce, math.log(yhi) / ce
    return (min(s1, s2), max(s1, s2))


def _closed_case(fam: Family, ip: ImmersionParams):
    p = fam.params
    s = float(p.sign)
    if p.branch == Branch.T22 and p.mu2 == 0:
        return dict(label="Prop4.1(i)", svar="x", sx=1.0, st=0.0, A=ip.C_strip,
                    what="C_strip", ce=s * 2.0 * p.eta2, cbar=p.eta2, bsign=-1.0)
    if p.branch == Branch.T24 and p.mu2 == 0 and p.eta2 == 0:
        return dict(label="Prop4.3(i)", svar="t", sx=0.0, st=1.0, A=ip.sigma,
                    what="sigma", ce=s * 2.0 * p.C, cbar=p.C, bsign=+1.0)
    if p.branch == Branch.T24 and p.mu2 == 0:
        return dict(label="Prop4.3(ii)", svar="xi", sx=p.eta2, st=p.C, A=ip.sigma,
                    what="sigma", ce=s * 2.0, cbar=1.0, bsign=-1.0)
    return None


def strip_bounds(fam: Family, ip: ImmersionParams):
    """Open interval of the reduced coordinate where L > 0 (closed forms only)."""
    case = _closed_case(fam, ip)
    if case is None:
        raise CatalogError(f"{fam.name}: no closed-form strip for this branch/parameter case")
    return _strip_interval(case["A"], ip.beta, case["ce"], case["what"])


def closed_form_triple(fam: Family, ip: ImmersionParams, s):
    """(a, b, c) of the closed-form triple at reduced coordinate s."""
    trip = solve_triple(fam, ip)
    if isinstance(trip, NoImmersion) or trip.representation != Representation.CLOSED_FORM:
        raise CatalogError(f"{fam.name}: no closed-form triple for this branch/parameter case")
    return trip.abc(s)


def integrate_b_ode(fam: Family, ip: ImmersionParams):
    """March the b-ODE (mu2 != 0 branches) and wrap the table as a triple."""
    p = fam.params
    if p.mu2 == 0:
        raise CatalogError("the ODE branch requires mu2 != 0")
    if p.branch == Branch.T22:
        label, svar, sx, st, rho = "Prop4.1(ii)", "x", 1.0, 0.0, p.eta2
    elif p.branch == Branch.T24:
        label, svar, sx, st, rho = "Prop4.3(iii)", "xi", p.eta2, p.C, 1.0
    else:
        raise CatalogError(f"{fam.name}: no ODE immersion branch")
    form = _OdeForm(p.mu2, ip.beta, rho, float(p.sign), float(ip.a_sign), [], [], [], {})
    phi, delta, _ = form.phi_delta(ip.s0, ip.b0)
    if not delta > ip.delta_min:
        raise DiscriminantCollapse(ip.s0)

    def step(sv, bv, h):
        k1 = form.g(sv, bv)
        k2 = form.g(sv + 0.5 * h, bv + 0.5 * h * k1)
        k3 = form.g(sv + 0.5 * h, bv + 0.5 * h * k2)
        k4 = form.g(sv + h, bv + h * k3)
        return bv + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def march(direction):
        h = direction * ip.h
        out_s, out_b = [], []
        sv, bv = ip.s0, ip.b0
        nsteps = int(round(ip.eps / ip.h))
        stop = None
        for _ in range(nsteps):
            try:
                bn = step(sv, bv, h)
            except DiscriminantCollapse as e:
                stop = ("discriminant", float(np.atleast_1d(e.s)[0]))
                break
            except DenominatorCollapse as e:
                stop = ("denominator", float(np.atleast_1d(e.s)[0]))
                break
            sn = sv + h
            phi, delta, _ = form.phi_delta(sn, bn)
            den = abs(
                (p.mu2**2 + 1.0) * math.sqrt(max(delta, 0.0))
                + ip.a_sign * (p.mu2**2 - 1.0) * phi
                + 4.0 * ip.a_sign * p.mu2 * bn
            )
            if delta <= ip.delta_min:
                stop = ("discriminant", sn)
                break
            if den < ip.denom_min:
                stop = ("denominator", sn)
                break
            out_s.append(sn)
            out_b.append(bn)
            sv, bv = sn, bn
        return out_s, out_b, stop

    sp, bp_, stop_p = march(+1)
    sm, bm, stop_m = march(-1)
    s = np.array(list(reversed(sm)) + [ip.s0] + sp)
    b = np.array(list(reversed(bm)) + [ip.b0] + bp_)
    if len(s) < 4:
        raise DiscriminantCollapse(ip.s0)
    stops = {}
    if stop_p:
        stops["forward"] = {"reason": stop_p[0], "s": stop_p[1]}
    if stop_m:
        stops["backward"] = {"reason": stop_m[0], "s": stop_m[1]}
    form2 = _OdeForm(p.mu2, ip.beta, rho, float(p.sign), float(ip.a_sign), s, b, [], stops)
    form2.bprime = form2.g(s, b)
    return ImmersionTriple(
        representation=Representation.ODE_TABLE,
        branch_label=label,
        svar=svar,
        sx=sx,
        st=st,
        validity=(float(s[0]), float(s[-1])),
        form=form2,
    )


def ode_backsubstitution_residuals(trip: ImmersionTriple, bprime=None):
    """Residual of the displayed b-ODE along the marched table.

    Moves every term to one side; `bprime` defaults to the stored slopes
    (pass a finite-difference estimate to make this an independent check).
    The scale max(1, |terms|_inf) divides the result.
    """
    form = trip.form
    if not isinstance(form, _OdeForm):
        raise CatalogError("back-substitution applies to ODE-table triples")
    s, b = form.s, form.b
    bp = form.bprime if bprime is None else np.asarray(bprime)
    mu2, k, r, sg, rho = form.mu2, form.k, form.a_sign, form.sign, form.rho
    phi, delta, E = form.phi_delta(s, b)
    sq = np.sqrt(delta)
    bracket = mu2 * (mu2**2 + 1.0) * sq + r * (mu2**2 + 1.0) ** 2 * b - r * (mu2**2 - 1.0) * form.beta * E
    second = (2.0 * rho / k) * (
        -sg * mu2 * (mu2**2 + 1.0) * sq * b
        - r * sg * (mu2**2 - 1.0) * form.beta * E * b
        + r * sg * form.beta**2 * E * E
    )
    res = bp * bracket + second
    scale = np.maximum(1.0, np.maximum(np.abs(bp * bracket), np.abs(second)))
    return res / scale


def solve_triple(fam: Family, ip: ImmersionParams):
    """Universal triple for the family, or the cited non-existence result."""
    p = fam.params
    if p.branch == Branch.T23:
        return NoImmersion(p.branch, "Proposition 4.2",
                           "no local isometric immersion with finite-jet triples exists")
    if p.branch == Branch.T25I:
        return NoImmersion(p.branch, "Proposition 4.4",
                           "no local isometric immersion with finite-jet triples exists")
    if p.branch == Branch.T25II:
        return NoImmersion(p.branch, "Proposition 4.5",
                           "no local isometric immersion with finite-jet triples exists")
    if p.branch == Branch.SINE_GORDON:
        return ImmersionTriple(
            representation=Representation.SOLUTION_DEPENDENT,
            branch_label="sine-Gordon",
            svar="u",
            sx=0.0,
            st=0.0,
            validity=(-math.inf, math.inf),
            form=_SineGordonForm(float(ip.a_sign)),
        )
    case = _closed_case(fam, ip)
    if case is not None:
        validity = _strip_interval(case["A"], ip.beta, case["ce"], case["what"])
        form = _ClosedForm(case["A"], ip.beta, case["ce"], case["cbar"], case["bsign"],
                           float(p.sign), float(ip.a_sign))
        return ImmersionTriple(
            representation=Representation.CLOSED_FORM,
            branch_label=case["label"],
            svar=case["svar"],
            sx=case["sx"],
            st=case["st"],
            validity=validity,
            form=form,
        )
    return integrate_b_ode(fam, ip)


# ----------------------------------------------------------------------
# Codazzi cross-check


def codazzi_residuals(fam: Family, trip: ImmersionTriple, p: JetPoint, x: float, t: float):
    """(E1, E2): the two Codazzi combinations at jet p and position (x, t).

    The total derivatives act on (a, b, c) as functions of x and t only
    (universal triples) or through u (the sine-Gordon triple); the f_ij
    and Delta_ij are evaluated at the jet.
    """
    env = p.env()
    f11, f21 = fam.fij(1, 1)(env), fam.fij(2, 1)(env)
    f12, f22 = fam.fij(1, 2)(env), fam.fij(2, 2)(env)
    f31, f32 = fam.fij(3, 1)(env), fam.fij(3, 2)(env)
    d13 = f11 * f32 - f31 * f12
    d23 = f21 * f32 - f31 * f22
    if trip.representation == Representation.SOLUTION_DEPENDENT:
        u = env["z0"]
        a, b, c = trip.form.abc_of_u(u)
        dadu = trip.form.da_du(u)
        if p.M < 1:
            raise TripleDomainError("sine-Gordon Codazzi check needs w1 = u_t in the jet")
        dxa, dta = dadu * env["z1"], dadu * env["w1"]
        dxb = dtb = dxc = dtc = 0.0
    else:
        s = trip.reduced_coordinate(x, t)
        lo, hi = trip.validity
        if np.any(s <= lo) or np.any(s >= hi):
            raise TripleDomainError(f"(x, t) maps to s = {s}, outside the validity interval ({lo}, {hi})")
        a, b, c, ap, bp, cp = trip.abc_derivs(s)
        dxa, dta = trip.sx * ap, trip.st * ap
        dxb, dtb = trip.sx * bp, trip.st * bp
        dxc, dtc = trip.sx * cp, trip.st * cp
    e1 = f11 * dta + f21 * dtb - f12 * dxa - f22 * dxb - 2.0 * b * d13 + (a - c) * d23
    e2 = f11 * dtb + f21 * dtc - f12 * dxb - f22 * dxc + (a - c) * d13 + 2.0 * b * d23
    return e1, e2
