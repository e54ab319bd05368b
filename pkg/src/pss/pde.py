"""Desk-scale solutions of u_t - u_xxt = lam*u^2*u_xxx + G on a periodic grid.

The time march inverts the Helmholtz operator each step,

    u_t = (1 - dxx)^{-1} [lam*u^2*u_xxx + G(u, u_x, u_xx)],

with classical RK4 in time and spectral (or 4th/2nd-order central) space
derivatives.  Sine-Gordon, which is not of this form, is marched in its
light-cone form u_t(x) = integral of sin(u) dx' with the constant fixed
by decay at x_min.

Fields expose jets: EXACT fields (closed-form u(x, t)) sample them
analytically through truncated Taylor series in x whose coefficients are
dual numbers in t; NUMERIC fields use centered finite-difference
stencils of declared order at the grid nodes and stored snapshot times,
with declared 2nd-order linear interpolation between them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import dual
from .catalog import Branch
from .expr import parse_expression
from .jets import JetPoint

__all__ = [
    "Grid1D",
    "SolutionField",
    "PdeError",
    "BlowUpError",
    "CflError",
    "helmholtz_apply",
    "helmholtz_invert",
    "solve_mol",
    "exact_sine_gordon_kink",
    "kink_field",
    "exact_field",
    "sample_jet",
    "save_field",
    "load_field",
    "export_csv",
    "fd_weights",
]


class PdeError(RuntimeError):
    pass


class BlowUpError(PdeError):
    def __init__(self, t, amplitude):
        self.t = t
        self.amplitude = amplitude
        super().__init__(f"|u|_inf = {amplitude:.3e} exceeded the blow-up cap at t = {t:.6g}")


class CflError(PdeError):
    pass


BLOWUP_CAP = 1e6


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    nx: int
    periodic: bool = True

    def __post_init__(self):
        if self.nx < 16:
            raise PdeError("nx >= 16 required")
        if not self.periodic:
            raise PdeError("only periodic grids are supported")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.nx

    def nodes(self):
        return self.x_min + self.dx * np.arange(self.nx)

    def wavenumbers(self):
        L = self.x_max - self.x_min
        return 2.0 * np.pi * np.fft.rfftfreq(self.nx, d=1.0 / self.nx) / L


# ----------------------------------------------------------------------
# Helmholtz operator (1 - dxx) on the periodic grid, spectral


def helmholtz_apply(grid: Grid1D, u):
    k = grid.wavenumbers()
    return np.fft.irfft(np.fft.rfft(u) * (1.0 + k * k), n=grid.nx)


def helmholtz_invert(grid: Grid1D, rhs):
    """Solve (1 - dxx) u = rhs; positive definite, never singular."""
    k = grid.wavenumbers()
    return np.fft.irfft(np.fft.rfft(rhs) / (1.0 + k * k), n=grid.nx)


# ----------------------------------------------------------------------
# Finite-difference machinery


def fd_weights(m, offsets):
    """Weights w with sum_j w_j f(x + o_j h) ~ f^(m)(x) h^-m (Vandermonde solve)."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[m] = float(math.factorial(m))
    return np.linalg.solve(A, rhs)


def _central_offsets(m, acc=4):
    half = (m + acc - 1) // 2
    return np.arange(-half, half + 1)


def periodic_derivative(u, dx, m, acc=4):
    """m-th x-derivative of a periodic sample array, centered stencils."""
    if m == 0:
        return np.asarray(u).copy()
    off = _central_offsets(m, acc)
    w = fd_weights(m, off)
    out = np.zeros_like(np.asarray(u, dtype=float))
    for o, c in zip(off, w):
        out += c * np.roll(u, -int(o))
    return out / dx**m


def spectral_derivative(grid: Grid1D, u, m):
    k = grid.wavenumbers()
    return np.fft.irfft(np.fft.rfft(u) * (1j * k) ** m, n=grid.nx)


def cumulative_integral(f, dx, order=4):
    """Antiderivative samples with I[0] = 0; composite 4th-order (or trapezoid)."""
    f = np.asarray(f, dtype=float)
    n = len(f)
    out = np.zeros(n)
    if order <= 2 or n < 4:
        out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1])) * dx
        return out
    inc = np.empty(n - 1)
    inc[0] = dx / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
    inc[-1] = dx / 24.0 * (9.0 * f[-1] + 19.0 * f[-2] - 5.0 * f[-3] + f[-4])
    if n > 3:
        inc[1:-1] = dx / 24.0 * (-f[:-3] + 13.0 * f[1:-2] + 13.0 * f[2:-1] - f[3:])
    out[1:] = np.cumsum(inc)
    return out


# ----------------------------------------------------------------------
# Truncated Taylor series in x (coefficients may be dual numbers in t)


class Taylor:
    __slots__ = ("c",)
    __array_ufunc__ = None

    def __init__(self, coeffs):
        self.c = list(coeffs)

    @property
    def order(self):
        return len(self.c) - 1

    def _co(self, other):
        if isinstance(other, Taylor):
            return other.c
        return [other] + [0.0] * self.order

    def __add__(self, other):
        oc = self._co(other)
        return Taylor([a + b for a, b in zip(self.c, oc)])

    __radd__ = __add__

    def __neg__(self):
        return Taylor([-a for a in self.c])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Taylor) else -1.0 * other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Taylor):
            return Taylor([a * other for a in self.c])
        n = self.order
        out = []
        for k in range(n + 1):
            acc = self.c[0] * other.c[k]
            for j in range(1, k + 1):
                acc = acc + self.c[j] * other.c[k - j]
            out.append(acc)
        return Taylor(out)

    __rmul__ = __mul__

    def _inv(self):
        n = self.order
        d0 = 1.0 / self.c[0]
        out = [d0]
        for k in range(1, n + 1):
            acc = 0.0
            for j in range(1, k + 1):
                acc = acc + self.c[j] * out[k - j]
            out.append(-d0 * acc)
        return Taylor(out)

    def __truediv__(self, other):
        if isinstance(other, Taylor):
            return self * other._inv()
        return Taylor([a / other for a in self.c])

    def __rtruediv__(self, other):
        return self._inv() * other

    def __pow__(self, k):
        if not isinstance(k, int):
            raise TypeError("Taylor powers are integer only")
        if k < 0:
            return self._inv() ** (-k)
        out = Taylor([1.0] + [0.0] * self.order)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def _exp(self):
        n = self.order
        out = [dual.exp(self.c[0])]
        for k in range(1, n + 1):
            acc = 0.0
            for j in range(1, k + 1):
                acc = acc + j * self.c[j] * out[k - j]
            out.append(acc / k)
        return Taylor(out)

    def _sincos(self):
        n = self.order
        s = [dual.sin(self.c[0])]
        co = [dual.cos(self.c[0])]
        for k in range(1, n + 1):
            sa = 0.0
            ca = 0.0
            for j in range(1, k + 1):
                sa = sa + j * self.c[j] * co[k - j]
                ca = ca + j * self.c[j] * s[k - j]
            s.append(sa / k)
            co.append(-ca / k)
        return Taylor(s), Taylor(co)

    def _sin(self):
        return self._sincos()[0]

    def _cos(self):
        return self._sincos()[1]

    def _tan(self):
        s, c = self._sincos()
        return s / c

    def _sqrt(self):
        n = self.order
        r0 = dual.sqrt(self.c[0])
        out = [r0]
        for k in range(1, n + 1):
            acc = self.c[k]
            for j in range(1, k):
                acc = acc - out[j] * out[k - j]
            out.append(acc / (2.0 * r0))
        return Taylor(out)

    def _arctan(self):
        n = self.order
        w = Taylor([1.0] + [0.0] * n) + self * self  # 1 + u^2
        du = Taylor([(j + 1) * self.c[j + 1] for j in range(n)] + [0.0])
        p = du * w._inv()
        out = [dual.arctan(self.c[0])]
        for k in range(1, n + 1):
            out.append(p.c[k - 1] / k)
        return Taylor(out)


# ----------------------------------------------------------------------
# Solution fields


_FACT = [1.0]
for _i in range(1, 16):
    _FACT.append(_FACT[-1] * _i)


class SolutionField:
    """Gridded or closed-form u(x, t) exposing jet samples."""

    def __init__(self, grid, times, frames=None, expression=None, provenance=None):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.frames = None if frames is None else np.asarray(frames, dtype=float)
        self.expression = expression
        self.provenance = dict(provenance or {})
        if (frames is None) == (expression is None):
            raise PdeError("a field is either NUMERIC (frames) or EXACT (expression)")
        self.provenance.setdefault("type", "EXACT" if expression is not None else "NUMERIC")

    @property
    def kind(self):
        return self.provenance["type"]

    def domain(self):
        return (self.grid.x_min, self.grid.x_max), (float(self.times[0]), float(self.times[-1]))

    # -- EXACT sampling -------------------------------------------------
    def _exact_env(self, x, t, order):
        x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        zero = np.zeros_like(x)
        td = dual.Dual(1, t + zero, (1.0 + zero,))
        tx = Taylor([x, 1.0 + zero] + [zero] * (order - 1)) if order >= 1 else Taylor([x])
        tt = Taylor([td] + [zero] * order)
        u = self.expression({"x": tx, "t": tt})
        if not isinstance(u, Taylor):
            u = Taylor([u] + [zero] * order)
        zs, ws, vs = [], [], []
        for i in range(order + 1):
            ci = u.c[i]
            if isinstance(ci, dual.Dual):
                zs.append(ci.val * _FACT[i])
                if i == 0:
                    ws.append(ci.grad[0])
                if i == 1:
                    vs.append(ci.grad[0] * _FACT[1])
            else:
                zs.append(ci * _FACT[i] + zero)
                if i == 0:
                    ws.append(zero)
                if i == 1:
                    vs.append(zero)
        return zs, ws, vs

    def sample_env(self, x, t, order):
        """Vectorized jet environment {z0.., w1, v1} at (x array, scalar t)."""
        if self.kind == "EXACT":
            if order < 1:
                raise PdeError("order >= 1 required (w1, v1 are part of a jet sample)")
            zs, ws, vs = self._exact_env(x, t, order)
            env = {f"z{i}": zs[i] for i in range(order + 1)}
            env["w1"] = ws[0]
            env["v1"] = vs[0]
            xb, tb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
            env["x"] = xb
            env["t"] = tb
            return env
        if np.ndim(t) > 0 and np.size(t) > 1:
            return self._numeric_env_multi_t(x, t, order)
        return self._numeric_env(x, float(np.asarray(t).reshape(-1)[0]) if np.ndim(t) else t, order)

    # -- NUMERIC sampling -------------------------------------------------
    def _x_weights(self, x):
        """Bracketing node indices and blend weight for periodic sampling."""
        g = self.grid
        idx = (np.asarray(x, dtype=float) - g.x_min) / g.dx
        i0 = np.floor(idx).astype(int)
        w = idx - i0
        snap = np.abs(w - np.rint(w)) < 1e-9
        w = np.where(snap, np.rint(w), w)
        return np.mod(i0, g.nx), np.mod(i0 + 1, g.nx), w

    def _time_index(self, t):
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-8 * max(1.0, abs(t)):
            raise PdeError(f"no stored snapshot near t = {t}")
        return j

    def _frame_at(self, t):
        """Snapshot at t, linearly interpolated between stored frames.

        Exact at snapshot times; otherwise 2nd order in the snapshot
        spacing (declared in provenance as time_interpolation)."""
        ts = self.times
        j = int(np.argmin(np.abs(ts - t)))
        if abs(ts[j] - t) <= 1e-9 * max(1.0, abs(t)):
            return self.frames[j]
        if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
            raise PdeError(f"t = {t} outside the stored time range")
        j = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self.frames[j] + w * self.frames[j + 1]

    def _numeric_env(self, x, t, order):
        max_order = int(self.provenance.get("max_jet_order", 5))
        if order > max_order:
            raise PdeError(f"NUMERIC field supports jet order <= {max_order}")
        g = self.grid
        i0, i1, w = self._x_weights(x)
        acc = int(self.provenance.get("space_accuracy", 4))
        frame = self._frame_at(t)
        derivs = [frame]
        for m in range(1, order + 1):
            derivs.append(periodic_derivative(frame, g.dx, m, acc=acc))
        w1_all, v1_all = self._time_slopes_at(t)
        im = np.mod(i0 - 1, g.nx)
        i2 = np.mod(i0 + 2, g.nx)

        def at(arr):
            # exact at nodes; periodic Catmull-Rom (C^1, 3rd order) off-node
            pm, p0, p1, p2 = arr[im], arr[i0], arr[i1], arr[i2]
            return p0 + 0.5 * w * (
                (p1 - pm)
                + w * ((2.0 * pm - 5.0 * p0 + 4.0 * p1 - p2)
                       + w * (3.0 * (p0 - p1) + p2 - pm))
            )

        env = {f"z{m}": at(derivs[m]) for m in range(order + 1)}
        env["w1"] = at(w1_all)
        env["v1"] = at(v1_all)
        env["x"] = np.asarray(x, dtype=float) + 0.0 * w
        env["t"] = np.full_like(np.asarray(env["x"], dtype=float), t)
        return env

    def _numeric_env_multi_t(self, x, t, order):
        """Array-t sampling: group by time level, one _numeric_env per level."""
        xb, tb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
        keys = [f"z{m}" for m in range(order + 1)] + ["w1", "v1", "x", "t"]
        out = {k: np.empty(xb.shape) for k in keys}
        for tv in np.unique(tb):
            mask = tb == tv
            env = self._numeric_env(xb[mask], float(tv), order)
            for k in keys:
                out[k][mask] = env[k]
        return out

    def _time_slopes_at(self, t):
        """(w1, v1) arrays at time t: centered stencils at snapshots, the
        bracketing divided difference between them."""
        ts = self.times
        j = int(np.argmin(np.abs(ts - t)))
        if abs(ts[j] - t) <= 1e-9 * max(1.0, abs(t)):
            return self._time_slopes(j)
        j = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        du = (self.frames[j + 1] - self.frames[j]) / (ts[j + 1] - ts[j])
        acc = int(self.provenance.get("space_accuracy", 4))
        return du, periodic_derivative(du, self.grid.dx, 1, acc=acc)

    def _time_slopes(self, j):
        ts, fr = self.times, self.frames
        if len(ts) < 2:
            raise PdeError("NUMERIC field needs at least two snapshots for w1")
        if 0 < j < len(ts) - 1:
            dt = ts[j + 1] - ts[j - 1]
            du = (fr[j + 1] - fr[j - 1]) / dt
        elif j == 0:
            dt = ts[1] - ts[0]
            du = (-3.0 * fr[0] + 4.0 * fr[1] - fr[2]) / (2.0 * dt) if len(ts) > 2 else (fr[1] - fr[0]) / dt
        else:
            dt = ts[-1] - ts[-2]
            du = (3.0 * fr[-1] - 4.0 * fr[-2] + fr[-3]) / (2.0 * dt) if len(ts) > 2 else (fr[-1] - fr[-2]) / dt
        acc = int(self.provenance.get("space_accuracy", 4))
        return du, periodic_derivative(du, self.grid.dx, 1, acc=acc)

    def discrete_zt_env(self, t, upto):
        """Mixed derivatives z_{k,t} measured from the stored snapshots.

        Time slopes are centered (2nd order) where possible; the returned
        arrays are indexed by grid node.  Only meaningful for NUMERIC
        fields: it quantifies how well the march satisfies the equation.
        """
        if self.kind != "NUMERIC":
            raise PdeError("discrete z_{k,t} applies to NUMERIC fields")
        j = self._time_index(t)
        du, _ = self._time_slopes(j)
        acc = int(self.provenance.get("space_accuracy", 4))
        return [periodic_derivative(du, self.grid.dx, k, acc=acc) if k else du for k in range(upto + 1)]

    def sample_jet_point(self, x, t, order):
        (xlo, xhi), (tlo, thi) = self.domain()
        if not (xlo - 1e-12 <= x <= xhi + 1e-12) or not (tlo - 1e-9 <= t <= thi + 1e-9):
            raise PdeError(f"(x, t) = ({x}, {t}) outside the field domain")
        env = self.sample_env(np.array([x]), t, order)
        return JetPoint(
            x=float(x),
            t=float(t),
            z=tuple(float(env[f"z{i}"][0]) for i in range(order + 1)),
            w=(float(np.atleast_1d(env["w1"])[0]),),
            v=(float(np.atleast_1d(env["v1"])[0]),),
        )


def sample_jet(field: SolutionField, x, t, order):
    """JetPoint with z_0..z_order, w_1, v_1 sampled from the field."""
    return field.sample_jet_point(x, t, order)


def exact_field(src_or_expr, grid: Grid1D, t_span=(-10.0, 10.0), name="exact") -> SolutionField:
    e = parse_expression(src_or_expr, ["x", "t"]) if isinstance(src_or_expr, str) else src_or_expr
    return SolutionField(
        grid,
        [t_span[0], t_span[1]],
        expression=e,
        provenance={"type": "EXACT", "name": name, "jets": "analytic (Taylor in x, dual in t)"},
    )


def exact_sine_gordon_kink(eta, x, t):
    """One-soliton u = 4 arctan exp(eta x + t/eta); branch-stable for large args."""
    if eta == 0:
        raise PdeError("eta != 0 required")
    th = eta * np.asarray(x, dtype=float) + np.asarray(t, dtype=float) / eta
    pos = th >= 0
    out = np.where(
        pos,
        2.0 * np.pi - 4.0 * np.arctan(np.exp(-np.abs(th))),
        4.0 * np.arctan(np.exp(-np.abs(th))),
    )
    return out if out.shape else float(out)


def kink_field(eta, grid: Grid1D, t_span=(-6.0, 6.0)) -> SolutionField:
    src = f"4*arctan(exp({eta!r}*x + t/{eta!r}))"
    f = exact_field(src, grid, t_span, name=f"sine-gordon kink eta={eta}")
    f.provenance["eta"] = eta
    return f


# ----------------------------------------------------------------------
# Method of lines


def _space_ops(grid, space):
    if space == "spectral":
        return lambda u, m: spectral_derivative(grid, u, m)
    acc = int(space)
    return lambda u, m: periodic_derivative(u, grid.dx, m, acc=acc)


def solve_mol(
    equation,
    grid: Grid1D,
    u0,
    t_max,
    dt,
    space="spectral",
    n_save=33,
    cfl_coefficient=0.5,
) -> SolutionField:
    """March u_t - u_xxt = lam u^2 u_xxx + G (or sine-Gordon) to t_max.

    `equation` is a Family (any form-(7) branch, or SINE_GORDON which is
    marched in light-cone form) or the string "novikov".
    """
    if isinstance(equation, str):
        from .catalog import PRESETS

        equation = PRESETS[equation]()
    fam = equation
    u = np.asarray(u0, dtype=float).copy()
    if len(u) != grid.nx:
        raise PdeError("u0 length must match grid.nx")
    if not np.all(np.isfinite(u)):
        raise PdeError("u0 must be finite")
    nsteps = int(round(t_max / dt))
    if abs(nsteps * dt - t_max) > 1e-9 * max(1.0, abs(t_max)):
        raise PdeError("t_max must be an integer number of steps")
    deriv = _space_ops(grid, space)
    sg = fam.params.branch == Branch.SINE_GORDON

    if sg:
        order = 4 if space == "spectral" else int(space)

        def rhs(uu):
            return cumulative_integral(np.sin(uu), grid.dx, order=order)

    else:
        lam = fam.params.lam
        cfl = cfl_coefficient * grid.dx / max(1.0, abs(lam) * float(np.max(u * u)))
        if dt > cfl:
            raise CflError(f"dt = {dt} exceeds the heuristic cap {cfl:.3e} (= c*dx/max(1, |lam| max u^2))")

        def rhs(uu):
            env = {
                "z0": uu,
                "z1": deriv(uu, 1),
                "z2": deriv(uu, 2),
                "z3": deriv(uu, 3),
                "x": grid.nodes(),
                "t": 0.0,
            }
            return helmholtz_invert(grid, lam * uu * uu * env["z3"] + fam.G_fn(env))

    save_every = max(1, nsteps // max(1, n_save - 1))
    times = [0.0]
    frames = [u.copy()]
    t = 0.0
    for k in range(1, nsteps + 1):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = k * dt
        amp = float(np.max(np.abs(u)))
        if not np.isfinite(amp) or amp > BLOWUP_CAP:
            raise BlowUpError(t, amp)
        if k % save_every == 0 or k == nsteps:
            times.append(t)
            frames.append(u.copy())
    return SolutionField(
        grid,
        times,
        frames=np.array(frames),
        provenance={
            "type": "NUMERIC",
            "equation": fam.name,
            "space": space,
            "space_accuracy": 4 if space == "spectral" else int(space),
            "dt": dt,
            "scheme": "RK4 + spectral Helmholtz inverse" if not sg else "RK4 light-cone quadrature",
            "max_jet_order": 5,
            "off_node_sampling": "periodic linear in x, linear in t (2nd order)",
        },
    )


# ----------------------------------------------------------------------
# Field files


_MAGIC = b"PSSF"


def save_field(field: SolutionField, path):
    if field.kind != "NUMERIC":
        raise PdeError("only NUMERIC fields serialize to the PSSF format")
    g = field.grid
    S = len(field.times)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", 1, g.nx, S))
        fh.write(struct.pack("<dd", g.x_min, g.x_max))
        fh.write(np.asarray(field.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(field.frames, dtype="<f8").tobytes())


def load_field(path) -> SolutionField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise PdeError(f"bad magic {magic!r}")
        version, nx, S = struct.unpack("<III", fh.read(12))
        if version != 1:
            raise PdeError(f"unsupported version {version}")
        x_min, x_max = struct.unpack("<dd", fh.read(16))
        times = np.frombuffer(fh.read(8 * S), dtype="<f8")
        data = np.frombuffer(fh.read(8 * S * nx), dtype="<f8").reshape(S, nx)
    return SolutionField(
        Grid1D(x_min, x_max, nx),
        times,
        frames=data,
        provenance={"type": "NUMERIC", "loaded_from": str(path), "max_jet_order": 5},
    )


def export_csv(field: SolutionField, path):
    if field.kind != "NUMERIC":
        raise PdeError("CSV export applies to NUMERIC fields")
    xs = field.grid.nodes()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,t,u\n")
        for j, t in enumerate(field.times):
            for i, x in enumerate(xs):
                fh.write(f"{float(x)!r},{float(t)!r},{float(field.frames[j, i])!r}\n")
