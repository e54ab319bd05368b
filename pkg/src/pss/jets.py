"""Jet coordinates, exact total derivatives, and on-shell prolongation.

A jet point stores the values (x, t, z_0..z_K, w_1..w_M, v_1..v_N) where
z_i is the i-th x-derivative of u, w_j the j-th t-derivative of u and
v_k the k-th t-derivative of u_x (z_0 = u and z_1 = v_0 = u_x are the
shared identifications; v_0 is never stored separately).

The total x-derivative of a differential function h is

    D_x h = h_x + sum_i h_{z_i} z_{i+1}

plus, in principle, h_{w_j} w_{j,x} and h_{v_k} v_{k,x} terms.  Values for
those mixed coordinates are never available off-shell, so operations here
reject expressions that depend on w_j or v_k rather than guess.

On-shell (u_t - u_xxt = F with F = F(z_0..z_3)) the mixed derivatives of
the z-coordinates follow the prolongation rule

    z_{2q,t}   = z_{0,t} - sum_{i<q} D_x^{2i} F,
    z_{2q+1,t} = z_{1,t} - sum_{i<q} D_x^{2i+1} F,

with z_{0,t} = w_1 and z_{1,t} = v_1.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import dual

__all__ = [
    "JetError",
    "MissingJetCoordinate",
    "JetPoint",
    "EvalResult",
    "ProlongedJet",
    "JetFunction",
    "eval_with_partials",
    "total_derivative_x",
    "prolong_onshell",
    "total_derivative_t_onshell",
    "dx_env",
    "dt_env_onshell",
    "prolong_env",
]


class JetError(ValueError):
    pass


class MissingJetCoordinate(JetError):
    pass


@dataclass(frozen=True)
class JetPoint:
    """Values of the jet coordinates at one space-time point."""

    x: float = 0.0
    t: float = 0.0
    z: tuple = (0.0,)
    w: tuple = ()
    v: tuple = ()

    def __post_init__(self):
        if len(self.z) < 1:
            raise JetError("z must carry at least z0")

    @property
    def K(self):
        return len(self.z) - 1

    @property
    def M(self):
        return len(self.w)

    @property
    def N(self):
        return len(self.v)

    def env(self):
        e = {"x": self.x, "t": self.t}
        for i, zi in enumerate(self.z):
            e[f"z{i}"] = zi
        for j, wj in enumerate(self.w, start=1):
            e[f"w{j}"] = wj
        for k, vk in enumerate(self.v, start=1):
            e[f"v{k}"] = vk
        return e


@dataclass(frozen=True)
class EvalResult:
    value: float
    partials: dict


@dataclass(frozen=True)
class ProlongedJet:
    """A jet point together with the on-shell mixed derivatives z_{k,t}."""

    point: JetPoint
    zt: tuple  # zt[k] = z_{k,t} for k = 0..upto


class JetFunction:
    """A callable over a jet environment with a declared variable set."""

    def __init__(self, fn, free, name=""):
        self._fn = fn
        self.free = frozenset(free)
        self.name = name

    def __call__(self, env):
        return self._fn(env)

    def __repr__(self):
        return f"JetFunction({self.name or '?'})"


def _free_of(h):
    free = getattr(h, "free", None)
    if free is None:
        raise TypeError("expected an Expression or JetFunction with a .free set")
    return free


def _zindex(name):
    if name[0] == "z" and name[1:].isdigit():
        return int(name[1:])
    return None


def _require(env, name):
    if name not in env:
        raise MissingJetCoordinate(f"jet coordinate {name} is required but absent")
    return env[name]


def eval_with_partials(e, p):
    """Value and exact first partials of `e` at jet point `p`."""
    env = p.env()
    missing = [nm for nm in e.variables if nm not in env]
    if missing:
        raise MissingJetCoordinate(f"jet point lacks {missing}")
    value, partials = e.with_partials(env)
    return EvalResult(value, partials)


# ----------------------------------------------------------------------
# Total derivatives on plain environments (scalars or arrays)


def _reject_mixed(free, what):
    bad = sorted(nm for nm in free if nm[0] in "wv" and nm[1:].isdigit())
    if bad:
        raise JetError(
            f"{what} of an expression depending on {bad} needs off-shell "
            "w_j,x / v_k,x values, which are never available; rejected"
        )


def dx_env(h, env, free=None):
    """D_x h evaluated on an environment."""
    free = _free_of(h) if free is None else free
    _reject_mixed(free, "total x-derivative")
    names = [nm for nm in free if nm == "x" or _zindex(nm) is not None]
    if "x" not in names:
        names.append("x")
    names.sort()
    base = dict(env)
    base.setdefault("x", 0.0)
    for nm in names:
        _require(base, nm)
    lvl, seeded = dual.seed(base, names)
    r = h(seeded)
    _, grads = dual.value_grad(r, lvl, len(names))
    by = dict(zip(names, grads))
    out = by.get("x", 0.0)
    for nm in names:
        i = _zindex(nm)
        if i is not None:
            g = by[nm]
            if isinstance(g, float) and g == 0.0:
                continue
            out = out + g * _require(env, f"z{i + 1}")
    return out


def _dx_function(h):
    """D_x as an operator: returns a JetFunction one jet order higher."""
    free = _free_of(h)
    _reject_mixed(free, "total x-derivative")
    new_free = set(free) | {"x"}
    for nm in free:
        i = _zindex(nm)
        if i is not None:
            new_free.add(f"z{i + 1}")
    return JetFunction(lambda env: dx_env(h, env), new_free, name=f"Dx({getattr(h, 'name', '?')})")


def dx_power_values(F, env, kmax):
    """Values of F, D_x F, ..., D_x^kmax F on an environment."""
    out = []
    fn = F
    for _ in range(kmax + 1):
        out.append(fn(env))
        fn = _dx_function(fn)
    return out


def prolong_env(env, F, upto):
    """On-shell z_{k,t} for k = 0..upto as a list, on an environment."""
    if upto < 0:
        raise JetError("prolongation order must be >= 0")
    zt = [_require(env, "w1")]
    if upto >= 1:
        zt.append(_require(env, "v1"))
    if upto >= 2:
        dxf = dx_power_values(F, env, max(0, upto - 2))
        acc_even = 0.0
        acc_odd = 0.0
        for k in range(2, upto + 1):
            if k % 2 == 0:
                acc_even = acc_even + dxf[k - 2]
                zt.append(zt[0] - acc_even)
            else:
                acc_odd = acc_odd + dxf[k - 2]
                zt.append(zt[1] - acc_odd)
    return zt


def dt_env_onshell(h, env, zt, free=None):
    """D_t h on an environment, given the mixed derivatives zt[k] = z_{k,t}."""
    free = _free_of(h) if free is None else free
    names = sorted(free | {"t"})
    base = dict(env)
    base.setdefault("t", 0.0)
    for nm in names:
        _require(base, nm)
    lvl, seeded = dual.seed(base, names)
    r = h(seeded)
    _, grads = dual.value_grad(r, lvl, len(names))
    by = dict(zip(names, grads))
    out = by.get("t", 0.0)
    for nm in names:
        g = by[nm]
        if isinstance(g, float) and g == 0.0:
            continue
        i = _zindex(nm)
        if i is not None:
            if i >= len(zt):
                raise MissingJetCoordinate(f"prolongation does not reach z{i},t")
            out = out + g * zt[i]
        elif nm[0] == "w" and nm[1:].isdigit():
            out = out + g * _require(env, f"w{int(nm[1:]) + 1}")
        elif nm[0] == "v" and nm[1:].isdigit():
            out = out + g * _require(env, f"v{int(nm[1:]) + 1}")
    return out


# ----------------------------------------------------------------------
# JetPoint-level operations


def total_derivative_x(h, p):
    """D_x h at jet point p: h_x + sum_i h_{z_i} z_{i+1}."""
    return dx_env(h, p.env())


def prolong_onshell(p, F, upto):
    """Extend p with the on-shell mixed derivatives z_{k,t}, k <= upto."""
    ffree = _free_of(F)
    for nm in ffree:
        i = _zindex(nm)
        if nm not in ("x", "t") and i is None:
            raise JetError(f"F may depend on z0..z3 only, found {nm}")
        if i is not None and i > 3:
            raise JetError(f"F may depend on z0..z3 only, found {nm}")
    zt = prolong_env(p.env(), F, upto)
    return ProlongedJet(p, tuple(zt))


def total_derivative_t_onshell(h, p, F):
    """On-shell D_t h at jet point p for the equation u_t - u_xxt = F."""
    free = _free_of(h)
    l = max((i for i in (_zindex(nm) for nm in free) if i is not None), default=0)
    env = p.env()
    zt = prolong_env(env, F, l)
    return dt_env_onshell(h, env, zt, free=free)
