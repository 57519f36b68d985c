"""Modulus-of-continuity calculus for Osgood-type velocity fields.

A modulus is an increasing function phi: (0, m) -> (0, oo) vanishing at 0+.
The central objects are the Osgood integral

    M(z) = int_z^m dr / phi(r),

its exponential transform R(z) = exp(-M(z)) (increasing, R(m-) = 1), and the
propagated modulus

    mu_J(r) = R^{-1}(e^J R(r)),

which bounds how an initial separation r can grow under a flow whose velocity
obeys phi with accumulated seminorm J.  phi is Osgood exactly when M(0+) is
infinite; then mu_J(0+) = 0 and continuity survives propagation.

Quadrature runs in the coordinate u = log(1/r), where every built-in kind has
a smooth, slowly varying integrand (the substitution is geometric refinement
toward r = 0 in disguise); R^{-1} is a bisection in u, which is bisection with
relative bracket control in r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from scipy.integrate import quad

from .growth import GrowthFunction, eval_growth, iterated_log_exp

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-11
# Bisection width for R^{-1} in u = log(1/z), i.e. relative width in z.
INVERSE_U_TOL = 1e-12
# u beyond this makes z = e^{-u} underflow float64.
_U_MAX = 730.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to meet its tolerance."""


class BracketError(RuntimeError):
    """Root bracketing failed: the requested value is out of reach."""


class PropagationRangeError(ValueError):
    """e^J R(r) exceeds R(m-): the separation bound leaves the modulus domain."""


def associated_modulus(theta: GrowthFunction, r: float) -> float:
    """Osgood modulus attached to a growth function.

    r log(e/r) Theta(log(e/r)) for 0 < r < e^{-2}; frozen at the value
    e^{-2} * 3 * Theta(3) for r >= e^{-2}.  For admissible Theta the Osgood
    integral of this modulus diverges, which is what makes the attached
    transport problem well posed.
    """
    if r <= 0.0:
        raise ValueError(f"modulus arguments must be positive, got r={r}")
    if r >= math.exp(-2.0):
        return math.exp(-2.0) * 3.0 * eval_growth(theta, 3.0)
    ell = 1.0 - math.log(r)
    return r * ell * eval_growth(theta, ell)


@dataclass(frozen=True)
class Modulus:
    """A modulus of continuity phi on (0, m] with its Osgood flag.

    Constructors: lipschitz(), log_lipschitz(), log_n_lipschitz(n), power(alpha),
    associated(theta), custom(...).  closed_M / closed_R / closed_R_inverse
    hold the catalog forms where one exists and stay None otherwise; the
    quadrature pipeline never consults them.
    """

    kind: str
    cutoff: float
    is_osgood: bool
    depth: int = 0
    alpha: float = 0.0
    theta: GrowthFunction | None = None
    phi_fn: Callable[[float], float] | None = None

    @staticmethod
    def lipschitz() -> "Modulus":
        return Modulus(kind="lipschitz", cutoff=1.0, is_osgood=True)

    @staticmethod
    def log_lipschitz() -> "Modulus":
        return Modulus(kind="log_lipschitz", cutoff=math.exp(-1.0), is_osgood=True, depth=1)

    @staticmethod
    def log_n_lipschitz(n: int) -> "Modulus":
        """phi(r) = r log(1/r) log_2(1/r) ... log_n(1/r).

        The cutoff 1/e_n(1) makes every iterated-log factor >= 1 on (0, m).
        """
        if n < 1:
            raise ValueError(f"depth must be a positive integer, got {n}")
        cutoff = 1.0 / iterated_log_exp(n, 1.0, "exp")
        return Modulus(kind="log_n_lipschitz", cutoff=cutoff, is_osgood=True, depth=n)

    @staticmethod
    def power(alpha: float) -> "Modulus":
        """phi(r) = (1 - alpha) r^alpha: a Holder modulus, deliberately not Osgood."""
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        return Modulus(kind="power", cutoff=1.0, is_osgood=False, alpha=alpha)

    @staticmethod
    def associated(theta: GrowthFunction) -> "Modulus":
        return Modulus(kind="associated", cutoff=math.exp(-2.0), is_osgood=True, theta=theta)

    @staticmethod
    def custom(phi_fn: Callable[[float], float], cutoff: float, is_osgood: bool) -> "Modulus":
        return Modulus(
            kind="custom", cutoff=cutoff, is_osgood=is_osgood, phi_fn=phi_fn
        )

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "log_n_lipschitz":
            d["n"] = self.depth
        elif self.kind == "power":
            d["alpha"] = self.alpha
        elif self.kind == "associated":
            d["theta"] = self.theta.to_dict()
        elif self.kind == "custom":
            raise ValueError("custom moduli do not serialize")
        return d

    @staticmethod
    def from_dict(d: dict) -> "Modulus":
        kind = d.get("kind")
        if kind == "lipschitz":
            return Modulus.lipschitz()
        if kind == "log_lipschitz":
            return Modulus.log_lipschitz()
        if kind == "log_n_lipschitz":
            return Modulus.log_n_lipschitz(int(d["n"]))
        if kind == "power":
            return Modulus.power(float(d["alpha"]))
        if kind == "associated":
            return Modulus.associated(GrowthFunction.from_dict(d["theta"]))
        raise ValueError(f"unknown modulus description: {d!r}")

    # -- closed-form catalog (oracle side; None when no closed form exists) --

    @property
    def closed_M(self) -> Callable[[float], float] | None:
        if self.kind == "lipschitz":
            return lambda z: math.log(1.0 / z)
        if self.kind == "log_lipschitz":
            return lambda z: math.log(math.log(1.0 / z))
        if self.kind == "log_n_lipschitz":
            n = self.depth
            return lambda z: iterated_log_exp(n + 1, 1.0 / z, "log")
        if self.kind == "power":
            a = self.alpha
            return lambda z: (1.0 - z ** (1.0 - a)) / (1.0 - a) ** 2
        return None

    @property
    def closed_R(self) -> Callable[[float], float] | None:
        m_fn = self.closed_M
        if m_fn is None:
            return None
        return lambda z: math.exp(-m_fn(z))

    @property
    def closed_R_inverse(self) -> Callable[[float], float] | None:
        if self.kind == "lipschitz":
            return lambda y: y
        if self.kind == "log_lipschitz":
            return lambda y: math.exp(-1.0 / y)
        if self.kind == "log_n_lipschitz":
            n = self.depth
            return lambda y: 1.0 / iterated_log_exp(n, 1.0 / y, "exp")
        if self.kind == "power":
            a = self.alpha
            return lambda y: (1.0 + (1.0 - a) ** 2 * math.log(y)) ** (1.0 / (1.0 - a))
        return None


def eval_modulus(phi: Modulus, r: float) -> float:
    """phi(r) on (0, m]."""
    if not 0.0 < r <= phi.cutoff:
        raise ValueError(f"modulus domain is (0, {phi.cutoff:.6g}], got r={r}")
    if phi.kind == "lipschitz":
        return r
    if phi.kind in ("log_lipschitz", "log_n_lipschitz"):
        acc = r
        v = 1.0 / r
        for _ in range(phi.depth):
            v = math.log(v)
            acc *= v
        return acc
    if phi.kind == "power":
        return (1.0 - phi.alpha) * r ** phi.alpha
    if phi.kind == "associated":
        return associated_modulus(phi.theta, r)
    return float(phi.phi_fn(r))


def _integrand_u(phi: Modulus) -> Callable[[float], float]:
    """1/phi(e^{-u}) * e^{-u} as a function of u = log(1/r), written stably."""
    if phi.kind == "lipschitz":
        return lambda u: 1.0
    if phi.kind in ("log_lipschitz", "log_n_lipschitz"):
        n = phi.depth

        def g(u: float) -> float:
            acc = 1.0
            v = u
            for _ in range(n):
                acc *= v
                v = math.log(v)
            return 1.0 / acc

        return g
    if phi.kind == "power":
        a = phi.alpha
        return lambda u: math.exp(-(1.0 - a) * u) / (1.0 - a)
    if phi.kind == "associated":
        theta = phi.theta
        return lambda u: 1.0 / ((1.0 + u) * eval_growth(theta, 1.0 + u))
    fn = phi.phi_fn
    return lambda u: math.exp(-u) / fn(math.exp(-u))


def osgood_M(phi: Modulus, z: float) -> float:
    """M(z) = int_z^m dr/phi(r) by adaptive quadrature; decreasing in z."""
    if not 0.0 < z <= phi.cutoff:
        raise ValueError(f"osgood_M domain is (0, {phi.cutoff:.6g}], got z={z}")
    u_min = -math.log(phi.cutoff)
    u_z = -math.log(z)
    if u_z <= u_min:
        return 0.0
    val, err = quad(
        _integrand_u(phi), u_min, u_z, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400
    )
    if err > 10.0 * max(QUAD_EPSABS, QUAD_EPSREL * abs(val)):
        raise QuadratureError(
            f"Osgood integral on [{z:.3g}, {phi.cutoff:.3g}] reached error {err:.2e}"
        )
    return val


def R_of(phi: Modulus, z: float) -> float:
    """R(z) = exp(-M(z)): increasing, with R(m-) = 1."""
    return math.exp(-osgood_M(phi, z))


def R_inverse(phi: Modulus, y: float) -> float:
    """Solve R(z) = y by geometric bracketing and bisection in u = log(1/z).

    Bisecting in u keeps the bracket width relative in z, so answers near 0
    carry the same relative accuracy as answers near the cutoff.
    """
    if not 0.0 < y <= 1.0:
        raise BracketError(f"R takes values in (0, 1], cannot invert y={y}")
    target = -math.log(y)
    u_min = -math.log(phi.cutoff)
    if target == 0.0:
        return phi.cutoff
    g = _integrand_u(phi)

    def m_of(u: float) -> float:
        val, _ = quad(g, u_min, u, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400)
        return val

    u_lo, width = u_min, 1.0
    u_hi = u_min + width
    m_hi = m_of(u_hi)
    while m_hi < target:
        u_lo = u_hi
        width *= 2.0
        u_hi = u_min + width
        if u_hi > _U_MAX:
            if m_of(_U_MAX) < target:
                raise BracketError(
                    f"R^{{-1}}({y:.3g}) lies below the float64 underflow line"
                )
            u_hi = _U_MAX
            break
        m_hi = m_of(u_hi)
    while u_hi - u_lo > INVERSE_U_TOL:
        u_mid = 0.5 * (u_lo + u_hi)
        if m_of(u_mid) < target:
            u_lo = u_mid
        else:
            u_hi = u_mid
    return math.exp(-0.5 * (u_lo + u_hi))


@dataclass(frozen=True)
class PropagationContext:
    """Accumulated seminorm J = int_0^t [u(s)]_phi ds of the driving field."""

    J: float

    def __post_init__(self) -> None:
        if self.J < 0.0:
            raise ValueError(f"accumulated seminorm must be >= 0, got {self.J}")


def propagated_modulus(phi: Modulus, ctx: PropagationContext, r: float) -> float:
    """mu_J(r) = R^{-1}(e^J R(r)): the separation bound after propagation.

    Nondecreasing in r and in J; the identity at J = 0.  For non-Osgood kinds
    mu_J does not vanish as r -> 0+, which is the quantitative signature that
    propagation destroys the modulus.
    """
    if not 0.0 < r <= phi.cutoff:
        raise ValueError(f"modulus domain is (0, {phi.cutoff:.6g}], got r={r}")
    y = math.exp(ctx.J) * R_of(phi, r)
    if y > 1.0 + 1e-12:
        raise PropagationRangeError(
            f"e^J R(r) = {y:.6g} exceeds R(m-) = 1; separation bound leaves (0, m]"
        )
    return R_inverse(phi, min(y, 1.0))


def propagated_modulus_extended(phi: Modulus, J: float, r: float) -> float:
    """mu_J extended beyond its range: saturates at the cutoff m.

    Sound as an upper bound whenever separations cannot exceed m (periodic
    domains rescaled so m covers the diameter); audits use this extension so
    weights stay defined on a full shift range.
    """
    if r <= 0.0:
        raise ValueError(f"modulus arguments must be positive, got r={r}")
    if r >= phi.cutoff:
        return phi.cutoff
    y = math.exp(J) * R_of(phi, r)
    if y >= 1.0:
        return phi.cutoff
    return R_inverse(phi, y)


def mu_omega(
    n: int, t: float, seminorm_rate: float, C1: float, C2: float, r: float
) -> float:
    """Vorticity-transport modulus C1 / e_{n-1}((log_{n-1}(C2/r))^{1/exp(t*rate)}).

    For n = 1 this is the power law C1 (r/C2)^{exp(-t*rate)}; for n >= 2 the
    nested form decays slower than every power of r.  At t = 0 it reduces to
    C1 r / C2 for every n.
    """
    if n < 1:
        raise ValueError(f"depth must be a positive integer, got {n}")
    if t < 0.0 or seminorm_rate < 0.0 or C1 <= 0.0 or C2 <= 0.0 or r <= 0.0:
        raise ValueError("mu_omega needs t, rate >= 0 and C1, C2, r > 0")
    x = C2 / r
    inner = x if n == 1 else iterated_log_exp(n - 1, x, "log")
    if inner <= 0.0:
        raise ValueError(f"log_{n-1}({x:.3g}) <= 0: r too close to C2 for depth {n}")
    powed = inner ** math.exp(-t * seminorm_rate)
    denom = powed if n == 1 else iterated_log_exp(n - 1, powed, "exp")
    return C1 / denom


@dataclass(frozen=True)
class AsymptoticReport:
    r_grid: tuple[float, ...]
    mu_values: tuple[float, ...]
    holder_ratio: tuple[float, ...]
    log_ratio: tuple[float, ...]


def asymptotic_compare(
    n: int, J: float, alpha: float, a: float, r_grid: Sequence[float]
) -> AsymptoticReport:
    """Compare mu_{n,J}(r) = 1/e_{n-1}((log_{n-1}(1/r))^{1/exp(J)}) with reference moduli.

    holder_ratio = mu(r)/r^alpha grows without bound along r -> 0 (worse than
    every Holder modulus) and log_ratio = mu(r) * log(1/r)^a decays to 0
    (better than every logarithmic modulus) whenever J > 0; at J = 0 mu is the
    identity and both ratios degenerate accordingly.
    """
    if n < 2:
        raise ValueError(f"nested comparison needs depth n >= 2, got {n}")
    if not 0.0 < alpha <= 1.0 or a < 1.0:
        raise ValueError("need alpha in (0, 1] and a >= 1")
    rs = [float(r) for r in r_grid]
    if any(r2 >= r1 for r1, r2 in zip(rs, rs[1:])):
        raise ValueError("r_grid must be strictly decreasing")
    mus, holders, logs = [], [], []
    for r in rs:
        mu = mu_omega(n, 1.0, J, 1.0, 1.0, r)
        mus.append(mu)
        holders.append(mu / r**alpha)
        logs.append(mu * math.log(1.0 / r) ** a)
    return AsymptoticReport(
        r_grid=tuple(rs),
        mu_values=tuple(mus),
        holder_ratio=tuple(holders),
        log_ratio=tuple(logs),
    )
