"""Cell-cascade scale selection and series diagnostics for loss of regularity.

A cascade is a family of disjoint cubes Q_n shrinking double-exponentially
(side lambda_n = e^{-e^n}) with time scales tau_n = 1/(e^n Theta(e^n)) tied to
a growth function Theta.  The per-cell velocity u_n has W^{1,p} norm at most
lambda_n^{d/p}/tau_n, and the construction works because four series stay
summable while the H^s lower-bound series diverges.  This module builds the
family, audits all five series, and carries the integral-test machinery that
controls the gradient series by p*Theta(p).

Scales below n = 6 underflow float64, so every series works in log space and
exponentials are taken only where representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .growth import GrowthFunction, eval_growth, eval_growth_log_arg

# Partial sums beyond this are reported as diverging.
DIVERGENCE_THRESHOLD = 1e12
_EXP_MAX = 709.0


def _exp_or_inf(x: float) -> float:
    return math.exp(x) if x < _EXP_MAX else math.inf


@dataclass(frozen=True)
class CellFamily:
    """Disjoint cube cascade: scales, time scales, centers, amplitude weights.

    log_lambda[i] = -e^{n} and log_tau[i] = -(n + log Theta(e^n)) for cell
    n = i+1; lam/tau/gamma expose float64 values (0.0 where underflowed).
    Centers sit on the first axis at 3*sum_{k>n} lambda_k + 2*lambda_n, which
    leaves a gap of at least lambda_n between consecutive cubes and packs
    everything inside [-1/2, 1/2]^d while marching toward the origin.
    """

    theta: GrowthFunction
    N: int
    d: int
    sigma: float
    log_lambda: np.ndarray
    log_tau: np.ndarray
    centers: np.ndarray
    weights_active: bool

    @property
    def lam(self) -> np.ndarray:
        with np.errstate(under="ignore"):
            return np.exp(self.log_lambda)

    @property
    def tau(self) -> np.ndarray:
        with np.errstate(under="ignore"):
            return np.exp(self.log_tau)

    @property
    def gamma(self) -> np.ndarray:
        if not self.weights_active:
            return np.ones(self.N)
        with np.errstate(under="ignore"):
            return np.exp(self.sigma * self.log_lambda)

    @property
    def log_gamma(self) -> np.ndarray:
        if not self.weights_active:
            return np.zeros(self.N)
        return self.sigma * self.log_lambda


def make_cells(theta: GrowthFunction, N: int, d: int, sigma: float) -> CellFamily:
    """Build the cascade lambda_n = e^{-e^n}, tau_n^{-1} = e^n Theta(e^n), n = 1..N.

    Amplitude weights gamma_n = lambda_n^sigma switch on for sigma >= d/2
    (needed to keep the initial H^sigma norm finite there); below d/2 they are 1.
    """
    if N < 1:
        raise ValueError(f"need at least one cell, got N={N}")
    if d < 2:
        raise ValueError(f"cascade lives in dimension >= 2, got d={d}")
    if sigma <= 0.0:
        raise ValueError(f"regularity index sigma must be positive, got {sigma}")
    ns = np.arange(1, N + 1, dtype=float)
    log_lambda = -np.exp(ns)
    log_theta = np.array([math.log(eval_growth_log_arg(theta, n)) for n in ns])
    log_tau = -(ns + log_theta)
    with np.errstate(under="ignore"):
        lam = np.exp(log_lambda)
    # Tail sums of representable scales; underflowed cells contribute nothing.
    tail = np.concatenate([np.cumsum(lam[::-1])[::-1][1:], [0.0]])
    centers = np.zeros((N, d))
    centers[:, 0] = 3.0 * tail + 2.0 * lam
    return CellFamily(
        theta=theta,
        N=N,
        d=d,
        sigma=sigma,
        log_lambda=log_lambda,
        log_tau=log_tau,
        centers=centers,
        weights_active=sigma >= d / 2,
    )


@dataclass(frozen=True)
class SeriesReport:
    """Terms and partial sums of one cascade series, with a verdict.

    For blowup the verdict is keyed to simplified_* (the divergence
    lower-bound terms exp(2sct * e^n Theta(e^n)) with the bounded prefactor
    dropped); terms/partial_sums always hold the raw series.
    """

    which: str
    terms: tuple[float, ...]
    partial_sums: tuple[float, ...]
    verdict: str
    bound: float | None = None
    simplified_terms: tuple[float, ...] = ()
    simplified_partial_sums: tuple[float, ...] = ()


def _converged_verdict(partial: np.ndarray) -> str:
    if len(partial) == 1:
        return "bounded_by"
    tail = abs(partial[-1] - partial[-2])
    return "bounded_by" if tail <= 1e-15 * max(1.0, abs(partial[-1])) else "inconclusive"


def series_condition(
    cells: CellFamily,
    which: str,
    p: float | None = None,
    s: float | None = None,
    t: float | None = None,
    c: float = 1.0,
    bound_C: float = 1.0,
) -> SeriesReport:
    """Partial sums of one of the cascade's defining series.

    which: "sum_lambda" (scale series), "grad_lp" (velocity gradient series,
    compared against bound_C * p * Theta(p)), "init_sobolev" (initial H^sigma
    series), or "blowup" (H^s lower-bound series; diverging when its
    simplified lower-bound partial sums pass 1e12 within the stored cells).
    """
    ns = np.arange(1, cells.N + 1, dtype=float)
    e_n = np.exp(ns)
    log_theta_en = np.array([math.log(eval_growth_log_arg(cells.theta, n)) for n in ns])

    if which == "sum_lambda":
        terms = cells.lam
        partial = np.cumsum(terms)
        return SeriesReport(
            which, tuple(terms), tuple(partial), _converged_verdict(partial)
        )

    if which == "grad_lp":
        if p is None or p < 1.0:
            raise ValueError(f"grad_lp needs p >= 1, got {p}")
        log_terms = (cells.d / p) * cells.log_lambda - cells.log_tau
        terms = np.array([_exp_or_inf(v) for v in log_terms])
        partial = np.cumsum(terms)
        bound = bound_C * p * eval_growth(cells.theta, p)
        verdict = (
            "bounded_by"
            if _converged_verdict(partial) == "bounded_by" and partial[-1] <= bound
            else "inconclusive"
        )
        return SeriesReport(which, tuple(terms), tuple(partial), verdict, bound=bound)

    if which == "init_sobolev":
        # Per-cell H^sigma norms gamma_n * lambda_n^{d/2 - sigma}.
        log_terms = (cells.d / 2.0 - cells.sigma) * cells.log_lambda + cells.log_gamma
        terms = np.array([_exp_or_inf(v) for v in log_terms])
        partial = np.cumsum(terms)
        return SeriesReport(
            which, tuple(terms), tuple(partial), _converged_verdict(partial)
        )

    if which == "blowup":
        if s is None or not 0.0 < s < 1.0:
            raise ValueError(f"blowup needs s in (0, 1), got {s}")
        if t is None or t <= 0.0 or c <= 0.0:
            raise ValueError(f"blowup needs t > 0 and c > 0, got t={t}, c={c}")
        growth_part = 2.0 * s * c * t * e_n * np.exp(log_theta_en)
        log_raw = (2.0 * s - cells.d) * e_n + growth_part
        raw = np.array([_exp_or_inf(v) for v in log_raw])
        simplified = np.array([_exp_or_inf(v) for v in growth_part])
        raw_partial = np.cumsum(raw)
        simp_partial = np.cumsum(simplified)
        verdict = (
            "diverging" if np.any(simp_partial > DIVERGENCE_THRESHOLD) else "inconclusive"
        )
        return SeriesReport(
            which,
            tuple(raw),
            tuple(raw_partial),
            verdict,
            simplified_terms=tuple(simplified),
            simplified_partial_sums=tuple(simp_partial),
        )

    raise ValueError(f"unknown series {which!r}")


# -- condition-2 integral-test machinery -----------------------------------


def _golden_max(f, lo: float, hi: float, iters: int = 200) -> tuple[float, float]:
    """Golden-section maximum of a unimodal f on [lo, hi]; returns (x*, f(x*))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if b - a < 1e-13 * max(1.0, abs(a) + abs(b)):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
    xs = [(lo, f(lo)), (x1, f1), (x2, f2), (hi, f(hi))]
    return max(xs, key=lambda q: q[1])


@dataclass(frozen=True)
class Condition2Report:
    F_max_bound: float
    integral_bound: float
    total_bound: float
    xbar_bound: float
    series_sum: float
    maximizer: float
    fmax_over_ptheta: float
    integrable: bool

    @property
    def series_within_bound(self) -> bool:
        return self.integrable and self.series_sum <= self.total_bound + 1e-9


def condition2_bound(
    theta: GrowthFunction, p: float, d: int, n_terms: int = 50
) -> Condition2Report:
    """Integral-test control of the gradient series sum_n F(e^n), F(x) = x Theta(x) e^{-dx/p}.

    The maximizer of F lies left of xbar = (C+1) p / d, so the series is at
    most the integral int_1^oo F(e^x) dx = int_e^oo Theta(z) e^{-dz/p} dz plus
    twice the peak value.  Both sides are computed independently and compared.
    """
    if p < 1.0:
        raise ValueError(f"need p >= 1, got {p}")
    if not math.isfinite(p):
        # e^{-dx/p} -> 1 and Theta is unbounded: nothing converges.
        return Condition2Report(
            F_max_bound=math.inf,
            integral_bound=math.inf,
            total_bound=math.inf,
            xbar_bound=math.inf,
            series_sum=math.inf,
            maximizer=math.inf,
            fmax_over_ptheta=math.inf,
            integrable=False,
        )

    def log_F(x: float) -> float:
        return math.log(x) + math.log(eval_growth(theta, x)) - d * x / p

    def F(x: float) -> float:
        return _exp_or_inf(log_F(x))

    xbar = (theta.constant_C + 1.0) * p / d
    x_star, f_max = _golden_max(F, 1.0, 10.0 * xbar)
    integral, err = quad(
        lambda z: eval_growth(theta, z) * math.exp(-d * z / p),
        math.e,
        math.inf,
        epsabs=1e-13,
        epsrel=1e-11,
        limit=400,
    )
    if err > 10.0 * max(1e-13, 1e-11 * abs(integral)):
        raise RuntimeError(f"integral test quadrature stalled at error {err:.2e}")
    series = sum(_exp_or_inf(n + math.log(eval_growth_log_arg(theta, float(n))) - d * math.exp(n) / p)
                 for n in range(1, n_terms + 1))
    return Condition2Report(
        F_max_bound=f_max,
        integral_bound=integral,
        total_bound=integral + 2.0 * f_max,
        xbar_bound=xbar,
        series_sum=series,
        maximizer=x_star,
        fmax_over_ptheta=f_max / (p * eval_growth(theta, p)),
        integrable=True,
    )


def f_exp_sign_changes(theta: GrowthFunction, p: float, d: int, n_grid: int = 4000) -> int:
    """Sign changes of d/dx F(e^x) on a fine grid over x in [1, 3 + (C+1)p/d].

    0 means F(e^x) is monotone, 1 means a single interior peak; anything more
    breaks the integral-test argument.
    """
    hi = 3.0 + (theta.constant_C + 1.0) * p / d
    xs = np.linspace(1.0, hi, n_grid)
    vals = np.array(
        [x + math.log(eval_growth_log_arg(theta, x)) - d * math.exp(x) / p for x in xs]
    )
    diffs = np.sign(np.diff(vals))
    diffs = diffs[diffs != 0.0]
    return int(np.sum(diffs[1:] != diffs[:-1]))


def cell_norm_bounds(
    cells: CellFamily,
    n: int,
    p: float,
    sigma: float,
    s: float,
    t: float,
    c: float = 1.0,
    Cs: float = 1.0,
    C: float = 1.0,
) -> tuple[float, float, float]:
    """Per-cell norm bounds (grad_lp_bound, init_hsigma_bound, hs_lower_bound).

    grad_lp_bound = lambda_n^{d/p}/tau_n, init_hsigma_bound = lambda_n^{d/2-sigma},
    hs_lower_bound = lambda_n^{d-2s} (Cs^2 exp(2sct/tau_n) - C/s).
    """
    if not 1 <= n <= cells.N:
        raise IndexError(f"cell index must lie in 1..{cells.N}, got {n}")
    i = n - 1
    ll = float(cells.log_lambda[i])
    lt = float(cells.log_tau[i])
    grad = _exp_or_inf((cells.d / p) * ll - lt)
    init = _exp_or_inf((cells.d / 2.0 - sigma) * ll)
    growth_exponent = 2.0 * s * c * t * math.exp(-lt)
    if growth_exponent < _EXP_MAX:
        # d - 2s > 0 here, so the lambda prefactor cannot overflow.
        hs = math.exp((cells.d - 2.0 * s) * ll) * (
            Cs**2 * math.exp(growth_exponent) - C / s
        )
    else:
        hs = _exp_or_inf((cells.d - 2.0 * s) * ll + 2.0 * math.log(Cs) + growth_exponent)
    return grad, init, hs


# -- surrogate in-cell mixer ------------------------------------------------


def _bump(y: np.ndarray) -> np.ndarray:
    """C-infinity bump on (-1/2, 1/2): exp(1 - 1/(1 - (2y)^2)), 1 at the center."""
    out = np.zeros_like(y)
    inside = np.abs(y) < 0.5
    z = 2.0 * y[inside]
    with np.errstate(under="ignore"):
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - z * z))
    return out


def _bump_prime(y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    inside = np.abs(y) < 0.5
    z = 2.0 * y[inside]
    denom = 1.0 - z * z
    with np.errstate(under="ignore"):
        out[inside] = np.exp(1.0 - 1.0 / denom) * (-2.0 * z / denom**2) * 2.0
    return out


def _mixer(s: float, y: np.ndarray) -> np.ndarray:
    """Unit-cell mixer v(s, y): alternating horizontal/vertical shear, period 1.

    Stream functions psi_h = B(y1)B(y2)sin^2(pi y2)/pi and its transpose,
    blended by cos^2/sin^2 of pi*s; divergence-free by construction, supported
    in the open unit cube, stagnation point at the center.  Extra coordinates
    (d > 2) multiply in bump factors, which leaves the divergence untouched.
    """
    y1, y2 = y[..., 0], y[..., 1]
    wh = math.cos(math.pi * s) ** 2
    wv = math.sin(math.pi * s) ** 2
    b1, b2 = _bump(y1), _bump(y2)
    db1, db2 = _bump_prime(y1), _bump_prime(y2)
    s1, s2 = np.sin(math.pi * y1) ** 2, np.sin(math.pi * y2) ** 2
    ds1, ds2 = np.sin(2.0 * math.pi * y1), np.sin(2.0 * math.pi * y2)
    v = np.zeros_like(y)
    # grad-perp of psi_h: (-d/dy2, d/dy1) psi_h
    v[..., 0] += wh * (-b1 * (db2 * s2 + b2 * math.pi * ds2) / math.pi)
    v[..., 1] += wh * (db1 * b2 * s2 / math.pi)
    # grad-perp of psi_v (the transpose pattern)
    v[..., 0] += wv * (-db2 * b1 * s1 / math.pi)
    v[..., 1] += wv * (b2 * (db1 * s1 + b1 * math.pi * ds1) / math.pi)
    if y.shape[-1] > 2:
        extra = np.ones_like(y1)
        for j in range(2, y.shape[-1]):
            extra = extra * _bump(y[..., j])
        v[..., 0] *= extra
        v[..., 1] *= extra
    return v


def surrogate_velocity(cells: CellFamily, x: np.ndarray, t: float) -> np.ndarray:
    """Cascade velocity sum_n (lambda_n/tau_n) v(t/tau_n, (x - q_n)/lambda_n).

    x has shape (..., d).  Cells whose side underflows float64 are skipped;
    they could never contain a representable point anyway.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cells.d:
        raise ValueError(f"points must have dimension {cells.d}, got shape {x.shape}")
    u = np.zeros_like(x)
    lam, tau = cells.lam, cells.tau
    for i in range(cells.N):
        if lam[i] == 0.0:
            break
        rel = (x - cells.centers[i]) / lam[i]
        inside = np.all(np.abs(rel) < 0.5, axis=-1)
        if not np.any(inside):
            continue
        amp = lam[i] / tau[i]
        u[inside] += amp * _mixer(t / tau[i], rel[inside])
    return u
