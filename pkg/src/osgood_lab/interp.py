"""Log-interpolation inequality: frequency split, annular mollifier, assembly.

The inequality under audit bounds ||f||_{L^2}^2 by a modulus-weighted
increment functional at scale eps plus a |log eps| multiple of the
log-of-frequency split term.  Each piece is implemented separately so the
assembled constant can be watched across field families, moduli, and eps.

The mollifier follows the classical annular construction: a radial C-infinity
bump that is exactly 1 on the annulus 1/2 <= |x| <= 2/3, supported in
1/3 < |x| < 5/6, with total integral tuned to exactly 1 by adjusting the
steepness of the two smooth ramps (a one-parameter family, solved once per
dimension by bisection).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import GridField, besov_functional, increment_l2_sq, offset_lengths, spectral_norm


# -- frequency split ---------------------------------------------------------


@dataclass(frozen=True)
class FreqSplitReport:
    value: float
    l2_sq: float
    hminus1_sq: float
    nu: float
    implied_C: float


def frequency_split_report(f: GridField) -> FreqSplitReport:
    """Log-weighted spectral sum L^d sum_k |c_k|^2 / log(2 + |k|) with its audit data.

    implied_C is the constant that makes the sum equal C ||f||^2 / log(2 + nu^2)
    with nu = ||f|| / ||f||_{H^-1}; the inequality audit checks it stays bounded.
    """
    if not f.is_mean_zero:
        raise ValueError("frequency split needs a mean-zero field")
    from .fields import _k_abs  # shared wavenumber convention

    c2 = np.abs(f.spectrum) ** 2
    k = _k_abs(f)
    value = float(f.L**f.d * np.sum(c2 / np.log(2.0 + k)))
    l2_sq = spectral_norm(f, 0.0) ** 2
    hm1_sq = spectral_norm(f, -1.0) ** 2
    nu = math.sqrt(l2_sq / hm1_sq) if hm1_sq > 0.0 else math.inf
    denom = l2_sq / math.log(2.0 + nu * nu) if l2_sq > 0.0 else 0.0
    implied = value / denom if denom > 0.0 else 0.0
    return FreqSplitReport(value, l2_sq, hm1_sq, nu, implied)


def frequency_split_value(f: GridField) -> float:
    return frequency_split_report(f).value


# -- annular mollifier -------------------------------------------------------


def _smoothstep(tau: np.ndarray) -> np.ndarray:
    """C-infinity transition, 0 at tau <= 0 and 1 at tau >= 1."""
    tau = np.clip(tau, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        a = np.where(tau > 0.0, np.exp(-1.0 / np.maximum(tau, 1e-300)), 0.0)
        b = np.where(tau < 1.0, np.exp(-1.0 / np.maximum(1.0 - tau, 1e-300)), 0.0)
    return a / (a + b)


def _profile(rho: np.ndarray, kappa: float) -> np.ndarray:
    """Radial profile: 0, ramp up on [1/3,1/2], 1 on [1/2,2/3], ramp down on [2/3,5/6], 0.

    kappa powers the smoothstep ramps; larger kappa means thinner effective
    ramps and a smaller integral.
    """
    rho = np.asarray(rho, dtype=float)
    up = _smoothstep((rho - 1.0 / 3.0) / (1.0 / 6.0)) ** kappa
    down = _smoothstep((5.0 / 6.0 - rho) / (1.0 / 6.0)) ** kappa
    out = np.where(rho < 0.5, up, down)
    out[(rho <= 1.0 / 3.0) | (rho >= 5.0 / 6.0)] = 0.0
    out[(rho >= 0.5) & (rho <= 2.0 / 3.0)] = 1.0
    return out


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _profile_integral(kappa: float, d: int) -> float:
    # composite Gauss-Legendre: the ramps are C-infinity but extremely flat
    # at their ends, which makes adaptive quadrature report false roundoff
    ramps = 0.0
    for a, b in ((1.0 / 3.0, 0.5), (2.0 / 3.0, 5.0 / 6.0)):
        edges = np.linspace(a, b, 9)
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            rho = mid + half * _GL_NODES
            ramps += half * float(np.sum(_GL_WEIGHTS * _profile(rho, kappa) * rho ** (d - 1)))
    plateau = ((2.0 / 3.0) ** d - 0.5**d) / d
    return _sphere_area(d) * (ramps + plateau)


_KAPPA_LOCK = threading.Lock()
_KAPPA_CACHE: dict[int, float] = {}


def _solve_kappa(d: int) -> float:
    """Ramp steepness making the mollifier integrate to exactly 1 in dimension d."""
    with _KAPPA_LOCK:
        if d in _KAPPA_CACHE:
            return _KAPPA_CACHE[d]
        lo, hi = 1e-3, 1.0
        while _profile_integral(hi, d) > 1.0:
            hi *= 2.0
            if hi > 1e6:
                raise RuntimeError("mollifier normalization failed to bracket")
        while _profile_integral(lo, d) < 1.0:
            lo *= 0.5
            if lo < 1e-9:
                raise RuntimeError("mollifier normalization failed to bracket")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _profile_integral(mid, d) > 1.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14 * max(1.0, hi):
                break
        _KAPPA_CACHE[d] = 0.5 * (lo + hi)
        return _KAPPA_CACHE[d]


_KERNEL_LOCK = threading.Lock()
_KERNEL_CACHE: dict[tuple, np.ndarray] = {}


def mollifier_kernel(f: GridField, delta: float) -> np.ndarray:
    """Sampled psi_delta on f's grid (FFT layout), cached per (grid, delta)."""
    key = (f.d, f.n_grid, f.L, float(delta))
    with _KERNEL_LOCK:
        cached = _KERNEL_CACHE.get(key)
    if cached is not None:
        return cached
    kappa = _solve_kappa(f.d)
    n = f.n_grid
    ax = np.fft.fftfreq(n, d=1.0 / n) * f.spacing  # signed coordinates around 0
    grids = np.meshgrid(*[ax] * f.d, indexing="ij")
    rho = np.sqrt(sum(g * g for g in grids)) / delta
    kernel = _profile(rho, kappa) / delta**f.d
    # discrete unit mass so convolution preserves constants exactly; the
    # kappa solve already puts the continuum integral at 1, so this factor
    # corrects only the sampling error
    kernel /= kernel.sum() * f.spacing**f.d
    kernel.setflags(write=False)
    with _KERNEL_LOCK:
        _KERNEL_CACHE[key] = kernel
    return kernel


@dataclass(frozen=True)
class MollifierReport:
    remainder_sq: float
    shell_functional: float

    @property
    def ratio(self) -> float:
        if self.shell_functional == 0.0:
            return 0.0
        return self.remainder_sq / self.shell_functional


def mollifier_transform_at(f: GridField, delta: float) -> np.ndarray:
    """psi_delta-hat on f's wavenumber grid (continuum normalization)."""
    kernel = mollifier_kernel(f, delta)
    return np.fft.fftn(kernel) * f.spacing**f.d


def mollifier_remainder(f: GridField, delta: float) -> MollifierReport:
    """||f - f * psi_delta||^2 next to the increment functional over the shell.

    The shell is delta/3 <= |h| <= delta (the kernel's support lies inside
    it), weighted by |h|^{-d}; the remainder is computed spectrally as
    L^d sum |c_k|^2 (1 - psi_delta-hat(k))^2.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"mollifier scale must lie in (0, 1), got {delta}")
    if delta < 3.0 * f.spacing:
        raise ValueError(
            f"scale {delta} below grid resolution (need >= {3.0 * f.spacing:.4g})"
        )
    psi_hat = mollifier_transform_at(f, delta)
    c2 = np.abs(f.spectrum) ** 2
    remainder = float(f.L**f.d * np.sum(c2 * np.abs(1.0 - psi_hat) ** 2))
    S = increment_l2_sq(f)
    habs = offset_lengths(f)
    mask = (habs >= delta / 3.0) & (habs <= delta)
    cell = f.spacing**f.d
    shell = float(cell * np.sum(S[mask] / habs[mask] ** f.d))
    return MollifierReport(remainder, shell)


# -- assembled inequality ----------------------------------------------------


@dataclass(frozen=True)
class InterpReport:
    lhs: float
    term_besov: float
    term_log: float
    implied_C: float
    epsilon: float


def interpolation_sides(
    f: GridField, mu: Callable[[float], float], epsilon: float
) -> InterpReport:
    """Both sides of the interpolation inequality at scale epsilon.

    lhs = ||f||^2; term_besov = mu(eps) * (increment functional weighted by
    mu, offsets up to 1); term_log = |log eps| ||f||^2 / log(2 + ||f||^2 /
    ||f||_{H^-1}^2).  implied_C = lhs / (term_besov + term_log).
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not f.is_mean_zero:
        raise ValueError("interpolation audit needs a mean-zero field")
    lhs = spectral_norm(f, 0.0) ** 2
    functional = besov_functional(f, mu, 1.0)
    term_besov = float(mu(epsilon)) * functional
    hm1_sq = spectral_norm(f, -1.0) ** 2
    ratio = lhs / hm1_sq if hm1_sq > 0.0 else math.inf
    term_log = abs(math.log(epsilon)) * lhs / math.log(2.0 + ratio)
    denom = term_besov + term_log
    implied = lhs / denom if denom > 0.0 else 0.0
    return InterpReport(lhs, term_besov, term_log, implied, epsilon)


@dataclass(frozen=True)
class EpsilonChoice:
    """Scale choice eps = (2 + dist_sq/rate_value)^gamma.

    log_ratio carries |log eps| / log(2 + dist_sq/rate_value) = |gamma| in its
    algebraically cancelled form, so the identity is exact by construction.
    """

    epsilon: float
    log_ratio: float
    base: float


def choose_epsilon(dist_sq: float, rate_value: float, gamma: float) -> EpsilonChoice:
    if gamma >= 0.0:
        raise ValueError(f"exponent must be negative, got {gamma}")
    if dist_sq < 0.0:
        raise ValueError(f"squared distance must be nonnegative, got {dist_sq}")
    if rate_value <= 0.0:
        raise ValueError(f"rate value must be positive, got {rate_value}")
    base = 2.0 + dist_sq / rate_value
    return EpsilonChoice(base**gamma, abs(gamma), base)
