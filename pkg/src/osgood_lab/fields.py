"""Periodic grid fields: spectral norms, increment functionals, modulus audits.

Fields live on the uniform collocation grid x_i = i L/n of the d-torus
[0, L)^d.  Spectral coefficients are DFT coefficients normalized by n^{-d},
so Parseval reads ||f||_{L^2}^2 = L^d sum_k |c_k|^2, and physical wavenumbers
are |k| = 2 pi |j| / L for integer frequency vectors j in min-image form.

Increment quantities (the Besov-type weighted functional and the Lusin square
function D_s) run over nonzero grid offsets h with |h| <= h_max; the L^2 norm
of every shifted difference comes from one autocorrelation FFT, which is exact
for grid-periodic data and O(n^d log n) total.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.ndimage import map_coordinates

MEAN_ZERO_RTOL = 1e-12


@dataclass(frozen=True)
class GridField:
    """Real scalar field on a square 2^k grid over the d-torus of side L."""

    values: np.ndarray
    L: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1:
            raise ValueError("field values must be at least one-dimensional")
        n = v.shape[0]
        if any(s != n for s in v.shape):
            raise ValueError(f"grid must be square, got shape {v.shape}")
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"points per axis must be a power of two, got {n}")
        if not self.L > 0.0:
            raise ValueError(f"torus side must be positive, got {self.L}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @staticmethod
    def from_function(fn: Callable, n_grid: int, d: int = 2, L: float = 1.0) -> "GridField":
        axes = [np.arange(n_grid) * (L / n_grid)] * d
        coords = np.meshgrid(*axes, indexing="ij")
        return GridField(np.asarray(fn(*coords), dtype=float), L)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def n_grid(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return self.L / self.n_grid

    @cached_property
    def spectrum(self) -> np.ndarray:
        return np.fft.fftn(self.values) / self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def is_mean_zero(self) -> bool:
        scale = float(np.abs(self.values).max()) if self.values.size else 0.0
        return abs(self.mean) <= MEAN_ZERO_RTOL * max(1.0, scale)

    def with_values(self, values: np.ndarray) -> "GridField":
        return GridField(values, self.L)


def _int_freqs(n: int) -> np.ndarray:
    """Signed integer frequencies in FFT order: 0, 1, ..., n/2, -(n/2-1), ..., -1."""
    return np.fft.fftfreq(n, d=1.0 / n)


def _k_abs(f: GridField) -> np.ndarray:
    """Physical |k| = 2 pi |j| / L on the FFT-ordered grid."""
    axes = np.meshgrid(*[_int_freqs(f.n_grid)] * f.d, indexing="ij")
    return (2.0 * math.pi / f.L) * np.sqrt(sum(a * a for a in axes))


def offset_lengths(f: GridField) -> np.ndarray:
    """Euclidean min-image length of every grid offset, in FFT index order."""
    axes = np.meshgrid(*[np.abs(_int_freqs(f.n_grid))] * f.d, indexing="ij")
    return f.spacing * np.sqrt(sum(a * a for a in axes))


def spectral_norm(f: GridField, s: float) -> float:
    """Homogeneous Sobolev norm (sum_{k!=0} |k|^{2s}|c_k|^2 L^d)^{1/2}; s=0 keeps k=0."""
    if s < 0 and not f.is_mean_zero:
        raise ValueError("negative-order norms need a mean-zero field")
    c2 = np.abs(f.spectrum) ** 2
    if s == 0.0:
        total = float(c2.sum())
    else:
        k = _k_abs(f)
        mask = k > 0.0
        total = float(np.sum(c2[mask] * k[mask] ** (2.0 * s)))
    return math.sqrt(f.L**f.d * total)


def increment_l2_sq(f: GridField) -> np.ndarray:
    """||f(.+h) - f||_{L^2}^2 for every grid offset h, via one autocorrelation FFT."""
    F = np.fft.fftn(f.values)
    corr = np.fft.ifftn(np.abs(F) ** 2).real / f.values.size  # mean_x f(x) f(x+j)
    s = 2.0 * (corr.flat[0] - corr) * f.L**f.d
    return np.maximum(s, 0.0)


def besov_functional(f: GridField, weight: Callable[[float], float], h_max: float) -> float:
    """Weighted increment functional sum_h vol_h ||f(.+h)-f||^2 / (|h|^d w(|h|)).

    vol_h is the offset cell volume (L/n)^d; the sum runs over nonzero offsets
    with |h| <= h_max.  The weight is evaluated once per distinct offset
    length, which keeps expensive moduli affordable.
    """
    S = increment_l2_sq(f)
    habs = offset_lengths(f)
    mask = (habs > 0.0) & (habs <= h_max)
    r = habs[mask]
    uniq, inv = np.unique(r, return_inverse=True)
    w_uniq = np.array([float(weight(float(v))) for v in uniq])
    if np.any(w_uniq <= 0.0) or not np.all(np.isfinite(w_uniq)):
        raise ValueError("weight must be positive and finite on (0, h_max]")
    cell = f.spacing**f.d
    return float(cell * np.sum(S[mask] / (r**f.d * w_uniq[inv])))


def lusin_Ds(f: GridField, s: float, h_max: float) -> GridField:
    """Pointwise square function D_s f(x) = (sum_h vol_h |f(x+h)-f(x)|^2/|h|^{d+2s})^{1/2}.

    Its grid L^2 norm squared equals besov_functional(f, r -> r^{2s}, h_max)
    exactly (both are the same double sum, summed in the two orders).
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"Lusin order must lie in (0, 1], got {s}")
    habs = offset_lengths(f)
    cell = f.spacing**f.d
    acc = np.zeros_like(f.values)
    power = f.d + 2.0 * s
    for j in np.ndindex(f.values.shape):
        r = habs[j]
        if r == 0.0 or r > h_max:
            continue
        shifted = np.roll(f.values, shift=tuple(-jj for jj in j), axis=tuple(range(f.d)))
        diff = shifted - f.values
        acc += diff * diff / r**power
    return f.with_values(np.sqrt(cell * acc))


def torus_distance(x: np.ndarray, y: np.ndarray, L: float) -> np.ndarray:
    delta = np.abs(x - y)
    delta = np.minimum(delta, L - delta)
    return np.sqrt(np.sum(delta * delta, axis=-1))


@dataclass(frozen=True)
class WitnessReport:
    max_ratio_0: float
    max_ratio_t: float
    witness_ok: bool
    pairs: int


def empirical_modulus_witness(
    f0: GridField,
    f_t: GridField,
    mu0: Callable[[float], float],
    pairs: int,
    propagation: Callable[[float], float] | None = None,
    rng: np.random.Generator | None = None,
) -> WitnessReport:
    """Constant-witness two-point audit of modulus propagation.

    max_ratio_0 = max |f0(x)-f0(y)| / (2 mu0(|x-y|)) plays the role of the
    constant witness G at time zero.  The audit passes when the transported
    field obeys |f_t(x)-f_t(y)| <= 2 G mu0(prop(|x-y|)) on the same sampled
    pairs, prop being the propagated-modulus map (identity when omitted).
    """
    if pairs < 1:
        raise ValueError("need at least one sampled pair")
    rng = np.random.default_rng(0) if rng is None else rng
    prop = propagation if propagation is not None else (lambda r: r)
    n, d, L = f0.n_grid, f0.d, f0.L
    idx_a = rng.integers(0, n, size=(pairs, d))
    idx_b = rng.integers(0, n, size=(pairs, d))
    keep = np.any(idx_a != idx_b, axis=1)
    idx_a, idx_b = idx_a[keep], idx_b[keep]
    xa, xb = idx_a * f0.spacing, idx_b * f0.spacing
    dist = torus_distance(xa, xb, L)
    fa0 = f0.values[tuple(idx_a.T)]
    fb0 = f0.values[tuple(idx_b.T)]
    fat = f_t.values[tuple(idx_a.T)]
    fbt = f_t.values[tuple(idx_b.T)]
    uniq, inv = np.unique(dist, return_inverse=True)
    mu0_d = np.array([float(mu0(float(r))) for r in uniq])[inv]
    mu0_prop_d = np.array([float(mu0(float(prop(float(r))))) for r in uniq])[inv]
    ratio_0 = float(np.max(np.abs(fa0 - fb0) / (2.0 * mu0_d)))
    ratio_t = float(np.max(np.abs(fat - fbt) / (2.0 * mu0_prop_d)))
    ok = ratio_t <= ratio_0 * (1.0 + 1e-9) or ratio_t == 0.0
    return WitnessReport(ratio_0, ratio_t, ok, int(len(dist)))


@dataclass(frozen=True)
class AReport:
    """Truncated Osgood-type integral int_{2^-40}^1 mu(r)/r dr with a convergence flag.

    converged means the dyadic pieces decay fast enough (fitted power > 1.1 in
    the piece index, which separates integrable tails from logarithmic ones).
    """

    value: float
    converged: bool
    tail_exponent: float
    last_piece: float


def A_of_u(mu_comp: Callable[[float], float], tol: float, k_max: int = 40) -> AReport:
    """Integral A = int_0^1 mu_comp(r)/r dr over dyadic pieces [2^-(k+1), 2^-k].

    The integral is truncated at r = 2^-k_max.  Divergence (the integral being
    infinite) shows up as pieces decaying like 1/k or slower; the flag comes
    from a log-log fit of the final pieces against the piece index.
    """
    pieces = []
    total = 0.0
    for k in range(k_max):
        a, b = 2.0 ** -(k + 1), 2.0**-k
        val, err = quad(lambda r: mu_comp(r) / r, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        pieces.append(val)
        total += val
    window = np.array(pieces[-10:])
    ks = np.arange(k_max - 10, k_max, dtype=float) + 1.0
    floor = max(tol, 1e-13) * max(1.0, abs(total))
    if np.all(window <= floor):
        # integrand numerically exhausted: tail is below tolerance
        return AReport(total, True, math.inf, pieces[-1])
    positive = window > 0.0
    if np.sum(positive) < 3:
        return AReport(total, False, math.nan, pieces[-1])
    slope = np.polyfit(np.log(ks[positive]), np.log(window[positive]), 1)[0]
    return AReport(total, bool(-slope > 1.1), float(-slope), pieces[-1])


def layer_cake_l2_sq(f: GridField, n_levels: int = 4096) -> float:
    """||f||_{L^2}^2 as 2 int_0^infty r |{|f| > r}| dr by level-set counting."""
    absv = np.sort(np.abs(f.values).ravel())
    top = float(absv[-1])
    if top == 0.0:
        return 0.0
    rs = np.linspace(0.0, top, n_levels)
    counts = absv.size - np.searchsorted(absv, rs, side="right")
    measures = counts * f.spacing**f.d
    return float(np.trapezoid(2.0 * rs * measures, rs))


def random_band_limited(
    n_grid: int,
    k_max: int,
    rng: np.random.Generator,
    d: int = 2,
    L: float = 1.0,
    normalize: bool = True,
) -> GridField:
    """Random mean-zero field with spectrum supported in 0 < |j| <= k_max."""
    shape = (n_grid,) * d
    coef = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    axes = np.meshgrid(*[_int_freqs(n_grid)] * d, indexing="ij")
    j_abs = np.sqrt(sum(a * a for a in axes))
    coef[(j_abs == 0.0) | (j_abs > k_max)] = 0.0
    vals = np.fft.ifftn(coef).real
    vals -= vals.mean()
    f = GridField(vals, L)
    if normalize:
        nrm = spectral_norm(f, 0.0)
        if nrm > 0.0:
            f = GridField(vals / nrm, L)
    return f


# -- off-grid evaluation (used by the transport solver) ----------------------


def eval_spectral(f: GridField, pts: np.ndarray) -> np.ndarray:
    """Exact trigonometric evaluation at scattered points, shape (..., d).

    Tensor-factorized: cost O(P n^d) via two matmuls for d=2, which stays
    practical up to n_grid = 128.
    """
    pts = np.asarray(pts, dtype=float)
    flat = pts.reshape(-1, f.d)
    n = f.n_grid
    freqs = _int_freqs(n)
    phases = [
        np.exp(2j * math.pi * np.outer(flat[:, ax], freqs) / f.L) for ax in range(f.d)
    ]
    if f.d == 1:
        out = phases[0] @ f.spectrum
    elif f.d == 2:
        out = np.einsum("pa,ab,pb->p", phases[0], f.spectrum, phases[1], optimize=True)
    else:
        raise NotImplementedError("spectral evaluation implemented for d <= 2")
    return out.real.reshape(pts.shape[:-1])


def eval_cubic(f: GridField, pts: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Periodic cubic-spline evaluation at scattered points, shape (..., d).

    clamp limits the result to the field's range, which suppresses spline
    overshoot on rough data.
    """
    pts = np.asarray(pts, dtype=float)
    flat = pts.reshape(-1, f.d)
    coords = (flat / f.spacing).T
    out = map_coordinates(f.values, coords, order=3, mode="grid-wrap")
    if clamp:
        out = np.clip(out, f.values.min(), f.values.max())
    return out.reshape(pts.shape[:-1])


# -- binary and CSV field I/O ------------------------------------------------

_MAGIC = b"OSGF"


def save_field(f: GridField, path) -> None:
    """Flat binary: magic, int64 d, int64 n_grid, float64 L, row-major doubles."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qqd", f.d, f.n_grid, f.L))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> GridField:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a field file")
        d, n, L = struct.unpack("<qqd", fh.read(24))
        raw = np.frombuffer(fh.read(8 * n**d), dtype="<f8")
    return GridField(raw.reshape((n,) * d), L)


def field_to_csv(f: GridField, path) -> None:
    """Plot-ready CSV: one row per grid node (indices, coordinates, value)."""
    with open(path, "w", encoding="utf-8") as fh:
        idx_names = ",".join(f"i{ax+1}" for ax in range(f.d))
        x_names = ",".join(f"x{ax+1}" for ax in range(f.d))
        fh.write(f"{idx_names},{x_names},value\n")
        for j in np.ndindex(f.values.shape):
            coords = ",".join(f"{jj * f.spacing:.17g}" for jj in j)
            idxs = ",".join(str(jj) for jj in j)
            fh.write(f"{idxs},{coords},{f.values[j]:.17g}\n")
