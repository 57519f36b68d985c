"""Pseudo-spectral 2D incompressible Euler solver with twin-run stability audits.

The state is the scalar vorticity on the periodic square; velocity is
recovered spectrally through the stream function, and time stepping is RK4 on
the advection term with 2/3-rule dealiasing of the quadratic product.  Twin
runs started from nearby initial vorticities are compared against the
nested-logarithm stability bound

    ||w_1(t) - w_2(t)||^2 <= C * (mu_{n,t}((2 + 2 max_i ||w_{0,i}||^2
                                / mu_{n,t}(||u_{0,1} - u_{0,2}||^2))^gamma))^s

where mu_{n,t} is the vorticity-transport modulus (modulus.mu_omega) whose
rate constant is measured from the data: exp(t * M * max_i ||w_{0,i}||_Y)
with the Yudovich-type norm ||.||_Y estimated on a finite grid of Lebesgue
exponents.  The constants C, C1, C2, M, gamma are experiment parameters, not
outputs; a fitting mode reports the smallest C that makes the bound hold.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .fields import GridField, spectral_norm
from .growth import GrowthFunction, eval_growth
from .interp import _smoothstep
from .modulus import mu_omega

CFL_SAFETY = 0.5

# Lebesgue exponents for the empirical Yudovich norm
P_GRID = (2, 4, 8, 16, 32, 64)


class CFLError(RuntimeError):
    """Time step exceeds the advective limit CFL_SAFETY * dx / max|u|."""


@lru_cache(maxsize=32)
def _spectral_setup(n: int, L: float):
    """Wavenumber grids, inverse Laplacian symbol, and the 2/3 dealias mask."""
    j = np.fft.fftfreq(n, d=1.0 / n)
    jx, jy = np.meshgrid(j, j, indexing="ij")
    kx = (2.0 * math.pi / L) * jx
    ky = (2.0 * math.pi / L) * jy
    k2 = kx * kx + ky * ky
    inv_k2 = np.zeros_like(k2)
    nz = k2 > 0.0
    inv_k2[nz] = 1.0 / k2[nz]
    keep = (np.abs(jx) < n / 3.0) & (np.abs(jy) < n / 3.0)
    for a in (kx, ky, inv_k2, keep):
        a.setflags(write=False)
    return kx, ky, inv_k2, keep


def biot_savart(omega: GridField) -> tuple[GridField, GridField]:
    """Velocity induced by a mean-zero vorticity: u = grad-perp of the stream function.

    Spectrally u_hat = i (k_y, -k_x) w_hat / |k|^2 with the k = 0 mode dropped;
    the result is divergence-free and has curl equal to omega to roundoff.
    """
    if omega.d != 2:
        raise ValueError(f"velocity recovery is two-dimensional, got d={omega.d}")
    if not omega.is_mean_zero:
        raise ValueError("vorticity must be mean-zero to invert the Laplacian")
    kx, ky, inv_k2, _ = _spectral_setup(omega.n_grid, omega.L)
    W = np.fft.fftn(omega.values)
    u1 = np.fft.ifftn(1j * ky * inv_k2 * W).real
    u2 = np.fft.ifftn(-1j * kx * inv_k2 * W).real
    return GridField(u1, omega.L), GridField(u2, omega.L)


def curl(u1: GridField, u2: GridField) -> GridField:
    """Scalar curl d(u2)/dx1 - d(u1)/dx2 by spectral differentiation."""
    kx, ky, _, _ = _spectral_setup(u1.n_grid, u1.L)
    w = np.fft.ifftn(1j * kx * np.fft.fftn(u2.values)).real
    w -= np.fft.ifftn(1j * ky * np.fft.fftn(u1.values)).real
    return GridField(w, u1.L)


def divergence(u1: GridField, u2: GridField) -> GridField:
    """d(u1)/dx1 + d(u2)/dx2 by spectral differentiation."""
    kx, ky, _, _ = _spectral_setup(u1.n_grid, u1.L)
    v = np.fft.ifftn(1j * kx * np.fft.fftn(u1.values)).real
    v += np.fft.ifftn(1j * ky * np.fft.fftn(u2.values)).real
    return GridField(v, u1.L)


def kinetic_energy(omega: GridField) -> float:
    """(1/2)||u||_{L^2}^2, equal to half the squared H^{-1} norm of the vorticity."""
    return 0.5 * spectral_norm(omega, -1.0) ** 2


def enstrophy(omega: GridField) -> float:
    """(1/2)||omega||_{L^2}^2."""
    return 0.5 * spectral_norm(omega, 0.0) ** 2


def translate_field(f: GridField, shift: Sequence[float]) -> GridField:
    """Exact spectral translation: the returned field is f(x - shift) on the torus."""
    if f.d != 2 or len(shift) != 2:
        raise ValueError("translation expects a 2D field and a 2-vector shift")
    kx, ky, _, _ = _spectral_setup(f.n_grid, f.L)
    phase = np.exp(-1j * (kx * float(shift[0]) + ky * float(shift[1])))
    return GridField(np.fft.ifftn(np.fft.fftn(f.values) * phase).real, f.L)


# -- time stepping ----------------------------------------------------------


@dataclass(frozen=True)
class EulerState:
    """Vorticity state: mean-zero, spectrum confined to the dealias mask."""

    omega: GridField
    t: float
    dt: float
    dealias_keep: np.ndarray


def make_state(omega: GridField, dt: float, t: float = 0.0) -> EulerState:
    """Validate initial vorticity and project it onto the dealias mask."""
    if omega.d != 2:
        raise ValueError(f"the solver is two-dimensional, got d={omega.d}")
    if not omega.is_mean_zero:
        raise ValueError("initial vorticity must be mean-zero")
    if not dt > 0.0 or not math.isfinite(dt):
        raise ValueError(f"time step must be positive and finite, got {dt}")
    _, _, _, keep = _spectral_setup(omega.n_grid, omega.L)
    W = np.fft.fftn(omega.values) * keep
    projected = omega.with_values(np.fft.ifftn(W).real)
    return EulerState(omega=projected, t=float(t), dt=float(dt), dealias_keep=keep)


def _tendency(W, kx, ky, inv_k2, keep, want_speed=False):
    """Dealiased spectral advection tendency -FFT(u . grad w); zero at k = 0."""
    u1 = np.fft.ifftn(1j * ky * inv_k2 * W).real
    u2 = np.fft.ifftn(-1j * kx * inv_k2 * W).real
    wx = np.fft.ifftn(1j * kx * W).real
    wy = np.fft.ifftn(1j * ky * W).real
    A = np.fft.fftn(u1 * wx + u2 * wy)
    A *= keep
    A.flat[0] = 0.0
    speed = float(np.hypot(u1, u2).max()) if want_speed else 0.0
    return -A, speed


def step(state: EulerState) -> EulerState:
    """One RK4 step of dw/dt = -u . grad w with per-stage dealiasing.

    The k = 0 spectral coefficient is carried through unchanged, so the grid
    mean is preserved exactly; a CFL check against the current velocity guards
    the fixed step size.
    """
    f = state.omega
    kx, ky, inv_k2, keep = _spectral_setup(f.n_grid, f.L)
    W = np.fft.fftn(f.values)
    k1, speed = _tendency(W, kx, ky, inv_k2, keep, want_speed=True)
    if speed > 0.0:
        limit = CFL_SAFETY * f.spacing / speed
        if state.dt > limit * (1.0 + 1e-12):
            raise CFLError(f"dt={state.dt:.3e} exceeds the CFL limit {limit:.3e}")
    h = state.dt
    k2, _ = _tendency(W + 0.5 * h * k1, kx, ky, inv_k2, keep)
    k3, _ = _tendency(W + 0.5 * h * k2, kx, ky, inv_k2, keep)
    k4, _ = _tendency(W + h * k3, kx, ky, inv_k2, keep)
    Wn = (W + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)) * keep
    return replace(state, omega=f.with_values(np.fft.ifftn(Wn).real), t=state.t + h)


def advance(state: EulerState, n_steps: int) -> EulerState:
    if n_steps < 0:
        raise ValueError(f"step count must be nonnegative, got {n_steps}")
    for _ in range(n_steps):
        state = step(state)
    return state


# -- initial data -----------------------------------------------------------


def _min_image_radius(n_grid: int, L: float, center: Sequence[float]) -> np.ndarray:
    x = np.arange(n_grid) * (L / n_grid)
    dx = (x - float(center[0]) + 0.5 * L) % L - 0.5 * L
    dy = (x - float(center[1]) + 0.5 * L) % L - 0.5 * L
    return np.hypot(dx[:, None], dy[None, :])


def _radial_bump(rho: np.ndarray, r: float) -> np.ndarray:
    """C-infinity bump exp(1 - 1/(1 - (rho/r)^2)) on rho < r, 1 at rho = 0."""
    out = np.zeros_like(rho)
    inside = rho < r
    z = (rho[inside] / r) ** 2
    with np.errstate(under="ignore"):
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - z))
    return out


def _smooth_disk(rho: np.ndarray, r1: float, r2: float) -> np.ndarray:
    """Indicator of the r1-disk with a C-infinity edge reaching 0 at r2."""
    return _smoothstep((r2 - rho) / (r2 - r1))


@lru_cache(maxsize=None)
def _theta_factors(n: int) -> tuple[GrowthFunction, ...]:
    return tuple(GrowthFunction.iterated_log(j) for j in range(1, n))


def theta_product(n: int, z: float) -> float:
    """Yudovich growth envelope: the product log(z) log_2(z) ... log_{n-1}(z).

    The empty product (n = 1) is 1, the bounded-vorticity case.  Each factor
    uses the growth module's continuation below its closed-form range, which
    keeps the product positive and increasing on all of [1, oo).
    """
    if n < 1:
        raise ValueError(f"depth must be a positive integer, got {n}")
    out = 1.0
    for g in _theta_factors(n):
        out *= eval_growth(g, z)
    return out


def make_initial_vorticity(
    kind: str,
    n_grid: int = 256,
    L: float = 1.0,
    amplitude: float = 1.0,
    center: tuple[float, float] = (0.5, 0.5),
    core_radius: float = 0.1,
    edge_radius: float = 0.18,
    ring_radius: float = 0.3,
    ring_width: float = 0.06,
    n: int = 1,
    depth: int = 8,
) -> GridField:
    """Mean-zero initial vorticity profiles for stability experiments.

    smooth_blob: a C-infinity bump of height `amplitude` supported in the
    core_radius disk.  patch_mollified: amplitude on the core_radius disk with
    a C-infinity edge reaching 0 at edge_radius.  log_singular: the unbounded
    profile theta_product(n, log(e/rho)) truncated at the value it attains at
    radius 2^-depth, normalized to peak at `amplitude`, and faded out between
    core_radius and edge_radius.  Every kind subtracts a disjoint compensation
    annulus at ring_radius scaled to cancel the core's mass, then removes the
    residual grid mean, so the result is mean-zero with its extremum still at
    the core.
    """
    if not amplitude > 0.0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    if not 0.0 < core_radius < edge_radius:
        raise ValueError("need 0 < core_radius < edge_radius")
    if not edge_radius < ring_radius - ring_width:
        raise ValueError("compensation annulus must not touch the core profile")
    if not ring_radius + ring_width <= 0.5 * L:
        raise ValueError("compensation annulus must fit inside the half-period disk")
    rho = _min_image_radius(n_grid, L, center)
    if kind == "smooth_blob":
        core = amplitude * _radial_bump(rho, core_radius)
    elif kind == "patch_mollified":
        core = amplitude * _smooth_disk(rho, core_radius, edge_radius)
    elif kind == "log_singular":
        if depth < 1:
            raise ValueError(f"truncation depth must be >= 1, got {depth}")
        if not edge_radius < min(1.0, 0.5 * L):
            raise ValueError("singular profile needs edge_radius < 1")
        cap = theta_product(n, 1.0 + depth * math.log(2.0))
        vals = np.full_like(rho, cap)
        outside_cap = rho > 2.0 ** (-depth)
        zs = 1.0 - np.log(rho[outside_cap])
        raw = np.fromiter((theta_product(n, z) for z in zs), float, zs.size)
        vals[outside_cap] = np.minimum(raw, cap)
        core = amplitude * (vals / cap) * _smooth_disk(rho, core_radius, edge_radius)
    else:
        raise ValueError(f"unknown initial vorticity kind {kind!r}")
    ring = _radial_bump(np.abs(rho - ring_radius), ring_width)
    v = core - (core.sum() / ring.sum()) * ring
    v -= v.mean()
    return GridField(v, L)


def lp_norm(f: GridField, p: float) -> float:
    """Grid-quadrature Lebesgue norm (sum |f|^p cell)^{1/p}."""
    if not p >= 1.0:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {p}")
    return float((np.abs(f.values) ** p).sum() * f.spacing**f.d) ** (1.0 / p)


@dataclass(frozen=True)
class YNormReport:
    """Empirical Yudovich-norm audit: ||f||_{L^p} against theta_product(n, p)."""

    n: int
    p_values: tuple[float, ...]
    lp_norms: tuple[float, ...]
    theta_values: tuple[float, ...]
    ratios: tuple[float, ...]

    @property
    def y_norm(self) -> float:
        return max(self.ratios)


def y_norm_report(f: GridField, n: int, p_values: Sequence[float] = P_GRID) -> YNormReport:
    ps = tuple(float(p) for p in p_values)
    norms = tuple(lp_norm(f, p) for p in ps)
    thetas = tuple(theta_product(n, p) for p in ps)
    return YNormReport(
        n=n,
        p_values=ps,
        lp_norms=norms,
        theta_values=thetas,
        ratios=tuple(v / t for v, t in zip(norms, thetas)),
    )


# -- twin-run stability audit -----------------------------------------------


@dataclass(frozen=True)
class StabilityParams:
    """Constants of the twin-run bound; gamma defaults to -1/(2C).

    n selects the nesting depth of the vorticity modulus (n = 1 is the
    bounded-vorticity power law).
    """

    C: float = 1.0
    C1: float = 1.0
    C2: float = 1.0
    M: float = 1.0
    gamma: float | None = None
    n: int = 1

    def __post_init__(self):
        if min(self.C, self.C1, self.C2) <= 0.0 or self.M < 0.0:
            raise ValueError("constants C, C1, C2 must be positive and M >= 0")
        if self.n < 1:
            raise ValueError(f"modulus depth must be >= 1, got {self.n}")
        if self.gamma is not None and not self.gamma < 0.0:
            raise ValueError(f"gamma must be negative, got {self.gamma}")

    @property
    def gamma_value(self) -> float:
        return -1.0 / (2.0 * self.C) if self.gamma is None else self.gamma

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "C1": self.C1,
            "C2": self.C2,
            "M": self.M,
            "gamma": self.gamma_value,
            "n": self.n,
        }


def stability_bound(
    init_velocity_dist_sq: float,
    max_omega0_sq: float,
    y_norm_max: float,
    t: float,
    s: float,
    params: StabilityParams,
) -> tuple[float, float, float]:
    """(bound_rhs, bound_core, velocity_bound) of the twin-run estimate at time t.

    velocity_bound = mu(init_velocity_dist_sq) caps ||u_1(t) - u_2(t)||^2;
    bound_core = mu((2 + 2 max_omega0_sq / velocity_bound)^gamma)^s and
    bound_rhs = C * bound_core caps the squared vorticity distance.  All three
    vanish in the coincident-data limit, so zero initial distance maps to
    (0, 0, 0).
    """
    if init_velocity_dist_sq < 0.0 or max_omega0_sq < 0.0 or y_norm_max < 0.0:
        raise ValueError("distances, norms and rates must be nonnegative")
    if init_velocity_dist_sq == 0.0:
        return 0.0, 0.0, 0.0
    rate = params.M * y_norm_max
    mu_delta = mu_omega(params.n, t, rate, params.C1, params.C2, init_velocity_dist_sq)
    inner = (2.0 + 2.0 * max_omega0_sq / mu_delta) ** params.gamma_value
    core = mu_omega(params.n, t, rate, params.C1, params.C2, inner) ** s
    return params.C * core, core, mu_delta


@dataclass(frozen=True)
class StabilityRecord:
    """Output-time history of a twin run against the modulus bound."""

    times: tuple[float, ...]
    vorticity_dist_sq: tuple[float, ...]
    velocity_dist_sq: tuple[float, ...]
    bound_rhs: tuple[float, ...]
    bound_core: tuple[float, ...]
    velocity_bound_rhs: tuple[float, ...]
    energy_1: tuple[float, ...]
    energy_2: tuple[float, ...]
    enstrophy_1: tuple[float, ...]
    enstrophy_2: tuple[float, ...]
    s: float
    params: StabilityParams
    y_norm_max: float
    initial_velocity_dist_sq: float
    n_grid: int
    L: float
    dt: float

    def __post_init__(self):
        m = len(self.times)
        series = (
            self.vorticity_dist_sq,
            self.velocity_dist_sq,
            self.bound_rhs,
            self.bound_core,
            self.velocity_bound_rhs,
            self.energy_1,
            self.energy_2,
            self.enstrophy_1,
            self.enstrophy_2,
        )
        if any(len(a) != m for a in series):
            raise ValueError("record columns must share one length")
        if any(v < 0.0 for a in series for v in a):
            raise ValueError("record entries must be nonnegative")

    @property
    def bound_holds(self) -> bool:
        return all(
            d <= b * (1.0 + 1e-9)
            for d, b in zip(self.vorticity_dist_sq, self.bound_rhs)
        )

    @property
    def fitted_C(self) -> float:
        """Smallest constant C making dist <= C * bound_core at every output time."""
        worst = 0.0
        for d, core in zip(self.vorticity_dist_sq, self.bound_core):
            if core > 0.0:
                worst = max(worst, d / core)
            elif d > 0.0:
                return math.inf
        return worst

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "t",
                    "vorticity_dist_sq",
                    "velocity_dist_sq",
                    "bound_rhs",
                    "energy_1",
                    "energy_2",
                    "enstrophy_1",
                    "enstrophy_2",
                ]
            )
            for i, t in enumerate(self.times):
                writer.writerow(
                    [
                        repr(t),
                        repr(self.vorticity_dist_sq[i]),
                        repr(self.velocity_dist_sq[i]),
                        repr(self.bound_rhs[i]),
                        repr(self.energy_1[i]),
                        repr(self.energy_2[i]),
                        repr(self.enstrophy_1[i]),
                        repr(self.enstrophy_2[i]),
                    ]
                )

    def manifest(self) -> dict:
        return {
            "n_grid": self.n_grid,
            "L": self.L,
            "dt": self.dt,
            "T": self.times[-1] if self.times else 0.0,
            "s": self.s,
            "constants": self.params.to_dict(),
            "y_norm_max": self.y_norm_max,
            "initial_velocity_dist_sq": self.initial_velocity_dist_sq,
            "fitted_C": self.fitted_C,
            "bound_holds": self.bound_holds,
            "outputs": len(self.times),
        }


def _dist_sq(f: GridField, g: GridField) -> float:
    diff = f.values - g.values
    return float((diff * diff).sum() * f.spacing**f.d)


def stability_experiment(
    omega01: GridField,
    omega02: GridField,
    T: float,
    dt: float,
    s: float,
    params: StabilityParams | None = None,
    record_every: int = 1,
) -> StabilityRecord:
    """Evolve twin vorticities side by side and audit the stability bound.

    The two runs are independent tasks synchronized only at output times
    (every `record_every` steps).  dt is rounded so the horizon T is an
    integer number of fixed steps; the CFL guard inside `step` propagates.
    The recorded bound uses the initial velocity distance, the larger initial
    enstrophy-norm, and the empirical Yudovich norm of the initial data, all
    measured after dealias projection.
    """
    if params is None:
        params = StabilityParams()
    if omega01.values.shape != omega02.values.shape or omega01.L != omega02.L:
        raise ValueError("twin runs need a common grid")
    if not T > 0.0 or not dt > 0.0:
        raise ValueError("need T > 0 and dt > 0")
    if not s > 0.0:
        raise ValueError(f"exponent s must be positive, got {s}")
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    n_steps = max(1, round(T / dt))
    dt_eff = T / n_steps
    st1 = make_state(omega01, dt_eff)
    st2 = make_state(omega02, dt_eff)

    y_max = max(
        y_norm_report(st1.omega, params.n).y_norm,
        y_norm_report(st2.omega, params.n).y_norm,
    )
    w_max_sq = max(spectral_norm(st1.omega, 0.0), spectral_norm(st2.omega, 0.0)) ** 2
    delta0_sq = spectral_norm(st1.omega.with_values(st1.omega.values - st2.omega.values), -1.0) ** 2

    times, dw, du, brhs, bcore, vb = [], [], [], [], [], []
    e1, e2, z1, z2 = [], [], [], []

    def record(a: EulerState, b: EulerState, t: float) -> None:
        times.append(t)
        dw.append(_dist_sq(a.omega, b.omega))
        du.append(spectral_norm(a.omega.with_values(a.omega.values - b.omega.values), -1.0) ** 2)
        rhs, core, vbound = stability_bound(delta0_sq, w_max_sq, y_max, t, s, params)
        brhs.append(rhs)
        bcore.append(core)
        vb.append(vbound)
        e1.append(kinetic_energy(a.omega))
        e2.append(kinetic_energy(b.omega))
        z1.append(enstrophy(a.omega))
        z2.append(enstrophy(b.omega))

    record(st1, st2, 0.0)
    done = 0
    with ThreadPoolExecutor(max_workers=2) as pool:
        while done < n_steps:
            k = min(record_every, n_steps - done)
            f1 = pool.submit(advance, st1, k)
            f2 = pool.submit(advance, st2, k)
            st1, st2 = f1.result(), f2.result()
            done += k
            record(st1, st2, done * dt_eff)

    return StabilityRecord(
        times=tuple(times),
        vorticity_dist_sq=tuple(dw),
        velocity_dist_sq=tuple(du),
        bound_rhs=tuple(brhs),
        bound_core=tuple(bcore),
        velocity_bound_rhs=tuple(vb),
        energy_1=tuple(e1),
        energy_2=tuple(e2),
        enstrophy_1=tuple(z1),
        enstrophy_2=tuple(z2),
        s=s,
        params=params,
        y_norm_max=y_max,
        initial_velocity_dist_sq=delta0_sq,
        n_grid=omega01.n_grid,
        L=omega01.L,
        dt=dt_eff,
    )


def fit_bound_constant(records: Sequence[StabilityRecord]) -> float:
    """Smallest C making the bound hold across a whole sweep of records."""
    if not records:
        raise ValueError("need at least one record to fit")
    return max(r.fitted_C for r in records)
