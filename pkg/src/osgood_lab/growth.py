"""Slowly growing envelope functions and their numerical admissibility audit.

A growth function Theta maps [1, oo) to (0, oo), increases to infinity, and is
admissible when it is almost subadditive under multiplication,

    Theta(x*y) <= Theta(x) + Theta(y) + C        for x, y >= M,

and its logarithmic derivative is controlled,

    x * Theta'(x) <= C * Theta(x)                for x > M.

The iterated logarithm log_m (log applied m times) is the model family.  Its
closed form is only positive for large arguments, so below the junction point
e_m(1/2) we continue it linearly down to Theta(1) = 0.1; only positivity and
monotonicity of that extension matter downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Below-junction extension: linear from (1, _BASE_VALUE) to (e_m(1/2), _JUNCTION_VALUE).
_BASE_VALUE = 0.1
_JUNCTION_VALUE = 0.5
# Relative finite-difference step for derivative validation and custom kinds.
FD_RELATIVE_STEP = 1e-5


def iterated_log_exp(m: int, x: float, direction: str) -> float:
    """log_m(x) or e_m(x): the natural log, or exp, applied m times.

    The log direction requires x > e_{m-1}(0) so every intermediate log is
    defined; the two directions are mutually inverse.
    """
    if m < 1:
        raise ValueError(f"depth must be a positive integer, got {m}")
    v = float(x)
    if direction == "log":
        for _ in range(m):
            if v <= 0.0:
                raise ValueError(f"log_{m}({x}) undefined: intermediate value {v} <= 0")
            v = math.log(v)
        return v
    if direction == "exp":
        for _ in range(m):
            if v > 709.0:
                raise OverflowError(f"e_{m}({x}) overflows float64")
            v = math.exp(v)
        return v
    raise ValueError(f"direction must be 'log' or 'exp', got {direction!r}")


def _recursion_constants(m: int) -> tuple[float, float]:
    """Threshold M_m (M_1 = 1, M_{k+1} = e^{M_k}) and constant C = m + log_m(M_m + 2)."""
    threshold = 1.0
    for _ in range(m - 1):
        threshold = math.exp(threshold)
    c = m + iterated_log_exp(m, threshold + 2.0, "log")
    return threshold, c


@dataclass(frozen=True)
class GrowthFunction:
    """Growth envelope Theta with its admissibility constants.

    kind is "iterated_log" (with depth m) or "custom".  threshold_M and
    constant_C are the constants of the admissibility conditions; for
    iterated_log they follow the inductive recursion M_{m+1} = e^{M_m},
    C = m + log_m(M_m + 2).
    """

    kind: str
    depth: int = 0
    threshold_M: float = 1.0
    constant_C: float = 1.0
    fn: Callable[[float], float] | None = None
    table: tuple[tuple[float, float], ...] | None = None

    @staticmethod
    def iterated_log(m: int) -> "GrowthFunction":
        if m < 1:
            raise ValueError(f"depth must be a positive integer, got {m}")
        threshold, c = _recursion_constants(m)
        return GrowthFunction(kind="iterated_log", depth=m, threshold_M=threshold, constant_C=c)

    @staticmethod
    def custom(
        fn: Callable[[float], float],
        threshold_M: float = 1.0,
        constant_C: float = 1.0,
    ) -> "GrowthFunction":
        return GrowthFunction(kind="custom", threshold_M=threshold_M, constant_C=constant_C, fn=fn)

    @staticmethod
    def from_table(
        table: Sequence[Sequence[float]],
        threshold_M: float = 1.0,
        constant_C: float = 1.0,
    ) -> "GrowthFunction":
        """Piecewise-linear Theta through (x, value) rows; extrapolates the last slope."""
        rows = tuple((float(x), float(v)) for x, v in table)
        if len(rows) < 2:
            raise ValueError("table needs at least two rows")
        xs = [r[0] for r in rows]
        vs = [r[1] for r in rows]
        if any(b <= a for a, b in zip(xs, xs[1:])) or any(b <= a for a, b in zip(vs, vs[1:])):
            raise ValueError("table must be strictly increasing in x and in value")
        if xs[0] < 1.0 or vs[0] <= 0.0:
            raise ValueError("table must start at x >= 1 with a positive value")
        xa = np.asarray(xs)
        va = np.asarray(vs)
        slope_end = (va[-1] - va[-2]) / (xa[-1] - xa[-2])

        def fn(x: float) -> float:
            if x >= xa[-1]:
                return float(va[-1] + slope_end * (x - xa[-1]))
            return float(np.interp(x, xa, va))

        return GrowthFunction(
            kind="custom", threshold_M=threshold_M, constant_C=constant_C, fn=fn, table=rows
        )

    @property
    def junction(self) -> float:
        """Smallest x where the iterated-log closed form is used (e_m(1/2))."""
        if self.kind != "iterated_log":
            raise AttributeError("junction is only defined for iterated_log kinds")
        return iterated_log_exp(self.depth, _JUNCTION_VALUE, "exp")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "iterated_log":
            return {"kind": "log_m", "m": self.depth}
        if self.table is None:
            raise ValueError("only table-backed custom growth functions serialize")
        return {"kind": "custom", "table": [list(r) for r in self.table]}

    @staticmethod
    def from_dict(d: dict) -> "GrowthFunction":
        if d.get("kind") == "log_m":
            return GrowthFunction.iterated_log(int(d["m"]))
        if d.get("kind") == "custom":
            return GrowthFunction.from_table(d["table"])
        raise ValueError(f"unknown growth function description: {d!r}")


def eval_growth(g: GrowthFunction, x: float) -> float:
    """Theta(x) for x >= 1."""
    if x < 1.0:
        raise ValueError(f"growth functions are defined on [1, oo), got x={x}")
    if g.kind == "custom":
        v = float(g.fn(x))
        if v <= 0.0:
            raise ValueError(f"custom growth function returned {v} <= 0 at x={x}")
        return v
    j = g.junction
    if x >= j:
        return iterated_log_exp(g.depth, x, "log")
    return _BASE_VALUE + (_JUNCTION_VALUE - _BASE_VALUE) * (x - 1.0) / (j - 1.0)


def eval_growth_log_arg(g: GrowthFunction, log_x: float) -> float:
    """Theta(e^{log_x}), usable when e^{log_x} overflows float64."""
    if log_x < 0.0:
        raise ValueError(f"argument below 1 (log_x={log_x})")
    if g.kind == "custom" or log_x <= 700.0:
        return eval_growth(g, math.exp(log_x))
    # Above the overflow line the closed form always applies: log_m(x) = log_{m-1}(log x).
    if g.depth == 1:
        return log_x
    return iterated_log_exp(g.depth - 1, log_x, "log")


def eval_growth_derivative(g: GrowthFunction, x: float) -> float:
    """Theta'(x).

    For iterated_log the closed form Theta'(x) = prod_{j=1}^{m-1} 1/log_j(x) * 1/x
    holds above the junction; below it the closed form is not the implemented
    function, so that region is a domain error.  Custom kinds use a central
    finite difference with relative step 1e-5.
    """
    if g.kind == "custom":
        h = x * FD_RELATIVE_STEP
        return (eval_growth(g, x + h) - eval_growth(g, max(x - h, 1.0))) / (
            (x + h) - max(x - h, 1.0)
        )
    if x < g.junction:
        raise ValueError(
            f"closed-form derivative needs x >= {g.junction:.6g} for depth {g.depth}, got {x}"
        )
    acc = 1.0 / x
    v = float(x)
    for _ in range(g.depth - 1):
        v = math.log(v)
        acc /= v
    return acc


@dataclass(frozen=True)
class AdmissibilityReport:
    max_subadd_defect: float
    max_deriv_ratio: float
    constant_C: float
    passed: bool


def verify_admissibility(
    g: GrowthFunction, xs: Sequence[float], ys: Sequence[float]
) -> AdmissibilityReport:
    """Audit the two admissibility conditions on the grid pairs xs x ys.

    max_subadd_defect = max Theta(xy) - Theta(x) - Theta(y), max_deriv_ratio =
    max x Theta'(x)/Theta(x); the audit passes when both are <= the stored C.
    Report-only: grids below the threshold make the audit fail, not raise.
    """
    defect = -math.inf
    for x in xs:
        tx = eval_growth(g, float(x))
        for y in ys:
            ty = eval_growth(g, float(y))
            # Products of grid points near 1e300 overflow; go through log(xy).
            txy = eval_growth_log_arg(g, math.log(x) + math.log(y))
            defect = max(defect, txy - tx - ty)
    ratio = -math.inf
    for x in list(xs) + list(ys):
        x = float(x)
        try:
            d = eval_growth_derivative(g, x)
        except ValueError:
            h = max(x * FD_RELATIVE_STEP, 1e-12)
            d = (eval_growth(g, x + h) - eval_growth(g, max(x - h, 1.0))) / (
                (x + h) - max(x - h, 1.0)
            )
        ratio = max(ratio, x * d / eval_growth(g, x))
    passed = defect <= g.constant_C and ratio <= g.constant_C
    return AdmissibilityReport(
        max_subadd_defect=defect, max_deriv_ratio=ratio, constant_C=g.constant_C, passed=passed
    )


def log_envelope_constant(g: GrowthFunction, xs: Sequence[float]) -> float:
    """Smallest C' with Theta(x) <= C'(log x + 1) on the sampled grid."""
    return max(eval_growth(g, float(x)) / (math.log(x) + 1.0) for x in xs)
