"""Coupled growth models whose driving density is read off the evolving map.

The map is kept as a composition ``f = g_0 o g_1 o ... o g_k`` of flow maps.
One coupled step with density ``xi`` appends the backward flow ``W`` of the
frozen measure, so ``f_new = f_old o W``; to first order this is the
Loewner-Kufarev equation ``f_t = z f' p``. Boundary samples are taken on the
circle of radius ``radius`` in the parameter disc.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .boundary import BoundaryCurve, circle_angles, jordan_check
from .driving import (Measure, ParameterError, SpectralMeasure, herglotz_from_density,
                      renormalize_time)
from .flow import Direction, Exit, FlowField, flow_map


class CoupledHalt(RuntimeError):
    """Coupled stepping stopped; ``report`` says where and why."""

    def __init__(self, report: "HaltReport"):
        super().__init__(f"step {report.step}: {report.reason} ({report.detail})")
        self.report = report


@dataclass(frozen=True)
class HaltReport:
    step: int
    reason: str  # cusp | real-part | jordan | flow
    detail: str
    angle: float | None = None


@dataclass(frozen=True, eq=False)
class CoupledState:
    """Immutable snapshot of a coupled evolution."""

    step: int
    time: float
    boundary: BoundaryCurve
    derivative_samples: np.ndarray  # |f'(radius e^{i theta})|
    measure: SpectralMeasure
    timescale_accumulated: float
    stages: tuple = ()

    @property
    def theta(self) -> np.ndarray:
        return self.boundary.theta

    @property
    def radius(self) -> float:
        return self.boundary.radius

    def evaluate(self, z, wz0=None):
        """``(f(z), f'(z))`` through every stored stage, innermost first."""
        w = np.asarray(z, dtype=complex)
        v = np.ones_like(w) if wz0 is None else np.asarray(wz0, dtype=complex)
        for fld in reversed(self.stages):
            w, v, exits = flow_map(fld, w, wz0=v)
            bad = [e for e in exits if e is not Exit.HORIZON]
            if bad:
                raise CoupledHalt(HaltReport(self.step, "flow", f"{len(bad)} seeds exited with {bad[0].name}"))
        return w, v


def _sample(stages, theta, radius):
    seeds = radius * np.exp(1j * theta)
    probe = CoupledState(0, 0.0, BoundaryCurve(0.0, radius, theta, seeds), np.ones(theta.size),
                         SpectralMeasure.point(0.0), 0.0, tuple(stages))
    return probe.evaluate(seeds)


def hele_shaw_density(derivative_samples) -> np.ndarray:
    return 1.0 / np.asarray(derivative_samples, dtype=float) ** 2


def _state(step, time, stages, theta, radius, scale, cusp_tol=1e-8):
    points, derivs = _sample(stages, theta, radius)
    mod = np.abs(derivs)
    if np.min(mod) < cusp_tol:
        i = int(np.argmin(mod))
        raise CoupledHalt(HaltReport(step, "cusp", f"|f'| = {mod[i]:.3e}", float(theta[i])))
    curve = BoundaryCurve(time, radius, theta, points, derivs)
    if not jordan_check(curve):
        raise CoupledHalt(HaltReport(step, "jordan", "boundary polyline self-intersects"))
    measure = herglotz_from_density(hele_shaw_density(mod), theta.size, offset=0.0)
    return CoupledState(step, time, curve, mod, measure, scale, tuple(stages))


def initial_state(n: int = 256, radius: float = 0.5, field: FlowField | None = None) -> CoupledState:
    """Start from the identity map, or from the endpoint map of ``field``."""
    if not 0.0 < radius < 1.0:
        raise ParameterError("trace radius must lie in (0, 1)")
    if n < 16:
        raise ParameterError("need at least 16 angles")
    stages = () if field is None else (field,)
    return _state(0, 0.0, stages, circle_angles(n), radius, 0.0)


def hele_shaw_step(state: CoupledState, dt: float, rtol: float = 1e-11, atol: float = 1e-12,
                   cusp_tol: float = 1e-8) -> CoupledState:
    """One coupled step with the density ``1/|f'|^2`` frozen over ``[t, t + dt]``.

    The step runs in renormalised time, where ``p*(0) = 1``; the equivalent
    original time ``dt / mass`` is added to ``timescale_accumulated``.
    """
    if dt < 0 or not math.isfinite(dt):
        raise ParameterError("dt must be nonnegative")
    if dt == 0:
        return replace(state, step=state.step + 1)
    term, scale = renormalize_time(Measure(state.measure, state.measure.raw_mass))
    grid = state.boundary.seeds
    re = term.value(grid).real
    if np.any(~(re > 0)):
        i = int(np.argmin(re))
        raise CoupledHalt(HaltReport(state.step + 1, "real-part", f"Re p = {re[i]:.3e}", float(state.theta[i])))
    fld = FlowField(term, Direction.BACKWARD, horizon=dt, rtol=rtol, atol=atol)
    return _state(state.step + 1, state.time + dt, state.stages + (fld,), state.theta, state.radius,
                  state.timescale_accumulated + dt * float(scale(state.time)), cusp_tol)


def evolve(state: CoupledState, dt: float, steps: int, **kw) -> list[CoupledState]:
    out = [state]
    for _ in range(steps):
        out.append(hele_shaw_step(out[-1], dt, **kw))
    return out


# ---------------------------------------------------------------------------
# shape measurements
# ---------------------------------------------------------------------------


def enclosed_area(points) -> float:
    p = np.asarray(points, dtype=complex)
    q = np.roll(p, -1)
    return 0.5 * float(np.sum(p.real * q.imag - q.real * p.imag))


def circularity_deviation(points) -> float:
    """``max | |w - c| - mean | / mean`` about the centroid ``c`` of the samples."""
    p = np.asarray(points, dtype=complex)
    d = np.abs(p - p.mean())
    return float(np.max(np.abs(d - d.mean())) / d.mean())


def conformal_radius(state: CoupledState) -> float:
    """First Fourier coefficient of the boundary samples, i.e. ``|d/dz f(radius z)|`` at 0."""
    c = np.mean(state.boundary.points * np.exp(-1j * state.theta))
    return float(abs(c))


def derivative_truncation(state: CoupledState, outer: float | None = None) -> float:
    """Largest relative change of ``|f'|`` between the trace radius and ``outer``.

    ``outer`` defaults to halfway from the trace radius to 1; the value
    estimates how far the sampled surrogate is from its boundary limit.
    """
    r = state.radius
    outer = r + 0.5 * (1.0 - r) if outer is None else float(outer)
    if not r < outer < 1.0:
        raise ParameterError("outer radius must lie between the trace radius and 1")
    _, d = state.evaluate(outer * np.exp(1j * state.theta))
    return float(np.max(np.abs(np.abs(d) - state.derivative_samples) / state.derivative_samples))


def splitting_error(state: CoupledState, dt: float, **kw) -> float:
    """Boundary gap between one step of ``2 dt`` and two steps of ``dt``."""
    one = hele_shaw_step(state, 2.0 * dt, **kw)
    two = hele_shaw_step(hele_shaw_step(state, dt, **kw), dt, **kw)
    return float(np.max(np.abs(one.boundary.points - two.boundary.points)))


def step_halving(state: CoupledState, dt: float, **kw) -> tuple[float, float, float]:
    """Splitting errors at ``dt`` and ``dt/2`` and their ratio (about 4 for a first-order scheme)."""
    e1 = splitting_error(state, dt, **kw)
    e2 = splitting_error(state, dt / 2.0, **kw)
    return e1, e2, (e1 / e2 if e2 > 0 else math.inf)


# ---------------------------------------------------------------------------
# distance-based density
# ---------------------------------------------------------------------------


def polyline_distance(points, polyline) -> np.ndarray:
    """Distance from each point to the closed polyline."""
    z = np.asarray(points, dtype=complex)[..., None]
    a = np.asarray(polyline, dtype=complex)
    b = np.roll(a, -1)
    ab = b - a
    den = np.abs(ab) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.clip(((z - a) * np.conj(ab)).real / den, 0.0, 1.0)
    s = np.where(den > 0, s, 0.0)
    return np.min(np.abs(z - (a + s * ab)), axis=-1)


@dataclass(frozen=True, eq=False)
class DistanceDensity:
    theta: np.ndarray
    eps: np.ndarray
    flagged: np.ndarray
    delta: float


def carleson_makarov_density(state: CoupledState, delta: float, upper: float = 1.0 - 1e-6,
                             iterations: int = 48) -> DistanceDensity:
    """Smallest ``eps`` with ``dist(f(r(1-eps)e^{i theta}), boundary) = delta`` per grid angle.

    ``f(r .)`` plays the role of the map of the unit disc, so the boundary is
    the traced polyline. Angles where the distance never reaches ``delta``
    return ``upper`` and are flagged. The result is the raw density, not
    normalised.
    """
    if not delta > 0:
        raise ParameterError("delta must be positive")
    theta = state.theta
    poly = state.boundary.points
    base = state.radius * np.exp(1j * theta)

    def gap(eps):
        w, _ = state.evaluate(base * (1.0 - eps))
        return polyline_distance(w, poly) - delta

    lo = np.zeros(theta.size)
    hi = np.full(theta.size, upper)
    flagged = gap(hi) < 0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        ok = gap(mid) >= 0
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    eps = np.where(flagged, upper, hi)
    return DistanceDensity(theta.copy(), eps, flagged, float(delta))


# ---------------------------------------------------------------------------
# smoothness prediction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothnessPrediction:
    growth_exponent: float
    real_lower: float
    real_upper: float
    applicable: bool
    detail: str


def smoothness_prediction(xi, k: float, bounds: tuple[float, float] | None = None) -> SmoothnessPrediction:
    """Predicted growth of ``|p*_z|`` for a density with Hölder exponent ``k``.

    With ``a < xi < b`` the renormalised term satisfies ``a/b < Re p* < b/a``
    and ``|p*_z| = O((1-r)^(k-1))``, which is the bounded-real-part, sub-linear
    derivative growth case of the Hölder boundary criterion.
    """
    if not 0.0 < k < 1.0:
        raise ParameterError("Hölder exponent must lie in (0, 1)")
    if bounds is None:
        xi = np.asarray(xi, dtype=float)
        a, b = float(np.min(xi)), float(np.max(xi))
    else:
        a, b = map(float, bounds)
    if not 0.0 <= a <= b:
        raise ParameterError("need 0 <= a <= b")
    if a == b:
        return SmoothnessPrediction(0.0, 1.0, 1.0, True, "uniform density: p* is identically 1")
    if a == 0.0:
        return SmoothnessPrediction(1.0 - k, 0.0, math.inf, False, "density not bounded below")
    return SmoothnessPrediction(1.0 - k, a / b, b / a, True,
                                f"Re p* in ({a / b:.6g}, {b / a:.6g}), |p*_z| growth exponent {1.0 - k:.6g}")
