"""Integration of the Loewner-Kufarev ODE and its derivative co-evolution.

The state of one seed is the pair ``(w, w_z)``::

    forward   dw/dt = -w p(w, t),   dw_z/dt = -w_z (p(w, t) + w p_z(w, t))
    backward  dw/dt = +w p(w, t),   dw_z/dt = +w_z (p(w, t) + w p_z(w, t))

with ``w(0) = z`` and ``w_z(0) = 1``. Seeds are integrated together by a
vectorised Dormand-Prince 5(4) pair in which every seed keeps its own step
size, so a batch gives the same numbers as integrating the seeds one by one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate as sp_integrate

from .driving import GUARD_RADIUS, DomainError, DrivingTerm


class Direction(enum.Enum):
    FORWARD = -1
    BACKWARD = 1

    @property
    def sign(self) -> int:
        return self.value


class Exit(enum.Enum):
    HORIZON = "horizon_reached"
    BOUNDARY = "boundary_reached"
    STEP_FAILURE = "step_failure"


@dataclass(frozen=True)
class FlowField:
    term: DrivingTerm
    direction: Direction = Direction.FORWARD
    horizon: float = 1.0
    rtol: float = 1e-10
    atol: float = 1e-10
    boundary_tol: float = 1e-6
    max_steps: int = 200_000
    step_cap: float = 0.5

    def __post_init__(self):
        if isinstance(self.direction, str):
            object.__setattr__(self, "direction", Direction[self.direction.upper()])
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if min(self.rtol, self.atol, self.boundary_tol, self.step_cap) <= 0:
            raise ValueError("tolerances must be positive")

    def with_horizon(self, horizon: float) -> "FlowField":
        return _replace(self, horizon=float(horizon))


def _replace(obj, **changes):
    from dataclasses import replace
    return replace(obj, **changes)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted integrator steps of one seed, starting with ``(0, z, 1)``."""

    seed: complex
    t: np.ndarray
    w: np.ndarray
    wz: np.ndarray
    exit: Exit
    field: FlowField

    @property
    def final(self) -> complex:
        return complex(self.w[-1])

    @property
    def final_derivative(self) -> complex:
        return complex(self.wz[-1])

    @property
    def gamma(self) -> complex | None:
        """Last stored point when the trajectory stopped at the boundary."""
        return self.final if self.exit is Exit.BOUNDARY else None

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.w)

    def __len__(self):
        return self.t.size


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

_SAFETY, _MIN_FACTOR, _MAX_FACTOR = 0.9, 0.2, 5.0


def _rhs(term, sign, t, w, v):
    """Right-hand side; points outside the guard radius produce NaN."""
    inside = np.abs(w) < GUARD_RADIUS
    if np.all(inside):
        p, dp = term.value_and_derivative(w, t)
    else:
        p = np.full(w.shape, np.nan, dtype=complex)
        dp = np.full(w.shape, np.nan, dtype=complex)
        if np.any(inside):
            tt = t[inside] if np.ndim(t) else t
            p[inside], dp[inside] = term.value_and_derivative(w[inside], tt)
    return sign * w * p, sign * v * (p + w * dp)


def _integrate_batch(fld: FlowField, seeds, wz0=None, record=True):
    """Integrate all seeds to the horizon; returns per-seed sample arrays and exits."""
    z = np.asarray(seeds, dtype=complex).ravel()
    n = z.size
    term, sign = fld.term, fld.direction.sign
    horizon = fld.horizon
    w = z.copy()
    v = np.ones(n, dtype=complex) if wz0 is None else np.asarray(wz0, dtype=complex).ravel().copy()
    t = np.zeros(n)
    exits = np.full(n, Exit.HORIZON, dtype=object)
    active = np.ones(n, dtype=bool)
    barrier = 1.0 - fld.boundary_tol
    breaks = np.sort(np.asarray(term.discontinuities(), dtype=float))
    breaks = breaks[(breaks > 0) & (breaks < horizon)]
    stops = np.append(breaks, horizon)

    if fld.direction is Direction.BACKWARD:
        out = np.abs(z) >= barrier
        exits[out] = Exit.BOUNDARY
        active &= ~out

    k1w, k1v = _rhs(term, sign, np.zeros(n), w, v)
    bad = ~(np.isfinite(k1w) & np.isfinite(k1v))
    if np.any(bad & active):
        raise DomainError("seed outside the evaluation guard radius")
    speed = np.abs(k1w) + np.abs(k1v) / np.maximum(np.abs(v), 1e-300)
    h = np.minimum(horizon, 0.01 / (1.0 + speed))

    rec_idx, rec_t, rec_w, rec_v = [np.arange(n)], [t.copy()], [w.copy()], [v.copy()]
    steps = np.zeros(n, dtype=np.int64)

    while np.any(active):
        idx = np.flatnonzero(active)
        ti, wi, vi = t[idx], w[idx], v[idx]
        next_stop = stops[np.minimum(np.searchsorted(stops, ti, side="right"), stops.size - 1)]
        # a step may move w by at most step_cap * (1 - |w|)
        cap = fld.step_cap * np.maximum(1.0 - np.abs(wi), 1e-300) / np.maximum(np.abs(k1w[idx]), 1e-300)
        hi = np.minimum(np.minimum(h[idx], cap), next_stop - ti)
        kw = [k1w[idx]]
        kv = [k1v[idx]]
        for s in range(1, 7):
            a = _A[s]
            ws = wi + hi * sum(a[j] * kw[j] for j in range(s) if a[j] != 0.0)
            vs = vi + hi * sum(a[j] * kv[j] for j in range(s) if a[j] != 0.0)
            fw, fv = _rhs(term, sign, ti + _C[s] * hi, ws, vs)
            kw.append(fw)
            kv.append(fv)
        w_new, v_new = ws, vs  # stage 7 evaluates at the 5th order solution (FSAL)
        ew = hi * sum(_E[j] * kw[j] for j in range(7) if _E[j] != 0.0)
        ev = hi * sum(_E[j] * kv[j] for j in range(7) if _E[j] != 0.0)
        sw = fld.atol + fld.rtol * np.maximum(np.abs(wi), np.abs(w_new))
        sv = fld.atol + fld.rtol * np.maximum(np.abs(vi), np.abs(v_new))
        err = np.maximum(np.abs(ew) / sw, np.abs(ev) / sv)
        finite = np.isfinite(err) & np.isfinite(kw[6]) & np.isfinite(kv[6])
        err = np.where(finite, err, np.inf)
        accept = err <= 1.0

        with np.errstate(divide="ignore"):
            factor = np.where(err == 0.0, _MAX_FACTOR,
                              np.clip(_SAFETY * err ** -0.2, _MIN_FACTOR, _MAX_FACTOR))
        factor = np.where(finite, factor, 0.25)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h[idx] = hi * factor

        acc = idx[accept]
        if acc.size:
            t_new = ti[accept] + hi[accept]
            hit = np.isclose(t_new, next_stop[accept], rtol=0.0, atol=1e-14 * max(1.0, horizon))
            t_new = np.where(hit, next_stop[accept], t_new)
            t[acc] = t_new
            w[acc] = w_new[accept]
            v[acc] = v_new[accept]
            k1w[acc] = kw[6][accept]
            k1v[acc] = kv[6][accept]
            steps[acc] += 1
            if record:
                rec_idx.append(acc)
                rec_t.append(t[acc].copy())
                rec_w.append(w[acc].copy())
                rec_v.append(v[acc].copy())
            done = t[acc] >= horizon
            exits[acc[done]] = Exit.HORIZON
            active[acc[done]] = False
            if fld.direction is Direction.BACKWARD:
                out = (np.abs(w[acc]) >= barrier) & ~done
                exits[acc[out]] = Exit.BOUNDARY
                active[acc[out]] = False

        tiny = h[idx] <= 1e-14 * np.maximum(1.0, np.abs(ti))
        fail = idx[(tiny & ~accept) | (steps[idx] >= fld.max_steps)]
        exits[fail] = Exit.STEP_FAILURE
        active[fail] = False

    if not record:
        return [(np.array([t[i]]), np.array([w[i]]), np.array([v[i]])) for i in range(n)], list(exits)
    all_idx = np.concatenate(rec_idx)
    order = np.argsort(all_idx, kind="stable")
    bounds = np.searchsorted(all_idx[order], np.arange(n + 1))
    cols = [np.concatenate(c)[order] for c in (rec_t, rec_w, rec_v)]
    samples = [tuple(c[bounds[i]:bounds[i + 1]] for c in cols) for i in range(n)]
    return samples, list(exits)


def _check_seeds(fld: FlowField, seeds: np.ndarray):
    if not np.all(np.isfinite(seeds)):
        raise DomainError("non-finite seed")
    limit = 1.0 if fld.direction is Direction.FORWARD else 1.0 - fld.boundary_tol
    if np.any(np.abs(seeds) >= min(limit, GUARD_RADIUS + 1e-12)):
        raise DomainError(f"seed modulus must be below {limit!r}")


def integrate(fld: FlowField, seed) -> Trajectory:
    """Integrate one seed and its derivative up to the horizon."""
    return integrate_grid(fld, [seed])[0]


def integrate_grid(fld: FlowField, seeds: Sequence) -> list[Trajectory]:
    """Integrate many seeds; result order follows input order."""
    seeds = np.asarray(seeds, dtype=complex).ravel()
    if seeds.size == 0:
        return []
    _check_seeds(fld, seeds)
    samples, exits = _integrate_batch(fld, seeds)
    return [Trajectory(complex(z), t, w, v, e, fld)
            for z, (t, w, v), e in zip(seeds, samples, exits)]


def flow_map(fld: FlowField, seeds, wz0=None):
    """Endpoints ``(w(T), w_z(T), exits)`` for an array of seeds, without storing paths."""
    seeds = np.asarray(seeds, dtype=complex)
    shape = seeds.shape
    flat = seeds.ravel()
    if flat.size == 0:
        return seeds.copy(), seeds.copy(), []
    if wz0 is None:
        _check_seeds(fld, flat)
    samples, exits = _integrate_batch(fld, flat, wz0=wz0, record=False)
    w = np.array([s[1][-1] for s in samples]).reshape(shape)
    v = np.array([s[2][-1] for s in samples]).reshape(shape)
    return w, v, exits


# ---------------------------------------------------------------------------
# radial reparametrisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialSamples:
    rho: np.ndarray
    t: np.ndarray
    w: np.ndarray
    dt_drho: np.ndarray


class _RadialModel:
    """Evaluate ``t(rho)`` and ``w(rho)`` between the stored samples.

    Each query starts from the nearest stored sample and integrates the
    radial system ``dt/drho = sign/(rho Re p)``, ``d arg w/drho = Im p/(rho Re p)``
    with classical RK4 sub-steps, so the accuracy does not depend on how
    sparse the adaptive samples are.
    """

    substeps = 8

    def __init__(self, traj: Trajectory):
        if len(traj) < 2:
            raise ValueError("need at least two samples")
        rho = np.abs(traj.w)
        diffs = np.diff(rho)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("trajectory modulus is not strictly monotone")
        order = np.argsort(rho)
        self.rho = rho[order]
        self.t = traj.t[order]
        self.arg = np.unwrap(np.angle(traj.w[order]))
        self.sign = traj.field.direction.sign
        self.term = traj.field.term

    def _rates(self, rho, t, arg):
        p = self.term.value(rho * np.exp(1j * arg), t)
        return self.sign / (rho * p.real), p.imag / (rho * p.real)

    def at(self, rho):
        rho = np.asarray(rho, dtype=float)
        k = np.clip(np.searchsorted(self.rho, rho), 1, self.rho.size - 1)
        near = np.where(rho - self.rho[k - 1] <= self.rho[k] - rho, k - 1, k)
        r, t, a = self.rho[near].copy(), self.t[near].copy(), self.arg[near].copy()
        h = (rho - r) / self.substeps
        for _ in range(self.substeps):
            t1, a1 = self._rates(r, t, a)
            t2, a2 = self._rates(r + h / 2, t + h / 2 * t1, a + h / 2 * a1)
            t3, a3 = self._rates(r + h / 2, t + h / 2 * t2, a + h / 2 * a2)
            t4, a4 = self._rates(r + h, t + h * t3, a + h * a3)
            t = t + h / 6 * (t1 + 2 * t2 + 2 * t3 + t4)
            a = a + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
            r = r + h
        return t, rho * np.exp(1j * a)


def radial_reparametrize(traj: Trajectory, rho=None) -> RadialSamples:
    """Resample a trajectory by its modulus ``rho = |w|``.

    ``rho`` defaults to the stored moduli; ``dt/drho = sign / (rho Re p)`` is
    evaluated at the interpolated points.
    """
    model = _RadialModel(traj)
    if rho is None:
        rho = model.rho
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < model.rho[0] - 1e-15) or np.any(rho > model.rho[-1] + 1e-15):
        raise ValueError("requested radii outside the trajectory range")
    t, w = model.at(rho)
    p = model.term.value(w, t)
    return RadialSamples(rho, t, w, model.sign / (rho * p.real))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def arc_length_in_annulus(traj: Trajectory, r: float) -> float:
    """Length of the integral curve in the cylinder ``{r < |w| < 1}``.

    Integrates ``sqrt(|dw/drho|^2 + (dt/drho)^2)`` over the covered radii,
    where ``|dw/drho| = |p| / Re p`` and ``|dt/drho| = 1 / (rho Re p)``.
    """
    if not 0.5 < r < 1.0:
        raise DomainError("annulus radius must lie in (1/2, 1)")
    rho_all = np.abs(traj.w)
    lo, hi = max(r, rho_all.min()), rho_all.max()
    if hi <= lo:
        return 0.0
    model = _RadialModel(traj)
    knots = model.rho[(model.rho > lo) & (model.rho < hi)]
    edges = np.concatenate([[lo], knots, [hi]])
    a, b = edges[:-1], edges[1:]
    x = 0.5 * (b - a)[:, None] * _GL_X + 0.5 * (a + b)[:, None]
    t, w = model.at(x)
    p = model.term.value(w, t)
    speed = np.hypot(np.abs(p) / p.real, 1.0 / (x * p.real))
    return float(np.sum(0.5 * (b - a) * (speed @ _GL_W)))


def log_derivative_by_radius(fld: FlowField, seed, rho_end: float, rtol: float = 1e-12) -> float:
    """``log|w_z|`` from the radial integral representation of the derivative.

    Integrates, with the modulus as the independent variable,

        d log|w_z| / d rho = (1 + Re(w p_z) / Re p) / rho

    together with ``t(rho)`` and ``arg w(rho)``, from ``|seed|`` to ``rho_end``.
    This does not use the co-evolved derivative and serves as an independent
    reconstruction of it.
    """
    seed = complex(seed)
    r0 = abs(seed)
    if r0 == 0.0:
        raise DomainError("seed at the origin has no radial parametrisation")
    sign = fld.direction.sign
    term = fld.term

    def rhs(rho, y):
        t, arg, _ = y
        w = rho * np.exp(1j * arg)
        p, dp = term.value_and_derivative(np.asarray(w), t)
        p, dp = complex(p), complex(dp)
        return [sign / (rho * p.real), p.imag / (rho * p.real),
                (1.0 + (w * dp).real / p.real) / rho]

    sol = sp_integrate.solve_ivp(rhs, (r0, rho_end), [0.0, math.atan2(seed.imag, seed.real), 0.0],
                                 method="DOP853", rtol=rtol, atol=1e-14)
    if not sol.success:
        raise RuntimeError(sol.message)
    return float(sol.y[2, -1])
