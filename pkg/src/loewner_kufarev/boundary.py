"""Boundary curves of evolved maps and their regularity tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .flow import Exit, FlowField, flow_map

DEFAULT_RADIUS = 1.0 - 1e-4


class TraceError(RuntimeError):
    """A seed failed to reach the requested time."""

    def __init__(self, message, angle=None):
        super().__init__(message)
        self.angle = angle


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Images ``w(radius e^{i theta_j}, time)`` for equispaced angles, closed implicitly."""

    time: float
    radius: float
    theta: np.ndarray
    points: np.ndarray
    derivatives: np.ndarray | None = None

    @property
    def seeds(self) -> np.ndarray:
        return self.radius * np.exp(1j * self.theta)

    def __len__(self):
        return self.points.size

    def subsample(self, step: int) -> "BoundaryCurve":
        d = None if self.derivatives is None else self.derivatives[::step]
        return BoundaryCurve(self.time, self.radius, self.theta[::step], self.points[::step], d)

    def length(self) -> float:
        return polyline_length(self.points)


def polyline_length(points) -> float:
    points = np.asarray(points)
    return float(np.sum(np.abs(np.diff(np.append(points, points[:1])))))


def circle_angles(n: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n) / n


def trace_boundary(fld: FlowField, time: float, radius: float = DEFAULT_RADIUS, n: int = 256) -> BoundaryCurve:
    """Integrate ``n`` equispaced seeds on the circle of the given radius to ``time``."""
    if not 0.9 <= radius < 1.0 - 1e-6 + 1e-15:
        raise ValueError("trace radius must lie in [0.9, 1 - 1e-6)")
    if n < 16:
        raise ValueError("need at least 16 points")
    theta = circle_angles(n)
    w, wz, exits = flow_map(fld.with_horizon(time), radius * np.exp(1j * theta))
    for th, e in zip(theta, exits):
        if e is not Exit.HORIZON:
            raise TraceError(f"seed at angle {th!r} ended with {e.value}", th)
    return BoundaryCurve(float(time), float(radius), theta, w, wz)


# ---------------------------------------------------------------------------
# Hölder exponent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HolderEstimate:
    exponent: float
    constant: float
    pairwise_exponent: float
    disagreement: bool
    growth: float
    usable_radii: int
    insufficient_range: bool
    worst_angle: float


def holder_radii(n: int = 13, inner: float = 1e-1, outer: float = 1e-4) -> np.ndarray:
    return 1.0 - np.geomspace(inner, outer, n)


def _pairwise_exponent(seeds, points, min_sep):
    """Slope of ``log max |w_i - w_{i+L}|`` against ``log |z_i - z_{i+L}|`` over lags ``L``."""
    n = points.size
    lags = np.unique(np.geomspace(1, n // 4, 12).astype(int))
    d, m = [], []
    for lag in lags:
        sep = float(np.max(np.abs(seeds - np.roll(seeds, -lag))))
        if sep < min_sep:
            continue
        d.append(sep)
        m.append(float(np.max(np.abs(points - np.roll(points, -lag)))))
    if len(d) < 3:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(np.log(d), np.log(m), 1)
    return float(slope), float(intercept)


def estimate_holder(fld: FlowField, time: float, radii=None, n_angles: int = 256,
                    tail: float = 1e-2) -> HolderEstimate:
    """Boundary Hölder exponent of ``w(., time)`` by two estimators.

    Primary: along every ray, regress ``log|w_z|`` on ``log(1 - r)`` over the
    radii with ``1 - r <= tail``; with ``k`` the steepest growth rate among the
    rays, the exponent is ``1 - k``. Rays on which ``|w_z|`` decays do not
    limit the exponent. Secondary: the slope of the largest image separation
    against seed separation on the outermost circle. The two are flagged as
    disagreeing when they differ by more than 0.1.
    """
    radii = holder_radii() if radii is None else np.sort(np.asarray(radii, dtype=float))
    theta = circle_angles(n_angles)
    seeds = radii[:, None] * np.exp(1j * theta)[None, :]
    w, wz, exits = flow_map(fld.with_horizon(time), seeds)
    if any(e is not Exit.HORIZON for e in exits):
        raise TraceError("a seed failed to reach the requested time")
    use = (1.0 - radii) <= tail * (1.0 + 1e-12)
    usable = int(np.count_nonzero(use))
    insufficient = usable < 3
    if insufficient:
        use = np.ones_like(use)
    x = np.log(1.0 - radii[use])
    y = np.log(np.abs(wz[use, :]))
    slopes = np.polyfit(x, y, 1)[0]
    growth = np.maximum(-slopes, 0.0)
    j = int(np.argmax(growth))
    k = float(growth[j])
    exponent = float(min(max(1.0 - k, 0.0), 1.0))

    outer = seeds[-1]
    pair_exp, _ = _pairwise_exponent(outer, w[-1], min_sep=10.0 * (1.0 - radii[-1]))
    beta = max(exponent, 1e-3)
    sep = np.abs(outer[:, None] - outer[None, :])
    img = np.abs(w[-1][:, None] - w[-1][None, :])
    mask = sep > 0
    constant = float(np.max(img[mask] / sep[mask] ** beta))
    return HolderEstimate(exponent, constant, pair_exp,
                          bool(not math.isfinite(pair_exp) or abs(pair_exp - exponent) > 0.1),
                          k, usable, insufficient, float(theta[j]))


# ---------------------------------------------------------------------------
# three-point condition, bounded turning, Jordan test
# ---------------------------------------------------------------------------


def _check_points(points, seeds=None):
    points = np.asarray(points, dtype=complex)
    if points.size < 16:
        raise ValueError("need at least 16 points")
    d = np.abs(points[:, None] - points[None, :])
    np.fill_diagonal(d, np.inf)
    if np.min(d) == 0.0:
        raise ValueError("curve has repeated points")
    return points


def _cyclic(mat):
    """``out[i, g] = mat[i, (i + g) % n]``."""
    n = mat.shape[0]
    cols = (np.arange(n)[:, None] + np.arange(n)[None, :]) % n
    return np.take_along_axis(mat, cols, axis=1)


def three_point_ratio(curve: BoundaryCurve) -> float:
    """Largest normalised three-point ratio over all ordered triples.

    For ``z_j`` on an arc from ``z_i`` to ``z_k`` (either orientation)::

        (|w_i - w_j| / |w_i - w_k|) / (|z_i - z_j| / |z_i - z_k|)

    which equals ``q_ij / q_ik`` with ``q_ab = |w_a - w_b| / |z_a - z_b|``;
    for fixed ``i`` the maximum over ``j`` preceding ``k`` is a prefix maximum,
    so all triples are covered in ``O(n^2)``.
    """
    w = _check_points(curve.points)
    z = curve.seeds
    n = w.size
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.abs(w[:, None] - w[None, :]) / np.abs(z[:, None] - z[None, :])
    q = _cyclic(q)[:, 1:]  # gaps 1 .. n-1
    best = 0.0
    for seq in (q, q[:, ::-1]):
        prefix = np.maximum.accumulate(seq, axis=1)
        best = max(best, float(np.max(prefix[:, :-1] / seq[:, 1:])))
    return best


def bounded_turning(curve: BoundaryCurve, max_points: int = 256) -> float:
    """``max over pairs of diam(smaller arc) / |w_i - w_k|`` (>= 1 for any curve)."""
    pts = _check_points(curve.points)
    step = max(1, int(math.ceil(pts.size / max_points)))
    pts = pts[::step]
    n = pts.size
    dist = np.abs(pts[:, None] - pts[None, :])
    upper = np.triu(np.ones((n, n), dtype=bool))
    best = 1.0
    for i in range(n):
        fwd = (i + np.arange(n)) % n
        bwd = (i - np.arange(n)) % n
        diam_f = np.maximum.accumulate(np.where(upper, dist[np.ix_(fwd, fwd)], 0.0).max(axis=0))
        diam_b = np.maximum.accumulate(np.where(upper, dist[np.ix_(bwd, bwd)], 0.0).max(axis=0))
        g = np.arange(1, n)
        arc = np.minimum(diam_f[g], diam_b[n - g])
        best = max(best, float(np.max(arc / dist[i, fwd[g]])))
    return best


def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def _on_segment(ax, ay, bx, by, cx, cy):
    return ((np.minimum(ax, bx) <= cx) & (cx <= np.maximum(ax, bx))
            & (np.minimum(ay, by) <= cy) & (cy <= np.maximum(ay, by)))


def segments_intersect(p1, p2, q1, q2):
    """Vectorised closed-segment intersection test (touching counts)."""
    o1 = _orient(p1.real, p1.imag, p2.real, p2.imag, q1.real, q1.imag)
    o2 = _orient(p1.real, p1.imag, p2.real, p2.imag, q2.real, q2.imag)
    o3 = _orient(q1.real, q1.imag, q2.real, q2.imag, p1.real, p1.imag)
    o4 = _orient(q1.real, q1.imag, q2.real, q2.imag, p2.real, p2.imag)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    hit |= (o1 == 0) & _on_segment(p1.real, p1.imag, p2.real, p2.imag, q1.real, q1.imag)
    hit |= (o2 == 0) & _on_segment(p1.real, p1.imag, p2.real, p2.imag, q2.real, q2.imag)
    hit |= (o3 == 0) & _on_segment(q1.real, q1.imag, q2.real, q2.imag, p1.real, p1.imag)
    hit |= (o4 == 0) & _on_segment(q1.real, q1.imag, q2.real, q2.imag, p2.real, p2.imag)
    return hit


def jordan_check(curve) -> bool:
    """True iff no two non-adjacent edges of the closed polyline meet."""
    pts = np.asarray(curve.points if isinstance(curve, BoundaryCurve) else curve, dtype=complex)
    if pts.size < 3:
        raise ValueError("need at least three points")
    n = pts.size
    a, b = pts, np.roll(pts, -1)
    lo_x, hi_x = np.minimum(a.real, b.real), np.maximum(a.real, b.real)
    lo_y, hi_y = np.minimum(a.imag, b.imag), np.maximum(a.imag, b.imag)
    for i in range(n - 2):
        j = np.arange(i + 2, n if i > 0 else n - 1)
        if j.size == 0:
            continue
        box = (lo_x[j] <= hi_x[i]) & (hi_x[j] >= lo_x[i]) & (lo_y[j] <= hi_y[i]) & (hi_y[j] >= lo_y[i])
        j = j[box]
        if j.size and np.any(segments_intersect(a[i], b[i], a[j], b[j])):
            return False
    return True


# ---------------------------------------------------------------------------
# rectifiability and inverse continuity
# ---------------------------------------------------------------------------


class Rectifiability(NamedTuple):
    length: float
    converged: bool
    lengths: tuple


def rectifiability(fld: FlowField, time: float, radius: float = DEFAULT_RADIUS,
                   counts=(256, 512, 1024), rel_tol: float = 5e-3) -> Rectifiability:
    """Polyline lengths under angular refinement; converged when successive changes are < 0.5%."""
    counts = tuple(sorted(counts))
    finest = trace_boundary(fld, time, radius, counts[-1])
    lengths = []
    for c in counts:
        if counts[-1] % c:
            raise ValueError("point counts must divide the finest count")
        lengths.append(finest.subsample(counts[-1] // c).length())
    changes = [abs(b - a) / b for a, b in zip(lengths, lengths[1:])]
    return Rectifiability(lengths[-1], all(c < rel_tol for c in changes), tuple(lengths))


@dataclass(frozen=True, eq=False)
class InverseModulus:
    """Sampled modulus of continuity ``delta -> max seed separation`` of the inverse map."""

    deltas: np.ndarray
    modulus: np.ndarray
    spacing: float

    def fit_power(self, exponent: float | None = None, floor: float | None = None):
        """Fit ``C delta^exponent`` in log scale; returns ``(C, exponent, max |log residual|)``."""
        mask = self.modulus > 0
        if floor is not None:
            mask &= self.deltas >= floor
        x, y = np.log(self.deltas[mask]), np.log(self.modulus[mask])
        if exponent is None:
            exponent, log_c = np.polyfit(x, y, 1)
        else:
            log_c = float(np.mean(y - exponent * x))
        res = float(np.max(np.abs(y - (log_c + exponent * x))))
        return math.exp(log_c), float(exponent), res


def inverse_modulus_from_curve(curve: BoundaryCurve, deltas) -> InverseModulus:
    deltas = np.sort(np.asarray(deltas, dtype=float))
    w, z = curve.points, curve.seeds
    iu = np.triu_indices(w.size, k=1)
    img = np.abs(w[:, None] - w[None, :])[iu]
    sep = np.abs(z[:, None] - z[None, :])[iu]
    order = np.argsort(img, kind="stable")
    img, run = img[order], np.maximum.accumulate(sep[order])
    k = np.searchsorted(img, deltas, side="right")
    modulus = np.where(k > 0, run[np.maximum(k - 1, 0)], 0.0)
    spacing = float(np.max(np.abs(np.diff(np.append(w, w[:1])))))
    return InverseModulus(deltas, modulus, spacing)


def inverse_modulus(fld: FlowField, time: float, deltas, radius: float = DEFAULT_RADIUS,
                    n: int = 1024) -> InverseModulus:
    """Empirical modulus of continuity of ``w^{-1}`` on the traced boundary."""
    return inverse_modulus_from_curve(trace_boundary(fld, time, radius, n), deltas)


# ---------------------------------------------------------------------------
# composition splitting
# ---------------------------------------------------------------------------


def _disc_samples(count, radius, seed):
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, count))
    return r * np.exp(2j * math.pi * rng.uniform(0.0, 1.0, count))


def window_deviation(fld: FlowField, time: float, radius: float, n_points: int = 64) -> float:
    """``max |w_z - 1|`` over ``n_points`` on the circle of the given radius at ``time``."""
    seeds = radius * np.exp(1j * circle_angles(n_points))
    _, wz, exits = flow_map(fld.with_horizon(time), seeds)
    if any(e is not Exit.HORIZON for e in exits):
        return math.inf
    return float(np.max(np.abs(wz - 1.0)))


def window_time(fld: FlowField, t_max: float, radius: float = 0.9, n_points: int = 64,
                bound: float = 0.25, rel_tol: float = 1e-3) -> float:
    """Largest time (by bisection) with ``max |w_z - 1| <= bound`` on the circle."""
    if window_deviation(fld, t_max, radius, n_points) <= bound:
        return float(t_max)
    lo, hi = 0.0, float(t_max)
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if window_deviation(fld, mid, radius, n_points) <= bound:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise RuntimeError("no positive window time found")
    return lo


@dataclass(frozen=True, eq=False)
class SplitResult:
    pieces: list
    max_error: float
    tolerance: float
    ok: bool
    piece_deviation: list
    window_pairs: list = field(default_factory=list)
    three_point: list = field(default_factory=list)

    @property
    def window_ok(self) -> bool:
        return all(self.window_pairs) and len(self.window_pairs) == len(self.pieces)


class CompositionMismatch(RuntimeError):
    pass


def compose(pieces, z):
    """Apply the piece maps in time order; returns ``(w, w_z)`` of the composition."""
    w = np.asarray(z, dtype=complex)
    wz = np.ones_like(w)
    for piece in pieces:
        w, wz, exits = flow_map(piece, w, wz0=wz)
        if any(e is not Exit.HORIZON for e in exits):
            raise TraceError("composition piece did not reach its horizon")
    return w, wz


def split_composition(fld: FlowField, time: float, n: int, probes: int = 100,
                      probe_radius: float = 0.95, window_radius: float = 0.9,
                      window_points: int = 64, pairs: int = 1000, curve_points: int = 256,
                      seed: int = 0, strict: bool = True) -> SplitResult:
    """Split the flow on ``[0, time]`` into ``n`` equal pieces and verify the recomposition.

    The piece on ``[i T/n, (i+1) T/n]`` integrates the term shifted by
    ``i T/n`` over ``T/n``; the direct map equals the pieces applied in time
    order. For every piece the largest ``|w_z - 1|`` on the window circle is
    reported; when it is at most 1/4 the two-point window
    ``3/4 <= |w(z1) - w(z2)| / |z1 - z2| <= 5/4`` is checked on sampled
    pairs inside the window disc together with the three-point ratio of the
    piece's image of the window circle.
    """
    if n < 1:
        raise ValueError("need at least one piece")
    dt = time / n
    pieces = [FlowField(fld.term.shifted(i * dt), fld.direction, dt, fld.rtol, fld.atol,
                        fld.boundary_tol, fld.max_steps, fld.step_cap) for i in range(n)]
    z = _disc_samples(probes, probe_radius, seed)
    direct, _, exits = flow_map(fld.with_horizon(time), z)
    if any(e is not Exit.HORIZON for e in exits):
        raise TraceError("direct flow did not reach the horizon")
    composed = compose(pieces, z)[0]
    err = float(np.max(np.abs(composed - direct)))
    tol = 10.0 * float(np.max(fld.atol + fld.rtol * np.abs(direct)))
    ok = err <= tol
    if strict and not ok:
        raise CompositionMismatch(f"recomposition error {err:.3e} exceeds {tol:.3e}")

    deviation, window, ratios = [], [], []
    z1 = _disc_samples(pairs, window_radius, seed + 1)
    z2 = _disc_samples(pairs, window_radius, seed + 2)
    circle = window_radius * np.exp(1j * circle_angles(curve_points))
    for piece in pieces:
        dev = window_deviation(piece, piece.horizon, window_radius, window_points)
        deviation.append(dev)
        if dev <= 0.25:
            w1 = flow_map(piece, z1)[0]
            w2 = flow_map(piece, z2)[0]
            q = np.abs(w1 - w2) / np.abs(z1 - z2)
            window.append(bool(np.all((q >= 0.75) & (q <= 1.25))))
            img = flow_map(piece, circle)[0]
            ratios.append(three_point_ratio(BoundaryCurve(piece.horizon, window_radius,
                                                          circle_angles(curve_points), img)))
    return SplitResult(pieces, err, tol, ok, deviation, window, ratios)
