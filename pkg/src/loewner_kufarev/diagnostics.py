"""Analytic characteristics of driving terms, estimated on polar grids.

The distortion characteristic of a term is

    sup_{|z|<1} (1 - |z|^2) |p'(z)| / Re p(z),

which is at most 2 for every function of positive real part and does not
increase under composition with self-maps of the disc fixing the origin.
Half of it bounds the growth constant ``k`` in
``Re(z p'(z)) / (|z| Re p(z)) <= k / (1 - r) + ...`` and hence predicts a
boundary Hölder exponent ``1 - k``.

The growth fits estimate constants in

    |p| / Re p <= C1 / (1 - r)^alpha        (modulus_ratio)
    Re p >= C2 (1 - r)^alpha                 (real_part)

by least squares of the log extreme over circles against ``log(1 - r)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .driving import DrivingTerm

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
R_MAX = 1.0 - 1e-6


def golden_max(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Golden-section search for a maximum of a unimodal ``f`` on ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


# log-distance coordinate s = -log10(1 - r) keeps the boundary layer resolved
def _s_of(r):
    return -np.log10(1.0 - np.asarray(r))


def _r_of(s):
    return 1.0 - 10.0 ** (-np.asarray(s))


S_MAX = float(_s_of(R_MAX))


def polar_radii(n: int, r_max: float = R_MAX) -> np.ndarray:
    """Half linear on ``[0, 0.95]``, half geometric towards ``r_max``."""
    n_lin = n // 2
    lin = np.linspace(0.0, 0.95, n_lin, endpoint=False)
    geo = _r_of(np.linspace(_s_of(0.95), _s_of(r_max), n - n_lin))
    return np.concatenate([lin, geo])


def distortion_density(term: DrivingTerm, z, t=0.0):
    """``(1 - |z|^2) |p'(z)| / Re p(z)``."""
    p, dp = term.value_and_derivative(np.asarray(z, dtype=complex), t)
    return (1.0 - np.abs(z) ** 2) * np.abs(dp) / p.real


@dataclass(frozen=True)
class CharacteristicEstimate:
    value: float
    argmax: complex
    coarse_value: float
    refined_value: float | None
    converged: bool | None


def _polish(f, r0: float, theta0: float, dtheta: float, rounds: int = 12):
    """Coordinate-wise golden-section ascent in ``(s, theta)`` with sliding windows."""
    s = float(_s_of(r0)) if r0 > 0 else 0.0
    th = theta0
    best = f(_r_of(s), th)
    ds = 0.25
    for _ in range(rounds):
        prev = best
        th, val = golden_max(lambda x: f(_r_of(s), x), th - dtheta, th + dtheta)
        best = max(best, val)
        lo, hi = max(0.0, s - ds), min(S_MAX, s + ds)
        for _slide in range(40):
            s_new, val = golden_max(lambda x: f(_r_of(x), th), lo, hi)
            best = max(best, val)
            width = hi - lo
            if s_new > hi - 0.02 * width and hi < S_MAX:
                lo, hi = s_new - 0.5 * ds, min(S_MAX, s_new + ds)
            elif s_new < lo + 0.02 * width and lo > 0.0:
                lo, hi = max(0.0, s_new - ds), s_new + 0.5 * ds
            else:
                break
        s = s_new
        dtheta = max(dtheta * 0.5, 1e-12)
        if best - prev <= 1e-13 * max(1.0, abs(best)):
            break
    return best, complex(_r_of(s) * np.exp(1j * th))


def _grid_sup(term, t, n_radii, n_angles, polish, starts):
    radii = polar_radii(n_radii)
    angles = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    z = radii[:, None] * np.exp(1j * angles)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = distortion_density(term, z, t)
    q = np.where(np.isfinite(q), q, -np.inf)
    flat = np.argsort(q, axis=None)[::-1]
    i, j = np.unravel_index(flat[0], q.shape)
    best, where = float(q[i, j]), complex(z[i, j])
    coarse = best
    if polish:
        def f(r, th):
            with np.errstate(all="ignore"):
                v = float(distortion_density(term, np.asarray(r * np.exp(1j * th)), t))
            return v if math.isfinite(v) else -math.inf

        dtheta = 2.0 * math.pi / n_angles
        seen = []
        for k in flat[: 50 * starts]:
            i, j = np.unravel_index(k, q.shape)
            if any(abs(i - a) <= 2 and min(abs(j - b), n_angles - abs(j - b)) <= 2 for a, b in seen):
                continue
            seen.append((i, j))
            val, loc = _polish(f, float(radii[i]), float(angles[j]), dtheta)
            if val > best:
                best, where = val, loc
            if len(seen) >= starts:
                break
    return best, where, coarse


def estimate_characteristic_report(term: DrivingTerm, t: float = 0.0, n_radii: int = 256,
                                   n_angles: int = 256, polish: bool = True, starts: int = 6,
                                   check_convergence: bool = False) -> CharacteristicEstimate:
    """Grid supremum plus golden-section polish; every reported value is attained at a point."""
    best, where, coarse = _grid_sup(term, t, n_radii, n_angles, polish, starts)
    refined, converged = None, None
    if check_convergence:
        refined, where2, _ = _grid_sup(term, t, 2 * n_radii, 2 * n_angles, polish, starts)
        converged = abs(refined - best) <= 0.01 * max(abs(refined), 1e-300) or refined == best
        if refined > best:
            best, where = refined, where2
    return CharacteristicEstimate(best, where, coarse, refined, converged)


def estimate_characteristic(term: DrivingTerm, t: float = 0.0, n_radii: int = 256,
                            n_angles: int = 256, polish: bool = True) -> float:
    """Lower estimate of ``sup (1 - |z|^2) |p'| / Re p`` over the disc."""
    return estimate_characteristic_report(term, t, n_radii, n_angles, polish).value


# ---------------------------------------------------------------------------
# growth fits
# ---------------------------------------------------------------------------


def _circle_extreme(fn, radii, n_angles, mode, polish=True):
    """Extreme of ``fn(z)`` over each circle; returns values and locations."""
    angles = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    z = radii[:, None] * np.exp(1j * angles)[None, :]
    with np.errstate(all="ignore"):
        q = fn(z)
    sgn = 1.0 if mode == "max" else -1.0
    q = np.where(np.isfinite(q), sgn * q, -np.inf)
    j = np.argmax(q, axis=1)
    vals = q[np.arange(radii.size), j].copy()
    locs = z[np.arange(radii.size), j].copy()
    if polish:
        d = 2.0 * math.pi / n_angles
        for i, r in enumerate(radii):
            def f(th, r=r):
                with np.errstate(all="ignore"):
                    v = sgn * float(fn(np.asarray(r * np.exp(1j * th))))
                return v if math.isfinite(v) else -math.inf
            th, v = golden_max(f, angles[j[i]] - d, angles[j[i]] + d, tol=1e-13)
            if v > vals[i]:
                vals[i], locs[i] = v, r * np.exp(1j * th)
    return sgn * vals, locs


def fit_radii(n: int = 40, inner: float = 0.9, outer: float = 0.9999) -> np.ndarray:
    return 1.0 - np.geomspace(1.0 - inner, 1.0 - outer, n)


@dataclass(frozen=True)
class GrowthFit:
    """Fitted bound ``quantity <= C (1-r)^(-alpha)`` (or ``>= C (1-r)^alpha``)."""

    which: str
    C: float
    alpha: float
    residual: float
    satisfied: bool
    radii: np.ndarray = field(repr=False, compare=False)
    extremes: np.ndarray = field(repr=False, compare=False)
    worst_point: complex = 0j


def _log_fit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def _growth(which, radii, q, locs, slack, alpha=None, envelope=False):
    x = np.log(1.0 - radii)
    y = np.log(q)
    # modulus_ratio: y ~ log C - alpha x ;  real_part: y ~ log C + alpha x
    growing = which != "real_part"
    sgn = -1.0 if growing else 1.0
    if alpha is None:
        slope, _ = _log_fit(x, y)
        alpha = max(sgn * slope, 0.0)
    shifted = y - sgn * alpha * x
    if envelope:
        # smallest constant for which the bound holds at every radius
        log_c = float(np.max(shifted) if growing else np.min(shifted))
    else:
        log_c = float(np.mean(shifted))
    fitted = log_c + sgn * alpha * x
    violation = y - fitted if growing else fitted - y
    worst = int(np.argmax(violation))
    residual = float(max(violation[worst], 0.0))
    satisfied = residual <= slack and 0.0 <= alpha < 1.0
    return GrowthFit(which, math.exp(log_c), float(alpha), residual, satisfied,
                     radii, q, complex(locs[worst]))


def _fit_quantity(term, which, t):
    if which == "modulus_ratio":
        def fn(z):
            p = term.value(z, t)
            return np.abs(p) / p.real
        return fn, "max"
    if which == "real_part":
        return (lambda z: term.value(z, t).real), "min"
    if which == "derivative":
        return (lambda z: np.abs(term.derivative(z, t))), "max"
    raise ValueError(f"unknown growth quantity {which!r}")


def fit_growth(term: DrivingTerm, which: str, t: float = 0.0, radii=None, n_angles: int = 1024,
               slack: float = 0.1, alpha: float | None = None) -> GrowthFit:
    """Fit the growth of ``|p|/Re p`` (``modulus_ratio``) or ``|p_z|`` (``derivative``), or the decay of ``Re p`` (``real_part``).

    The extreme over each circle is regressed in log-log form against
    ``1 - r`` on ``r`` in ``[0.9, 0.9999]``. Negative growth exponents are
    clamped to zero (the quantity is then simply bounded). ``residual`` is the
    largest log-scale violation of the fitted bound; passing ``alpha`` fixes
    the exponent and only the constant is fitted.
    """
    radii = fit_radii() if radii is None else np.asarray(radii, dtype=float)
    fn, mode = _fit_quantity(term, which, t)
    q, locs = _circle_extreme(fn, radii, n_angles, mode)
    if np.any(~np.isfinite(q)) or np.any(q <= 0):
        raise FloatingPointError("real part vanished numerically; the term left the class")
    return _growth(which, radii, q, locs, slack, alpha)


def refit_common(a: GrowthFit, b: GrowthFit, slack: float = 0.1) -> tuple[GrowthFit, GrowthFit]:
    """Refit both bounds with the larger of the two exponents.

    Both conditions weaken as the exponent grows, so a pair that holds with
    exponents ``a1`` and ``a2`` also holds jointly with ``max(a1, a2)``. The
    constants are the envelopes over the fitted radii; residuals and the
    pass flags are those of the individual fits.
    """
    alpha = max(a.alpha, b.alpha)
    out = []
    for fit in (a, b):
        common = _growth(fit.which, fit.radii, fit.extremes, np.full(fit.radii.size, fit.worst_point),
                         slack, alpha, envelope=True)
        out.append(replace(common, residual=fit.residual, satisfied=fit.satisfied and common.satisfied))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    status: str  # "holds-on-grid", "fails-at", "not-applicable"
    detail: dict
    where: complex | None = None

    @property
    def holds(self) -> bool:
        return self.status == "holds-on-grid"


def _bounded(term, fn, mode, t, tol):
    """Is ``fn`` bounded (``mode='max'``) or bounded away from 0 (``'min'``) near the circle?"""
    radii = fit_radii()
    q, locs = _circle_extreme(fn, radii, 512, mode)
    x = np.log(1.0 - radii)
    slope, _ = _log_fit(x, np.log(np.maximum(np.abs(q), 1e-300)))
    growth = -slope if mode == "max" else slope
    k = int(np.argmax(q) if mode == "max" else np.argmin(q))
    return growth <= tol, float(q[k]), complex(locs[k]), growth


def _quasiconformal_quantity(term, t):
    def fn(z):
        p, dp = term.value_and_derivative(z, t)
        return np.maximum((z * dp).real / (np.abs(z) * p.real), 1e-300)
    return fn


HYPOTHESES = ("inverse_continuity", "holder_boundary", "quasiconformal_boundary", "half_plane", "strip", "sector")


def check_hypotheses(term: DrivingTerm, t: float = 0.0, characteristic: float | None = None,
                     slack: float = 0.1, alpha_slack: float = 0.05,
                     h_slack: float = 0.02) -> dict[str, Verdict]:
    """Grid verdicts for the hypotheses of the boundary-regularity results.

    ``inverse_continuity``      both growth bounds with a common exponent < 1
    ``holder_boundary``         characteristic < 2, giving exponent 1 - H/2
    ``quasiconformal_boundary`` ``Re(z p')/(|z| Re p)`` grows slower than 1/(1-r)
    ``half_plane``              ``Re p`` bounded below by a positive constant
    ``strip``                   ``Re p`` bounded above and below
    ``sector``                  ``|Im p| / Re p`` bounded
    """
    out: dict[str, Verdict] = {}
    try:
        ratio = fit_growth(term, "modulus_ratio", t, slack=slack)
        real = fit_growth(term, "real_part", t, slack=slack)
    except FloatingPointError as exc:
        out["inverse_continuity"] = Verdict("not-applicable", {"reason": str(exc)})
    else:
        a, b = refit_common(ratio, real, slack)
        detail = {"alpha": a.alpha, "C_ratio": a.C, "C_real": b.C,
                  "residual_ratio": a.residual, "residual_real": b.residual}
        if a.satisfied and b.satisfied:
            out["inverse_continuity"] = Verdict("holds-on-grid", detail)
        else:
            bad = a if not a.satisfied else b
            out["inverse_continuity"] = Verdict("fails-at", detail, bad.worst_point)

    if characteristic is None:
        est = estimate_characteristic_report(term, t)
        characteristic, where = est.value, est.argmax
    else:
        where = None
    k = characteristic / 2.0
    detail = {"characteristic": characteristic, "k": k, "predicted_exponent": max(1.0 - k, 0.0)}
    if characteristic * (1.0 + h_slack) < 2.0:
        out["holder_boundary"] = Verdict("holds-on-grid", detail)
    else:
        out["holder_boundary"] = Verdict("fails-at", detail, where)

    ok, val, loc, growth = _bounded(term, _quasiconformal_quantity(term, t), "max", t, 1.0 - alpha_slack)
    detail = {"growth_exponent": growth, "sampled_max": val}
    out["quasiconformal_boundary"] = Verdict("holds-on-grid" if ok else "fails-at", detail,
                                             None if ok else loc)

    low_ok, low, low_at, low_growth = _bounded(term, lambda z: term.value(z, t).real, "min", t, alpha_slack)
    detail = {"sampled_min_re": low, "decay_exponent": low_growth}
    out["half_plane"] = Verdict("holds-on-grid" if low_ok else "fails-at", detail,
                                None if low_ok else low_at)

    high_ok, high, high_at, high_growth = _bounded(term, lambda z: term.value(z, t).real, "max", t, alpha_slack)
    detail = {"sampled_min_re": low, "sampled_max_re": high, "growth_exponent": high_growth}
    if low_ok and high_ok:
        out["strip"] = Verdict("holds-on-grid", detail)
    else:
        out["strip"] = Verdict("fails-at", detail, high_at if not high_ok else low_at)

    def tilt(z):
        p = term.value(z, t)
        return np.abs(p.imag) / p.real

    ok, val, loc, growth = _bounded(term, tilt, "max", t, alpha_slack)
    out["sector"] = Verdict("holds-on-grid" if ok else "fails-at",
                            {"ratio_bound": val, "growth_exponent": growth}, None if ok else loc)
    return out


def predicted_holder(characteristic: float) -> float | None:
    """``1 - H/2`` clamped to ``(0, 1]``; undefined once the characteristic reaches 2."""
    if not characteristic < 2.0:
        return None
    return min(max(1.0 - characteristic / 2.0, np.nextafter(0.0, 1.0)), 1.0)


def growth_link_holds(term: DrivingTerm, characteristic: float, t: float = 0.0, slack: float = 1e-3,
                      r_min: float = 0.9, n_radii: int = 64, n_angles: int = 512) -> tuple[bool, float]:
    """Check ``Re(z p')/(|z| Re p) <= (H + slack) / (2 (1 - r))`` for ``r >= r_min``.

    Returns the verdict and the largest sampled value of
    ``2 (1 - r) Re(z p') / (|z| Re p)``.
    """
    radii = 1.0 - np.geomspace(1.0 - r_min, 1.0 - R_MAX, n_radii)
    z = radii[:, None] * np.exp(1j * np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False))
    p, dp = term.value_and_derivative(z, t)
    lhs = 2.0 * (1.0 - radii[:, None]) * (z * dp).real / (np.abs(z) * p.real)
    worst = float(np.max(lhs))
    return worst <= characteristic + slack, worst


# ---------------------------------------------------------------------------
# driver seminorm
# ---------------------------------------------------------------------------


def driver_sqrt_norm(times, values, window: float) -> float:
    """``max |u(t) - u(s)| / sqrt|t - s|`` over sample pairs with ``0 < |t - s| < window``.

    An empty window yields 0 together with a :class:`RuntimeWarning`.
    """
    t = np.asarray(times, dtype=float)
    u = np.asarray(values, dtype=float)
    if t.size < 2 or t.shape != u.shape:
        raise ValueError("need at least two matching samples")
    if not window > 0:
        raise ValueError("window must be positive")
    order = np.argsort(t, kind="stable")
    t, u = t[order], u[order]
    best = -1.0
    for lag in range(1, t.size):
        dt = t[lag:] - t[:-lag]
        mask = (dt < window) & (dt > 0)
        if not np.any(mask):
            if np.all(dt >= window):
                break
            continue
        best = max(best, float(np.max(np.abs(u[lag:] - u[:-lag])[mask] / np.sqrt(dt[mask]))))
    if best < 0:
        warnings.warn("no sample pairs inside the window", RuntimeWarning, stacklevel=2)
        return 0.0
    return best


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsReport:
    characteristic: float
    modulus_ratio: GrowthFit
    real_part: GrowthFit
    predicted_holder: float | None
    hypotheses: dict
    driver_sqrt_norm: float | None = None

    def to_kv(self) -> dict:
        kv = {
            "characteristic": self.characteristic,
            "predicted_holder": self.predicted_holder,
            "modulus_ratio.C": self.modulus_ratio.C,
            "modulus_ratio.alpha": self.modulus_ratio.alpha,
            "modulus_ratio.residual": self.modulus_ratio.residual,
            "modulus_ratio.satisfied": self.modulus_ratio.satisfied,
            "real_part.C": self.real_part.C,
            "real_part.alpha": self.real_part.alpha,
            "real_part.residual": self.real_part.residual,
            "real_part.satisfied": self.real_part.satisfied,
            "driver_sqrt_norm": self.driver_sqrt_norm,
        }
        for name, verdict in self.hypotheses.items():
            kv[f"hypothesis.{name}"] = verdict.status
            if verdict.where is not None:
                kv[f"hypothesis.{name}.where"] = verdict.where
            for key, value in verdict.detail.items():
                kv[f"hypothesis.{name}.{key}"] = value
        return kv


def diagnose(term: DrivingTerm, t: float = 0.0, driver=None, window: float | None = None) -> DiagnosticsReport:
    """Full diagnostics for a term; ``driver`` is an optional ``(times, values)`` pair."""
    est = estimate_characteristic(term, t)
    ratio = fit_growth(term, "modulus_ratio", t)
    real = fit_growth(term, "real_part", t)
    hyps = check_hypotheses(term, t, characteristic=est)
    norm = None
    if driver is not None:
        times, values = driver
        norm = driver_sqrt_norm(times, values, window if window is not None else 0.1)
    return DiagnosticsReport(est, ratio, real, predicted_holder(est), hyps, norm)
