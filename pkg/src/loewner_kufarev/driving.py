"""Driving terms p(z, t) for the Loewner-Kufarev flow.

Every term is holomorphic in the unit disc with positive real part for each
fixed time. Terms are immutable and evaluate vectorised over numpy arrays of
complex points; the time argument may be a scalar or an array broadcastable
against the points.

Families
--------
HalfPlane   (1-k)(1+z)/(1-z) + k, image is the half-plane Re > k
Strip       ((b-a)/2)(i/pi) log((1+z)/(1-z)) + (a+b)/2, image is a < Re < b
Sector      ((1+z)/(1-z))**alpha with alpha = (2/pi) arctan C
PointKernel (e^{iu(t)} + z)/(e^{iu(t)} - z) for a real driver u
Measure     Herglotz integral of the kernel against a discrete measure
Composed    p(phi(z)) for a self-map phi of the disc fixing the origin
Constant    c with Re c > 0

Principal branches are used for the logarithm and the power; the Cayley map
(1+z)/(1-z) sends the disc to the right half-plane, so no cut is crossed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, optimize

#: largest modulus at which terms may be evaluated through :func:`evaluate`
GUARD_RADIUS = 1.0 - 1e-9
TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """A point lies outside the admissible part of the disc."""


class ParameterError(ValueError):
    """Family parameters violate the family's invariants."""


def _as_complex(z):
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite point")
    return z


def _cayley(z):
    return (1.0 + z) / (1.0 - z)


# ---------------------------------------------------------------------------
# piecewise-constant schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant function of time.

    ``values[i]`` holds on ``[starts[i], starts[i+1])``; the first value also
    covers times before ``starts[0]`` and the last one extends to infinity.
    """

    starts: tuple
    values: tuple

    def __post_init__(self):
        starts = tuple(float(s) for s in self.starts)
        values = tuple(float(v) for v in self.values)
        if len(starts) != len(values) or not starts:
            raise ParameterError("schedule needs matching, non-empty starts and values")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ParameterError("schedule starts must be strictly increasing")
        if not all(math.isfinite(v) for v in values + starts):
            raise ParameterError("schedule entries must be finite")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "values", values)

    def index(self, t):
        idx = np.searchsorted(np.asarray(self.starts), np.asarray(t, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.starts) - 1)

    def __call__(self, t):
        out = np.asarray(self.values)[self.index(t)]
        return float(out) if np.ndim(out) == 0 else out

    def shifted(self, offset: float) -> "Schedule":
        return Schedule(tuple(s - offset for s in self.starts), self.values)

    def discontinuities(self) -> np.ndarray:
        return np.asarray(self.starts[1:])

    @classmethod
    def from_samples(cls, times, values) -> "Schedule":
        return cls(tuple(np.asarray(times, dtype=float)), tuple(np.asarray(values, dtype=float)))


def brownian_driver(n: int, horizon: float, kappa: float = 1.0, seed: int | None = None) -> Schedule:
    """Sample ``sqrt(kappa) * B_t`` on ``n`` equal steps as a step schedule."""
    if n < 1 or horizon <= 0 or kappa < 0:
        raise ParameterError("need n >= 1, horizon > 0, kappa >= 0")
    rng = np.random.default_rng(seed)
    dt = horizon / n
    increments = rng.normal(scale=math.sqrt(kappa * dt), size=n)
    path = np.concatenate([[0.0], np.cumsum(increments)])
    return Schedule.from_samples(np.arange(n + 1) * dt, path)


# ---------------------------------------------------------------------------
# base class
# ---------------------------------------------------------------------------


class DrivingTerm:
    """Interface shared by all term families."""

    family: str = ""

    @property
    def normalized(self) -> bool:
        """True when p(0, t) = 1 holds by construction."""
        return False

    @property
    def time_independent(self) -> bool:
        return True

    def value(self, z, t=0.0):
        raise NotImplementedError

    def derivative(self, z, t=0.0):
        raise NotImplementedError

    def value_and_derivative(self, z, t=0.0):
        return self.value(z, t), self.derivative(z, t)

    def discontinuities(self) -> np.ndarray:
        """Times at which the term jumps (the integrator never steps across them)."""
        return np.empty(0)

    def shifted(self, offset: float) -> "DrivingTerm":
        """The term seen from time ``offset`` on: ``q(z, t) = p(z, t + offset)``."""
        if self.time_independent or offset == 0.0:
            return self
        return Shifted(self, float(offset))

    def describe(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.to_config().items() if k != "family")
        return f"{type(self).__name__}({params})"

    def to_config(self) -> dict:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# closed-form families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant(DrivingTerm):
    c: complex = 1.0
    family = "constant"

    def __post_init__(self):
        c = complex(self.c)
        if not (np.isfinite(c) and c.real > 0):
            raise ParameterError("Constant needs Re c > 0")
        object.__setattr__(self, "c", c)

    @property
    def normalized(self):
        return self.c == 1.0

    def value(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        return np.full(np.broadcast(z, np.asarray(t)).shape, self.c, dtype=complex)

    def derivative(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        return np.zeros(np.broadcast(z, np.asarray(t)).shape, dtype=complex)

    def to_config(self):
        c = self.c
        return {"family": "constant", "c": c.real if c.imag == 0 else [c.real, c.imag]}


@dataclass(frozen=True)
class HalfPlane(DrivingTerm):
    """Maps the disc onto ``{Re w > k}`` with p(0) = 1."""

    k: float = 0.0
    family = "half_plane"

    def __post_init__(self):
        if not 0.0 <= self.k < 1.0:
            raise ParameterError("HalfPlane needs 0 <= k < 1")

    @property
    def normalized(self):
        return True

    def value(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        return (1.0 - self.k) * _cayley(z) + self.k + 0.0 * np.asarray(t)

    def derivative(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        return 2.0 * (1.0 - self.k) / (1.0 - z) ** 2 + 0.0 * np.asarray(t)

    def to_config(self):
        return {"family": "half_plane", "k": self.k}


@dataclass(frozen=True)
class Strip(DrivingTerm):
    """Maps the disc onto the vertical strip ``{a < Re w < b}``."""

    a: float = 0.5
    b: float = 2.0
    family = "strip"

    def __post_init__(self):
        if not (0.0 < self.a < 1.0 < self.b < math.inf):
            raise ParameterError("Strip needs 0 < a < 1 < b < inf")

    @property
    def normalized(self):
        return abs(self.a + self.b - 2.0) <= 1e-15

    def value(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        scale = 0.5 * (self.b - self.a) / math.pi
        return scale * 1j * np.log(_cayley(z)) + 0.5 * (self.a + self.b) + 0.0 * np.asarray(t)

    def derivative(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        scale = 0.5 * (self.b - self.a) / math.pi
        return scale * 2j / (1.0 - z * z) + 0.0 * np.asarray(t)

    def to_config(self):
        return {"family": "strip", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Sector(DrivingTerm):
    """Maps the disc onto the sector ``|arg w| < arctan C``."""

    C: float = 1.0
    family = "sector"

    def __post_init__(self):
        if not (0.0 < self.C < math.inf):
            raise ParameterError("Sector needs 0 < C < inf")

    @classmethod
    def from_alpha(cls, alpha: float) -> "Sector":
        if not 0.0 < alpha < 1.0:
            raise ParameterError("sector opening exponent must lie in (0, 1)")
        return cls(math.tan(0.5 * math.pi * alpha))

    @property
    def alpha(self) -> float:
        return 2.0 / math.pi * math.atan(self.C)

    @property
    def normalized(self):
        return True

    def value(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        return _cayley(z) ** self.alpha + 0.0 * np.asarray(t)

    def derivative(self, z, t=0.0):
        return self.value_and_derivative(z, t)[1]

    def value_and_derivative(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        pad = 0.0 * np.asarray(t)
        q = _cayley(z)
        p = q ** self.alpha
        dp = self.alpha * p / q * 2.0 / (1.0 - z) ** 2
        return p + pad, dp + pad

    def to_config(self):
        return {"family": "sector", "C": self.C}


Driver = Union[float, Schedule, Callable]


@dataclass(frozen=True)
class PointKernel(DrivingTerm):
    """Loewner kernel with a single moving atom at ``e^{iu(t)}``.

    ``u`` is a constant angle, a :class:`Schedule`, or a vectorised callable.
    """

    u: Driver = 0.0
    family = "point_kernel"

    def __post_init__(self):
        if not (callable(self.u) or isinstance(self.u, Schedule)):
            u = float(self.u)
            if not math.isfinite(u):
                raise ParameterError("PointKernel angle must be finite")
            object.__setattr__(self, "u", u)

    @property
    def normalized(self):
        return True

    @property
    def time_independent(self):
        return isinstance(self.u, float)

    def _atom(self, t):
        if isinstance(self.u, float):
            return np.exp(1j * self.u)
        return np.exp(1j * np.asarray(self.u(np.asarray(t, dtype=float)), dtype=float))

    def value(self, z, t=0.0):
        e = self._atom(t)
        return (e + z) / (e - z)

    def derivative(self, z, t=0.0):
        e = self._atom(t)
        return 2.0 * e / (e - z) ** 2

    def value_and_derivative(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        e = self._atom(t)
        d = e - z
        return (e + z) / d, 2.0 * e / (d * d)

    def discontinuities(self):
        if isinstance(self.u, Schedule):
            return self.u.discontinuities()
        return np.empty(0)

    def shifted(self, offset):
        if offset == 0.0 or isinstance(self.u, float):
            return self
        if isinstance(self.u, Schedule):
            return PointKernel(self.u.shifted(offset))
        return Shifted(self, float(offset))

    def to_config(self):
        if isinstance(self.u, float):
            return {"family": "point_kernel", "u": self.u}
        if isinstance(self.u, Schedule):
            return {"family": "point_kernel",
                    "u": {"starts": list(self.u.starts), "values": list(self.u.values)}}
        return {"family": "point_kernel", "u": getattr(self.u, "__name__", "callable")}


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Discrete probability measure on the circle.

    ``raw_mass`` records the total mass before normalisation, so callers that
    built the measure from a density can recover the time-scale factor.
    """

    angles: np.ndarray
    weights: np.ndarray
    raw_mass: float = 1.0

    def __post_init__(self):
        angles = np.array(self.angles, dtype=float).ravel()
        weights = np.array(self.weights, dtype=float).ravel()
        if angles.size == 0 or angles.shape != weights.shape:
            raise ParameterError("measure needs matching, non-empty angles and weights")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ParameterError("measure weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError(f"measure weights sum to {weights.sum()!r}, not 1")
        if np.any(angles < 0) or np.any(angles >= TWO_PI) or np.any(np.diff(angles) <= 0):
            raise ParameterError("measure angles must be strictly increasing in [0, 2pi)")
        angles.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "raw_mass", float(self.raw_mass))

    @classmethod
    def point(cls, theta: float) -> "SpectralMeasure":
        return cls([float(theta) % TWO_PI], [1.0])

    @classmethod
    def from_weights(cls, angles, weights) -> "SpectralMeasure":
        """Sort, merge nothing, and normalise arbitrary nonnegative atoms."""
        angles = np.mod(np.asarray(angles, dtype=float), TWO_PI)
        weights = np.asarray(weights, dtype=float)
        if np.any(weights < 0):
            raise ParameterError("negative atom weight")
        mass = float(weights.sum())
        if not mass > 0:
            raise ParameterError("measure has zero mass")
        order = np.argsort(angles, kind="stable")
        return cls(angles[order], weights[order] / mass, raw_mass=mass)

    def __len__(self):
        return self.angles.size


def herglotz_from_density(xi, n: int, offset: float = 0.5) -> SpectralMeasure:
    """Midpoint-rule discretisation of ``xi(theta) d theta`` into ``n`` atoms.

    Atoms sit at ``(j + offset) * 2 pi / n``; with the default offset these
    are the centres of ``n`` equal bins of ``[0, 2 pi)``. ``xi`` is either a
    callable or an array of ``n`` samples taken at those angles. The weights
    ``xi * 2 pi / n`` are renormalised to total mass one and the original mass
    is kept in ``raw_mass``.
    """
    if n < 2:
        raise ParameterError("need at least two atoms")
    angles = (np.arange(n) + offset) * (TWO_PI / n)
    if callable(xi):
        samples = np.asarray(xi(angles), dtype=float) * np.ones(n)
    else:
        samples = np.asarray(xi, dtype=float).ravel()
        if samples.size != n:
            raise ParameterError(f"expected {n} density samples, got {samples.size}")
    if not np.all(np.isfinite(samples)):
        raise ParameterError("density samples must be finite")
    if np.any(samples < 0):
        raise ParameterError("density must be nonnegative")
    weights = samples * (TWO_PI / n)
    mass = float(weights.sum())
    if not mass > 0:
        raise ParameterError("density has zero mass")
    angles = np.mod(angles, TWO_PI)
    order = np.argsort(angles, kind="stable")
    return SpectralMeasure(angles[order], weights[order] / mass, raw_mass=mass)


@dataclass(frozen=True, eq=False)
class Measure(DrivingTerm):
    """``mass * sum_j w_j (e^{i theta_j} + z) / (e^{i theta_j} - z)``."""

    measure: SpectralMeasure
    mass: float = 1.0
    family = "measure"

    def __post_init__(self):
        if not isinstance(self.measure, SpectralMeasure):
            raise ParameterError("Measure needs a SpectralMeasure")
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ParameterError("Measure mass must be positive")
        object.__setattr__(self, "_atoms", np.exp(1j * self.measure.angles))

    @property
    def normalized(self):
        return self.mass == 1.0

    def value_and_derivative(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        pad = 0.0 * np.asarray(t)
        e = self._atoms
        w = self.measure.weights
        d = e - z[..., None]
        p = np.sum(w * (e + z[..., None]) / d, axis=-1)
        dp = np.sum(w * 2.0 * e / (d * d), axis=-1)
        return self.mass * p + pad, self.mass * dp + pad

    def value(self, z, t=0.0):
        return self.value_and_derivative(z, t)[0]

    def derivative(self, z, t=0.0):
        return self.value_and_derivative(z, t)[1]

    def to_config(self):
        return {"family": "measure", "angles": self.measure.angles.tolist(),
                "weights": self.measure.weights.tolist(), "mass": self.mass}

    def describe(self):
        return f"Measure(atoms={len(self.measure)}, mass={self.mass!r})"


# ---------------------------------------------------------------------------
# wrappers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Composed(DrivingTerm):
    """``p(phi(z))`` with ``phi(z) = scale e^{i rotation} z B(z)``.

    ``B`` is the disc automorphism ``(z - zero) / (1 - conj(zero) z)`` when a
    zero is given and 1 otherwise, so phi maps the disc into itself and fixes
    the origin.
    """

    base: DrivingTerm
    rotation: float = 0.0
    scale: float = 1.0
    zero: complex | None = None
    family = "composed"

    def __post_init__(self):
        if not isinstance(self.base, DrivingTerm):
            raise ParameterError("Composed needs a base term")
        if not 0.0 < self.scale <= 1.0:
            raise ParameterError("self-map scale must lie in (0, 1]")
        if self.zero is not None:
            zero = complex(self.zero)
            if not abs(zero) < 1.0:
                raise ParameterError("Blaschke zero must lie in the open disc")
            object.__setattr__(self, "zero", zero)

    @property
    def normalized(self):
        return self.base.normalized

    @property
    def time_independent(self):
        return self.base.time_independent

    def discontinuities(self):
        return self.base.discontinuities()

    def map(self, z):
        """Return ``phi(z)`` and ``phi'(z)``."""
        z = np.asarray(z, dtype=complex)
        c = self.scale * np.exp(1j * self.rotation)
        if self.zero is None:
            return c * z, c + 0.0 * z
        a = self.zero
        den = 1.0 - np.conj(a) * z
        b = (z - a) / den
        db = (1.0 - abs(a) ** 2) / den ** 2
        return c * z * b, c * (b + z * db)

    def value_and_derivative(self, z, t=0.0):
        phi, dphi = self.map(z)
        p, dp = self.base.value_and_derivative(phi, t)
        return p, dp * dphi

    def value(self, z, t=0.0):
        return self.base.value(self.map(z)[0], t)

    def derivative(self, z, t=0.0):
        return self.value_and_derivative(z, t)[1]

    def shifted(self, offset):
        if offset == 0.0 or self.time_independent:
            return self
        return replace(self, base=self.base.shifted(offset))

    def to_config(self):
        cfg = {"family": "composed", "base": self.base.to_config(),
               "rotation": self.rotation, "scale": self.scale}
        if self.zero is not None:
            cfg["zero"] = [self.zero.real, self.zero.imag]
        return cfg


@dataclass(frozen=True)
class Piecewise(DrivingTerm):
    """Switch between terms at fixed times (``terms[i]`` on ``[starts[i], starts[i+1])``)."""

    starts: tuple
    terms: tuple
    family = "piecewise"

    def __post_init__(self):
        object.__setattr__(self, "_schedule",
                           Schedule(tuple(self.starts), tuple(range(len(self.terms)))))
        object.__setattr__(self, "starts", self._schedule.starts)
        object.__setattr__(self, "terms", tuple(self.terms))
        if not all(isinstance(term, DrivingTerm) for term in self.terms):
            raise ParameterError("Piecewise entries must be driving terms")

    @property
    def normalized(self):
        return all(term.normalized for term in self.terms)

    @property
    def time_independent(self):
        return len(self.terms) == 1 and self.terms[0].time_independent

    def discontinuities(self):
        inner = [term.discontinuities() for term in self.terms]
        return np.unique(np.concatenate([self._schedule.discontinuities(), *inner]))

    def value_and_derivative(self, z, t=0.0):
        z = np.asarray(z, dtype=complex)
        t = np.asarray(t, dtype=float)
        idx = self._schedule.index(t)
        if np.ndim(idx) == 0:
            return self.terms[int(idx)].value_and_derivative(z, t)
        z, t, idx = np.broadcast_arrays(z, t, idx)
        p = np.empty(z.shape, dtype=complex)
        dp = np.empty(z.shape, dtype=complex)
        for i in np.unique(idx):
            mask = idx == i
            p[mask], dp[mask] = self.terms[int(i)].value_and_derivative(z[mask], t[mask])
        return p, dp

    def value(self, z, t=0.0):
        return self.value_and_derivative(z, t)[0]

    def derivative(self, z, t=0.0):
        return self.value_and_derivative(z, t)[1]

    def shifted(self, offset):
        if offset == 0.0:
            return self
        return Piecewise(tuple(s - offset for s in self.starts),
                         tuple(term.shifted(offset) for term in self.terms))

    def to_config(self):
        return {"family": "piecewise", "starts": list(self.starts),
                "terms": [term.to_config() for term in self.terms]}


@dataclass(frozen=True)
class Shifted(DrivingTerm):
    base: DrivingTerm
    offset: float
    family = "shifted"

    @property
    def normalized(self):
        return self.base.normalized

    @property
    def time_independent(self):
        return self.base.time_independent

    def discontinuities(self):
        return self.base.discontinuities() - self.offset

    def value_and_derivative(self, z, t=0.0):
        return self.base.value_and_derivative(z, np.asarray(t, dtype=float) + self.offset)

    def value(self, z, t=0.0):
        return self.base.value(z, np.asarray(t, dtype=float) + self.offset)

    def derivative(self, z, t=0.0):
        return self.base.derivative(z, np.asarray(t, dtype=float) + self.offset)

    def shifted(self, offset):
        return Shifted(self.base, self.offset + float(offset)) if offset else self

    def to_config(self):
        return {"family": "shifted", "base": self.base.to_config(), "offset": self.offset}


def _origin_rate(term: DrivingTerm, t) -> np.ndarray:
    p0 = term.value(np.zeros(np.shape(t), dtype=complex), t)
    if np.any(np.abs(p0.imag) > 1e-12 * np.abs(p0)):
        raise ParameterError("p(0, t) is not real; the term is outside the normalised class")
    return p0.real


@dataclass(frozen=True)
class Renormalized(DrivingTerm):
    """``p*(z, tau) = p(z, t(tau)) / p(0, t(tau))`` with ``d tau = p(0, t) dt``."""

    base: DrivingTerm
    family = "renormalized"

    @property
    def normalized(self):
        return True

    @property
    def time_independent(self):
        return self.base.time_independent

    def clock(self, t) -> np.ndarray:
        """Renormalised time ``tau(t) = int_0^t p(0, s) ds``."""
        t = np.asarray(t, dtype=float)
        if self.base.time_independent:
            return t * _origin_rate(self.base, 0.0)
        flat = [integrate.quad(lambda s: float(_origin_rate(self.base, s)), 0.0, ti,
                               points=self._breaks(ti), limit=200)[0] for ti in t.ravel()]
        return np.reshape(flat, t.shape)

    def _breaks(self, upto):
        b = self.base.discontinuities()
        b = b[(b > 0) & (b < upto)]
        return b if b.size else None

    def original_time(self, tau) -> np.ndarray:
        """Invert :meth:`clock`."""
        tau = np.asarray(tau, dtype=float)
        if self.base.time_independent:
            return tau / _origin_rate(self.base, 0.0)

        def one(target):
            if target == 0.0:
                return 0.0
            hi = 1.0
            while float(self.clock(hi)) < target:
                hi *= 2.0
            return optimize.brentq(lambda s: float(self.clock(s)) - target, 0.0, hi, xtol=1e-14)

        return np.reshape([one(x) for x in tau.ravel()], tau.shape)

    def discontinuities(self):
        b = self.base.discontinuities()
        return self.clock(b) if b.size else b

    def value_and_derivative(self, z, t=0.0):
        t0 = self.original_time(t)
        rate = _origin_rate(self.base, t0)
        p, dp = self.base.value_and_derivative(z, t0)
        return p / rate, dp / rate

    def value(self, z, t=0.0):
        return self.value_and_derivative(z, t)[0]

    def derivative(self, z, t=0.0):
        return self.value_and_derivative(z, t)[1]

    def to_config(self):
        return {"family": "renormalized", "base": self.base.to_config()}


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _check_domain(z):
    z = _as_complex(z)
    if np.any(np.abs(z) > GUARD_RADIUS):
        raise DomainError(f"|z| exceeds the evaluation guard radius {GUARD_RADIUS!r}")
    return z


def _scalar_or_array(x):
    return complex(x) if np.ndim(x) == 0 else x


def evaluate(term: DrivingTerm, z, t=0.0):
    """Evaluate ``p(z, t)`` after checking that ``z`` lies inside the guard radius."""
    return _scalar_or_array(term.value(_check_domain(z), t))


def evaluate_derivative(term: DrivingTerm, z, t=0.0):
    """Evaluate ``dp/dz`` after the same domain check as :func:`evaluate`."""
    return _scalar_or_array(term.derivative(_check_domain(z), t))


def renormalize_time(term: DrivingTerm):
    """Rescale time so that the returned term satisfies ``p*(0, tau) = 1``.

    Returns ``(term*, timescale)`` where ``timescale(t) = dt/dtau = 1/p(0, t)``.
    """
    if term.normalized:
        return term, lambda t: np.ones(np.shape(t)) if np.ndim(t) else 1.0
    if isinstance(term, Measure):
        factor = 1.0 / term.mass
        return replace(term, mass=1.0), lambda t: np.full(np.shape(t), factor) if np.ndim(t) else factor

    def timescale(t):
        out = 1.0 / _origin_rate(term, np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    return Renormalized(term), timescale


# ---------------------------------------------------------------------------
# config round-trip
# ---------------------------------------------------------------------------

FAMILIES = ("half_plane", "strip", "sector", "point_kernel", "measure", "composed", "constant")


def _driver_from_config(u):
    if isinstance(u, dict):
        if set(u) == {"starts", "values"}:
            return Schedule(tuple(u["starts"]), tuple(u["values"]))
        if set(u) <= {"brownian", "n", "horizon", "kappa", "seed"} and u.get("brownian"):
            return brownian_driver(int(u.get("n", 1000)), float(u.get("horizon", 1.0)),
                                   float(u.get("kappa", 1.0)), u.get("seed"))
        raise ParameterError(f"unrecognised driver specification {sorted(u)}")
    return float(u)


def _complex_from_config(value):
    if isinstance(value, (list, tuple)):
        re, im = value
        return complex(re, im)
    return complex(value)


_KEYS = {
    "constant": {"c"},
    "half_plane": {"k"},
    "strip": {"a", "b"},
    "sector": {"C", "alpha"},
    "point_kernel": {"u"},
    "measure": {"angles", "weights", "mass", "density", "atoms"},
    "composed": {"base", "rotation", "scale", "zero"},
    "piecewise": {"starts", "terms"},
}


def term_from_config(cfg: dict) -> DrivingTerm:
    """Build a term from a declarative mapping ``{"family": name, **params}``.

    Unknown families and unknown keys raise :class:`ParameterError`. A term
    may carry a ``schedule`` list of ``{"start": t, <params>}`` entries, which
    produces a :class:`Piecewise` term of the same family.
    """
    if not isinstance(cfg, dict) or "family" not in cfg:
        raise ParameterError("term config must be a mapping with a 'family' key")
    cfg = dict(cfg)
    family = cfg.pop("family")
    schedule = cfg.pop("schedule", None)
    if family not in _KEYS:
        raise ParameterError(f"unknown term family {family!r}")
    if schedule is not None:
        starts, terms = [], []
        for entry in schedule:
            entry = dict(entry)
            starts.append(float(entry.pop("start")))
            terms.append(term_from_config({"family": family, **cfg, **entry}))
        return Piecewise(tuple(starts), tuple(terms))
    unknown = set(cfg) - _KEYS[family]
    if unknown:
        raise ParameterError(f"unknown key(s) for {family}: {', '.join(sorted(unknown))}")
    if family == "constant":
        return Constant(_complex_from_config(cfg.get("c", 1.0)))
    if family == "half_plane":
        return HalfPlane(float(cfg.get("k", 0.0)))
    if family == "strip":
        return Strip(float(cfg.get("a", 0.5)), float(cfg.get("b", 2.0)))
    if family == "sector":
        if "alpha" in cfg and "C" in cfg:
            raise ParameterError("give either C or alpha for a sector, not both")
        if "alpha" in cfg:
            return Sector.from_alpha(float(cfg["alpha"]))
        return Sector(float(cfg.get("C", 1.0)))
    if family == "point_kernel":
        return PointKernel(_driver_from_config(cfg.get("u", 0.0)))
    if family == "measure":
        mass = float(cfg.get("mass", 1.0))
        if "density" in cfg:
            dens = cfg["density"]
            measure = herglotz_from_density(np.asarray(dens, dtype=float), len(dens))
        elif "angles" in cfg:
            measure = SpectralMeasure.from_weights(cfg["angles"], cfg.get("weights", np.ones(len(cfg["angles"]))))
        else:
            raise ParameterError("measure needs 'angles' (+ 'weights') or 'density'")
        return Measure(measure, mass)
    if family == "composed":
        zero = cfg.get("zero")
        return Composed(term_from_config(cfg["base"]), float(cfg.get("rotation", 0.0)),
                        float(cfg.get("scale", 1.0)),
                        None if zero is None else _complex_from_config(zero))
    if family == "piecewise":
        return Piecewise(tuple(cfg["starts"]), tuple(term_from_config(c) for c in cfg["terms"]))
    raise AssertionError(family)  # pragma: no cover


CATALOGUE = (
    ("HalfPlane", "half_plane", "k in [0, 1)", ("inverse_continuity", "half_plane")),
    ("Strip", "strip", "0 < a < 1 < b", ("holder_boundary", "strip", "jordan")),
    ("Sector", "sector", "C > 0 (alpha = 2/pi arctan C)", ("inverse_continuity", "holder_boundary", "sector", "jordan")),
    ("PointKernel", "point_kernel", "u: constant, schedule or brownian", ("driver_sqrt_norm",)),
    ("Measure", "measure", "discrete probability measure or density samples", ("strip", "quasiconformal_boundary")),
    ("Composed", "composed", "base term, rotation, scale, Blaschke zero", ("characteristic_monotonicity",)),
    ("Constant", "constant", "c with Re c > 0", ("half_plane", "strip", "sector", "holder_boundary", "quasiconformal_boundary")),
)
