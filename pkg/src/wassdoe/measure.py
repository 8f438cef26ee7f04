"""Probability measures on an interval with piecewise-linear CDFs.

A measure lives on a canonical [0, 1] grid of m points plus an affine
support map; it is parameterized by the vector of CDF increments on the
capped simplex (nonnegative, summing to one, each at most tau/(m-1)).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ValidationError

# |sum(t) - 1| below this is silently renormalized, above it is rejected.
SUM_TOLERANCE = 1e-9
CAP_TOLERANCE = 1e-12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class CappedSimplex:
    """The set {x : 0 <= x_i <= cap, sum x_i = 1} of increment vectors."""

    dim: int
    cap: float

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError(f"simplex dimension must be >= 1, got {self.dim}")
        if self.cap <= 0:
            raise ConfigurationError(f"cap must be positive, got {self.cap}")
        if self.cap * self.dim < 1.0 - CAP_TOLERANCE:
            raise ConfigurationError(
                f"empty capped simplex: cap*dim = {self.cap * self.dim:.6g} < 1"
            )

    def contains(self, v, tol=1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return (
            v.shape == (self.dim,)
            and float(np.min(v)) >= -tol
            and float(np.max(v)) <= self.cap + tol
            and abs(float(np.sum(v)) - 1.0) <= tol
        )


def project_capped_simplex(v, simplex: CappedSimplex) -> np.ndarray:
    """Euclidean projection onto the capped simplex.

    The projection is clip(v - lam, 0, cap) for the dual shift lam that
    makes the coordinates sum to one; lam is found by bisection (the sum
    is continuous and nonincreasing in lam).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (simplex.dim,):
        raise ValidationError(f"expected vector of length {simplex.dim}, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("projection input must be finite")
    cap = simplex.cap

    lo = float(np.min(v)) - cap   # every coordinate at cap: sum = dim*cap >= 1
    hi = float(np.max(v))         # every coordinate at 0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, cap).sum() >= 1.0:
            lo = mid
        else:
            hi = mid
    x = np.clip(v - 0.5 * (lo + hi), 0.0, cap)

    # distribute the residual over strictly interior coordinates
    resid = 1.0 - x.sum()
    free = (x > 0.0) & (x < cap)
    if np.any(free):
        x[free] += resid / np.count_nonzero(free)
        x = np.clip(x, 0.0, cap)
    return x


@dataclass(frozen=True)
class DiscretizedMeasure:
    """Measure with piecewise-linear CDF on the uniform m-point grid.

    `increments` are the CDF jumps over consecutive grid cells; `tau` caps
    each at tau/(m-1), which bounds the CDF's Lipschitz constant in
    canonical [0, 1] coordinates.  `support` maps the canonical interval
    affinely onto the measure's actual domain (lo == hi encodes an exact
    point mass at lo).
    """

    m: int
    increments: np.ndarray
    tau: float
    support: tuple[float, float] = (0.0, 1.0)
    cumulative: np.ndarray = field(init=False, repr=False, compare=False)
    content_hash: str = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValidationError(f"need at least 2 grid points, got m={self.m}")
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        lo, hi = self.support
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
            raise ValidationError(f"bad support interval {self.support}")

        t = np.array(self.increments, dtype=float)
        if t.shape != (self.m - 1,):
            raise ValidationError(
                f"increments must have length m-1 = {self.m - 1}, got {t.shape}"
            )
        if not np.all(np.isfinite(t)):
            raise ValidationError("increments must be finite")
        if np.min(t) < -CAP_TOLERANCE:
            raise ValidationError(f"negative increment {np.min(t):.3e}")
        t = np.maximum(t, 0.0)

        total = float(t.sum())
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValidationError(f"increments sum to {total!r}, expected 1")
        if total != 1.0:
            t = t / total

        cap = self.tau / (self.m - 1)
        if np.max(t) > cap + CAP_TOLERANCE:
            raise ValidationError(
                f"increment {np.max(t):.6g} exceeds cap tau/(m-1) = {cap:.6g}"
            )
        t = np.minimum(t, cap)

        t.flags.writeable = False
        object.__setattr__(self, "increments", t)

        s = np.concatenate([[0.0], np.cumsum(t)])
        s[-1] = 1.0
        s.flags.writeable = False
        object.__setattr__(self, "cumulative", s)

        h = hashlib.blake2b(digest_size=16)
        h.update(np.int64(self.m).tobytes())
        h.update(np.float64(self.tau).tobytes())
        h.update(np.float64(lo).tobytes())
        h.update(np.float64(hi).tobytes())
        h.update(t.tobytes())
        object.__setattr__(self, "content_hash", h.hexdigest())

    # -- constructors ----------------------------------------------------

    @staticmethod
    def uniform(m: int, tau: float, support=(0.0, 1.0)) -> "DiscretizedMeasure":
        return DiscretizedMeasure(m, np.full(m - 1, 1.0 / (m - 1)), tau, tuple(support))

    @property
    def simplex(self) -> CappedSimplex:
        return CappedSimplex(self.m - 1, self.tau / (self.m - 1))

    @property
    def scale(self) -> float:
        return self.support[1] - self.support[0]

    def with_increments(self, t) -> "DiscretizedMeasure":
        return DiscretizedMeasure(self.m, t, self.tau, self.support)

    def same_support(self, other: "DiscretizedMeasure") -> bool:
        return self.support == other.support

    # -- operations ------------------------------------------------------

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m)

    def cdf(self, x):
        """CDF at canonical x in [0, 1] (piecewise-linear interpolation)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValidationError("cdf argument outside [0, 1]")
        return np.interp(x, self.grid(), self.cumulative)

    def quantile(self) -> "QuantileSegments":
        return QuantileSegments.from_measure(self)

    def mean(self) -> float:
        """Mean in native support units (exact: density is flat per cell)."""
        mids = 0.5 * (self.grid()[:-1] + self.grid()[1:])
        canon = float(self.increments @ mids)
        return self.support[0] + self.scale * canon

    def integrate(self, funcs) -> np.ndarray:
        """Integrals of canonical-coordinate functions against the measure.

        Uses the per-cell identity: sum over cells of (m-1) * increment *
        integral of the function over the cell, with 16-point Gauss-Legendre
        per cell (exact for polynomials of degree <= 31).
        """
        if callable(funcs):
            funcs = [funcs]
        cells = cell_integrals(funcs, self.m)
        return (self.m - 1) * (cells @ self.increments)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. draws in native units via inverse-CDF sampling."""
        if n < 1:
            raise ValidationError(f"need n >= 1, got {n}")
        u = rng.random(n)
        q = self.quantile()(u)
        return self.support[0] + self.scale * q

    def refine(self) -> "DiscretizedMeasure":
        """Same CDF on the doubled grid (each increment split in half)."""
        t = np.repeat(self.increments / 2.0, 2)
        return DiscretizedMeasure(2 * (self.m - 1) + 1, t, self.tau, self.support)


class QuantileSegments:
    """Exact generalized inverse of a piecewise-linear CDF.

    The inverse is affine on (level[k], level[k+1]] for each grid cell with
    positive mass; cells with zero mass produce jumps.  Evaluation follows
    the infimum convention, so F^{-1}(0) = 0.
    """

    def __init__(self, breakpoints, slopes, intercepts):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        self.intercepts = np.asarray(intercepts, dtype=float)

    @staticmethod
    def from_measure(mu: DiscretizedMeasure) -> "QuantileSegments":
        t = mu.increments
        s = mu.cumulative
        pos = t > 0.0
        grid = mu.grid()[:-1][pos]
        slope = 1.0 / (t[pos] * (mu.m - 1))
        lo = s[:-1][pos]
        segs = QuantileSegments(
            breakpoints=np.concatenate([lo, [1.0]]),
            slopes=slope,
            intercepts=grid - slope * lo,
        )
        segs._measure = mu
        return segs

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise ValidationError("quantile argument outside [0, 1]")
        lo = self.breakpoints[:-1]
        # segment k covers levels (lo[k], lo[k+1]]: take the last k with lo[k] < t
        idx = np.searchsorted(lo, t, side="left") - 1
        idx = np.clip(idx, 0, len(self.slopes) - 1)
        out = self.intercepts[idx] + self.slopes[idx] * t
        return np.where(t == 0.0, 0.0, out)


def cell_integrals(funcs, m: int, nodes=_GL_NODES, weights=_GL_WEIGHTS) -> np.ndarray:
    """Matrix of integrals of each function over each grid cell.

    Returns shape (len(funcs), m-1); entry (j, k) is the integral of
    funcs[j] over [k/(m-1), (k+1)/(m-1)] by Gauss-Legendre quadrature.
    """
    edges = np.linspace(0.0, 1.0, m)
    half = 0.5 / (m - 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    pts = centers[:, None] + half * nodes[None, :]          # (m-1, 16)
    out = np.empty((len(funcs), m - 1))
    for j, f in enumerate(funcs):
        out[j] = half * (np.asarray(f(pts)) @ weights)
    return out


def random_increments(rng: np.random.Generator, simplex: CappedSimplex,
                      max_tries: int = 200) -> np.ndarray:
    """Dirichlet(1) draw conditioned on the cap by rejection.

    Falls back to projecting the last rejected draw when the cap makes
    acceptance too rare (tight tau), so the function always terminates.
    """
    if simplex.dim == 1:
        return np.ones(1)
    for _ in range(max_tries):
        t = rng.dirichlet(np.ones(simplex.dim))
        if np.max(t) <= simplex.cap:
            return t
    return project_capped_simplex(t, simplex)


def random_measure(rng: np.random.Generator, m: int, tau: float,
                   support=(0.0, 1.0)) -> DiscretizedMeasure:
    """Random member of the discretized measure space (capped Dirichlet law)."""
    simplex = CappedSimplex(m - 1, tau / (m - 1))
    return DiscretizedMeasure(m, random_increments(rng, simplex), tau, tuple(support))
