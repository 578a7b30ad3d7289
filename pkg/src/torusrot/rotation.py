"""Deviations, rotation vector and rotation set estimates, bounded mean motion.

D(n, z) = F^n(z) - z - n*rho; the directional variant projects it on v.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import IterationError, LiftMap, PlaneVec, iterate_lift

TOL_PR = 1e-2
Q_MAX = 50
RELATION_TOL = 1e-6


@dataclass(frozen=True)
class DeviationSeries:
    z: tuple
    rho: tuple
    ns: np.ndarray
    values: np.ndarray  # shape (len(ns), 2)
    v: Optional[tuple] = None

    @property
    def dv(self) -> Optional[np.ndarray]:
        if self.v is None:
            return None
        return self.values @ np.asarray(self.v, dtype=float)

    def at(self, n: int) -> np.ndarray:
        idx = np.flatnonzero(self.ns == n)
        if idx.size == 0:
            raise KeyError(n)
        return self.values[idx[0]]


def _orbit(F: LiftMap, z, n_lo: int, n_hi: int):
    """Points F^n(z) for n_lo <= n <= n_hi, computed incrementally from z."""
    x0, y0 = float(z[0]), float(z[1])
    ns = np.arange(n_lo, n_hi + 1)
    xs = np.empty(ns.size)
    ys = np.empty(ns.size)
    i0 = -n_lo
    if n_lo < 0 and F.inverse is None:
        raise IterationError(f"{F.name}: negative iterates need an inverse")
    if F.power is not None:
        xs[:], ys[:] = F.power(ns, np.full(ns.size, x0), np.full(ns.size, y0))
        return ns, xs, ys
    if 0 <= i0 < ns.size:
        xs[i0], ys[i0] = x0, y0
    x, y = x0, y0
    for n in range(1, n_hi + 1):
        x, y = F(x, y)
        if n >= n_lo:
            xs[n - n_lo], ys[n - n_lo] = x, y
    x, y = x0, y0
    for n in range(-1, n_lo - 1, -1):
        x, y = F.inverse(x, y)
        if n <= n_hi:
            xs[n - n_lo], ys[n - n_lo] = x, y
    return ns, xs, ys


def deviation(F: LiftMap, rho, n_range, z) -> DeviationSeries:
    """D(n, z) for n_range = (n_lo, n_hi), inclusive."""
    n_lo, n_hi = n_range
    if n_lo > n_hi:
        raise ValueError("empty n_range")
    ns, xs, ys = _orbit(F, z, n_lo, n_hi)
    r1, r2 = float(rho[0]), float(rho[1])
    vals = np.column_stack([xs - float(z[0]) - ns * r1, ys - float(z[1]) - ns * r2])
    vals[ns == 0] = 0.0
    return DeviationSeries(tuple(map(float, z)), (r1, r2), ns, vals)


def directional_deviation(F: LiftMap, rho, v, n_range, z) -> DeviationSeries:
    if v[0] == 0 and v[1] == 0:
        raise ValueError("direction v must be nonzero")
    s = deviation(F, rho, n_range, z)
    return DeviationSeries(s.z, s.rho, s.ns, s.values, (float(v[0]), float(v[1])))


@dataclass(frozen=True)
class RotationEstimate:
    rho: PlaneVec
    trace: dict  # iterate count -> (rho1, rho2)


def rotation_vector_estimate(F: LiftMap, z, N: int) -> RotationEstimate:
    """(F^N(z) - z)/N with the running estimates at N/4 and N/2."""
    if N < 100:
        raise ValueError("rotation_vector_estimate needs N >= 100")
    checkpoints = sorted({N // 4, N // 2, N})
    x0, y0 = float(z[0]), float(z[1])
    trace = {}
    if F.power is not None:
        for k in checkpoints:
            x, y = F.power(k, x0, y0)
            trace[k] = ((x - x0) / k, (y - y0) / k)
    else:
        x, y = x0, y0
        done = 0
        for k in checkpoints:
            for _ in range(k - done):
                x, y = F(x, y)
            done = k
            trace[k] = ((x - x0) / k, (y - y0) / k)
    r = trace[N]
    return RotationEstimate(PlaneVec(float(r[0]), float(r[1])), trace)


def _orient(o, a, b) -> int:
    # exact sign via rationals; floats convert to Fractions without rounding
    ox, oy = Fraction(o[0]), Fraction(o[1])
    d = (Fraction(a[0]) - ox) * (Fraction(b[1]) - oy) - (Fraction(a[1]) - oy) * (Fraction(b[0]) - ox)
    return (d > 0) - (d < 0)


def convex_hull(points) -> list:
    """Monotone-chain hull with exact orientation tests; counterclockwise vertices."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _orient(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _orient(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def hull_contains(hull: Sequence, p, slack: float = 0.0) -> bool:
    if len(hull) == 1:
        return math.dist(hull[0], p) <= slack
    if len(hull) == 2:
        a, b = np.asarray(hull[0]), np.asarray(hull[1])
        t = np.clip(np.dot(np.asarray(p) - a, b - a) / max(np.dot(b - a, b - a), 1e-300), 0, 1)
        return float(np.linalg.norm(a + t * (b - a) - p)) <= slack
    if slack == 0.0:
        return all(_orient(hull[i], hull[(i + 1) % len(hull)], p) >= 0 for i in range(len(hull)))
    for i in range(len(hull)):
        a, b = np.asarray(hull[i]), np.asarray(hull[(i + 1) % len(hull)])
        e = b - a
        cross = e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])
        if cross < -slack * np.linalg.norm(e):
            return False
    return True


@dataclass(frozen=True)
class RotationReport:
    estimates: np.ndarray  # (samples, 2)
    hull: list
    mean: tuple
    spread: float
    N: int
    bmm_constant: Optional[float] = None
    bmm_witness: Optional[tuple] = None
    tol_pr: float = TOL_PR
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_pseudo_rotation(self) -> bool:
        return self.spread <= self.tol_pr

    def to_dict(self) -> dict:
        return {
            "N": int(self.N),
            "bmm_constant": self.bmm_constant,
            "bmm_witness": None if self.bmm_witness is None else {
                "n": int(self.bmm_witness[0]), "z": [float(self.bmm_witness[1][0]), float(self.bmm_witness[1][1])]},
            "estimates": [[float(a), float(b)] for a, b in self.estimates],
            "hull": [[float(a), float(b)] for a, b in self.hull],
            "is_pseudo_rotation": bool(self.is_pseudo_rotation),
            "mean": [float(self.mean[0]), float(self.mean[1])],
            "spread": float(self.spread),
            "tol_pr": float(self.tol_pr),
        }


def _iterate_many(F: LiftMap, xs, ys, n: int):
    if F.power is not None:
        return F.power(n, xs, ys)
    return iterate_lift(F, n, (xs, ys), n_max=max(abs(n), 1))


def max_pairwise_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    hull = convex_hull(points)
    h = np.asarray(hull, dtype=float)
    if len(h) < 2:
        return 0.0
    d = h[:, None, :] - h[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def rotation_set_estimate(F: LiftMap, sample_count: int, N: int, rng: Optional[np.random.Generator] = None,
                          samples: Optional[np.ndarray] = None, tol_pr: float = TOL_PR,
                          with_bmm: bool = True) -> RotationReport:
    """Inner approximation of the rotation set from finite-time displacements."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if samples is None:
        samples = rng.uniform(0.0, 1.0, size=(sample_count, 2))
    samples = np.asarray(samples, dtype=float)
    xs, ys = samples[:, 0].copy(), samples[:, 1].copy()
    fx, fy = _iterate_many(F, xs, ys, N)
    est = np.column_stack([(fx - xs) / N, (fy - ys) / N])
    hull = convex_hull(est)
    mean = tuple(float(v) for v in est.mean(axis=0))
    spread = max_pairwise_distance(est)
    c = wit = None
    if with_bmm and F.inverse is not None:
        c, wit = bmm_estimate(F, mean, None, N, samples=samples)
    return RotationReport(est, hull, mean, spread, N, c, wit, tol_pr, samples)


def bmm_estimate(F: LiftMap, rho, v=None, N: int = 1000, sample_count: int = 16,
                 rng: Optional[np.random.Generator] = None, samples: Optional[np.ndarray] = None):
    """max over samples and |n| <= N of |D(n,z)| (or |D_v(n,z)|), with the argmax (n*, z*)."""
    if F.inverse is None:
        raise IterationError(f"{F.name}: bounded mean motion needs an inverse")
    rng = rng if rng is not None else np.random.default_rng(0)
    if samples is None:
        samples = rng.uniform(0.0, 1.0, size=(sample_count, 2))
    samples = np.asarray(samples, dtype=float)
    x0, y0 = samples[:, 0].copy(), samples[:, 1].copy()
    r1, r2 = float(rho[0]), float(rho[1])
    if v is not None:
        vv = np.asarray(v, dtype=float)
        if not vv.any():
            raise ValueError("direction v must be nonzero")

    def size(dx, dy):
        if v is None:
            return np.hypot(dx, dy)
        return np.abs(dx * vv[0] + dy * vv[1])

    best, best_n, best_i = 0.0, 0, 0
    if F.power is not None:
        for sign in (1, -1):
            ns = np.arange(1, N + 1) * sign
            for i in range(samples.shape[0]):
                px, py = F.power(ns, np.full(N, x0[i]), np.full(N, y0[i]))
                s = size(px - x0[i] - ns * r1, py - y0[i] - ns * r2)
                j = int(np.argmax(s))
                if s[j] > best:
                    best, best_n, best_i = float(s[j]), int(ns[j]), i
    else:
        for step, sign in ((F.forward, 1), (F.inverse, -1)):
            x, y = x0, y0
            for k in range(1, N + 1):
                x, y = step(x, y)
                n = sign * k
                s = size(x - x0 - n * r1, y - y0 - n * r2)
                j = int(np.argmax(s))
                if s[j] > best:
                    best, best_n, best_i = float(s[j]), n, j
    return best, (best_n, (float(x0[best_i]), float(y0[best_i])))


def bmm_growth(F: LiftMap, rho, v, Ns=(100, 1000, 10000), samples=None, sample_count=16, rng=None):
    """bmm_estimate at increasing truncations; returns the list of constants."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if samples is None:
        samples = rng.uniform(0.0, 1.0, size=(sample_count, 2))
    return [bmm_estimate(F, rho, v, N, samples=samples)[0] for N in Ns]


def is_flat(growth: Sequence[float], factor: float = 2.0, floor: float = 1e-9) -> bool:
    """Deviation growth counts as bounded when the last value is within ``factor`` of the first."""
    return growth[-1] <= factor * growth[0] + floor


# --- arithmetic classification -------------------------------------------------

RATIONAL = "Rational"
TOTALLY_IRRATIONAL = "TotallyIrrational"
MIXED = "Mixed"


@dataclass(frozen=True)
class VectorClass:
    tag: str
    approximants: Optional[tuple] = None  # ((p1, q1), (p2, q2)) for Rational
    relation: Optional[tuple] = None  # (k1, k2, k0) with |k1 r1 + k2 r2 + k0| <= tol
    q_max: int = Q_MAX
    tol: float = RELATION_TOL

    def to_dict(self) -> dict:
        return {
            "approximants": None if self.approximants is None else [list(a) for a in self.approximants],
            "q_max": self.q_max,
            "relation": None if self.relation is None else list(self.relation),
            "tag": self.tag,
            "tol": self.tol,
        }


def rational_approximant(x: float, q_max: int, tol: float):
    """Best p/q with q <= q_max (continued fractions), if within tol of x."""
    fr = Fraction(x).limit_denominator(q_max)
    if abs(float(fr) - x) <= tol:
        return fr.numerator, fr.denominator
    return None


def find_relation(rho, q_max: int, tol: float):
    """Smallest integer relation |k1 r1 + k2 r2 + k0| <= tol with 0 < max|k_i| <= q_max."""
    r1, r2 = float(rho[0]), float(rho[1])
    k = np.arange(-q_max, q_max + 1)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    s = k1 * r1 + k2 * r2
    k0 = -np.rint(s)
    resid = np.abs(s + k0)
    ok = (resid <= tol) & ((k1 != 0) | (k2 != 0))
    if not ok.any():
        return None
    size = np.maximum(np.abs(k1), np.abs(k2)).astype(float)
    # prefer small relations, then canonical sign
    key = np.where(ok, size * (4 * q_max + 4) ** 2 + (k1 + q_max) * (2 * q_max + 1) + (k2 + q_max), np.inf)
    idx = np.unravel_index(int(np.argmin(key)), key.shape)
    a, b, c = int(k1[idx]), int(k2[idx]), int(k0[idx])
    if a < 0 or (a == 0 and b < 0):
        a, b, c = -a, -b, -c
    return a, b, c


def classify_rotation_vector(rho, q_max: int = Q_MAX, tol: float = RELATION_TOL) -> VectorClass:
    if q_max < 2:
        raise ValueError("q_max must be >= 2")
    a1 = rational_approximant(float(rho[0]), q_max, tol)
    a2 = rational_approximant(float(rho[1]), q_max, tol)
    if a1 is not None and a2 is not None:
        return VectorClass(RATIONAL, approximants=(a1, a2), q_max=q_max, tol=tol)
    rel = find_relation(rho, q_max, tol)
    if rel is None:
        return VectorClass(TOTALLY_IRRATIONAL, q_max=q_max, tol=tol)
    return VectorClass(MIXED, relation=rel, q_max=q_max, tol=tol)
