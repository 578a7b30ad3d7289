"""Ordered family of invariant circloids and the vertical semi-conjugacy it defines.

A_r is the union of the images f^n(circle at height r - n rho2), |n| <= N,
and C_r = C+(A_r).  The level function H2(z) = sup{r : z above C_r} is
tabulated on a finite level grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .circloid import (
    Circloid,
    CircloidError,
    c_plus,
    region_order,
)
from .core import (
    CLOSED,
    LiftMap,
    Raster,
    RegionMask,
    hausdorff_cells,
    rasterize_points,
    rasterize_polyline,
)

N_LAM = 200
LEVELS = 64
BAND_SLACK = 2
HAUSDORFF_TOL = 2.0
MAX_C = 0.25


class LaminationError(ValueError):
    def __init__(self, message, pair=None, diagnostics=None):
        super().__init__(message)
        self.pair = pair
        self.diagnostics = diagnostics or {}


class BandEscape(LaminationError):
    pass


def aligned_raster(raster: Raster) -> Raster:
    """Same window with ny rounded so one unit of height is a whole number of rows."""
    height = raster.y_max - raster.y_min
    if abs(height - round(height)) > 1e-12:
        raise ValueError("raster height must be an integer number of units")
    h = int(round(height))
    ny = max(h, int(round(raster.ny / h)) * h)
    return Raster(raster.nx, ny, raster.y_min, raster.y_max)


def _curve_images(F: LiftMap, r: float, rho2: float, N: int, m: int):
    """Arrays (2N+1, m) of f^n applied to the circle at height r - n rho2."""
    x0 = np.arange(m) / m
    ns = np.arange(-N, N + 1)
    if F.power is not None:
        X, Y = F.power(ns[:, None], np.broadcast_to(x0, (ns.size, m)), (r - ns * rho2)[:, None] + 0 * x0)
        return np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    X = np.empty((ns.size, m))
    Y = np.empty((ns.size, m))
    X[N] = x0
    Y[N] = r
    if rho2 == 0.0:
        # every start circle is the same; iterate it cumulatively both ways
        x, y = x0, np.full(m, float(r))
        for k in range(1, N + 1):
            x, y = F.forward(x, y)
            X[N + k], Y[N + k] = x, y
        x, y = x0, np.full(m, float(r))
        for k in range(1, N + 1):
            x, y = F.inverse(x, y)
            X[N - k], Y[N - k] = x, y
        return X, Y
    for step, sign in ((F.forward, 1), (F.inverse, -1)):
        k = np.arange(1, N + 1)
        x = np.broadcast_to(x0, (N, m)).copy()
        y = np.repeat((r - sign * k * rho2)[:, None], m, axis=1)
        # row k-1 needs k applications; after s steps rows s-1.. are still moving
        for s in range(1, N + 1):
            x[s - 1:], y[s - 1:] = step(x[s - 1:], y[s - 1:])
        X[N + sign * k] = x
        Y[N + sign * k] = y
    return X, Y


def build_A_r(F_hat: LiftMap, r: float, rho2: float, N: int, raster: Raster, c: float,
              delta: int = BAND_SLACK) -> RegionMask:
    """Rasterized union of iterated horizontal circles, checked against the deviation band."""
    if N > 0 and F_hat.inverse is None and F_hat.power is None:
        raise LaminationError(f"{F_hat.name}: building A_r needs an inverse")
    X, Y = _curve_images(F_hat, r, rho2, N, 4 * raster.nx)
    rows = raster.rows_of(Y)
    lo = int(raster.rows_of(r - c)) - delta
    hi = int(raster.rows_of(r + c)) + delta
    if lo < 0 or hi >= raster.ny:
        raise BandEscape(f"band [{r - c:.4g}, {r + c:.4g}] does not fit the raster")
    bad = (rows < lo) | (rows > hi)
    if bad.any():
        n_bad = int(np.argmax(bad.any(axis=1))) - N
        raise BandEscape(
            f"image of the circle at level {r:.4g} leaves the band [{r - c:.4g}, {r + c:.4g}] "
            f"at n={n_bad}: wrong deviation constant or lift",
            diagnostics={"n": n_bad, "rows": (int(rows.min()), int(rows.max())), "band": (lo, hi)},
        )
    return rasterize_polyline(raster, X, Y, closed=True, role=CLOSED)


def build_C_r(A_r: RegionMask) -> Circloid:
    return c_plus(A_r)


def image_of_mask(F: LiftMap, m: RegionMask, sub: int = 3) -> RegionMask:
    """Rasterized image of a mask, each cell sampled on a sub x sub grid."""
    R = m.raster
    rows, cols = np.nonzero(m.bits)
    off = (np.arange(sub) + 0.5) / sub
    ox, oy = np.meshgrid(off, off)
    x = (cols[:, None] + ox.ravel()[None, :]) / R.nx
    y = R.y_min + (rows[:, None] + oy.ravel()[None, :]) / R.rows_per_unit
    fx, fy = F(x.ravel(), y.ravel())
    return rasterize_points(R, fx, fy, role=CLOSED)


@dataclass
class Lamination:
    levels: tuple
    circloids: tuple
    rho2: float
    c: float
    N: int
    raster: Raster
    lift: LiftMap
    cover: int = 1
    checks: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.levels)

    def upper_table(self) -> np.ndarray:
        """Stack (K, ny, nx) of the upper hemispheres U(C_r)."""
        if not hasattr(self, "_upper"):
            self._upper = np.stack([C.upper.bits for C in self.circloids])
        return self._upper

    def summary(self) -> dict:
        return {
            "levels": len(self.levels),
            "rho2": float(self.rho2),
            "c": float(self.c),
            "N": int(self.N),
            "cover": int(self.cover),
            "raster": [self.raster.nx, self.raster.ny, self.raster.y_min, self.raster.y_max],
            "checks": self.checks,
        }


def vertical_cover(F: LiftMap, q: int) -> LiftMap:
    """Lift of the q-fold vertical cover: G(x, y) = (F1(x, qy), F2(x, qy) / q)."""
    def fwd(x, y):
        u, w = F.forward(x, q * np.asarray(y))
        return u, w / q

    inv = None
    if F.inverse is not None:
        def inv(x, y):
            u, w = F.inverse(x, q * np.asarray(y))
            return u, w / q

    power = None
    if F.power is not None:
        def power(n, x, y):
            u, w = F.power(n, x, q * np.asarray(y))
            return u, w / q

    rot = None if F.rotation is None else (F.rotation[0], F.rotation[1] / q)
    return LiftMap(fwd, inv, name=f"cover{q}({F.name})", rotation=rot, power=power)


def _as_lift(f) -> LiftMap:
    return f.lift() if hasattr(f, "lift") else f


def _deviation_constant(F: LiftMap, rho, N: int, rng) -> tuple:
    """Vertical deviation constant at N and N/10, sampled on a circle plus random points."""
    from .rotation import bmm_estimate

    grid = np.column_stack([np.arange(64) / 64, np.zeros(64)])
    samples = np.vstack([grid, rng.uniform(0.0, 1.0, size=(16, 2))])
    c = bmm_estimate(F, rho, (0, 1), N, samples=samples)[0]
    c_short = bmm_estimate(F, rho, (0, 1), max(N // 10, 1), samples=samples)[0]
    return c, c_short


def build_lamination(f, level_count: int = 16, N: int = N_LAM, raster: Optional[Raster] = None,
                     rho=None, c: Optional[float] = None, verify: bool = True,
                     rng: Optional[np.random.Generator] = None, tol_pr: Optional[float] = None,
                     hausdorff_tol: float = HAUSDORFF_TOL) -> Lamination:
    """C_r for r = i / level_count, with the translate, order and invariance checks."""
    from .rotation import TOL_PR, is_flat, rotation_set_estimate

    rng = rng if rng is not None else np.random.default_rng(0)
    F = _as_lift(f)
    raster = aligned_raster(raster if raster is not None else Raster(512, 512, -1.0, 2.0))
    if rho is None:
        rep = rotation_set_estimate(F, 16, 1000, rng=rng, tol_pr=tol_pr or TOL_PR, with_bmm=False)
        if not rep.is_pseudo_rotation:
            raise LaminationError(
                f"refused: rotation set spread {rep.spread:.3g} exceeds {rep.tol_pr:g}; not a pseudo-rotation",
                diagnostics={"spread": rep.spread, "mean": rep.mean})
        rho = rep.mean
        estimated_from = rep.N
    else:
        estimated_from = None
    rho = (float(rho[0]), float(rho[1]))
    # lift with vertical rotation in [-1/2, 1/2); A_r does not depend on this choice
    k = round(rho[1])
    if k:
        from .linearize import shift_lift

        F = shift_lift(F, 0, -k)
        rho = (rho[0], rho[1] - k)
    if c is None:
        c, c_short = _deviation_constant(F, rho, N, rng)
        if not is_flat([c_short, c]):
            raise LaminationError(
                f"refused: vertical deviations grow ({c_short:.3g} -> {c:.3g}); no bounded mean motion",
                diagnostics={"c": c, "c_short": c_short})
    if estimated_from is not None and abs(rho[1]) <= max(2.0 * c / estimated_from, 1e-12):
        # an estimate this close to an integer cannot be told apart from it
        rho = (rho[0], 0.0)
    q = 1
    if c >= MAX_C:
        q = int(math.floor(c / MAX_C)) + 1
        F = vertical_cover(F, q)
        rho = (rho[0], rho[1] / q)
        c = c / q
    levels = tuple(i / level_count for i in range(level_count))
    circloids = []
    for r in levels:
        try:
            circloids.append(build_C_r(build_A_r(F, r, rho[1], N, raster, c)))
        except CircloidError as exc:
            raise LaminationError(f"level {r:.4g}: {exc}", pair=(r, r)) from exc
    lam = Lamination(levels, tuple(circloids), rho[1], float(c), N, raster, F, q)
    if verify:
        verify_lamination(lam, hausdorff_tol)
    return lam


def _level_circloid(lam: Lamination, r: float) -> Circloid:
    return build_C_r(build_A_r(lam.lift, r, lam.rho2, lam.N, lam.raster, lam.c))


def verify_lamination(lam: Lamination, hausdorff_tol: float = HAUSDORFF_TOL,
                      translate_levels: int = 8, invariance_levels: int = 16) -> dict:
    """Translate, order, disjointness and invariance checks; raises on the first failure.

    Checks that need fresh circloids (translates, and images when rho2 is off
    the level grid) run on evenly spaced subsets of the levels.
    """
    R = lam.raster
    rpu = int(round(R.rows_per_unit))
    usable_lo = R.y_min + R.margin_rows() / R.rows_per_unit
    usable_hi = R.y_max - R.margin_rows() / R.rows_per_unit
    reach = lam.c + (BAND_SLACK + 1) / R.rows_per_unit
    checks = {"translate": [], "order_pairs": 0, "invariance": []}

    K = len(lam.levels)
    for i in np.unique(np.linspace(0, K - 1, min(K, translate_levels)).round().astype(int)):
        r, C = lam.levels[i], lam.circloids[i]
        s = 1 if r + 1 + reach < usable_hi else -1
        if not (usable_lo < r + s - reach and r + s + reach < usable_hi):
            continue
        other = _level_circloid(lam, r + s)
        if other.mask != C.mask.shifted_rows(s * rpu):
            raise LaminationError(f"translate property fails between levels {r} and {r + s}", pair=(r, r + s))
        checks["translate"].append([r, s])

    for i in range(K):
        for j in range(i + 1, K):
            rel = region_order(lam.circloids[i].continuum, lam.circloids[j].continuum)
            if not rel.a_le_b:
                raise LaminationError(
                    f"order fails: C_{lam.levels[i]} is not below C_{lam.levels[j]}",
                    pair=(lam.levels[i], lam.levels[j]))
            if not rel.a_lt_b or np.any(lam.circloids[i].mask.bits & lam.circloids[j].mask.bits):
                raise LaminationError(
                    f"disjointness fails between C_{lam.levels[i]} and C_{lam.levels[j]}",
                    pair=(lam.levels[i], lam.levels[j]))
            checks["order_pairs"] += 1

    worst = 0.0
    on_grid = abs(lam.rho2 * K - round(lam.rho2 * K)) < 1e-9
    count = K if on_grid else min(K, invariance_levels)
    for i in np.unique(np.linspace(0, K - 1, count).round().astype(int)):
        r, C = lam.levels[i], lam.circloids[i]
        t = r + lam.rho2
        idx = t * K
        if on_grid and 0 <= round(idx) < K:
            target = lam.circloids[int(round(idx))]
        else:
            target = _level_circloid(lam, t)
        d = hausdorff_cells(image_of_mask(lam.lift, C.mask), target.mask)
        worst = max(worst, d)
        checks["invariance"].append([r, d])
        if d > hausdorff_tol:
            raise LaminationError(
                f"invariance fails: image of C_{r} is {d:.3g} cells from C_{t:.6g}", pair=(r, t),
                diagnostics={"hausdorff": d})
    checks["invariance_max"] = worst
    lam.checks = checks
    return checks


def H2_lift(lam: Lamination, x, y) -> np.ndarray:
    """Real-valued level function on the plane: H2(x, y + 1) = H2(x, y) + 1.

    A point on C_r evaluates to r: the value is the first level whose circloid
    the point is not strictly above.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam.cover > 1:
        return lam.cover * _H2_table(lam, x, y / lam.cover)
    return _H2_table(lam, x, y)


def _H2_table(lam: Lamination, x, y) -> np.ndarray:
    R = lam.raster
    table = lam.upper_table()
    lv = np.asarray(lam.levels)
    steps = np.concatenate([lv - 1.0, lv, lv + 1.0])
    k = np.floor(y)
    yr = (y - k).ravel()
    cols = R.cols_of(x.ravel() * np.ones_like(yr))
    passes = np.zeros(yr.shape, dtype=np.int64)
    for j in (-1, 0, 1):
        # above C_{r+j} is the same as (x, y - j) above C_r
        rows = np.clip(R.rows_of(yr - j), 0, R.ny - 1)
        passes += table[:, rows, cols].sum(axis=0)
    if np.any(passes >= steps.size) or np.any(passes == 0):
        raise LaminationError("point outside the range covered by the level table")
    return (k.ravel() + steps[passes]).reshape(np.broadcast(x, y).shape)


def H2_eval(lam: Lamination, z) -> np.ndarray:
    """H2 reduced mod 1 at torus points z = (x, y)."""
    z = np.asarray(z, dtype=float)
    return np.mod(H2_lift(lam, z[..., 0], z[..., 1]), 1.0)


@dataclass
class SemiConjugacy2D:
    grid: int
    h1: np.ndarray  # (grid, grid), row index = y cell, column = x cell
    h2: np.ndarray
    defects: tuple
    rho: tuple
    level_count: int
    lam1: Lamination = field(repr=False)
    lam2: Lamination = field(repr=False)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        h1 = np.mod(H2_lift(self.lam1, y, x), 1.0)
        h2 = np.mod(H2_lift(self.lam2, x, y), 1.0)
        return h1, h2

    def to_dict(self) -> dict:
        return {
            "defects": [float(d) for d in self.defects],
            "grid": int(self.grid),
            "h1": np.round(self.h1, 12).tolist(),
            "h2": np.round(self.h2, 12).tolist(),
            "level_count": int(self.level_count),
            "lamination_1": self.lam1.summary(),
            "lamination_2": self.lam2.summary(),
            "rho": [float(r) for r in self.rho],
        }


def build_torus_semiconjugacy(f, level_count: int = LEVELS, N: int = N_LAM, raster: Optional[Raster] = None,
                              rho=None, rng: Optional[np.random.Generator] = None, points: int = 1000,
                              grid: int = 64, verify: bool = True) -> SemiConjugacy2D:
    """h = (h1, h2) onto the rigid rotation; h1 comes from the swapped map S f S."""
    from .linearize import HypothesisError, circle_distance, swap_conjugate
    from .rotation import (
        TOTALLY_IRRATIONAL,
        bmm_growth,
        classify_rotation_vector,
        is_flat,
        rotation_set_estimate,
    )

    rng = rng if rng is not None else np.random.default_rng(0)
    F = _as_lift(f)
    n_rot = 10_000
    if rho is None:
        rep = rotation_set_estimate(F, 16, n_rot, rng=rng, with_bmm=False)
        if not rep.is_pseudo_rotation:
            raise HypothesisError(f"rotation set spread {rep.spread:.3g}: not a pseudo-rotation")
        rho = rep.mean
    rho = (float(rho[0]), float(rho[1]))
    samples = rng.uniform(0.0, 1.0, size=(16, 2))
    c = 0.0
    for v in ((1, 0), (0, 1)):
        growth = bmm_growth(F, rho, v, Ns=(100, 1000), samples=samples)
        if not is_flat(growth):
            raise HypothesisError(f"no bounded mean motion in direction {v}: {growth}")
        c = max(c, growth[-1])
    # an estimated vector is only known to within 2c/N
    vc = classify_rotation_vector(rho, tol=max(1e-6, 2.0 * c / n_rot))
    if vc.tag != TOTALLY_IRRATIONAL:
        raise HypothesisError(f"rotation vector {rho} is {vc.tag}; a torus semi-conjugacy needs it totally irrational")
    lam2 = build_lamination(F, level_count, N, raster, rho=rho, verify=verify, rng=rng)
    lam1 = build_lamination(swap_conjugate(F), level_count, N, raster, rho=(rho[1], rho[0]),
                            verify=verify, rng=rng)
    pts = rng.uniform(0.0, 1.0, size=(points, 2))
    fx, fy = F(pts[:, 0], pts[:, 1])
    h1a = H2_lift(lam1, pts[:, 1], pts[:, 0])
    h1b = H2_lift(lam1, fy, fx)
    h2a = H2_lift(lam2, pts[:, 0], pts[:, 1])
    h2b = H2_lift(lam2, fx, fy)
    d1 = float(np.max(circle_distance(h1b - h1a, rho[0])))
    d2 = float(np.max(circle_distance(h2b - h2a, rho[1])))
    c = (np.arange(grid) + 0.5) / grid
    gx, gy = np.meshgrid(c, c)
    h1 = np.mod(H2_lift(lam1, gy, gx), 1.0)
    h2 = np.mod(H2_lift(lam2, gx, gy), 1.0)
    return SemiConjugacy2D(grid, h1, h2, (d1, d2), rho, level_count, lam1, lam2)
