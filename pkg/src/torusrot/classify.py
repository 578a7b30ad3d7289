"""Decision pipelines: periodic points, periodic circloids, transitivity, and the report."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Optional

import numpy as np

from .core import LiftMap, Raster
from .lamination import LaminationError, build_lamination
from .linearize import (
    HypothesisError,
    conjugate_by_matrix,
    shift_lift,
    unimodular_completion,
)
from .rotation import (
    MIXED,
    Q_MAX,
    RATIONAL,
    RELATION_TOL,
    TOTALLY_IRRATIONAL,
    bmm_growth,
    classify_rotation_vector,
    is_flat,
    rotation_set_estimate,
)

SCHEMA = 1
_NEIGHBOURS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]


def _as_lift(f) -> LiftMap:
    return f.lift() if hasattr(f, "lift") else f


def lift_power(F: LiftMap, q: int) -> LiftMap:
    """F^q as a lift."""
    if q == 1:
        return F

    def fwd(x, y):
        for _ in range(q):
            x, y = F.forward(x, y)
        return x, y

    inv = None
    if F.inverse is not None:
        def inv(x, y):
            for _ in range(q):
                x, y = F.inverse(x, y)
            return x, y

    power = None
    if F.power is not None:
        def power(n, x, y):
            return F.power(q * np.asarray(n), x, y)

    rot = None if F.rotation is None else (q * F.rotation[0], q * F.rotation[1])
    return LiftMap(fwd, inv, name=f"{F.name}^{q}", rotation=rot, power=power)


# --- periodic points ---------------------------------------------------------


@dataclass(frozen=True)
class PeriodicCandidate:
    z: tuple
    q: int
    p: tuple
    residual: float

    def to_dict(self) -> dict:
        return {"p": list(self.p), "q": self.q, "residual": self.residual, "z": list(self.z)}


def _displacement(Fq: LiftMap, x, y):
    u, w = Fq(x, y)
    return u - x, w - y


def find_periodic_points(F: LiftMap, q_max: int = 12, p_max: Optional[int] = None, grid_n: int = 64,
                         tol: float = 1e-8, depth: int = 8, max_candidates: int = 256,
                         stop_at_first: bool = False) -> list:
    """Solutions of F^q(z) = z + p found by grid scan and subdivision refinement."""
    F = _as_lift(F)
    if q_max < 1:
        raise ValueError("q_max must be at least 1")
    h = 1.0 / grid_n
    c = (np.arange(grid_n) + 0.5) * h
    gx, gy = np.meshgrid(c, c)
    out = []
    for q in range(1, q_max + 1):
        Fq = lift_power(F, q)
        dx, dy = _displacement(Fq, gx, gy)
        px, py = np.rint(dx), np.rint(dy)
        g = np.hypot(dx - px, dy - py)
        # local minima over the 8 wrapping neighbours
        is_min = np.ones_like(g, dtype=bool)
        for di, dj in _NEIGHBOURS:
            is_min &= g <= np.roll(np.roll(g, di, axis=0), dj, axis=1)
        if p_max is not None:
            is_min &= (np.abs(px) <= p_max) & (np.abs(py) <= p_max)
        idx = np.flatnonzero(is_min)
        if idx.size == 0:
            continue
        x, y = gx.ravel()[idx], gy.ravel()[idx]
        pp = np.column_stack([px.ravel()[idx], py.ravel()[idx]])
        best = g.ravel()[idx]
        x, y, best = _refine(Fq, x, y, pp, best, h, depth)
        keep = np.flatnonzero(best < tol)[:max_candidates]
        for k in keep:
            out.append(PeriodicCandidate(
                (float(np.mod(x[k], 1.0)), float(np.mod(y[k], 1.0))), q,
                (int(pp[k, 0]), int(pp[k, 1])), float(best[k])))
        if stop_at_first and keep.size:
            break
    return out


def _refine(Fq, x, y, pp, best, h, depth):
    off = np.arange(-4, 5) / 4.0
    ox, oy = np.meshgrid(off, off)
    ox, oy = ox.ravel(), oy.ravel()
    for _ in range(depth):
        todo = best > 0
        if not todo.any():
            break
        cx = x[:, None] + h * ox[None, :]
        cy = y[:, None] + h * oy[None, :]
        dx, dy = _displacement(Fq, cx, cy)
        g = np.hypot(dx - pp[:, :1], dy - pp[:, 1:])
        j = np.argmin(g, axis=1)
        rows = np.arange(x.size)
        gbest = g[rows, j]
        better = todo & (gbest < best)
        x = np.where(better, cx[rows, j], x)
        y = np.where(better, cy[rows, j], y)
        best = np.where(better, gbest, best)
        h /= 4.0
    return x, y, best


# --- transitivity --------------------------------------------------------------


@dataclass(frozen=True)
class TransitivityVerdict:
    verdict: str  # "plausibly transitive" or "not observed"
    coverage: float  # best fraction of eps-boxes visited by one orbit
    coverages: tuple
    eps: float
    N: int
    trials: int

    @property
    def plausible(self) -> bool:
        return self.verdict == "plausibly transitive"

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "coverage": self.coverage,
            "coverages": list(self.coverages),
            "eps": self.eps,
            "trials": self.trials,
            "verdict": self.verdict,
        }


def transitivity_heuristic(f, eps: float = 1.0 / 32, N: int = 100_000, trials: int = 4,
                           rng: Optional[np.random.Generator] = None, threshold: float = 0.99,
                           raster: Optional[Raster] = None) -> TransitivityVerdict:
    """Box-coverage of a few long orbits; never a proof of transitivity."""
    F = _as_lift(f)
    if raster is not None and eps < 2.0 / min(raster.nx, raster.rows_per_unit):
        raise ValueError("eps must be at least two raster cells")
    rng = rng if rng is not None else np.random.default_rng(0)
    k = int(round(1.0 / eps))
    x0, y0 = rng.uniform(0.0, 1.0, size=(2, trials))
    seen = np.zeros((trials, k * k), dtype=bool)
    chunk = 10_000
    x, y = x0.copy(), y0.copy()
    done = 0
    while done < N:
        m = min(chunk, N - done)
        if F.power is not None:
            ns = np.arange(done, done + m)[:, None]
            X, Y = F.power(ns, x0[None, :], y0[None, :])
        else:
            X = np.empty((m, trials))
            Y = np.empty((m, trials))
            for i in range(m):
                X[i], Y[i] = x, y
                x, y = F.forward(x, y)
        bx = np.floor(np.mod(X, 1.0) * k).astype(np.int64) % k
        by = np.floor(np.mod(Y, 1.0) * k).astype(np.int64) % k
        for t in range(trials):
            seen[t, by[:, t] * k + bx[:, t]] = True
        done += m
    cov = seen.mean(axis=1)
    best = float(cov.max())
    verdict = "plausibly transitive" if best >= threshold else "not observed"
    return TransitivityVerdict(verdict, best, tuple(float(c) for c in cov), float(eps), int(N), int(trials))


# --- periodic circloids ------------------------------------------------------

_ROT90 = ((0, -1), (1, 0))


def _matmul(A, B):
    return tuple(tuple(sum(A[i][k] * B[k][j] for k in range(2)) for j in range(2)) for i in range(2))


def _int_inverse(M):
    (a, b), (c, d) = M
    det = a * d - b * c
    if det != 1:
        raise ValueError("matrix must have determinant 1")
    return ((d, -b), (-c, a))


def adapted_frame(v) -> tuple:
    """(P, P_inv) with det 1 whose new vertical coordinate is <v, z>; identity for v = e2."""
    fr = unimodular_completion(v)
    P_inv = _matmul(_ROT90, fr.A_inv)
    return _int_inverse(P_inv), P_inv


def primitive_directions(v_max: int) -> list:
    """Primitive integer vectors with |v| <= v_max, first nonzero entry positive, by norm."""
    out = []
    for a in range(0, v_max + 1):
        for b in range(-v_max, v_max + 1):
            if (a == 0 and b <= 0) or gcd(a, b) != 1 or a * a + b * b > v_max * v_max:
                continue
            out.append((a, b))
    return sorted(out, key=lambda v: (v[0] ** 2 + v[1] ** 2, v))


def rational_line_fits(estimates: np.ndarray, v_max: int, q_max: int, tol: float, box: int = Q_MAX) -> list:
    """(q, v, p) with |q <est, v> - p| <= tol for every estimate, smallest q first."""
    fits = []
    for v in primitive_directions(v_max):
        proj = estimates @ np.asarray(v, dtype=float)
        for q in range(1, q_max + 1):
            if q * max(abs(v[0]), abs(v[1])) > box:
                break
            p = int(np.rint(q * proj.mean()))
            if np.all(np.abs(q * proj - p) <= tol):
                fits.append((q, v, p))
                break
    return sorted(fits, key=lambda t: (t[0], t[1][0] ** 2 + t[1][1] ** 2))


@dataclass
class CircloidDetection:
    found: bool
    v: Optional[tuple] = None
    q: Optional[int] = None
    p: Optional[int] = None
    P_inv: Optional[tuple] = None
    growth: Optional[list] = None
    hausdorff: Optional[float] = None
    is_circloid: Optional[bool] = None
    two_levels: Optional[tuple] = None
    lamination: object = field(default=None, repr=False)
    notes: list = field(default_factory=list)

    @property
    def circloid(self):
        return None if self.lamination is None else self.lamination.circloids[0]

    def to_dict(self) -> dict:
        d = {
            "found": self.found,
            "growth": self.growth,
            "hausdorff": self.hausdorff,
            "is_circloid": self.is_circloid,
            "notes": list(self.notes),
            "p": self.p,
            "q": self.q,
            "v": None if self.v is None else list(self.v),
            "frame": None if self.P_inv is None else [list(r) for r in self.P_inv],
            "two_levels": None if self.two_levels is None else list(self.two_levels),
        }
        if self.lamination is not None:
            C = self.lamination.circloids[0]
            d["circloid"] = {"cells": C.mask.count(), "rows": list(C.mask.row_extent())}
            d["lamination"] = self.lamination.summary()
        return d


def detect_periodic_circloid(f, report=None, v_max: int = 3, q_max: int = Q_MAX, tol: Optional[float] = None,
                             Ns=(100, 1000, 10_000), raster: Optional[Raster] = None, level_count: int = 16,
                             N: int = 200, rng: Optional[np.random.Generator] = None) -> CircloidDetection:
    """Rational line with flat deviations, then an invariant circloid of f^q in the adapted frame."""
    from .circloid import is_circloid

    rng = rng if rng is not None else np.random.default_rng(0)
    F = _as_lift(f)
    if report is None:
        report = rotation_set_estimate(F, 16, 10_000, rng=rng)
    c = report.bmm_constant or 0.0
    tol_eff = tol if tol is not None else max(RELATION_TOL, 2.0 * c / report.N)
    # stricter than the relation tolerance so totally irrational vectors never fit
    tol_line = tol_eff / 2.0
    fits = rational_line_fits(np.asarray(report.estimates), v_max, q_max, tol_line)
    if not fits:
        return CircloidDetection(False, notes=["rotation estimates lie on no rational line"])
    samples = rng.uniform(0.0, 1.0, size=(8, 2))
    rho = np.asarray(report.mean, dtype=float)
    notes = []
    for q, v, p in fits:
        vv = np.asarray(v, dtype=float)
        # put rho exactly on the fitted line
        rho_v = rho - (rho @ vv - p / q) * vv / (vv @ vv)
        growth = bmm_growth(F, rho_v, v, Ns=Ns, samples=samples)
        if not is_flat(growth):
            notes.append(f"v={v}: deviations grow {growth}")
            continue
        P, P_inv = adapted_frame(v)
        H = shift_lift(lift_power(conjugate_by_matrix(F, P), q), 0, -p)
        try:
            lam = build_lamination(H, level_count, N, raster, rho=(0.0, 0.0), rng=rng)
        except (LaminationError, HypothesisError, ValueError) as exc:
            return CircloidDetection(False, v, q, p, P_inv, growth, notes=notes + [
                f"rationally bounded along v={v} but the circloid construction failed: {exc}"])
        C = lam.circloids[0]
        half = lam.circloids[len(lam) // 2]
        two = None
        if not np.any(C.mask.bits & half.mask.bits):
            two = (lam.levels[0], lam.levels[len(lam) // 2])
        return CircloidDetection(
            True, v, q, p, P_inv, growth, float(lam.checks["invariance_max"]),
            bool(is_circloid(C.continuum)), two, lam,
            notes + ["bounded deviations inferred from flat growth, not proven"])
    return CircloidDetection(False, notes=notes)


# --- report ------------------------------------------------------------------

ROTATION_BRANCHES = {
    "i": "semi-conjugate to the rigid rotation",
    "ii": "periodic circloid",
    "iii": "periodic point",
    "inconclusive": "inconclusive",
}
DYNAMICS_BRANCHES = ("transitive", "two-circloids", "periodic-point", "inconclusive")


@dataclass
class ClassifyConfig:
    rotation_samples: int = 16
    rotation_N: int = 10_000
    q_max: int = Q_MAX
    periodic_q_max: int = 12
    periodic_grid: int = 64
    periodic_tol: float = 1e-8
    v_max: int = 3
    circloid_levels: int = 16
    semiconj_levels: int = 64
    lamination_N: int = 200
    raster: Raster = field(default_factory=lambda: Raster(512, 512, -1.0, 2.0))
    eps: float = 1.0 / 32
    transitivity_N: int = 100_000
    trials: int = 4
    points: int = 1000


@dataclass
class ClassificationReport:
    map_name: str
    rotation: object
    vector_class: object
    tol: float
    rotation_branch: str
    dynamics_branch: str
    periodic_points: list = field(default_factory=list)
    circloid: Optional[CircloidDetection] = None
    semiconjugacy: Optional[dict] = None
    transitivity: Optional[TransitivityVerdict] = None
    notes: list = field(default_factory=list)
    assumptions: list = field(default_factory=list)
    config: Optional[ClassifyConfig] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "schema": SCHEMA,
            "map": self.map_name,
            "rotation": self.rotation.to_dict(),
            "vector_class": self.vector_class.to_dict() if self.vector_class is not None else None,
            "relation_tol": self.tol,
            "rotation_branch": self.rotation_branch,
            "rotation_branch_meaning": ROTATION_BRANCHES[self.rotation_branch],
            "dynamics_branch": self.dynamics_branch,
            "periodic_points": [c.to_dict() for c in self.periodic_points],
            "periodic_search": None if cfg is None else {
                "grid": cfg.periodic_grid, "q_max": cfg.periodic_q_max, "tol": cfg.periodic_tol},
            "circloid": None if self.circloid is None else self.circloid.to_dict(),
            "semiconjugacy": self.semiconjugacy,
            "transitivity": None if self.transitivity is None else self.transitivity.to_dict(),
            "notes": list(self.notes),
            "assumptions": list(self.assumptions),
        }


def _assumptions(f) -> list:
    out = ["non-wandering: assumed, not checked numerically"]
    kind = getattr(f, "kind", "custom")
    if kind in ("rigid", "skew"):
        out.append("conservative: area-preserving by construction")
    else:
        out.append("conservative: assumed, not checked")
    return out


def classify(f, config: Optional[ClassifyConfig] = None, rng: Optional[np.random.Generator] = None
             ) -> ClassificationReport:
    """Rotation set, vector class, then the matching evidence search; never guesses."""
    from .lamination import build_torus_semiconjugacy

    cfg = config or ClassifyConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    F = _as_lift(f)
    name = getattr(f, "name", F.name)
    notes = []
    rep = rotation_set_estimate(F, cfg.rotation_samples, cfg.rotation_N, rng=rng)
    c = rep.bmm_constant or 0.0
    # an estimate from N iterates is only known to within 2c/N
    tol = max(RELATION_TOL, 2.0 * c / rep.N)
    report = ClassificationReport(name, rep, None, tol, "inconclusive", "inconclusive",
                                  assumptions=_assumptions(f), config=cfg)
    if not rep.is_pseudo_rotation:
        notes.append(f"rotation set spread {rep.spread:.3g} exceeds {rep.tol_pr:g}: not a pseudo-rotation")
        report.notes = notes
        return report
    vc = classify_rotation_vector(rep.mean, cfg.q_max, tol)
    report.vector_class = vc

    if vc.tag == RATIONAL:
        (p1, q1), (p2, q2) = vc.approximants
        q = q1 * q2 // gcd(q1, q2)
        if q > cfg.periodic_q_max:
            notes.append(f"common period {q} exceeds the search bound {cfg.periodic_q_max}")
        else:
            cands = find_periodic_points(F, q, grid_n=cfg.periodic_grid, tol=cfg.periodic_tol,
                                         stop_at_first=True)
            report.periodic_points = cands
            if cands:
                report.rotation_branch = "iii"
            else:
                notes.append(f"no periodic point found up to period {q} (search is incomplete)")
    elif vc.tag == MIXED:
        det = detect_periodic_circloid(F, rep, cfg.v_max, cfg.q_max, tol, raster=cfg.raster,
                                       level_count=cfg.circloid_levels, N=cfg.lamination_N, rng=rng)
        report.circloid = det
        notes.extend(det.notes)
        if det.found and det.is_circloid and det.hausdorff is not None and det.hausdorff <= 2.0:
            report.rotation_branch = "ii"
    elif vc.tag == TOTALLY_IRRATIONAL:
        try:
            sc = build_torus_semiconjugacy(F, cfg.semiconj_levels, cfg.lamination_N, cfg.raster,
                                           rho=rep.mean, rng=rng, points=cfg.points)
            bound = 2.0 / cfg.semiconj_levels
            report.semiconjugacy = {"defects": list(sc.defects), "level_count": sc.level_count, "bound": bound}
            if max(sc.defects) <= bound:
                report.rotation_branch = "i"
                notes.append("bounded deviations inferred from flat growth, not proven")
            else:
                notes.append(f"semi-conjugacy defect {max(sc.defects):.3g} exceeds {bound:.3g}")
        except (HypothesisError, LaminationError, ValueError) as exc:
            notes.append(f"semi-conjugacy construction failed: {exc}")

    try:
        report.transitivity = transitivity_heuristic(F, cfg.eps, cfg.transitivity_N, cfg.trials, rng=rng,
                                                     raster=cfg.raster)
    except ValueError as exc:
        notes.append(f"transitivity heuristic skipped: {exc}")
    two = report.circloid is not None and report.circloid.found and report.circloid.two_levels is not None
    if two:
        report.dynamics_branch = "two-circloids"
        if report.transitivity is not None and report.transitivity.plausible:
            notes.append("orbit coverage looked transitive but disjoint periodic circloids were found; "
                         "reporting the circloids")
    elif report.transitivity is not None and report.transitivity.plausible:
        report.dynamics_branch = "transitive"
    elif report.periodic_points:
        report.dynamics_branch = "periodic-point"
    report.notes = notes
    return report
