"""One-dimensional semi-conjugacies built from sup-of-deviation formulas.

For a primitive integer direction v the plane is first changed to coordinates
in which v-motion is measured by the first coordinate (a unimodular frame);
then H(z) = max_{|n| <= N} (pi_1 F~^n(z~) - n rho0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import LatticeVec, LiftMap
from .rotation import rational_approximant, Q_MAX

DEFECT_THRESHOLD = 1e-3


class FrameError(ValueError):
    pass


class HypothesisError(ValueError):
    """The map does not satisfy the assumptions of the construction."""


class DefectError(ValueError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def ext_gcd(a: int, b: int):
    """(g, s, t) with s*a + t*b = g = gcd(a, b) >= 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def _mat_inv(A):
    (a, b), (c, d) = A
    det = a * d - b * c
    if det not in (1, -1):
        raise FrameError(f"matrix {A} is not unimodular (det {det})")
    return ((d * det, -b * det), (-c * det, a * det))


def _matvec(M, v):
    return (M[0][0] * v[0] + M[0][1] * v[1], M[1][0] * v[0] + M[1][1] * v[1])


@dataclass(frozen=True)
class UnimodularFrame:
    """Integer matrix A = (w1 | w2) with det A = 1, w2 orthogonal to v and <A^-1 v, e1> = |v|^2."""

    v: LatticeVec
    A: tuple  # rows
    A_inv: tuple

    @property
    def w1(self):
        return (self.A[0][0], self.A[1][0])

    @property
    def w2(self):
        return (self.A[0][1], self.A[1][1])

    @property
    def det(self) -> int:
        (a, b), (c, d) = self.A
        return a * d - b * c

    def to_frame(self, x, y):
        (a, b), (c, d) = self.A_inv
        return a * x + b * y, c * x + d * y

    def from_frame(self, x, y):
        (a, b), (c, d) = self.A
        return a * x + b * y, c * x + d * y

    def projection_row(self):
        """The integer row B = pi_1 o A^-1."""
        return self.A_inv[0]


def unimodular_completion(v) -> UnimodularFrame:
    v = v if isinstance(v, LatticeVec) else LatticeVec(*v)
    v1, v2 = v.p, v.q
    if v1 == 0 and v2 == 0:
        raise FrameError("v must be nonzero")
    if v.gcd() != 1:
        raise FrameError(f"v = {tuple(v)} is not primitive (gcd {v.gcd()})")
    w2 = (-v2, v1)
    # det(w1, w2) = w1x*v1 + w1y*v2 = <w1, v>; solve <w1, v> = 1
    g, s, t = ext_gcd(v1, v2)
    w1 = (s, t)
    A = ((w1[0], w2[0]), (w1[1], w2[1]))
    A_inv = _mat_inv(A)
    # det A = <w1, v> = 1 makes the first row of A^-1 equal to v, so
    # <A^-1 v, e1> = |v|^2 > 0 and no sign flip of w1 is ever needed.
    return UnimodularFrame(v, A, A_inv)


def check_frame(frame: UnimodularFrame) -> bool:
    v = (frame.v.p, frame.v.q)
    w2 = frame.w2
    return (
        frame.det == 1
        and w2[0] * v[0] + w2[1] * v[1] == 0
        and _matvec(frame.A_inv, v)[0] == frame.v.norm2()
    )


def conjugate_by_matrix(F: LiftMap, P, name: Optional[str] = None) -> LiftMap:
    """P^-1 o F o P for an integer matrix P with det +-1 (given as rows)."""
    P_inv = _mat_inv(P)
    (a, b), (c, d) = P
    (ia, ib), (ic, id_) = P_inv

    def to_std(x, y):
        return a * x + b * y, c * x + d * y

    def from_std(x, y):
        return ia * x + ib * y, ic * x + id_ * y

    def fwd(x, y):
        return from_std(*F.forward(*to_std(x, y)))

    inv = None
    if F.inverse is not None:
        def inv(x, y):
            return from_std(*F.inverse(*to_std(x, y)))

    power = None
    if F.power is not None:
        def power(n, x, y):
            return from_std(*F.power(n, *to_std(x, y)))

    rot = None
    if F.rotation is not None:
        rot = from_std(*F.rotation)
    return LiftMap(fwd, inv, name=name or f"conj({F.name})", rotation=rot, power=power)


def conjugate_lift(F: LiftMap, frame: UnimodularFrame) -> LiftMap:
    """F~ = A^-1 o F o A."""
    return conjugate_by_matrix(F, frame.A, name=f"{F.name}~{tuple(frame.v)}")


SWAP = ((0, 1), (1, 0))


def swap_conjugate(F: LiftMap) -> LiftMap:
    return conjugate_by_matrix(F, SWAP, name=f"swap({F.name})")


def select_lift(F: LiftMap, target_vertical: float, vertical_rotation: Optional[float] = None,
                tol: float = 1e-6) -> LiftMap:
    """The lift F + (0, k) whose vertical rotation number is ``target_vertical``."""
    if vertical_rotation is None:
        if F.rotation is None:
            raise HypothesisError("vertical rotation number of F is unknown")
        vertical_rotation = F.rotation[1]
    diff = target_vertical - vertical_rotation
    k = round(diff)
    if abs(diff - k) > tol:
        raise HypothesisError(
            f"target {target_vertical} is not congruent mod 1 to the vertical rotation number {vertical_rotation}")
    if k == 0:
        return F
    return shift_lift(F, 0, k)


def shift_lift(F: LiftMap, k1: int, k2: int) -> LiftMap:
    def fwd(x, y):
        u, w = F.forward(x, y)
        return u + k1, w + k2

    inv = None
    if F.inverse is not None:
        def inv(x, y):
            return F.inverse(x - k1, y - k2)

    power = None
    if F.power is not None:
        def power(n, x, y):
            u, w = F.power(n, x, y)
            return u + n * k1, w + n * k2

    rot = None if F.rotation is None else (F.rotation[0] + k1, F.rotation[1] + k2)
    return LiftMap(fwd, inv, name=f"{F.name}+({k1},{k2})", rotation=rot, power=power)


@dataclass(frozen=True)
class SemiConjugacy1D:
    samples: np.ndarray  # (m, 2) points in standard coordinates
    H: np.ndarray
    rho0: float
    row: tuple  # integer row B with H(z) ~ <B, z>
    N: int
    defect: float
    displacement: float
    boundary_attained: bool
    v: tuple

    def h(self) -> np.ndarray:
        return np.mod(self.H, 1.0)

    def to_dict(self) -> dict:
        return {
            "H": [float(h) for h in self.H],
            "N": int(self.N),
            "boundary_attained": bool(self.boundary_attained),
            "defect": float(self.defect),
            "displacement": float(self.displacement),
            "rho0": float(self.rho0),
            "row": [int(r) for r in self.row],
            "samples": [[float(a), float(b)] for a, b in self.samples],
            "v": [int(a) for a in self.v],
        }


def _sup_inf(G: LiftMap, xs, ys, rho0: float, N: int):
    """max and min over |n| <= N of (pi_1 G^n(z) - n rho0), plus argmax n."""
    sup = xs.astype(float).copy()
    inf = sup.copy()
    arg = np.zeros(xs.shape, dtype=np.int64)
    if G.power is not None:
        for n in range(-N, N + 1):
            if n == 0:
                continue
            val = G.power(n, xs, ys)[0] - n * rho0
            better = val > sup
            sup = np.where(better, val, sup)
            arg = np.where(better, n, arg)
            inf = np.minimum(inf, val)
        return sup, inf, arg
    for step, sign in ((G.forward, 1), (G.inverse, -1)):
        x, y = xs, ys
        for k in range(1, N + 1):
            x, y = step(x, y)
            val = x - sign * k * rho0
            better = val > sup
            sup = np.where(better, val, sup)
            arg = np.where(better, sign * k, arg)
            inf = np.minimum(inf, val)
    return sup, inf, arg


def default_sample(F: LiftMap, orbit_length: int = 10_000, random_points: int = 1000,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Forward orbit of one point (reduced mod 1) plus uniform random points."""
    rng = rng if rng is not None else np.random.default_rng(0)
    z = rng.uniform(0, 1, 2)
    pts = np.empty((orbit_length, 2))
    x, y = float(z[0]), float(z[1])
    for i in range(orbit_length):
        pts[i] = (x % 1.0, y % 1.0)
        x, y = F(x, y)
    return np.vstack([pts, rng.uniform(0, 1, size=(random_points, 2))])


def directional_rotation_number(F: LiftMap, v, N: int = 1000, samples: int = 8,
                                rng: Optional[np.random.Generator] = None) -> float:
    rng = rng if rng is not None else np.random.default_rng(1)
    pts = rng.uniform(0, 1, size=(samples, 2))
    xs, ys = pts[:, 0].copy(), pts[:, 1].copy()
    if F.power is not None:
        fx, fy = F.power(N, xs, ys)
    else:
        fx, fy = xs, ys
        for _ in range(N):
            fx, fy = F(fx, fy)
    return float(np.mean(((fx - xs) * v[0] + (fy - ys) * v[1]) / N))


def check_hypothesis(F: LiftMap, v, rho0: float, q_max: int = Q_MAX, tol: float = 1e-6,
                     N: int = 1000, rng=None) -> float:
    """Raise HypothesisError unless rho0 is irrational and matches <rho, v>."""
    if F.inverse is None:
        raise HypothesisError("the construction needs an inverse (sup over all integers n)")
    if rational_approximant(rho0, q_max, tol) is not None:
        raise HypothesisError(f"rho0 = {rho0} is rational to tolerance {tol} (q <= {q_max})")
    est = directional_rotation_number(F, v, N=N, rng=rng)
    if abs(est - rho0) > max(tol, 10.0 / N):
        raise HypothesisError(
            f"directional rotation number along v = {tuple(v)} is {est:.6g}, not rho0 = {rho0}")
    return est


def gh_semiconjugacy(F: LiftMap, v, rho0: float, N: int, samples: np.ndarray,
                     defect_threshold: Optional[float] = DEFECT_THRESHOLD, check: bool = True,
                     rng=None, tol: float = 1e-6) -> SemiConjugacy1D:
    v = v if isinstance(v, LatticeVec) else LatticeVec(*v)
    frame = unimodular_completion(v)
    if check:
        check_hypothesis(F, tuple(v), rho0, tol=tol, rng=rng)
    elif F.inverse is None:
        raise HypothesisError("the construction needs an inverse")
    G = conjugate_lift(F, frame)
    samples = np.asarray(samples, dtype=float)
    tx, ty = frame.to_frame(samples[:, 0], samples[:, 1])
    H, _, arg = _sup_inf(G, tx, ty, rho0, N)
    # H at F(z), which in frame coordinates is G(z~)
    gx, gy = G(tx, ty)
    H_next, _, arg_next = _sup_inf(G, gx, gy, rho0, N)
    defect = float(np.max(np.abs(H_next - H - rho0))) if H.size else 0.0
    displacement = float(np.max(np.abs(H - tx))) if H.size else 0.0
    boundary = bool(np.any(np.abs(arg) == N) or np.any(np.abs(arg_next) == N))
    result = SemiConjugacy1D(samples, H, float(rho0), frame.projection_row(), N, defect,
                             displacement, boundary, tuple(v))
    if defect_threshold is not None and defect > defect_threshold:
        raise DefectError(
            f"semi-conjugacy defect {defect:.3g} exceeds {defect_threshold:.3g}"
            f" (boundary attained: {boundary}); increase N or check bounded mean motion", result)
    return result


def H_at(F: LiftMap, v, rho0: float, N: int, points: np.ndarray) -> np.ndarray:
    """Evaluate the truncated H at arbitrary points (no defect bookkeeping)."""
    frame = unimodular_completion(v)
    G = conjugate_lift(F, frame)
    pts = np.asarray(points, dtype=float)
    tx, ty = frame.to_frame(pts[:, 0], pts[:, 1])
    return _sup_inf(G, tx, ty, rho0, N)[0]


def osc_diagnostic(F: LiftMap, v, rho0: float, N: int, samples: np.ndarray):
    """(max, min) over samples of phi - psi, the sup and inf of first-coordinate deviations.

    Equal values mean phi - psi is constant on the sample, as on a minimal set.
    """
    frame = unimodular_completion(v)
    G = conjugate_lift(F, frame)
    samples = np.asarray(samples, dtype=float)
    tx, ty = frame.to_frame(samples[:, 0], samples[:, 1])
    sup, inf, _ = _sup_inf(G, tx, ty, rho0, N)
    osc = sup - inf
    return float(osc.max()), float(osc.min())


@dataclass(frozen=True)
class TorusTable:
    samples: np.ndarray
    h: np.ndarray  # (m, k) values in [0, 1)
    defect: float
    parts: tuple


def product_semiconjugacy(parts: Sequence[SemiConjugacy1D], require_totally_irrational: bool = True,
                          q_max: int = Q_MAX, tol: float = 1e-6) -> TorusTable:
    if not parts:
        raise ValueError("need at least one part")
    base = parts[0].samples
    for p in parts[1:]:
        if p.samples.shape != base.shape or not np.array_equal(p.samples, base):
            raise ValueError("parts were built on different samples")
    if require_totally_irrational and len(parts) == 2:
        from .rotation import TOTALLY_IRRATIONAL, classify_rotation_vector

        cls = classify_rotation_vector((parts[0].rho0, parts[1].rho0), q_max, tol)
        if cls.tag != TOTALLY_IRRATIONAL:
            raise HypothesisError(f"target rotation {(parts[0].rho0, parts[1].rho0)} is {cls.tag}")
    h = np.column_stack([np.mod(p.H, 1.0) for p in parts])
    return TorusTable(base, h, max(p.defect for p in parts), tuple(parts))


def circle_distance(a, b):
    d = np.mod(np.asarray(a) - np.asarray(b), 1.0)
    return np.minimum(d, 1.0 - d)
