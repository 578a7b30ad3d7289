"""Lifts, rasterized annulus, region masks and connected components.

Rows of a raster are indexed bottom-up: row 0 holds the lowest y values and
stands in for -infinity, row ``ny - 1`` stands in for +infinity.  Columns wrap
around (the annulus is periodic in x).

Closed-set masks are 8-connected, open-set masks 4-connected.  The closure of
a closed mask is the mask itself; the closure of an open mask adds the cells
4-adjacent to it, which all lie in the complementary closed set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _graph_components

CLOSED = "closed"
OPEN = "open"

N_MAX = 10**6
# coordinates this close below a cell edge (in cell units) count as on the edge
SNAP = 1e-9

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


class IterationError(ValueError):
    pass


class RasterMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PlaneVec:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite PlaneVec ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def __add__(self, other):
        ox, oy = other
        return PlaneVec(self.x + ox, self.y + oy)

    def __sub__(self, other):
        ox, oy = other
        return PlaneVec(self.x - ox, self.y - oy)

    def dot(self, other) -> float:
        ox, oy = other
        return self.x * ox + self.y * oy

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class LatticeVec:
    p: int
    q: int

    def __post_init__(self):
        if not (isinstance(self.p, (int, np.integer)) and isinstance(self.q, (int, np.integer))):
            raise TypeError("LatticeVec needs integer components")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "q", int(self.q))

    def __iter__(self):
        yield self.p
        yield self.q

    def gcd(self) -> int:
        return math.gcd(self.p, self.q)

    def norm2(self) -> int:
        return self.p * self.p + self.q * self.q


Evaluator = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class LiftMap:
    """A lift F of a torus homeomorphism homotopic to the identity.

    ``forward`` and ``inverse`` act on coordinate arrays and return a pair of
    arrays.  ``power`` is an optional closed form for F^n used instead of
    repeated composition (rigid translations provide one).
    """

    forward: Evaluator
    inverse: Optional[Evaluator] = None
    name: str = "lift"
    rotation: Optional[tuple] = None
    power: Optional[Callable[[int, np.ndarray, np.ndarray], tuple]] = field(default=None, repr=False)

    def __call__(self, x, y):
        return self.forward(x, y)

    @property
    def invertible(self) -> bool:
        return self.inverse is not None


def translation(rho1: float, rho2: float, name: str = "rigid") -> LiftMap:
    def fwd(x, y):
        return x + rho1, y + rho2

    def inv(x, y):
        return x - rho1, y - rho2

    def power(n, x, y):
        return x + n * rho1, y + n * rho2

    return LiftMap(fwd, inv, name=name, rotation=(rho1, rho2), power=power)


def iterate_lift(F: LiftMap, n: int, z, n_max: int = N_MAX):
    """Return F^n(z) for a PlaneVec or a pair of coordinate arrays."""
    if abs(n) > n_max:
        raise IterationError(f"|n| = {abs(n)} exceeds iteration budget {n_max}")
    if n < 0 and F.inverse is None:
        raise IterationError(f"{F.name}: negative iterate requested but no inverse")
    scalar = isinstance(z, PlaneVec)
    x, y = z
    if n == 0:
        return PlaneVec(x, y) if scalar else (x, y)
    if F.power is not None:
        x, y = F.power(n, x, y)
    else:
        step = F.forward if n > 0 else F.inverse
        for _ in range(abs(n)):
            x, y = step(x, y)
    if scalar:
        return PlaneVec(float(x), float(y))
    return x, y


def periodicity_residual(F: LiftMap, xs: np.ndarray, ys: np.ndarray, kmax: int = 3) -> float:
    """max |F(z+k) - F(z) - k| over |k_i| <= kmax at the given points."""
    fx, fy = F(xs, ys)
    worst = 0.0
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            gx, gy = F(xs + k1, ys + k2)
            r = np.hypot(gx - fx - k1, gy - fy - k2)
            worst = max(worst, float(np.max(r)))
    return worst


@dataclass(frozen=True)
class Raster:
    nx: int
    ny: int
    y_min: float = -1.0
    y_max: float = 2.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError("raster needs nx, ny >= 8")
        if not self.y_min < self.y_max:
            raise ValueError("raster needs y_min < y_max")

    @property
    def shape(self) -> tuple:
        return (self.ny, self.nx)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def rows_per_unit(self) -> float:
        return self.ny / (self.y_max - self.y_min)

    def cols_of(self, x) -> np.ndarray:
        return np.floor(np.mod(x, 1.0) * self.nx + SNAP).astype(np.int64) % self.nx

    def rows_of(self, y) -> np.ndarray:
        v = (np.asarray(y, dtype=float) - self.y_min) * self.rows_per_unit
        return np.floor(v + SNAP).astype(np.int64)

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) / self.nx

    def y_centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.ny) + 0.5) * self.dy

    def margin_rows(self, fraction: float = 0.1) -> int:
        return int(math.ceil(fraction * self.ny))

    def empty(self, role: str = CLOSED) -> "RegionMask":
        return RegionMask(self, np.zeros(self.shape, dtype=bool), role)

    def full(self, role: str = CLOSED) -> "RegionMask":
        return RegionMask(self, np.ones(self.shape, dtype=bool), role)

    def band(self, row_lo: int, row_hi: int, role: str = CLOSED) -> "RegionMask":
        bits = np.zeros(self.shape, dtype=bool)
        bits[max(row_lo, 0):min(row_hi, self.ny - 1) + 1, :] = True
        return RegionMask(self, bits, role)

    def scaled(self, factor: int) -> "Raster":
        return Raster(self.nx * factor, self.ny * factor, self.y_min, self.y_max)


class RegionMask:
    """An immutable set of raster cells with a connectivity role."""

    __slots__ = ("raster", "bits", "role")

    def __init__(self, raster: Raster, bits, role: str = CLOSED):
        if role not in (CLOSED, OPEN):
            raise ValueError(f"unknown connectivity role {role!r}")
        arr = np.array(bits, dtype=bool, copy=True)
        if arr.shape != raster.shape:
            raise RasterMismatch(f"bits shape {arr.shape} does not match raster {raster.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "raster", raster)
        object.__setattr__(self, "bits", arr)
        object.__setattr__(self, "role", role)

    def __setattr__(self, name, value):
        raise AttributeError("RegionMask is immutable")

    def __eq__(self, other):
        if not isinstance(other, RegionMask):
            return NotImplemented
        return self.raster == other.raster and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return f"RegionMask({self.raster.nx}x{self.raster.ny}, {self.role}, cells={self.count()})"

    def count(self) -> int:
        return int(self.bits.sum())

    def any(self) -> bool:
        return bool(self.bits.any())

    def with_role(self, role: str) -> "RegionMask":
        return RegionMask(self.raster, self.bits, role)

    def issubset(self, other: "RegionMask") -> bool:
        _check_same(self, other)
        return not np.any(self.bits & ~other.bits)

    def isdisjoint(self, other: "RegionMask") -> bool:
        _check_same(self, other)
        return not np.any(self.bits & other.bits)

    def touches_bottom(self) -> bool:
        return bool(self.bits[0].any())

    def touches_top(self) -> bool:
        return bool(self.bits[-1].any())

    def row_extent(self) -> Optional[tuple]:
        rows = np.flatnonzero(self.bits.any(axis=1))
        if rows.size == 0:
            return None
        return int(rows[0]), int(rows[-1])

    def shifted_rows(self, k: int) -> "RegionMask":
        """Translate by k rows (upwards for k > 0); cells leaving the raster are dropped."""
        out = np.zeros_like(self.bits)
        ny = self.raster.ny
        if abs(k) >= ny:
            pass
        elif k >= 0:
            out[k:] = self.bits[:ny - k]
        else:
            out[:ny + k] = self.bits[-k:]
        return RegionMask(self.raster, out, self.role)

    def __or__(self, other):
        return mask_algebra(self, other, "union")

    def __and__(self, other):
        return mask_algebra(self, other, "intersection")

    def __sub__(self, other):
        return mask_algebra(self, other, "difference")

    def __invert__(self):
        return complement(self)


def _check_same(a: RegionMask, b: RegionMask) -> None:
    if a.raster != b.raster:
        raise RasterMismatch(f"raster mismatch: {a.raster} vs {b.raster}")


def complement(m: RegionMask) -> RegionMask:
    return RegionMask(m.raster, ~m.bits, OPEN if m.role == CLOSED else CLOSED)


def mask_algebra(a: RegionMask, b: Optional[RegionMask], op: str) -> RegionMask:
    if op == "complement":
        return complement(a)
    if b is None:
        raise ValueError(f"{op} needs two masks")
    _check_same(a, b)
    if op == "union":
        bits = a.bits | b.bits
    elif op == "intersection":
        bits = a.bits & b.bits
    elif op == "difference":
        bits = a.bits & ~b.bits
    else:
        raise ValueError(f"unknown mask operation {op!r}")
    return RegionMask(a.raster, bits, a.role)


def _neighbor_or(bits: np.ndarray, eight: bool) -> np.ndarray:
    """bits OR its shifted copies (x wraps, y does not)."""
    out = bits.copy()
    up = np.zeros_like(bits)
    up[1:] = bits[:-1]
    down = np.zeros_like(bits)
    down[:-1] = bits[1:]
    vert = bits | up | down
    if eight:
        out = vert | np.roll(vert, 1, axis=1) | np.roll(vert, -1, axis=1)
    else:
        out = vert | np.roll(bits, 1, axis=1) | np.roll(bits, -1, axis=1)
    return out


def dilate(m: RegionMask) -> RegionMask:
    """8-neighbourhood dilation; the result is a closed set."""
    return RegionMask(m.raster, _neighbor_or(m.bits, eight=True), CLOSED)


def dilate4(m: RegionMask) -> RegionMask:
    return RegionMask(m.raster, _neighbor_or(m.bits, eight=False), CLOSED)


def closure(m: RegionMask) -> RegionMask:
    """Raster closure: identity on closed masks, 4-dilation on open masks."""
    if m.role == CLOSED:
        return m
    return dilate4(m)


def has_interior_cell(m: RegionMask) -> bool:
    """True when some cell has its whole 8-neighbourhood inside the mask."""
    b = m.bits
    inner = b.copy()
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            shifted = np.zeros_like(b)
            src = np.roll(b, -dc, axis=1)
            if dr == 0:
                shifted = src
            elif dr > 0:
                shifted[:-1] = src[1:]
            else:
                shifted[1:] = src[:-1]
            inner &= shifted
    return bool(inner.any())


@dataclass(frozen=True)
class Components:
    labels: np.ndarray
    count: int
    sizes: tuple
    touches_bottom: tuple
    touches_top: tuple
    role: str

    def mask(self, raster: Raster, label: int) -> RegionMask:
        return RegionMask(raster, self.labels == label, self.role)

    def bottom_labels(self) -> list:
        return [i + 1 for i, t in enumerate(self.touches_bottom) if t]

    def top_labels(self) -> list:
        return [i + 1 for i, t in enumerate(self.touches_top) if t]


def label_cells(bits: np.ndarray, eight: bool) -> tuple:
    """Label a boolean grid whose columns wrap; returns (labels, count)."""
    labels, n = ndimage.label(bits, structure=_EIGHT if eight else _FOUR)
    if n == 0:
        return labels, 0
    left = labels[:, 0]
    right = labels[:, -1]
    pairs = [(left, right)]
    if eight:
        pairs.append((left[1:], right[:-1]))
        pairs.append((left[:-1], right[1:]))
    a_list, b_list = [], []
    for a, b in pairs:
        keep = (a > 0) & (b > 0)
        a_list.append(a[keep])
        b_list.append(b[keep])
    a = np.concatenate(a_list)
    b = np.concatenate(b_list)
    if a.size == 0:
        return labels, n
    graph = coo_matrix((np.ones(a.size), (a - 1, b - 1)), shape=(n, n))
    count, merged = _graph_components(graph, directed=False)
    if count == n:
        return labels, n
    # renumber so labels follow first appearance in raster order
    lut = np.zeros(n + 1, dtype=np.int64)
    lut[1:] = merged + 1
    relabeled = lut[labels]
    flat = relabeled.ravel()
    nz = flat[flat > 0]
    _, first = np.unique(nz, return_index=True)
    order = np.unique(nz)[np.argsort(first)]
    remap = np.zeros(count + 1, dtype=np.int64)
    remap[order] = np.arange(1, count + 1)
    return remap[relabeled], count


def connected_components(m: RegionMask) -> Components:
    labels, n = label_cells(m.bits, eight=(m.role == CLOSED))
    if n == 0:
        return Components(labels, 0, (), (), (), m.role)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    bottom = np.zeros(n + 1, dtype=bool)
    bottom[labels[0]] = True
    top = np.zeros(n + 1, dtype=bool)
    top[labels[-1]] = True
    return Components(
        labels,
        n,
        tuple(int(s) for s in sizes),
        tuple(bool(t) for t in bottom[1:]),
        tuple(bool(t) for t in top[1:]),
        m.role,
    )


def rasterize_points(raster: Raster, x: np.ndarray, y: np.ndarray, role: str = CLOSED,
                     clip: bool = True) -> RegionMask:
    rows = raster.rows_of(y).ravel()
    cols = raster.cols_of(x).ravel()
    bits = np.zeros(raster.shape, dtype=bool)
    inside = (rows >= 0) & (rows < raster.ny)
    if not clip and not inside.all():
        raise ValueError("points fall outside the raster")
    bits[rows[inside], cols[inside]] = True
    return RegionMask(raster, bits, role)


def rasterize_polyline(raster: Raster, x: np.ndarray, y: np.ndarray, closed: bool = True,
                       role: str = CLOSED) -> RegionMask:
    """Rasterize polylines given as arrays (..., m) in unwrapped coordinates.

    Consecutive samples are joined by 8-connected cell segments so the plotted
    curve keeps its connectivity without being thickened.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if closed:
        # the wrap-around partner of the first sample is one unit to the right
        x2 = np.concatenate([x, x[:, :1] + 1.0], axis=1)
        y2 = np.concatenate([y, y[:, :1]], axis=1)
    else:
        x2, y2 = x, y
    # continuous cell coordinates, x unwrapped
    cx = np.floor(x2 * raster.nx + SNAP).astype(np.int64)
    cy = raster.rows_of(y2)
    c0x, c1x = cx[:, :-1].ravel(), cx[:, 1:].ravel()
    c0y, c1y = cy[:, :-1].ravel(), cy[:, 1:].ravel()
    steps = np.maximum(np.abs(c1x - c0x), np.abs(c1y - c0y))
    bits = np.zeros(raster.shape, dtype=bool)

    def mark(px, py):
        ok = (py >= 0) & (py < raster.ny)
        bits[py[ok], np.mod(px[ok], raster.nx)] = True

    mark(cx.ravel(), cy.ravel())
    smax = int(steps.max()) if steps.size else 0
    for s in range(1, smax):
        sel = steps > s
        if not sel.any():
            break
        t = s / steps[sel]
        px = np.rint(c0x[sel] + t * (c1x[sel] - c0x[sel])).astype(np.int64)
        py = np.rint(c0y[sel] + t * (c1y[sel] - c0y[sel])).astype(np.int64)
        mark(px, py)
    return RegionMask(raster, bits, role)


def hausdorff_cells(a: RegionMask, b: RegionMask) -> float:
    """Hausdorff distance in cell units between two nonempty masks (x wraps)."""
    _check_same(a, b)
    if not a.any() or not b.any():
        return math.inf if a.any() != b.any() else 0.0

    # rows outside the joint extent cannot change any nearest-cell distance
    rows = np.flatnonzero(a.bits.any(axis=1) | b.bits.any(axis=1))
    lo, hi = rows[0], rows[-1] + 1

    def directed(p, q):
        qb = q.bits[lo:hi]
        tiled = np.concatenate([qb, qb, qb], axis=1)
        dist = ndimage.distance_transform_edt(~tiled)
        nx = q.raster.nx
        mid = dist[:, nx:2 * nx]
        return float(mid[p.bits[lo:hi]].max())

    return max(directed(a, b), directed(b, a))


def upsample(m: RegionMask, factor: int) -> RegionMask:
    bits = np.repeat(np.repeat(m.bits, factor, axis=0), factor, axis=1)
    return RegionMask(m.raster.scaled(factor), bits, m.role)
