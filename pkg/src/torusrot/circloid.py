"""Hemisphere calculus on the rasterized annulus.

``lower_component(U)`` is the open 4-component below the closure of U,
``upper_component(L)`` the one above the closure of L.  Composing them yields
circloids: C-(U) = complement of (UL(U) | LUL(U)) and
C+(L) = complement of (LU(L) | ULU(L)).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    CLOSED,
    OPEN,
    RegionMask,
    closure,
    complement,
    connected_components,
    has_interior_cell,
    label_cells,
)

MARGIN = 0.1


class CircloidError(ValueError):
    pass


class MarginError(CircloidError):
    pass


class NotGeneratingError(CircloidError):
    pass


class ValidationFailure(CircloidError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InteriorError(CircloidError):
    pass


class ThinContinuumError(CircloidError):
    pass


class OrderError(CircloidError):
    pass


def _margin_rows(m: RegionMask, margin: float) -> int:
    return m.raster.margin_rows(margin)


def check_margin(m: RegionMask, side: str = "both", margin: float = MARGIN) -> None:
    k = _margin_rows(m, margin)
    if side in ("bottom", "both") and m.bits[:k].any():
        raise MarginError(f"set enters the bottom margin ({k} rows)")
    if side in ("top", "both") and m.bits[m.raster.ny - k:].any():
        raise MarginError(f"set enters the top margin ({k} rows)")


def is_essential(m: RegionMask) -> bool:
    """True iff no complementary 4-component of the closure meets both boundary rows."""
    comps = connected_components(complement(closure(m)).with_role(OPEN))
    return not any(b and t for b, t in zip(comps.touches_bottom, comps.touches_top))


def _component_touching(free: np.ndarray, raster, row: int) -> np.ndarray:
    labels, n = label_cells(free, eight=False)
    hit = np.unique(labels[row])
    hit = hit[hit > 0]
    return np.isin(labels, hit)


def lower_component(U: RegionMask, margin: float = MARGIN) -> RegionMask:
    """The open component below an upper generating set."""
    check_margin(U, "bottom", margin)
    cl = closure(U)
    if not is_essential(cl):
        raise NotGeneratingError("closure is not essential; not an upper generating set")
    bits = _component_touching(~cl.bits, U.raster, 0)
    return RegionMask(U.raster, bits, OPEN)


def upper_component(L: RegionMask, margin: float = MARGIN) -> RegionMask:
    """The open component above a lower generating set."""
    check_margin(L, "top", margin)
    cl = closure(L)
    if not is_essential(cl):
        raise NotGeneratingError("closure is not essential; not a lower generating set")
    bits = _component_touching(~cl.bits, L.raster, L.raster.ny - 1)
    return RegionMask(L.raster, bits, OPEN)


@dataclass(frozen=True)
class AnnularContinuum:
    mask: RegionMask
    upper: RegionMask
    lower: RegionMask


@dataclass(frozen=True)
class Circloid:
    continuum: AnnularContinuum
    reflexive_verified: bool

    @property
    def mask(self) -> RegionMask:
        return self.continuum.mask

    @property
    def upper(self) -> RegionMask:
        return self.continuum.upper

    @property
    def lower(self) -> RegionMask:
        return self.continuum.lower


def annular_diagnostics(m: RegionMask) -> dict:
    m = m.with_role(CLOSED)
    diag = {"nonempty": m.any()}
    comps = connected_components(m)
    diag["components"] = comps.count
    diag["connected"] = comps.count == 1
    ccomps = connected_components(complement(m))
    diag["complement_components"] = ccomps.count
    kinds = sorted(
        ("bottom" if b else "") + ("top" if t else "") or "bounded"
        for b, t in zip(ccomps.touches_bottom, ccomps.touches_top)
    )
    diag["complement_kinds"] = kinds
    diag["essential"] = "bottomtop" not in kinds
    diag["ok"] = bool(diag["nonempty"] and diag["connected"] and kinds == ["bottom", "top"])
    return diag


def is_annular_continuum(m: RegionMask, margin: Optional[float] = MARGIN):
    """(verdict, diagnostics) for connected, essential, two complementary components."""
    if margin is not None:
        check_margin(m, "both", margin)
    diag = annular_diagnostics(m)
    return diag["ok"], diag


def make_continuum(m: RegionMask, margin: float = MARGIN) -> AnnularContinuum:
    m = m.with_role(CLOSED)
    ok, diag = is_annular_continuum(m, margin)
    if not ok:
        raise ValidationFailure(f"not an annular continuum: {diag}", diag)
    comps = connected_components(complement(m))
    lab = comps.labels
    up = lab == comps.top_labels()[0]
    lo = lab == comps.bottom_labels()[0]
    return AnnularContinuum(m, RegionMask(m.raster, up, OPEN), RegionMask(m.raster, lo, OPEN))


def is_circloid(c: AnnularContinuum, margin: float = MARGIN) -> bool:
    """Reflexive-pair test: U(L(C)) = U(C) and L(U(C)) = L(C)."""
    try:
        return (upper_component(c.lower, margin) == c.upper
                and lower_component(c.upper, margin) == c.lower)
    except CircloidError:
        return False


def _as_circloid(bits: np.ndarray, raster, margin: float) -> Circloid:
    mask = RegionMask(raster, bits, CLOSED)
    try:
        cont = make_continuum(mask, margin)
    except ValidationFailure as exc:
        raise ValidationFailure(f"circloid validation failed at this resolution: {exc}", exc.diagnostics)
    if not is_circloid(cont, margin):
        raise ValidationFailure("hemispheres do not form a reflexive pair at this resolution")
    return Circloid(cont, True)


def c_minus(U: RegionMask, margin: float = MARGIN) -> Circloid:
    L1 = lower_component(U, margin)
    U1 = upper_component(L1, margin)
    L2 = lower_component(U1, margin)
    return _as_circloid(~(U1.bits | L2.bits), U.raster, margin)


def c_plus(L: RegionMask, margin: float = MARGIN) -> Circloid:
    U1 = upper_component(L, margin)
    L1 = lower_component(U1, margin)
    U2 = upper_component(L1, margin)
    return _as_circloid(~(L1.bits | U2.bits), L.raster, margin)


def _adjacent4(bits: np.ndarray) -> np.ndarray:
    """Cells with a 4-neighbour in ``bits`` (x wraps)."""
    out = np.roll(bits, 1, axis=1) | np.roll(bits, -1, axis=1)
    out[1:] |= bits[:-1]
    out[:-1] |= bits[1:]
    return out


def raster_thin(A: AnnularContinuum) -> bool:
    """Digital form of empty interior under which the thin-continuum identity holds exactly.

    Every cell must touch U(A) or L(A) through a side, and no cell missing U
    may share a side with a cell missing L.
    """
    a = A.mask.bits
    near_u = _adjacent4(A.upper.bits)
    near_l = _adjacent4(A.lower.bits)
    if np.any(a & ~near_u & ~near_l):
        return False
    miss_u = a & ~near_u
    miss_l = a & ~near_l
    return not np.any(miss_u & _adjacent4(miss_l))


def thin_circloid(A: AnnularContinuum, margin: float = MARGIN) -> Circloid:
    """The unique circloid of an annular continuum with empty interior."""
    if has_interior_cell(A.mask):
        raise InteriorError("continuum has nonempty interior (a cell with its full 8-neighbourhood)")
    if not raster_thin(A):
        raise ThinContinuumError(
            "continuum is not thin at this resolution: it contains more than one digital circloid")
    a = A.mask.bits
    bits = a & _adjacent4(A.upper.bits) & _adjacent4(A.lower.bits)
    C = _as_circloid(bits, A.mask.raster, margin)
    plus = c_plus(A.mask, margin)
    minus = c_minus(A.mask, margin)
    if not (plus.mask == C.mask and minus.mask == C.mask):
        raise ThinContinuumError("boundary intersection differs from C+ / C- at this resolution")
    return C


@dataclass(frozen=True)
class OrderRelation:
    a_le_b: bool
    a_lt_b: bool
    b_le_a: bool
    b_lt_a: bool

    @property
    def tag(self) -> str:
        if self.a_lt_b:
            return "strictly-below"
        if self.b_lt_a:
            return "strictly-above"
        if self.a_le_b and self.b_le_a:
            return "touching"
        if self.a_le_b:
            return "below-or-touching"
        if self.b_le_a:
            return "above-or-touching"
        return "incomparable"


def region_order(A: AnnularContinuum, B: AnnularContinuum) -> OrderRelation:
    if A.mask.raster != B.mask.raster:
        from .core import RasterMismatch

        raise RasterMismatch("continua live on different rasters")
    a, b = A.mask.bits, B.mask.bits
    return OrderRelation(
        a_le_b=not np.any(b & A.lower.bits),
        a_lt_b=not np.any(b & ~A.upper.bits),
        b_le_a=not np.any(a & B.lower.bits),
        b_lt_a=not np.any(a & ~B.upper.bits),
    )


def interval(A: AnnularContinuum, B: AnnularContinuum, kind: str = "open") -> RegionMask:
    if not region_order(A, B).a_le_b:
        raise OrderError("interval needs A below-or-touching B")
    if kind == "open":
        return RegionMask(A.mask.raster, A.upper.bits & B.lower.bits, OPEN)
    if kind == "closed":
        return RegionMask(A.mask.raster, ~(A.lower.bits | B.upper.bits), CLOSED)
    raise ValueError(f"unknown interval kind {kind!r}")


@dataclass(frozen=True)
class LoopWitness:
    cells: tuple  # (row, col) path, last cell 4-adjacent to the first across the wrap

    def __len__(self):
        return len(self.cells)


def essential_loop_exists(open_set: RegionMask):
    """(found, witness): does some 4-component wrap around the annulus?"""
    bits = open_set.bits
    ny, nx = bits.shape
    double = np.concatenate([bits, bits], axis=1)
    labels, n = label_cells(double, eight=False)
    if n == 0:
        return False, None
    wraps = (labels[:, :nx] > 0) & (labels[:, :nx] == labels[:, nx:])
    if not wraps.any():
        return False, None
    # BFS in the double cover from a wrapping cell to its translate
    rows, cols = np.nonzero(wraps)
    start = (int(rows[0]), int(cols[0]))
    target = (start[0], start[1] + nx)
    width = 2 * nx
    prev = {start: None}
    dq = deque([start])
    while dq:
        r, c = dq.popleft()
        if (r, c) == target:
            break
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, (c + dc) % width
            if 0 <= rr < ny and double[rr, cc] and (rr, cc) not in prev:
                prev[(rr, cc)] = (r, c)
                dq.append((rr, cc))
    path = []
    node = target
    while node is not None:
        path.append((node[0], node[1] % nx))
        node = prev[node]
    path.reverse()
    return True, LoopWitness(tuple(path[:-1]))
