import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusrot.circloid import (
    InteriorError, MarginError, NotGeneratingError, OrderError, ThinContinuumError,
    ValidationFailure, c_minus, c_plus, essential_loop_exists, interval, is_annular_continuum,
    is_circloid, is_essential, lower_component, make_continuum, raster_thin, region_order,
    thin_circloid, upper_component,
)
from torusrot.core import CLOSED, OPEN, Raster, RegionMask, upsample
from oracles import (
    bfs_labels, c_minus_oracle, c_plus_oracle, circloid_cells_ok, lower_of, random_band,
    random_circloid, random_thin, upper_of,
)

R = Raster(40, 40)
seeds = st.integers(0, 2**32 - 1)


def cont(bits, raster=R):
    return make_continuum(RegionMask(raster, bits))


def band(lo, hi, raster=R):
    return cont(raster.band(lo, hi).bits, raster)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_hemispheres_match_flood_fill(seed):
    bits = random_band(np.random.default_rng(seed), 40, 40)
    A = cont(bits)
    assert np.array_equal(A.lower.bits, lower_of(bits))
    assert np.array_equal(A.upper.bits, upper_of(bits))
    assert lower_component(A.mask) == A.lower
    assert upper_component(A.mask) == A.upper


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_circloid_operators_match_oracle(seed):
    bits = random_band(np.random.default_rng(seed), 40, 40)
    m = RegionMask(R, bits)
    assert np.array_equal(c_minus(m).mask.bits, c_minus_oracle(bits))
    assert np.array_equal(c_plus(m).mask.bits, c_plus_oracle(bits))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_circloid_laws(seed):
    bits = random_band(np.random.default_rng(seed), 40, 40)
    A = cont(bits)
    for op in (c_minus, c_plus):
        C = op(A.mask)
        assert C.mask.issubset(A.mask)
        assert is_circloid(C.continuum)
        assert op(C.mask).mask == C.mask
        # the hemispheres of a circloid form a reflexive pair
        assert upper_component(C.lower) == C.upper
        assert lower_component(C.upper) == C.lower
        labels, n = bfs_labels(C.mask.bits, eight=True)
        assert n == 1


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_generated_curves_are_circloids(seed):
    bits = random_circloid(np.random.default_rng(seed), 40, 40)
    assert circloid_cells_ok(bits)
    A = cont(bits)
    assert is_circloid(A)
    assert raster_thin(A)
    assert thin_circloid(A).mask == A.mask == c_plus(A.mask).mask == c_minus(A.mask).mask


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_thin_continua_have_one_circloid(seed):
    bits, base = random_thin(np.random.default_rng(seed), 40, 40)
    A = cont(bits)
    if not raster_thin(A):
        with pytest.raises((ThinContinuumError, InteriorError)):
            thin_circloid(A)
        return
    C = thin_circloid(A)
    assert np.array_equal(C.mask.bits, base)
    assert C.mask == c_plus(A.mask).mask == c_minus(A.mask).mask


def test_step_whisker_is_trimmed():
    base = R.band(18, 18).bits.copy()
    base[18, 20:] = False
    base[19:22, 20] = True
    base[22, 21:35] = True
    base[19:22, 35] = True
    base[18, 36:] = True
    assert circloid_cells_ok(base)
    # whisker on the top cell of the vertical run
    bits = base.copy()
    bits[22:25, 20] = True
    A = cont(bits)
    assert raster_thin(A)
    assert np.array_equal(thin_circloid(A).mask.bits, base)


def test_flat_whisker_is_not_thin():
    bits = R.band(18, 18).bits.copy()
    bits[19:22, 7] = True
    A = cont(bits)
    assert not raster_thin(A)
    with pytest.raises(ThinContinuumError):
        thin_circloid(A)
    assert c_minus(A.mask).mask == R.band(18, 18)
    # the upper circloid steps over the whisker's base cell
    bump = R.band(18, 18).bits.copy()
    bump[18, 7] = False
    bump[19, 7] = True
    assert np.array_equal(c_plus(A.mask).mask.bits, bump)
    assert not is_circloid(A)


def test_thick_band_has_interior():
    A = band(15, 20)
    with pytest.raises(InteriorError):
        thin_circloid(A)
    # every cell of a digital circloid touches both sides, so a thick band holds many
    assert not is_circloid(A)
    assert c_minus(A.mask).mask == R.band(15, 15)
    assert c_plus(A.mask).mask == R.band(20, 20)


def test_annulus_with_hole_is_not_annular():
    bits = R.band(15, 20).bits.copy()
    bits[17, 10] = False
    ok, diag = is_annular_continuum(RegionMask(R, bits))
    assert not ok and "bounded" in diag["complement_kinds"]
    with pytest.raises(ValidationFailure):
        cont(bits)
    # the generating-set operators ignore the hole
    assert c_minus(RegionMask(R, bits)).mask == R.band(15, 15)


def test_margin_and_generating_errors():
    with pytest.raises(MarginError):
        lower_component(R.band(1, 5))
    with pytest.raises(MarginError):
        upper_component(R.band(35, 38))
    short = np.zeros(R.shape, dtype=bool)
    short[20, :30] = True
    assert not is_essential(RegionMask(R, short))
    with pytest.raises(NotGeneratingError):
        lower_component(RegionMask(R, short))


def test_open_generating_set_uses_four_closure():
    # a diagonal staircase of cells is a barrier when closed but leaks when open
    bits = np.zeros(R.shape, dtype=bool)
    for c in range(40):
        bits[20 + (c % 2), c] = True
    closed = RegionMask(R, bits, CLOSED)
    opened = RegionMask(R, bits, OPEN)
    assert is_essential(closed)
    assert is_essential(opened)
    assert lower_component(opened).count() < lower_component(closed).count()


def test_order_tags():
    lo, hi = band(10, 12), band(25, 27)
    assert region_order(lo, hi).tag == "strictly-below"
    assert region_order(hi, lo).tag == "strictly-above"
    assert region_order(lo, lo).tag == "touching"
    assert region_order(lo, band(13, 14)).tag == "strictly-below"
    rel = region_order(lo, band(12, 14))
    assert rel.a_le_b and not rel.a_lt_b
    bits = R.band(11, 11).bits.copy()
    bits[11:20, 5] = True
    assert region_order(lo, cont(bits)).tag in ("incomparable", "touching", "below-or-touching")


def test_intervals():
    lo, hi = band(10, 12), band(25, 27)
    op = interval(lo, hi, "open")
    cl = interval(lo, hi, "closed")
    assert op == R.band(13, 24)
    assert cl == R.band(10, 27)
    with pytest.raises(OrderError):
        interval(hi, lo)


def circloid_pair(rng):
    """Two circloids of random generating sets, ordered when they are comparable."""
    A = c_minus(RegionMask(R, random_band(rng, 40, 40, max_thick=3))).continuum
    if rng.random() < 0.5:
        top = A.mask.row_extent()[1]
        k = int(rng.integers(0, max(1, 36 - top)))
        B = cont(A.mask.shifted_rows(k).bits)
    else:
        B = c_plus(RegionMask(R, random_band(rng, 40, 40, max_thick=3))).continuum
    return A, B


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_order_laws_on_circloid_pairs(seed):
    A, B = circloid_pair(np.random.default_rng(seed))
    ab, ba = region_order(A, B), region_order(B, A)
    assert region_order(A, A).a_le_b and not region_order(A, A).a_lt_b
    assert ab.a_le_b == ba.b_le_a and ab.a_lt_b == ba.b_lt_a
    if ab.a_lt_b:
        assert not ab.b_le_a
    if ab.a_le_b and ab.b_le_a:
        assert A.mask == B.mask
    if ab.a_le_b:
        op = interval(A, B, "open")
        cl = interval(A, B, "closed")
        assert cl == op.with_role(CLOSED) | A.mask | B.mask
        assert op.isdisjoint(A.mask) and op.isdisjoint(B.mask)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_lower_component_is_monotone(seed):
    rng = np.random.default_rng(seed)
    big = random_band(rng, 40, 40)
    # remove cells from the top of each column: a subset that still blocks
    small = big.copy()
    for c in range(40):
        rows = np.flatnonzero(big[:, c])
        if rows.size > 1:
            small[rows[-1], c] = False
    if not is_essential(RegionMask(R, small)):
        return
    assert lower_component(RegionMask(R, big)).issubset(lower_component(RegionMask(R, small)))


def test_essential_loop():
    m = R.band(10, 12).with_role(OPEN)
    found, witness = essential_loop_exists(m)
    assert found
    cells = witness.cells
    assert len({c for _, c in cells}) == 40
    for (r0, c0), (r1, c1) in zip(cells, cells[1:] + cells[:1]):
        assert m.bits[r0, c0]
        assert abs(r0 - r1) + min(abs(c0 - c1), 40 - abs(c0 - c1)) == 1
    blocked = m.bits.copy()
    blocked[10:13, 17] = False
    assert essential_loop_exists(RegionMask(R, blocked, OPEN)) == (False, None)


def test_diagonal_steps_do_not_make_an_open_loop():
    bits = np.zeros(R.shape, dtype=bool)
    for c in range(40):
        bits[20 + (c % 2), c] = True
    assert not essential_loop_exists(RegionMask(R, bits, OPEN))[0]


def test_disk_has_no_essential_loop():
    rr, cc = np.mgrid[0:40, 0:40]
    disk = (rr - 20) ** 2 + (cc - 20) ** 2 <= 64
    assert essential_loop_exists(RegionMask(R, disk, OPEN)) == (False, None)


def test_narrow_pillar_has_no_interior_until_refined():
    # a two-cell pillar under a thick band: every pillar cell touches the lower
    # side, so the coarse circloid cuts across its top; at twice the resolution
    # the pillar has interior cells and the circloid runs around it
    bits = R.band(20, 25).bits.copy()
    bits[14:20, 10:12] = True
    m = RegionMask(R, bits)
    coarse = c_minus(m).mask.bits
    assert coarse[:20].sum() == 2 and coarse[19, 10] and coarse[19, 11]
    fine = c_minus(upsample(m, 2)).mask.bits
    assert fine[28, 21] and fine[28, 22]
    assert fine[29:40, 20].all() and fine[29:40, 23].all()
    assert not fine[29:40, 21:23].any()
