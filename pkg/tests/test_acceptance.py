"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from torusrot.core import Raster, hausdorff_cells, translation, upsample
from torusrot.dsl import builtin_family
from torusrot.linearize import circle_distance, gh_semiconjugacy, unimodular_completion
from torusrot.rotation import bmm_estimate, rotation_set_estimate, rotation_vector_estimate
from oracles import A_SKEW, PHI, skew_bmm_oracle

SQRT2M1 = math.sqrt(2) - 1
FULL = Raster(512, 512, -1.0, 2.0)


def golden_skew():
    return builtin_family("skew", PHI, 0.0, A_SKEW)


@pytest.mark.criterion(1)
def test_criterion_1_frame_exactness(verdict):
    rng = np.random.default_rng(1)
    vs = []
    while len(vs) < 1000:
        a, b = (int(t) for t in rng.integers(-100, 101, 2))
        if math.gcd(a, b) == 1 and a * a + b * b <= 100 * 100:
            vs.append((a, b))
    t0 = time.perf_counter()
    bad = 0
    for v in vs:
        fr = unimodular_completion(v)
        (a, b), (c, d) = fr.A
        ai = fr.A_inv
        ok = (a * d - b * c == 1
              and fr.w2[0] * v[0] + fr.w2[1] * v[1] == 0
              and ai[0][0] * v[0] + ai[0][1] * v[1] == v[0] ** 2 + v[1] ** 2
              and all(type(t) is int for row in fr.A + fr.A_inv for t in row))
        bad += not ok
    dt = time.perf_counter() - t0
    verdict.check(bad == 0 and dt < 1.0, f"{len(vs) - bad}/{len(vs)} frames exact in {dt:.3f}s (limit 1s)")


@pytest.mark.criterion(2)
def test_criterion_2_rigid_oracles(verdict):
    from torusrot.lamination import H2_lift, build_lamination

    t0 = time.perf_counter()
    F = translation(PHI, SQRT2M1)
    N = 10_000
    rep = rotation_set_estimate(F, 16, N, rng=np.random.default_rng(2))
    samples = np.random.default_rng(3).uniform(0, 1, (1000, 2))
    h = gh_semiconjugacy(F, (1, 0), PHI, N, samples)
    h_err = float(np.max(circle_distance(h.H, samples[:, 0])))
    lam = build_lamination(F, level_count=64, raster=FULL)
    R = lam.raster
    rows_ok = all(C.mask == R.band(int(R.rows_of(r)), int(R.rows_of(r)))
                  for r, C in zip(lam.levels, lam.circloids))
    K = len(lam.levels)
    order_ok = lam.checks["order_pairs"] == K * (K - 1) // 2 and len(lam.checks["translate"]) > 0
    x, y = samples[:, 0], samples[:, 1]
    h2_err = float(np.max(np.abs(H2_lift(lam, x, y) - y)))
    dt = time.perf_counter() - t0
    # orbit coordinates reach ~6e3, so rounding alone leaves ~1e-12 in the deviations
    ok = (rep.spread == 0.0 and rep.bmm_constant <= 1e-9 and h.defect <= 1e-12 and h_err <= 1e-12
          and rows_ok and order_ok and lam.checks["invariance_max"] <= 1.0 and h2_err <= 1 / 64 and dt < 30)
    verdict.check(ok, f"spread {rep.spread:g}, BMM {rep.bmm_constant:.2g}, H defect {h.defect:.2g}, "
                      f"|H - x| {h_err:.2g}, rows {rows_ok}, translate/order {order_ok}, "
                      f"invariance {lam.checks['invariance_max']:.1f} cells, "
                      f"|H2 - y| {h2_err:.4f} (limit 1/64), {dt:.1f}s (limit 30s)")


@pytest.mark.criterion(3)
def test_criterion_3_golden_skew(verdict):
    from torusrot.classify import ClassifyConfig, classify
    from torusrot.lamination import build_lamination

    t0 = time.perf_counter()
    F = golden_skew().lift()
    starts = np.random.default_rng(4).uniform(0, 1, (4, 2))
    rho_err = max(float(np.max(np.abs(np.subtract(tuple(rotation_vector_estimate(F, tuple(z), 100_000).rho),
                                                  (PHI, 0.0)))))
                  for z in starts)
    samples = np.random.default_rng(5).uniform(0, 1, (16, 2))
    c, _ = bmm_estimate(F, (PHI, 0.0), None, 10_000, samples=samples)
    bmm_err = abs(c - skew_bmm_oracle(samples[:, 0], 10_000))
    lam = build_lamination(F, level_count=16, raster=FULL)
    inv = lam.checks["invariance_max"]
    rep = classify(golden_skew(), ClassifyConfig())
    det = rep.circloid
    circ_ok = det is not None and det.found and bool(det.is_circloid)
    dt = time.perf_counter() - t0
    ok = rho_err <= 1e-3 and bmm_err <= 1e-6 and inv <= 2.0 and rep.rotation_branch == "ii" and circ_ok and dt < 180
    verdict.check(ok, f"|rho - (phi, 0)| {rho_err:.2g}, BMM {c:.6f} vs oracle within {bmm_err:.2g}, "
                      f"invariance {inv:.2f} cells, branch {rep.rotation_branch}, circloid {circ_ok}, "
                      f"{dt:.1f}s (limit 180s)")


@pytest.mark.criterion(4)
def test_criterion_4_circloid_calculus(verdict):
    from torusrot.circloid import c_minus, c_plus, is_circloid, make_continuum, raster_thin, thin_circloid
    from torusrot.core import RegionMask
    from oracles import random_band_set, random_thin, rasterize_band_set

    R = Raster(256, 256)
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    fails = []
    for i in range(100):
        m = RegionMask(R, rasterize_band_set(random_band_set(rng), 256, 256))
        for name, op in (("c_minus", c_minus), ("c_plus", c_plus)):
            C = op(m)
            if not (op(C.mask).mask == C.mask and is_circloid(C.continuum) and C.mask.issubset(m)):
                fails.append((i, name))
    thin = 0
    while thin < 100:
        bits, base = random_thin(rng, 256, 256)
        A = make_continuum(RegionMask(R, bits))
        if not raster_thin(A):
            continue
        thin += 1
        T = thin_circloid(A).mask
        if not (T == c_plus(A.mask).mask == c_minus(A.mask).mask and np.array_equal(T.bits, base)):
            fails.append((thin, "thin"))
    dt = time.perf_counter() - t0
    verdict.check(not fails and dt < 60, f"100 generating sets and {thin} thin continua, failures {fails[:5]}, "
                                         f"{dt:.1f}s (limit 60s)")


@pytest.mark.criterion(5)
def test_criterion_5_order_laws(verdict):
    from torusrot.circloid import c_minus, c_plus, interval, make_continuum, region_order
    from torusrot.core import CLOSED, RegionMask
    from oracles import random_band

    R = Raster(128, 128)
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    pairs, fails = 0, []
    while pairs < 50:
        A = c_minus(RegionMask(R, random_band(rng, 128, 128, max_thick=4))).continuum
        if rng.random() < 0.5:
            k = int(rng.integers(0, max(1, 112 - A.mask.row_extent()[1])))
            B = make_continuum(A.mask.shifted_rows(k))
        else:
            B = c_plus(RegionMask(R, random_band(rng, 128, 128, max_thick=4))).continuum
        ab, ba = region_order(A, B), region_order(B, A)
        if not (ab.a_le_b or ab.b_le_a):
            continue
        pairs += 1
        if ab.b_le_a and not ab.a_le_b:
            A, B, ab, ba = B, A, ba, ab
        aa = region_order(A, A)
        ok = aa.a_le_b and not aa.a_lt_b
        ok &= ab.a_le_b == ba.b_le_a and ab.a_lt_b == ba.b_lt_a
        ok &= not (ab.a_lt_b and ab.b_le_a)
        ok &= not (ab.a_le_b and ab.b_le_a) or A.mask == B.mask
        op, cl = interval(A, B, "open"), interval(A, B, "closed")
        ok &= cl == op.with_role(CLOSED) | A.mask | B.mask
        if not ok:
            fails.append(pairs)
    dt = time.perf_counter() - t0
    verdict.check(not fails and dt < 30, f"{pairs} comparable circloid pairs, failures {fails[:5]}, "
                                         f"{dt:.1f}s (limit 30s)")


@pytest.mark.criterion(6)
def test_criterion_6_torus_semiconjugacy(verdict):
    from torusrot.lamination import build_torus_semiconjugacy

    t0 = time.perf_counter()
    K = 64
    h = build_torus_semiconjugacy(translation(PHI, SQRT2M1), level_count=K, raster=FULL, points=1000)
    pts = np.random.default_rng(8).uniform(0, 1, (1000, 2))
    h1, h2 = h(pts[:, 0], pts[:, 1])
    ident = max(float(np.max(circle_distance(h1, pts[:, 0]))), float(np.max(circle_distance(h2, pts[:, 1]))))
    dt = time.perf_counter() - t0
    ok = max(h.defects) <= 2 / K and ident <= 1 / K and dt < 120
    verdict.check(ok, f"defects {h.defects[0]:.4f}, {h.defects[1]:.4f} (limit 2/{K}), "
                      f"|h - id| {ident:.4f} (limit 1/{K}), {dt:.1f}s (limit 120s)")


@pytest.mark.criterion(7)
def test_criterion_7_trichotomy(verdict):
    from torusrot.classify import ClassifyConfig, classify

    t0 = time.perf_counter()
    cfg = ClassifyConfig(eps=1 / 32, transitivity_N=100_000)
    periodic = classify(builtin_family("rigid", 0.5, 1 / 3), cfg)
    skew = classify(golden_skew(), cfg)
    rigid = classify(builtin_family("rigid", PHI, SQRT2M1), cfg)
    dt = time.perf_counter() - t0
    pp = periodic.periodic_points
    ok_iii = periodic.rotation_branch == "iii" and bool(pp) and all(c.q == 6 and c.residual < 1e-8 for c in pp)
    ok_ii = skew.rotation_branch == "ii"
    tr = rigid.transitivity
    ok_i = (rigid.rotation_branch == "i" and rigid.dynamics_branch == "transitive"
            and tr is not None and tr.coverage >= 0.99)
    # a transitive verdict and a periodic circloid are never reported together
    exclusive = all(not (r.transitivity is not None and r.transitivity.plausible
                         and r.circloid is not None and r.circloid.found)
                    for r in (periodic, skew, rigid))
    ok = ok_iii and ok_ii and ok_i and exclusive and dt < 180
    cov = None if tr is None else tr.coverage
    verdict.check(ok, f"rigid(1/2,1/3) {periodic.rotation_branch} with {len(pp)} q=6 points, "
                      f"skew {skew.rotation_branch}, rigid irrational {rigid.rotation_branch}/"
                      f"{rigid.dynamics_branch} coverage {cov}, exclusive {exclusive}, {dt:.1f}s (limit 180s)")


@pytest.mark.criterion(8)
def test_criterion_8_resolution_stability(verdict):
    from torusrot.circloid import c_minus, c_plus, make_continuum, raster_thin, thin_circloid
    from torusrot.classify import detect_periodic_circloid
    from torusrot.core import RegionMask
    from torusrot.lamination import build_lamination
    from oracles import random_band_set, random_thin, rasterize_band_set

    t0 = time.perf_counter()
    worst = {}
    F = golden_skew()
    coarse = build_lamination(F, level_count=16, raster=FULL)
    fine = build_lamination(F, level_count=16, raster=coarse.raster.scaled(2))
    worst["lamination"] = max(hausdorff_cells(upsample(C.mask, 2), D.mask)
                              for C, D in zip(coarse.circloids, fine.circloids))
    det = [detect_periodic_circloid(F, raster=FULL, level_count=16)]
    det.append(detect_periodic_circloid(F, raster=det[0].lamination.raster.scaled(2), level_count=16))
    worst["detected"] = (hausdorff_cells(upsample(det[0].circloid.mask, 2), det[1].circloid.mask)
                         if det[0].found and det[1].found else math.inf)

    R = Raster(256, 256)
    rng = np.random.default_rng(9)
    worst["generating"] = 0.0
    for _ in range(100):
        # the same band and disks rasterized at both resolutions
        p = random_band_set(rng)
        m = RegionMask(R, rasterize_band_set(p, 256, 256))
        m2 = RegionMask(R.scaled(2), rasterize_band_set(p, 512, 512))
        for op in (c_minus, c_plus):
            d = hausdorff_cells(upsample(op(m).mask, 2), op(m2).mask)
            worst["generating"] = max(worst["generating"], d)
    worst["thin"], thin = 0.0, 0
    while thin < 100:
        bits, _ = random_thin(rng, 256, 256)
        A = make_continuum(RegionMask(R, bits))
        if not raster_thin(A):
            continue
        thin += 1
        T2 = upsample(thin_circloid(A).mask, 2)
        A2 = upsample(A.mask, 2)
        for op in (c_minus, c_plus):
            worst["thin"] = max(worst["thin"], hausdorff_cells(T2, op(A2).mask))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 3.0 and dt < 600
    verdict.check(ok, ", ".join(f"{k} {v:.2f}" for k, v in worst.items())
                  + f" fine cells (limit 3), {dt:.1f}s (limit 600s)")


@pytest.mark.criterion(9)
def test_criterion_9_determinism(verdict, tmp_path):
    from torusrot.cli import main

    skew = "builtin:skew:0.6180339887,0,0.05"
    rigid = "builtin:rigid:0.6180339887,0.41421356237"
    small = ["--raster", "128", "128", "-1", "2"]
    runs = {
        "rotset": ["rotset", skew, "--iters", "2000"],
        "bmm": ["bmm", skew, "--iters", "2000"],
        "semiconj": ["semiconj", skew, "--iters", "300"],
        "lamination": ["lamination", skew, *small, "--levels", "8", "--iters", "50"],
        "classify": ["classify", skew, "--raster", "256", "256", "-1", "2", "--levels", "16", "--iters", "2000"],
        "render": ["render", rigid, *small, "--levels", "8", "--iters", "50"],
    }
    differ, codes, files = [], {}, 0
    for name, argv in runs.items():
        a, b = tmp_path / name / "a", tmp_path / name / "b"
        codes[name] = (main([*argv, "--seed", "11", "--out", str(a)]), main([*argv, "--seed", "11", "--out", str(b)]))
        for f in sorted(a.iterdir()):
            if f.suffix in (".json", ".csv"):
                files += 1
                if f.read_bytes() != (b / f.name).read_bytes():
                    differ.append(f"{name}/{f.name}")
    ok = not differ and all(c == (0, 0) for c in codes.values()) and files >= len(runs)
    verdict.check(ok, f"{files} JSON/CSV files from {len(runs)} commands, differing {differ}, exit codes {codes}")
