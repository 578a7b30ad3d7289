"""Command-line entry point.

Exit codes: 0 success (inconclusive classifications included), 2 usage, parse
error or missing file, 3 map validation, 4 defect or hypothesis failure,
5 construction failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as out
from .circloid import CircloidError
from .core import Raster, hausdorff_cells, upsample
from .dsl import DSLError, LiftValidationError, ParseError, builtin_family, load_map, validate_lift
from .lamination import LaminationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_DEFECT = 4
EXIT_CONSTRUCTION = 5
RESOLUTION_TOL = 3.0


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class RunConfig:
    raster: tuple
    iters: Optional[int]
    levels: Optional[int]
    samples: int
    tol_pr: float
    relation_tol: float
    hausdorff: float
    seed: int
    out: str

    def __post_init__(self):
        nx, ny, y0, y1 = self.raster
        if nx <= 0 or ny <= 0 or y1 <= y0:
            raise CLIError("raster needs positive size and YMIN < YMAX", EXIT_USAGE)
        for name in ("iters", "levels"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise CLIError(f"--{name} must be positive", EXIT_USAGE)
        if self.samples <= 0 or self.tol_pr <= 0 or self.relation_tol <= 0 or self.hausdorff <= 0:
            raise CLIError("sample counts and tolerances must be positive", EXIT_USAGE)

    def make_raster(self) -> Raster:
        nx, ny, y0, y1 = self.raster
        return Raster(int(nx), int(ny), float(y0), float(y1))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def record(self) -> dict:
        d = asdict(self)
        d["raster"] = list(d["raster"])
        d.pop("out")
        return d


def load_map_arg(arg: str):
    """A map file path, or builtin:KIND:P1,P2,... for the builtin families."""
    if arg.startswith("builtin:"):
        parts = arg.split(":")
        if len(parts) != 3:
            raise CLIError("builtin maps are written builtin:KIND:P1,P2,...", EXIT_USAGE)
        try:
            params = [float(t) for t in parts[2].split(",") if t.strip()]
            return builtin_family(parts[1], *params)
        except ValueError as exc:
            raise CLIError(f"bad builtin map {arg!r}: {exc}", EXIT_USAGE)
    path = Path(arg)
    if not path.is_file():
        raise CLIError(f"map file not found: {arg}", EXIT_USAGE)
    try:
        return load_map(path)
    except ParseError as exc:
        raise CLIError(f"{arg}: parse error: {exc}", EXIT_USAGE)
    except DSLError as exc:
        raise CLIError(f"{arg}: {exc}", EXIT_USAGE)


def _prepare(args, cfg: RunConfig):
    m = load_map_arg(args.map)
    try:
        validate_lift(m, rng=np.random.default_rng(cfg.seed))
    except LiftValidationError as exc:
        raise CLIError(f"{args.map}: not a lift of a torus map: {exc}", EXIT_VALIDATION)
    except DSLError as exc:
        raise CLIError(f"{args.map}: evaluation failed: {exc}", EXIT_VALIDATION)
    return m


def _parse_vec(text: str) -> tuple:
    try:
        a, b = (int(t) for t in text.split(","))
    except ValueError:
        raise CLIError(f"expected an integer vector like 1,0; got {text!r}", EXIT_USAGE)
    return a, b


def _header(cmd: str, args, cfg: RunConfig) -> dict:
    return {"command": cmd, "config": cfg.record(), "map": args.map, "seed": cfg.seed}


# --- commands ----------------------------------------------------------------


def cmd_rotset(args, cfg: RunConfig) -> int:
    from .rotation import classify_rotation_vector, directional_deviation, rotation_set_estimate

    m = _prepare(args, cfg)
    F = m.lift()
    N = cfg.iters or 10_000
    rep = rotation_set_estimate(F, cfg.samples, N, rng=cfg.rng(), tol_pr=cfg.tol_pr)
    tol = max(cfg.relation_tol, 2.0 * (rep.bmm_constant or 0.0) / N)
    doc = _header("rotset", args, cfg)
    doc["rotation"] = rep.to_dict()
    doc["vector_class"] = classify_rotation_vector(rep.mean, tol=tol).to_dict()
    v = _parse_vec(args.v)
    z = tuple(rep.samples[0])
    series = directional_deviation(F, rep.mean, v, (1, N), z)
    rows = zip(series.ns.tolist(), series.values[:, 0], series.values[:, 1], series.dv)
    outdir = Path(cfg.out)
    out.write_json(outdir / "report.json", doc)
    out.write_csv(outdir / "deviations.csv", ["n", "D1", "D2", "Dv"], rows)
    return EXIT_OK


def cmd_bmm(args, cfg: RunConfig) -> int:
    from .rotation import bmm_estimate, is_flat, rotation_set_estimate

    m = _prepare(args, cfg)
    F = m.lift()
    if F.inverse is None and F.power is None:
        raise CLIError("bounded mean motion needs an inverse map", EXIT_VALIDATION)
    N = cfg.iters or 10_000
    rng = cfg.rng()
    rep = rotation_set_estimate(F, cfg.samples, min(N, 10_000), rng=rng, tol_pr=cfg.tol_pr, with_bmm=False)
    v = None if args.v is None else _parse_vec(args.v)
    Ns = sorted({n for n in (100, 1000, 10_000) if n < N} | {N})
    growth = []
    for n in Ns:
        c, (n_star, z_star) = bmm_estimate(F, rep.mean, v, n, samples=rep.samples)
        growth.append({"N": n, "c": c, "n_star": n_star, "z_star": list(z_star)})
    doc = _header("bmm", args, cfg)
    doc.update({
        "rho": list(rep.mean),
        "v": None if v is None else list(v),
        "growth": growth,
        "constant": growth[-1]["c"],
        "flat": bool(is_flat([g["c"] for g in growth])),
    })
    out.write_json(Path(cfg.out) / "bmm.json", doc)
    return EXIT_OK


def cmd_semiconj(args, cfg: RunConfig) -> int:
    from .linearize import (
        DefectError,
        FrameError,
        HypothesisError,
        default_sample,
        directional_rotation_number,
        gh_semiconjugacy,
    )
    from .rotation import bmm_estimate

    m = _prepare(args, cfg)
    F = m.lift()
    v = _parse_vec(args.v)
    N = cfg.iters or 1000
    rng = cfg.rng()
    doc = _header("semiconj", args, cfg)
    path = Path(cfg.out) / "semiconj.json"
    try:
        tol = cfg.relation_tol
        if args.rho0 is not None:
            rho0 = args.rho0
        else:
            n_est = 10_000
            rho0 = directional_rotation_number(F, v, N=n_est, rng=rng)
            if F.inverse is not None or F.power is not None:
                # the estimate is only known to within 2c/N
                vv = np.asarray(v, dtype=float)
                c = bmm_estimate(F, rho0 * vv / (vv @ vv), v, 1000, sample_count=8, rng=rng)[0]
                tol = max(tol, 2.0 * c / n_est)
        samples = default_sample(F, orbit_length=cfg.samples, random_points=cfg.samples, rng=rng)
        sc = gh_semiconjugacy(F, v, rho0, N, samples, rng=rng, tol=tol)
    except FrameError as exc:
        raise CLIError(str(exc), EXIT_VALIDATION)
    except DefectError as exc:
        doc["error"] = str(exc)
        doc["semiconjugacy"] = exc.result.to_dict()
        out.write_json(path, doc)
        raise CLIError(str(exc), EXIT_DEFECT)
    except HypothesisError as exc:
        raise CLIError(f"hypothesis fails: {exc}", EXIT_DEFECT)
    doc["semiconjugacy"] = sc.to_dict()
    out.write_json(path, doc)
    return EXIT_OK


def _resolution_check(lam, cfg: RunConfig, build) -> dict:
    """Rebuild at twice the resolution and compare each circloid with the upsampled coarse one."""
    fine = build(lam.raster.scaled(2))
    dists = []
    for C, D in zip(lam.circloids, fine.circloids):
        dists.append(hausdorff_cells(upsample(C.mask, 2), D.mask))
    worst = max(dists)
    return {"hausdorff": dists, "max": worst, "ok": worst <= RESOLUTION_TOL, "tol": RESOLUTION_TOL}


def cmd_lamination(args, cfg: RunConfig) -> int:
    from .lamination import build_lamination

    m = _prepare(args, cfg)
    levels = cfg.levels or 16
    N = cfg.iters or 200

    def build(raster):
        return build_lamination(m, levels, N, raster, rng=cfg.rng(), tol_pr=cfg.tol_pr,
                                hausdorff_tol=cfg.hausdorff)

    lam = build(cfg.make_raster())
    outdir = Path(cfg.out)
    doc = _header("lamination", args, cfg)
    doc["lamination"] = lam.summary()
    union = np.zeros(lam.raster.shape, dtype=bool)
    for C in lam.circloids:
        union |= C.mask.bits
    code = EXIT_OK
    if args.resolution_check:
        doc["resolution"] = _resolution_check(lam, cfg, build)
        if not doc["resolution"]["ok"]:
            code = EXIT_CONSTRUCTION
    out.write_json(outdir / "lamination.json", doc)
    out.write_atomic(outdir / "lamination.ppm", out.ppm_bytes(out.render_lamination(lam)))
    out.write_atomic(outdir / "lamination.pbm", out.pbm_bytes(union))
    if code:
        raise CLIError(f"resolution check failed: {doc['resolution']['max']:.3g} cells", code)
    return code


def cmd_classify(args, cfg: RunConfig) -> int:
    from .classify import ClassifyConfig, classify, detect_periodic_circloid

    m = _prepare(args, cfg)
    kw = {"raster": cfg.make_raster(), "rotation_samples": cfg.samples}
    if cfg.levels:
        kw["semiconj_levels"] = cfg.levels
    if cfg.iters:
        kw["rotation_N"] = cfg.iters
    ccfg = ClassifyConfig(**kw)
    rep = classify(m, ccfg, rng=cfg.rng())
    doc = _header("classify", args, cfg)
    doc["classification"] = rep.to_dict()
    code = EXIT_OK
    if args.resolution_check and rep.circloid is not None and rep.circloid.found:
        def build(raster):
            det = detect_periodic_circloid(m, rep.rotation, ccfg.v_max, ccfg.q_max, rep.tol, raster=raster,
                                           level_count=ccfg.circloid_levels, N=ccfg.lamination_N,
                                           rng=cfg.rng())
            if not det.found:
                raise LaminationError("circloid not found at the finer resolution")
            return det.lamination

        doc["resolution"] = _resolution_check(rep.circloid.lamination, cfg, build)
        if not doc["resolution"]["ok"]:
            code = EXIT_CONSTRUCTION
    out.write_json(Path(cfg.out) / "classification.json", doc)
    if rep.rotation_branch == "inconclusive" or rep.dynamics_branch == "inconclusive":
        print("note: classification inconclusive; see notes in classification.json", file=sys.stderr)
    if code:
        raise CLIError("resolution check failed", code)
    return code


def cmd_render(args, cfg: RunConfig) -> int:
    from .lamination import build_lamination, build_torus_semiconjugacy
    from .linearize import HypothesisError

    m = _prepare(args, cfg)
    outdir = Path(cfg.out)
    raster = cfg.make_raster()
    lam = build_lamination(m, cfg.levels or 16, cfg.iters or 200, raster, rng=cfg.rng(),
                           tol_pr=cfg.tol_pr, hausdorff_tol=cfg.hausdorff)
    out.write_atomic(outdir / "lamination.ppm", out.ppm_bytes(out.render_lamination(lam)))
    try:
        sc = build_torus_semiconjugacy(m, cfg.levels or 64, cfg.iters or 200, raster, rng=cfg.rng())
    except HypothesisError as exc:
        print(f"note: no torus semi-conjugacy rendered: {exc}", file=sys.stderr)
        return EXIT_OK
    doc = _header("render", args, cfg)
    doc["semiconjugacy"] = sc.to_dict()
    out.write_json(outdir / "semiconj2d.json", doc)
    out.write_atomic(outdir / "h1.ppm", out.ppm_bytes(out.render_heat(sc.h1)))
    out.write_atomic(outdir / "h2.ppm", out.ppm_bytes(out.render_heat(sc.h2)))
    return EXIT_OK


COMMANDS = {
    "rotset": cmd_rotset,
    "bmm": cmd_bmm,
    "semiconj": cmd_semiconj,
    "lamination": cmd_lamination,
    "classify": cmd_classify,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("map", help="map file, or builtin:KIND:P1,P2,...")
    common.add_argument("--raster", nargs=4, type=float, metavar=("NX", "NY", "YMIN", "YMAX"),
                        default=(512, 512, -1.0, 2.0))
    common.add_argument("--iters", type=int, default=None, help="orbit budget N")
    common.add_argument("--levels", type=int, default=None, help="lamination level count")
    common.add_argument("--samples", type=int, default=16)
    common.add_argument("--tol-pr", type=float, default=1e-2)
    common.add_argument("--relation-tol", type=float, default=1e-6)
    common.add_argument("--hausdorff", type=float, default=2.0)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".")
    common.add_argument("--resolution-check", action="store_true",
                        help="rebuild at twice the resolution and compare circloids")

    p = argparse.ArgumentParser(prog="torusrot", description="Rotation theory diagnostics for torus maps.")
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("rotset", parents=[common], help="rotation set estimate and deviations")
    sp.add_argument("--v", default="1,0", help="direction for the Dv column")
    sp = sub.add_parser("bmm", parents=[common], help="bounded mean motion constant")
    sp.add_argument("--v", default=None, help="direction; omit for the full deviation norm")
    sp = sub.add_parser("semiconj", parents=[common], help="one-dimensional semi-conjugacy along v")
    sp.add_argument("--v", default="1,0")
    sp.add_argument("--rho0", type=float, default=None)
    sub.add_parser("lamination", parents=[common], help="invariant circloid family")
    sub.add_parser("classify", parents=[common], help="full classification report")
    sub.add_parser("render", parents=[common], help="lamination and semi-conjugacy images")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            raster=tuple(args.raster), iters=args.iters, levels=args.levels, samples=args.samples,
            tol_pr=args.tol_pr, relation_tol=args.relation_tol, hausdorff=args.hausdorff,
            seed=args.seed, out=args.out)
        return COMMANDS[args.command](args, cfg)
    except CLIError as exc:
        print(f"torusrot: error: {exc}", file=sys.stderr)
        return exc.code
    except (LaminationError, CircloidError) as exc:
        print(f"torusrot: construction failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
