"""Command-line entry point.

    pfinsler validate   --config run.json
    pfinsler simulate   --config run.json --out results/
    pfinsler curvature  --config run.json
    pfinsler uniqueness --config run.json --tol-overrides '{"residual": 1e-7}'

Exit codes: 0 success, 2 bad input, 3 precondition or policy violation.
The output directory defaults to ``$PFINSLER_OUT`` or the current directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import curvature as cv
from . import dynamics as dy
from . import lie_algebra as la
from . import polynorm as pn
from . import uniqueness as un

log = logging.getLogger("pfinsler")

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION = 0, 2, 3
OUT_ENV = "PFINSLER_OUT"

DEFAULT_TOLERANCES = {
    "face": pn.FACE_TOL,
    "residual": dy.RESIDUAL_TOL,
    "vanish": cv.VANISH_TOL,
    "jacobi": la.JACOBI_TOL,
}

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_policy = {
    "oneOf": [
        {"type": "string", "enum": ["barycenter"]},
        {"type": "object", "additionalProperties": False, "required": ["kind"],
         "properties": {"kind": {"enum": ["barycenter", "fixed-vertex", "schedule"]},
                        "vertex": {"type": "integer", "minimum": 0},
                        "schedule": {"type": "array", "items": {
                            "type": "array", "prefixItems": [{"type": "number"}, _vector],
                            "minItems": 2, "maxItems": 2}}}},
    ]
}
_simulate = {
    "type": "object", "additionalProperties": False, "required": ["a0", "T"],
    "properties": {
        "a0": _vector, "T": {"type": "number", "exclusiveMinimum": 0},
        "h": {"type": "number", "exclusiveMinimum": 0}, "policy": _policy,
        "project": {"type": "boolean"},
        "group": {"type": "object", "additionalProperties": False,
                  "properties": {"representation": {"oneOf": [
                      {"type": "string"},
                      {"type": "array", "items": {"type": "array", "items": _vector}}]},
                      "x0": {"type": "array", "items": _vector}}},
    },
}
CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["algebra"],
    "properties": {
        "algebra": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "norm": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "simulate": _simulate,
        "curvature": {"type": "object", "additionalProperties": False, "required": ["a"],
                      "properties": {"a": _vector, "v1": _vector, "v2": _vector}},
        "uniqueness": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["edge", "vertex"]},
                "trajectory": {"type": "string"},
                "simulate": _simulate,
                "a0": _vector,
                "measure_threshold": {"type": "number", "minimum": 0, "maximum": 1},
                "split_at_switches": {"type": "boolean"},
            },
        },
        "tolerances": {"type": "object", "additionalProperties": False,
                       "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in DEFAULT_TOLERANCES}},
    },
}


class InputError(Exception):
    pass


class PreconditionFailure(Exception):
    def __init__(self, msg, **extra):
        super().__init__(msg)
        self.extra = extra


# -- config loading ----------------------------------------------------------------


def load_config(path, tol_overrides: str | None = None) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config is not valid JSON: {exc}") from None
    if tol_overrides:
        try:
            over = json.loads(tol_overrides)
        except json.JSONDecodeError as exc:
            raise InputError(f"--tol-overrides is not valid JSON: {exc}") from None
        if not isinstance(over, dict):
            raise InputError("--tol-overrides must be a JSON object")
        cfg.setdefault("tolerances", {})
        if isinstance(cfg["tolerances"], dict):
            cfg["tolerances"].update(over)
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"config error at {where}: {exc.message}") from None
    cfg["tolerances"] = {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})}
    cfg["_base"] = str(Path(path).resolve().parent)
    return cfg


def build_algebra(cfg) -> la.LieAlgebra:
    desc = cfg["algebra"]
    desc = {"catalog": desc} if isinstance(desc, str) else desc
    return la.from_json(desc, jacobi_tol=cfg["tolerances"]["jacobi"])


def build_norm(cfg, dim: int) -> pn.PolyNorm:
    if "norm" not in cfg:
        raise InputError("config needs a 'norm'")
    desc = cfg["norm"]
    desc = {"catalog": desc, "dim": dim} if isinstance(desc, str) else desc
    if "catalog" in desc and "dim" not in desc:
        desc = {**desc, "dim": dim}
    N = pn.from_json(desc)
    if N.dim != dim:
        raise InputError(f"norm has dimension {N.dim}, algebra has {dim}")
    return N


def _covector(x, dim, what):
    v = np.asarray(x, dtype=float)
    if v.shape != (dim,):
        raise InputError(f"{what} must have {dim} entries")
    return v


def _simulate_trajectory(block, A, N, tols) -> dy.Trajectory:
    a0 = _covector(block["a0"], A.dim, "a0")
    policy = dy.ControlPolicy.from_json(block.get("policy", "barycenter"))
    if not N.validate().ok:
        raise InputError(f"norm is invalid; witness direction {N.validate().witness.tolist()}")
    return dy.integrate(A, N, a0, policy, float(block["T"]), float(block.get("h", dy.DEFAULT_STEP)),
                        face_tol=tols["face"], project=bool(block.get("project", False)))


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2))
    return path


# -- commands ----------------------------------------------------------------------


def cmd_validate(cfg, out: Path) -> int:
    A = build_algebra(cfg)
    report = {"algebra": {"name": A.name, "dim": A.dim, "jacobi_residual": la.jacobi_residual(A.structure)}}
    code = EXIT_OK
    if "norm" in cfg:
        N = build_norm(cfg, A.dim)
        ok, witness = N.validate()
        info = {"valid": ok, "dim": N.dim}
        if ok:
            info.update(vertices=len(N.ball.vertices), facets=len(N.functionals), redundant=len(N.redundant))
        else:
            info["witness"] = witness.tolist()
            code = EXIT_INPUT
        report["norm"] = info
    _write_json(out / "validate.json", report)
    print(json.dumps(report, indent=2))
    return code


def cmd_simulate(cfg, out: Path) -> int:
    if "simulate" not in cfg:
        raise InputError("config needs a 'simulate' block")
    A = build_algebra(cfg)
    N = build_norm(cfg, A.dim)
    tols = cfg["tolerances"]
    block = cfg["simulate"]
    traj = _simulate_trajectory(block, A, N, tols)
    csv_path, sw_path = traj.write_csv(out / "trajectory.csv")
    check = dy.verify_extremal(A, N, traj, tols["residual"], tols["face"])
    summary = {
        "samples": len(traj),
        "switches": len(traj.switch_times),
        "dual_value_drift": dy.dual_value_drift(traj),
        "residual": check.residual,
        "face_membership": check.face_ok,
        "accepted": check.accepted,
        "trajectory_csv": csv_path.name,
        "switch_times_json": sw_path.name,
    }
    if "group" in block:
        summary["group_json"] = _reconstruct(A, N, traj, block["group"], out).name
    _write_json(out / "summary.json", summary)
    print(f"samples {summary['samples']}, switches {summary['switches']}, "
          f"drift {summary['dual_value_drift']:.3e}, residual {summary['residual']:.3e}")
    if not check.accepted:
        print("trajectory rejected: residual or face membership check failed", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK


def _reconstruct(A, N, traj, gblock, out: Path) -> Path:
    rep = gblock.get("representation", A.name)
    try:
        R = la.matrix_representation(rep) if isinstance(rep, str) else np.asarray(rep, dtype=float)
    except KeyError as exc:
        raise InputError(str(exc)) from None
    x0 = np.asarray(gblock["x0"], dtype=float) if "x0" in gblock else np.eye(R.shape[1])
    g = dy.reconstruct_group(A, R, dy.ControlSchedule.from_trajectory(traj), x0, norm=N)
    return g.write_json(out / "group.json")


def cmd_curvature(cfg, out: Path) -> int:
    if "curvature" not in cfg:
        raise InputError("config needs a 'curvature' block")
    A = build_algebra(cfg)
    N = build_norm(cfg, A.dim) if "norm" in cfg else None
    block = cfg["curvature"]
    a = _covector(block["a"], A.dim, "a")
    v1 = _covector(block["v1"], A.dim, "v1") if "v1" in block else None
    v2 = _covector(block["v2"], A.dim, "v2") if "v2" in block else None
    rep = cv.flag_curvature(A, a, v1, v2, norm=N, tol=cfg["tolerances"]["vanish"])
    body = rep.to_json()
    if A.dim == 3:
        body["kernel_is_subalgebra"] = cv.k_vanishes_3d(A, a, cfg["tolerances"]["vanish"])
    _write_json(out / "curvature.json", body)
    print(f"K_B = {rep.K_B:.12g}, vanishes = {rep.vanishes}")
    return EXIT_OK


def cmd_uniqueness(cfg, out: Path) -> int:
    block = cfg.get("uniqueness")
    if block is None:
        raise InputError("config needs a 'uniqueness' block")
    A = build_algebra(cfg)
    N = build_norm(cfg, A.dim)
    tols = cfg["tolerances"]
    threshold = block.get("measure_threshold", un.MEASURE_THRESHOLD)
    mode = block.get("mode", "edge")
    try:
        if mode == "vertex":
            if "a0" not in block:
                raise InputError("vertex mode needs 'a0'")
            report = un.classify_vertex(A, N, _covector(block["a0"], A.dim, "a0"), tols["residual"],
                                        vanish_tol=tols["vanish"], face_tol=tols["face"])
            return _emit_report(report, out)
        traj = _load_trajectory(block, cfg, A, N, tols, out)
        kw = dict(vanish_tol=tols["vanish"], face_tol=tols["face"])
        if block.get("split_at_switches", False) and len(traj.switch_times):
            segs = un.classify_segments(A, N, traj, threshold, tols["residual"], **kw)
            body = {"split": True, "segments": [s.to_json() for s in segs]}
            _write_json(out / "uniqueness.json", body)
            for s in segs:
                verdict = s.report.classification if s.report else f"skipped ({s.error})"
                print(f"[{s.t_start:.6g}, {s.t_end:.6g}] {verdict}")
            return EXIT_OK
        report = un.classify_edge(A, N, traj, threshold, tols["residual"], **kw)
        return _emit_report(report, out)
    except un.PreconditionError as exc:
        extra = {"sample": exc.index} if exc.index is not None else {}
        raise PreconditionFailure(str(exc), **extra) from None


def _load_trajectory(block, cfg, A, N, tols, out: Path) -> dy.Trajectory:
    if ("trajectory" in block) == ("simulate" in block):
        raise InputError("edge mode needs exactly one of 'trajectory' or 'simulate'")
    if "simulate" in block:
        traj = _simulate_trajectory(block["simulate"], A, N, tols)
        traj.write_csv(out / "trajectory.csv")
        return traj
    path = Path(block["trajectory"])
    if not path.is_absolute():
        path = Path(cfg["_base"]) / path
    traj = dy.Trajectory.read_csv(path)
    if traj.dim != A.dim:
        raise InputError(f"trajectory has dimension {traj.dim}, algebra has {A.dim}")
    return traj


def _emit_report(report: un.UniquenessReport, out: Path) -> int:
    witness_path = None
    if report.classification == un.INFINITE and report.witness is not None:
        witness_path = report.witness.write_csv(out / "witness.csv").name
    _write_json(out / "uniqueness.json", report.to_json(witness_path))
    print(f"classification: {report.classification} "
          f"(vanishing fraction {report.vanishing_fraction:.4g})")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "curvature": cmd_curvature,
    "uniqueness": cmd_uniqueness,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfinsler", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=os.environ.get(OUT_ENV, "."), help="output directory")
    p.add_argument("--tol-overrides", default=None, help="JSON object merged into the tolerances block")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(code: int, kind: str, msg: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": msg, **extra}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.tol_overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (InputError, la.LieAlgebraError, pn.NormError, dy.DynamicsError, cv.CurvatureError) as exc:
        return _fail(EXIT_INPUT, "input", str(exc))
    except dy.PolicyViolationError as exc:
        return _fail(EXIT_PRECONDITION, "policy", str(exc), time=exc.time)
    except PreconditionFailure as exc:
        return _fail(EXIT_PRECONDITION, "precondition", str(exc), **exc.extra)
    except dy.IntegrationError as exc:
        return _fail(EXIT_PRECONDITION, "integration", str(exc))


if __name__ == "__main__":
    sys.exit(main())
