"""Command-line entry point: ``jumpflow {validate,simulate,converge,mollifier}``.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration
error, 3 output could not be written.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import analysis, yamada
from .config import (
    ConfigError,
    RunConfig,
    ValidateDoc,
    build_model,
    build_modulus,
    load_config,
    mesh_steps,
    modulus_family,
    require,
)
from .euler import simulate_path, write_path_rows
from .model import ValidationError, validate_growth, validate_levy, validate_modulus
from .noise import check_divides, sample_noise, uniform_net

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class OutputError(OSError):
    pass


def _write(outdir, name, text):
    try:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, name), "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {os.path.join(outdir, name)}: {exc.strerror}") from exc


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _threads(args, cfg: RunConfig | None) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("JUMPFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"JUMPFLOW_THREADS must be an integer, got {env!r}") from exc
    if cfg is not None and cfg.threads is not None:
        return cfg.threads
    return 1


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    updates = {}
    if args.paths is not None:
        updates["n_paths"] = args.paths
    if args.seed is not None:
        updates["seed"] = args.seed
    return cfg.model_copy(update=updates) if updates else cfg


def _run_settings(cfg: RunConfig, args):
    return {
        "threads": _threads(args, cfg),
        "batch_size": cfg.batch_size,
        "deterministic": cfg.deterministic,
    }


def _model_echo(cfg: RunConfig) -> dict:
    return cfg.model.model_dump(exclude_none=True)


# ---------------------------------------------------------------------------
# validate


def _default_pairs(m):
    xs = np.linspace(0.0, m, 9)
    pairs = [(float(a), float(b)) for a, b in zip(xs[:-1], xs[1:])]
    pairs.append((0.0, float(m)))
    return pairs


def cmd_validate(cfg: RunConfig, args) -> int:
    spec = build_model(cfg.model)
    vd = cfg.validate_
    if vd is None:
        vd = ValidateDoc()
    reports = []
    grid = vd.grid if vd.grid is not None else [0.0, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0, 1e3, 1e6]
    if spec.growth_constant is not None:
        reports.append(validate_growth(spec, grid, strict=vd.strict_growth))
    else:
        reports.append(None)
    pairs = vd.pairs if vd.pairs is not None else _default_pairs(vd.m)
    mod = build_modulus(vd.rho, spec, vd.f_expr)
    reports.append(
        validate_modulus(
            spec,
            mod,
            vd.mode,
            pairs,
            vd.m,
            divergence_threshold=vd.divergence_threshold,
            divergence_floor=vd.divergence_floor,
        )
    )
    if spec.phi is not None:
        reports.append(validate_levy(spec, pairs, vd.m, vd.levy_K))
    docs = []
    rows = [["report", "check", "passed"]]
    passed = True
    for r in reports:
        if r is None:
            docs.append({"title": "growth", "passed": True, "skipped": "model carries no growth constant K"})
            rows.append(["growth", "skipped", "true"])
            continue
        docs.append(r.to_dict())
        passed &= r.passed
        for c in r.checks:
            rows.append([r.title, c.name, "true" if c.passed else "false"])
    doc = {"command": "validate", "model": _model_echo(cfg), "passed": passed, "reports": docs}
    _write(args.out, "report.json", _dumps(doc))
    _write(args.out, "report.csv", _csv(rows))
    for r in reports:
        if r is not None:
            for c in r.failures():
                detail = {k: v for k, v in c.to_dict().items() if k not in ("name", "passed")}
                print(f"FAIL {r.title}: {c.name} {detail}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: RunConfig, args) -> int:
    require(cfg, "horizon", "meshes", "n_paths", "seed")
    spec = build_model(cfg.model)
    T = cfg.horizon
    master_steps = cfg.master()
    master = uniform_net(T, master_steps)
    settings = _run_settings(cfg, args)
    out = {"command": "simulate", "model": _model_echo(cfg), "horizon": T, "master_steps": master_steps,
           "n_paths": cfg.n_paths, "seed": cfg.seed, "meshes": []}
    rows = [["mesh", "time", "mean", "se", "mean_abs"]]
    nets = []
    for i, h in enumerate(cfg.meshes):
        steps = mesh_steps(T, h, f"meshes[{i}]")
        try:
            check_divides(T, master_steps, steps)
        except ValueError as exc:
            raise ConfigError(f"meshes[{i}]: {exc}") from exc
        net = uniform_net(T, steps)
        nets.append(net)
        s = analysis.simulate_summary(spec, net, cfg.n_paths, cfg.seed, master=master, **settings)
        d = s.to_dict()
        d["mesh"] = h
        out["meshes"].append(d)
        for t, m, se, ma in zip(s.times, s.mean, s.se, s.mean_abs):
            rows.append([repr(h), repr(float(t)), repr(float(m)), repr(float(se)), repr(float(ma))])
    _write(args.out, "report.json", _dumps(out))
    _write(args.out, "report.csv", _csv(rows))
    if args.dump_paths:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path_index", "time", "state", "flag"])
        for net in nets:
            for p in range(cfg.n_paths):
                ep = simulate_path(spec, net, sample_noise(master, spec.measure, cfg.seed, p))
                write_path_rows(w, p, ep.net.points, ep.states, ep.jump_times, ep.jump_post)
        _write(args.out, "paths.csv", buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# converge


def cmd_converge(cfg: RunConfig, args) -> int:
    require(cfg, "horizon", "meshes", "reference", "n_paths", "seed")
    spec = build_model(cfg.model)
    T = cfg.horizon
    meshes = list(cfg.meshes)
    if len(meshes) < 2:
        raise ConfigError("meshes: a convergence study needs at least two meshes")
    if any(not cfg.reference < h for h in meshes):
        raise ConfigError("reference: the reference mesh must be finer than every study mesh")
    if any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise ConfigError("meshes: must be strictly decreasing")
    master_steps = cfg.master()
    ref_steps = mesh_steps(T, cfg.reference, "reference")
    try:
        check_divides(T, master_steps, ref_steps)
        for i, h in enumerate(meshes):
            check_divides(T, ref_steps, mesh_steps(T, h, f"meshes[{i}]"))
    except ValueError as exc:
        raise ConfigError(f"meshes: {exc}") from exc
    report = analysis.convergence_study(
        spec, meshes, cfg.reference, cfg.n_paths, cfg.seed, T=T, master_steps=master_steps, **_run_settings(cfg, args)
    )
    doc = {"command": "converge", "model": _model_echo(cfg), "master_steps": master_steps, **report.to_dict()}
    _write(args.out, "report.json", _dumps(doc))
    _write(args.out, "report.csv", report.to_csv())
    if not report.nonincreasing:
        print("FAIL errors are not nonincreasing within 2 SE", file=sys.stderr)
    for c in report.bound_checks:
        if not c.passed:
            print(f"FAIL bound {c.kind} at mesh {c.mesh}: excess {c.worst_excess} at t={c.at_time}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# mollifier


def cmd_mollifier(args) -> int:
    if args.K < 1:
        raise ConfigError("--K must be at least 1")
    rho = modulus_family(args.family, args.scale, args.exponent)
    div = yamada.check_divergence(rho, args.threshold, args.floor)
    doc = {"command": "mollifier", "family": rho.describe(), "K": args.K, "constants": args.constants,
           "divergence": div.to_dict(), "levels": []}
    rows = [["k", "a_k", "sup_psi", "max_dh_over_h2"]]
    ok = div.divergent
    if not div.divergent:
        print(f"FAIL the integral of rho^-2 at 0+ is finite ({div.closed_form}); divergence condition fails",
              file=sys.stderr)
    try:
        seq = yamada.build_mollifier(rho, args.K)
    except yamada.MollifierRangeError as exc:
        doc["error"] = str(exc)
        doc["max_K"] = exc.max_k
        doc["passed"] = False
        _write(args.out, "report.json", _dumps(doc))
        _write(args.out, "report.csv", _csv(rows))
        print(f"FAIL {exc}", file=sys.stderr)
        return EXIT_FAIL
    if seq.a0_note:
        doc["a0_note"] = seq.a0_note
    z = np.linspace(-2.0, 2.0, args.grid_points)
    zeta = np.linspace(-2.0, 2.0, args.zeta_points)
    hs = np.linspace(-2.0, 2.0, args.h_points)
    for k in range(1, args.K + 1):
        rep = yamada.verify_mollifier(seq, k, z, zeta, hs)
        d = rep.to_dict()
        d["passed_selected"] = rep.passed_for(args.constants)
        doc["levels"].append(d)
        rows.append([k, repr(rep.a_k), repr(rep.sup_psi), repr(rep.max_dh_ratio)])
        ok &= rep.passed_for(args.constants)
        for p in rep.failures(args.constants):
            print(f"FAIL k={k} {p.name}: magnitude {p.magnitude:.6g} at {p.worst_point}", file=sys.stderr)
    doc["passed"] = bool(ok)
    _write(args.out, "report.json", _dumps(doc))
    _write(args.out, "report.csv", _csv(rows))
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--threads", type=int, help="worker threads (fallback: JUMPFLOW_THREADS)")
    common.add_argument("--paths", type=int, help="override n_paths")
    common.add_argument("--seed", type=int, help="override seed")
    common.add_argument("--dump-paths", action="store_true", help="also write paths.csv (simulate)")

    p = argparse.ArgumentParser(prog="jumpflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the model conditions")
    sub.add_parser("simulate", parents=[common], help="simulate paths and summary statistics")
    sub.add_parser("converge", parents=[common], help="strong-convergence study across meshes")
    m = sub.add_parser(
        "mollifier", aliases=["mollifier-check"], parents=[common], help="build and verify the |z| approximations"
    )
    m.add_argument("--family", default="sqrt", choices=["sqrt", "power", "sqrt_log", "sqrt_log_log", "constant"])
    m.add_argument("--scale", type=float, default=1.0)
    m.add_argument("--exponent", type=float, default=0.5, help="exponent of the power family")
    m.add_argument("--K", type=int, default=5, help="number of levels")
    m.add_argument("--grid-points", type=int, default=1000)
    m.add_argument("--zeta-points", type=int, default=200)
    m.add_argument("--h-points", type=int, default=200)
    m.add_argument("--threshold", type=float, default=1e3, help="divergence proxy threshold")
    m.add_argument("--floor", type=float, default=1e-12, help="divergence proxy lower limit")
    m.add_argument(
        "--constants",
        choices=["stated", "sharp"],
        default="stated",
        help="judge the second-derivative and second-difference bounds with the printed constants or the sharp ones",
    )
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.paths is not None and args.paths < 1:
        print("error: --paths must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command in ("mollifier", "mollifier-check"):
            return cmd_mollifier(args)
        cfg = _load(args)
        return {"validate": cmd_validate, "simulate": cmd_simulate, "converge": cmd_converge}[args.command](cfg, args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
