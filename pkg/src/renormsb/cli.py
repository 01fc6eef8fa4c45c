"""Command-line entry point: ``renormsb <verb> [--config FILE] [--out DIR] ...``.

Exit codes: 0 pass, 1 invariant failure, 2 config error, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import io
from .dressing import build_dressed_space
from .experiments import (ConfigError, ExperimentConfig, _probe_space, run_convergence, run_examples,
                          run_triviality_demo, run_verify)
from .fock import BasisTooLarge
from .forms import MetricMismatchError
from .hamiltonian import TruncationError, field_form, renorm_hamiltonian_form, solve_gevp
from .spin_form import renorm_spin_form

log = logging.getLogger("renormsb")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3
VERBS = ("build", "spectrum", "converge", "triviality", "examples", "verify")


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "renormsb": pkg}


def _stage_space(cfg: ExperimentConfig, stage: int):
    fam = cfg.family()
    v = fam.limit if stage < 0 else fam.generator(fam.cutoff_values[stage])
    _, g, sub, basis = _probe_space(cfg, fam, v, fam.limit_regularity if stage < 0 else None)
    return build_dressed_space(cfg.spin(), basis, sub, g)


def cmd_build(cfg: ExperimentConfig, out: Path, args) -> tuple[bool, list, dict]:
    ds = _stage_space(cfg, args.stage)
    meta = {"basis": ds.basis.descriptor(), "grid": ds.grid.descriptor(), "metric_key": ds.key,
            "stage": args.stage}
    files = [io.write_triplets(out / "gram.txt", ds.G, meta),
             io.write_triplets(out / "form_field.txt", field_form(ds).matrix, meta),
             io.write_triplets(out / "form_spin.txt", renorm_spin_form(ds).matrix, meta),
             io.write_triplets(out / "form_total.txt", renorm_hamiltonian_form(ds).matrix, meta)]
    report = {"gram": ds.gram_report(), **meta}
    files.append(io.write_json(out / "build.json", report))
    return ds.chol is not None, files, report


def cmd_spectrum(cfg: ExperimentConfig, out: Path, args) -> tuple[bool, list, dict]:
    fam = cfg.family()
    stages = list(range(len(fam.cutoff_values))) + [-1]
    rows = {}
    for s in stages:
        ds = _stage_space(cfg, s)
        res = solve_gevp(renorm_hamiltonian_form(ds), ds, k=args.k)
        rows[str(s)] = {"cutoff": fam.cutoff_values[s] if s >= 0 else float("inf"), **res.as_dict()}
    ok = all(max(r["residuals"], default=0.0) <= float(cfg.raw["tolerances"]["gevp"]) for r in rows.values())
    return ok, [io.write_json(out / "spectrum.json", rows)], rows


def cmd_converge(cfg: ExperimentConfig, out: Path, args) -> tuple[bool, list, dict]:
    flow = run_convergence(cfg, args.workers)
    for msg in flow.meta["non_monotone_delta_stages"]:
        log.warning("non-monotone renormalized delta at stage %s", msg)
    return not flow.meta["flags"], flow.write(out), flow.meta


def cmd_triviality(cfg: ExperimentConfig, out: Path, args) -> tuple[bool, list, dict]:
    rep = run_triviality_demo(cfg, args.workers)
    return True, rep.write(out), rep.meta


def cmd_examples(cfg, out: Path, args) -> tuple[bool, list, dict]:
    rep = run_examples()
    return rep["passed"], [io.write_json(out / "examples.json", rep)], rep


def cmd_verify(cfg, out: Path, args) -> tuple[bool, list, dict]:
    seed = args.seed if args.seed is not None else (cfg.raw["seed"] if cfg else 0)
    rep = run_verify(seed, args.inject_fault)
    return rep["passed"], [io.write_json(out / "verify.json", rep)], rep


COMMANDS = {"build": cmd_build, "spectrum": cmd_spectrum, "converge": cmd_converge,
            "triviality": cmd_triviality, "examples": cmd_examples, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renormsb", description="Renormalized spin-boson form experiments")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, default=Path("run"), help="run directory (created)")
    p.add_argument("--workers", type=int, default=1, help="parallel cutoff stages")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--tol", type=float, help="override the truncation tail tolerance")
    p.add_argument("--max-basis", type=int, help="cap on the Fock basis size")
    p.add_argument("--stage", type=int, default=0, help="cutoff stage for build (-1 = limit)")
    p.add_argument("--k", type=int, default=None, help="number of eigenvalues for spectrum")
    p.add_argument("--inject-fault", choices=["metric"], help="verify: corrupt the metric handle")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = None
        if args.config is not None:
            cfg = ExperimentConfig.load(args.config).override(seed=args.seed, tol=args.tol,
                                                             max_basis=args.max_basis)
        elif args.verb not in ("examples", "verify"):
            raise ConfigError(f"{args.verb} needs --config")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        ok, files, _ = COMMANDS[args.verb](cfg, args.out, args)
        code = EXIT_PASS if ok else EXIT_FAIL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BasisTooLarge, TruncationError) as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except MetricMismatchError as exc:
        print(f"metric mismatch: {exc}", file=sys.stderr)
        return EXIT_FAIL
    manifest = {"verb": args.verb, "exit_code": code, "versions": _versions(),
                "config_hash": cfg.digest() if cfg else None, "config": cfg.raw if cfg else None,
                "seed": args.seed if args.seed is not None else (cfg.raw["seed"] if cfg else 0),
                "seconds": time.perf_counter() - t0, "argv": sys.argv[1:] if argv is None else list(argv),
                "outputs": [str(Path(f).name) for f in files]}
    io.write_json(args.out / "manifest.json", manifest)
    print(f"{args.verb}: {'PASS' if ok else 'FAIL'} ({len(files)} files in {args.out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
