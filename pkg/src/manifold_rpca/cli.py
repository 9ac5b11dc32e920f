"""Command-line entry point: ``manifold-rpca {run,decompose,video}``.

Exit codes: 0 success, 2 bad flags/spec, 3 I/O or file-format error,
4 numerical failure of a single (non-grid) run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import fileio, probgen, video
from .baseline import bm_solve
from .errors import FormatError, InputError, ParameterError, RPCAError
from .solver import SolverConfig, solve, sparse_estimate

log = logging.getLogger("manifold_rpca")

EXIT_OK, EXIT_SPEC, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
SOLVERS = ("manifold_projective", "manifold_orthographic", "baseline_bm")
SCENARIOS = ("setting1", "setting2", "custom", "video")


class SpecError(Exception):
    pass


@dataclass
class ExperimentSpec:
    scenario: str = "setting1"
    dims: tuple = (200, 240)
    rank: int = 5
    gamma: float = 0.2
    per_column_count: Optional[int] = None
    gamma_star: Optional[float] = None
    eta_grid: tuple = probgen.ETA_GRID
    p: Optional[float] = None
    sigma_noise: float = 0.0
    seeds: tuple = (0,)
    solvers: tuple = SOLVERS
    max_iters: int = 300
    rel_tol: float = 1e-6
    scale_step_by_inv_p: bool = True
    output_dir: str = "out"
    sigma_spec: Optional[tuple] = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise SpecError(f"unknown scenario {self.scenario!r}")
        if not self.eta_grid:
            raise SpecError("eta grid is empty")
        if any(not e > 0 for e in self.eta_grid):
            raise SpecError("step sizes must be positive")
        if not self.seeds:
            raise SpecError("at least one seed is required")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad or not self.solvers:
            raise SpecError(f"unknown solver(s) {bad}; choose from {SOLVERS}")
        if self.p is not None and not 0 < self.p <= 1:
            raise SpecError(f"p must lie in (0, 1], got {self.p}")
        if not 0 <= self.gamma < 1:
            raise SpecError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.rank < 1 or self.rank > min(self.dims):
            raise SpecError(f"rank {self.rank} invalid for dims {self.dims}")


def _build_problem(spec, seed):
    n1, n2 = spec.dims
    if spec.scenario == "video":
        frames, _ = video.synthetic_clip(seed=seed)
        M, _ = video.frames_to_matrix(frames)
        mask = None
        if spec.p is not None and spec.p < 1:
            mask = probgen.sample_mask(*M.shape, spec.p, seed)
        return M, mask, None
    kw = dict(p=spec.p, sigma_noise=spec.sigma_noise, seed=seed)
    if spec.per_column_count is not None:
        kw["per_column_count"] = spec.per_column_count
    if spec.gamma_star is not None:
        kw["gamma_star"] = spec.gamma_star
    if spec.scenario == "setting1":
        pr = probgen.setting1(n1, n2, **kw)
    elif spec.scenario == "setting2":
        pr = probgen.setting2(n1, n2, **kw)
    else:
        sigma = spec.sigma_spec or (1.0,) * spec.rank
        if "per_column_count" not in kw and "gamma_star" not in kw:
            kw["per_column_count"] = int(round(0.05 * n1))
        pr = probgen.make_problem(n1, n2, spec.rank, sigma, **kw)
    return pr.Y, pr.mask, pr.L_dense


def _run_cell(spec, solver, eta, seed, problem):
    Y, mask, ref = problem
    retraction = "projective" if solver == "manifold_projective" else "orthographic"
    config = SolverConfig(spec.rank, spec.gamma, eta, retraction, spec.max_iters, spec.rel_tol,
                          spec.scale_step_by_inv_p, seed)
    t0 = time.perf_counter()
    if solver == "baseline_bm":
        _, trace = bm_solve(Y, config, mask, ref)
    else:
        _, trace = solve(Y, config, mask, ref)
    wall = (time.perf_counter() - t0) * 1e3
    name = f"{solver}_eta{eta:g}_seed{seed}.csv"
    fileio.write_trace(Path(spec.output_dir) / name, trace)
    last = trace.records[-1]
    ref_norm = None if ref is None else float(np.linalg.norm(ref))
    if trace.converged:
        to_tol = str(trace.iterations)
    else:
        to_tol = "DIVERGED" if trace.status in ("diverged", "failed") else "MAXITER"
    return {
        "solver": solver,
        "eta": f"{eta:g}",
        "seed": seed,
        "status": trace.status,
        "iters_to_tol": to_tol,
        "iterations": trace.iterations,
        "final_objective": repr(last.objective),
        "final_error": "" if last.ref_error is None else repr(last.ref_error),
        "final_rel_error": "" if last.ref_error is None else repr(last.ref_error / ref_norm),
        "wall_ms": f"{wall:.1f}",
    }


SUMMARY_FIELDS = ("solver", "eta", "seed", "status", "iters_to_tol", "iterations",
                  "final_objective", "final_error", "final_rel_error", "wall_ms")


def run_experiment(spec):
    """Run every (solver, eta, seed) cell; write traces and ``summary.csv``."""
    spec.validate()
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problems = {seed: _build_problem(spec, seed) for seed in spec.seeds}
    cells = [(s, e, seed) for s in spec.solvers for e in spec.eta_grid for seed in spec.seeds]
    workers = max(1, int(os.environ.get("RPCA_THREADS", "1") or 1))

    def work(cell):
        s, e, seed = cell
        return _run_cell(spec, s, e, seed, problems[seed])

    if workers == 1:
        rows = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, cells))
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _floats(text):
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    return vals


def _ints(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def _onoff(text):
    if text.lower() in ("on", "true", "1", "yes"):
        return True
    if text.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError("expected on/off")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SpecError(message)


def _common(p, single=True):
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    if single:
        p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--retraction", choices=("projective", "orthographic"), default=None)
    p.add_argument("--solver", choices=("manifold", "bm"), default=None)
    p.add_argument("--p", type=float, default=None, help="observation probability")
    p.add_argument("--mask", default=None, help="RPCMASK file of observed entries")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--scale-step-by-inv-p", type=_onoff, default=True, metavar="{on|off}")


def build_parser():
    parser = _Parser(prog="manifold-rpca", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="step-size sweep on a synthetic scenario")
    _common(run, single=False)
    run.add_argument("--scenario", choices=SCENARIOS, default="setting1")
    run.add_argument("--dims", type=_ints, default=(200, 240))
    run.add_argument("--eta-grid", type=_floats, default=probgen.ETA_GRID)
    run.add_argument("--eta", type=float, default=None, help="single step size (overrides the grid)")
    run.add_argument("--seeds", type=_ints, default=None)
    run.add_argument("--per-column", type=int, default=None)
    run.add_argument("--gamma-star", type=float, default=None)
    run.add_argument("--solvers", default=None, help=f"comma-separated subset of {','.join(SOLVERS)}")

    dec = sub.add_parser("decompose", help="split a matrix file into low-rank and sparse parts")
    dec.add_argument("matrix_in")
    _common(dec)

    vid = sub.add_parser("video", help="background/foreground separation of a frame sequence")
    vid.add_argument("frames", nargs="?", default=None,
                     help="directory of PGM frames, or an RPCM pixels x frames matrix")
    vid.add_argument("--frame-shape", type=_ints, default=None, help="H,W when reading an RPCM matrix")
    vid.add_argument("--synthetic", action="store_true", help="use a generated moving-blob clip")
    vid.add_argument("--iters", type=int, default=100)
    _common(vid)
    return parser


def _solver_names(args):
    if args.solvers:
        return tuple(s.strip() for s in args.solvers.split(",") if s.strip())
    if args.solver == "bm":
        return ("baseline_bm",)
    if args.solver == "manifold" or args.retraction:
        return (f"manifold_{args.retraction or 'orthographic'}",)
    return SOLVERS


def cmd_run(args):
    defaults = {"setting1": (5, 0.2), "setting2": (5, 0.05), "custom": (5, 0.2), "video": (3, 0.1)}
    rank, gamma = defaults[args.scenario]
    if len(args.dims) != 2:
        raise SpecError("--dims takes two integers")
    spec = ExperimentSpec(
        scenario=args.scenario,
        dims=tuple(args.dims),
        rank=args.rank or rank,
        gamma=gamma if args.gamma is None else args.gamma,
        per_column_count=args.per_column,
        gamma_star=args.gamma_star,
        eta_grid=(args.eta,) if args.eta is not None else tuple(args.eta_grid),
        p=args.p,
        sigma_noise=args.noise_std,
        seeds=args.seeds if args.seeds is not None else (args.seed,),
        solvers=_solver_names(args),
        max_iters=300 if args.max_iters is None else args.max_iters,
        rel_tol=1e-6 if args.tol is None else args.tol,
        scale_step_by_inv_p=args.scale_step_by_inv_p,
        output_dir=args.out,
    )
    if args.scenario == "video":
        spec.dims = (64 * 48, 50)
    rows = run_experiment(spec)
    for row in rows:
        print(f"{row['solver']:22s} eta={row['eta']:>5s} seed={row['seed']} {row['status']:9s} "
              f"iters={row['iterations']} rel_err={row['final_rel_error'] or '-'}")
    return EXIT_OK


def _load_mask(args, shape):
    if args.mask:
        mask = fileio.read_mask(args.mask, args.p)
        if mask.shape != shape:
            raise InputError(f"mask shape {mask.shape} does not match matrix {shape}")
        return mask
    if args.p is not None and args.p < 1:
        return probgen.sample_mask(*shape, args.p, args.seed)
    return None


def _config(args, rank, gamma, max_iters, tol):
    return SolverConfig(
        rank_r=rank,
        gamma=gamma,
        eta=args.eta,
        retraction=args.retraction or "orthographic",
        max_iters=max_iters,
        rel_tol=tol,
        scale_step_by_inv_p=args.scale_step_by_inv_p,
        seed=args.seed,
    )


def cmd_decompose(args):
    Y = fileio.load_matrix(args.matrix_in)
    rank = args.rank or 1
    if rank > min(Y.shape):
        raise SpecError(f"--rank {rank} exceeds min dimension of {Y.shape}")
    if args.noise_std:
        Y = probgen.add_noise(Y, args.noise_std, args.seed)
    mask = _load_mask(args, Y.shape)
    config = _config(args, rank, 0.1 if args.gamma is None else args.gamma,
                     500 if args.max_iters is None else args.max_iters,
                     1e-9 if args.tol is None else args.tol)
    if args.solver == "bm":
        L, trace = bm_solve(Y, config, mask)
    else:
        L, trace = solve(Y, config, mask)
    Ld = L.dense()
    S = sparse_estimate(Ld, Y, config.gamma, mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_matrix(out / "L.rpcm", Ld)
    fileio.write_matrix(out / "S.rpcm", S)
    fileio.write_trace(out / "trace.csv", trace)
    print(f"{trace.status}: {trace.iterations} iterations, objective {trace.records[-1].objective:.6g}")
    if trace.status in ("diverged", "failed"):
        print(f"numerical failure: {trace.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_video(args):
    if args.synthetic:
        frames, _ = video.synthetic_clip(seed=args.seed)
        M, shape = video.frames_to_matrix(frames)
    elif args.frames is None:
        raise SpecError("give a frames directory/matrix or --synthetic")
    elif Path(args.frames).is_dir():
        M, shape = video.frames_to_matrix(video.load_frames(args.frames))
    else:
        M = fileio.load_matrix(args.frames)
        if not args.frame_shape or len(args.frame_shape) != 2:
            raise SpecError("--frame-shape H,W is required with a matrix input")
        shape = tuple(args.frame_shape)
        if shape[0] * shape[1] != M.shape[0]:
            raise InputError(f"frame shape {shape} does not match {M.shape[0]} pixels")
    rank = args.rank or 3
    if rank > min(M.shape):
        raise SpecError(f"--rank {rank} exceeds min dimension of {M.shape}")
    mask = _load_mask(args, M.shape)
    config = _config(args, rank, 0.1 if args.gamma is None else args.gamma, args.iters,
                     1e-12 if args.tol is None else args.tol)
    L, S, trace = video.separate(M, config, mask, "bm" if args.solver == "bm" else "manifold")
    out = Path(args.out)
    video.export_frames(out, L, S, shape)
    fileio.write_trace(out / "trace.csv", trace)
    label = "partially-observed" if mask is not None else "fully-observed"
    print(f"{label}: {trace.status} after {trace.iterations} iterations, "
          f"objective {trace.records[0].objective:.6g} -> {trace.records[-1].objective:.6g}")
    if trace.status in ("diverged", "failed"):
        print(f"numerical failure: {trace.message}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    handler = {"run": cmd_run, "decompose": cmd_decompose, "video": cmd_video}[args.command]
    try:
        return handler(args)
    except (SpecError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (FormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RPCAError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
