"""Command-line driver: ``sparsekam {pointmass,kam,moments}``.

Every run writes into a run directory holding ``manifest.json`` (merged
configuration, seed, git revision) next to its tables, volumes and figures.
Exit codes: 0 success, 2 configuration error, 3 numerical or degeneracy
error. Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io as vio
from .basis import expand, precompute_maps, synthesize
from .geometry import (align, check_genericity, random_atoms, random_rotations, read_atoms,
                       write_atoms)
from .imaging import (MomentAccumulator, gaussian_blob_phantom, pixel_size,
                      population_second_moment_pixelated, random_blobs,
                      render_clean_images, shepp_logan_phantom)
from .kam import compute_cl, scramble
from .metrics import crossing_shell, fsc, resolution, write_fsc_csv
from .oracle import PointMassOracle
from .point_recovery import recover_with_report
from .sparsity import project_sparsity
from .rrr import default_K, run, sign_aligned, sweep_beta, write_trace_csv

THREADS_ENV = "SPARSEKAM_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class GenericityError(ValueError):
    """Input atoms violate a genericity assumption."""


# ---------------------------------------------------------------- config


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _git_revision() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return n


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(t)) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsekam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="run directory (default runs/<command>-seed<seed>)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default ${THREADS_ENV} or 1)")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p = sub.add_parser("pointmass", help="recover point masses from pair-manifold oracles")
    common(p)
    p.add_argument("--p", type=int, default=10, help="number of atoms")
    p.add_argument("--atoms", help="atom table (x y z w) instead of random atoms")
    p.add_argument("--samples-per-pair", type=int, default=20)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--weight-min", type=float, default=0.5)
    p.add_argument("--weight-max", type=float, default=2.0)
    p.add_argument("--tol", type=float, default=1e-6, help="genericity tolerance")

    p = sub.add_parser("kam", help="recover a volume from its Kam matrices with RRR")
    common(p)
    p.add_argument("--phantom", choices=["blobs", "shepp-logan"], default="blobs")
    p.add_argument("--volume", help="raw float64 volume with .json sidecar")
    p.add_argument("--n-blobs", type=int, default=8)
    p.add_argument("--M", type=int, default=32)
    p.add_argument("--L", type=int, default=6)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--R-support", dest="R_support", type=float, default=32.0)
    p.add_argument("--K", type=int, default=None, help="sparsity level (default 5%% of M^3)")
    p.add_argument("--N", type=int, default=500)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--voxel-size", type=float, default=None, help="Angstrom (default 1)")
    p.add_argument("--unscrambled", action="store_true",
                   help="start from the true factors (fixed-point check)")
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--beta-sweep", type=_float_list, default=None,
                   help="comma-separated beta values for short sweep runs")
    p.add_argument("--sweep-N", type=int, default=100)

    p = sub.add_parser("moments", help="empirical vs population second moments of images")
    common(p)
    p.add_argument("--atoms", help="atom table; default is --p random atoms")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--kappa", type=float, default=None, help="blur std (default 2 tau)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--n-images", type=_int_list, default=[100, 1000, 10000],
                   help="comma-separated image counts, reported cumulatively")
    p.add_argument("--n-mc", type=int, default=20000,
                   help="rotations for the population estimate (0 to skip)")
    p.add_argument("--noise-only", action="store_true", help="images of pure noise")
    p.add_argument("--batch", type=int, default=1000)
    return parser


_BOOL_FLAGS = {"no_plots", "unscrambled", "no_early_stop", "noise_only"}


def parse_config(argv) -> argparse.Namespace:
    """Parse flags, filling unset ones from ``--config``."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise ConfigError("a command is required: pointmass, kam or moments")
    if args.config:
        cfg = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - known - {"config"})
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        for key in _BOOL_FLAGS & set(cfg):
            cfg[key] = _as_bool(cfg[key])
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = _default_threads()
    validate(args)
    return args


def validate(args) -> None:
    if args.threads < 1:
        raise ConfigError("threads >= 1 required")
    if args.command == "pointmass":
        if args.atoms is None and args.p < 3:
            raise ConfigError("p >= 3 required")
        if args.samples_per_pair < 5:
            raise ConfigError("samples-per-pair >= 5 required")
        if not 0 < args.weight_min <= args.weight_max:
            raise ConfigError("0 < weight-min <= weight-max required")
    elif args.command == "kam":
        if not 0 < args.beta < 2:
            raise ConfigError(f"beta must lie in (0, 2), got {args.beta}")
        if args.M < 8 or args.M & (args.M - 1):
            raise ConfigError("M must be a power of two >= 8")
        if args.L < 0:
            raise ConfigError("L >= 0 required")
        if not 0 < args.c <= 0.5:
            raise ConfigError("c must lie in (0, 0.5]")
        if args.R_support <= 0:
            raise ConfigError("R-support > 0 required")
        if args.N < 1:
            raise ConfigError("N >= 1 required")
        if args.K is not None and not 0 <= args.K <= args.M ** 3:
            raise ConfigError(f"K must lie in [0, M^3 = {args.M ** 3}]")
        if args.n_blobs < 1:
            raise ConfigError("n-blobs >= 1 required")
        if args.beta_sweep and not all(0 < b < 2 for b in args.beta_sweep):
            raise ConfigError("every beta-sweep value must lie in (0, 2)")
    elif args.command == "moments":
        if args.m < 1:
            raise ConfigError("m >= 1 required")
        if args.m > 6:
            raise ConfigError("m <= 6 required (the tensor has 16^m entries)")
        if args.sigma < 0:
            raise ConfigError("sigma >= 0 required")
        if args.kappa is not None and args.kappa <= 0:
            raise ConfigError("kappa > 0 required")
        if not args.n_images or min(args.n_images) < 1:
            raise ConfigError("n-images must list positive counts")
        if args.n_mc < 0 or args.batch < 1:
            raise ConfigError("n-mc >= 0 and batch >= 1 required")
        if args.atoms is None and not args.noise_only and args.p < 1:
            raise ConfigError("p >= 1 required")


# ---------------------------------------------------------------- helpers


def _run_dir(args) -> Path:
    out = Path(args.out) if args.out else Path("runs") / f"{args.command}-seed{args.seed}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _write_manifest(out: Path, args) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("out",)}
    _write_json(out / "manifest.json", {
        "command": args.command,
        "config": config,
        "seed": args.seed,
        "git_revision": _git_revision(),
        "version": __version__,
    })


def _finite(x):
    return None if x is None or not np.isfinite(x) else float(x)


# ---------------------------------------------------------------- commands


def cmd_pointmass(args) -> int:
    out = _run_dir(args)
    rng = np.random.default_rng(args.seed)
    if args.atoms:
        try:
            atoms = read_atoms(args.atoms)
        except OSError as exc:
            raise ConfigError(f"cannot read atoms file {args.atoms}: {exc.strerror}") from None
        if atoms.p < 3:
            raise ConfigError("p >= 3 required")
        args.p = atoms.p
    else:
        atoms = random_atoms(rng, args.p, args.radius, (args.weight_min, args.weight_max))
    _write_manifest(out, args)
    gen = check_genericity(atoms, args.tol)
    if not gen.a1_ok:
        raise GenericityError(
            f"A1 violation: two atoms are collinear with the origin "
            f"(min sine of pairwise angle {gen.min_angle:.3g} <= {args.tol:g})")
    if not gen.a2_ok:
        raise GenericityError(
            f"A2 violation: two atoms share a norm (min norm gap {gen.min_norm_gap:.3g})")
    oracle = PointMassOracle(atoms, rng, samples_per_pair=args.samples_per_pair)
    recovered, diag = recover_with_report(oracle, atoms.p, workers=args.threads)
    O, rmsd = align(recovered.positions, atoms.positions)
    weight_err = float(np.max(np.abs(recovered.weights - atoms.weights) / atoms.weights))
    write_atoms(out / "truth_atoms.txt", atoms, comment="ground truth")
    write_atoms(out / "recovered_atoms.txt", recovered,
                comment="recovered, up to a global orthogonal transform")
    write_atoms(out / "recovered_aligned.txt", recovered.transformed(O),
                comment="recovered, aligned to the ground truth")
    report = {
        "p": atoms.p,
        "rmsd": rmsd,
        "weight_max_relative_error": weight_err,
        "alignment": O,
        "alignment_det": float(np.linalg.det(O)),
        "genericity": {"a1_ok": gen.a1_ok, "a2_ok": gen.a2_ok,
                       "min_angle_sine": gen.min_angle, "min_norm_gap": gen.min_norm_gap},
        "oracle_sample_calls": oracle.sample_calls,
        "oracle_measure_calls": oracle.measure_calls,
        **diag,
    }
    _write_json(out / "report.json", report)
    print(f"pointmass p={atoms.p} rmsd={rmsd:.3e} weight_rel_err={weight_err:.3e} -> {out}")
    return EXIT_OK


def _kam_truth(args, rng):
    if args.volume:
        try:
            vol, voxel = vio.read_volume(args.volume)
        except OSError as exc:
            raise ConfigError(f"cannot read volume {args.volume}: {exc.strerror}") from None
        if args.voxel_size is None:
            args.voxel_size = voxel
        args.M = vol.shape[0]
        if args.M & (args.M - 1):
            raise ConfigError("volume size must be a power of two")
        return vol
    if args.phantom == "shepp-logan":
        return shepp_logan_phantom(args.M)
    return gaussian_blob_phantom(args.M, random_blobs(rng, args.M, count=args.n_blobs))


def cmd_kam(args) -> int:
    out = _run_dir(args)
    rng = np.random.default_rng(args.seed)
    volume = _kam_truth(args, rng)
    if args.voxel_size is None:
        args.voxel_size = 1.0
    if args.K is None:
        args.K = args.M ** 3 if args.unscrambled else default_K(args.M)
    _write_manifest(out, args)
    plan = precompute_maps(args.M, c=args.c, L=args.L, R_support=args.R_support)
    A = expand(volume, plan)
    truth = synthesize(A, plan)
    C = compute_cl(A)
    start = [a.copy() for a in A] if args.unscrambled else scramble(A, rng)
    vs = args.voxel_size
    vio.write_volume(out / "phantom.f64", volume, vs)
    vio.write_volume(out / "truth.f64", truth, vs, note="truncated to the basis plan")
    vio.write_coefficients(out / "cl.f64", C, kind="cl")
    vio.write_coefficients(out / "scrambled.f64", start, kind="scrambled")

    res = run(start, C, plan, K=args.K, N=args.N, beta=args.beta, reference=truth,
              voxel_size=vs, early_stop=not args.no_early_stop)
    init = synthesize(start, plan)
    final = sign_aligned(res.final, truth)
    best = sign_aligned(res.best, truth)
    vio.write_volume(out / "init.f64", init, vs)
    vio.write_volume(out / "final.f64", final, vs)
    vio.write_volume(out / "best.f64", best, vs)
    write_trace_csv(out / "trace.csv", res.trace)
    curves = {"init": fsc(sign_aligned(init, truth), truth, vs),
              "final": fsc(final, truth, vs), "best": fsc(best, truth, vs)}
    for name, curve in curves.items():
        write_fsc_csv(out / f"fsc_{name}.csv", curve)
    gaps = [r["gap"] for r in res.trace]
    report = {
        "M": args.M, "L": plan.L, "S": plan.S, "K": args.K, "N": args.N,
        "beta": args.beta, "voxel_size_angstrom": vs,
        "iterations_run": len(res.trace), "stopped_early": res.stopped_early,
        "initial_gap": gaps[0], "final_gap": gaps[-1], "min_gap": min(gaps),
        "best_n": res.best_n,
        "resolution_angstrom": {k: _finite(resolution(c)) for k, c in curves.items()},
        "fsc_crossing_found": {k: crossing_shell(c) is not None for k, c in curves.items()},
        "truth_sparsity_residual": float(np.linalg.norm(
            truth - project_sparsity(truth, args.K))),
    }
    if args.beta_sweep:
        rows = sweep_beta(start, C, plan, args.beta_sweep, K=args.K, N=args.sweep_N,
                          reference=truth, voxel_size=vs)
        with open(out / "beta_sweep.csv", "w") as fh:
            fh.write("beta,initial_gap,final_gap,min_gap,best_n,init_resolution,"
                     "best_resolution\n")
            for r in rows:
                fh.write(",".join(f"{r[k]:.10g}" if isinstance(r[k], float) else str(r[k])
                                  for k in ("beta", "initial_gap", "final_gap", "min_gap",
                                            "best_n", "init_resolution",
                                            "best_resolution")) + "\n")
        report["beta_sweep"] = rows
    _write_json(out / "report.json", report)
    if not args.no_plots:
        from .plotting import plot_fsc, plot_trace

        plot_fsc(curves, out / "fsc.png")
        plot_trace(res.trace, out / "trace.png")
    r = report["resolution_angstrom"]
    print(f"kam M={args.M} L={plan.L} K={args.K}: resolution init={r['init']} "
          f"best={r['best']} final={r['final']} gap {gaps[0]:.3g} -> {gaps[-1]:.3g} -> {out}")
    return EXIT_OK


def _moment_images(args, atoms, rng, count, pool):
    """Rotations and noise are drawn serially; only rendering is farmed out."""
    P = 2 ** args.m
    rot = random_rotations(rng, count) if atoms is not None else None
    noise = rng.standard_normal((count, P, P)) * args.sigma if args.sigma > 0 else None
    if atoms is None:
        clean = np.zeros((count, P, P))
    else:
        chunks = np.array_split(np.arange(count), max(1, min(args.threads, count)))
        parts = pool.map(lambda ix: render_clean_images(atoms, rot[ix], args.m, args.kappa),
                         chunks)
        clean = np.concatenate(list(parts))
    return clean if noise is None else clean + noise


def cmd_moments(args) -> int:
    out = _run_dir(args)
    if args.kappa is None:
        args.kappa = 2 * pixel_size(args.m)
    seeds = np.random.SeedSequence(args.seed).spawn(3)
    atom_rng, image_rng, pop_rng = (np.random.default_rng(s) for s in seeds)
    atoms = None
    if not args.noise_only:
        if args.atoms:
            try:
                atoms = read_atoms(args.atoms)
            except OSError as exc:
                raise ConfigError(f"cannot read atoms file {args.atoms}: {exc.strerror}") \
                    from None
        else:
            atoms = random_atoms(atom_rng, args.p, args.radius)
        write_atoms(out / "atoms.txt", atoms)
    _write_manifest(out, args)

    population = None
    if atoms is not None and args.n_mc > 0:
        population = population_second_moment_pixelated(atoms, args.m, args.kappa, args.n_mc,
                                                         pop_rng)
        vio.write_moment(out / "population.f64", population, args.kappa, 0.0, args.seed)

    acc = MomentAccumulator(args.m)
    rows = []
    targets = sorted(set(args.n_images))
    with ThreadPoolExecutor(args.threads) as pool:
        for n in targets:
            while acc.count < n:
                k = min(args.batch, n - acc.count)
                acc.add(_moment_images(args, atoms, image_rng, k, pool))
            est = acc.result(args.sigma)
            row = {"n": n, "max_abs_entry": float(np.max(np.abs(est.values)))}
            if population is not None:
                row["error_vs_population"] = float(np.linalg.norm(est.values - population.values))
                row["population_stderr_norm"] = float(np.linalg.norm(population.stderr))
            rows.append(row)
    vio.write_moment(out / "moment.f64", est, args.kappa, args.sigma, args.seed)
    cols = ["n", "max_abs_entry", "error_vs_population", "population_stderr_norm"]
    cols = [c for c in cols if c in rows[0]]
    with open(out / "error_vs_n.csv", "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) if c == "n" else f"{r[c]:.12g}" for c in cols) + "\n")
    ns = np.array([r["n"] for r in rows], dtype=float)
    key = "error_vs_population" if population is not None else "max_abs_entry"
    err = np.array([r[key] for r in rows])
    slope = float(np.polyfit(np.log(ns), np.log(err), 1)[0]) if len(ns) > 1 else None
    _write_json(out / "report.json", {"m": args.m, "kappa": args.kappa, "sigma": args.sigma,
                                      "rows": rows, "loglog_slope": slope,
                                      "slope_quantity": key})
    if not args.no_plots and len(ns) > 1:
        from .plotting import plot_moment_error

        plot_moment_error(ns, err, out / "error_vs_n.png", labels=[f"sigma={args.sigma:g}"])
    print(f"moments m={args.m} sigma={args.sigma:g} slope={slope} -> {out}")
    return EXIT_OK


COMMANDS = {"pointmass": cmd_pointmass, "kam": cmd_kam, "moments": cmd_moments}


def _error(command, exc, code) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code,
              "command": command}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    try:
        args = parse_config(argv)
        return COMMANDS[args.command](args)
    except (ConfigError, vio.SidecarError) as exc:
        return _error(command, exc, EXIT_CONFIG)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _error(command, exc, EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
