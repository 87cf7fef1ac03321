"""Command-line front end: ``gwlife <command> --spec model.json``.

Reports go to ``--out`` (or standard output) as deterministic JSON; the
truncation sequence is CSV.  When ``--out`` is given, a sidecar
``<out>.manifest.json`` records the run, including wall-clock time, which
is kept out of the report so repeated runs stay byte-identical.

Exit codes: 0 success, 1 validation failure, 2 invalid input,
3 indeterminate criticality, 4 population cap hit in over 99% of replicates.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path
from typing import Sequence

from gwlife import __version__
from gwlife.distributions import LifetimeModel, ModelSpecError, OffspringModel
from gwlife.extinction import componentwise_vector, extinction_probability
from gwlife.io import dumps, load_spec
from gwlife.simulator import SimConfig, run_replicate, simulate, summarize
from gwlife.spectral import (
    GrowthUndefined,
    IndeterminateError,
    NoInvariantSystem,
    TheoremCase,
    classify,
    convergence_radius,
    growth_constant,
    invariant_residuals,
    invariant_system,
    lifetime_slope,
)
from gwlife.truncation import Method, radius_sequence, sequences_to_csv
from gwlife.validation import validate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INVALID = 2
EXIT_INDETERMINATE = 3
EXIT_CAPPED = 4

CAP_FAILURE_FRACTION = 0.99
K_MAX_LIMIT = 10_000
INVARIANT_K = 200


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# commands


def _analysis(off: OffspringModel, life: LifetimeModel, tol: float) -> dict:
    rep = convergence_radius(off, life, tol=min(tol, 1e-6))
    cls = classify(off, life)
    ext = extinction_probability(off, life, tol=min(tol, 1e-8))
    out: dict = {
        "model": {"offspring": off.to_spec(), "lifetime": life.to_spec()},
        "spectral": rep.to_dict(),
        "recurrence": cls.to_dict(),
        "extinction": ext.to_dict(),
    }
    try:
        K = INVARIANT_K
        if life.max_support is not None:
            K = min(K, life.max_support + 1)
        system = invariant_system(off, life, K, rep)
        res = invariant_residuals(off, life, system)
        inv = system.to_dict()
        inv["residuals"] = {
            "vector": res.vector,
            "measure": res.measure,
            "first_column": res.first_measure,
            "vu_vs_1_plus_S": res.vu_vs_S,
        }
        out["invariant_system"] = inv
    except (NoInvariantSystem, ValueError) as exc:
        out["invariant_system"] = {"absent": str(exc)}
    if rep.case is TheoremCase.SUBCRITICAL_ROOT:
        out["lifetime_slope_at_gamma"] = lifetime_slope(off, life, rep.gamma)
    try:
        out["growth_constant"] = growth_constant(off, life)
    except GrowthUndefined as exc:
        out["growth_constant"] = {"undefined": str(exc)}
    return out


def cmd_analyze(args, off, life) -> tuple[int, str]:
    return EXIT_OK, dumps(_analysis(off, life, args.tol))


def cmd_truncate(args, off, life) -> tuple[int, str]:
    k_max = args.k_max
    if not 1 <= k_max <= K_MAX_LIMIT:
        raise UsageError(f"--k-max must lie in [1, {K_MAX_LIMIT}]")
    seqs = [radius_sequence(off, life, k_max, m) for m in (Method.SCALAR_ROOT, Method.POWER_ITERATION)]
    try:
        reference = convergence_radius(off, life, tol=min(args.tol, 1e-6)).rho
    except IndeterminateError:
        reference = None
    return EXIT_OK, sequences_to_csv(seqs, reference)


def cmd_extinction(args, off, life) -> tuple[int, str]:
    ext = extinction_probability(off, life, tol=min(args.tol, 1e-8))
    out = ext.to_dict()
    out["componentwise"] = componentwise_vector(off, life, ext.q).to_dict()
    return EXIT_OK, dumps(out)


def _generations(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        return sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError as exc:
        raise UsageError(f"--generations must be a comma-separated list of integers: {text!r}") from exc


def cmd_simulate(args, off, life) -> tuple[int, str]:
    try:
        cfg = SimConfig(args.replicates, args.horizon, args.seed, args.cap)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    gens = _generations(args.generations)
    if any(g < 0 or g > cfg.max_generations for g in gens):
        raise UsageError("--generations must lie in [0, --horizon]")
    try:
        rho = convergence_radius(off, life).rho
    except IndeterminateError:
        rho = None
    tally = simulate(off, life, cfg, gens, workers=args.workers)
    summary = summarize(tally, cfg, rho)
    if args.trajectory_csv:
        traj = run_replicate(off, life, cfg, args.trajectory_replicate)
        Path(args.trajectory_csv).write_text(traj.to_csv(), encoding="utf-8")
    code = EXIT_CAPPED if summary.cap_fraction > CAP_FAILURE_FRACTION else EXIT_OK
    return code, dumps(summary.to_dict())


def cmd_validate(args, off, life) -> tuple[int, str]:
    report = validate(off, life)
    return (EXIT_OK if report.passed else EXIT_VALIDATION), dumps(report.to_dict())


COMMANDS = {
    "analyze": cmd_analyze,
    "truncate": cmd_truncate,
    "extinction": cmd_extinction,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# plumbing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="model-spec JSON file")
    common.add_argument("--out", help="write the report here instead of standard output")
    common.add_argument("--tol", type=float, default=1e-12, help="root-finding tolerance (default 1e-12)")

    parser = argparse.ArgumentParser(prog="gwlife", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="convergence norm, recurrence, extinction, invariants")
    p = sub.add_parser("truncate", parents=[common], help="spectral radii of northwest-corner truncations (CSV)")
    p.add_argument("--k-max", type=int, default=20)
    sub.add_parser("extinction", parents=[common], help="extinction probability")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo simulation")
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=100, help="maximum number of generations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=10**6, help="population size treated as survival")
    p.add_argument("--generations", help="comma-separated generations for mean estimates")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trajectory-csv", help="dump one replicate's age counts as CSV")
    p.add_argument("--trajectory-replicate", type=int, default=0)
    sub.add_parser("validate", parents=[common], help="cross-check battery")
    return parser


def _params(args: argparse.Namespace) -> dict:
    skip = {"command", "spec", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest(args: argparse.Namespace) -> dict:
    outputs = [args.out] if args.out else []
    if getattr(args, "trajectory_csv", None):
        outputs.append(args.trajectory_csv)
    return {
        "command": args.command,
        "spec": args.spec,
        "parameters": _params(args),
        "version": __version__,
        "outputs": outputs,
    }


def _embed(text: str, manifest: dict) -> str:
    """Attach the deterministic manifest fields to a JSON report."""
    if not text.startswith("{"):
        return text
    body = text.rstrip()[:-1].rstrip()
    return body + ",\n  \"manifest\": " + dumps(manifest, _level=1) + "\n}\n"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    started = time.time()
    try:
        if not (math.isfinite(args.tol) and args.tol > 0):
            raise UsageError("--tol must be a positive number")
        _, off, life = load_spec(args.spec)
        code, text = COMMANDS[args.command](args, off, life)
    except (ModelSpecError, UsageError) as exc:
        print(f"gwlife: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except IndeterminateError as exc:
        print(f"gwlife: indeterminate: {exc}", file=sys.stderr)
        return EXIT_INDETERMINATE
    manifest = _manifest(args)
    text = _embed(text, manifest)
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        side = dict(manifest, wall_clock_seconds=round(time.time() - started, 3), exit_code=code)
        Path(args.out + ".manifest.json").write_text(dumps(side) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text)
    if code == EXIT_CAPPED:
        print("gwlife: population cap hit in more than 99% of replicates", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
