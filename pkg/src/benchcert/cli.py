"""Command-line entry point: ``benchcert <command> [options]``.

Every command prints a JSON report (tool version, input digests, a full
parameter echo, the metric payload and warnings). With ``--out DIR`` the
report and the command's CSV tables are also written to ``DIR``.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .completion import (
    POLICY_NAMES,
    Probe,
    ProbePool,
    SelectionContext,
    benchmark_alignment,
    completion_curve,
    delta_q,
    kappa_epsilon,
    policy_from_name,
    updated_residual,
)
from .errors import NumericalError, ValidationError
from .fibers import (
    ErrorWindow,
    ExactPattern,
    NearestNeighbour,
    Quantile,
    Decision,
    audit,
    build_fibers,
    classify_threshold_fibers,
    format_key,
)
from .geometry import build_geometry, certify_arrays, radius_sensitivity
from .io import (
    dump_json,
    ingest_candidates,
    parse_mapping,
    read_bounds,
    read_probe_values,
    read_schema,
    read_vectors,
    write_csv,
    write_json,
)
from .manifest import default_timestamp, lock_manifest, read_manifest, sha256_file, verify_manifest_file, write_manifest
from .replay import (
    CalibrationRule,
    CostModel,
    ExactOracle,
    NoisyOracle,
    aggregate_counts,
    asymmetric_sweep,
    break_even,
    calibrate,
    plan_decisions,
    random_splits,
    replay_split,
    summarize,
)
from . import synth

SCHEMA_VERSION = 1
QUANTILE_SWEEP = (5, 10, 20, 40, 80, 100)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Range-checked argument types
# ---------------------------------------------------------------------------


def _number(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"{text!r} is not finite")
    return value


def _checked(kind: Callable[[str], Any], test: Callable[[Any], bool], what: str) -> Callable[[str], Any]:
    def parse(text: str) -> Any:
        value = kind(text)
        if not test(value):
            raise argparse.ArgumentTypeError(f"{text!r} must be {what}")
        return value
    parse.__name__ = what
    return parse


def _integer(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None


real = _checked(_number, lambda v: True, "a finite number")
nonneg = _checked(_number, lambda v: v >= 0, "nonnegative")
unit_open = _checked(_number, lambda v: 0 < v < 1, "in (0, 1)")
unit_closed = _checked(_number, lambda v: 0 <= v <= 1, "in [0, 1]")
pos_real = _checked(_number, lambda v: v > 0, "positive")
pos_int = _checked(_integer, lambda v: v >= 1, "a positive integer")
nonneg_int = _checked(_integer, lambda v: v >= 0, "a nonnegative integer")


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


class Run:
    """Collects inputs, payload, tables and warnings for one command."""

    def __init__(self, command: str, args: argparse.Namespace, parser: argparse.ArgumentParser):
        self.command = command
        self.args = args
        self.parser = parser
        self.inputs: dict[str, dict[str, str]] = {}
        self.warnings: list[str] = []
        self.tables: dict[str, list[dict[str, Any]]] = {}

    def input(self, name: str, path: str | None) -> str | None:
        if path is None:
            return None
        if not Path(path).is_file():
            raise ValidationError(f"input file {path} does not exist")
        self.inputs[name] = {"path": path, "sha256": sha256_file(path)}
        return path

    def parameters(self) -> dict[str, Any]:
        out = {}
        for action in self.parser._actions:
            if action.dest in ("help", argparse.SUPPRESS):
                continue
            value = getattr(self.args, action.dest, None)
            out[action.dest] = list(value) if isinstance(value, (list, tuple)) else value
        return out

    def argv(self) -> list[str]:
        """Flags that reproduce this run."""
        out = [self.command]
        for action in self.parser._actions:
            if action.dest in ("help", argparse.SUPPRESS):
                continue
            value = getattr(self.args, action.dest, None)
            if value is None or value is False:
                continue
            if not action.option_strings:
                out.append(_fmt(value))
                continue
            flag = action.option_strings[-1]
            if isinstance(action, argparse._StoreTrueAction):
                out.append(flag)
            elif isinstance(action, argparse._AppendAction):
                for v in value:
                    out += [flag, _fmt(v)]
            elif action.nargs in ("+", "*"):
                out += [flag, *(_fmt(v) for v in value)]
            else:
                out += [flag, _fmt(value)]
        return out

    def report(self, payload: dict[str, Any]) -> dict[str, Any]:
        rep = {
            "schema_version": SCHEMA_VERSION,
            "tool": {"name": "benchcert", "version": __version__},
            "command": self.command,
            "inputs": self.inputs,
            "parameters": self.parameters(),
            "argv": self.argv(),
            "payload": payload,
            "warnings": self.warnings,
        }
        stamp = default_timestamp()
        if stamp is not None:
            rep["timestamp"] = stamp
        return rep


def _fmt(value: Any) -> str:
    return repr(value) if isinstance(value, float) else str(value)


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


def _fiber_rule(args: argparse.Namespace, bins: int | None = None):
    if args.rule == "exact":
        return ExactPattern()
    if args.rule == "quantile":
        return Quantile(bins if bins is not None else args.bins[0])
    if args.rule == "knn":
        if args.k is None:
            raise UsageError("--rule knn needs --k")
        return NearestNeighbour(args.k)
    if args.tol is None:
        raise UsageError("--rule window needs --tol")
    return ErrorWindow(args.tol)


def _load_candidates(run: Run, args: argparse.Namespace, name: str = "candidates", path: str | None = None):
    path = run.input(name, path or args.candidates)
    schema = read_schema(run.input("schema", args.schema)) if getattr(args, "schema", None) else None
    return ingest_candidates(path, schema, parse_mapping(getattr(args, "map", None) or []))


def cmd_audit(run: Run, args: argparse.Namespace) -> dict[str, Any]:
    table = _load_candidates(run, args)
    if args.sweep:
        if args.rule != "quantile":
            raise UsageError("--sweep applies to --rule quantile")
        resolutions = list(QUANTILE_SWEEP)
    elif args.rule == "quantile":
        resolutions = list(args.bins)
    else:
        resolutions = [None]
    if args.tau is not None and table.responses is None:
        raise ValidationError("--tau needs a y_star column")

    rows, fibers, classes = [], [], {}
    for bins in resolutions:
        rule = _fiber_rule(args, bins)
        partition = build_fibers(table, rule)
        if table.labels is None:
            if args.tau is None:
                raise ValidationError("label audits need a d_label column (or pass --tau with y_star)")
            decided = classify_threshold_fibers(partition, table.responses, args.tau)
            counts = {d.value: sum(1 for v in decided.values() if v is d) for d in Decision}
            rows.append({**rule.describe(), "mode": partition.mode, "fiber_count": len(partition.groups),
                         "threshold_fibers": counts})
            if len(resolutions) == 1:
                classes = {format_key(k): v.value for k, v in decided.items()}
            continue
        rep = audit(partition, table.labels, table.responses, args.tau)
        rows.append(rep.summary())
        if rep.rho is None:
            run.warnings.append(f"rho undefined for {rule.describe()}: one label has zero prevalence")
        if len(resolutions) == 1:
            fibers = [{"fiber": r.key, "size": r.size, "labels": r.histogram, "pure": r.pure} for r in rep.per_fiber]
            classes = rep.threshold_classes or {}
    if args.rule in ("knn", "window"):
        run.warnings.append(
            "overlapping neighbourhoods: decision_risk and rho are local plug-in diagnostics, "
            "not partition Bayes quantities, and rho may exceed 1"
        )
    run.tables["audit"] = [{k: v for k, v in r.items()} for r in rows]
    if fibers:
        run.tables["fibers"] = fibers
    if classes:
        run.tables["threshold_fibers"] = [{"fiber": k, "class": v} for k, v in sorted(classes.items())]
    return {
        "n_candidates": len(table),
        "evidence_columns": list(table.evidence_names),
        "evidence_kinds": list(table.kinds),
        "rows": rows,
        "fibers": fibers,
        "threshold_classes": classes,
    }


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------


def _geometry_from_files(run: Run, args: argparse.Namespace):
    probes = read_vectors(run.input("probes", args.probes), allow_empty=True)
    deploy = read_vectors(run.input("deploy", args.deploy))
    if deploy.matrix.shape[0] != 1:
        raise ValidationError(f"{args.deploy}: expected exactly one deployment probe row")
    return build_geometry(probes.matrix, deploy.matrix[0], args.rank_tol), probes


def cmd_certify(run: Run, args: argparse.Namespace) -> dict[str, Any]:
    has_files = args.probes is not None or args.deploy is not None
    if (args.g is not None) == has_files:
        raise UsageError("give either --g or both --probes and --deploy")
    if has_files and (args.probes is None or args.deploy is None):
        raise UsageError("--probes and --deploy go together")
    bounds = read_bounds(run.input("candidates", args.candidates), args.radius)
    payload: dict[str, Any] = {}
    if args.g is not None:
        g = args.g
        payload["g_source"] = "declared"
    else:
        geo, _ = _geometry_from_files(run, args)
        g = geo.residual_norm
        payload.update({"g_source": "geometry", "rank": geo.rank, "ambient_dim": geo.ambient_dim})
    classes = certify_arrays(bounds.centers, bounds.deltas, bounds.radii, g, args.tau)
    w = bounds.deltas + bounds.radii * g
    names = {1: Decision.POSITIVE.value, -1: Decision.NEGATIVE.value, 0: Decision.AMBIGUOUS.value}
    run.tables["certificates"] = [
        {"id": i, "lo": float(c - h), "hi": float(c + h), "class": names[int(k)]}
        for i, c, h, k in zip(bounds.ids, bounds.centers, w, classes)
    ]
    n = classes.size
    payload.update({
        "g": g,
        "tau": args.tau,
        "n_candidates": n,
        "certified_positive": int(np.count_nonzero(classes == 1)),
        "certified_negative": int(np.count_nonzero(classes == -1)),
        "ambiguous": int(np.count_nonzero(classes == 0)),
        "certified_fraction": float(np.count_nonzero(classes)) / n,
        "ambiguous_fraction": float(np.count_nonzero(classes == 0)) / n,
    })
    if args.radius_sweep:
        sweep = radius_sensitivity(bounds.centers, bounds.deltas, bounds.radii, g, args.tau)
        run.tables["radius_sensitivity"] = sweep
        payload["radius_sensitivity"] = sweep
    return payload


# ---------------------------------------------------------------------------
# complete
# ---------------------------------------------------------------------------


def cmd_complete(run: Run, args: argparse.Namespace) -> dict[str, Any]:
    geo, _ = _geometry_from_files(run, args)
    pool_vecs = read_vectors(run.input("pool", args.pool))
    if pool_vecs.matrix.shape[1] != geo.ambient_dim:
        raise ValidationError("pool probes and deployment probe differ in dimension")
    pool = ProbePool(tuple(Probe(i, v, c) for i, v, c in zip(pool_vecs.ids, pool_vecs.matrix, pool_vecs.costs)))
    bounds = read_bounds(run.input("candidates", args.candidates), args.radius)
    values = read_probe_values(run.input("probe_values", args.probe_values)) if args.probe_values else None
    if "uncertainty" in args.policy and values is None:
        raise ValidationError("the uncertainty policy needs --probe-values")
    budgets = args.budgets if args.budgets is not None else [float(b) for b in range(len(pool) + 1)]

    def certifier(g_geo) -> float:
        classes = certify_arrays(bounds.centers, bounds.deltas, bounds.radii, g_geo.residual_norm, args.tau)
        return float(np.count_nonzero(classes)) / classes.size

    scores = [
        {"id": p.id, "cost": p.cost, "delta_q": delta_q(geo, p.vector),
         "updated_residual": updated_residual(geo, p.vector), "alignment": benchmark_alignment(geo, p.vector)}
        for p in pool.probes
    ]
    run.tables["probe_scores"] = scores
    seeds = np.random.SeedSequence(args.seed).generate_state(len(args.policy))
    curves, rows = [], []
    for name, sub_seed in zip(args.policy, seeds):
        policy = policy_from_name(name, seed=int(sub_seed))
        curve = completion_curve(geo, pool, policy, certifier, budgets, SelectionContext(values=values))
        kappa = kappa_epsilon(curve, args.epsilon)
        curves.append({
            "policy": name,
            "order": list(curve.order),
            "kappa_epsilon": kappa,
            "kappa_note": None if kappa is not None else "not reached at max budget",
            "final_certified_fraction": curve.points[-1].certified_fraction,
            "upper_bound_only": curve.upper_bound_only,
            "declared_substitute": name in ("uncertainty", "diversity"),
        })
        rows.extend(curve.rows())
    if "oracle" in args.policy:
        run.warnings.append("the oracle policy scores probes by realised gain and is an upper bound only")
    run.tables["curve"] = rows
    return {
        "g": geo.residual_norm,
        "rank": geo.rank,
        "start_certified_fraction": certifier(geo),
        "budgets": list(budgets),
        "epsilon": args.epsilon,
        "policies": curves,
        "probe_scores": scores,
    }


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def _replay_rule(args: argparse.Namespace):
    if args.rule == "exact":
        return ExactPattern()
    if args.rule == "quantile":
        return Quantile(args.bins)
    if args.tol is None:
        raise UsageError("--rule window needs --tol")
    return ErrorWindow(args.tol)


def cmd_replay(run: Run, args: argparse.Namespace) -> dict[str, Any]:
    explicit = args.calibration is not None or args.heldout is not None
    if explicit == (args.candidates is not None):
        raise UsageError("give either --candidates (with --splits/--frac) or --calibration and --heldout")
    if explicit and (args.calibration is None or args.heldout is None):
        raise UsageError("--calibration and --heldout go together")
    rule = _replay_rule(args)
    cal_rule = CalibrationRule(args.min_support, args.mode, args.cp_tau, args.cp_delta, args.multiplicity)
    if explicit:
        splits = [(_load_candidates(run, args, "calibration", args.calibration),
                   _load_candidates(run, args, "heldout", args.heldout))]
    else:
        table = _load_candidates(run, args)
        splits = [(table.subset(c), table.subset(h)) for c, h in random_splits(len(table), args.splits, args.frac, args.seed)]

    plans, maps = [], []
    for cal, ho in splits:
        ho.require_labels()
        cert_map = calibrate(cal, rule, cal_rule)
        maps.append(cert_map)
        plans.append(plan_decisions(cert_map, ho))

    payload: dict[str, Any] = {}
    if args.lock:
        # decisions are frozen and hashed before any held-out label is scored
        decisions = {f"split-{i:03d}": p.decisions() for i, p in enumerate(plans)}
        params = {k: v for k, v in run.parameters().items() if k != "lock"}
        manifest = lock_manifest(decisions, params, timestamp=default_timestamp())
        write_manifest(manifest, args.lock)
        payload["lock"] = {"path": args.lock, "digest": manifest.digest}

    outcomes = []
    for i, ((cal, ho), cert_map, plan) in enumerate(zip(splits, maps, plans)):
        oracle = ExactOracle() if args.flip_rate == 0 else NoisyOracle(args.flip_rate, args.seed + i)
        outcomes.append(replay_split(ho, cert_map, oracle, split=i, plan=plan))

    costs = CostModel(args.cost_fp, args.cost_fn, args.cost_acq)
    rows = []
    for o, cert_map in zip(outcomes, maps):
        row = o.row()
        row["certified_fibers"] = getattr(cert_map, "certified_count", None)
        row["cost_benchmark"] = costs.bench_cost(o)
        row["cost_completion"] = costs.completion_cost(o)
        rows.append(row)
    run.tables["splits"] = rows
    counts = aggregate_counts(outcomes)
    totals = {k: sum(getattr(o, k) for o in outcomes) for k in ("false_before", "false_after", "acquired")}
    payload.update({
        "summary": summarize(outcomes),
        "counts": counts,
        "break_even_pooled": break_even(totals["false_before"], totals["false_after"], totals["acquired"]),
        "mean_cost_benchmark": float(np.mean([r["cost_benchmark"] for r in rows])),
        "mean_cost_completion": float(np.mean([r["cost_completion"] for r in rows])),
        "costs": {"c_fp": args.cost_fp, "c_fn": args.cost_fn, "c_acq": args.cost_acq},
    })
    if args.sweep:
        if counts["n_defer"] > 0:
            sweep = asymmetric_sweep(**counts)
            run.tables["cost_sweep"] = sweep
            payload["cost_sweep"] = sweep
        else:
            run.warnings.append("no candidates were deferred, so the break-even sweep is undefined")
    if totals["acquired"] == 0:
        run.warnings.append("no acquisitions: break-even is undefined")
    return payload


# ---------------------------------------------------------------------------
# synth and verify
# ---------------------------------------------------------------------------


def cmd_synth(run: Run, args: argparse.Namespace) -> dict[str, Any]:
    config = synth.configure(args.experiment, args.seed, args.n_seeds, args.n_candidates)
    result = synth.EXPERIMENTS[args.experiment](config)
    run.tables["per_seed"] = list(result.per_seed)
    for name, table in result.tables.items():
        run.tables[name] = list(table)
    if args.experiment == "policies":
        run.warnings.append("uncertainty and diversity are declared substitutes; oracle is an upper bound only")
    return result.to_dict()


def cmd_verify(run: Run, args: argparse.Namespace) -> dict[str, Any]:
    path = args.manifest
    valid = verify_manifest_file(path)
    payload: dict[str, Any] = {"manifest": path, "valid": valid}
    if valid:
        payload["digest"] = read_manifest(path).digest
    return payload


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", metavar="DIR", help="write report.json and CSV tables here")


def _add_ingest(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schema", metavar="JSON", help="evidence column kinds overriding inference")
    p.add_argument("--map", action="append", metavar="SRC=DST",
                   help="rename an input column, e.g. --map prediction=e_pred (repeatable)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="benchcert", description="Decision-sufficiency audits and certificates.")
    parser.add_argument("--version", action="version", version=f"benchcert {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("audit", help="finite-fiber audit of a candidate table")
    p.add_argument("--candidates", required=True, metavar="CSV")
    _add_ingest(p)
    p.add_argument("--rule", choices=("exact", "quantile", "knn", "window"), default="exact")
    p.add_argument("--bins", type=pos_int, nargs="+", default=[10], help="quantile bins per evidence column")
    p.add_argument("--sweep", action="store_true", help="quantile sweep over 5, 10, 20, 40, 80, 100 bins")
    p.add_argument("--k", type=pos_int, help="neighbourhood size for --rule knn (includes the candidate)")
    p.add_argument("--tol", type=nonneg, help="half-width for --rule window")
    p.add_argument("--tau", type=real, help="threshold for y_star fiber classes")
    _add_output(p)
    subs["audit"] = p

    p = sub.add_parser("certify", help="interval certificates from bounds and a residual norm")
    p.add_argument("--candidates", required=True, metavar="CSV", help="columns id, y_hat, delta[, radius]")
    p.add_argument("--g", type=nonneg, help="declared residual norm")
    p.add_argument("--probes", metavar="CSV", help="benchmark probes, one per row")
    p.add_argument("--deploy", metavar="CSV", help="deployment probe (one row)")
    p.add_argument("--rank-tol", type=pos_real, default=1e-10)
    p.add_argument("--tau", type=real, required=True)
    p.add_argument("--radius", type=nonneg, help="global radius replacing the radius column")
    p.add_argument("--radius-sweep", action="store_true")
    _add_output(p)
    subs["certify"] = p

    p = sub.add_parser("complete", help="probe-completion curves")
    p.add_argument("--probes", required=True, metavar="CSV")
    p.add_argument("--deploy", required=True, metavar="CSV")
    p.add_argument("--pool", required=True, metavar="CSV", help="candidate probes: id, cost, coordinates")
    p.add_argument("--candidates", required=True, metavar="CSV", help="bounds: id, y_hat, delta[, radius]")
    p.add_argument("--rank-tol", type=pos_real, default=1e-10)
    p.add_argument("--tau", type=real, required=True)
    p.add_argument("--radius", type=nonneg)
    p.add_argument("--policy", nargs="+", choices=POLICY_NAMES, default=["residual-greedy"])
    p.add_argument("--budgets", type=nonneg, nargs="+")
    p.add_argument("--epsilon", type=unit_closed, default=0.05)
    p.add_argument("--probe-values", metavar="CSV", help="calibration values per pool probe (uncertainty policy)")
    p.add_argument("--seed", type=nonneg_int, default=0)
    _add_output(p)
    subs["complete"] = p

    p = sub.add_parser("replay", help="calibrate fiber certificates and replay on held-out rows")
    p.add_argument("--candidates", metavar="CSV", help="table to split at random")
    p.add_argument("--calibration", metavar="CSV")
    p.add_argument("--heldout", metavar="CSV")
    _add_ingest(p)
    p.add_argument("--splits", type=pos_int, default=100)
    p.add_argument("--frac", type=unit_open, default=0.5, help="calibration fraction")
    p.add_argument("--rule", choices=("exact", "quantile", "window"), default="exact")
    p.add_argument("--bins", type=pos_int, default=10)
    p.add_argument("--tol", type=nonneg)
    p.add_argument("--min-support", type=pos_int, default=50)
    p.add_argument("--mode", choices=("unanimity", "clopper-pearson"), default="unanimity")
    p.add_argument("--cp-tau", type=unit_open, default=0.05, help="admissible disagreement rate")
    p.add_argument("--cp-delta", type=unit_open, default=0.05, help="confidence level before correction")
    p.add_argument("--multiplicity", type=pos_int, default=1, help="Bonferroni divisor for --cp-delta")
    p.add_argument("--cost-fp", type=nonneg, default=1.0)
    p.add_argument("--cost-fn", type=nonneg, default=1.0)
    p.add_argument("--cost-acq", type=nonneg, default=0.0)
    p.add_argument("--sweep", action="store_true", help="break-even over C_FP/C_FN in [0.1, 10]")
    p.add_argument("--flip-rate", type=unit_closed, default=0.0, help="label noise of the acquisition oracle")
    p.add_argument("--lock", metavar="PATH", help="write a hashed decision manifest before scoring")
    p.add_argument("--seed", type=nonneg_int, default=0)
    _add_output(p)
    subs["replay"] = p

    p = sub.add_parser("synth", help="controlled synthetic experiments")
    p.add_argument("--experiment", required=True, choices=tuple(synth.EXPERIMENTS))
    p.add_argument("--seed", type=nonneg_int, default=0)
    p.add_argument("--n-seeds", type=pos_int)
    p.add_argument("--n-candidates", type=pos_int)
    _add_output(p)
    subs["synth"] = p

    p = sub.add_parser("verify", help="check a locked manifest against its digests")
    p.add_argument("manifest", metavar="MANIFEST")
    subs["verify"] = p
    return parser, subs


COMMANDS = {
    "audit": cmd_audit,
    "certify": cmd_certify,
    "complete": cmd_complete,
    "replay": cmd_replay,
    "synth": cmd_synth,
    "verify": cmd_verify,
}


def _emit(run: Run, report: dict[str, Any]) -> None:
    out = getattr(run.args, "out", None)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        for name, rows in run.tables.items():
            write_csv(rows, d / f"{name}.csv")
        write_json(report, d / "report.json")
    sys.stdout.write(dump_json(report))


def main(argv: Sequence[str] | None = None) -> int:
    parser, subs = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (audit, certify, complete, replay, synth, verify)")
        run = Run(args.command, args, subs[args.command])
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            payload = COMMANDS[args.command](run, args)
        report = run.report(payload)
        _emit(run, report)
    except UsageError as exc:
        print(f"benchcert: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"benchcert: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValidationError as exc:
        print(f"benchcert: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"benchcert: cannot write output: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    if args.command == "verify" and not payload["valid"]:
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
