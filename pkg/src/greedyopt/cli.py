"""Experiment runner.

Usage::

    greedyopt run CONFIG.json [--out DIR]
    greedyopt compare CONFIG.json [--out DIR]
    greedyopt verify DIR            (also: greedyopt --verify DIR)
    greedyopt list-problems         (also: greedyopt --list-problems)

Exit status: 0 all invariant checks pass, 2 validation error, 3 runtime
error, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema

from greedyopt.analysis import check_trace_invariants, fit_rate, reference_minimum
from greedyopt.core import Dictionary, canonical_dictionary, make_symmetric_dictionary, parse_norm_order
from greedyopt.errors import GreedyOptError, InputError, InsufficientDataError
from greedyopt.greedy import ALGORITHMS, FREE, GreedyTrace, TraceRecord, make_coefficients_cs, run_algorithm
from greedyopt.objective import PROBLEMS, Oracle, make_problem

log = logging.getLogger("greedyopt")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_INVARIANT = 0, 2, 3, 4

CSV_HEADER = "iteration,objective,gap,atom,lambda,alpha,beta,l1_mass,support,evals,delta_eff"
MANIFEST = "manifest.json"
# slack allowed above the theoretical exponent when flagging "meets target"
SLOPE_SLACK = {"relaxed": 0.15, "ega-c": 0.05}

_number_or_inf = {"oneOf": [{"type": "number", "minimum": 1}, {"enum": ["inf"]}]}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["problem", "algorithms"],
    "additionalProperties": False,
    "properties": {
        "problem": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": sorted(PROBLEMS)},
                "params": {"type": "object"},
                "p": _number_or_inf,
            },
        },
        "dictionary": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["canonical", "explicit"]},
                "atoms": {"type": "array", "minItems": 1,
                          "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}},
            },
        },
        "algorithms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "iterations"],
                "additionalProperties": False,
                "properties": {
                    "name": {"enum": list(ALGORITHMS)},
                    "label": {"type": "string", "minLength": 1},
                    "iterations": {"type": "integer", "minimum": 1},
                    "delta": {"type": "number", "minimum": 0},
                    "seed": {"type": "integer"},
                    "t": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "m_ls": {"type": "integer", "minimum": 1},
                    "initial_half_width": {"type": "number", "exclusiveMinimum": 0},
                    "q": {"type": "number", "exclusiveMinimum": 1, "maximum": 2},
                    "gamma": {"type": "number", "exclusiveMinimum": 0},
                    "r": {"type": "number", "exclusiveMinimum": 0},
                    "burn_in": {"type": "integer", "minimum": 0},
                    "early_stop": {"type": "boolean"},
                },
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "text"]}, "uniqueItems": True},
            },
        },
    },
}


class ConfigError(GreedyOptError):
    """Configuration file that cannot be parsed or validated."""


# -- configuration ------------------------------------------------------------

def _field_path(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def validate_config(cfg: dict) -> dict:
    """Schema and semantic validation; returns ``cfg`` or raises :class:`ConfigError`."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError("; ".join(f"{_field_path(e.absolute_path)}: {e.message}" for e in errors))
    for k, alg in enumerate(cfg["algorithms"]):
        if alg.get("delta", 0) > 0 and "seed" not in alg:
            raise ConfigError(f"algorithms[{k}].seed: required when delta > 0")
        if alg["name"] == "ega-c" and "r" in alg and "q" in alg and not alg["r"] < 1 - 2 / (1 + alg["q"]):
            raise ConfigError(f"algorithms[{k}].r: must be below 1 - s = (q-1)/(q+1)")
    d = cfg.get("dictionary", {"kind": "canonical"})
    if d["kind"] == "explicit" and "atoms" not in d:
        raise ConfigError("dictionary.atoms: required for an explicit dictionary")
    labels = [run_label(a, k) for k, a in enumerate(cfg["algorithms"])]
    if len(set(labels)) != len(labels):
        raise ConfigError("algorithms: run labels must be unique (set 'label' to disambiguate)")
    return cfg


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return validate_config(cfg)


def run_label(alg: dict, k: int) -> str:
    if "label" in alg:
        return alg["label"]
    delta = alg.get("delta", 0)
    return f"{alg['name']}(delta={delta:g})" if delta else alg["name"]


def build_problem(cfg: dict) -> tuple[Oracle, Dictionary]:
    prob = cfg["problem"]
    p = parse_norm_order(prob.get("p", 2))
    try:
        o = make_problem(prob["name"], prob.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"problem.params: {exc}") from exc
    d = cfg.get("dictionary", {"kind": "canonical"})
    D = canonical_dictionary(o.dim, p) if d["kind"] == "canonical" else make_symmetric_dictionary(d["atoms"], p)
    if D.dim != o.dim:
        raise ConfigError(f"dictionary.atoms: dimension {D.dim} does not match problem dimension {o.dim}")
    return o, D


# -- one run ------------------------------------------------------------------

def _schedule_params(alg: dict, o: Oracle, p: float) -> tuple[float, float]:
    declared = o.smoothness(p)
    q = alg.get("q", declared[0] if declared else None)
    gamma = alg.get("gamma", declared[1] if declared else None)
    if q is None or gamma is None:
        raise ConfigError("ega-c needs q and gamma for an objective without declared smoothness")
    return float(q), float(gamma)


def ega_r(alg: dict, q: float | None) -> float:
    """Target exponent r for ega-c; the default stays inside (0, 1 - s)."""
    if "r" in alg:
        return float(alg["r"])
    return 0.25 if q is None else min(0.25, 0.75 * (q - 1.0) / (q + 1.0))


def theoretical_exponent(alg: dict, o: Oracle, p: float) -> float | None:
    declared = o.smoothness(p)
    q = alg.get("q", declared[0] if declared else None)
    if alg["name"] == "ega-c":
        return -ega_r(alg, q)
    return None if q is None else 1.0 - float(q)


def execute(alg: dict, o: Oracle, D: Dictionary) -> GreedyTrace:
    name, M = alg["name"], alg["iterations"]
    kw = {"delta": alg.get("delta", 0.0), "seed": alg.get("seed"), "early_stop": alg.get("early_stop", False)}
    if name in ("wrga", "wgafr"):
        kw["t"] = alg.get("t", 1.0)
    if name in ("rega", "wrga", "egafr", "wgafr") and "m_ls" in alg:
        kw["m_ls"] = alg["m_ls"]
    if name in FREE and "initial_half_width" in alg:
        kw["initial_half_width"] = alg["initial_half_width"]
    if name == "ega-c":
        q, gamma = _schedule_params(alg, o, D.p)
        kw["schedule"] = make_coefficients_cs(q, gamma)
    return run_algorithm(name, o, D, M, **kw)


def delta_window(alg: dict, q: float) -> tuple[float, str]:
    """Largest M covered by the error-tolerant guarantees for this run."""
    delta = alg["delta"]
    if alg["name"] == "ega-c":
        r = ega_r(alg, alg.get("q", q))
        return delta ** (-1.0 / (1.0 + r)), "delta^(-1/(1+r))"
    return delta ** (-1.0 / q), "delta^(-1/q)"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def trace_csv(trace: GreedyTrace, E_star: float | None) -> str:
    lines = [CSV_HEADER]
    for r in trace.records:
        gap = None if E_star is None else r.objective - E_star
        row = [r.iteration, r.objective, gap, r.atom_index, r.lam, r.alpha, r.beta,
               r.l1_mass, r.support, r.cumulative_evals, r.delta_eff]
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def trace_to_dict(trace: GreedyTrace) -> dict:
    return {
        "algorithm": trace.algorithm,
        "initial_value": trace.initial_value,
        "stopped_early": trace.stopped_early,
        "config": trace.config,
        "records": [
            {
                "iteration": r.iteration, "atom_index": r.atom_index, "objective": r.objective,
                "observed": r.observed, "coefficients": {str(i): c for i, c in sorted(r.coefficients.items())},
                "cumulative_evals": r.cumulative_evals, "eval_budget": r.eval_budget, "delta_eff": r.delta_eff,
                "lam": r.lam, "alpha": r.alpha, "beta": r.beta, "w": r.w,
            }
            for r in trace.records
        ],
    }


def trace_from_dict(obj: dict, D: Dictionary) -> GreedyTrace:
    recs = []
    for r in obj["records"]:
        r = dict(r)
        r["coefficients"] = {int(i): float(c) for i, c in r["coefficients"].items()}
        recs.append(TraceRecord(**r))
    return GreedyTrace(obj["algorithm"], D, obj["initial_value"], recs, obj.get("config", {}),
                       stopped_early=obj.get("stopped_early", False))


def _meets_target(name: str, slope, exponent) -> bool | None:
    if slope is None or exponent is None:
        return None
    slack = SLOPE_SLACK["ega-c" if name == "ega-c" else "relaxed"]
    return slope <= exponent + slack


def run_one(alg: dict, k: int, o: Oracle, D: Dictionary, out: Path, E_refs: dict) -> dict:
    """Run one configured algorithm, write its files and return its summary entry."""
    label = run_label(alg, k)
    stem = f"{k:02d}_{alg['name']}"
    entry = {"label": label, "algorithm": alg["name"], "iterations": alg["iterations"],
             "delta": alg.get("delta", 0.0), "seed": alg.get("seed"), "files": {}, "warnings": []}
    delta = alg.get("delta", 0.0)
    declared = o.smoothness(D.p)
    if delta > 0 and declared:
        window, rule = delta_window(alg, alg.get("q", declared[0]))
        if alg["iterations"] > window:
            msg = f"{label}: M = {alg['iterations']} exceeds {rule} = {window:.4g}; guarantees lapse"
            log.warning(msg)
            entry["warnings"].append(msg)
    over = "X" if alg["name"] in FREE else "A1"
    E_star, method = E_refs[over]
    E_X = E_refs["X"][0]
    entry.update(E_star=E_star, E_star_method=method, E_star_over=over)
    try:
        trace = execute(alg, o, D)
    except GreedyOptError as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
        log.error("%s failed: %s", label, entry["error"])
        return entry
    (out / f"{stem}.csv").write_text(trace_csv(trace, E_star))
    (out / f"{stem}.trace.json").write_text(json.dumps(trace_to_dict(trace), indent=1, sort_keys=True) + "\n")
    entry["files"] = {"csv": f"{stem}.csv", "trace": f"{stem}.trace.json"}
    final = float(trace.records[-1].objective) if trace.records else trace.initial_value
    entry["final_objective"] = final
    entry["final_gap"] = None if E_star is None else final - E_star
    entry["final_gap_X"] = None if E_X is None else final - E_X
    entry["evals"] = trace.records[-1].cumulative_evals if trace.records else 0
    entry["max_delta_eff"] = max((r.delta_eff for r in trace.records), default=0.0)
    entry["stopped_early"] = trace.stopped_early
    exponent = theoretical_exponent(alg, o, D.p)
    entry["theoretical_exponent"] = exponent
    entry["slope"] = entry["r_squared"] = None
    if E_star is not None:
        try:
            fit = fit_rate(trace, E_star, alg.get("burn_in", 10))
            entry.update(slope=fit.slope, r_squared=fit.r_squared, fit_window=list(fit.window))
        except InsufficientDataError as exc:
            entry["fit_note"] = str(exc)
    entry["meets_target"] = _meets_target(alg["name"], entry["slope"], exponent)
    report = check_trace_invariants(trace, D, o)
    entry["invariants_ok"] = report.ok
    entry["invariants"] = {name: fails[:5] for name, fails in report.results.items()}
    return entry


# -- reports ------------------------------------------------------------------

def _cell(v, fmt="{:.4g}") -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return fmt.format(v)
    return str(v)


def summary_table(entries: list[dict], with_gap_X: bool = False) -> str:
    cols = ["algorithm", "final gap"] + (["gap vs inf_X"] if with_gap_X else []) + [
        "evals", "slope", "exponent", "max delta_eff", "meets target", "invariants"]
    rows = []
    for e in entries:
        if "error" in e:
            rows.append([e["label"], "ERROR: " + e["error"]] + [""] * (len(cols) - 2))
            continue
        row = [e["label"], _cell(e["final_gap"])]
        if with_gap_X:
            row.append(_cell(e["final_gap_X"]))
        row += [_cell(e["evals"]), _cell(e["slope"], "{:.3f}"), _cell(e["theoretical_exponent"], "{:.3f}"),
                _cell(e["max_delta_eff"], "{:.3g}"), _cell(e["meets_target"]),
                "pass" if e["invariants_ok"] else "FAIL"]
        rows.append(row)
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    fmt_row = lambda r: "  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip()  # noqa: E731
    lines = [fmt_row(cols), fmt_row(["-" * w for w in widths])] + [fmt_row(r) for r in rows]
    return "\n".join(lines) + "\n"


def _exit_code(entries) -> int:
    if any("error" in e for e in entries):
        return EXIT_RUNTIME
    if not all(e["invariants_ok"] for e in entries):
        return EXIT_INVARIANT
    return EXIT_OK


def run_experiment(config_path, out: str | None = None, compare: bool = False) -> int:
    cfg = load_config(config_path)
    if compare and len(cfg["algorithms"]) < 2:
        raise ConfigError("algorithms: compare needs at least 2 algorithms")
    o, D = build_problem(cfg)
    outputs = cfg.get("outputs", {})
    out_dir = Path(out or outputs.get("directory", "out"))
    formats = outputs.get("formats", ["json", "text"])
    out_dir.mkdir(parents=True, exist_ok=True)
    algs = cfg["algorithms"]
    overs = {"X"} | {"X" if a["name"] in FREE else "A1" for a in algs}
    E_refs = {over: reference_minimum(o, D, over) for over in sorted(overs)}
    entries = [run_one(a, k, o, D, out_dir, E_refs) for k, a in enumerate(algs)]
    manifest = {"config": cfg, "runs": entries}
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    table = summary_table(entries, with_gap_X=compare)
    if "json" in formats:
        (out_dir / "summary.json").write_text(json.dumps(entries, indent=1, sort_keys=True) + "\n")
    if "text" in formats:
        (out_dir / ("comparison.txt" if compare else "summary.txt")).write_text(table)
    inv_lines = []
    for e in entries:
        for name, fails in e.get("invariants", {}).items():
            inv_lines.append(f"{e['label']:20s} {name:27s} {'PASS' if not fails else 'FAIL: ' + fails[0]}")
    (out_dir / "invariants.txt").write_text("\n".join(inv_lines) + "\n")
    sys.stdout.write(table)
    return _exit_code(entries)


def verify_directory(path) -> int:
    """Re-run the invariant checks on the traces stored in an output directory.

    The CSV of each run is also regenerated from its stored trace and must
    match byte for byte.
    """
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
        cfg = validate_config(manifest["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{root}: not a valid output directory ({exc})") from exc
    o, D = build_problem(cfg)
    ok = True
    for e in manifest["runs"]:
        if "error" in e or not e.get("files"):
            print(f"{e['label']}: skipped (no trace)")
            continue
        trace = trace_from_dict(json.loads((root / e["files"]["trace"]).read_text()), D)
        report = check_trace_invariants(trace, D, o)
        csv_same = (root / e["files"]["csv"]).read_text() == trace_csv(trace, e["E_star"])
        for line in report.lines():
            print(f"{e['label']:20s} {line}")
        print(f"{e['label']:20s} {'csv_matches_trace':36s} {'PASS' if csv_same else 'FAIL'}")
        ok = ok and report.ok and csv_same
    return EXIT_OK if ok else EXIT_INVARIANT


def list_problems() -> int:
    for name, (_, desc) in sorted(PROBLEMS.items()):
        print(f"{name:10s} {desc}")
    print("algorithms: " + ", ".join(ALGORITHMS))
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="greedyopt", description="Greedy sparse convex optimization experiments.")
    ap.add_argument("--verify", metavar="DIR", help="re-check invariants of traces in DIR")
    ap.add_argument("--list-problems", action="store_true", help="list objective families and algorithms")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command")
    for name, helptext in (("run", "run every configured algorithm"),
                           ("compare", "run and tabulate at least two algorithms on one problem")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="experiment JSON file")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides outputs.directory)")
    sp = sub.add_parser("verify", help="re-check invariants of traces in DIR")
    sp.add_argument("dir")
    sub.add_parser("list-problems", help="list objective families and algorithms")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.list_problems or args.command == "list-problems":
            return list_problems()
        if args.verify or args.command == "verify":
            return verify_directory(args.verify or args.dir)
        if args.command in ("run", "compare"):
            return run_experiment(args.config, args.out, compare=args.command == "compare")
        build_parser().print_usage(sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, InputError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GreedyOptError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
