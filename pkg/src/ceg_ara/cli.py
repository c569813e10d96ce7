"""Command-line front end.

Examples
--------
    ceg-ara validate --builtin incursion_idle
    ceg-ara score --builtin incursion_idle --utility detection
    ceg-ara simulate --builtin incursion_minus --samples 1000 --seed 7
    ceg-ara export-dot --builtin incursion_plus -o plus.dot
"""

from __future__ import annotations

import argparse
import os
import sys
from collections.abc import Sequence

from . import __version__
from .adversary import (NO_CHANGE, ReactionValues, adversary_seu, best_response, reaction_space)
from .algebra import apply_intervention
from .decision import (DefenderUtility, monte_carlo_score, parameter_sweep, pick_best, score_table)
from .dot import to_dot
from .dynamic import DcegModel, DynamicIntervention, dynamic_delta_score, stage_family, step_deltas, unfold_dceg
from .graph import enumerate_atoms, validate_staged_tree
from .models import BUILTINS, ModelBundle, ModelError, builtin_model, dumps_canonical, read_model

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2
UTILITY_FLAGS = {"detection": "detection_indicator", "linear": "linear_in_detections"}


class CliError(Exception):
    """Failure reported to the user with exit code 1."""


def _num(x: float) -> str:
    return f"{x + 0.0:.12g}"


def _styled(text: str, stream) -> str:
    if os.environ.get("CEG_ARA_NO_COLOR") or not getattr(stream, "isatty", lambda: False)():
        return text
    return f"\x1b[1m{text}\x1b[0m"


def _table(rows: Sequence[Sequence[str]], header: Sequence[str]) -> list[str]:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    return [line(header), line(["-" * w for w in widths]), *[line(r) for r in rows]]


# ---------------------------------------------------------------------------
# shared option handling
# ---------------------------------------------------------------------------


def _load(args) -> ModelBundle:
    if (args.model is None) == (args.builtin is None):
        raise _Usage("give exactly one model source: a file path or --builtin NAME")
    if args.builtin is not None:
        return builtin_model(args.builtin)
    return read_model(args.model)


class _Usage(Exception):
    pass


def _utility(args, bundle: ModelBundle) -> DefenderUtility:
    flag = getattr(args, "utility", "model")
    if flag == "model":
        return bundle.defender_utility
    return DefenderUtility(UTILITY_FLAGS[flag])


def _profile(args, bundle: ModelBundle):
    name = getattr(args, "profile", None)
    if name is None:
        return bundle.default_profile(), "default"
    if name == "none":
        return None, "none"
    try:
        return bundle.profile(name), name
    except KeyError as exc:
        raise CliError(str(exc.args[0])) from None


def _interventions(args, bundle: ModelBundle, default_all: bool = True):
    names = getattr(args, "intervention", None)
    if not names:
        return [d for d in bundle.interventions if default_all or not d.is_null]
    out = []
    for n in names:
        try:
            out.append(bundle.intervention(n))
        except KeyError as exc:
            raise CliError(str(exc.args[0])) from None
    return out


def _emit(args, doc: dict, lines: list[str], out) -> None:
    if args.format == "json":
        out.write(dumps_canonical(doc))
    else:
        out.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args, out) -> int:
    try:
        bundle = _load(args)
    except ModelError as exc:
        problems = exc.violations or [str(exc)]
        doc = {"valid": False, "violations": problems}
        _emit(args, doc, ["invalid model:"] + [f"  - {p}" for p in problems], out)
        return EXIT_INVALID
    g = bundle.staged_tree
    problems = validate_staged_tree(g)
    if problems:
        _emit(args, {"valid": False, "violations": problems},
              ["invalid model:"] + [f"  - {p}" for p in problems], out)
        return EXIT_INVALID
    n_atoms = len(enumerate_atoms(g))
    doc = {"valid": True, "violations": [], "vertices": g.tree.n_vertices, "stages": len(g.stage_ids),
           "atoms": n_atoms, "interventions": [d.name for d in bundle.interventions],
           "profiles": [p.name for p in bundle.profiles]}
    lines = [f"valid: {g.tree.n_vertices} vertices, {len(g.stage_ids)} stages, {n_atoms} atoms",
             f"stages: {', '.join(g.stage_ids)}",
             f"interventions: {', '.join(doc['interventions']) or '-'}",
             f"profiles: {', '.join(doc['profiles']) or '-'}"]
    _emit(args, doc, lines, out)
    return EXIT_OK


def cmd_score(args, out) -> int:
    bundle = _load(args)
    u = _utility(args, bundle)
    profile, pname = _profile(args, bundle)
    rep = score_table(bundle.staged_tree, bundle.idle_factors, bundle.interventions, profile, u)
    doc = {**rep.to_dict(), "utility": u.kind, "profile": pname}
    rows = [[n, _num(s), _num(rep.deltas[n])] for n, s in rep.scores.items()]
    lines = _table(rows, ["intervention", "score", "delta"])
    lines += [f"best: {_styled(rep.best, out)}", f"utility: {u.kind}  profile: {pname}"]
    _emit(args, doc, lines, out)
    return EXIT_OK


def cmd_best_response(args, out) -> int:
    bundle = _load(args)
    g = bundle.staged_tree
    if g.reactions is None:
        raise CliError("model has no knowledge/reaction stages; nothing can react")
    profiles = bundle.profiles if args.profile is None else [bundle.profile(args.profile)]
    records = []
    rows = []
    for d in _interventions(args, bundle, default_all=False):
        f = apply_intervention(g, bundle.idle_factors, d)
        for p in profiles:
            r = best_response(g, f, p, d)
            seu = adversary_seu(g, f, p, r) if r != NO_CHANGE else None
            space = reaction_space(p, d, g)
            options = {}
            if r != NO_CHANGE:
                vals = ReactionValues(g, p.beliefs(f), p.utility, [t for t, _ in space[0].plan])
                options = {str(x): vals.seu(x) for x in space}
            records.append({"intervention": d.name, "profile": p.name, "reaction": str(r),
                            "seu": seu, "options": options})
            rows.append([d.name, p.name, str(r), "-" if seu is None else _num(seu)])
    _emit(args, {"responses": records}, _table(rows, ["intervention", "profile", "reaction", "seu"]), out)
    return EXIT_OK


def _parse_edge(bundle: ModelBundle, stage: str, edge: str) -> int:
    g = bundle.staged_tree
    if stage not in g.stage_index:
        raise CliError(f"unknown stage {stage}")
    sig = g.signatures[g.stage_index[stage]]
    if edge in sig:
        return sig.index(edge)
    try:
        return int(edge)
    except ValueError:
        raise CliError(f"edge {edge!r} is neither a label of {stage} ({', '.join(sig)}) nor an index") from None


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise _Usage(f"--grid expects comma-separated numbers, got {text!r}") from None


def cmd_sweep(args, out) -> int:
    bundle = _load(args)
    u = _utility(args, bundle)
    profile, pname = _profile(args, bundle)
    ds = _interventions(args, bundle, default_all=False)
    if not ds:
        raise CliError("model has no intervention to sweep")
    d = ds[0]
    base = next(x for x in bundle.interventions if x.is_null)
    idx = _parse_edge(bundle, args.stage, args.edge)
    grid = _parse_grid(args.grid)
    g, idle = bundle.staged_tree, bundle.idle_factors
    try:
        with_d = parameter_sweep(g, idle, d, profile, u, (args.stage, idx), grid)
        without = parameter_sweep(g, idle, base, profile, u, (args.stage, idx), grid)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    points = [{"value": v, "score": s, "delta": s - s0} for (v, s), (_, s0) in zip(with_d, without)]
    doc = {"intervention": d.name, "baseline": base.name, "stage": args.stage, "edge": idx,
           "utility": u.kind, "profile": pname, "points": points}
    rows = [[_num(p["value"]), _num(p["score"]), _num(p["delta"])] for p in points]
    lines = [f"sweep {args.stage}[{idx}] for {d.name} (baseline {base.name})"]
    lines += _table(rows, ["value", "score", "delta"])
    _emit(args, doc, lines, out)
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    bundle = _load(args)
    if bundle.uncertainty is None or bundle.uncertainty.is_empty:
        raise CliError("model has no uncertainty spec to sample from")
    if args.samples < 1:
        raise _Usage("--samples must be a positive integer")
    u = _utility(args, bundle)
    results = {}
    for d in _interventions(args, bundle):
        mean, se = monte_carlo_score(bundle.staged_tree, bundle.idle_factors, d, bundle.uncertainty, u,
                                     args.samples, args.seed)
        results[d.name] = {"mean": mean, "stderr": se}
    best = pick_best({n: r["mean"] for n, r in results.items()})
    doc = {"samples": args.samples, "seed": args.seed, "utility": u.kind, "results": results, "best": best}
    rows = [[n, f"{_num(r['mean'])} ± {_num(r['stderr'])}"] for n, r in results.items()]
    lines = _table(rows, ["intervention", "mean ± stderr"])
    lines += [f"best: {_styled(best, out)}", f"samples: {args.samples}  seed: {args.seed}"]
    _emit(args, doc, lines, out)
    return EXIT_OK


def cmd_unfold(args, out) -> int:
    bundle = _load(args)
    g = bundle.staged_tree
    if g.reactions is None:
        raise CliError("unfolding needs an embellished slice with a knowledge stage")
    m = bundle.dynamic or DcegModel(g)
    start = m.start if args.start is None else args.start
    end = m.end if args.end is None else args.end
    hazard = m.hazard if args.hazard is None else args.hazard
    try:
        m = DcegModel(g, start, end, hazard, m.participation if (start, end) == (m.start, m.end) else None,
                      m.participation_stage, m.cap, bundle.idle_factors)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    ds = _interventions(args, bundle, default_all=False)
    if not ds:
        raise CliError("model has no intervention to unfold")
    profile = None
    if args.profile != "none":
        profile = bundle.profile(args.profile) if args.profile else (bundle.profiles[0] if bundle.profiles else None)
    d = DynamicIntervention(ds[0])
    try:
        tree = unfold_dceg(m, d, profile)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    per_step = step_deltas(m, d, profile)
    total = dynamic_delta_score(m, d, profile)
    families = sorted({stage_family(s) for s in tree.stage_ids})
    doc = {"intervention": d.base.name, "profile": profile.name if profile else None,
           "start": m.start, "end": m.end, "hazard": m.hazard, "vertices": tree.tree.n_vertices,
           "atoms": int(tree.layout.leaves.size), "stages": len(tree.stage_ids), "stage_families": families,
           "step_deltas": per_step, "delta": total}
    lines = [f"unfolded {d.base.name} over steps {m.start}..{m.end} (hazard {_num(m.hazard)})",
             f"vertices: {tree.tree.n_vertices}  atoms: {doc['atoms']}  stages: {len(tree.stage_ids)} "
             f"in {len(families)} families"]
    lines += _table([[str(s), _num(x)] for s, x in zip(m.steps, per_step)], ["step", "delta"])
    lines.append(f"total delta: {_num(total)}")
    _emit(args, doc, lines, out)
    return EXIT_OK


def cmd_export_dot(args, out) -> int:
    bundle = _load(args)
    g = bundle.staged_tree
    f = bundle.idle_factors
    names = getattr(args, "intervention", None)
    if names:
        f = apply_intervention(g, f, bundle.intervention(names[0]))
    text = to_dot(g, f, bundle.name or "staged_tree")
    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.output}: {exc.strerror or exc}") from None
    else:
        out.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", nargs="?", help="path to a JSON model file")
    common.add_argument("--builtin", choices=BUILTINS, help="use a built-in model instead of a file")
    common.add_argument("--format", choices=("table", "json"), default="table")

    parser = argparse.ArgumentParser(prog="ceg-ara", description="Causal staged-tree scoring with adversary reactions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def utility_opt(p):
        p.add_argument("--utility", choices=("detection", "linear", "model"), default="model",
                       help="defender utility (default: the model's own)")

    def profile_opt(p, help_text):
        p.add_argument("--profile", help=help_text)

    def intervention_opt(p, help_text):
        p.add_argument("--intervention", action="append", help=help_text)

    p = sub.add_parser("validate", parents=[common], help="check a model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", parents=[common], help="expected-utility table of every intervention")
    utility_opt(p)
    profile_opt(p, "adversary profile name, or 'none' (default: the model's prior)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("best-response", parents=[common], help="adversary best responses")
    intervention_opt(p, "intervention name (repeatable; default: all non-null)")
    profile_opt(p, "profile name (default: every profile)")
    p.set_defaults(func=cmd_best_response)

    p = sub.add_parser("sweep", parents=[common], help="score against one floret entry")
    p.add_argument("--stage", required=True)
    p.add_argument("--edge", required=True, help="edge label or index within the stage")
    p.add_argument("--grid", required=True, help="comma-separated values in [0, 1]")
    intervention_opt(p, "intervention to sweep (default: first non-null)")
    utility_opt(p)
    profile_opt(p, "adversary profile name, or 'none'")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo scores under the model's priors")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    intervention_opt(p, "intervention name (repeatable; default: all)")
    utility_opt(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("unfold", parents=[common], help="unfold the dynamic model and score it")
    p.add_argument("--start", type=int)
    p.add_argument("--end", type=int)
    p.add_argument("--hazard", type=float)
    intervention_opt(p, "intervention (default: first non-null)")
    profile_opt(p, "profile name, or 'none' (default: first profile)")
    p.set_defaults(func=cmd_unfold)

    p = sub.add_parser("export-dot", parents=[common], help="write the staged tree as Graphviz DOT")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    intervention_opt(p, "show florets after this intervention")
    p.set_defaults(func=cmd_export_dot)
    return parser


def main(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except _Usage as exc:
        parser.print_usage(err)
        err.write(f"ceg-ara: error: {exc}\n")
        return EXIT_USAGE
    except (ModelError, CliError) as exc:
        err.write(f"ceg-ara: {exc}\n")
        return EXIT_INVALID
    except KeyError as exc:
        err.write(f"ceg-ara: {exc.args[0]}\n")
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
