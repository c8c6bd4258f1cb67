"""Command-line front end: ``vinefuse {train,classify,evaluate,simulate,inspect}``.

Exit codes: 0 ok, 2 input/parse error, 3 insufficient data, 4 reference
mismatch (columns, class names), 5 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys

import numpy as np
from scipy import special

from . import bicop
from .bicop import CopulaFamily
from .classify import ConfusionMatrix, evaluate, log_posterior, source_of, train
from .errors import InsufficientDataError, NumericalFailureError, VineFuseError
from .io import (
    ParseError,
    file_digest,
    load_model,
    load_vine_spec,
    read_features,
    save_model,
    write_csv,
)
from .select import SelectionConfig

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INSUFFICIENT = 3
EXIT_MISMATCH = 4
EXIT_NUMERICAL = 5


class ReferenceMismatch(VineFuseError):
    """Input refers to columns or classes the model does not know."""


def _bind_columns(table, names):
    missing, extra = table.layout_mismatch(names)
    if missing or extra:
        raise ReferenceMismatch(
            f"feature columns do not match the model: missing {missing}, extra {extra}")
    return table.columns(names)


def cmd_train(args) -> int:
    table = read_features(args.features, args.label_col)
    names = table.names
    if args.sources:
        keep = {s.strip() for s in args.sources.split(",")}
        names = tuple(n for n in names if source_of(n) in keep)
        if len(names) < 2:
            raise ParseError(f"sources {sorted(keep)} select fewer than two features")
    families = tuple(CopulaFamily) if not args.independence else (CopulaFamily.INDEPENDENCE,)
    cfg = SelectionConfig(families, aic=args.aic)
    bundle = train(table.columns(names), table.labels, cfg, args.priors, feature_names=names)
    save_model(args.out, bundle, {
        "config": cfg.to_dict(),
        "priors": args.priors,
        "seed": args.seed,
        "input": str(args.features),
        "input_sha256": file_digest(args.features),
    })
    for c in bundle.classes:
        print(f"class {c.label}  prior={c.prior:.4f}  rows={c.marginals[0].n}")
        print(c.report.to_text(bundle.feature_names))
        print()
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    bundle = load_model(args.model)
    table = read_features(args.features, args.label_col)
    x = _bind_columns(table, bundle.feature_names)
    lp = np.atleast_2d(log_posterior(bundle, x))
    best = np.argmax(lp, axis=1)
    header = ["row_id", "predicted"] + [f"logpost_{l}" for l in bundle.labels]
    rows = ([i, bundle.labels[j], *map(float, lp[i])] for i, j in enumerate(best))
    write_csv(args.out, header, rows)
    return EXIT_OK


def read_confusion(path) -> ConfusionMatrix:
    """Confusion-count CSV: header ``label,<class>...``, one row per true class."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    labels = [h.strip() for h in rows[0][1:]]
    counts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if row[0].strip() != labels[lineno - 2]:
            raise ParseError("row labels must follow the header's class order", line=lineno)
        try:
            counts.append([int(c) for c in row[1:]])
        except ValueError:
            raise ParseError("counts must be integers", line=lineno) from None
    return ConfusionMatrix(tuple(labels), np.asarray(counts))


def cmd_evaluate(args) -> int:
    if args.confusion:
        cm = read_confusion(args.confusion)
    else:
        if not (args.model and args.features and args.label_col):
            raise ParseError("evaluate needs --model, --features and --label-col (or --confusion)")
        bundle = load_model(args.model)
        table = read_features(args.features, args.label_col)
        x = _bind_columns(table, bundle.feature_names)
        unknown = sorted(set(table.labels) - set(bundle.labels))
        if unknown:
            raise ReferenceMismatch(f"labels not in the model: {unknown}")
        cm = evaluate(bundle, x, table.labels)
    print(cm.to_table())
    print()
    print(f"macro F1 = {cm.macro_f1:.3f}")
    print(f"accuracy = {cm.accuracy:.3f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.n < 1:
        raise ParseError(f"--n must be at least 1, got {args.n}")
    spec = load_vine_spec(args.spec)
    u = spec.vine.sample(args.n, args.seed)
    if spec.means is not None:
        u = np.asarray(spec.means) + np.asarray(spec.sds) * special.ndtri(u)
    header = list(spec.names)
    rows = (list(map(float, r)) for r in u)
    if args.label is not None:
        header.append(args.label_col)
        rows = (r + [args.label] for r in rows)
    write_csv(args.out, header, rows)
    return EXIT_OK


def inspect_text(model, names) -> str:
    """Trees, edges, tau, family and parameter of a class model."""
    report = {(r.tree, tuple(r.conditioned), tuple(r.conditioning)): r
              for r in (model.report.edges if model.report else ())}
    lines = [f"class {model.label}  prior={model.prior:.6g}"]
    for t, tree in enumerate(model.vine.trees, start=1):
        lines.append(f"T{t}:")
        for e in tree:
            rec = report.get((t, e.conditioned, tuple(sorted(e.conditioning))))
            tau = rec.tau if rec else bicop.param_to_tau(e.copula)
            par = "-" if e.copula.theta is None else repr(e.copula.theta)
            lines.append(f"  edge {e.label(names):<24} tau={tau:+.4f}  "
                         f"family={e.copula.family.value:<12} parameter={par}")
    return "\n".join(lines)


def _dot_id(s) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def inspect_dot(model, names) -> str:
    """T1 as an undirected DOT graph, nodes grouped by source tag.

    Edges joining features of different sources are drawn bold red.
    """
    sources = [source_of(n) for n in names]
    report = {tuple(r.conditioned): r for r in (model.report.tree(1) if model.report else ())}
    lines = [f"graph {_dot_id('T1 ' + str(model.label))} {{", "  node [shape=ellipse];"]
    groups = {}
    for k, s in enumerate(sources):
        groups.setdefault(s, []).append(k)
    for gi, (src, members) in enumerate(groups.items()):
        indent = "  "
        if src:
            lines.append(f"  subgraph cluster_{gi} {{")
            lines.append(f"    label={_dot_id(src)};")
            indent = "    "
        for k in members:
            lines.append(f"{indent}n{k} [label={_dot_id(names[k])}, source={_dot_id(src)}];")
        if src:
            lines.append("  }")
    for e in model.vine.trees[0]:
        a, b = e.conditioned
        rec = report.get((a, b))
        tau = rec.tau if rec else bicop.param_to_tau(e.copula)
        attrs = [f"label={_dot_id(f'{tau:.2f} {e.copula.family.value}')}"]
        if sources[a] != sources[b]:
            attrs += ["color=red", "penwidth=2.5"]
        lines.append(f"  n{a} -- n{b} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    bundle = load_model(args.model)
    try:
        model = bundle.class_model(args.class_name)
    except KeyError:
        raise ReferenceMismatch(
            f"class {args.class_name!r} not in the model; known: {list(bundle.labels)}") from None
    render = inspect_dot if args.format == "dot" else inspect_text
    print(render(model, bundle.feature_names))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vinefuse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit per-class vine models")
    t.add_argument("--features", required=True)
    t.add_argument("--label-col", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--priors", choices=("uniform", "empirical"), default="uniform")
    t.add_argument("--aic", choices=("compact", "standard"), default="compact")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--independence", action="store_true",
                   help="ablation: force every pair copula to independence")
    t.add_argument("--sources", help="comma-separated source tags to keep (ablation)")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("classify", help="predict classes for a feature file")
    c.add_argument("--model", required=True)
    c.add_argument("--features", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--label-col", help="column to ignore if present")
    c.set_defaults(func=cmd_classify)

    e = sub.add_parser("evaluate", help="confusion matrix, precision, recall, macro F1")
    e.add_argument("--model")
    e.add_argument("--features")
    e.add_argument("--label-col")
    e.add_argument("--confusion", help="replay a confusion-count CSV instead of a model")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="sample from a vine spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--label", help="append a constant class-label column")
    s.add_argument("--label-col", default="label")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("inspect", help="show a class's dependence structure")
    i.add_argument("--model", required=True)
    i.add_argument("--class", dest="class_name", required=True)
    i.add_argument("--format", choices=("text", "dot"), default="text")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except ReferenceMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except NumericalFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VineFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
