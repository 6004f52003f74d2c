"""
Command line entry point.

Exit codes: 0 success, 2 validation error, 3 internal invariant violation.
Settings resolve as command-line flag > config file (--config) > preset default.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import anchors as anchors_mod
from .anchors import AnchorStringSet, coverage_range, in_coverage, load_anchors, match_edge
from .data import SynthSpec, load_annotations, read_proposals, save_dataset, synth_dataset, write_labels, \
    write_proposals
from .errors import InvariantError, ValidationError
from .evaluation import (DEFAULT_BUDGET, complexity_probe, fit_exponent, format_recall_tables)
from .pipeline import MethodReport, RunConfig, evaluate, label_image, propose_derpn, propose_rpn, reference_report

log = logging.getLogger("derpn")

METHODS = ("derpn", "rpn-voc", "rpn-coco")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    oracle = cfg.oracle
    if getattr(args, "oracle", None) is not None:
        oracle = replace(oracle, mode=args.oracle)
    if getattr(args, "sigma_t", None) is not None:
        oracle = replace(oracle, sigma_t=args.sigma_t)
    if getattr(args, "p_flip", None) is not None:
        oracle = replace(oracle, p_flip=args.p_flip)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        oracle = replace(oracle, rng_seed=args.seed)
    cfg.oracle = oracle
    if getattr(args, "stride", None) is not None:
        cfg.stride = args.stride
    return cfg


def cmd_match(args) -> int:
    strings = load_anchors(args.anchors)
    if not isinstance(strings, AnchorStringSet):
        raise ValidationError(f"{args.anchors!r} describes anchor boxes, not anchor strings")
    if not args.edge > 0:
        raise ValidationError("--edge must be positive")
    matched = match_edge(args.edge, strings)
    lo, hi = coverage_range(strings)
    print(json.dumps({
        "edge": round(args.edge, 6),
        "matched_indices": list(matched),
        "matched_terms": [round(strings.term(i), 6) for i in matched],
        "out_of_coverage": not in_coverage(args.edge, strings),
        "coverage_range": [round(lo, 6), round(hi, 6)],
    }))
    return 0


def cmd_label(args) -> int:
    observe = args.oracle != "none"
    if not observe:
        args.oracle = None
    cfg = _run_config(args)
    ds = load_annotations(args.dataset)
    by_image = ds.boxes_by_image()
    cap = None if args.all else args.cap

    def rows():
        for idx, im in enumerate(ds.images):
            yield im.id, label_image(by_image[im.id], (im.width, im.height), cfg, idx, observe, cap)

    write_labels(args.out, rows())
    return 0


def cmd_propose(args) -> int:
    cfg = _run_config(args)
    ds = load_annotations(args.dataset)
    write_proposals(args.out, ((k, p.corners, p.scores) for k, p in propose_derpn(ds, cfg)))
    return 0


def _report_paths(out: Path) -> tuple[Path, Path, Path]:
    stem = out.with_suffix("")
    return out, stem.with_suffix(".txt"), Path(f"{stem}_hist.csv")


def _hist_csv(stats) -> str:
    lines = ["bin_low,bin_high,count"] + [f"{lo:.6f},{hi:.6f},{c}" for lo, hi, c in stats.histogram_triples()]
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    ds = load_annotations(args.dataset)
    props = {k: corners for k, (corners, _) in read_proposals(args.proposals).items()}
    known = {str(im.id) for im in ds.images}
    unknown = sorted(set(props) - known)
    if unknown:
        raise ValidationError(f"proposals reference unknown image ids: {', '.join(unknown)}")
    table, stats = evaluate(props, ds, args.budget)
    json_path, txt_path, hist_path = _report_paths(Path(args.out))
    _dump_json({"recall": table.to_dict(), "stats": stats.to_dict()}, json_path)
    text = format_recall_tables({args.name: table})
    text += f"\nmean IoU {stats.mean_iou:.6f}  foreground ratio {stats.foreground_ratio:.6f}  " \
            f"proposals {stats.n_proposals}\n"
    txt_path.write_text(text, encoding="utf-8")
    hist_path.write_text(_hist_csv(stats), encoding="utf-8")
    print(text, end="")
    return 0


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    ds = load_annotations(args.dataset)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ValidationError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports, tables = {}, {}
    for method in methods:
        if method == "derpn":
            refs = cfg.strings
            produced = propose_derpn(ds, cfg)
        else:
            refs = anchors_mod.voc_boxes() if method == "rpn-voc" else anchors_mod.coco_boxes()
            produced = propose_rpn(ds, refs, cfg)
        produced = list(produced)
        write_proposals(out / f"proposals_{method}.csv", ((k, p.corners, p.scores) for k, p in produced))
        table, stats = evaluate({k: p.corners for k, p in produced}, ds, args.budget)
        reports[method] = MethodReport(table, stats, reference_report(ds, refs))
        tables[method] = table
        (out / f"histogram_{method}.csv").write_text(_hist_csv(stats), encoding="utf-8")

    _dump_json({
        "config": {"oracle": cfg.oracle.to_dict(), "combiner": cfg.combiner.to_dict(),
                   "anchor_strings": cfg.strings.to_dict(), "stride": cfg.stride, "seed": cfg.seed,
                   "budget": args.budget, "n_images": len(ds.images), "n_objects": ds.n_boxes},
        "methods": {m: r.to_dict() for m, r in reports.items()},
    }, out / "report.json")
    lines = [format_recall_tables(tables), ""]
    head = f"{'method':<10}{'mean IoU':>10}{'fg ratio':>10}{'ref IoU':>10}{'ref<0.5':>10}{'max|t_l|':>10}"
    lines.append(head)
    for m, r in reports.items():
        ref = r.reference
        lines.append(f"{m:<10}{r.stats.mean_iou:10.4f}{r.stats.foreground_ratio:10.4f}"
                     f"{ref['mean_best_iou']:10.4f}{ref['frac_below_0_5']:10.4f}{ref['max_abs_log_length_offset']:10.4f}")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_bench_complexity(args) -> int:
    try:
        ns = [int(v) for v in args.n.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"--n must be comma-separated integers: {exc}") from exc
    if not ns or any(n < 1 for n in ns):
        raise ValidationError("--n needs positive integers")
    strings = load_anchors(args.anchors)
    box_set = load_anchors(args.boxes)
    rows = []
    for n in ns:
        ds = synth_dataset(SynthSpec(crossed_grid_n=n), seed=0)
        rows.append(complexity_probe([a.box for a in ds.annotations], strings, box_set))
    doc = {"rows": [r.to_dict() for r in rows]}
    lines = [f"{'n':>4}{'shapes':>8}{'edges':>8}{'rpn_pairs':>12}{'derpn_edges':>13}"]
    lines += [f"{r.n:>4}{r.n_distinct_shapes:>8}{r.n_distinct_edges:>8}{r.rpn_pair_evaluations:>12}"
              f"{r.derpn_edge_evaluations:>13}" for r in rows]
    if len(ns) > 1:
        doc["rpn_exponent"] = round(fit_exponent(ns, [r.rpn_pair_evaluations for r in rows]), 6)
        doc["derpn_exponent"] = round(fit_exponent(ns, [r.derpn_edge_evaluations for r in rows]), 6)
        lines.append(f"fitted exponent: rpn {doc['rpn_exponent']:.3f}, derpn {doc['derpn_exponent']:.3f}")
    _dump_json(doc, Path(args.out))
    print("\n".join(lines))
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        try:
            doc = yaml.safe_load(Path(args.spec).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ValidationError(f"cannot read synth spec {args.spec}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValidationError("synth spec must be a mapping")
        spec = SynthSpec.from_mapping(doc)
    else:
        spec = SynthSpec()
    save_dataset(synth_dataset(spec, args.seed), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="derpn", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="YAML/JSON run configuration")
        p.add_argument("--stride", type=float)
        return p

    def with_oracle(p, default=None, choices=("perfect", "noisy")):
        p.add_argument("--oracle", choices=choices, default=default)
        p.add_argument("--sigma-t", type=float, dest="sigma_t")
        p.add_argument("--p-flip", type=float, dest="p_flip")
        p.add_argument("--seed", type=int)
        return p

    p = sub.add_parser("match", help="anchor strings matched to one edge length")
    p.add_argument("--edge", type=float, required=True)
    p.add_argument("--anchors", default="default-strings")
    p.set_defaults(func=cmd_match)

    p = with_oracle(with_config(sub.add_parser("label", help="dump anchor-string training labels")),
                    choices=("perfect", "noisy", "none"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cap", type=int, default=30, help="per-scale, per-sign sample cap")
    p.add_argument("--all", action="store_true", help="dump every instance instead of sampling")
    p.set_defaults(func=cmd_label)

    p = with_oracle(with_config(sub.add_parser("propose", help="oracle-driven proposals")))
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_propose)

    p = sub.add_parser("eval", help="recall table and IoU statistics for a proposal file")
    p.add_argument("--proposals", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--name", default="proposals")
    p.set_defaults(func=cmd_eval)

    p = with_oracle(with_config(sub.add_parser("compare", help="anchor strings against anchor boxes")))
    p.add_argument("--dataset", required=True)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench-complexity", help="reference evaluations on crossed-shape datasets")
    p.add_argument("--n", default="4,8,16")
    p.add_argument("--out", required=True)
    p.add_argument("--anchors", default="default-strings")
    p.add_argument("--boxes", default="voc-type")
    p.set_defaults(func=cmd_bench_complexity)

    p = sub.add_parser("synth", help="write a synthetic annotation set")
    p.add_argument("--spec")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
