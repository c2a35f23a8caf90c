"""Command-line front end.

Exit codes: 0 success, 2 bad input (config, report, data or classifier
name), 3 when every replicate of some classifier failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .data import DatasetParseError, SynthConfig, generate_synthetic, load_dataset, write_dataset
from .evaluation import ConfigError, ExperimentConfig, StabilityReport, pareto_frontier, run_experiment

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _fmt(x):
    return "nan" if x is None else f"{x:.4f}"


def _read_report(path):
    try:
        return StabilityReport.read(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read report {path}: {exc}") from None


def _lookup(report, name):
    try:
        entry = report.classifier(name)
    except KeyError:
        names = ", ".join(c["name"] for c in report.classifiers)
        raise CliError(f"unknown classifier {name!r}; available: {names}") from None
    if entry["status"] != "ok":
        raise CliError(f"classifier {name!r} has no usable replicates", EXIT_FAILED)
    return entry


def cmd_run(args):
    try:
        cfg = ExperimentConfig.from_json(args.config)
        report = run_experiment(cfg, log=lambda msg: print(msg, file=sys.stderr))
    except ConfigError as exc:
        raise CliError(f"config error: {exc}") from None
    report.write(args.out)
    print(f"{'classifier':<16} {'AUC':>8} {'S':>8} {'S+':>8}")
    for c in report.classifiers:
        if c["status"] == "ok":
            print(f"{c['name']:<16} {_fmt(c['mean_auc']):>8} {_fmt(c['mean_s']):>8} "
                  f"{_fmt(c['mean_s_plus']):>8}")
        else:
            print(f"{c['name']:<16} FAILED ({c['n_failed']} of {c['n_failed'] + c['n_ok']} replicates)")
    if report.failed:
        raise CliError(f"all replicates failed for: {', '.join(report.failed)}", EXIT_FAILED)


def cmd_pareto(args):
    report = _read_report(args.report)
    points = report.pareto_points(args.measure)
    result = pareto_frontier(points)
    label = "S+" if args.measure == "s+" else "S"
    print(f"{'classifier':<16} {'AUC':>8} {label:>8}  frontier")
    for p in points:
        print(f"{p.name:<16} {_fmt(p.auc):>8} {_fmt(p.stability):>8}  "
              f"{'yes' if result.on_frontier(p) else 'no'}")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["classifier", "auc", "stability", "measure", "on_frontier"])
            for p in points:
                w.writerow([p.name, repr(p.auc), repr(p.stability), args.measure,
                            int(result.on_frontier(p))])


def cmd_matrix(args):
    entry = _lookup(_read_report(args.report), args.classifier)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        R = len(entry["s_matrix"])
        w.writerow(["measure", "replicate"] + [str(j) for j in range(R)])
        for measure, key in (("s", "s_matrix"), ("s+", "s_plus_matrix")):
            for i, row in enumerate(entry[key]):
                w.writerow([measure, i] + [repr(float(v)) for v in row])


def cmd_histogram(args):
    report = _read_report(args.report)
    entry = _lookup(report, args.classifier)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section", "key", "bag_id", "row", "value"])
        for i, ((bag_id, row), count) in enumerate(zip(report.instance_index,
                                                       entry["positiveness_counts"])):
            w.writerow(["instance", i, bag_id, row, count])
        for c, tally in enumerate(entry["positiveness_histogram"]):
            w.writerow(["bin", c, "", "", tally])


def cmd_synth(args):
    try:
        cfg = SynthConfig.from_json(args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise CliError(f"config error: {exc}") from None
    dataset, truth = generate_synthetic(cfg)
    write_dataset(dataset, args.out)
    with open(args.labels_out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bag_id", "instance", "label"])
        for bag in dataset.bags:
            for k, z in enumerate(truth[bag.id]):
                w.writerow([bag.id, k, int(z)])
    print(f"wrote {len(dataset)} bags, {dataset.n_instances} instances to {args.out}")


def cmd_inspect(args):
    try:
        dataset = load_dataset(args.data)
    except (OSError, DatasetParseError, ValueError) as exc:
        raise CliError(f"cannot read dataset {args.data}: {exc}") from None
    s = dataset.summary()
    print(f"dataset        {s['name']}")
    print(f"bags           {s['n_positive_bags']}+, {s['n_negative_bags']}-")
    print(f"instances      {s['n_instances']}")
    print(f"inst per bag   {s['min_instances_per_bag']} to {s['max_instances_per_bag']}")
    print(f"features       {s['d']}")


def build_parser():
    parser = argparse.ArgumentParser(prog="milstab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run the resampling experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pareto", help="AUC vs stability with frontier membership")
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.add_argument("--measure", choices=("s", "s+"), default="s+")
    p.set_defaults(func=cmd_pareto)

    for verb, func, help_ in (("matrix", cmd_matrix, "pairwise S and S+ matrices as CSV"),
                              ("histogram", cmd_histogram, "positiveness counts as CSV")):
        p = sub.add_parser(verb, help=help_)
        p.add_argument("--report", required=True)
        p.add_argument("--classifier", required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("synth", help="generate a synthetic MIL dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="summarize a dataset file")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"milstab {args.verb}: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
