#!/usr/bin/env python3
"""
Command-line analyzer for 2x2x2 Bell-test count data.

    bell_analysis.py list
    bell_analysis.py analyze delft --method all --format json
    bell_analysis.py analyze --dataset-file counts.csv --method gls
    bell_analysis.py reproduce

Reports go to stdout, diagnostics to stderr. Exit status: 0 success, 1 usage error,
2 data error, 3 reference figures not reproduced.
"""

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pandas as pd

from bell_data import DatasetError, DatasetNotFoundError, canonicalize, load_embedded, parse_dataset
from bell_game import bell_game_test
from config import EMBEDDED_DATASETS, EXTREME_TAIL_P, LOCAL_WIN_BOUND, REFERENCE_FIGURES
from gls_estimator import naive_estimate, nosignalling_deviations, optimized_estimate
from mle_wilks import default_init, one_step_estimate, wilks_test
from report import AnalysisReport, format_number, render_json, render_text
from stat_dist import binom_sf, chebyshev_p

METHODS = ["gls", "mle", "bellgame"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ACCEPTANCE = 3


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def expand_methods(methods):
    """Method names in pipeline order; 'all' selects every pipeline."""
    if not methods:
        raise ValueError("at least one method is required")
    chosen = set()
    for m in methods:
        if m == "all":
            chosen.update(METHODS)
        elif m in METHODS:
            chosen.add(m)
        else:
            raise ValueError(f"unknown method '{m}'; choose from {', '.join(METHODS + ['all'])}")
    return [m for m in METHODS if m in chosen]


def resolve_dataset(name=None, dataset_file=None):
    """Load an embedded dataset by name, or parse a JSON/CSV file chosen by its extension."""
    if dataset_file is None:
        return load_embedded(name)
    path = Path(dataset_file)
    fmt = path.suffix.lower().lstrip(".")
    if fmt not in ("json", "csv"):
        raise DatasetError(f"cannot tell the format of {path}; use a .json or .csv file")
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise DatasetNotFoundError(f"dataset file not found: {path}") from None
    return parse_dataset(data, fmt, name=name or path.stem)


def _flag_extreme_tail(report, label, tail):
    if tail.p < EXTREME_TAIL_P:
        report.warnings.append(f"{label} p = {tail.p:.3e} is below {EXTREME_TAIL_P:g}: asymptotics unreliable")


def analyze(ds, methods):
    """Canonicalize the dataset, then run the selected pipelines on it."""
    methods = expand_methods(methods)
    canon = canonicalize(ds)
    cds = canon.dataset
    report = AnalysisReport(dataset=cds, transform=canon.transform, methods=methods)
    if canon.transform.tie:
        report.warnings.append(
            "several CHSH sign patterns share the largest value; first in enumeration order used"
            " unless the canonical one is among them"
        )

    if "gls" in methods:
        for kind in ("S", "J"):
            report.naive[kind] = naive_estimate(cds, kind)
            report.optimized[kind] = optimized_estimate(cds, kind)
        report.deviations = nosignalling_deviations(cds)
        for est in report.optimized.values():
            if est.regularized:
                report.warnings.append(f"optimized {est.kind}: covariance near singular, pseudo-inverse used")
        for prefix, estimates in (("naive", report.naive), ("optimized", report.optimized)):
            for kind, est in estimates.items():
                if est.z > 0 and math.isfinite(est.z):
                    report.chebyshev[f"{prefix}_{kind}"] = chebyshev_p(est.z)
                _flag_extreme_tail(report, f"{prefix} {kind}", est.p)

    if "mle" in methods:
        init = default_init(cds)
        report.wilks = wilks_test(cds, init)
        report.one_step = one_step_estimate(cds, init)
        report.warnings += report.wilks.warnings
        if report.one_step.singular:
            report.warnings.append("one-step estimate: Hessian singular, start kept")
        if report.wilks.statistic > 0:
            report.chebyshev["wilks"] = chebyshev_p(report.wilks.z_equivalent)
        _flag_extreme_tail(report, "Wilks", report.wilks.p)

    if "bellgame" in methods:
        report.bellgame = bell_game_test(cds)

    return report


def reference_values(report):
    """The quantities checked by `reproduce`, keyed as in REFERENCE_FIGURES."""
    values = {}
    for kind in report.naive:
        naive, optimized = report.naive[kind], report.optimized[kind]
        values.update(
            {
                f"naive_{kind}": naive.value,
                f"naive_{kind}_se": naive.se,
                f"naive_{kind}_z": naive.z,
                f"naive_{kind}_p": naive.p.p,
                f"optimized_{kind}": optimized.value,
                f"optimized_{kind}_se": optimized.se,
                f"optimized_{kind}_z": optimized.z,
                f"optimized_{kind}_p": optimized.p.p,
            }
        )
    if "S" in report.naive:
        naive_s = report.naive["S"].value
        values["optimized_vs_naive_S"] = abs(report.optimized["S"].value - naive_s) / abs(naive_s)
    if report.wilks is not None:
        values["wilks_statistic"] = report.wilks.statistic
        values["wilks_p"] = report.wilks.p.p
        values["wilks_z"] = report.wilks.z_equivalent
    if report.bellgame is not None:
        g = report.bellgame
        values["bellgame_wins"] = g.wins
        values["bellgame_trials"] = g.trials
        values["bellgame_p"] = g.p.p
        values["bellgame_p_next_win"] = binom_sf(g.trials, LOCAL_WIN_BOUND, g.wins + 1).p
    return values


def check_reference(computed, expected, kind, tol):
    if computed is None or pd.isna(computed) or not math.isfinite(computed):
        return False
    if kind == "rel":
        return abs(computed - expected) <= tol * abs(expected)
    if kind == "abs":
        return abs(computed - expected) <= tol
    if kind == "range":
        low, high = expected
        return low <= computed <= high
    if kind == "sig":
        return float(f"{computed:.{tol}g}") == float(f"{expected:.{tol}g}")
    if kind == "exact":
        return computed == expected
    raise ValueError(f"unknown tolerance kind '{kind}'")


def _describe_expected(expected, kind, tol):
    if kind == "range":
        return f"[{expected[0]:g}, {expected[1]:g}]"
    if kind == "rel":
        return f"{expected:.7g} (rel {tol:g})"
    if kind == "abs":
        return f"{expected:.7g} (abs {tol:g})"
    if kind == "sig":
        return f"{expected:g} ({tol} sig. fig.)"
    return str(expected)


def _analyze_embedded(name):
    return analyze(load_embedded(name), ["all"])


def reproduce():
    """Run every method on the six embedded experiments and compare with the quoted figures."""
    with ThreadPoolExecutor(max_workers=len(EMBEDDED_DATASETS)) as pool:
        reports = dict(zip(EMBEDDED_DATASETS, pool.map(_analyze_embedded, EMBEDDED_DATASETS)))

    rows = []
    for dataset, quantity, expected, kind, tol in REFERENCE_FIGURES:
        computed = reference_values(reports[dataset]).get(quantity)
        note = ""
        asymptotic = quantity.endswith("_p") and not quantity.startswith("bellgame")
        if asymptotic and computed is not None and computed < EXTREME_TAIL_P:
            note = "asymptotics unreliable"
        rows.append(
            {
                "dataset": dataset,
                "quantity": quantity,
                "computed": computed,
                "expected": _describe_expected(expected, kind, tol),
                "status": "pass" if check_reference(computed, expected, kind, tol) else "FAIL",
                "note": note,
            }
        )
    return pd.DataFrame(rows, columns=["dataset", "quantity", "computed", "expected", "status", "note"]), reports


def list_datasets():
    lines = []
    for name in EMBEDDED_DATASETS:
        ds = load_embedded(name)
        per_block = ", ".join(str(n) for n in ds.trials)
        lines.append(f"{name:<8} {ds.source:<36} trials = {sum(ds.trials)} ({per_block})")
    return "\n".join(lines) + "\n"


def build_parser():
    parser = ArgumentParser(prog="bell_analysis.py", description="Optimal statistical analysis of Bell-test counts")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("list", help="List the embedded experiments")

    analyze_parser = subparsers.add_parser("analyze", help="Analyze one dataset")
    analyze_parser.add_argument("dataset", nargs="?", help=f"embedded dataset: {', '.join(EMBEDDED_DATASETS)}")
    analyze_parser.add_argument("--dataset-file", help="JSON or CSV count file to analyze instead")
    analyze_parser.add_argument(
        "--method",
        action="append",
        choices=METHODS + ["all"],
        help="pipeline to run; repeat for several (default: all)",
    )
    analyze_parser.add_argument("--format", choices=["text", "json"], default="text")

    reproduce_parser = subparsers.add_parser("reproduce", help="Reproduce the quoted figures for all experiments")
    reproduce_parser.add_argument("--format", choices=["text", "json"], default="text")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "list":
        sys.stdout.write(list_datasets())
        return EXIT_OK

    if args.command == "analyze":
        if (args.dataset is None) == (args.dataset_file is None):
            parser.error("analyze needs exactly one of DATASET or --dataset-file")
        try:
            ds = resolve_dataset(args.dataset, args.dataset_file)
            report = analyze(ds, args.method or ["all"])
        except DatasetError as e:
            print(f"Data error: {e}", file=sys.stderr)
            return EXIT_DATA
        except ValueError as e:
            print(f"Analysis error: {e}", file=sys.stderr)
            return EXIT_DATA
        sys.stdout.write(render_json(report) if args.format == "json" else render_text(report))
        return EXIT_OK

    frame, _ = reproduce()
    failures = int((frame["status"] == "FAIL").sum())
    if args.format == "json":
        doc = {"rows": frame.to_dict(orient="records"), "failures": failures}
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        shown = frame.assign(computed=frame["computed"].map(lambda v: "-" if pd.isna(v) else format_number(v)))
        sys.stdout.write(shown.to_string(index=False) + "\n")
        print(f"{len(frame) - failures} of {len(frame)} reference figures reproduced", file=sys.stderr)
    return EXIT_ACCEPTANCE if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
