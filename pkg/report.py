"""
Analysis report: the record assembled by `bell_analysis.analyze` and its text and JSON
renderings. JSON output is deterministic and validated against docs/report_schema.json.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import jsonschema

from config import EXTREME_TAIL_P, OUTCOME_PAIRS, SETTING_PAIRS, SIGNIFICANT_DIGITS

SCHEMA_PATH = Path(__file__).resolve().parent / "docs" / "report_schema.json"
SCHEMA_VERSION = 1


@dataclass
class AnalysisReport:
    dataset: object
    transform: object
    methods: list
    naive: dict = field(default_factory=dict)
    optimized: dict = field(default_factory=dict)
    deviations: list = field(default_factory=list)
    wilks: object = None
    one_step: object = None
    bellgame: object = None
    chebyshev: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _num(x):
    """JSON has no infinities; non-finite values become null."""
    x = float(x)
    return x if math.isfinite(x) else None


def _estimate_dict(est, chebyshev):
    return {
        "value": _num(est.value),
        "se": _num(est.se),
        "z": _num(est.z),
        "p": _num(est.p.p),
        "log_p": _num(est.p.log_p),
        "bound": est.bound,
        "c": [_num(v) for v in est.c],
        "regularized": est.regularized,
        "chebyshev_p": _num(chebyshev.p) if chebyshev is not None else None,
    }


def _fit_dict(fit):
    return {
        "model": fit.model,
        "loglik": _num(fit.loglik),
        "pa": [_num(v) for v in fit.params.pa],
        "qb": [_num(v) for v in fit.params.qb],
        "rho": [_num(v) for v in fit.params.rho],
        "S": _num(fit.S),
        "J": _num(fit.J),
        "converged": fit.converged,
        "iterations": fit.iterations,
        "active_constraint": fit.active_constraint,
        "note": fit.note,
    }


def to_dict(report):
    ds = report.dataset
    t = report.transform
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dataset": {
            "name": ds.name,
            "source": ds.source,
            "outcome_labels": {side: list(ds.outcome_labels[side]) for side in ("alice", "bob")},
            "tables": {f"{a}{b}": [list(row) for row in ds.table(a, b).counts] for a, b in SETTING_PAIRS},
            "trials": list(ds.trials),
            "transform": {
                "alice_flip": list(t.alice_flip),
                "bob_flip": list(t.bob_flip),
                "alice_setting_swap": t.alice_setting_swap,
                "bob_setting_swap": t.bob_setting_swap,
                "tie": t.tie,
            },
        },
        "methods": list(report.methods),
        "gls": None,
        "mle": None,
        "bellgame": None,
        "warnings": list(report.warnings),
    }

    if report.naive:
        doc["gls"] = {
            "naive": {
                kind: _estimate_dict(est, report.chebyshev.get(f"naive_{kind}"))
                for kind, est in report.naive.items()
            },
            "optimized": {
                kind: _estimate_dict(est, report.chebyshev.get(f"optimized_{kind}"))
                for kind, est in report.optimized.items()
            },
            "nosignalling_deviations": [
                {"value": _num(d.value), "se": _num(d.se), "z": _num(d.z)} for d in report.deviations
            ],
        }

    if report.wilks is not None:
        w = report.wilks
        cheb = report.chebyshev.get("wilks")
        doc["mle"] = {
            "statistic": _num(w.statistic),
            "p": _num(w.p.p),
            "log_p": _num(w.p.log_p),
            "z_equivalent": _num(w.z_equivalent),
            "chebyshev_p": _num(cheb.p) if cheb is not None else None,
            "fit_ns": _fit_dict(w.fit_ns),
            "fit_lr": _fit_dict(w.fit_lr),
            "one_step_S": _num(report.one_step.params.chsh()) if report.one_step is not None else None,
        }

    if report.bellgame is not None:
        g = report.bellgame
        doc["bellgame"] = {
            "wins": g.wins,
            "trials": g.trials,
            "win_rate": _num(g.win_rate),
            "p": _num(g.p.p),
            "log_p": _num(g.p.log_p),
            "lr_bound": g.lr_bound,
            "tsirelson_rate": g.tsirelson_rate,
            "block_trials": list(g.block_trials),
        }
    return doc


@lru_cache(maxsize=1)
def load_schema():
    with open(SCHEMA_PATH) as f:
        return json.load(f)


def validate_report(doc):
    jsonschema.validate(instance=doc, schema=load_schema())


def render_json(report):
    doc = to_dict(report)
    validate_report(doc)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def format_number(x):
    if not math.isfinite(x):
        return str(x)
    return f"{x:.{SIGNIFICANT_DIGITS}g}"


def format_p(tail, chebyshev=None):
    """Small tails go out in scientific notation with the Chebyshev bound alongside."""
    if tail.p < EXTREME_TAIL_P:
        text = f"{tail.p:.{SIGNIFICANT_DIGITS - 1}e} (log p = {format_number(tail.log_p)})"
        if chebyshev is not None:
            text += f"  [Chebyshev <= {chebyshev.p:.2g}; asymptotics unreliable]"
        return text
    text = format_number(tail.p)
    if chebyshev is not None:
        text += f"  [Chebyshev <= {chebyshev.p:.2g}]"
    return text


def _estimate_lines(label, est, chebyshev):
    return [
        f"  {label} {est.kind} = {format_number(est.value)}  se = {format_number(est.se)}"
        f"  z = {format_number(est.z)}  p = {format_p(est.p, chebyshev)}"
    ]


def render_text(report):
    ds = report.dataset
    lines = [f"Dataset: {ds.name}" + (f" ({ds.source})" if ds.source else "")]
    alice, bob = ds.outcome_labels["alice"], ds.outcome_labels["bob"]
    lines.append(f"Outcome labels: Alice {alice[0]}/{alice[1]}, Bob {bob[0]}/{bob[1]}")
    if not report.transform.is_identity:
        t = report.transform
        lines.append(
            f"Recoded to canonical form: Alice flips {t.alice_flip}, Bob flips {t.bob_flip}, "
            f"setting swaps A={t.alice_setting_swap} B={t.bob_setting_swap}"
        )
    lines.append("Counts (" + " ".join(OUTCOME_PAIRS) + "):")
    for a, b in SETTING_PAIRS:
        cells = [c for row in ds.table(a, b).counts for c in row]
        lines.append(f"  ({a},{b}): " + " ".join(str(c) for c in cells) + f"  n = {sum(cells)}")

    if report.naive:
        lines.append("")
        lines.append("Generalized least squares")
        for kind, est in report.naive.items():
            lines += _estimate_lines("naive    ", est, report.chebyshev.get(f"naive_{kind}"))
        for kind, est in report.optimized.items():
            lines += _estimate_lines("optimized", est, report.chebyshev.get(f"optimized_{kind}"))
        lines.append("  No-signalling deviations (value, se, z):")
        for k, d in enumerate(report.deviations):
            lines.append(f"    {k + 1}: {format_number(d.value)}  {format_number(d.se)}  {format_number(d.z)}")

    if report.wilks is not None:
        w = report.wilks
        lines.append("")
        lines.append("Maximum likelihood")
        for fit in (w.fit_ns, w.fit_lr):
            rho = ", ".join(format_number(r) for r in fit.params.rho)
            lines.append(
                f"  {fit.model}: loglik = {fit.loglik:.6f}  rho = ({rho})  S = {format_number(fit.S)}"
                f"  J = {format_number(fit.J)}  iterations = {fit.iterations}"
            )
        if report.one_step is not None:
            lines.append(f"  one-step S = {format_number(report.one_step.params.chsh())}")
        lines.append(
            f"  Wilks statistic = {format_number(w.statistic)}  sqrt = {format_number(w.z_equivalent)}"
            f"  p = {format_p(w.p, report.chebyshev.get('wilks'))}"
        )

    if report.bellgame is not None:
        g = report.bellgame
        lines.append("")
        lines.append("Bell game")
        lines.append(
            f"  wins = {g.wins} of {g.trials}  rate = {format_number(g.win_rate)}"
            f"  (local bound {g.lr_bound}, Tsirelson {format_number(g.tsirelson_rate)})"
        )
        lines.append(f"  trials per setting pair: {', '.join(str(n) for n in g.block_trials)}")
        lines.append(f"  p = {format_p(g.p)}")

    if report.warnings:
        lines.append("")
        lines.append("Warnings:")
        lines += [f"  - {w}" for w in report.warnings]
    return "\n".join(lines) + "\n"
