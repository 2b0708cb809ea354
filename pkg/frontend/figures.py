#!/usr/bin/env python3
"""Render figures from the supreg CLI's CSV/JSON outputs.

A standalone viewer: it never recomputes statistics, it only draws what the
CLI wrote.  Three figure kinds:

* ``rate_curves``  two stacked panels (local rate r_n(x), exponent
  alpha_n(x)) overlaying one curve per input CSV from the ``rate``
  subcommand, one per sample size.
* ``fit_overlay``  estimate vs truth from a ``fit`` CSV, with a ribbon of
  per-knot selected window half-widths when the matching JSON report is
  supplied.
* ``risk_slopes``  log-log medians against log(n)/n from a study
  ``summary.csv``, one line per metric.

Outputs are deterministic: fixed figure geometry, no timestamps.  Malformed
inputs fail fast with the offending column or field named.

Usage:
    figures.py --kind rate_curves --inputs a.csv b.csv c.csv --out fig.png
    figures.py --kind fit_overlay --inputs fit.csv --report fit.json --out f.png
    figures.py --kind risk_slopes --inputs summary.csv --out slopes.png
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SCHEMA = 1

_REQUIRED = {
    "rate_curves": ("x", "h", "rate", "alpha"),
    "fit_overlay": ("x", "f_hat"),
    "risk_slopes": ("n", "metric", "median"),
}


class FigureError(Exception):
    """Input or schema problem; message is user-facing."""


def read_csv_columns(path, required):
    """Read a CSV into {column: list}, verifying the required columns.

    A missing column raises with both the missing and the found names, so a
    corrupted header is diagnosable from the message alone.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            names = reader.fieldnames
            if names is None:
                raise FigureError(f"{path}: empty input, no header row")
            for col in required:
                if col not in names:
                    raise FigureError(
                        f"{path}: missing required column {col!r} "
                        f"(found: {', '.join(names)})")
            rows = list(reader)
    except OSError as exc:
        raise FigureError(f"{path}: {exc}") from exc
    if not rows:
        raise FigureError(f"{path}: no data rows")
    return {name: [row[name] for row in rows] for name in names}


def _floats(column, path, name):
    try:
        return [float(v) for v in column]
    except (TypeError, ValueError) as exc:
        raise FigureError(f"{path}: column {name!r} is not numeric: {exc}") from exc


def read_report_json(path):
    try:
        with open(path) as fh:
            report = json.load(fh)
    except OSError as exc:
        raise FigureError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FigureError(f"{path}: not valid JSON: {exc}") from exc
    schema = report.get("schema")
    if schema != SCHEMA:
        raise FigureError(
            f"{path}: schema version {schema!r} does not match this viewer "
            f"(wants {SCHEMA})")
    return report


def _new_figure(nrows):
    fig, axes = plt.subplots(nrows, 1, figsize=(6.4, 2.9 * nrows), dpi=120,
                             sharex=(nrows > 1), constrained_layout=True)
    return fig, (axes if nrows > 1 else [axes])


def render_rate_curves(inputs, labels, out):
    """Overlay r_n(x) and alpha_n(x) panels, one curve per input CSV."""
    fig, (ax_rate, ax_alpha) = _new_figure(2)
    for path, label in zip(inputs, labels):
        cols = read_csv_columns(path, _REQUIRED["rate_curves"])
        x = _floats(cols["x"], path, "x")
        marker = "o" if len(x) == 1 else None
        ax_rate.plot(x, _floats(cols["rate"], path, "rate"),
                     marker=marker, label=label)
        ax_alpha.plot(x, _floats(cols["alpha"], path, "alpha"), marker=marker)
    ax_rate.set_ylabel("local rate")
    ax_alpha.set_ylabel("rate exponent")
    ax_alpha.set_xlabel("x")
    ax_rate.legend(loc="best", fontsize=8)
    fig.savefig(out)
    plt.close(fig)


def render_fit_overlay(inputs, labels, out, report_path=None):
    """Estimate (and truth, when present) plus a selected-window ribbon."""
    path = inputs[0]
    cols = read_csv_columns(path, _REQUIRED["fit_overlay"])
    x = _floats(cols["x"], path, "x")
    windows = None
    if report_path is not None:
        report = read_report_json(report_path)
        if "selected_windows" not in report:
            raise FigureError(
                f"{report_path}: missing required field 'selected_windows'")
        windows = report["selected_windows"]
        knots = report.get("knots")
    nrows = 2 if windows is not None else 1
    fig, axes = _new_figure(nrows)
    ax = axes[0]
    marker = "o" if len(x) == 1 else None
    ax.plot(x, _floats(cols["f_hat"], path, "f_hat"),
            marker=marker, label="estimate")
    if "f_true" in cols:
        ax.plot(x, _floats(cols["f_true"], path, "f_true"),
                linestyle="--", marker=marker, label="truth")
    ax.set_ylabel("f")
    ax.legend(loc="best", fontsize=8)
    if windows is not None:
        ax2 = axes[1]
        ks, half = [], []
        for k, w in zip(knots, windows):
            if w is None:
                continue
            ks.append(float(k))
            half.append(0.5 * (float(w[1]) - float(w[0])))
        ax2.fill_between(ks, 0.0, half, alpha=0.4, step="mid")
        ax2.set_ylabel("window half-width")
        ax2.set_xlabel("x")
    else:
        ax.set_xlabel("x")
    fig.savefig(out)
    plt.close(fig)


def render_risk_slopes(inputs, labels, out):
    """Median errors against log(n)/n on log-log axes, per metric."""
    path = inputs[0]
    cols = read_csv_columns(path, _REQUIRED["risk_slopes"])
    ns = _floats(cols["n"], path, "n")
    medians = _floats(cols["median"], path, "median")
    metrics = cols["metric"]
    fig, (ax,) = _new_figure(1)
    for metric in sorted(set(metrics)):
        pts = sorted(
            (math.log(n) / n, med)
            for n, med, m in zip(ns, medians, metrics)
            if m == metric and med > 0)
        if not pts:
            continue
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker="o", label=metric)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("log(n) / n")
    ax.set_ylabel("median error")
    ax.legend(loc="best", fontsize=8)
    fig.savefig(out)
    plt.close(fig)


def render(kind, inputs, out, labels=None, report=None):
    if labels is None or not labels:
        labels = list(inputs)
    if len(labels) != len(inputs):
        raise FigureError(
            f"got {len(labels)} labels for {len(inputs)} inputs")
    if kind == "rate_curves":
        render_rate_curves(inputs, labels, out)
    elif kind == "fit_overlay":
        render_fit_overlay(inputs, labels, out, report_path=report)
    elif kind == "risk_slopes":
        render_risk_slopes(inputs, labels, out)
    else:
        raise FigureError(f"unknown figure kind {kind!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="render figures from supreg CLI outputs")
    parser.add_argument("--kind", required=True,
                        choices=["rate_curves", "fit_overlay", "risk_slopes"])
    parser.add_argument("--inputs", required=True, nargs="+",
                        help="input CSV paths from the CLI")
    parser.add_argument("--labels", nargs="*", default=None,
                        help="curve labels (defaults to the input paths)")
    parser.add_argument("--report", default=None,
                        help="matching JSON report (fit_overlay ribbon)")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        render(args.kind, args.inputs, args.out, labels=args.labels,
               report=args.report)
    except FigureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
