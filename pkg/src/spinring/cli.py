"""Command-line pipeline: synth -> analyze -> stats -> report / plotdata."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from .pipeline import (
    analyze_ensemble,
    read_controllers,
    read_metrics,
    render_report,
    stats_document,
    trend_rows,
    write_controllers,
    write_metrics,
)
from .ring_model import RingSpec, check_spin
from .synthesis import SynthesisOptions, rank_by_probability, synthesize

log = logging.getLogger("spinring")


def _site_arg(s: str):
    if s == "all":
        return None
    try:
        return int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"site must be an integer or 'all', got {s!r}") from None


def cmd_synth(a) -> int:
    spec = RingSpec(a.n)
    check_spin(getattr(a, "in"), a.n, "input spin")
    check_spin(a.out, a.n, "output spin")
    opts = SynthesisOptions(
        restarts=a.count,
        bias_bound=a.bias_bound,
        t_f_range=(a.tf_min, a.tf_max),
        seed=a.seed,
        window_halfwidth=a.dt,
    )
    rep = synthesize(spec, getattr(a, "in"), a.out, opts)
    if not rep.controllers:
        raise RuntimeError(f"no restart converged ({rep.dropped} dropped)")
    ranked = rank_by_probability(rep.controllers)
    write_controllers(a.output, ranked, bias_bound=a.bias_bound, tf_range=[a.tf_min, a.tf_max])
    log.info(
        "wrote %d controllers (%d dropped, %d duplicates), best prob %.6f",
        len(ranked), rep.dropped, rep.duplicates, ranked[0].windowed_prob,
    )
    return 0


def cmd_analyze(a) -> int:
    ensemble = read_controllers(a.controllers)
    n = ensemble[0].n
    sites = None if a.site is None else [check_spin(a.site, n, "site") + 1]
    metrics = ("logsens", "mu") if a.metric == "both" else (a.metric,)
    rows = analyze_ensemble(RingSpec(n), ensemble, a.family, sites, metrics)
    write_metrics(a.output, rows)
    log.info("wrote %d metric rows", len(rows))
    return 0


def cmd_stats(a) -> int:
    doc = stats_document(read_metrics(a.metrics))
    with open(a.output, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    log.info("%d cases, %d transfer summaries", len(doc["cases"]), len(doc["summaries"]))
    return 0


def cmd_report(a) -> int:
    try:
        with open(a.stats, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValueError(f"{a.stats}:{e.lineno}: malformed JSON ({e.msg})") from None
    text = render_report(doc, a.format)
    if a.output == "-":
        sys.stdout.write(text)
    else:
        with open(a.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def cmd_plotdata(a) -> int:
    rows = read_metrics(a.metrics)
    family = a.family or rows[0]["family"]
    site = a.site or rows[0]["site"]
    data = trend_rows(rows, family, site, a.metric)
    with open(a.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("controller_rank", "prob", "log10_metric"))
        for rank, p, lm in data:
            w.writerow((rank, repr(p), repr(lm)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinring", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize an ensemble of bias controllers")
    p.add_argument("--n", type=int, default=11)
    p.add_argument("--in", type=int, default=1)
    p.add_argument("--out", type=int, required=True)
    p.add_argument("--count", type=int, default=200, help="number of random restarts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=0.1, help="readout window half-width")
    p.add_argument("--tf-min", type=float, default=1.0)
    p.add_argument("--tf-max", type=float, default=30.0)
    p.add_argument("--bias-bound", type=float, default=50.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="per-controller log-sensitivity and/or mu")
    p.add_argument("--controllers", required=True)
    p.add_argument("--family", choices=("coupling", "spillage"), required=True)
    p.add_argument("--site", type=_site_arg, default=None, help="perturbation site 1..n or 'all'")
    p.add_argument("--metric", choices=("logsens", "mu", "both"), default="both")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("stats", help="Kendall tau tests per case and Stouffer summaries")
    p.add_argument("--metrics", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="summary tables from stats.json")
    p.add_argument("--stats", required=True)
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plotdata", help="probability-ordered trend of one metric")
    p.add_argument("--metrics", required=True)
    p.add_argument("--family", choices=("coupling", "spillage"))
    p.add_argument("--site", type=int)
    p.add_argument("--metric", choices=("logsens", "mu"), default="logsens")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.INFO, format="%(message)s")
    try:
        return a.func(a)
    except (OSError, ValueError, RuntimeError, ArithmeticError, NotImplementedError) as e:
        print(f"spinring {a.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
