"""Command-line front end: ``corrsim {run,analyze,compare} SCENARIO.json``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import analytics
from .config import ConfigError, load_scenario
from .engine import MonteCarloSummary, default_workers, monte_carlo

EPISODE_FIELDS = (
    "episode",
    "error_rate",
    "abstention_rate",
    "rejection_rate",
    "targeted_rate",
    "first_mistake_index",
    "unique_points_queried",
    "errors",
    "abstentions",
    "rejections",
    "targeted_hits",
    "m_test",
)


def _seed(value: str) -> int:
    try:
        return int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrsim", description="Correlated test-time attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "simulate episodes and summarise them"),
        ("analyze", "closed-form quantities only, no simulation"),
        ("compare", "simulation plus closed forms with agreement flags"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", type=Path, help="scenario JSON file")
        p.add_argument("--seed", type=_seed, default=None, help="override the master seed")
        p.add_argument("--episodes", type=int, default=None, help="override the episode count")
        p.add_argument("--out", type=Path, default=None, help="directory for result files")
        p.add_argument("--format", choices=("text", "csv", "jsonl"), default="text", help="stdout format")
        p.add_argument("--workers", type=int, default=default_workers(), help="parallel episode workers")
        if name == "compare":
            p.add_argument(
                "--batch-episodes",
                type=int,
                default=0,
                help="extra vectorised test-set episodes for the exact-rate cross-check",
            )
    return parser


def _episode_rows(summary: MonteCarloSummary) -> list:
    rows = []
    for e, m in enumerate(summary.episodes):
        d = m.as_dict()
        rows.append({"episode": e, **{k: d[k] for k in EPISODE_FIELDS if k != "episode"}})
    return rows


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def _csv(rows, fields=None) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields or list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _summary_text(summary: MonteCarloSummary) -> str:
    lines = [f"{'scope':<8} {'quantity':<22} {'n':>6} {'mean':>12} {'std':>12} {'ci95':>10}"]
    for row in summary.table():
        lines.append(
            f"{row['scope']:<8} {row['quantity']:<22} {row['n']:>6} {row['mean']:>12.6g} {row['std']:>12.6g} {row['half_width']:>10.3g}"
        )
    return "\n".join(lines) + "\n"


def _write(out, name, text) -> None:
    if out is not None:
        (out / name).write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_scenario(args.scenario).with_overrides(seed=args.seed, episodes=args.episodes)
    except ConfigError as exc:
        print(f"corrsim: invalid scenario: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _write(args.out, "scenario.json", config.to_json() + "\n")

    if args.command == "analyze":
        report = analytics.analyze(config)
        text, table = report.render(), _csv(report.to_csv_rows())
        _write(args.out, "analysis.txt", text)
        _write(args.out, "analysis.csv", table)
        sys.stdout.write(table if args.format == "csv" else text)
        return 0

    if args.command == "run":
        summary = monte_carlo(config, workers=args.workers)
        episodes_out = _jsonl(_episode_rows(summary))
        table = _csv(summary.table())
        _write(args.out, "episodes.jsonl", episodes_out)
        _write(args.out, "summary.csv", table)
        out = {"text": _summary_text(summary), "csv": table, "jsonl": episodes_out}[args.format]
        sys.stdout.write(out)
        return 0

    report = analytics.compare(config, workers=args.workers, batch_episodes=args.batch_episodes)
    text, table = report.render(), _csv(report.to_csv_rows())
    _write(args.out, "episodes.jsonl", _jsonl(_episode_rows(report.summary)))
    _write(args.out, "summary.csv", _csv(report.summary.table()))
    _write(args.out, "report.txt", text)
    _write(args.out, "report.csv", table)
    sys.stdout.write(table if args.format == "csv" else text)
    return 0 if report.all_agree else 1


if __name__ == "__main__":
    sys.exit(main())
