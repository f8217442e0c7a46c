"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error. Set ``PUSHSIM_LOG``
(DEBUG, INFO, WARNING...) to change log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import experiment
from .bounds import plt_lower_bound, spr_upper_bound_loose, spr_upper_bound_tight
from .netmodel import CongestionState, LinkParams
from .pushpolicy import CacheDigest, build_manifest, filter_manifest
from .simulator import Mode, SimConfig, simulate, trace_discovery_schedule

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
# page format/validation, HAR, simulation and JSON errors are all ValueErrors
DATA_ERRORS = (ValueError, OSError)

log = logging.getLogger("pushsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_link(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rtt-ms", type=float, default=100.0)
    p.add_argument("--bandwidth-mbps", type=float, default=100.0)
    _add_slow_start(p)
    p.add_argument("--script-blocking", action="store_true",
                   help="non-async scripts stop discovery of later siblings until received")


def _add_slow_start(p: argparse.ArgumentParser) -> None:
    p.add_argument("--slow-start", action="store_true", help="enable the cold-window model")
    p.add_argument("--mss", type=int, default=None, help="segment size in bytes (1460)")
    p.add_argument("--init-cwnd", type=int, default=None, help="initial window in segments (10)")
    p.add_argument("--max-cwnd", type=int, default=None, help="window cap in bytes")


def _congestion(args, base: Optional[CongestionState] = None) -> CongestionState:
    cong = base or CongestionState()
    kw = {}
    if args.slow_start:
        kw["enabled"] = True
    if args.mss is not None:
        kw["mss_bytes"] = args.mss
    if args.init_cwnd is not None:
        kw["init_cwnd_segments"] = args.init_cwnd
    if args.max_cwnd is not None:
        kw["max_cwnd_bytes"] = args.max_cwnd
    if not kw:
        return cong
    return CongestionState(
        enabled=kw.get("enabled", cong.enabled),
        mss_bytes=kw.get("mss_bytes", cong.mss_bytes),
        init_cwnd_segments=kw.get("init_cwnd_segments", cong.init_cwnd_segments),
        max_cwnd_bytes=kw.get("max_cwnd_bytes", cong.max_cwnd_bytes),
    )


def _link(args) -> LinkParams:
    try:
        return LinkParams.from_ms_mbps(args.rtt_ms, args.bandwidth_mbps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_lines(path: str) -> list[str]:
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]


def cmd_simulate(args) -> int:
    page = experiment.resolve_page(args.page)
    link = _link(args)
    mode = Mode(args.mode)
    manifest = None
    partial = False
    if mode is Mode.PUSH:
        manifest = build_manifest(page)
        if args.cached_urls:
            digest = CacheDigest.for_capacity(max(1, len(_read_lines(args.cached_urls))), args.fpr)
            digest.update(_read_lines(args.cached_urls))
            manifest = filter_manifest(manifest, page, digest)
            partial = True
    cfg = SimConfig(mode, link, _congestion(args), manifest,
                    script_blocking=args.script_blocking, partial_push=partial)
    res = simulate(page, cfg)
    sys.stdout.write(res.to_jsonl())
    print(f"# page={page.name} mode={mode.value} plt_s={res.plt_s!r} "
          f"bubble_total_s={res.bubble_total_s!r} bytes={res.bytes_transferred}", file=sys.stderr)
    return EXIT_OK


def cmd_bounds(args) -> int:
    page = experiment.resolve_page(args.page)
    link = _link(args)
    pull = simulate(page, SimConfig(Mode.PULL, link, _congestion(args),
                                    script_blocking=args.script_blocking))
    tight = spr_upper_bound_tight(page, link, trace_discovery_schedule(pull, page, args.rule))
    if args.json:
        out = dict(
            page=page.name, rtt_ms=args.rtt_ms, bandwidth_mbps=args.bandwidth_mbps,
            height=page.height(), psize_bytes=page.total_bytes(),
            plt_lower_bound_s=plt_lower_bound(page, link),
            spr_bound_loose_s=spr_upper_bound_loose(page, link),
            spr_bound_tight_s=tight.total_s,
            terms=[dict(depth=t.depth, rsize_bytes=t.rsize_bytes, term_s=t.term_s)
                   for t in tight.per_depth_terms],
        )
        print(json.dumps(out, indent=2))
        return EXIT_OK
    print(f"page {page.name}: height {page.height()}, {page.total_bytes()} bytes, "
          f"RTT {args.rtt_ms} ms, {args.bandwidth_mbps} Mbit/s")
    print(f"PLT lower bound      {plt_lower_bound(page, link) * 1000:12.3f} ms")
    print(f"SPR bound (loose)    {spr_upper_bound_loose(page, link) * 1000:12.3f} ms")
    print(f"SPR bound (tight)    {tight.total_s * 1000:12.3f} ms   [{args.rule}]")
    print(f"{'depth':>5} {'rsize_bytes':>12} {'term_ms':>10}")
    for t in tight.per_depth_terms:
        print(f"{t.depth:>5} {t.rsize_bytes:>12} {t.term_s * 1000:>10.3f}")
    return EXIT_OK


def _grid(args) -> experiment.ExperimentGrid:
    cfg = experiment.load_config(args.config) if args.config else {}
    try:
        grid = experiment.ExperimentGrid.from_config(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from None
    over = {}
    if args.pages:
        over["pages"] = tuple(args.pages)
    if args.rtt_ms:
        over["rtts_ms"] = tuple(args.rtt_ms)
    if args.bandwidth_mbps:
        over["bandwidths_mbps"] = tuple(args.bandwidth_mbps)
    if args.modes is not None:
        over["modes"] = tuple(m for m in args.modes.split(",") if m)
    if args.repetitions is not None:
        over["repetitions"] = args.repetitions
    if args.script_blocking:
        over["script_blocking"] = True
    over["slow_start"] = _congestion(args, grid.slow_start)
    try:
        return replace(grid, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(args) -> int:
    grid = _grid(args)
    rows = experiment.run_experiment(grid, workers=args.workers)
    text = experiment.rows_to_csv(rows)
    _write(args.output, text)
    failed = sum(1 for r in rows if r["error"])
    log.info("sweep: %d rows, %d failed", len(rows), failed)
    return EXIT_OK


def _write(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _read_table(path: str) -> list[dict]:
    if path == "-":
        return experiment.read_csv(sys.stdin)
    with open(path, newline="") as fh:
        return experiment.read_csv(fh)


def cmd_summarize(args) -> int:
    summary = experiment.summarize(_read_table(args.csv))
    _write(args.output, json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    _write(args.output, experiment.gnuplot_columns(_read_table(args.csv), args.kind))
    return EXIT_OK


def cmd_digest(args) -> int:
    if args.action == "build":
        urls = _read_lines(args.urls)
        if args.bits:
            digest = CacheDigest(args.bits, args.hashes or 7)
        else:
            digest = CacheDigest.for_capacity(max(1, len(urls)), args.fpr)
        digest.update(urls)
        with open(args.output, "wb") as fh:
            fh.write(digest.to_bytes())
        print(f"m={digest.m} k={digest.k} n={digest.n} "
              f"expected_fpr={digest.expected_fpr():.6g}", file=sys.stderr)
        return EXIT_OK
    with open(args.digest, "rb") as fh:
        digest = CacheDigest.from_bytes(fh.read())
    for url in args.url:
        print(f"{'present' if url in digest else 'absent'}\t{url}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pushsim", description="HTTP/2 server push load-time simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate one load and print its timeline (JSON lines)")
    s.add_argument("page", help="fixture (p0/p1/p2), chain:<h>[:<bytes>], or a .json/.har file")
    s.add_argument("--mode", choices=[m.value for m in Mode], default="pull")
    s.add_argument("--cached-urls", help="file of cached URLs; push skips what the digest reports")
    s.add_argument("--fpr", type=float, default=0.01, help="digest false-positive target")
    _add_link(s)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bounds", help="PLT lower bound and SPR upper bounds for one page")
    b.add_argument("page")
    b.add_argument("--rule", choices=["masking", "first"], default="masking",
                   help="which discovery per depth feeds the tight bound")
    b.add_argument("--json", action="store_true")
    _add_link(b)
    b.set_defaults(func=cmd_bounds)

    w = sub.add_parser("sweep", help="run the RTT x bandwidth grid and write CSV")
    w.add_argument("--config", help="JSON experiment config (version 1)")
    w.add_argument("--pages", nargs="+")
    w.add_argument("--rtt-ms", type=float, action="append")
    w.add_argument("--bandwidth-mbps", type=float, action="append")
    w.add_argument("--modes", help="comma-separated subset of pull,push,optimal")
    w.add_argument("--repetitions", type=int)
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--script-blocking", action="store_true")
    w.add_argument("-o", "--output")
    _add_slow_start(w)
    w.set_defaults(func=cmd_sweep)

    m = sub.add_parser("summarize", help="turn a sweep CSV into summary statistics (JSON)")
    m.add_argument("csv", help="sweep CSV, or - for stdin")
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_summarize)

    g = sub.add_parser("plot-data", help="gnuplot-ready columns from a sweep CSV")
    g.add_argument("csv")
    g.add_argument("--kind", choices=["ecdf", "spr-rtt", "spr-height"], default="ecdf")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_plot_data)

    d = sub.add_parser("digest", help="build or query a bloom-filter cache digest")
    dsub = d.add_subparsers(dest="action", required=True, parser_class=_Parser)
    db = dsub.add_parser("build")
    db.add_argument("--urls", required=True, help="file with one URL per line")
    db.add_argument("--fpr", type=float, default=0.01)
    db.add_argument("--bits", type=int, help="explicit m (overrides --fpr sizing)")
    db.add_argument("--hashes", type=int, help="explicit k, used with --bits")
    db.add_argument("-o", "--output", required=True)
    dq = dsub.add_parser("query")
    dq.add_argument("--digest", required=True)
    dq.add_argument("url", nargs="+")
    d.set_defaults(func=cmd_digest)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("PUSHSIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pushsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"pushsim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
