"""RTT x bandwidth sweeps over a set of pages, and their summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import stats
from .bounds import spr_upper_bound_loose, spr_upper_bound_tight
from .netmodel import CongestionState, LinkParams
from .pagemodel import FIXTURES, DependencyTree, fixture, load_page
from .pushpolicy import build_manifest
from .simulator import Mode, SimConfig, simulate, trace_discovery_schedule
from .synth import chain_page

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
CSV_COLUMNS = (
    "page", "name", "rtt_ms", "bandwidth_mbps", "mode", "plt_s", "spr_s",
    "bound_loose_s", "bound_tight_s", "height", "psize_bytes", "error",
)
MODE_NAMES = tuple(m.value for m in Mode)


@dataclass(frozen=True)
class ExperimentGrid:
    rtts_ms: tuple[float, ...] = (25, 50, 100, 200)
    bandwidths_mbps: tuple[float, ...] = (20, 100, 500)
    pages: tuple[str, ...] = FIXTURES
    slow_start: CongestionState = field(default_factory=CongestionState)
    modes: tuple[str, ...] = MODE_NAMES
    script_blocking: bool = False
    repetitions: int = 1

    def __post_init__(self):
        for name in ("rtts_ms", "bandwidths_mbps", "pages", "modes"):
            val = tuple(getattr(self, name))
            if not val:
                raise ValueError(f"{name} must not be empty")
            if name in ("rtts_ms", "bandwidths_mbps"):
                val = tuple(float(v) for v in val)
            object.__setattr__(self, name, val)
        bad = [m for m in self.modes if m not in MODE_NAMES]
        if bad:
            raise ValueError(f"unknown mode(s): {', '.join(bad)}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")

    @classmethod
    def from_config(cls, cfg: Mapping[str, Any]) -> ExperimentGrid:
        if cfg.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {cfg.get('version')!r}")
        known = {"version", "rtt_ms", "bandwidth_mbps", "pages", "modes", "slow_start",
                 "script_blocking", "repetitions"}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown config keys: {', '.join(sorted(extra))}")
        kw: dict[str, Any] = {}
        if "rtt_ms" in cfg:
            kw["rtts_ms"] = _listify(cfg["rtt_ms"])
        if "bandwidth_mbps" in cfg:
            kw["bandwidths_mbps"] = _listify(cfg["bandwidth_mbps"])
        for key in ("pages", "modes"):
            if key in cfg:
                kw[key] = _listify(cfg[key])
        if "slow_start" in cfg:
            kw["slow_start"] = CongestionState.from_config(cfg["slow_start"])
        for key in ("script_blocking", "repetitions"):
            if key in cfg:
                kw[key] = cfg[key]
        return cls(**kw)


def _listify(v) -> tuple:
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def resolve_page(source: str) -> DependencyTree:
    """Fixture name, ``chain:<height>[:<bytes>]``, or a .json/.har path."""
    if source in FIXTURES:
        return fixture(source)
    if source.startswith("chain:"):
        parts = source.split(":")
        size = int(parts[2]) if len(parts) > 2 else 1024
        return chain_page(int(parts[1]), size, name=source)
    return load_page(source)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _cell(page: DependencyTree, source: str, rtt_ms: float, bw_mbps: float,
          grid: ExperimentGrid) -> list[dict]:
    link = LinkParams.from_ms_mbps(rtt_ms, bw_mbps)
    opts = dict(congestion=grid.slow_start, script_blocking=grid.script_blocking)
    base = dict(page=source, name=page.name, rtt_ms=rtt_ms, bandwidth_mbps=bw_mbps,
                height=page.height(), psize_bytes=page.total_bytes(), error=None)
    try:
        manifest = build_manifest(page)
        results = {}
        # pull always runs: the tight bound needs its discovery trace
        for mode in sorted(set(grid.modes) | {"pull"}):
            cfg = SimConfig(Mode(mode), link, push_order=manifest if mode == "push" else None, **opts)
            runs = [simulate(page, cfg) for _ in range(grid.repetitions)]
            if len({r.plt_s for r in runs}) != 1:
                raise RuntimeError("non-deterministic PLT across repetitions")
            results[mode] = runs[0]
        schedule = trace_discovery_schedule(results["pull"], page)
        tight = spr_upper_bound_tight(page, link, schedule).total_s
        spr = results["pull"].plt_s - results["push"].plt_s if "push" in results else None
        shared = dict(spr_s=spr, bound_loose_s=spr_upper_bound_loose(page, link), bound_tight_s=tight)
        return [dict(base, mode=m, plt_s=results[m].plt_s, **shared) for m in sorted(grid.modes)]
    except Exception as exc:  # keep the sweep going; the row carries the failure
        log.warning("page %s at %sms/%sMbps failed: %s", source, rtt_ms, bw_mbps, exc)
        return [dict(base, mode=None, plt_s=None, spr_s=None, bound_loose_s=None,
                     bound_tight_s=None, error=f"{type(exc).__name__}: {exc}")]


def _page_rows(source: str, grid: ExperimentGrid) -> list[dict]:
    try:
        page = resolve_page(source)
    except Exception as exc:
        log.warning("page %s could not be loaded: %s", source, exc)
        return [dict(page=source, name=None, rtt_ms=None, bandwidth_mbps=None, mode=None,
                     plt_s=None, spr_s=None, bound_loose_s=None, bound_tight_s=None,
                     height=None, psize_bytes=None, error=f"{type(exc).__name__}: {exc}")]
    rows = []
    for rtt in grid.rtts_ms:
        for bw in grid.bandwidths_mbps:
            rows.extend(_cell(page, source, rtt, bw, grid))
    return rows


def _row_key(row: Mapping[str, Any]):
    return (row["page"], row["rtt_ms"] if row["rtt_ms"] is not None else -1,
            row["bandwidth_mbps"] if row["bandwidth_mbps"] is not None else -1,
            row["mode"] or "")


def run_experiment(grid: ExperimentGrid, workers: int = 1) -> list[dict]:
    """One row per (page, rtt, bandwidth, mode), sorted in that order."""
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_page_rows, grid.pages, [grid] * len(grid.pages)))
    else:
        chunks = [_page_rows(src, grid) for src in grid.pages]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=_row_key)
    return rows


def write_csv(rows: Iterable[Mapping[str, Any]], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])


def rows_to_csv(rows: Iterable[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


_FLOATS = ("rtt_ms", "bandwidth_mbps", "plt_s", "spr_s", "bound_loose_s", "bound_tight_s")
_INTS = ("height", "psize_bytes")


def read_csv(fh) -> list[dict]:
    reader = csv.DictReader(fh)
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"CSV is missing columns: {', '.join(sorted(missing))}")
    rows = []
    for raw in reader:
        row: dict[str, Any] = {k: (raw[k] if raw[k] != "" else None) for k in CSV_COLUMNS}
        for k in _FLOATS:
            if row[k] is not None:
                row[k] = float(row[k])
        for k in _INTS:
            if row[k] is not None:
                row[k] = int(row[k])
        rows.append(row)
    return rows


def _ms(x: float) -> float:
    return x * 1000.0


def summarize(rows: Sequence[Mapping[str, Any]]) -> dict:
    """Quantiles, regression, ECDFs and per-height SPR from a result table."""
    ok = [r for r in rows if not r.get("error")]
    if not ok:
        raise ValueError("result table has no successful rows")

    # one SPR per (page, rtt, bw) cell
    cells = {}
    for r in ok:
        if r["spr_s"] is not None:
            cells[(r["page"], r["rtt_ms"], r["bandwidth_mbps"])] = r

    by_rtt = defaultdict(list)
    by_bw = defaultdict(list)
    by_height = defaultdict(list)
    for (page, rtt, bw), r in sorted(cells.items()):
        by_rtt[(bw, rtt)].append(_ms(r["spr_s"]))
        by_bw[bw].append((rtt, _ms(r["spr_s"])))
        by_height[(bw, rtt, r["height"])].append(_ms(r["spr_s"]))

    spr_quantiles = []
    for (bw, rtt), vals in sorted(by_rtt.items()):
        q25, med, q75 = stats.quantiles(vals)
        spr_quantiles.append(dict(bandwidth_mbps=bw, rtt_ms=rtt, n=len(vals),
                                  q25_ms=q25, median_ms=med, q75_ms=q75, samples_ms=vals))

    regression = []
    for bw, pts in sorted(by_bw.items()):
        if len({x for x, _ in pts}) < 2:
            continue
        fit = stats.ols_fit(pts)
        regression.append(dict(bandwidth_mbps=bw, slope=fit.slope, intercept_ms=fit.intercept,
                               mad_ms=fit.residual_mad, n=len(pts)))

    plt_samples = defaultdict(list)
    for r in ok:
        plt_samples[(r["bandwidth_mbps"], r["rtt_ms"], r["mode"])].append(_ms(r["plt_s"]))
    ecdfs = [
        dict(bandwidth_mbps=bw, rtt_ms=rtt, mode=mode,
             steps=[[v, f] for v, f in stats.ecdf(vals)])
        for (bw, rtt, mode), vals in sorted(plt_samples.items())
    ]

    heights = []
    for (bw, rtt, h), vals in sorted(by_height.items()):
        heights.append(dict(bandwidth_mbps=bw, rtt_ms=rtt, height=h, n=len(vals),
                            mean_ms=sum(vals) / len(vals), median_ms=stats.median(vals)))

    return dict(
        units="ms",
        cells=len(cells),
        failed_rows=len(rows) - len(ok),
        spr_quantiles=spr_quantiles,
        regression=regression,
        plt_ecdf=ecdfs,
        spr_by_height=heights,
    )


def gnuplot_columns(rows: Sequence[Mapping[str, Any]], kind: str = "ecdf") -> str:
    """Whitespace-separated blocks (blank-line separated) for gnuplot ``index``."""
    summary = summarize(rows)
    out = []
    if kind == "ecdf":
        for block in summary["plt_ecdf"]:
            out.append(f"# bw={block['bandwidth_mbps']} rtt={block['rtt_ms']} mode={block['mode']}")
            out.extend(f"{v!r} {f!r}" for v, f in block["steps"])
            out.append("\n")
    elif kind == "spr-rtt":
        for q in summary["spr_quantiles"]:
            out.append(f"# bw={q['bandwidth_mbps']} rtt={q['rtt_ms']}")
            out.extend(f"{q['rtt_ms']!r} {v!r}" for v in q["samples_ms"])
            out.append("\n")
    elif kind == "spr-height":
        out.append("# bandwidth_mbps rtt_ms height n mean_ms median_ms")
        out.extend(f"{h['bandwidth_mbps']!r} {h['rtt_ms']!r} {h['height']} {h['n']} "
                   f"{h['mean_ms']!r} {h['median_ms']!r}" for h in summary["spr_by_height"])
    else:
        raise ValueError(f"unknown plot data kind {kind!r}")
    return "\n".join(out).rstrip("\n") + "\n"


def load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
