import io
import json

import pytest

from pushsim.experiment import (
    CSV_COLUMNS,
    ExperimentGrid,
    gnuplot_columns,
    read_csv,
    resolve_page,
    rows_to_csv,
    run_experiment,
    summarize,
)
from pushsim.netmodel import CongestionState
from pushsim.pagemodel import export_page_json
from pushsim.synth import chain_corpus

TABLE_RTTS = (25, 50, 100, 250)


def test_table_grid_has_twelve_savings():
    rows = run_experiment(ExperimentGrid(rtts_ms=TABLE_RTTS, bandwidths_mbps=(100,)))
    assert len(rows) == 3 * 4 * 3
    cells = {(r["page"], r["rtt_ms"]): r["spr_s"] for r in rows}
    assert len(cells) == 12
    for (page, rtt), saving in cells.items():
        h = {"p0": 0, "p1": 1, "p2": 2}[page]
        assert saving == pytest.approx(h * rtt / 1000, abs=1e-4)


def test_single_pull_row():
    rows = run_experiment(ExperimentGrid(rtts_ms=(50,), bandwidths_mbps=(20,), pages=("p1",), modes=("pull",)))
    assert len(rows) == 1
    (row,) = rows
    assert row["mode"] == "pull" and row["spr_s"] is None and row["error"] is None
    assert row["bound_loose_s"] == pytest.approx(0.05)


@pytest.mark.parametrize("kw", [dict(modes=()), dict(rtts_ms=()), dict(modes=("fast",)), dict(repetitions=0)])
def test_bad_grids(kw):
    with pytest.raises(ValueError):
        ExperimentGrid(**kw)


def test_bad_page_becomes_error_row(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text('{"version": 1, "resources": [{"id": 1}]}')
    rows = run_experiment(ExperimentGrid(rtts_ms=(50,), bandwidths_mbps=(100,),
                                         pages=("p1", str(broken)), modes=("pull", "push")))
    errors = [r for r in rows if r["error"]]
    assert len(errors) == 1 and errors[0]["page"] == str(broken)
    assert len(rows) == 3


def test_rows_are_sorted_and_bounded():
    grid = ExperimentGrid(rtts_ms=(200, 25), bandwidths_mbps=(500, 20), pages=("p2", "p0"))
    rows = run_experiment(grid)
    keys = [(r["page"], r["rtt_ms"], r["bandwidth_mbps"], r["mode"]) for r in rows]
    assert keys == sorted(keys)
    for r in rows:
        assert r["spr_s"] <= r["bound_tight_s"] + 1e-6
        assert r["bound_tight_s"] <= r["bound_loose_s"] + 1e-12


def test_csv_roundtrip_and_determinism():
    grid = ExperimentGrid(rtts_ms=(25, 100), bandwidths_mbps=(100,),
                          slow_start=CongestionState(enabled=True))
    a = rows_to_csv(run_experiment(grid))
    b = rows_to_csv(run_experiment(grid, workers=2))
    assert a == b
    assert a.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_csv(io.StringIO(a))
    assert rows_to_csv(back) == a


def test_read_csv_rejects_missing_columns():
    with pytest.raises(ValueError, match="missing"):
        read_csv(io.StringIO("page,name\np0,x\n"))


def test_config_parsing():
    grid = ExperimentGrid.from_config({
        "version": 1, "rtt_ms": 100, "bandwidth_mbps": [20, 500], "pages": ["p1"],
        "modes": ["pull", "push"], "slow_start": {"enabled": True}, "repetitions": 2,
    })
    assert grid.rtts_ms == (100,) and grid.slow_start.enabled and grid.repetitions == 2
    with pytest.raises(ValueError):
        ExperimentGrid.from_config({"version": 9})
    with pytest.raises(ValueError):
        ExperimentGrid.from_config({"rtts": [1]})


def test_resolve_page(tmp_path):
    assert resolve_page("chain:3").height() == 3
    assert resolve_page("chain:2:10").total_bytes() == 30
    path = tmp_path / "p.json"
    path.write_text(export_page_json(resolve_page("p2")))
    assert resolve_page(str(path)) == resolve_page("p2")


def test_summary_single_page():
    rows = run_experiment(ExperimentGrid(rtts_ms=(100,), bandwidths_mbps=(100,), pages=("p1",)))
    s = summarize(rows)
    (q,) = s["spr_quantiles"]
    assert q["q25_ms"] == q["median_ms"] == q["q75_ms"] == pytest.approx(rows[0]["spr_s"] * 1000)
    assert s["regression"] == []
    assert s["cells"] == 1 and s["failed_rows"] == 0


def test_summary_groups_by_height():
    pages = ("chain:1", "chain:2")
    s = summarize(run_experiment(ExperimentGrid(rtts_ms=(100,), bandwidths_mbps=(100,), pages=pages)))
    assert [g["height"] for g in s["spr_by_height"]] == [1, 2]


def test_chain_corpus_slope_tracks_mean_height(tmp_path):
    pages = []
    for i, page in enumerate(chain_corpus(9, heights=(1, 2, 3), seed=4)):
        path = tmp_path / f"c{i}.json"
        path.write_text(export_page_json(page))
        pages.append(str(path))
    mean_h = sum(resolve_page(p).height() for p in pages) / len(pages)
    rows = run_experiment(ExperimentGrid(rtts_ms=(25, 50, 100, 200), bandwidths_mbps=(100,),
                                         pages=tuple(pages), modes=("pull", "push")))
    (fit,) = summarize(rows)["regression"]
    assert fit["slope"] == pytest.approx(mean_h, rel=0.02)


def test_summary_needs_rows():
    with pytest.raises(ValueError):
        summarize([])


def test_gnuplot_blocks():
    rows = run_experiment(ExperimentGrid(rtts_ms=(25, 100), bandwidths_mbps=(100,), pages=("p1", "p2")))
    text = gnuplot_columns(rows, "spr-rtt")
    assert text.count("# bw=") == 2
    assert "\n\n" in text
    hdr = gnuplot_columns(rows, "spr-height").splitlines()
    assert hdr[0].startswith("# bandwidth_mbps") and len(hdr) == 1 + 4
    with pytest.raises(ValueError):
        gnuplot_columns(rows, "violin")
    json.dumps(summarize(rows))
