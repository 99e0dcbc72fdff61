import csv
import io
import math
import warnings

import numpy as np
import pytest

from vsvmc import harness
from vsvmc.config import ExperimentConfig
from vsvmc.errors import GridIncompatible, NoConvergence
from vsvmc.harness import REPORT_HEADER, ReportRow, emit_report


def _row(i=0):
    return ReportRow("rep2", 0.7, 100, 10, 1.2345678, 0.5, 0.05, 12.0, i)


def test_emit_empty(tmp_path):
    out = tmp_path / "r.csv"
    text = emit_report([], out)
    assert text == ",".join(REPORT_HEADER) + "\n"
    assert out.read_bytes() == text.encode("utf-8")


def test_emit_round_trip():
    text = emit_report([_row()])
    assert text.endswith("\n") and text.count("\n") == 2
    rec = list(csv.DictReader(io.StringIO(text)))[0]
    assert rec["estimator"] == "rep2" and rec["mean"] == "1.23457" and rec["N"] == "100"


def test_emit_many_rows():
    text = emit_report([_row(i) for i in range(1000)])
    assert len(text.splitlines()) == 1001


def test_zero_paths_gives_empty_report():
    with pytest.warns(RuntimeWarning):
        assert harness.run_pricing(ExperimentConfig(paths=0)) == []


def test_pricing_rows_and_shared_paths():
    cfg = ExperimentConfig(steps=20, paths=300, estimators=("naive", "rep1", "rep2", "mmm", "cond-gauss"),
                           chunk_size=64)
    rows = harness.run_pricing(cfg)
    assert [r.estimator for r in rows] == list(cfg.estimators)
    for r in rows:
        assert r.paths == 300 and r.steps == 20 and r.seed == cfg.seed
        assert all(math.isfinite(v) for v in (r.mean, r.sd, r.stderr, r.runtime_ms))


def test_pricing_near_table_row_at_hundred_steps():
    cfg = ExperimentConfig(steps=100, paths=4000)
    rows = {r.estimator: r for r in harness.run_pricing(cfg)}
    assert abs(rows["rep2"].mean - 1.395) < 3 * rows["rep2"].stderr + 0.03
    assert abs(rows["cond-gauss"].mean - 1.395) < 3 * rows["cond-gauss"].stderr + 0.03


def test_chunking_and_threads_do_not_change_numbers():
    base = ExperimentConfig(steps=16, paths=130, timing=False, estimators=("rep2", "mmm", "cond-gauss"))
    ref = emit_report(harness.run_pricing(base.replace(chunk_size=500), threads=1))
    for chunk, threads in ((7, 1), (32, 3), (130, 2)):
        assert emit_report(harness.run_pricing(base.replace(chunk_size=chunk), threads=threads)) == ref


def test_discounting():
    cfg = ExperimentConfig(steps=10, paths=50, estimators=("rep2",))
    plain = harness.run_pricing(cfg)[0]
    disc = harness.run_pricing(cfg.replace(discount=True))[0]
    assert disc.mean == pytest.approx(plain.mean * math.exp(-0.5))


def test_thread_env(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "4")
    assert harness.resolve_threads() == 4
    assert harness.resolve_threads(2) == 2


def test_failing_path_is_named(monkeypatch):
    real = harness.simulate_bundle

    def flaky(model, grid, seed, indices):
        if 7 in list(indices):
            raise NoConvergence("boom")
        return real(model, grid, seed, indices)

    monkeypatch.setattr(harness, "simulate_bundle", flaky)
    with pytest.raises(NoConvergence, match=r"seed=2024, path=7"):
        harness.run_pricing(ExperimentConfig(steps=4, paths=20, chunk_size=5))


def test_convergence_rejects_incompatible_grids():
    with pytest.raises(GridIncompatible):
        harness.run_convergence_study(ExperimentConfig(), [8, 12], 64, paths=4)


def test_convergence_small():
    rep = harness.run_convergence_study(ExperimentConfig(), [4, 8, 16, 32], 256, paths=40)
    assert np.all(np.diff(rep.err_y) < 0)
    assert rep.band_y[0] <= rep.slope_y <= rep.band_y[1]
    assert "quantity,slope" in harness.convergence_csv(rep)


def test_convergence_brownian_quadrature():
    cfg = ExperimentConfig(kernel="brownian", hurst=(0.5,), backend="quadrature")
    rep = harness.run_convergence_study(cfg, [8, 16, 32, 64, 128], 1024, paths=100)
    assert rep.slope_x >= 0.35


def test_reproduce_table_layout():
    rows = harness.reproduce_table(1, {"paths": 20, "timing": False}, steps=(10, 20))
    assert [(r.estimator, r.hurst, r.steps) for r in rows] == [
        ("rep2", 0.7, 10), ("cond-gauss", 0.7, 10), ("rep2", 0.7, 20), ("cond-gauss", 0.7, 20),
        ("rep2", 0.3, 10), ("cond-gauss", 0.3, 10), ("rep2", 0.3, 20), ("cond-gauss", 0.3, 20),
    ]
    with pytest.raises(ValueError):
        harness.reproduce_table(3)


def test_dump_paths():
    text = harness.dump_paths(ExperimentConfig(steps=4), 2)
    lines = text.splitlines()
    assert lines[0] == "path,asset,t,z,y,x" and len(lines) == 1 + 2 * 5
