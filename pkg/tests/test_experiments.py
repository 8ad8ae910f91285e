import csv
import io
import math

import numpy as np
import pytest

from evtwalk import __version__
from evtwalk.errors import ConfigError, EvtWalkError
from evtwalk.experiments import (
    ExperimentConfig,
    ResultSet,
    ResultTable,
    emit_results,
    format_matrices,
    map_blocks,
    parse_matrices,
    read_config_file,
    run_experiment,
)

SMALL = {
    "torus-evt": {"n": "64", "trajectories": "900"},
    "lattice-evt": {"n": "16", "trajectories": "300", "schedule": "sparse", "a": "4"},
    "excursion-evt": {"n": "32", "trajectories": "300", "tail_samples": "20000"},
    "tail": {"samples": "50000"},
    "dprime": {"n": "64", "trajectories": "10000", "q_list": "2,4"},
    "corr": {"n": "64", "trajectories": "2000", "max_lag": "20"},
    "recurrence": {"trajectories": "10000", "steps": "1,5", "scales": "5,10"},
    "loglaw": {"n": "2000", "trajectories": "6"},
}


def cfg(mode, **kw):
    vals = dict(SMALL[mode])
    vals.update({k: str(v) for k, v in kw.items()})
    vals["mode"] = mode
    return ExperimentConfig.from_sources({}, vals, env={})


def test_matrix_parsing_round_trip():
    m = parse_matrices("2,1;1,1 | 1,1;1,2")
    np.testing.assert_array_equal(m, [[[2, 1], [1, 1]], [[1, 1], [1, 2]]])
    assert format_matrices(m) == "2,1;1,1 | 1,1;1,2"
    with pytest.raises(ValueError):
        parse_matrices("1,2,3;4,5,6")


def test_precedence_cli_over_file_over_defaults(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("# comment\nn = 100\nseed = 7\nr_grid = 0, 1\n", encoding="utf-8")
    file_vals = read_config_file(f)
    c = ExperimentConfig.from_sources(file_vals, {"seed": "9", "mode": "torus-evt"}, env={})
    assert c.n == 100 and c.seed == 9 and c.r_grid == [0.0, 1.0] and c.bits == 64
    c = ExperimentConfig.from_sources(file_vals, {}, env={"EVTWALK_SEED": "123"})
    assert c.seed == 123


def test_config_rejections(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_sources({"colour": "red"}, {}, env={})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_sources({}, {"n": "ten"}, env={})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_sources({}, {"mode": "nonsense"}, env={})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_sources({}, {"generators": "2,0;0,1"}, env={})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_sources({}, {"mode": "lattice-evt", "schedule": "gap", "gap_power": "1"}, env={})
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.cfg")


def test_map_blocks_order_independent():
    fn = lambda t0, k: list(range(t0, t0 + k))
    a = map_blocks(fn, 1000, 37, 1)
    b = map_blocks(fn, 1000, 37, 4)
    assert a == b and sum(a, []) == list(range(1000))


def test_csv_format():
    t = ResultTable("x", {"a": np.array([1.0 / 3, 2.0]), "b": [1, 2]})
    text = t.to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["a", "b"]
    assert float(rows[1][0]) == 1.0 / 3 and rows[1][0] == "0.33333333333333331"
    assert rows[2] == ["2", "2"]
    with pytest.raises(ValueError):
        ResultTable("bad", {"a": [1], "b": [1, 2]})


def test_torus_evt_table_and_meta(tmp_path):
    res = run_experiment(cfg("torus-evt"))
    t = res.table("evt_cdf")
    assert list(t.columns)[:5] == ["r", "u_n", "F_hat", "stderr", "F_limit"]
    assert t.columns["F_limit"][2] == pytest.approx(0.72737, abs=1e-5)
    assert t.columns["u_n"][2] == pytest.approx(math.log(64) / 2)
    paths = emit_results(res, tmp_path / "out")
    names = sorted(p.name for p in paths)
    assert names == ["evt_cdf.csv", "meta.txt"]
    meta = dict(line.split("=", 1) for line in (tmp_path / "out" / "meta.txt").read_text().splitlines())
    assert meta["version"] == __version__
    # every config knob is echoed
    for key, _ in ExperimentConfig().as_items():
        assert key in meta
    assert meta["generators_resolved"] == "2,1;1,1 | 1,1;1,2"


def test_emit_refuses_rerun_and_empty(tmp_path):
    res = run_experiment(cfg("torus-evt", trajectories=10))
    emit_results(res, tmp_path)
    with pytest.raises(FileExistsError):
        emit_results(res, tmp_path)
    emit_results(res, tmp_path, force=True)
    with pytest.raises(EvtWalkError):
        emit_results(ResultSet([], {}), tmp_path / "e")


@pytest.mark.parametrize("mode", list(SMALL))
def test_every_mode_runs_and_is_worker_independent(mode):
    a = run_experiment(cfg(mode))
    b = run_experiment(cfg(mode, workers=3, block=77))
    assert [t.name for t in a.tables] == [t.name for t in b.tables]
    for ta, tb in zip(a.tables, b.tables):
        assert ta.n_rows > 0
        assert ta.to_csv() == tb.to_csv()


def test_lattice_evt_curves():
    res = run_experiment(cfg("lattice-evt", lam=0.5, c0=0.2, r_grid="0"))
    t = res.table("evt_cdf")
    assert t.columns["F_limit"][0] == pytest.approx(math.exp(-3 / math.pi))
    assert t.columns["F_upper"][0] >= t.columns["F_limit"][0]
    assert "w_of_a_displayed" in res.meta and res.meta["block_product_length"] == "8"


def test_lattice_gap_and_d3_runs():
    res = run_experiment(cfg("lattice-evt", schedule="gap", n=8, r_grid="0"))
    assert res.table("evt_cdf").columns["F_limit"][0] == pytest.approx(math.exp(-3 / math.pi))
    res = run_experiment(cfg("lattice-evt", d=3, n=8, trajectories=50, burn_in=50, schedule="full"))
    assert res.meta["block_product_length"] == "1"
    assert float(res.meta["max_det_drift"]) < 1e-6


def test_corr_reports_status():
    res = run_experiment(cfg("corr"))
    assert res.table("corr_fit").columns["status"][0] in ("resolved", "no_decay_resolved")


def test_recurrence_table():
    t = run_experiment(cfg("recurrence")).table("recurrence")
    assert list(t.columns["i"]) == [1, 1, 5, 5]
    assert t.columns["p_equidistributed"][1] == pytest.approx(math.pi / 100)
