import math
import os

import numpy as np
import pytest

from rborch.cli import main
from rborch.config import ConfigError, load_config, parse_source, save_config
from rborch.near_rt import ServiceSpec
from rborch.sim import AnomalyConfig, ScenarioConfig
from rborch.traces import SyntheticModel

BASE_CFG = """
[scenario]
n_cell = 12
horizon = 2600
t_obs = 1500
t_out = 1000
controller = marea
seed = 5

[service.0]
w_th_ms = 5
epsilon = 1e-3
arrival = two-point 0:0.5 200:0.5
channel = constant 25

[service.1]
w_th_ms = 10
epsilon = 1e-3
arrival = constant 60
channel = constant 25
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "scenario.cfg"
    p.write_text(BASE_CFG)
    return str(p)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestConfig:
    def test_load(self, cfg_file):
        cfg = load_config(cfg_file)
        assert cfg.n_cell == 12 and len(cfg.services) == 2
        assert cfg.services[0].arrival.kind == "two-point"

    def test_roundtrip(self, tmp_path):
        cfg = ScenarioConfig(
            n_cell=20,
            horizon=6000,
            services=[
                ServiceSpec(0, 5.0, 1e-4,
                            SyntheticModel("empirical-table", (0, 10, 500), (0.25, 0.5, 0.25)),
                            SyntheticModel("uniform-integer", (20, 30))),
                ServiceSpec(1, 12.0, 1e-3,
                            SyntheticModel("constant", (90,)),
                            SyntheticModel("constant", (25,))),
            ],
            controller="ref4",
            estimator="gmm",
            eta=0.6,
            tau=0.2,
            seed=17,
            anomaly=AnomalyConfig(1, 4500, 5000, 2.5),
        )
        path = str(tmp_path / "rt.cfg")
        save_config(cfg, path)
        back = load_config(path)
        assert back.n_cell == cfg.n_cell and back.controller == cfg.controller
        assert back.estimator == "gmm" and back.eta == 0.6 and back.tau == 0.2
        assert back.anomaly == cfg.anomaly
        assert back.services == cfg.services

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/nope.cfg")

    def test_source_parsing(self):
        m = parse_source("two-point 0:0.25 100:0.75")
        assert m.values == (0, 100) and m.probs == (0.25, 0.75)
        with pytest.raises(ConfigError):
            parse_source("waffles 3")
        with pytest.raises(ConfigError):
            parse_source("two-point 0:0.5 1:0.6")

    def test_bad_sections(self, tmp_path):
        p = tmp_path / "broken.cfg"
        p.write_text("[scenario]\nn_cell = 5\n")
        with pytest.raises(ConfigError):
            load_config(str(p))


class TestRunCommand:
    def test_run_writes_outputs(self, cfg_file, tmp_path):
        out = str(tmp_path / "out")
        assert main(["run", "--config", cfg_file, "--out", out]) == 0
        for f in ("summary.csv", "ccdf.csv", "alloc.csv"):
            assert os.path.exists(os.path.join(out, f))
        header = read(os.path.join(out, "summary.csv")).splitlines()[0]
        assert header.startswith(b"service_id,packets")

    def test_byte_identical_reruns(self, cfg_file, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["run", "--config", cfg_file, "--seed", "7", "--out", out1]) == 0
        assert main(["run", "--config", cfg_file, "--seed", "7", "--out", out2]) == 0
        for f in ("summary.csv", "ccdf.csv", "alloc.csv"):
            assert read(os.path.join(out1, f)) == read(os.path.join(out2, f))

    def test_missing_config_exit_1(self, tmp_path, capsys):
        rc = main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "nope.cfg" in capsys.readouterr().err

    def test_no_silent_overwrite(self, cfg_file, tmp_path):
        out = str(tmp_path / "out")
        assert main(["run", "--config", cfg_file, "--out", out]) == 0
        assert main(["run", "--config", cfg_file, "--out", out]) == 1
        assert main(["run", "--config", cfg_file, "--out", out, "--overwrite"]) == 0

    def test_controller_flag_overrides(self, cfg_file, tmp_path):
        out = str(tmp_path / "out")
        assert main(["run", "--config", cfg_file, "--out", out, "--controller", "ref1"]) == 0
        # ref1 never invokes the allocator, so alloc.csv holds only a header
        assert read(os.path.join(out, "alloc.csv")).splitlines() == [b"period,service_id,n_min,w_est_ms,objective"]

    def test_bad_controller_flag(self, cfg_file, tmp_path):
        assert main(["run", "--config", cfg_file, "--out", str(tmp_path / "o"), "--controller", "x"]) == 1


class TestSweepCommand:
    def test_sweep_axes(self, cfg_file, tmp_path):
        out = str(tmp_path / "sweep")
        rc = main([
            "sweep", "--config", cfg_file, "--out", out,
            "--axis", "seed=1,2", "--axis", "controller=marea,ref3",
        ])
        assert rc == 0
        idx = read(os.path.join(out, "index.csv")).decode().splitlines()
        assert idx[0] == "run_id,seed,controller,out_dir,status"
        assert len(idx) == 5
        for i in range(4):
            assert os.path.exists(os.path.join(out, f"run_{i:03d}", "summary.csv"))

    def test_sweep_requires_axis(self, cfg_file, tmp_path):
        assert main(["sweep", "--config", cfg_file, "--out", str(tmp_path / "s")]) == 1

    def test_sweep_bad_axis_name(self, cfg_file, tmp_path):
        rc = main(["sweep", "--config", cfg_file, "--out", str(tmp_path / "s"),
                   "--axis", "bogus=1,2"])
        assert rc == 1

    def test_sweep_parallel_matches_serial(self, cfg_file, tmp_path):
        a, b = str(tmp_path / "ser"), str(tmp_path / "par")
        assert main(["sweep", "--config", cfg_file, "--out", a, "--axis", "seed=1,2"]) == 0
        assert main(["sweep", "--config", cfg_file, "--out", b, "--axis", "seed=1,2", "--jobs", "2"]) == 0
        for i in range(2):
            assert read(os.path.join(a, f"run_{i:03d}", "summary.csv")) == read(
                os.path.join(b, f"run_{i:03d}", "summary.csv")
            )


SINGLE_CFG = """
[scenario]
n_cell = 10
horizon = 2600
t_obs = 1500
t_out = 1000
seed = 5

[service.0]
w_th_ms = 8
epsilon = 1e-3
arrival = two-point 0:0.5 150:0.5
channel = constant 25
"""


class TestValidateModel:
    @pytest.fixture
    def single_cfg(self, tmp_path):
        p = tmp_path / "single.cfg"
        p.write_text(SINGLE_CFG)
        return str(p)

    def test_grid_rows_and_inf(self, single_cfg, tmp_path):
        out = str(tmp_path / "v")
        rc = main([
            "validate-model", "--config", single_cfg, "--out", out,
            "--n-min-grid", "2,4,8", "--t-obs-grid", "500,1000",
            "--runs", "2", "--run-ttis", "20000",
        ])
        assert rc == 0
        lines = read(os.path.join(out, "validate.csv")).decode().splitlines()
        assert lines[0] == "n_min,t_obs,W_model_ms,W_measured_ms,rel_err"
        assert len(lines) == 1 + 3 * 2
        by_nmin = {l.split(",")[0] for l in lines[1:]}
        assert by_nmin == {"2", "4", "8"}
        # n_min=2 gives 50 bits/TTI vs mean 75: under-provisioned -> inf
        for line in lines[1:]:
            cells = line.split(",")
            if cells[0] == "2":
                assert cells[2] == "inf"

    def test_capacity_dominates_small_rel_err(self, tmp_path):
        p = tmp_path / "det.cfg"
        p.write_text(SINGLE_CFG.replace("two-point 0:0.5 150:0.5", "constant 100"))
        out = str(tmp_path / "v2")
        rc = main([
            "validate-model", "--config", str(p), "--out", out,
            "--n-min-grid", "5,8", "--t-obs-grid", "500",
            "--runs", "1", "--run-ttis", "5000",
        ])
        assert rc == 0
        lines = read(os.path.join(out, "validate.csv")).decode().splitlines()[1:]
        for line in lines:
            cells = line.split(",")
            assert float(cells[4]) <= 1e-2

    def test_multi_service_rejected(self, cfg_file, tmp_path):
        rc = main(["validate-model", "--config", cfg_file, "--out", str(tmp_path / "v")])
        assert rc == 1


TRIPLE_CFG = """
[scenario]
n_cell = 30
horizon = 3100
t_obs = 2000
t_out = 1000
seed = 9

[service.0]
w_th_ms = 5
epsilon = 1e-5
arrival = empirical-table 0:0.6 100:0.3 1000:0.1
channel = constant 25

[service.1]
w_th_ms = 10
epsilon = 1e-4
arrival = empirical-table 0:0.7 100:0.2 900:0.1
channel = constant 20

[service.2]
w_th_ms = 15
epsilon = 1e-3
arrival = empirical-table 0:0.65 80:0.2 1000:0.15
channel = constant 30
"""


class TestTable1:
    @pytest.fixture
    def triple_cfg(self, tmp_path):
        p = tmp_path / "triple.cfg"
        p.write_text(TRIPLE_CFG)
        return str(p)

    def test_emits_counts_and_errors(self, triple_cfg, tmp_path):
        out = str(tmp_path / "t")
        rc = main(["table1", "--config", triple_cfg, "--out", out, "--n-cell-grid", "20,25"])
        assert rc == 0
        lines = read(os.path.join(out, "table1.csv")).decode().splitlines()
        assert lines[0] == "n_cell,heuristic_objective,brute_objective,rel_err,heuristic_iterations,brute_iterations"
        rows = [l.split(",") for l in lines[1:]]
        assert [r[0] for r in rows] == ["20", "25"]
        assert int(rows[0][5]) == 171  # C(19,2)
        assert int(rows[1][5]) == 276  # C(24,2)
        assert all(r[3] == "0" for r in rows)  # heuristic matches brute force

    def test_small_cell_rejected(self, triple_cfg, tmp_path):
        rc = main(["table1", "--config", triple_cfg, "--out", str(tmp_path / "t"), "--n-cell-grid", "2"])
        assert rc == 1


class TestCsvFormatting:
    def test_nine_significant_digits_and_inf(self):
        from rborch.cli import _fmt

        assert _fmt(math.pi) == "3.14159265"
        assert _fmt(float("inf")) == "inf"
        assert _fmt(0.05 * 7 - 1.0 + 0.7) == "0.05"  # fp noise trimmed at 9 digits
        assert _fmt(42) == "42"
        assert _fmt(True) == "true"
