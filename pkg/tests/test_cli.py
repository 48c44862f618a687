"""Command-level runs at smoke scale: files, exit codes, reproducibility."""
import json
import math

import numpy as np
import pytest

from latticebath.cli import build_parser, main, resolve_config
from latticebath.config import ConfigError, make_config, validate
from latticebath.materials import derive_parameters, get_material
from latticebath.observables import free_packet_xi


def read_csv(path: str) -> dict[str, list]:
    lines = [ln for ln in open(path).read().splitlines()
             if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    cols: dict[str, list] = {h: [] for h in header}
    for ln in lines[1:]:
        for h, cell in zip(header, ln.split(",")):
            try:
                cols[h].append(float(cell))
            except ValueError:
                cols[h].append(cell)
    return cols


def write_ini(tmp_path, text: str) -> str:
    path = tmp_path / "cfg.ini"
    path.write_text(text)
    return str(path)


NO_PNG = "[output]\nformats = csv, json\n"


class TestParserAndResolution:
    def test_unknown_command_exits(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["calibrate"])

    def test_env_beats_ini_flags_beat_env(self, monkeypatch, tmp_path):
        ini = write_ini(tmp_path, "[output]\ndirectory = from_ini\n")
        monkeypatch.setenv("LATTICEBATH_OUT", "from_env")
        monkeypatch.setenv("LATTICEBATH_THREADS", "3")
        args = build_parser().parse_args(
            ["pt-benchmark", "--config", ini])
        cfg = resolve_config(args)
        assert cfg.out_dir == "from_env"
        assert cfg.max_parallel == 3
        args = build_parser().parse_args(
            ["pt-benchmark", "--config", ini, "--out", "from_flag",
             "--threads", "2"])
        cfg = resolve_config(args)
        assert cfg.out_dir == "from_flag"
        assert cfg.max_parallel == 2

    def test_bad_thread_flag(self):
        args = build_parser().parse_args(["pt-benchmark", "--threads", "0"])
        with pytest.raises(ConfigError):
            resolve_config(args)

    def test_seed_flag_overrides(self):
        args = build_parser().parse_args(["pt-benchmark", "--seed", "77"])
        assert resolve_config(args).master_seed == 77


class TestPtBenchmark:
    def test_run_and_rerun_byte_identical(self, tmp_path):
        ini = write_ini(tmp_path, NO_PNG)
        out = str(tmp_path / "out")
        argv = ["pt-benchmark", "--preset", "smoke", "--config", ini,
                "--out", out]
        assert main(argv) == 0
        csv_path = f"{out}/pt_benchmark.csv"
        first = open(csv_path, "rb").read()
        cols = read_csv(csv_path)
        assert list(cols) == ["T_K", "inv_tau_full_per_fs",
                              "inv_tau_mf_per_fs", "R", "err_est"]
        assert len(cols["T_K"]) == 6
        full = np.array(cols["inv_tau_full_per_fs"])
        mf = np.array(cols["inv_tau_mf_per_fs"])
        ratio = np.array(cols["R"])
        assert np.all(full >= mf) and np.all(mf > 0)
        assert np.all((ratio > 0) & (ratio <= 1))
        assert main(argv) == 0
        assert open(csv_path, "rb").read() == first
        manifest = json.load(open(f"{out}/pt_benchmark.manifest.json"))
        assert manifest["command"] == "pt-benchmark"
        assert manifest["config_hash"] in open(csv_path).read()

    def test_png_rendered_by_default(self, tmp_path):
        out = str(tmp_path / "out")
        assert main(["pt-benchmark", "--preset", "smoke", "--out", out]) == 0
        png = open(f"{out}/pt_benchmark.png", "rb").read()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"


class TestNoiseValidate:
    INI = ("[ensemble]\nn_realizations = 150\nmaster_seed = 9\n"
           "[time]\nn_steps = 96\n" + NO_PNG)

    def test_pass_exit_zero(self, tmp_path):
        ini = write_ini(tmp_path, self.INI)
        out = str(tmp_path / "out")
        assert main(["noise-validate", "--config", ini, "--out", out]) == 0
        manifest = json.load(open(f"{out}/noise_validate.manifest.json"))
        assert manifest["passed"] is True
        assert manifest["worst_z"] < 3.0
        cols = read_csv(f"{out}/noise_validate.csv")
        n_checks = len(set(cols["check"]))
        assert len(cols["lag"]) == n_checks * (manifest["max_lag"] + 1)
        assert max(abs(z) for z in cols["z"]) == pytest.approx(
            manifest["worst_z"])

    def test_corrupted_kernel_fails(self, tmp_path):
        ini = write_ini(tmp_path, self.INI)
        out = str(tmp_path / "out")
        rc = main(["noise-validate", "--config", ini, "--out", out,
                   "--corrupt-kernel"])
        assert rc == 1
        manifest = json.load(open(f"{out}/noise_validate.manifest.json"))
        assert manifest["passed"] is False
        assert manifest["worst_z"] > 3.0

    def test_too_few_realizations_is_config_error(self, tmp_path):
        out = str(tmp_path / "out")
        rc = main(["noise-validate", "--preset", "smoke", "--out", out])
        assert rc == 2


class TestRelaxSweep:
    def test_requires_temperature_list(self, tmp_path):
        out = str(tmp_path / "out")
        assert main(["relax-sweep", "--preset", "smoke", "--out", out]) == 2

    def test_smoke_sweep_and_byte_identical_rerun(self, tmp_path):
        ini = write_ini(tmp_path,
                        "[physics]\nt_list_K = 170.0, 350.0\n" + NO_PNG)
        out = str(tmp_path / "out")
        argv = ["relax-sweep", "--preset", "smoke", "--config", ini,
                "--out", out]
        assert main(argv) == 0
        csv_path = f"{out}/relax_sweep.csv"
        first = open(csv_path, "rb").read()
        cols = read_csv(csv_path)
        assert cols["T_K"] == [170.0, 350.0]
        assert all(ok == 1 for ok in cols["fit_ok_st"])
        assert all(v > 0 for v in cols["inv_tau_st_per_fs"])
        assert all(0 < r <= 1 for r in cols["ratio_pt"])
        manifest = json.load(open(f"{out}/relax_sweep.manifest.json"))
        assert manifest["aborted"] is None
        assert manifest["rows_written"] == 2
        assert main(argv) == 0
        assert open(csv_path, "rb").read() == first

    def test_zero_coupling_reports_fit_failure_everywhere(self, tmp_path):
        ini = write_ini(tmp_path, (
            "[material]\nE_d_eV = 0.0\n"
            "[physics]\nnoise_enabled = no\nt_list_K = 170.0, 350.0\n"
            + NO_PNG))
        out = str(tmp_path / "out")
        assert main(["relax-sweep", "--preset", "smoke", "--config", ini,
                     "--out", out]) == 0
        cols = read_csv(f"{out}/relax_sweep.csv")
        assert all(ok == 0 for ok in cols["fit_ok_st"])
        assert all(math.isnan(v) for v in cols["inv_tau_st_per_fs"])
        assert all(v == 0.0 for v in cols["pt_inv_tau_full_per_fs"])

    def test_mid_sweep_failure_preserves_partial_rows(self, tmp_path):
        # dt legal at the first temperature, above the bound at the second
        base = dict(grid_n=16, box_length=12.0, q_cut_fraction=0.3,
                    k0=(0.0, 0.0), sigma_nm=1.6, window_fs=0.5,
                    n_realizations=2, batch_size=2,
                    material_overrides={"E_d_eV": 100.0})
        bound_cold = validate(make_config(**base), 50.0).dt_bound_fs
        bound_hot = validate(make_config(**base), 1000.0).dt_bound_fs
        assert bound_hot < bound_cold
        dt = 0.5 * (bound_hot + bound_cold)
        ini = write_ini(tmp_path, (
            "[material]\nE_d_eV = 100.0\n"
            "[grid]\nn = 16\nlength_nm = 12.0\n"
            f"[time]\ndt_fs = {dt!r}\nwindow_fs = 0.5\n"
            "[ensemble]\nn_realizations = 2\nbatch_size = 2\n"
            "[physics]\nq_cut_fraction = 0.3\nk0 = 0.0, 0.0\n"
            "sigma_nm = 1.6\nt_list_K = 50.0, 1000.0\n" + NO_PNG))
        out = str(tmp_path / "out")
        rc = main(["relax-sweep", "--config", ini, "--out", out])
        assert rc == 2
        cols = read_csv(f"{out}/relax_sweep.csv")
        assert cols["T_K"] == [50.0]
        manifest = json.load(open(f"{out}/relax_sweep.manifest.json"))
        assert manifest["rows_written"] == 1
        assert "stability" in manifest["aborted"]


class TestSpreadSweep:
    def test_zero_coupling_matches_free_packet(self, tmp_path):
        ini = write_ini(tmp_path, (
            "[material]\nE_d_eV = 0.0\n"
            "[physics]\nnoise_enabled = no\nt_list_K = 300.0\n" + NO_PNG))
        out = str(tmp_path / "out")
        assert main(["spread-sweep", "--preset", "smoke", "--config", ini,
                     "--out", out]) == 0
        cols = read_csv(f"{out}/spread_sweep.csv")
        assert cols["material"] == ["copper", "bi2212"]
        for i, name in enumerate(cols["material"]):
            setup = validate(make_config(
                preset="smoke", material_name=name,
                material_overrides={"E_d_eV": 0.0}, noise_enabled=False,
                t_list_K=(300.0,)), temperature_K=300.0)
            expected = free_packet_xi(setup.window_fs, setup.sigma_nm,
                                      setup.derived.mass)
            # smoke box is 4 nm; wrap tails cost a few 1e-3 in xi
            assert cols["xi_st_nm"][i] == pytest.approx(expected, rel=1e-2)
            assert cols["xi_mf_nm"][i] == cols["xi_st_nm"][i]
            assert cols["t_debye_K"][i] == pytest.approx(
                setup.derived.t_debye_K)
            assert cols["t_over_td"][i] == pytest.approx(
                300.0 / setup.derived.t_debye_K)
        # the copper packet drifts at k_fermi, so raw box moments pick up
        # wrap-around inflation that the circular-harmonic estimate avoids
        cu = cols["material"].index("copper")
        setup = validate(make_config(
            preset="smoke", material_overrides={"E_d_eV": 0.0},
            noise_enabled=False), temperature_K=300.0)
        expected = free_packet_xi(setup.window_fs, setup.sigma_nm,
                                  setup.derived.mass)
        assert (abs(cols["xi_st_raw_nm"][cu] - expected)
                > abs(cols["xi_st_nm"][cu] - expected))


class TestDefpotStats:
    def test_smoke_report(self, tmp_path):
        ini = write_ini(tmp_path, NO_PNG)
        out = str(tmp_path / "out")
        assert main(["defpot-stats", "--preset", "smoke", "--config", ini,
                     "--out", out]) == 0
        cols = read_csv(f"{out}/defpot_stats.csv")
        assert len(cols["draw"]) == 4        # smoke ensemble size
        assert all(v >= 0 for v in cols["rms_eV"])
        manifest = json.load(open(f"{out}/defpot_stats.manifest.json"))
        # 2D acoustic disorder variance scales as T^3 at low T
        assert manifest["lowt_exponent"] == pytest.approx(3.0, abs=0.3)
        assert manifest["quadrature_rms_ev"] > 0
        assert manifest["dense_mode_check"]["violated"] is False
        assert manifest["n_modes"] < 300     # smoke box is sparse
