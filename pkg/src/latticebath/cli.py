"""Command-line orchestration of the experiment families.

Subcommands: relax-sweep, spread-sweep, noise-validate, pt-benchmark,
defpot-stats. Configuration precedence, lowest to highest: built-in
defaults, --preset, --config INI file, environment (LATTICEBATH_OUT,
LATTICEBATH_THREADS), explicit flags (--seed, --out, --threads).

Every command writes CSV (fixed formatting, config hash in the header,
byte-identical on re-run), a JSON manifest (seeds, divergence counts, wall
time; written atomically), and, when 'png' is among the configured output
formats, a rendered figure next to the CSV.

Exit codes: 0 success; 1 a computed-data validation failed (noise
statistics off target, dense-mode RMS off the quadrature); 2 configuration
or runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
import time

import numpy as np

from .bath import ModeSetError, deformation_field, sample_thermal
from .config import (
    ConfigError,
    RunConfig,
    apply_env_overrides,
    hash_of,
    make_config,
    validate,
)
from .grid import GridError
from .materials import (
    MaterialError,
    fs_to_internal,
    internal_to_fs,
    kelvin_to_ev,
    rms_deformation,
)
from .noise import NoiseError, generate_mode_ensemble, validate_statistics
from .observables import ObservableError, fit_relaxation, spread_xi
from .perturbation import QuadratureError, rate_sweep
from .propagator import EnsembleError, PropagationError, run_ensemble
from .reporting import (
    CsvWriter,
    ReportError,
    make_manifest,
    write_csv,
    write_json_atomic,
)

_KNOWN_ERRORS = (ConfigError, MaterialError, GridError, ModeSetError,
                 NoiseError, ObservableError, PropagationError,
                 EnsembleError, QuadratureError, ReportError)

_PT_T_FACTORS = (0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
_SPREAD_T_FACTORS = (0.2, 0.5, 1.0, 2.0)
_SPREAD_MATERIALS = ("copper", "bi2212")


def _out_paths(cfg: RunConfig, stem: str) -> tuple[str, str, str]:
    os.makedirs(cfg.out_dir, exist_ok=True)
    base = os.path.join(cfg.out_dir, stem)
    return base + ".csv", base + ".png", base + ".manifest.json"


def _inv_tau(fit) -> float:
    return 1.0 / fit.tau_fs if fit.ok else math.nan


def _fit_px(series):
    return fit_relaxation(series.t_fs, series.px.real)


def _pair_of_runs(cfg: RunConfig, temperature: float) -> tuple:
    """Stochastic ensemble and its mean-field control at one temperature."""
    st_setup = validate(cfg, temperature_K=temperature)
    mf_setup = validate(dataclasses.replace(cfg, noise_enabled=False),
                        temperature_K=temperature)
    return run_ensemble(st_setup), run_ensemble(mf_setup), st_setup, mf_setup


def cmd_relax_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    if not cfg.t_list_K:
        raise ConfigError(
            "relax-sweep needs temperatures: set [physics] t_list_K")
    t0 = time.perf_counter()
    probe = validate(cfg, temperature_K=cfg.t_list_K[0])
    q_max = cfg.q_cut_fraction * probe.derived.q_debye
    csv_path, png_path, man_path = _out_paths(cfg, "relax_sweep")

    columns = ("T_K", "inv_tau_st_per_fs", "inv_tau_mf_per_fs",
               "pt_inv_tau_full_per_fs", "pt_inv_tau_mf_per_fs",
               "ratio_sim", "ratio_pt", "fit_ok_st", "fit_ok_mf",
               "n_div_st", "n_div_mf", "config_hash_st", "config_hash_mf")
    rows: list[dict] = []
    aborted: str | None = None
    writer = CsvWriter(csv_path, columns, meta={
        "command": "relax-sweep", "config_hash": probe.config_hash,
        "pt_q_max_per_nm": format(q_max, ".17e")})
    n_div_total = 0
    try:
        for temp in cfg.t_list_K:
            st, mf, st_setup, mf_setup = _pair_of_runs(cfg, temp)
            fit_st, fit_mf = _fit_px(st.series), _fit_px(mf.series)
            pt_full = rate_sweep(st_setup.material, [temp], q_max=q_max)[0]
            inv_st, inv_mf = _inv_tau(fit_st), _inv_tau(fit_mf)
            n_div_total += st.n_divergent + mf.n_divergent
            row = {
                "T_K": temp,
                "inv_tau_st_per_fs": inv_st,
                "inv_tau_mf_per_fs": inv_mf,
                "pt_inv_tau_full_per_fs": pt_full.inv_tau_full_per_fs,
                "pt_inv_tau_mf_per_fs": pt_full.inv_tau_mf_per_fs,
                "ratio_sim": inv_mf / inv_st if inv_st else math.nan,
                "ratio_pt": pt_full.ratio,
                "fit_ok_st": fit_st.ok, "fit_ok_mf": fit_mf.ok,
                "n_div_st": st.n_divergent, "n_div_mf": mf.n_divergent,
                "config_hash_st": st_setup.config_hash,
                "config_hash_mf": mf_setup.config_hash,
            }
            writer.add_row([row[c] for c in columns])
            rows.append(row)
    except _KNOWN_ERRORS as exc:
        aborted = f"{type(exc).__name__}: {exc}"
    finally:
        writer.close()

    manifest = make_manifest(
        "relax-sweep", probe.config_hash, cfg.master_seed,
        cfg.n_realizations, n_div_total, time.perf_counter() - t0,
        temperatures_K=list(cfg.t_list_K[:len(rows)]),
        rows_written=len(rows), aborted=aborted)
    write_json_atomic(man_path, manifest)
    if aborted is not None:
        print(f"relax-sweep aborted after {len(rows)} rows: {aborted}",
              file=sys.stderr)
        return 2
    if "png" in cfg.formats and rows:
        from . import plotting

        def col(name: str) -> np.ndarray:
            return np.array([r[name] for r in rows])

        t_K = col("T_K")
        plotting.plot_relax_sweep(
            t_K,
            {"sim st": col("inv_tau_st_per_fs"),
             "sim mf": col("inv_tau_mf_per_fs"),
             "pt full": col("pt_inv_tau_full_per_fs"),
             "pt mf": col("pt_inv_tau_mf_per_fs")},
            {"sim": col("ratio_sim"), "pt": col("ratio_pt")},
            probe.derived.t_debye_K, png_path)
    print(f"relax-sweep: {len(rows)} temperatures -> {csv_path}")
    return 0


def cmd_spread_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    csv_path, png_path, man_path = _out_paths(cfg, "spread_sweep")
    columns = ("material", "T_K", "t_over_td", "t_debye_K",
               "xi_st_nm", "xi_mf_nm", "xi_st_raw_nm", "xi_mf_raw_nm",
               "n_div_st", "n_div_mf", "config_hash_st", "config_hash_mf")
    rows: list[dict] = []
    aborted: str | None = None
    per_material: dict[str, dict] = {}
    n_div_total = 0
    writer: CsvWriter | None = None
    base_hash = ""
    try:
        # material overrides (such as E_d_eV = 0) apply to both materials
        for name in _SPREAD_MATERIALS:
            mcfg = dataclasses.replace(cfg, material_name=name)
            probe = validate(mcfg)
            if writer is None:
                base_hash = probe.config_hash
                writer = CsvWriter(csv_path, columns, meta={
                    "command": "spread-sweep", "config_hash": base_hash})
            t_debye = probe.derived.t_debye_K
            temps = (cfg.t_list_K if cfg.t_list_K
                     else tuple(f * t_debye for f in _SPREAD_T_FACTORS))
            mat_rows = {"t_K": [], "xi_st": [], "xi_mf": [],
                        "t_debye_K": t_debye}
            for temp in temps:
                st, mf, st_setup, mf_setup = _pair_of_runs(mcfg, temp)
                window = float(st.series.t_fs[-1])
                xi_st = spread_xi(st.series, window, "wrapsafe")
                xi_mf = spread_xi(mf.series, window, "wrapsafe")
                xi_st_raw = spread_xi(st.series, window, "raw")
                xi_mf_raw = spread_xi(mf.series, window, "raw")
                n_div_total += st.n_divergent + mf.n_divergent
                row = {
                    "material": name, "T_K": temp,
                    "t_over_td": temp / t_debye, "t_debye_K": t_debye,
                    "xi_st_nm": xi_st.xi_nm, "xi_mf_nm": xi_mf.xi_nm,
                    "xi_st_raw_nm": xi_st_raw.xi_nm,
                    "xi_mf_raw_nm": xi_mf_raw.xi_nm,
                    "n_div_st": st.n_divergent, "n_div_mf": mf.n_divergent,
                    "config_hash_st": st_setup.config_hash,
                    "config_hash_mf": mf_setup.config_hash,
                }
                writer.add_row([row[c] for c in columns])
                rows.append(row)
                mat_rows["t_K"].append(temp)
                mat_rows["xi_st"].append(xi_st.xi_nm)
                mat_rows["xi_mf"].append(xi_mf.xi_nm)
            per_material[name] = mat_rows
    except _KNOWN_ERRORS as exc:
        aborted = f"{type(exc).__name__}: {exc}"
    finally:
        if writer is not None:
            writer.close()

    manifest = make_manifest(
        "spread-sweep", base_hash, cfg.master_seed, cfg.n_realizations,
        n_div_total, time.perf_counter() - t0,
        rows_written=len(rows), aborted=aborted,
        materials=list(_SPREAD_MATERIALS))
    write_json_atomic(man_path, manifest)
    if aborted is not None:
        print(f"spread-sweep aborted after {len(rows)} rows: {aborted}",
              file=sys.stderr)
        return 2
    if "png" in cfg.formats and per_material:
        from . import plotting
        plotting.plot_spread_sweep(
            {name: {k: np.asarray(v) if isinstance(v, list) else v
                    for k, v in data.items()}
             for name, data in per_material.items()}, png_path)
    print(f"spread-sweep: {len(rows)} rows -> {csv_path}")
    return 0


def cmd_noise_validate(cfg: RunConfig, args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    if cfg.temperature_K <= 0.0:
        raise ConfigError("noise-validate maps temperature_K to the mode "
                          "energy; it must be positive")
    omega = kelvin_to_ev(cfg.temperature_K)
    dt = fs_to_internal(cfg.dt_fs) if cfg.dt_fs is not None else 0.2 / omega
    n_steps = cfg.n_steps if cfg.n_steps is not None else 256
    max_lag = min(64, n_steps - 1)
    samples = generate_mode_ensemble(omega, dt, n_steps,
                                     cfg.n_realizations, cfg.master_seed)
    if args.corrupt_kernel:
        samples[:, :, 1] *= -1.0    # negative control: break eta_y pairings
    report = validate_statistics(samples, omega, dt, max_lag=max_lag)

    run_hash = hash_of({
        "omega_ev": omega, "dt_internal": dt, "n_steps": n_steps,
        "n_realizations": cfg.n_realizations, "master_seed": cfg.master_seed,
        "max_lag": max_lag, "corrupt": bool(args.corrupt_kernel)})
    csv_path, png_path, man_path = _out_paths(cfg, "noise_validate")
    flat = {"check": [], "lag": [], "target_re": [], "target_im": [],
            "estimate_re": [], "estimate_im": [], "stderr": [], "z": []}
    for check in report.checks:
        for i, lag in enumerate(check.lags):
            flat["check"].append(check.label)
            flat["lag"].append(int(lag))
            flat["target_re"].append(check.target[i].real)
            flat["target_im"].append(check.target[i].imag)
            flat["estimate_re"].append(check.estimate[i].real)
            flat["estimate_im"].append(check.estimate[i].imag)
            flat["stderr"].append(check.stderr[i])
            flat["z"].append(check.z[i])
    write_csv(csv_path, flat, meta={
        "command": "noise-validate", "config_hash": run_hash})

    passed = report.passed(3.0)
    manifest = make_manifest(
        "noise-validate", run_hash, cfg.master_seed, cfg.n_realizations,
        0, time.perf_counter() - t0,
        omega_ev=omega, dt_fs=internal_to_fs(dt), n_steps=n_steps,
        max_lag=max_lag, corrupt=bool(args.corrupt_kernel),
        worst_z=report.worst_z, passed=passed,
        per_check_max_z={c.label: c.max_z for c in report.checks})
    write_json_atomic(man_path, manifest)
    if "png" in cfg.formats:
        from . import plotting
        plotting.plot_noise_report(report, png_path)
    status = "pass" if passed else "FAIL"
    print(f"noise-validate: worst |z| = {report.worst_z:.3f} ({status}) "
          f"-> {csv_path}")
    return 0 if passed else 1


def cmd_pt_benchmark(cfg: RunConfig, args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    setup = validate(cfg)
    t_debye = setup.derived.t_debye_K
    temps = (cfg.t_list_K if cfg.t_list_K
             else tuple(f * t_debye for f in _PT_T_FACTORS))
    rows = rate_sweep(setup.material, temps, max_workers=cfg.max_parallel)

    run_hash = hash_of({
        "material": setup.material.name, "E_d_eV": setup.material.E_d_eV,
        "temperatures_K": list(temps)})
    csv_path, png_path, man_path = _out_paths(cfg, "pt_benchmark")
    write_csv(csv_path, {
        "T_K": [r.temperature_K for r in rows],
        "inv_tau_full_per_fs": [r.inv_tau_full_per_fs for r in rows],
        "inv_tau_mf_per_fs": [r.inv_tau_mf_per_fs for r in rows],
        "R": [r.ratio for r in rows],
        "err_est": [r.err_est for r in rows],
    }, meta={"command": "pt-benchmark", "config_hash": run_hash,
             "material": setup.material.name})
    manifest = make_manifest(
        "pt-benchmark", run_hash, cfg.master_seed, 0, 0,
        time.perf_counter() - t0,
        material=setup.material.name, temperatures_K=list(temps),
        q_max_per_nm=setup.derived.q_debye)
    write_json_atomic(man_path, manifest)
    if "png" in cfg.formats:
        from . import plotting
        plotting.plot_pt_sweep(
            np.array([r.temperature_K for r in rows]),
            np.array([r.inv_tau_full_per_fs for r in rows]),
            np.array([r.inv_tau_mf_per_fs for r in rows]),
            np.array([r.ratio for r in rows]),
            t_debye, png_path)
    print(f"pt-benchmark: {len(rows)} temperatures -> {csv_path}")
    return 0


_DENSE_MODE_COUNT = 300
_RMS_TOLERANCE = 0.05


def cmd_defpot_stats(cfg: RunConfig, args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    setup = validate(cfg)
    temp = setup.temperature_K
    rng = np.random.default_rng(np.random.SeedSequence(cfg.master_seed))
    rms_draws = np.empty(cfg.n_realizations)
    for i in range(cfg.n_realizations):
        amps = sample_thermal(setup.modes, temp, cfg.scheme, rng)
        field = deformation_field(setup.modes, amps, setup.grid, 0.0)
        rms_draws[i] = math.sqrt(float(np.mean(field**2)))
    pooled_rms = math.sqrt(float(np.mean(rms_draws**2)))
    discrete_rms = math.sqrt(setup.modes.mean_square_potential(temp))
    quadrature_rms = rms_deformation(setup.material, temp)
    rel_dev = (abs(pooled_rms - quadrature_rms) / quadrature_rms
               if quadrature_rms > 0 else math.nan)

    # low-T scaling of the disorder variance from the quadrature itself
    t_grid = np.geomspace(0.02, 0.1, 9) * setup.derived.t_debye_K
    dv2 = np.array([rms_deformation(setup.material, t)**2 for t in t_grid])
    exponent = float(np.polyfit(np.log(t_grid), np.log(dv2), 1)[0])

    csv_path, png_path, man_path = _out_paths(cfg, "defpot_stats")
    write_csv(csv_path, {
        "draw": np.arange(cfg.n_realizations), "rms_eV": rms_draws,
    }, meta={"command": "defpot-stats", "config_hash": setup.config_hash,
             "temperature_K": format(temp, ".17e")})
    dense = setup.modes.n_modes >= _DENSE_MODE_COUNT
    violated = bool(dense and quadrature_rms > 0
                    and rel_dev > _RMS_TOLERANCE)
    manifest = make_manifest(
        "defpot-stats", setup.config_hash, cfg.master_seed,
        cfg.n_realizations, 0, time.perf_counter() - t0,
        temperature_K=temp, n_modes=setup.modes.n_modes,
        pooled_rms_ev=pooled_rms, discrete_rms_ev=discrete_rms,
        quadrature_rms_ev=quadrature_rms, rel_dev_vs_quadrature=rel_dev,
        lowt_exponent=exponent,
        lowt_t_range_K=[float(t_grid[0]), float(t_grid[-1])],
        dense_mode_check={"dense": dense, "tolerance": _RMS_TOLERANCE,
                          "violated": violated})
    write_json_atomic(man_path, manifest)
    if "png" in cfg.formats:
        from . import plotting
        plotting.plot_defpot(rms_draws, quadrature_rms, t_grid, dv2,
                             exponent, png_path)
    print(f"defpot-stats: RMS {pooled_rms:.6g} eV vs quadrature "
          f"{quadrature_rms:.6g} eV ({setup.modes.n_modes} modes, "
          f"low-T exponent {exponent:.3f}) -> {csv_path}")
    if violated:
        print(f"defpot-stats: dense-mode RMS deviates {rel_dev:.2%} "
              f"(> {_RMS_TOLERANCE:.0%})", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "relax-sweep": cmd_relax_sweep,
    "spread-sweep": cmd_spread_sweep,
    "noise-validate": cmd_noise_validate,
    "pt-benchmark": cmd_pt_benchmark,
    "defpot-stats": cmd_defpot_stats,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="INI",
                        help="INI file layered over the preset")
    common.add_argument("--preset", choices=("desk", "spread", "smoke"),
                        help="named parameter bundle")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--out", metavar="DIR",
                        help="output directory override")
    common.add_argument("--threads", type=int,
                        help="worker count override (>= 1)")

    parser = argparse.ArgumentParser(
        prog="latticebath",
        description="Stochastic wavepacket dynamics in a thermal "
                    "acoustic lattice")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "relax-sweep": "momentum relaxation vs temperature: stochastic, "
                       "mean-field, and golden-rule rates",
        "spread-sweep": "time-averaged spatial spread vs temperature for "
                        "both materials",
        "noise-validate": "empirical noise covariances against the "
                          "analytic kernels",
        "pt-benchmark": "golden-rule rate sweep over the full mode sphere",
        "defpot-stats": "sampled deformation-field RMS against the "
                        "disorder quadrature",
    }
    for name in _COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "noise-validate":
            p.add_argument("--corrupt-kernel", action="store_true",
                           help="negative control: flip one noise "
                                "component before checking")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = make_config(preset=args.preset, ini_path=args.config)
    cfg = apply_env_overrides(cfg)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError(f"--threads must be >= 1, got {args.threads}")
        cfg.max_parallel = args.threads
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _COMMANDS[args.command](cfg, args)
    except _KNOWN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
