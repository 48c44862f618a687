"""Run configuration: INI schema, presets, validation, hashing.

A RunConfig is the raw user-facing record (what an INI file or CLI flags
express). validate() resolves it against the material tables and grid
constraints into a frozen RunSetup carrying everything the engine needs:
material, derived scales, grid, mode set, time step, and a 12-hex-digit
hash of the result-determining fields. Reruns with equal hashes produce
byte-identical outputs.

The time step, when not given, is chosen from a conservative stability
heuristic: dt = 0.1 * min(1 / V_scale, 2 m / k_max^2) in internal units,
where V_scale is the thermal potential RMS plus three noise standard
deviations and k_max^2 = 2 (pi N / L)^2 bounds the kinetic phase across
the grid corner. An explicit dt above the heuristic bound is rejected.

Environment overrides are deliberately narrow: LATTICEBATH_OUT replaces
the output directory and LATTICEBATH_THREADS the worker count. Nothing
else is read from the environment, so a config file plus seed pins the
physics completely.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from .bath import THERMAL_SCHEMES, ModeSet, enumerate_modes
from .grid import Grid2D
from .materials import (
    DerivedScales,
    Material,
    derive_parameters,
    fs_to_internal,
    get_material,
    internal_to_fs,
    rms_deformation,
)

ENV_OUT = "LATTICEBATH_OUT"
ENV_THREADS = "LATTICEBATH_THREADS"

_MATERIAL_OVERRIDE_KEYS = ("m_eff", "v_s_m_per_s", "a_nm", "E_d_eV", "rho_kg_per_m3")
_FORMATS = ("csv", "json", "png")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    material_name: str = "copper"
    material_overrides: dict[str, float] = field(default_factory=dict)
    grid_n: int = 256
    box_length: float = 12.0
    dt_fs: float | None = None          # None: stability heuristic
    n_steps: int | None = None          # None: ceil(window_fs / dt_fs)
    window_fs: float = 60.0
    record_stride: int = 8
    n_realizations: int = 100
    master_seed: int = 2026
    max_parallel: int = 1
    batch_size: int = 16
    temperature_K: float = 300.0
    t_list_K: tuple[float, ...] = ()
    scheme: str = "random-phase"
    feedback: bool = False
    noise_enabled: bool = True
    q_cut_fraction: float = 1.0
    sigma_nm: float | None = None       # None: 0.02 * box_length
    k0: tuple[float, float] | None = None    # None: (k_fermi, 0)
    center: tuple[float, float] | None = None
    blowup_bound: float = 1e3
    out_dir: str = "runs"
    formats: tuple[str, ...] = ("csv", "json", "png")


PRESETS: dict[str, dict] = {
    # Relaxation workhorse: small box, most of the Debye sphere, dense modes.
    # Window ~ 1.3 tau at the Debye temperature; long enough for rate fits,
    # short enough that 500 realizations stay under half an hour and the
    # ensemble overlap keeps Monte Carlo error well inside a 0.1 band.
    "desk": {
        "grid_n": 32, "box_length": 7.5, "q_cut_fraction": 0.8,
        "sigma_nm": 1.0, "window_fs": 30.0, "record_stride": 8,
        "n_realizations": 500, "batch_size": 16,
    },
    # Spreading: larger box so the packet width stays far from the wrap scale.
    "spread": {
        "grid_n": 64, "box_length": 20.0, "q_cut_fraction": 0.5,
        "sigma_nm": 1.5, "window_fs": 40.0, "record_stride": 8,
        "n_realizations": 48, "batch_size": 12,
    },
    # Seconds-scale sanity runs.
    "smoke": {
        "grid_n": 16, "box_length": 4.0, "q_cut_fraction": 0.5,
        "sigma_nm": 0.6, "window_fs": 2.0, "record_stride": 4,
        "n_realizations": 4, "batch_size": 4,
    },
}

# section -> key -> (field name, converter tag)
_INI_SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "material": {
        "name": ("material_name", "str"),
        "m_eff": ("material_overrides.m_eff", "float"),
        "v_s_m_per_s": ("material_overrides.v_s_m_per_s", "float"),
        "a_nm": ("material_overrides.a_nm", "float"),
        "E_d_eV": ("material_overrides.E_d_eV", "float"),
        "rho_kg_per_m3": ("material_overrides.rho_kg_per_m3", "float"),
    },
    "grid": {
        "n": ("grid_n", "int"),
        "length_nm": ("box_length", "float"),
    },
    "time": {
        "dt_fs": ("dt_fs", "optfloat"),
        "n_steps": ("n_steps", "optint"),
        "window_fs": ("window_fs", "float"),
        "record_stride": ("record_stride", "int"),
    },
    "ensemble": {
        "n_realizations": ("n_realizations", "int"),
        "master_seed": ("master_seed", "int"),
        "max_parallel": ("max_parallel", "int"),
        "batch_size": ("batch_size", "int"),
    },
    "physics": {
        "temperature_K": ("temperature_K", "float"),
        "t_list_K": ("t_list_K", "floatlist"),
        "scheme": ("scheme", "str"),
        "feedback": ("feedback", "bool"),
        "noise_enabled": ("noise_enabled", "bool"),
        "q_cut_fraction": ("q_cut_fraction", "float"),
        "sigma_nm": ("sigma_nm", "optfloat"),
        "k0": ("k0", "k0"),
        "center": ("center", "pair"),
        "blowup_bound": ("blowup_bound", "float"),
    },
    "output": {
        "directory": ("out_dir", "str"),
        "formats": ("formats", "strlist"),
    },
}

_BOOL_TRUE = {"1", "yes", "true", "on"}
_BOOL_FALSE = {"0", "no", "false", "off"}


def _convert(raw: str, tag: str, where: str):
    s = raw.strip()
    try:
        if tag == "str":
            return s
        if tag == "int":
            return int(s)
        if tag == "float":
            return float(s)
        if tag in ("optfloat", "optint"):
            if s.lower() in ("", "auto", "none"):
                return None
            return float(s) if tag == "optfloat" else int(s)
        if tag == "bool":
            low = s.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {s!r}")
        if tag == "floatlist":
            return tuple(float(p) for p in s.split(",") if p.strip())
        if tag == "strlist":
            return tuple(p.strip() for p in s.split(",") if p.strip())
        if tag == "pair":
            if s.lower() in ("", "auto", "none"):
                return None
            parts = [float(p) for p in s.split(",")]
            if len(parts) != 2:
                raise ValueError("need two comma-separated numbers")
            return (parts[0], parts[1])
        if tag == "k0":
            if s.lower() in ("", "auto", "fermi"):
                return None
            parts = [float(p) for p in s.split(",")]
            if len(parts) != 2:
                raise ValueError("need 'fermi' or two comma-separated numbers")
            return (parts[0], parts[1])
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"internal: unknown converter {tag}")


def load_ini(path: str, base: RunConfig | None = None) -> RunConfig:
    """Parse an INI file on top of base (or the defaults). Strict schema."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    cfg.material_overrides = dict(cfg.material_overrides)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str        # keys are case-sensitive (E_d_eV)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found or unreadable: {path}")
    for section in parser.sections():
        if section not in _INI_SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _INI_SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            fname, tag = schema[key]
            value = _convert(raw, tag, f"[{section}] {key}")
            if fname.startswith("material_overrides."):
                cfg.material_overrides[fname.split(".", 1)[1]] = value
            else:
                setattr(cfg, fname, value)
    return cfg


def make_config(preset: str | None = None, ini_path: str | None = None,
                **overrides) -> RunConfig:
    """defaults -> preset -> INI file -> keyword overrides, in that order."""
    cfg = RunConfig()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        for k, v in PRESETS[preset].items():
            setattr(cfg, k, v)
    if ini_path is not None:
        cfg = load_ini(ini_path, cfg)
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for k, v in overrides.items():
        if k not in names:
            raise ConfigError(f"unknown config field {k!r}")
        if v is not None:
            setattr(cfg, k, v)
    return cfg


def apply_env_overrides(cfg: RunConfig,
                        env: dict[str, str] | None = None) -> RunConfig:
    """Apply the two supported environment overrides (output dir, workers)."""
    env = os.environ if env is None else env
    cfg = dataclasses.replace(cfg)
    if ENV_OUT in env and env[ENV_OUT]:
        cfg.out_dir = env[ENV_OUT]
    if ENV_THREADS in env and env[ENV_THREADS]:
        try:
            n = int(env[ENV_THREADS])
        except ValueError as exc:
            raise ConfigError(f"{ENV_THREADS} must be an integer") from exc
        if n < 1:
            raise ConfigError(f"{ENV_THREADS} must be >= 1, got {n}")
        cfg.max_parallel = n
    return cfg


@dataclass(frozen=True)
class RunSetup:
    """Validated, resolved bundle for one run at one temperature."""
    config: RunConfig
    material: Material
    derived: DerivedScales
    grid: Grid2D
    modes: ModeSet
    dt_fs: float
    dt_internal: float
    dt_bound_fs: float
    n_steps: int
    window_fs: float
    temperature_K: float
    sigma_nm: float
    k0: tuple[float, float]
    center: tuple[float, float]
    config_hash: str


def _resolve_material(cfg: RunConfig) -> Material:
    mat = get_material(cfg.material_name)
    if cfg.material_overrides:
        bad = set(cfg.material_overrides) - set(_MATERIAL_OVERRIDE_KEYS)
        if bad:
            raise ConfigError(f"unknown material override(s): {sorted(bad)}")
        mat = dataclasses.replace(mat, **cfg.material_overrides)
    return mat


def dt_heuristic_fs(material: Material, derived: DerivedScales, grid: Grid2D,
                    modes: ModeSet, temperature_K: float,
                    noise_enabled: bool) -> float:
    """Stability bound on dt, in fs."""
    v_scale = rms_deformation(material, temperature_K)
    if noise_enabled:
        v_scale += 3.0 * math.sqrt(0.5 * modes.coupling_square_sum)
    k_max2 = 2.0 * grid.k_nyquist**2
    kinetic = 2.0 * derived.mass / k_max2
    potential = math.inf if v_scale <= 0.0 else 1.0 / v_scale
    return internal_to_fs(0.1 * min(kinetic, potential))


def resolved_dict(setup: RunSetup) -> dict:
    """Result-determining fields only; basis of the config hash."""
    cfg, mat = setup.config, setup.material
    return {
        "material": {"name": mat.name, "m_eff": mat.m_eff,
                     "v_s_m_per_s": mat.v_s_m_per_s, "a_nm": mat.a_nm,
                     "E_d_eV": mat.E_d_eV, "rho_kg_per_m3": mat.rho_kg_per_m3},
        "grid": {"n": setup.grid.n, "length_nm": setup.grid.length},
        "time": {"dt_fs": setup.dt_fs, "n_steps": setup.n_steps,
                 "record_stride": cfg.record_stride},
        "ensemble": {"n_realizations": cfg.n_realizations,
                     "master_seed": cfg.master_seed},
        "physics": {"temperature_K": setup.temperature_K,
                    "t_list_K": list(cfg.t_list_K),
                    "scheme": cfg.scheme, "feedback": cfg.feedback,
                    "noise_enabled": cfg.noise_enabled,
                    "q_cut_fraction": cfg.q_cut_fraction,
                    "sigma_nm": setup.sigma_nm,
                    "k0": list(setup.k0), "center": list(setup.center),
                    "blowup_bound": cfg.blowup_bound},
    }


def hash_of(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def validate(cfg: RunConfig, temperature_K: float | None = None) -> RunSetup:
    """Resolve and cross-check a configuration; raises ConfigError."""
    for name, value, low in (
            ("grid_n", cfg.grid_n, 4), ("record_stride", cfg.record_stride, 1),
            ("n_realizations", cfg.n_realizations, 1),
            ("max_parallel", cfg.max_parallel, 1),
            ("batch_size", cfg.batch_size, 1)):
        if value < low:
            raise ConfigError(f"{name} must be >= {low}, got {value}")
    if cfg.blowup_bound <= 1.0:
        raise ConfigError(f"blowup_bound must exceed 1, got {cfg.blowup_bound}")
    if cfg.scheme not in THERMAL_SCHEMES:
        raise ConfigError(f"unknown scheme {cfg.scheme!r}; have {THERMAL_SCHEMES}")
    if not 0.0 < cfg.q_cut_fraction <= 1.0:
        raise ConfigError(
            f"q_cut_fraction must lie in (0, 1], got {cfg.q_cut_fraction}")
    unknown = set(cfg.formats) - set(_FORMATS)
    if unknown:
        raise ConfigError(f"unknown output format(s) {sorted(unknown)}")

    temp = cfg.temperature_K if temperature_K is None else temperature_K
    if temp < 0.0 or any(t < 0.0 for t in cfg.t_list_K):
        raise ConfigError("temperatures must be >= 0 K")

    material = _resolve_material(cfg)
    derived = derive_parameters(material)
    grid = Grid2D(cfg.grid_n, cfg.box_length)
    q_cut = cfg.q_cut_fraction * derived.q_debye
    modes = enumerate_modes(material, cfg.box_length, q_cut)

    k0 = cfg.k0 if cfg.k0 is not None else (derived.k_fermi, 0.0)
    alias_edge = abs(k0[0]) + abs(k0[1]) + q_cut
    if grid.k_nyquist <= alias_edge:
        raise ConfigError(
            f"grid too coarse: pi*N/L = {grid.k_nyquist:.3f} must exceed "
            f"|k0|_1 + q_cut = {alias_edge:.3f} (raise n or shrink the box)")

    sigma = cfg.sigma_nm if cfg.sigma_nm is not None else 0.02 * cfg.box_length
    if sigma < 2.0 * grid.dx:
        raise ConfigError(
            f"sigma_nm={sigma:.4g} under-resolved: need >= 2 dx = {2 * grid.dx:.4g}")
    if sigma > cfg.box_length / 6.0:
        raise ConfigError(
            f"sigma_nm={sigma:.4g} too wide for box: need <= L/6 = "
            f"{cfg.box_length / 6.0:.4g}")
    center = cfg.center if cfg.center is not None else (
        0.5 * cfg.box_length, 0.5 * cfg.box_length)

    bound_fs = dt_heuristic_fs(material, derived, grid, modes, temp,
                               cfg.noise_enabled)
    if cfg.dt_fs is None:
        dt_fs = bound_fs
    else:
        if cfg.dt_fs <= 0.0:
            raise ConfigError(f"dt_fs must be positive, got {cfg.dt_fs}")
        if cfg.dt_fs > bound_fs * (1.0 + 1e-9):
            raise ConfigError(
                f"dt_fs={cfg.dt_fs:.6g} exceeds stability bound {bound_fs:.6g} fs")
        dt_fs = cfg.dt_fs
    if cfg.n_steps is not None:
        n_steps = cfg.n_steps
    else:
        if cfg.window_fs <= 0.0:
            raise ConfigError("window_fs must be positive when n_steps is auto")
        n_steps = int(math.ceil(cfg.window_fs / dt_fs))
    if not 1 <= n_steps <= 5_000_000:
        raise ConfigError(f"n_steps out of range [1, 5e6]: {n_steps}")

    setup = RunSetup(
        config=cfg, material=material, derived=derived, grid=grid, modes=modes,
        dt_fs=dt_fs, dt_internal=fs_to_internal(dt_fs), dt_bound_fs=bound_fs,
        n_steps=n_steps, window_fs=n_steps * dt_fs, temperature_K=temp,
        sigma_nm=sigma, k0=(float(k0[0]), float(k0[1])),
        center=(float(center[0]), float(center[1])), config_hash="")
    return dataclasses.replace(setup, config_hash=hash_of(resolved_dict(setup)))
