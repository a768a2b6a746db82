"""Plain-text (TOML) run configuration.

Example::

    [kernel]
    family = "gaussian"
    alpha = 1.0
    beta = 1.0

    [drift]
    profile = "exp_decay"
    xi = 2.0

    [scheme]
    n = 1000
    a = 0.4            # h = n^-a; alternatively give h directly

    [experiment]
    case = "I"
    n_values = [500, 1000, 3000]
    reps = 500
    seed = 7

Unknown sections or keys are rejected.  Command-line overrides use dotted
paths, e.g. ``--set scheme.n=2000``.
"""

from __future__ import annotations

import csv
import hashlib
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .drift import DriftModel
from .errors import ConfigError
from .kernels import FAMILY_PARAMS, KernelModel
from .simulate import SamplingScheme

_ALLOWED_KEYS = {
    "kernel": {"family", "alpha", "beta", "nu", "gamma", "epsilon"},
    "drift": {"profile", "xi", "table", "tail_rate"},
    "scheme": {"n", "h", "a"},
    "experiment": {"case", "n_values", "reps", "seed", "jobs"},
}


def load_config(path, overrides=None) -> dict:
    """Parse and validate a TOML config file, applying dotted overrides."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {p} is not valid TOML: {exc}") from exc
    cfg = apply_overrides(cfg, overrides or [])
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    for section, content in cfg.items():
        if section not in _ALLOWED_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        unknown = set(content) - _ALLOWED_KEYS[section]
        if unknown:
            raise ConfigError(
                f"unknown keys in [{section}]: {sorted(unknown)}"
            )


def _parse_literal(text: str):
    low = text.strip()
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            continue
    return low.strip("\"'")


def apply_overrides(cfg: dict, overrides) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in cfg.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override path {dotted!r} must be section.key")
        section, key = parts
        out.setdefault(section, {})[key] = _parse_literal(raw)
    return out


def config_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def kernel_from_config(cfg: dict) -> KernelModel:
    spec = cfg.get("kernel")
    if not spec:
        raise ConfigError("config has no [kernel] section")
    family = str(spec.get("family", "")).lower()
    if family not in FAMILY_PARAMS:
        raise ConfigError(f"unknown kernel family {family!r}")
    params = {k: v for k, v in spec.items() if k != "family"}
    try:
        return KernelModel.from_dict({"family": family, **params})
    except Exception as exc:
        raise ConfigError(f"invalid kernel config: {exc}") from exc


def drift_from_config(cfg: dict, base_dir: Path | None = None) -> DriftModel:
    spec = cfg.get("drift")
    if not spec:
        return DriftModel.zero()
    profile = str(spec.get("profile", "zero")).lower()
    xi = float(spec.get("xi", 0.0))
    try:
        if profile == "exp_decay":
            return DriftModel.exp_decay(xi)
        if profile == "zero":
            return DriftModel.zero()
        if profile in ("table", "scaled"):
            table = spec.get("table")
            if table is None:
                raise ConfigError("tabular drift profile needs table = \"file.csv\"")
            table_path = Path(table)
            if base_dir is not None and not table_path.is_absolute():
                table_path = base_dir / table_path
            t, w = _read_profile_table(table_path)
            return DriftModel.from_table(xi, t, w, float(spec["tail_rate"]))
        raise ConfigError(f"unknown drift profile {profile!r}")
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"invalid drift config: {exc}") from exc


def _read_profile_table(path: Path):
    if not path.exists():
        raise ConfigError(f"drift profile table not found: {path}")
    t, w = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip().lower() in ("t", ""):
                continue
            t.append(float(row[0]))
            w.append(float(row[1]))
    return np.asarray(t), np.asarray(w)


def scheme_from_config(cfg: dict) -> SamplingScheme:
    spec = cfg.get("scheme")
    if not spec or "n" not in spec:
        raise ConfigError("config needs [scheme] with at least n")
    n = int(spec["n"])
    try:
        if "h" in spec:
            return SamplingScheme(n=n, h=float(spec["h"]), a=spec.get("a"))
        if "a" in spec:
            return SamplingScheme.from_rule(n, float(spec["a"]))
    except Exception as exc:
        raise ConfigError(f"invalid scheme config: {exc}") from exc
    raise ConfigError("[scheme] needs either h or the rule exponent a")
