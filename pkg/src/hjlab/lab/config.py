"""Experiment configuration: loading (JSON or TOML), defaults and validation."""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..grid import Field, PeriodicGrid
from ..hamiltonian import CATALOG, HamiltonianModel, build_model

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("rate_vv", "large_time", "oscillation", "ut_bound", "monotone_power",
               "mather_pipeline", "dissipative", "representation", "characteristics_compare")

SUBCOMMANDS = {
    "rate-vv": "rate_vv", "large-time": "large_time", "oscillation": "oscillation",
    "ut-bound": "ut_bound", "monotone": "monotone_power", "mather": "mather_pipeline",
    "dissipative": "dissipative", "represent": "representation", "chars": "characteristics_compare",
}

DEFAULT_TOLERANCES = {
    "identity": 1e-10,
    "mass": 1e-12,
    "negativity": 1e-12,
    "measure": 0.05,
    "support_p": 0.1,
    "monotone": 1e-3,
    "min_u": 1e-6,
    "min_slope": 0.45,
    "osc_nonconvergent": 1.5,
    "osc_convergent": 0.05,
    "halving_slack": 0.3,
    "ut_agreement": 1e-8,
    "psd": 1e-8,
    "nam_factor": 3.0,
    "energy_slack": 0.1,
    "large_time": 0.02,
    "char_dx_factor": 3.0,
    "crossing_rel": 0.05,
    "drift": 1e-8,
}


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict
    grid: dict
    epsilon: float | None = None
    epsilons: list | None = None
    T: float | None = None
    Ts: list | None = None
    z: list | None = None
    initial: dict = field(default_factory=lambda: {"kind": "sin"})
    seed: int = 0
    safety: float = 0.9
    peclet: str = "record"
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: str | None = None

    # -- derived -----------------------------------------------------------
    def build_model(self) -> HamiltonianModel:
        return build_model(self.model["name"], **self.model.get("params", {}))

    def make_grid(self, N: int | None = None) -> PeriodicGrid:
        return PeriodicGrid(int(self.grid.get("n", 1)), int(N or self.grid["N"]))

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def initial_field(self, grid: PeriodicGrid, spec: dict | None = None) -> Field:
        return initial_field(grid, spec or self.initial)

    def z_points(self, grid: PeriodicGrid) -> np.ndarray:
        """Terminal points: explicit list, ``{"random": k}``, or ``None`` for every node."""
        n = grid.dim
        if self.z is None:
            return grid.coords().reshape(-1, n)
        if isinstance(self.z, dict):
            k = int(self.z.get("random", 4))
            return np.random.default_rng(self.seed).random((k, n))
        return np.array([np.atleast_1d(np.asarray(zz, dtype=float)) for zz in self.z]).reshape(-1, n)

    def to_dict(self) -> dict:
        d = {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}
        d["tolerances"] = {**DEFAULT_TOLERANCES, **self.tolerances}
        return d


def initial_field(grid: PeriodicGrid, spec: dict) -> Field:
    kind = spec.get("kind", "sin")
    A = float(spec.get("amplitude", 1.0))
    c = float(spec.get("offset", 0.0))
    x = grid.coords()
    two_pi = 2.0 * np.pi
    if kind == "zero":
        v = np.zeros(grid.shape)
    elif kind == "const":
        v = np.full(grid.shape, float(spec.get("value", c)))
    elif kind == "sin":
        v = A * np.sin(two_pi * x[..., 0]) + c
    elif kind == "sin_sum":
        v = A * np.mean(np.sin(two_pi * x), axis=-1) + c
    elif kind == "sin_prod":
        v = A * np.prod(np.sin(two_pi * x), axis=-1) + c
    elif kind == "cos":
        v = A * np.cos(two_pi * x[..., 0]) + c
    else:
        raise ConfigError(f"unknown initial datum kind {kind!r}")
    return Field(grid, np.ascontiguousarray(v, dtype=float))


def _load_text(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None


def load_raw(path) -> dict:
    """Read a config (or a previous run's manifest, whose resolved config is reused)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    raw = _load_text(path)
    if isinstance(raw, dict) and "manifest_version" in raw and "config" in raw:
        raw = raw["config"]
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table/object")
    return raw


def _num(d, key, positive=True):
    v = d.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number")
    if positive and not v > 0:
        raise ConfigError(f"{key} must be positive")
    return float(v)


def _num_list(d, key):
    v = d.get(key)
    if v is None:
        return None
    if not isinstance(v, list) or not v or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
        raise ConfigError(f"{key} must be a non-empty list of numbers")
    if not all(a > 0 for a in v):
        raise ConfigError(f"{key} entries must be positive")
    return [float(a) for a in v]


def parse_config(raw: dict, experiment: str | None = None) -> ExperimentConfig:
    """Validate a raw mapping; ``experiment`` (from the subcommand) overrides or fills the field."""
    raw = copy.deepcopy(raw)
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    exp = raw.get("experiment", experiment)
    if experiment is not None and exp != experiment:
        raise ConfigError(f"config is for experiment {exp!r}, subcommand selects {experiment!r}")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    model = raw.get("model")
    if isinstance(model, str):
        model = {"name": model}
    if not isinstance(model, dict) or model.get("name") not in CATALOG:
        raise ConfigError(f"model.name must be one of {sorted(CATALOG)}")
    model.setdefault("params", {})
    grid = raw.get("grid", {"n": 1, "N": 256})
    if not isinstance(grid, dict):
        raise ConfigError("grid must be a table with n and N")
    n, N = grid.get("n", 1), grid.get("N", 256)
    if n not in (1, 2) or not isinstance(N, int) or N < 8:
        raise ConfigError("grid needs n in {1, 2} and integer N >= 8")
    grid = {"n": n, "N": N}
    cfg = ExperimentConfig(
        experiment=exp, model=model, grid=grid,
        epsilon=_num(raw, "epsilon"), epsilons=_num_list(raw, "epsilons"),
        T=_num(raw, "T"), Ts=_num_list(raw, "Ts"),
        z=raw.get("z"), initial=raw.get("initial", {"kind": "sin"}),
        seed=int(raw.get("seed", 0)), safety=_num(raw, "safety") or 0.9,
        peclet=raw.get("peclet", "record"), tolerances=dict(raw.get("tolerances", {})),
        options=dict(raw.get("options", {})), output=raw.get("output"),
    )
    if cfg.peclet not in ("raise", "record"):
        raise ConfigError("peclet must be 'raise' or 'record'")
    if not 0 < cfg.safety <= 1:
        raise ConfigError("safety must lie in (0, 1]")
    bad_tol = set(cfg.tolerances) - set(DEFAULT_TOLERANCES)
    if bad_tol:
        raise ConfigError(f"unknown tolerances: {sorted(bad_tol)}")
    try:
        mdl = cfg.build_model()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"model parameters: {e}") from None
    if mdl.dim != n:
        raise ConfigError(f"model {mdl.name} has dimension {mdl.dim}, grid has n = {n}")
    if not isinstance(cfg.initial, dict):
        raise ConfigError("initial must be a table")
    try:
        initial_field(PeriodicGrid(n, 8), cfg.initial)
    except ConfigError:
        raise
    if cfg.z is not None and not isinstance(cfg.z, (list, dict)):
        raise ConfigError("z must be a list of points or {random = k}")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    return parse_config(load_raw(path), experiment)
