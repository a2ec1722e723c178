"""Experiment configuration: a TOML document with nested sections, merged over a preset and the defaults."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import numbers
import tomllib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from catpump import config
from catpump.exceptions import ConfigError
from catpump.qubit_geometry import FIELDS, Phase2, TwoLevelField
from catpump.rotor_lattice import LatticeTruncation
from catpump.states import ModeWavefunction, QubitState, fock_mode, gaussian_mode, qubit_state

GOLDEN = (1 + math.sqrt(5)) / 2
QUASI_FOCK = 1 / (2 * math.pi)
FIG3_TIMES = [0.0, 8 / 3, 16 / 3, 8.0, 32 / 3]

DEFAULTS = {
    "seed": 0,
    "model": {"field": "bhz", "gap": 2.0},
    "frequencies": {"hbar_omega1_over_gap": 0.075, "omega2_over_omega1": GOLDEN},
    "truncation": {
        "n1_min": config.DESK_BOX[0], "n1_max": config.DESK_BOX[1],
        "n2_min": config.DESK_BOX[2], "n2_max": config.DESK_BOX[3],
        "n_e_max": config.DESK_N_E_MAX, "n_perp_max": config.DESK_N_PERP_MAX,
        "enclose": False,
    },
    "initial_state": {
        "n1": 0, "n2": 0, "dn1": 5.0, "dn2": 5.0, "phi1": 0.0, "phi2": 0.0,
        "theta_q": math.pi / 2, "phi_q": 0.0,
    },
    "propagation": {
        "method": "auto", "t_max": 12.0, "time_step": 0.25, "snapshot_times": FIG3_TIMES,
        "krylov_dim": config.KRYLOV_DIM, "abort_on_boundary": True,
    },
    "analysis": {
        "projector_order": 1, "geometry_grid": 64, "phase_grid": 128, "fit_window": [2.0, 10.0],
        "split_time": 10.0, "dphi_sweep_over_pi": [], "theta_sweep": [], "theta_sweep_dphi_over_pi": [],
        "quasi_max_p1": 13, "trajectory_phases": [[0.0, 0.0]], "trajectory_t_max": 30.0,
        "commensurate": [2, 3],
    },
    "output": {"directory": "out", "snapshots": True},
}

_WIDE = {"n_e_max": 24.0, "n_perp_max": 40.0, "enclose": True}

PRESETS = {
    "fig3a": {"truncation": _WIDE, "initial_state": {"dn1": 5.0, "dn2": 5.0}},
    "fig3b": {"initial_state": {"dn1": 0.7, "dn2": 0.7}},
    "fig3c": {"initial_state": {"dn1": QUASI_FOCK, "dn2": QUASI_FOCK}},
    "fig4": {
        "truncation": _WIDE,
        "initial_state": {"dn1": 5.0, "dn2": 5.0, "theta_q": 0.0},
        "analysis": {"dphi_sweep_over_pi": [0.04, 0.06, 0.08, 0.1, 0.15, 0.25, 0.5, 1.0]},
    },
    "fig5": {"initial_state": {"dn1": 1 / (2 * 0.09 * math.pi), "dn2": 1 / (2 * 0.09 * math.pi)},
             "propagation": {"time_step": 0.1}},
    "fig6": {"initial_state": {"dn1": QUASI_FOCK, "dn2": QUASI_FOCK},
             "propagation": {"t_max": 10.0, "time_step": 0.05}},
    "fig7": {"truncation": _WIDE, "initial_state": {"dn1": 5.0, "dn2": 5.0}},
    "fig8": {
        "truncation": _WIDE,
        "analysis": {"theta_sweep": [0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi],
                     "theta_sweep_dphi_over_pi": [0.04, 0.1, 0.25, 0.38, 1.0]},
    },
}

PRESET_ALIASES = {
    "cat-split": "fig3a",
    "intermediate-width": "fig3b",
    "quasi-fock": "fig3c",
    "width-sweep": "fig4",
    "purity": "fig5",
    "breathing": "fig6",
    "polarization": "fig7",
    "bloch-sweep": "fig8",
}

FULL_TRUNCATION = {
    "n1_min": config.FULL_BOX[0], "n1_max": config.FULL_BOX[1],
    "n2_min": config.FULL_BOX[2], "n2_max": config.FULL_BOX[3],
    "n_e_max": config.FULL_N_E_MAX, "n_perp_max": config.FULL_N_PERP_MAX, "enclose": False,
}

METHODS = ("auto", "spectral", "krylov")


def _merge(base: dict, update: dict, path: str = "") -> dict:
    """Recursively merge `update` into a copy of `base`, rejecting keys `base` does not know."""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a section")
            merged[key] = _merge(base[key], value, where + ".")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _number(section: dict, key: str, name: str, positive: bool = False, allow_zero: bool = False) -> float:
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"'{name}.{key}' must be a number, got {value!r}")
    if positive and not (value > 0 or (allow_zero and value == 0)):
        raise ConfigError(f"'{name}.{key}' must be positive, got {value}")
    return float(value)


def _validate(values: dict) -> None:
    model, frequencies = values["model"], values["frequencies"]
    truncation, initial = values["truncation"], values["initial_state"]
    propagation, analysis = values["propagation"], values["analysis"]

    if model["field"] not in FIELDS:
        raise ConfigError(f"unknown field '{model['field']}', expected one of {sorted(FIELDS)}")
    _number(model, "gap", "model", positive=True)
    ratio = _number(frequencies, "hbar_omega1_over_gap", "frequencies", positive=True)
    if ratio >= 0.5:
        raise ConfigError(f"ħω₁/Δ = {ratio} breaks the slow-mode condition (must be < 0.5)")
    _number(frequencies, "omega2_over_omega1", "frequencies", positive=True)

    for key in ("n1_min", "n1_max", "n2_min", "n2_max"):
        if not isinstance(truncation[key], int) or isinstance(truncation[key], bool):
            raise ConfigError(f"'truncation.{key}' must be an integer")
    if truncation["n1_min"] > truncation["n1_max"] or truncation["n2_min"] > truncation["n2_max"]:
        raise ConfigError("truncation box bounds are inverted")
    _number(truncation, "n_e_max", "truncation", positive=True)
    _number(truncation, "n_perp_max", "truncation", positive=True)

    for key in ("n1", "n2"):
        if not isinstance(initial[key], int) or isinstance(initial[key], bool):
            raise ConfigError(f"'initial_state.{key}' must be an integer")
    for key in ("dn1", "dn2"):
        _number(initial, key, "initial_state", positive=True, allow_zero=True)
    for key in ("phi1", "phi2", "theta_q", "phi_q"):
        _number(initial, key, "initial_state")

    if propagation["method"] not in METHODS:
        raise ConfigError(f"unknown propagation method '{propagation['method']}'")
    _number(propagation, "t_max", "propagation", positive=True)
    _number(propagation, "time_step", "propagation", positive=True)
    if any(t < 0 for t in propagation["snapshot_times"]):
        raise ConfigError("snapshot times must be nonnegative")

    if analysis["projector_order"] not in (0, 1):
        raise ConfigError("'analysis.projector_order' must be 0 or 1")
    for key in ("geometry_grid", "phase_grid"):
        if not isinstance(analysis[key], int) or analysis[key] < 8:
            raise ConfigError(f"'analysis.{key}' must be an integer of at least 8")
    window = analysis["fit_window"]
    if len(window) != 2 or not 0 <= window[0] < window[1]:
        raise ConfigError("'analysis.fit_window' must be an increasing pair of times")
    if any(not 0 < d <= 1 for d in analysis["dphi_sweep_over_pi"] + analysis["theta_sweep_dphi_over_pi"]):
        raise ConfigError("phase widths in sweeps must lie in (0, 1] in units of π")
    p1, p2 = analysis["commensurate"]
    if p1 < 1 or p2 < 1 or math.gcd(p1, p2) != 1:
        raise ConfigError("'analysis.commensurate' must be a coprime pair of positive integers")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment parameters. Times are in units of T₁ = 2π/ω₁, ħ = 1."""
    values: dict
    preset: str | None = None

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def gap(self) -> float:
        return float(self.values["model"]["gap"])

    @property
    def omega(self) -> np.ndarray:
        omega1 = self.values["frequencies"]["hbar_omega1_over_gap"] * self.gap
        return np.array([omega1, omega1 * self.values["frequencies"]["omega2_over_omega1"]])

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega[0]

    def model(self) -> TwoLevelField:
        return FIELDS[self.values["model"]["field"]](gap=self.gap)

    def truncation(self) -> LatticeTruncation:
        t = self.values["truncation"]
        omega = tuple(float(w) for w in self.omega)
        if t["enclose"]:
            return LatticeTruncation.enclosing(t["n_e_max"], t["n_perp_max"], omega)
        return LatticeTruncation((t["n1_min"], t["n1_max"]), (t["n2_min"], t["n2_max"]),
                                 t["n_e_max"], t["n_perp_max"], omega)

    @property
    def phase0(self) -> Phase2:
        initial = self.values["initial_state"]
        return Phase2(initial["phi1"], initial["phi2"])

    def modes(self, dn: float | None = None) -> tuple[ModeWavefunction, ModeWavefunction]:
        """The two initial modes; `dn` overrides both number widths."""
        initial = self.values["initial_state"]
        widths = (dn, dn) if dn is not None else (initial["dn1"], initial["dn2"])
        return tuple(
            gaussian_mode(n0, width, phi) if width > 0 else fock_mode(n0)
            for n0, width, phi in zip((initial["n1"], initial["n2"]), widths, (initial["phi1"], initial["phi2"]))
        )

    def qubit(self, theta: float | None = None) -> QubitState:
        initial = self.values["initial_state"]
        return qubit_state(initial["theta_q"] if theta is None else theta, initial["phi_q"])

    @property
    def phase_width(self) -> float:
        """Δφ = 1/(2Δn) of the first mode."""
        dn = self.values["initial_state"]["dn1"]
        return 1 / (2 * dn) if dn > 0 else math.inf

    def series_times(self) -> np.ndarray:
        p = self.values["propagation"]
        count = int(math.floor(p["t_max"] / p["time_step"] + 1e-9))
        return np.round(np.arange(count + 1) * p["time_step"], 12)

    def snapshot_times(self) -> list[float]:
        return [float(t) for t in self.values["propagation"]["snapshot_times"]]

    @property
    def analysis(self) -> dict:
        return self.values["analysis"]

    @property
    def propagation(self) -> dict:
        return self.values["propagation"]

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of the resolved configuration."""
        canonical = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def resolve(overrides: dict | None = None, preset: str | None = None, full_scale: bool = False) -> ExperimentConfig:
    """Merge defaults, preset and overrides (in increasing priority) and validate.

    Raises:
        ConfigError: for unknown presets, sections or keys, and out-of-range values.
    """
    values = copy.deepcopy(DEFAULTS)
    if preset is not None:
        preset = PRESET_ALIASES.get(preset, preset)
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset '{preset}', expected one of {sorted(PRESETS)}")
        values = _merge(values, PRESETS[preset])
    values = _merge(values, overrides or {})
    if full_scale:
        values["truncation"] = copy.deepcopy(FULL_TRUNCATION)
    _validate(values)
    return ExperimentConfig(values, preset)


def load_experiment(path: str | Path, preset: str | None = None, full_scale: bool = False) -> ExperimentConfig:
    """Read a TOML experiment file and resolve it over a preset."""
    try:
        with Path(path).open("rb") as handle:
            overrides = tomllib.load(handle)
    except FileNotFoundError as error:
        raise ConfigError(f"configuration file {path} not found") from error
    except tomllib.TOMLDecodeError as error:
        raise ConfigError(f"configuration file {path} is not valid TOML: {error}") from error
    return resolve(overrides, preset, full_scale)
