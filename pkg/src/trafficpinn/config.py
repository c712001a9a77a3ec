"""Scenario files: a flat, typed key-value format with [section] headers.

The format is deliberately small: blank lines and ``#``/``;`` comments are
ignored, sections group keys, every key has a declared type and default, and
parse or type errors report file and line.  ``parse_pairs`` values are
comma-separated ``start:value`` items, e.g. ``0:37.5,10:18.75``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

from .domain import FreeFlowSchedule, RoadDomain
from .errors import ConfigError
from .observer import ObserverConfig
from .online import OnlineConfig
from .probes import FleetConfig
from .solver import BoundarySchedule, SolverConfig, random_boundary_schedule
from .training import TrainerConfig

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_pairs(text):
    """Parse ``start:value`` comma lists into a tuple of float pairs."""
    items = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ValueError(f"expected start:value, got {chunk!r}")
        a, b = chunk.split(":", 1)
        items.append((float(a), float(b)))
    if not items:
        raise ValueError("empty pair list")
    return tuple(items)


def _parse_floats(text):
    return tuple(float(c) for c in text.split(",") if c.strip())


def _parse_ints(text):
    return tuple(int(c) for c in text.split(",") if c.strip())


_SCHEMA = {
    "run": {
        "seed": (int, 0),
        "out": (str, "out"),
        "mode": (str, "greenshield"),
    },
    "domain": {
        "length_km": (float, 5.0),
        "horizon_min": (float, 30.0),
        "viscosity": (float, 0.005),
    },
    "solver": {
        "nx": (int, 200),
        "cfl_safety": (float, 0.9),
        "output_dt_min": (float, 0.02),
        "initial_density": (float, 0.0),
    },
    "boundary": {
        "kind": (str, "random"),
        "dwell_min": (float, 2.0),
        "left": (parse_pairs, ((0.0, 0.5),)),
        "right": (parse_pairs, ((0.0, 0.5),)),
    },
    "freeflow": {
        "segments_kmh": (parse_pairs, ((0.0, 37.5), (10.0, 18.75), (18.0, 30.0))),
    },
    "fleet": {
        "mean_gap_min": (float, 0.5),
        "spawn_times": (_parse_floats, ()),
        "sampling_rate_hz": (float, 3.0),
        "noise_rho_std": (float, 0.02),
        "noise_v_std_kmh": (float, 1.0),
    },
    "online": {
        "dt_window_min": (float, 0.3),
        "lookback_min": (float, 3.0),
        "warm_start": (_parse_bool, True),
        "width": (int, 32),
        "n_layers": (int, 2),
        "vf_init_kmh": (float, 30.0),
        "velocity_mode": (str, "greenshield_learnable"),
        "time_scale": (float, 60.0),
    },
    "training": {
        "epochs": (int, 100),
        "n_colloc": (int, 1000),
        "lr_params": (float, 1e-3),
        "lr_vf": (float, 1e-2),
        "lr_lambda": (float, 1e-2),
        "lambda_min": (float, 1e-3),
        "lambda_max": (float, 1e3),
        "velocity_window_min": (float, 3.0),
    },
    "observer": {
        "assumed_vf_kmh": (float, 37.5),
        "injection_radius": (int, 1),
    },
    "sweep": {
        "epochs_list": (_parse_ints, (100, 200, 300, 400)),
        "anchor_epochs": (int, 100),
        "anchor_dt_min": (float, 0.3),
        "horizon_min": (float, 0.0),
    },
}

_MODES = ("greenshield", "external-data")


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved scenario: every schema key, typed, defaults filled."""

    values: dict
    source_text: str = ""
    path: str = "<defaults>"

    def get(self, section, key):
        return self.values[section][key]

    # builders ----------------------------------------------------------

    def domain(self):
        return RoadDomain(self.get("domain", "length_km"),
                          self.get("domain", "horizon_min"),
                          self.get("domain", "viscosity"))

    def solver(self):
        return SolverConfig(nx=self.get("solver", "nx"),
                            cfl_safety=self.get("solver", "cfl_safety"),
                            output_dt_min=self.get("solver", "output_dt_min"),
                            initial_density=self.get("solver", "initial_density"))

    def boundary(self, seed):
        kind = self.get("boundary", "kind")
        if kind == "random":
            return random_boundary_schedule(self.get("domain", "horizon_min"),
                                            self.get("boundary", "dwell_min"), seed)
        if kind == "fixed":
            return BoundarySchedule(self.get("boundary", "left"),
                                    self.get("boundary", "right"))
        raise ConfigError(f"boundary.kind must be 'random' or 'fixed', got {kind!r}")

    def freeflow(self):
        return FreeFlowSchedule(self.get("freeflow", "segments_kmh"))

    def fleet(self, seed):
        spawn = self.get("fleet", "spawn_times") or None
        return FleetConfig(spawn_times=spawn,
                           mean_gap_min=self.get("fleet", "mean_gap_min"),
                           sampling_rate_hz=self.get("fleet", "sampling_rate_hz"),
                           noise_rho_std=self.get("fleet", "noise_rho_std"),
                           noise_v_std_kmh=self.get("fleet", "noise_v_std_kmh"),
                           seed=seed)

    def trainer(self):
        return TrainerConfig(epochs=self.get("training", "epochs"),
                             n_colloc=self.get("training", "n_colloc"),
                             lr_params=self.get("training", "lr_params"),
                             lr_vf=self.get("training", "lr_vf"),
                             lr_lambda=self.get("training", "lr_lambda"),
                             lambda_min=self.get("training", "lambda_min"),
                             lambda_max=self.get("training", "lambda_max"),
                             velocity_fit_window=self.get("training", "velocity_window_min"))

    def online(self, seed, mode="replay", epochs=None, dt_window=None):
        trainer = self.trainer()
        if epochs is not None:
            trainer = replace(trainer, epochs=epochs)
        return OnlineConfig(
            dt_window=self.get("online", "dt_window_min") if dt_window is None else dt_window,
            lookback=self.get("online", "lookback_min"),
            trainer=trainer,
            warm_start=self.get("online", "warm_start"),
            hidden_width=self.get("online", "width"),
            n_layers=self.get("online", "n_layers"),
            vf_init_kmh=self.get("online", "vf_init_kmh"),
            velocity_mode=self.get("online", "velocity_mode"),
            mode=mode,
            time_scale=self.get("online", "time_scale"),
            seed=seed,
        )

    def observer(self):
        return ObserverConfig(self.get("observer", "assumed_vf_kmh"),
                              self.get("observer", "injection_radius"))

    def sha256(self):
        # hash the resolved values when there is no file text, so distinct
        # programmatic configs never share a digest
        payload = self.source_text or json.dumps(self.resolved(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def resolved(self):
        """JSON-ready dict of every resolved value."""
        out = {}
        for section, keys in self.values.items():
            out[section] = {}
            for key, value in keys.items():
                if isinstance(value, tuple):
                    value = [list(v) if isinstance(v, tuple) else v for v in value]
                out[section][key] = value
        return out


def _default_values():
    return {section: {key: default for key, (_, default) in keys.items()}
            for section, keys in _SCHEMA.items()}


def parse_config_text(text, path="<string>"):
    """Parse scenario text against the schema; errors carry file and line."""
    values = _default_values()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{path}:{lineno}: unterminated section header {line!r}")
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                known = ", ".join(sorted(_SCHEMA))
                raise ConfigError(f"{path}:{lineno}: unknown section [{name}]; known: {known}")
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key before any [section] header")
        key, _, value_text = line.partition("=")
        key = key.strip()
        value_text = value_text.split("#")[0].strip()
        if key not in _SCHEMA[section]:
            known = ", ".join(sorted(_SCHEMA[section]))
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [{section}]; known: {known}")
        caster, _ = _SCHEMA[section][key]
        try:
            values[section][key] = caster(value_text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {section}.{key}: {exc}") from None
    mode = values["run"]["mode"]
    if mode not in _MODES:
        raise ConfigError(f"{path}: run.mode must be one of {_MODES}, got {mode!r}")
    return ScenarioConfig(values, source_text=text, path=path)


def load_config(path):
    """Read and parse a scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, path=str(path))


def default_config():
    """The bundled defaults as a ready scenario."""
    return ScenarioConfig(_default_values(), source_text="", path="<defaults>")


def write_manifest(path, config, seed, command, extra=None):
    """Record what produced an output directory, deterministically."""
    manifest = {
        "command": command,
        "seed": int(seed),
        "config_path": config.path,
        "config_sha256": config.sha256(),
        "package": "trafficpinn 0.1.0",
        "resolved_config": config.resolved(),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
