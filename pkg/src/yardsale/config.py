"""Run configuration files and their fully resolved manifest form.

Config files are INI text. ``[simulation]`` holds the run parameters and
names the model; the model's own parameters live in a section of the same
name::

    [simulation]
    model = split_wealth
    n_agents = 100
    max_steps = 1000000
    ensemble_size = 300

    [split_wealth]
    lambdas = uniform

A run manifest (JSON) carries the same information with every default
filled in and can be passed back wherever a config file is accepted.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .engine import DEFAULT_TOLERANCE, DEFAULT_WINDOW, SimConfig
from .exchange import MixedAgents, ProbabilisticChoice, PureTF, PureYS, SplitWealth


class ConfigError(ValueError):
    """A configuration key is missing or holds an invalid value."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


MODEL_NAMES = ("pure_ys", "pure_tf", "mixed_agents", "split_wealth", "probabilistic_choice")
REQUIRED = ("model", "n_agents", "max_steps")


@dataclass
class SweepOptions:
    n_list: list = field(default_factory=list)
    max_steps: dict = field(default_factory=dict)
    window: int = DEFAULT_WINDOW
    tolerance: float = DEFAULT_TOLERANCE
    noise_z: float = 2.0


def _num_list(key, text, conv=float):
    try:
        return [conv(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(key, f"cannot parse list {text!r}") from None


def _per_agent(key, text):
    text = text.strip()
    if text == "uniform":
        return None
    vals = _num_list(key, text)
    if not vals:
        raise ConfigError(key, "empty value")
    return vals[0] if len(vals) == 1 else tuple(vals)


def _conv(key, value, conv):
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"invalid value {value!r}") from None


def model_from_section(name: str, sec: dict):
    try:
        if name == "pure_ys":
            return PureYS()
        if name == "pure_tf":
            return PureTF()
        if name == "mixed_agents":
            return MixedAgents(tuple(_num_list("mixed_agents.tf_agents", sec.get("tf_agents", "0"), int)))
        if name == "split_wealth":
            return SplitWealth(_per_agent("split_wealth.lambdas", sec.get("lambdas", "uniform")),
                               split_mode=sec.get("split_mode", "coupled"))
        if name == "probabilistic_choice":
            return ProbabilisticChoice(_per_agent("probabilistic_choice.ps", sec.get("ps", "uniform")),
                                       disagreement=sec.get("disagreement", "fallback_ys"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(name, str(exc)) from None
    raise ConfigError("model", f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")


def model_section(model) -> dict:
    """Inverse of :func:`model_from_section`, with defaults made explicit."""
    def per_agent(v):
        if v is None:
            return "uniform"
        if isinstance(v, tuple):
            return ", ".join(repr(x) for x in v)
        return repr(v)

    if isinstance(model, MixedAgents):
        return {"tf_agents": ", ".join(str(k) for k in model.tf_agents)}
    if isinstance(model, SplitWealth):
        return {"lambdas": per_agent(model.lambdas), "split_mode": model.split_mode}
    if isinstance(model, ProbabilisticChoice):
        return {"ps": per_agent(model.ps), "disagreement": model.disagreement}
    return {}


def sim_config_from_sections(sections: dict, overrides: Optional[dict] = None) -> SimConfig:
    sim = dict(sections.get("simulation", {}))
    sim.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in REQUIRED:
        if key not in sim:
            raise ConfigError(key, "required key is missing")
    name = str(sim["model"]).strip()
    model = model_from_section(name, sections.get(name, {}))
    kw = dict(
        n_agents=_conv("n_agents", sim["n_agents"], int),
        model=model,
        max_steps=_conv("max_steps", float(sim["max_steps"]) if isinstance(sim["max_steps"], str) else sim["max_steps"], int),
        seed=_conv("seed", sim.get("seed", 0), int),
        ensemble_size=_conv("ensemble_size", sim.get("ensemble_size", 1), int),
        schedule=str(sim.get("schedule", "geometric")),
        growth=_conv("growth", sim.get("growth", 1.05), float),
        record_every=_conv("record_every", sim.get("record_every", 1), int),
    )
    if sim.get("total_money") not in (None, ""):
        kw["total_money"] = _conv("total_money", sim["total_money"], float)
    try:
        return SimConfig(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split()[0] if msg.split() and msg.split()[0] in kw else "simulation"
        raise ConfigError(key, msg) from None


def sweep_options(sections: dict) -> SweepOptions:
    sec = sections.get("sweep", {})
    opts = SweepOptions()
    if "n_list" in sec:
        opts.n_list = _num_list("sweep.n_list", sec["n_list"], int)
    if "max_steps" in sec:
        for item in sec["max_steps"].replace(",", " ").split():
            try:
                n, steps = item.split(":")
                opts.max_steps[int(n)] = int(float(steps))
            except ValueError:
                raise ConfigError("sweep.max_steps", f"expected N:steps pairs, got {item!r}") from None
    opts.window = _conv("sweep.window", sec.get("window", opts.window), int)
    opts.tolerance = _conv("sweep.tolerance", sec.get("tolerance", opts.tolerance), float)
    opts.noise_z = _conv("sweep.noise_z", sec.get("noise_z", opts.noise_z), float)
    return opts


def read_sections(path) -> dict:
    """Sections of an INI config or of a JSON manifest, as nested dicts."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
        return {k: {kk: vv for kk, vv in v.items()} for k, v in data.get("config", data).items()
                if isinstance(v, dict)}
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from None
    return {s: dict(parser[s]) for s in parser.sections()}


def resolved_sections(cfg: SimConfig, sweep: Optional[SweepOptions] = None) -> dict:
    """Every setting that determines a run, defaults included."""
    out = {
        "simulation": {
            "model": cfg.model.name,
            "n_agents": cfg.n_agents,
            "total_money": cfg.total_money,
            "max_steps": cfg.max_steps,
            "seed": cfg.seed,
            "ensemble_size": cfg.ensemble_size,
            "schedule": cfg.schedule,
            "growth": cfg.growth,
            "record_every": cfg.record_every,
        }
    }
    sec = model_section(cfg.model)
    if sec:
        out[cfg.model.name] = sec
    if sweep is not None:
        out["sweep"] = {
            "n_list": ", ".join(str(n) for n in sweep.n_list),
            "max_steps": ", ".join(f"{n}:{s}" for n, s in sorted(sweep.max_steps.items())),
            "window": sweep.window,
            "tolerance": sweep.tolerance,
            "noise_z": sweep.noise_z,
        }
    return out
