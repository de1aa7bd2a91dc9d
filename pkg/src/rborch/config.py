"""Scenario configuration files: INI documents with one section per service.

Example::

    [scenario]
    n_cell = 30
    horizon = 20000
    controller = marea
    seed = 7

    [service.0]
    w_th_ms = 5
    epsilon = 1e-3
    arrival = two-point 0:0.5 200:0.5
    channel = constant 25

Sources are single-line descriptors: ``constant V``, ``two-point V:P V:P``,
``uniform-integer LO HI``, ``empirical-table V:P [V:P ...]`` or
``trace PATH`` (CSV, resolved relative to the config file).
"""

from __future__ import annotations

import configparser
import os
from typing import Optional

from .near_rt import ServiceSpec
from .sim import AnomalyConfig, ScenarioConfig
from .traces import (
    ArrivalTrace,
    ChannelTrace,
    SyntheticModel,
    load_arrival_trace,
    load_channel_trace,
)


class ConfigError(ValueError):
    """Unusable configuration file or option value."""


def parse_source(text: str, base_dir: str = ".", channel: bool = False, service_id: int = 0):
    """Turn a one-line source descriptor into a model or a loaded trace."""
    toks = text.split()
    if not toks:
        raise ConfigError("empty source descriptor")
    kind, args = toks[0], toks[1:]
    try:
        if kind == "trace":
            if len(args) != 1:
                raise ConfigError("trace source takes exactly one path")
            path = os.path.join(base_dir, args[0])
            loader = load_channel_trace if channel else load_arrival_trace
            return loader(path, service_id)
        if kind == "constant":
            return SyntheticModel("constant", (int(args[0]),))
        if kind == "uniform-integer":
            return SyntheticModel("uniform-integer", (int(args[0]), int(args[1])))
        if kind in ("two-point", "empirical-table"):
            values, probs = [], []
            for pair in args:
                v, p = pair.split(":")
                values.append(int(v))
                probs.append(float(p))
            return SyntheticModel(kind, tuple(values), tuple(probs))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"bad source descriptor {text!r}: {exc}") from exc
    raise ConfigError(f"unknown source kind {kind!r}")


def format_source(source, trace_path: Optional[str] = None) -> str:
    if isinstance(source, SyntheticModel):
        if source.kind == "constant":
            return f"constant {source.values[0]}"
        if source.kind == "uniform-integer":
            return f"uniform-integer {source.values[0]} {source.values[1]}"
        pairs = " ".join(f"{v}:{p:.12g}" for v, p in zip(source.values, source.probs))
        return f"{source.kind} {pairs}"
    if isinstance(source, (ArrivalTrace, ChannelTrace)):
        if trace_path is None:
            raise ConfigError("trace sources need a path to serialize")
        return f"trace {trace_path}"
    raise ConfigError(f"cannot serialize source {type(source)}")


_SCALAR_FIELDS = {
    "n_cell": int,
    "horizon": int,
    "t_slot_ms": float,
    "t_obs": int,
    "t_out": int,
    "eta": float,
    "tau": float,
    "seed": int,
    "gmm_components": int,
    "qldr_window": int,
    "controller": str,
    "estimator": str,
    "debug_log": bool,
    "check_invariants": bool,
}


def _convert(name: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"option {name!r}: cannot parse {raw!r} as {typ.__name__}") from None


def load_config(path: str) -> ScenarioConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if "scenario" not in parser:
        raise ConfigError(f"{path}: missing [scenario] section")
    base_dir = os.path.dirname(os.path.abspath(path))

    sc = parser["scenario"]
    kwargs = {}
    for name, typ in _SCALAR_FIELDS.items():
        if name in sc:
            kwargs[name] = _convert(name, sc[name], typ)
    for required in ("n_cell", "horizon"):
        if required not in kwargs:
            raise ConfigError(f"{path}: [scenario] must set {required}")

    anomaly = None
    if "anomaly_service" in sc:
        try:
            anomaly = AnomalyConfig(
                int(sc["anomaly_service"]),
                int(sc["anomaly_start"]),
                int(sc["anomaly_end"]),
                float(sc["anomaly_factor"]),
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: incomplete anomaly block ({exc} missing)") from None

    services = []
    for section in parser.sections():
        if not section.startswith("service."):
            continue
        try:
            sid = int(section.split(".", 1)[1])
        except ValueError:
            raise ConfigError(f"{path}: bad service section name [{section}]") from None
        svc = parser[section]
        for required in ("w_th_ms", "epsilon", "arrival", "channel"):
            if required not in svc:
                raise ConfigError(f"{path}: [{section}] must set {required}")
        services.append(
            ServiceSpec(
                sid,
                _convert("w_th_ms", svc["w_th_ms"], float),
                _convert("epsilon", svc["epsilon"], float),
                parse_source(svc["arrival"], base_dir, channel=False, service_id=sid),
                parse_source(svc["channel"], base_dir, channel=True, service_id=sid),
            )
        )
    if not services:
        raise ConfigError(f"{path}: no [service.N] sections")
    services.sort(key=lambda s: s.id)

    cfg = ScenarioConfig(services=services, anomaly=anomaly, **kwargs)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg


def save_config(cfg: ScenarioConfig, path: str, trace_paths: Optional[dict] = None) -> None:
    """Serialize a scenario so load_config reproduces it (synthetic sources
    round-trip exactly; traces are stored by reference path)."""
    parser = configparser.ConfigParser()
    parser["scenario"] = {}
    sc = parser["scenario"]
    for name in _SCALAR_FIELDS:
        val = getattr(cfg, name)
        sc[name] = str(val).lower() if isinstance(val, bool) else str(val)
    if cfg.anomaly is not None:
        sc["anomaly_service"] = str(cfg.anomaly.service_id)
        sc["anomaly_start"] = str(cfg.anomaly.start_tti)
        sc["anomaly_end"] = str(cfg.anomaly.end_tti)
        sc["anomaly_factor"] = str(cfg.anomaly.factor)
    trace_paths = trace_paths or {}
    for spec in cfg.services:
        section = f"service.{spec.id}"
        parser[section] = {
            "w_th_ms": repr(spec.w_th_ms),
            "epsilon": repr(spec.epsilon),
            "arrival": format_source(spec.arrival, trace_paths.get((spec.id, "arrival"))),
            "channel": format_source(spec.channel, trace_paths.get((spec.id, "channel"))),
        }
    with open(path, "w") as fh:
        parser.write(fh)
