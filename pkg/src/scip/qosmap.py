"""Application detection stub and QoS-requirement resolution.

The proxy's last stage maps a stream to the QoS parameters needed for a
TSN announcement: stream rank, maximum latency, and the number of
redundant disjoint paths. Known applications come from a pluggable
detector (the shipped stub matches transport protocol + destination
port against a config table); unknown applications fall back to an
industrial traffic-class table keyed on the extracted interval.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Protocol

from .descriptor import TrafficDescriptor
from .errors import ConfigError

__all__ = [
    "StreamRank",
    "ApplicationId",
    "QosRequirements",
    "FallbackClass",
    "QosDatabase",
    "ApplicationDetector",
    "PortTableDetector",
    "resolve_qos",
    "load_qos_database",
    "default_qos_database",
    "UNKNOWN_APP",
]

UNKNOWN_APP = "unknown"


class StreamRank(str, Enum):
    EMERGENCY = "emergency"
    NORMAL = "normal"


@dataclass(frozen=True)
class ApplicationId:
    name: str
    confidence: float = 1.0

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", UNKNOWN_APP)

    @property
    def is_unknown(self) -> bool:
        return self.name == UNKNOWN_APP


@dataclass(frozen=True)
class QosRequirements:
    stream_rank: StreamRank
    max_latency_s: float
    redundant_paths: int

    def __post_init__(self):
        if not (self.max_latency_s > 0):
            raise ConfigError(f"max latency must be positive, got {self.max_latency_s}")
        if self.redundant_paths < 1:
            raise ConfigError(f"redundant paths must be >= 1, got {self.redundant_paths}")

    def to_dict(self) -> dict:
        return {
            "rank": self.stream_rank.value,
            "max_latency_s": self.max_latency_s,
            "paths": self.redundant_paths,
        }


@dataclass(frozen=True)
class FallbackClass:
    """One traffic class: applies to intervals up to max_period_s (None = catch-all)."""

    max_period_s: float | None
    requirements: QosRequirements


class QosDatabase:
    """Immutable app-name and interval-fallback lookup, validated at load."""

    def __init__(self, apps: dict[str, QosRequirements], fallback: list[FallbackClass]):
        if not fallback:
            raise ConfigError("fallback table must not be empty")
        bounds = [fc.max_period_s for fc in fallback]
        if bounds[-1] is not None:
            raise ConfigError("fallback table needs a final catch-all class (max_period_s null)")
        finite = [b for b in bounds if b is not None]
        if any(b is None for b in bounds[:-1]):
            raise ConfigError("only the final fallback class may be a catch-all")
        if any(not (b > 0) for b in finite):
            raise ConfigError("fallback period bounds must be positive")
        if any(b2 <= b1 for b1, b2 in zip(finite, finite[1:])):
            raise ConfigError("fallback period bounds must be strictly increasing")
        self._apps = dict(apps)
        self._fallback = list(fallback)

    @property
    def fallback(self) -> list[FallbackClass]:
        return list(self._fallback)

    def lookup_app(self, name: str) -> QosRequirements | None:
        return self._apps.get(name)

    def fallback_for_interval(self, interval_s: float) -> QosRequirements:
        for fc in self._fallback:
            if fc.max_period_s is None or interval_s <= fc.max_period_s:
                return fc.requirements
        # unreachable: the last class is a catch-all
        return self._fallback[-1].requirements


class ApplicationDetector(Protocol):
    """Pluggable application detection; replaceable without touching the pipeline."""

    def detect(self, stream) -> ApplicationId: ...


class PortTableDetector:
    """Stub detector: transport protocol + destination port -> application name.

    The table maps keys like ``"udp/5004"`` to names; anything else is
    reported as unknown.
    """

    def __init__(self, table: dict[str, str]):
        self._table = {}
        for key, name in table.items():
            proto, _, port = key.partition("/")
            if proto.lower() not in ("udp", "tcp") or not port.isdigit():
                raise ConfigError(f"bad detector table key {key!r} (want 'udp/<port>' or 'tcp/<port>')")
            if not name:
                raise ConfigError(f"empty application name for {key!r}")
            self._table[(proto.lower(), int(port))] = name

    def detect(self, stream) -> ApplicationId:
        key = stream.key
        name = self._table.get((key.protocol, key.dst_port))
        if name is None:
            return ApplicationId(UNKNOWN_APP, 1.0)
        return ApplicationId(name, 1.0)


def resolve_qos(app: ApplicationId, descriptor: TrafficDescriptor,
                db: QosDatabase) -> QosRequirements:
    """Database entry for a known app; interval-based fallback class otherwise."""
    if not app.is_unknown:
        entry = db.lookup_app(app.name)
        if entry is not None:
            return entry
    return db.fallback_for_interval(descriptor.interval_s)


def _requirements_from_dict(d: dict, where: str) -> QosRequirements:
    try:
        rank = StreamRank(d["rank"])
        return QosRequirements(rank, float(d["max_latency_s"]), int(d["paths"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed QoS entry at {where}: {exc}") from exc


def parse_qos_database(doc: dict) -> QosDatabase:
    apps = {
        name: _requirements_from_dict(entry, f"apps.{name}")
        for name, entry in doc.get("apps", {}).items()
    }
    fallback = []
    for i, entry in enumerate(doc.get("fallback", [])):
        bound = entry.get("max_period_s")
        fallback.append(FallbackClass(
            None if bound is None else float(bound),
            _requirements_from_dict(entry, f"fallback[{i}]"),
        ))
    return QosDatabase(apps, fallback)


def load_qos_database(path) -> QosDatabase:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load QoS database {path}: {exc}") from exc
    return parse_qos_database(doc)


def default_qos_database() -> QosDatabase:
    text = resources.files("scip.data").joinpath("default_qos.json").read_text("utf-8")
    return parse_qos_database(json.loads(text))


def default_detector_table() -> dict[str, str]:
    text = resources.files("scip.data").joinpath("default_qos.json").read_text("utf-8")
    return dict(json.loads(text).get("detector", {}))
