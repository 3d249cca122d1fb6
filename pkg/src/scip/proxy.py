"""The stream classification and integration proxy.

Packets are associated to streams by their IP 5-tuple and recorded per
stream. Once a stream reaches the decision threshold the processing
chain runs: CoV feature -> periodicity classifier -> descriptor
extraction -> QoS resolution -> announcement to the admission
controller -> identification-rule installation on the switch. Aperiodic
streams are left as best-effort traffic; a stream is announced at most
once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cnc import CncResponse, TalkerAnnouncement
from .descriptor import TrafficDescriptor, extract_descriptor
from .errors import DescriptorDegenerateError, ParameterError, ProtocolError
from .features import CovAccumulator, cov_sequence
from .qosmap import ApplicationId, QosRequirements, resolve_qos

log = logging.getLogger(__name__)

__all__ = ["PacketRecord", "StreamKey", "StreamState", "StreamRecord",
           "ProxyConfig", "StreamProxy"]

NS_PER_S = 1_000_000_000


@dataclass(frozen=True)
class PacketRecord:
    """One observed frame."""

    t_ns: int
    src_ip: str
    dst_ip: str
    protocol: str
    src_port: int
    dst_port: int
    frame_size: int

    def __post_init__(self):
        if self.frame_size < 1:
            raise ParameterError(f"frame size must be >= 1, got {self.frame_size}")
        if self.protocol not in ("udp", "tcp"):
            raise ParameterError(f"unsupported protocol {self.protocol!r}")

    @property
    def key(self) -> "StreamKey":
        return StreamKey(self.src_ip, self.dst_ip, self.protocol,
                         self.src_port, self.dst_port)


@dataclass(frozen=True)
class StreamKey:
    src_ip: str
    dst_ip: str
    protocol: str
    src_port: int
    dst_port: int


class StreamState(Enum):
    COLLECTING = "collecting"
    CLASSIFIED_APERIODIC = "classified_aperiodic"
    ANNOUNCED = "announced"
    REJECTED = "rejected"


@dataclass
class StreamRecord:
    key: StreamKey
    arrivals_ns: list[int] = field(default_factory=list)
    frame_sizes: list[int] = field(default_factory=list)
    state: StreamState = StreamState.COLLECTING
    cov: CovAccumulator = field(default_factory=CovAccumulator)
    confidence: float | None = None
    descriptor: TrafficDescriptor | None = None
    qos: QosRequirements | None = None
    application: ApplicationId | None = None
    vlan_id: int | None = None
    pcp: int | None = None
    reject_reason: str = ""
    drift_events: int = 0
    last_seen_ns: int = 0

    @property
    def packet_count(self) -> int:
        return len(self.arrivals_ns)


@dataclass(frozen=True)
class ProxyConfig:
    decide_after: int = 20
    classify_threshold: float = 0.9
    idle_timeout_s: float = 60.0
    registered: frozenset[StreamKey] = frozenset()

    def __post_init__(self):
        if self.decide_after < 4:
            raise ParameterError("decision threshold must be >= 4 packets")
        if not (0 < self.classify_threshold < 1):
            raise ParameterError("classification threshold must be in (0, 1)")


class StreamProxy:
    """Stage orchestration over a stream table.

    ``cnc`` needs an ``announce(TalkerAnnouncement) -> CncResponse``
    method; ``switches`` is a list of objects with
    ``install_rule(key, vlan_id, pcp) -> bool``. Already-registered TSN
    streams (config) are filtered at ingest and counted.
    """

    def __init__(self, model, qos_db, detector, cnc, switches,
                 config: ProxyConfig | None = None):
        self.model = model
        self.qos_db = qos_db
        self.detector = detector
        self.cnc = cnc
        self.switches = list(switches)
        self.config = config or ProxyConfig()
        self.streams: dict[StreamKey, StreamRecord] = {}
        self.announcement_log: list[dict] = []
        self.counters = {
            "packets": 0,
            "filtered_registered": 0,
            "out_of_order": 0,
            "malformed": 0,
            "announced": 0,
            "rejected": 0,
            "classified_aperiodic": 0,
            "gc_evicted": 0,
        }

    # -- ingest ---------------------------------------------------------

    def ingest(self, packet: PacketRecord) -> StreamRecord | None:
        """Record one packet; runs the pipeline at the decision threshold.

        Returns the affected stream record, or None if the packet was
        filtered or rejected at ingest.
        """
        self.counters["packets"] += 1
        key = packet.key
        if key in self.config.registered:
            self.counters["filtered_registered"] += 1
            return None
        rec = self.streams.get(key)
        if rec is None:
            rec = StreamRecord(key=key)
            self.streams[key] = rec
        if rec.arrivals_ns and packet.t_ns < rec.arrivals_ns[-1]:
            self.counters["out_of_order"] += 1
            return None
        rec.arrivals_ns.append(packet.t_ns)
        rec.frame_sizes.append(packet.frame_size)
        rec.cov.add(packet.t_ns / NS_PER_S)
        rec.last_seen_ns = packet.t_ns

        if rec.state is StreamState.ANNOUNCED:
            self._track_drift(rec)
        elif (rec.state is StreamState.COLLECTING
              and rec.packet_count == self.config.decide_after):
            self.run_pipeline(rec)
        self._garbage_collect(packet.t_ns)
        return rec

    def _track_drift(self, rec: StreamRecord) -> None:
        # count descriptor-window violations on announced streams
        d = rec.descriptor
        if d is None or rec.packet_count < d.max_frames + 1:
            return
        t = rec.arrivals_ns
        span_s = (t[-1] - t[-1 - d.max_frames]) / NS_PER_S
        if span_s < d.interval_s:
            rec.drift_events += 1
            log.debug("descriptor drift on %s: %d frames inside %.9fs < w=%.9fs",
                      rec.key, d.max_frames + 1, span_s, d.interval_s)

    def _garbage_collect(self, now_ns: int) -> None:
        timeout_ns = int(self.config.idle_timeout_s * NS_PER_S)
        stale = [k for k, r in self.streams.items()
                 if r.state is StreamState.COLLECTING
                 and now_ns - r.last_seen_ns > timeout_ns]
        for k in stale:
            del self.streams[k]
            self.counters["gc_evicted"] += 1

    # -- pipeline ---------------------------------------------------------

    def run_pipeline(self, rec: StreamRecord, now_s: float | None = None) -> StreamState:
        """Classify, describe, resolve QoS, and announce one stream."""
        if rec.packet_count < self.config.decide_after:
            raise ParameterError(
                f"stream has {rec.packet_count} packets, "
                f"need {self.config.decide_after} to decide"
            )
        arrivals_s = np.asarray(rec.arrivals_ns, dtype=np.float64) / NS_PER_S
        rec.confidence = self.model.forward(_cov_steps(arrivals_s))
        if rec.confidence <= self.config.classify_threshold:
            rec.state = StreamState.CLASSIFIED_APERIODIC
            self.counters["classified_aperiodic"] += 1
            return rec.state
        try:
            rec.descriptor, _ = extract_descriptor(arrivals_s, rec.frame_sizes)
        except DescriptorDegenerateError as exc:
            rec.state = StreamState.CLASSIFIED_APERIODIC
            rec.reject_reason = f"descriptor degenerate: {exc}"
            self.counters["classified_aperiodic"] += 1
            return rec.state
        rec.application = self.detector.detect(rec)
        rec.qos = resolve_qos(rec.application, rec.descriptor, self.qos_db)
        return self.announce(rec, now_s)

    def announce(self, rec: StreamRecord, now_s: float | None = None) -> StreamState:
        """Send the announcement; on admit, configure switch identification."""
        announcement = TalkerAnnouncement(rec.key, rec.descriptor, rec.qos)
        try:
            response = self.cnc.announce(announcement)
        except ProtocolError as exc:
            # malformed response: stay in collecting so a later packet retries
            log.warning("protocol error announcing %s: %s", rec.key, exc)
            rec.reject_reason = str(exc)
            return rec.state
        if not response.admitted:
            rec.state = StreamState.REJECTED
            rec.reject_reason = response.reason
            self.counters["rejected"] += 1
            return rec.state
        return self.configure_identification(rec, response, now_s)

    def configure_identification(self, rec: StreamRecord, response: CncResponse,
                                 now_s: float | None = None) -> StreamState:
        for switch in self.switches:
            if not switch.install_rule(rec.key, response.vlan_id, response.pcp):
                rec.state = StreamState.REJECTED
                rec.reject_reason = "switch rejected identification rule"
                self.counters["rejected"] += 1
                log.warning("switch nack for %s", rec.key)
                return rec.state
        rec.state = StreamState.ANNOUNCED
        rec.vlan_id = response.vlan_id
        rec.pcp = response.pcp
        self.counters["announced"] += 1
        self.announcement_log.append({
            "time_s": now_s if now_s is not None else rec.last_seen_ns / NS_PER_S,
            "stream": vars(rec.key).copy() if hasattr(rec.key, "__dict__") else {
                "src": rec.key.src_ip, "dst": rec.key.dst_ip,
                "proto": rec.key.protocol, "sport": rec.key.src_port,
                "dport": rec.key.dst_port,
            },
            "packets_seen": rec.packet_count,
            "confidence": rec.confidence,
            "descriptor": rec.descriptor.to_dict(),
            "qos": rec.qos.to_dict(),
            "application": rec.application.name,
            "vlan_id": response.vlan_id,
            "pcp": response.pcp,
        })
        return rec.state


def _cov_steps(arrivals_s: np.ndarray) -> np.ndarray:
    from .features import cov_sequence

    return cov_sequence(arrivals_s)
