"""Labeled artificial dataset of periodic and aperiodic packet streams.

Four stream classes are generated from inter-arrival-time (IAT) vectors:

* ``pure_periodic`` - IATs drawn i.i.d. from a truncated normal
  ``max(0, N(p, (c*p)^2))`` around the target period ``p``.
* ``pattern`` - a repeating mask of ``m`` factors applied to the base
  draws, producing ``m`` packets per period.
* ``near_periodic`` - a pure periodic stream (c = 0.01) in which one
  interior packet is delayed as far as the empirical coefficient of
  variation allows; labeled aperiodic.
* ``aperiodic`` - truncated-normal IATs with a large coefficient of
  variation.

All draws flow through an explicit seed so identical inputs reproduce
identical streams, byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ParameterError

__all__ = [
    "StreamLabel",
    "GenParams",
    "PatternMask",
    "LabeledStream",
    "DatasetSpec",
    "gen_pure_periodic",
    "gen_pattern_mask",
    "gen_periodic_pattern",
    "gen_near_periodic",
    "gen_aperiodic",
    "generate_sample",
    "build_dataset",
    "load_dataset",
    "dataset_record",
    "sample_from_record",
]

PERIODIC_COV_MAX = 0.05
NEAR_PERIODIC_COV = 0.01
NEAR_PERIODIC_COV_LIMIT = 0.04


class StreamLabel(str, Enum):
    PURE_PERIODIC = "pure_periodic"
    PATTERN = "pattern"
    NEAR_PERIODIC = "near_periodic"
    APERIODIC = "aperiodic"

    @property
    def is_periodic(self) -> bool:
        """Ground-truth binary target: only the first two classes count."""
        return self in (StreamLabel.PURE_PERIODIC, StreamLabel.PATTERN)


@dataclass(frozen=True)
class GenParams:
    """Generation parameters for one stream."""

    period_p: float
    cov_c: float
    n_packets: int
    pattern_m: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (self.period_p > 0):
            raise ParameterError(f"period must be positive, got {self.period_p}")
        if self.cov_c < 0:
            raise ParameterError(f"coefficient of variation must be >= 0, got {self.cov_c}")
        if self.pattern_m < 1:
            raise ParameterError(f"pattern length must be >= 1, got {self.pattern_m}")
        if self.n_packets < 2 * self.pattern_m:
            raise ParameterError(
                f"need at least two full periods: n_packets={self.n_packets}, "
                f"pattern_m={self.pattern_m}"
            )


@dataclass(frozen=True)
class PatternMask:
    """IAT scaling factors; the last entry is pinned to exactly 1."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.size < 1:
            raise ParameterError("mask must be a non-empty vector")
        if vals[-1] != 1.0:
            raise ParameterError("mask must end in exactly 1")
        if np.any(vals < 0) or np.any(vals > 1):
            raise ParameterError("mask values must lie in [0, 1]")

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class LabeledStream:
    """One dataset sample: label, generation parameters, IAT vector."""

    label: StreamLabel
    params: GenParams
    iats: np.ndarray
    split: str | None = None

    def __post_init__(self):
        iats = np.asarray(self.iats, dtype=np.float64)
        object.__setattr__(self, "iats", iats)
        if iats.size != self.params.n_packets - 1:
            raise ParameterError(
                f"expected {self.params.n_packets - 1} IATs, got {iats.size}"
            )
        if np.any(iats < 0):
            raise ParameterError("negative IAT")

    @property
    def arrivals(self) -> np.ndarray:
        """Arrival timestamps starting at 0."""
        out = np.empty(self.iats.size + 1)
        out[0] = 0.0
        np.cumsum(self.iats, out=out[1:])
        return out


def _rng_of(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def _truncated_normal(rng: np.random.Generator, mu: float, cov: float, count: int) -> np.ndarray:
    """``max(0, N(mu, (cov*mu)^2))`` draws; exact mu when cov == 0."""
    return np.maximum(0.0, rng.normal(mu, cov * mu, count))


def _cov_of(x: np.ndarray) -> float:
    """Population coefficient of variation; 0 for an all-zero vector."""
    mean = float(x.mean())
    if mean == 0.0:
        return 0.0
    return float(x.std() / mean)


def gen_pure_periodic(params: GenParams, rng: np.random.Generator | None = None) -> LabeledStream:
    """Single packet per period: i.i.d. truncated-normal IATs."""
    if params.pattern_m != 1:
        raise ParameterError("pure periodic streams have pattern_m = 1")
    if not (0 <= params.cov_c < PERIODIC_COV_MAX):
        raise ParameterError(
            f"pure periodic class requires c in [0, {PERIODIC_COV_MAX}), got {params.cov_c}"
        )
    rng = _rng_of(rng if rng is not None else params.seed)
    iats = _truncated_normal(rng, params.period_p, params.cov_c, params.n_packets - 1)
    return LabeledStream(StreamLabel.PURE_PERIODIC, params, iats)


def gen_pattern_mask(m: int, seed_or_rng) -> PatternMask:
    """``m - 1`` uniform draws in (0, 1) followed by the literal value 1."""
    if m < 2:
        raise ParameterError(f"pattern mask needs m >= 2, got {m}")
    rng = _rng_of(seed_or_rng)
    vals = rng.random(m - 1)
    while True:
        zeros = vals == 0.0
        if not zeros.any():
            break
        vals[zeros] = rng.random(int(zeros.sum()))
    return PatternMask(np.concatenate([vals, [1.0]]))


def gen_periodic_pattern(
    params: GenParams,
    mask: PatternMask,
    rng: np.random.Generator | None = None,
) -> LabeledStream:
    """Apply the mask consecutively to base draws.

    Base IATs are drawn with mean ``p / sum(mask)`` so that one full
    pattern of ``m`` packets spans the period ``p`` in expectation and
    the mean IAT is ``p / m``.
    """
    if len(mask) != params.pattern_m:
        raise ParameterError(
            f"mask length {len(mask)} != pattern_m {params.pattern_m}"
        )
    if not (0 <= params.cov_c < PERIODIC_COV_MAX):
        raise ParameterError(
            f"pattern class requires c in [0, {PERIODIC_COV_MAX}), got {params.cov_c}"
        )
    rng = _rng_of(rng if rng is not None else params.seed)
    count = params.n_packets - 1
    base_mu = params.period_p / float(mask.values.sum())
    base = _truncated_normal(rng, base_mu, params.cov_c, count)
    reps = -(-count // len(mask))
    factors = np.tile(mask.values, reps)[:count]
    return LabeledStream(StreamLabel.PATTERN, params, base * factors)


def _largest_delay(iats: np.ndarray, j: int, limit: float, rel_tol: float = 1e-9) -> float:
    """Largest packet delay d keeping the overall CoV strictly below ``limit``.

    Delaying packet j extends iats[j-1] by d and shrinks iats[j] by d, so
    the mean is invariant and the variance is a convex quadratic in d.
    The feasible region is an interval; its upper edge is found by
    bisection on the monotone branch beyond the variance minimum, capped
    at iats[j] to keep all IATs non-negative.
    """
    mean = float(iats.mean())
    if mean <= 0.0:
        raise ParameterError("degenerate base stream (zero mean IAT)")

    def cov_at(d: float) -> float:
        shifted = iats.copy()
        shifted[j - 1] += d
        shifted[j] -= d
        return float(shifted.std()) / mean

    if cov_at(0.0) >= limit:
        raise ParameterError("base stream already exceeds the variation limit")
    cap = float(iats[j])
    if cov_at(cap) < limit:
        return cap
    lo = max(0.0, (float(iats[j]) - float(iats[j - 1])) / 2.0)
    hi = cap
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if cov_at(mid) < limit:
            lo = mid
        else:
            hi = mid
    return lo


def gen_near_periodic(
    params: GenParams,
    rng: np.random.Generator | None = None,
    max_delay_index: int | None = None,
    cov_limit: float = NEAR_PERIODIC_COV_LIMIT,
) -> LabeledStream:
    """Pure periodic stream with a single delayed interior packet.

    The delayed packet index is drawn uniformly from
    ``[1, min(n_packets - 2, max_delay_index)]``; the delay is the
    largest value keeping the empirical CoV over all IATs below
    ``cov_limit``. Ground truth is aperiodic.
    """
    if params.n_packets < 4:
        raise ParameterError("near-periodic streams need at least 4 packets")
    if params.cov_c != NEAR_PERIODIC_COV:
        raise ParameterError(
            f"near-periodic class fixes c = {NEAR_PERIODIC_COV}, got {params.cov_c}"
        )
    rng = _rng_of(rng if rng is not None else params.seed)
    iats = _truncated_normal(rng, params.period_p, params.cov_c, params.n_packets - 1)
    hi = params.n_packets - 2
    if max_delay_index is not None:
        hi = min(hi, max_delay_index)
    if hi < 1:
        raise ParameterError("no valid interior packet index")
    j = int(rng.integers(1, hi + 1))
    d = _largest_delay(iats, j, cov_limit)
    iats[j - 1] += d
    iats[j] -= d
    return LabeledStream(StreamLabel.NEAR_PERIODIC, params, iats)


def gen_aperiodic(params: GenParams, rng: np.random.Generator | None = None) -> LabeledStream:
    """High-variation truncated-normal IATs; labeled aperiodic."""
    if not (PERIODIC_COV_MAX <= params.cov_c <= 1.0):
        raise ParameterError(
            f"aperiodic class requires c in [{PERIODIC_COV_MAX}, 1], got {params.cov_c}"
        )
    rng = _rng_of(rng if rng is not None else params.seed)
    iats = _truncated_normal(rng, params.period_p, params.cov_c, params.n_packets - 1)
    return LabeledStream(StreamLabel.APERIODIC, params, iats)


@dataclass(frozen=True)
class DatasetSpec:
    """Per-class sample counts and parameter ranges for the shipped dataset.

    ``counts`` follows the order (pure periodic, pattern m=2, pattern m=3,
    pattern m=4, near periodic, aperiodic). Periods are sampled
    log-uniformly, covering all six decades of the range evenly.
    ``near_outlier_horizon`` bounds the delayed-packet index so the
    injected outlier is observable once that many packets have been
    seen (both perturbed IATs lie within the first horizon-1 IATs).
    """

    counts: tuple[int, int, int, int, int, int] = (2000, 668, 666, 666, 2000, 2000)
    n_packets: int = 36
    period_range: tuple[float, float] = (1e-6, 1.0)
    periodic_cov_range: tuple[float, float] = (0.0, PERIODIC_COV_MAX)
    aperiodic_cov_range: tuple[float, float] = (PERIODIC_COV_MAX, 1.0)
    near_cov: float = NEAR_PERIODIC_COV
    near_outlier_horizon: int = 15

    def __post_init__(self):
        if len(self.counts) != 6 or any(c < 0 for c in self.counts):
            raise ParameterError("counts must be six non-negative integers")
        lo, hi = self.period_range
        if not (0 < lo <= hi):
            raise ParameterError("invalid period range")
        if self.n_packets < 8:
            raise ParameterError("dataset streams need at least 8 packets")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def max_delay_index(self) -> int:
        return self.near_outlier_horizon - 2


def generate_sample(
    label: StreamLabel,
    params: GenParams,
    max_delay_index: int | None = None,
) -> LabeledStream:
    """Re-create a sample from its recorded class and parameters.

    For pattern streams the mask is drawn first from the sample seed,
    then the base IATs, so one seed pins down the whole stream.
    """
    if label is StreamLabel.PURE_PERIODIC:
        return gen_pure_periodic(params)
    if label is StreamLabel.PATTERN:
        rng = np.random.default_rng(params.seed)
        mask = gen_pattern_mask(params.pattern_m, rng)
        return gen_periodic_pattern(params, mask, rng=rng)
    if label is StreamLabel.NEAR_PERIODIC:
        return gen_near_periodic(params, max_delay_index=max_delay_index)
    if label is StreamLabel.APERIODIC:
        return gen_aperiodic(params)
    raise ParameterError(f"unknown label {label!r}")


def dataset_record(stream: LabeledStream) -> dict:
    """JSON-serializable record for one sample (documented JSONL schema)."""
    p = stream.params
    return {
        "label": stream.label.value,
        "p": p.period_p,
        "c": p.cov_c,
        "m": p.pattern_m,
        "n": p.n_packets,
        "seed": p.seed,
        "split": stream.split,
        "iats": [float(v) for v in stream.iats],
    }


def sample_from_record(rec: dict) -> LabeledStream:
    params = GenParams(
        period_p=rec["p"],
        cov_c=rec["c"],
        n_packets=rec["n"],
        pattern_m=rec["m"],
        seed=rec["seed"],
    )
    return LabeledStream(StreamLabel(rec["label"]), params, np.asarray(rec["iats"]), rec.get("split"))


def build_dataset(out_path, spec: DatasetSpec | None = None, seed: int = 0) -> int:
    """Generate the labeled dataset and write it as JSONL.

    Samples are written in class order with an alternating train/test
    assignment inside each class, giving an exactly stratified 50/50
    split. Identical (spec, seed) inputs produce byte-identical files.
    Returns the number of samples written.
    """
    spec = spec or DatasetSpec()
    rng = np.random.default_rng(seed)
    log_lo, log_hi = math.log(spec.period_range[0]), math.log(spec.period_range[1])
    seed_max = np.iinfo(np.uint64).max

    plan = [
        (StreamLabel.PURE_PERIODIC, spec.counts[0], 1),
        (StreamLabel.PATTERN, spec.counts[1], 2),
        (StreamLabel.PATTERN, spec.counts[2], 3),
        (StreamLabel.PATTERN, spec.counts[3], 4),
        (StreamLabel.NEAR_PERIODIC, spec.counts[4], 1),
        (StreamLabel.APERIODIC, spec.counts[5], 1),
    ]

    lines = []
    for label, count, m in plan:
        for i in range(count):
            p = math.exp(rng.uniform(log_lo, log_hi))
            if label is StreamLabel.NEAR_PERIODIC:
                c = spec.near_cov
            elif label is StreamLabel.APERIODIC:
                c = float(rng.uniform(*spec.aperiodic_cov_range))
            else:
                c = float(rng.uniform(*spec.periodic_cov_range))
            sample_seed = int(rng.integers(0, seed_max, dtype=np.uint64, endpoint=True))
            params = GenParams(p, c, spec.n_packets, m, sample_seed)
            stream = generate_sample(label, params, max_delay_index=spec.max_delay_index)
            stream = replace(stream, split="train" if i % 2 == 0 else "test")
            lines.append(json.dumps(dataset_record(stream)))

    path = Path(out_path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return len(lines)


def load_dataset(path, split: str | None = None) -> list[LabeledStream]:
    """Read a JSONL dataset, optionally filtered to one split."""
    streams = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            stream = sample_from_record(json.loads(line))
            if split is None or stream.split == split:
                streams.append(stream)
    return streams
