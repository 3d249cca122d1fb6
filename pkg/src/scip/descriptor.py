"""TSN traffic-descriptor extraction from recorded packet arrivals.

A descriptor (w, m, f_max) promises at most m frames of at most f_max
bytes inside any left-open sliding window of duration w. For each
candidate frame count m the tightest window w(m) is the minimum span of
m+1 consecutive arrivals, which keeps the emitted descriptor conformant
to its own trace by construction.

Candidate assessment has two parts:

* ``deviation``: the average packet deficit delta(m), i.e. how far the
  sliding-window occupancy stays below m averaged over window
  positions, integrated exactly (occupancy is a step function changing
  only at arrival times and arrival times shifted left by w). The
  per-candidate profile is exported for analysis.
* frame-count selection: the plain deltas are minimum statistics over
  overlapping spans, so deep candidates (large m, few effective
  windows) dip below the true period's deviation on a sizable fraction
  of noisy traces. Selection therefore groups the IATs by index mod m
  and asks two questions: is the grouping statistically real (one-way
  F-test on the group means), and is the within-group variation at the
  noise floor (pooled unbiased relative variance within a factor of the
  second-smallest candidate)? The result is the smallest frame count
  that explains the trace; a significant grouping makes its divisors
  eligible too, since a real length-m pattern implies its period
  divides m.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .accel import jit_kernel
from .errors import DescriptorDegenerateError, InsufficientDataError, ParameterError

__all__ = [
    "TrafficDescriptor",
    "DeviationCandidate",
    "window_bound",
    "occupancy",
    "deviation",
    "extract_descriptor",
    "write_profile_csv",
]

# selection constants: significance levels for shallow/deep candidates,
# and the adequacy tolerance on the relative within-group variance
_ALPHA_SHALLOW = 1.5e-3
_ALPHA_DEEP = 1e-4
_SHALLOW_MAX_M = 4
_ADEQUACY_FACTOR = 2.0


@dataclass(frozen=True)
class TrafficDescriptor:
    interval_s: float
    max_frames: int
    max_frame_size: int

    def __post_init__(self):
        if not (self.interval_s > 0):
            raise ParameterError(f"interval must be positive, got {self.interval_s}")
        if self.max_frames < 1:
            raise ParameterError(f"max frames must be >= 1, got {self.max_frames}")
        if self.max_frame_size < 1:
            raise ParameterError(f"frame size must be >= 1, got {self.max_frame_size}")

    def to_dict(self) -> dict:
        return {
            "interval_s": self.interval_s,
            "max_frames": self.max_frames,
            "max_frame_size": self.max_frame_size,
        }


@dataclass(frozen=True)
class DeviationCandidate:
    """One evaluated candidate: frame count, window, average deficit."""

    m: int
    window_s: float
    delta: float


def _validated_arrivals(arrivals) -> np.ndarray:
    t = np.asarray(arrivals, dtype=np.float64)
    if t.ndim != 1:
        raise ParameterError("arrivals must be a 1-D vector")
    if t.size >= 2 and np.any(np.diff(t) < 0):
        raise ParameterError("arrivals must be sorted ascending")
    return t


def window_bound(arrivals, m: int) -> float:
    """Tightest window containing at most m frames: min span of m+1 arrivals."""
    t = _validated_arrivals(arrivals)
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if t.size <= m:
        raise InsufficientDataError(f"need more than {m} arrivals, got {t.size}")
    return float((t[m:] - t[:-m]).min())


def occupancy(arrivals, w: float, t: float) -> int:
    """Number of arrivals in the left-open window (t, t + w]."""
    if not (w > 0):
        raise ParameterError(f"window must be positive, got {w}")
    arr = _validated_arrivals(arrivals)
    return int(np.searchsorted(arr, t + w, side="right")
               - np.searchsorted(arr, t, side="right"))


@jit_kernel
def _deficit_integral(arr, w, m, t0, te):
    # occupancy is piecewise constant; breakpoints are the arrivals and
    # the arrivals shifted left by w
    pts = np.concatenate((arr, arr - w))
    pts = pts[(pts > t0) & (pts < te)]
    pts = np.sort(pts)
    total = 0.0
    prev = t0
    for i in range(pts.size + 1):
        cur = te if i == pts.size else pts[i]
        seg = cur - prev
        if seg > 0.0:
            mid = 0.5 * (prev + cur)
            lo = np.searchsorted(arr, mid, side="right")
            hi = np.searchsorted(arr, mid + w, side="right")
            total += (m - (hi - lo)) * seg
        prev = cur
    return total


def deviation(arrivals, m: int) -> float:
    """Average packet deficit delta(m), integrated exactly."""
    t = _validated_arrivals(arrivals)
    w = window_bound(t, m)
    te = float(t[-1]) - w
    t0 = float(t[0])
    if te <= t0:
        raise DescriptorDegenerateError(
            f"window for m={m} spans the whole trace; nothing to integrate"
        )
    return float(_deficit_integral(t, w, m, t0, te)) / (te - t0)


# -- frame-count selection ---------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # Lentz's continued fraction for the incomplete beta function
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    tiny = 1e-300
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) >= tiny else tiny)
    h = d
    for it in range(1, 201):
        m2 = 2 * it
        aa = it * (b - it) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) >= tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) >= tiny else tiny
        h *= d * c
        aa = -(a + it) * (qab + it) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) >= tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) >= tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def _f_survival(f_stat: float, d1: int, d2: int) -> float:
    """P(F(d1, d2) > f_stat)."""
    if not np.isfinite(f_stat):
        return 0.0
    x = d2 / (d2 + d1 * f_stat)
    return _betainc(d2 / 2.0, d1 / 2.0, x)


def _group_stats(iats: np.ndarray, m: int):
    """Mod-m group statistics of the IAT vector.

    Returns (relative within-group variance, pooled dof, raw
    within-group sum of squares); groups with fewer than two samples are
    skipped. Relative variance is inf when a group mean is non-positive.
    """
    idx = np.arange(iats.size) % m
    counts = np.bincount(idx, minlength=m).astype(np.float64)
    sums = np.bincount(idx, weights=iats, minlength=m)
    keep = counts >= 2
    means = np.zeros(m)
    nonzero = counts > 0
    means[nonzero] = sums[nonzero] / counts[nonzero]
    dof = int((counts[keep] - 1).sum())
    if dof == 0:
        return math.inf, 0, math.nan
    sel = keep[idx]
    if np.any(means[keep] <= 0):
        return math.inf, dof, math.nan
    dev = iats[sel] - means[idx][sel]
    ssw = float((dev * dev).sum())
    rel = float(((dev / means[idx][sel]) ** 2).sum()) / dof
    return rel, dof, ssw


def _select_frame_count(iats: np.ndarray, max_m: int) -> int:
    stats = {m: _group_stats(iats, m) for m in range(1, max_m + 1)}
    finite = sorted(rel for rel, dof, _ in stats.values()
                    if dof > 0 and np.isfinite(rel))
    if not finite:
        return 1
    noise_floor = finite[1] if len(finite) > 1 else finite[0]

    mean_all = float(iats.mean())
    sst = float(((iats - mean_all) ** 2).sum())
    significant = []
    for m in range(2, max_m + 1):
        rel, dof, ssw = stats[m]
        if dof <= 0 or not np.isfinite(rel):
            continue
        alpha = _ALPHA_SHALLOW if m <= _SHALLOW_MAX_M else _ALPHA_DEEP
        ssb = max(sst - ssw, 0.0)
        if ssw <= 0.0:
            if ssb > 0.0:
                significant.append(m)
            continue
        f_stat = (ssb / (m - 1)) / (ssw / dof)
        if _f_survival(f_stat, m - 1, dof) < alpha:
            significant.append(m)
    if not significant:
        return 1

    eligible = sorted({d for m in significant
                       for d in range(2, m + 1) if m % d == 0})
    adequate = [d for d in eligible
                if np.isfinite(stats[d][0])
                and stats[d][0] <= _ADEQUACY_FACTOR * noise_floor + 1e-18]
    if adequate:
        return min(adequate)
    return min(significant, key=lambda m: stats[m][0])


def extract_descriptor(arrivals, frame_sizes) -> tuple[TrafficDescriptor, list[DeviationCandidate]]:
    """Pick the best-fitting descriptor over all candidate frame counts.

    Candidates are 1 <= m <= floor(n/2), so at least two full periods fit
    the trace. Returns the descriptor (window from the min-span bound,
    hence conformant to the trace) plus the deviation profile of every
    non-degenerate candidate.
    """
    t = _validated_arrivals(arrivals)
    if t.size < 4:
        raise InsufficientDataError(f"need at least 4 arrivals, got {t.size}")
    sizes = np.asarray(frame_sizes)
    if sizes.size == 0:
        raise ParameterError("frame sizes must be non-empty")

    t0 = float(t[0])
    profile: list[DeviationCandidate] = []
    usable: set[int] = set()
    for m in range(1, t.size // 2 + 1):
        w = window_bound(t, m)
        te = float(t[-1]) - w
        if te <= t0:
            continue
        delta = float(_deficit_integral(t, w, m, t0, te)) / (te - t0)
        profile.append(DeviationCandidate(m, w, delta))
        usable.add(m)
    if not usable:
        raise DescriptorDegenerateError("every candidate window spans the whole trace")

    iats = np.diff(t)
    best_m = _select_frame_count(iats, t.size // 2)
    if best_m not in usable:
        best_m = min(usable, key=lambda m: abs(m - best_m))
    desc = TrafficDescriptor(window_bound(t, best_m), best_m, int(sizes.max()))
    return desc, profile


def write_profile_csv(rows, path, header=("m", "w", "delta")) -> None:
    """Export candidate profiles as CSV rows of (m, w, delta) plus extras."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
