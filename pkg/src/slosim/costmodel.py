"""Profiled latency models.

Two cost models drive every scheduling decision:

* :class:`DecodeStepLUT` maps (batch size, sequence length) to a mean decode
  step time, profiled offline and updated online from observed step times.
* :class:`PrefillThroughputEstimator` keeps a duration-weighted running
  estimate of prefill throughput (tokens per second).

Lookup values are float microseconds so that a bucket always reads back as
the exact arithmetic mean of the observations folded into it; event
timestamps elsewhere in the system remain integer microseconds.
"""

from __future__ import annotations

import bisect
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import ConfigurationError, SimTime, US_PER_S

DEFAULT_BSZ_BUCKETS = [1, 2, 4, 8, 16, 32, 64, 128, 256]
DEFAULT_SEQ_BUCKETS = [8192 * k for k in range(1, 33)]
DEFAULT_BATCH_GROWTH = 0.03
DEFAULT_PRIOR_WEIGHT = 100


def _interp_clamped(points: list[tuple[int, float]], x: float) -> float:
    """Piecewise-linear interpolation over sorted (x, y) points, edge-clamped.

    Pure-Python on purpose: exact at the nodes and free of compiler-dependent
    fused-multiply-add behaviour, so independent reimplementations of the
    same expression are bit-identical.
    """
    if x <= points[0][0]:
        return float(points[0][1])
    if x >= points[-1][0]:
        return float(points[-1][1])
    xs = [p[0] for p in points]
    k = bisect.bisect_right(xs, x) - 1
    x0, y0 = points[k]
    x1, y1 = points[k + 1]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def decode_step_formula(
    base_points: list[tuple[int, float]], batch_growth: float, bsz: int, seq_len: int
) -> float:
    """Generating formula behind synthesized decode profiles, in microseconds.

    ``base_points`` are single-request (seq_len, step_us) anchors; batching
    multiplies the base cost by ``1 + batch_growth * (bsz - 1)``.
    """
    return _interp_clamped(base_points, seq_len) * (1.0 + batch_growth * (bsz - 1))


class DecodeStepLUT:
    """Decode step-time table over a (batch-size x sequence-length) grid.

    Each populated cell stores the exact sum and count of the observations
    folded into it; the cell mean is their ratio. Off-grid queries resolve by
    linear interpolation between populated cells, clamped at the edges.
    Observations fold into the smallest bucket >= the observed key (clamped
    to the last bucket).
    """

    def __init__(
        self,
        bsz_buckets: list[int] | None = None,
        seq_buckets: list[int] | None = None,
    ) -> None:
        self.bsz_buckets = list(DEFAULT_BSZ_BUCKETS) if bsz_buckets is None else list(bsz_buckets)
        self.seq_buckets = list(DEFAULT_SEQ_BUCKETS) if seq_buckets is None else list(seq_buckets)
        for buckets, name in ((self.bsz_buckets, "bsz"), (self.seq_buckets, "seq")):
            if not buckets or any(b < 1 for b in buckets):
                raise ValueError(f"{name} buckets must be non-empty and >= 1")
            if any(a >= b for a, b in zip(buckets, buckets[1:])):
                raise ValueError(f"{name} buckets must be strictly increasing")
        nb, ns = len(self.bsz_buckets), len(self.seq_buckets)
        self._sums: list[list[float]] = [[0] * ns for _ in range(nb)]
        self._counts: list[list[int]] = [[0] * ns for _ in range(nb)]
        self._populated = 0
        self._row_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._pop_rows: list[int] | None = []

    @property
    def is_empty(self) -> bool:
        return self._populated == 0

    def observation_count(self, bsz: int, seq_len: int) -> int:
        i = self._bucket_index(self.bsz_buckets, bsz)
        j = self._bucket_index(self.seq_buckets, seq_len)
        return self._counts[i][j]

    @staticmethod
    def _bucket_index(buckets: list[int], value: int) -> int:
        # Smallest bucket >= value, clamped to the last bucket.
        i = bisect.bisect_left(buckets, value)
        return min(i, len(buckets) - 1)

    def _invalidate(self, row: int) -> None:
        self._row_cache.pop(row, None)
        self._pop_rows = None

    def _seed_cell(self, i: int, j: int, value_us: float, weight: int) -> None:
        if weight == 0:
            return
        if self._counts[i][j] == 0:
            self._populated += 1
        self._sums[i][j] = value_us * weight
        self._counts[i][j] = weight
        self._invalidate(i)

    def update(self, bsz: int, max_seq_len: int, observed_us: SimTime) -> None:
        """Fold one observed step time into the bucket containing the key."""
        if observed_us <= 0:
            raise ValueError("observed step time must be positive")
        i = self._bucket_index(self.bsz_buckets, bsz)
        j = self._bucket_index(self.seq_buckets, max_seq_len)
        if self._counts[i][j] == 0:
            self._populated += 1
        self._sums[i][j] += observed_us
        self._counts[i][j] += 1
        self._invalidate(i)

    def mean_at(self, i: int, j: int) -> float:
        count = self._counts[i][j]
        if count == 0:
            raise ValueError(f"bucket ({i}, {j}) has no observations")
        return self._sums[i][j] / count

    def _populated_rows(self) -> list[int]:
        if self._pop_rows is None:
            self._pop_rows = [
                i for i, row in enumerate(self._counts) if any(c > 0 for c in row)
            ]
        return self._pop_rows

    def _row_points(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        cached = self._row_cache.get(i)
        if cached is None:
            cols = [j for j, c in enumerate(self._counts[i]) if c > 0]
            xs = np.array([self.seq_buckets[j] for j in cols], dtype=float)
            ys = np.array([self._sums[i][j] / self._counts[i][j] for j in cols])
            cached = (xs, ys)
            self._row_cache[i] = cached
        return cached

    def _row_eval(self, i: int, seq_len: int) -> float:
        xs, ys = self._row_points(i)
        return float(np.interp(seq_len, xs, ys))

    def lookup(self, bsz: int, seq_len: int) -> float:
        """Step time in float microseconds for a (batch size, seq len) query.

        Bilinear over the populated grid; queries outside it clamp to the
        nearest populated edge. A query hitting a populated grid point
        returns that cell's mean exactly.
        """
        if self.is_empty:
            raise ConfigurationError("decode step LUT has no populated entries")
        if bsz < 1 or seq_len < 1:
            raise ValueError("bsz and seq_len must be >= 1")
        i = bisect.bisect_left(self.bsz_buckets, bsz)
        j = bisect.bisect_left(self.seq_buckets, seq_len)
        exact_b = i < len(self.bsz_buckets) and self.bsz_buckets[i] == bsz
        exact_s = j < len(self.seq_buckets) and self.seq_buckets[j] == seq_len
        if exact_b and exact_s and self._counts[i][j] > 0:
            return self.mean_at(i, j)
        rows = self._populated_rows()
        row_bszs = [self.bsz_buckets[r] for r in rows]
        k = bisect.bisect_left(row_bszs, bsz)
        if k == 0:
            return self._row_eval(rows[0], seq_len)
        if k == len(rows):
            return self._row_eval(rows[-1], seq_len)
        if row_bszs[k] == bsz:
            return self._row_eval(rows[k], seq_len)
        lo, hi = rows[k - 1], rows[k]
        v_lo = self._row_eval(lo, seq_len)
        v_hi = self._row_eval(hi, seq_len)
        b_lo, b_hi = row_bszs[k - 1], row_bszs[k]
        return v_lo + (v_hi - v_lo) * (bsz - b_lo) / (b_hi - b_lo)

    def to_dict(self) -> dict:
        nb, ns = len(self.bsz_buckets), len(self.seq_buckets)
        entries = [
            [self._sums[i][j] / self._counts[i][j] if self._counts[i][j] else 0.0 for j in range(ns)]
            for i in range(nb)
        ]
        return {
            "bsz_buckets": list(self.bsz_buckets),
            "seq_buckets": list(self.seq_buckets),
            "entries_us": entries,
            "counts": [list(row) for row in self._counts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecodeStepLUT":
        try:
            lut = cls(data["bsz_buckets"], data["seq_buckets"])
            entries = data["entries_us"]
            counts = data["counts"]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed profile: {exc}") from exc
        nb, ns = len(lut.bsz_buckets), len(lut.seq_buckets)
        if len(entries) != nb or len(counts) != nb:
            raise ConfigurationError("profile grid shape does not match bsz_buckets")
        for i in range(nb):
            if len(entries[i]) != ns or len(counts[i]) != ns:
                raise ConfigurationError("profile grid shape does not match seq_buckets")
            for j in range(ns):
                c = counts[i][j]
                if c < 0:
                    raise ConfigurationError("profile counts must be >= 0")
                if c > 0:
                    if entries[i][j] <= 0:
                        raise ConfigurationError("populated entries must be positive")
                    lut._sums[i][j] = entries[i][j] * c
                    lut._counts[i][j] = c
                    lut._populated += 1
        lut._pop_rows = None
        return lut


@dataclass
class PrefillThroughputEstimator:
    """Duration-weighted running estimate of prefill tokens per second."""

    total_tokens: int = 0
    total_busy_us: SimTime = 0

    @classmethod
    def seeded(cls, tokens: int, duration_us: SimTime) -> "PrefillThroughputEstimator":
        est = cls()
        est.update(tokens, duration_us)
        return est

    @property
    def is_seeded(self) -> bool:
        return self.total_busy_us > 0

    @property
    def mu_tokens_per_s(self) -> float:
        if not self.is_seeded:
            raise ConfigurationError("prefill throughput estimator is unseeded")
        return self.total_tokens / (self.total_busy_us / US_PER_S)

    def update(self, tokens: int, duration_us: SimTime) -> None:
        if duration_us <= 0:
            raise ValueError("duration must be positive")
        if tokens < 0:
            raise ValueError("tokens must be non-negative")
        self.total_tokens += tokens
        self.total_busy_us += duration_us

    def estimate_duration_us(self, tokens: int) -> SimTime:
        """Predicted time to prefill ``tokens``, rounded up to the microsecond."""
        if not self.is_seeded or self.total_tokens == 0:
            raise ConfigurationError("prefill throughput estimator is unseeded")
        if tokens == 0:
            return 0
        # ceil(tokens * busy / total) in exact integer arithmetic
        return -((-tokens * self.total_busy_us) // self.total_tokens)


def synth_profile_from_anchors(
    anchors: list[tuple[int, int, SimTime]],
    batch_growth: float = DEFAULT_BATCH_GROWTH,
    *,
    bsz_buckets: list[int] | None = None,
    seq_buckets: list[int] | None = None,
    prior_weight: int = DEFAULT_PRIOR_WEIGHT,
) -> DecodeStepLUT:
    """Build a full decode LUT from a few measured (bsz, seq_len, step_us) anchors.

    Single-request anchors define the base curve over sequence length; batch
    cost grows by ``batch_growth`` per extra request. Every grid cell is
    seeded with ``prior_weight`` pseudo-observations so that online updates
    blend in gradually; anchor cells are pinned to their measured values.
    """
    if batch_growth < 0:
        raise ValueError("batch_growth must be >= 0")
    if prior_weight < 0:
        raise ValueError("prior_weight must be >= 0")
    base = sorted((seq, float(us)) for bsz, seq, us in anchors if bsz == 1)
    if not base:
        raise ValueError("need at least one anchor at bsz=1")
    for (s0, t0), (s1, t1) in zip(base, base[1:]):
        if t1 <= t0:
            warnings.warn(
                f"anchor step time does not increase with seq_len ({s0}->{s1})",
                stacklevel=2,
            )
            break
    lut = DecodeStepLUT(bsz_buckets, seq_buckets)
    for i, b in enumerate(lut.bsz_buckets):
        for j, s in enumerate(lut.seq_buckets):
            value = round(decode_step_formula(base, batch_growth, b, s))
            lut._seed_cell(i, j, max(1, value), prior_weight)
    for bsz, seq, us in anchors:
        i = lut._bucket_index(lut.bsz_buckets, bsz)
        j = lut._bucket_index(lut.seq_buckets, seq)
        lut._seed_cell(i, j, us, prior_weight)
    return lut


def save_profile(path: str, lut: DecodeStepLUT, prefill_anchor: tuple[int, SimTime]) -> None:
    data = lut.to_dict()
    data["prefill_anchor"] = {
        "tokens": prefill_anchor[0],
        "duration_us": prefill_anchor[1],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def load_profile(path: str) -> tuple[DecodeStepLUT, tuple[int, SimTime]]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    lut = DecodeStepLUT.from_dict(data)
    try:
        anchor = data["prefill_anchor"]
        prefill = (int(anchor["tokens"]), int(anchor["duration_us"]))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed profile: {exc}") from exc
    if prefill[0] <= 0 or prefill[1] <= 0:
        raise ConfigurationError("prefill anchor must be positive")
    return lut, prefill
