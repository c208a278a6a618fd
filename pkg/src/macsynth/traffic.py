"""Packet arrival models (Poisson and bursty AR/VR frames), FIFO queues and
end-to-end delay accounting."""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

PACKET_BYTES = 1500
PACKET_BITS = PACKET_BYTES * 8

LAMBDA_MAX_PPS = 3000.0


@dataclass(frozen=True)
class TrafficSpec:
    """Concrete per-node arrival process.

    ``kind`` is "poisson" (rate ``lambda_pps``) or "arvr" (frame bursts at
    ``fps`` with normally distributed frame sizes, fragmented into fixed-size
    packets released back-to-back at the jittered frame epoch).
    """

    kind: str = "poisson"
    lambda_pps: float = 0.0
    fps: float = 60.0
    frame_bytes_mean: float = 18750.0
    frame_bytes_sigma: float = 1875.0
    frame_jitter_s: float = 1e-3
    packet_bytes: int = PACKET_BYTES

    def validate(self):
        if self.kind not in ("poisson", "arvr"):
            raise ValueError(f"traffic kind {self.kind!r} unknown")
        if not 0.0 <= self.lambda_pps <= LAMBDA_MAX_PPS:
            raise ValueError(
                f"lambda_pps={self.lambda_pps} outside [0, {LAMBDA_MAX_PPS:g}]")
        if self.packet_bytes != PACKET_BYTES:
            raise ValueError(f"packet_bytes must be {PACKET_BYTES}")
        if self.kind == "arvr" and self.fps <= 0:
            raise ValueError("fps must be > 0 for arvr traffic")
        return self

    def offered_bps(self) -> float:
        if self.kind == "poisson":
            return self.lambda_pps * PACKET_BITS
        return self.fps * self.frame_bytes_mean * 8.0


@dataclass
class Packet:
    arrival_time_s: float
    size_bits: int = PACKET_BITS
    delivered_time_s: float | None = None


def arrival_times_s(spec: TrafficSpec, t0_s: float, t1_s: float, rng) -> np.ndarray:
    """Sorted arrival instants in [t0_s, t1_s).

    Poisson windows are generated independently; memorylessness makes the
    restart at t0 exact.  AR/VR frames are anchored to the global fps grid so
    consecutive windows never duplicate or drop a frame; each frame's packets
    share the jittered epoch (clipped into the window).
    """
    if t0_s >= t1_s:
        raise ValueError("need t0 < t1")
    if spec.kind == "poisson":
        if spec.lambda_pps <= 0:
            return np.empty(0, dtype=float)
        dt = t1_s - t0_s
        count = int(rng.poisson(spec.lambda_pps * dt))
        return t0_s + np.sort(rng.random(count)) * dt

    k0 = math.ceil(t0_s * spec.fps - 1e-9)
    k1 = math.ceil(t1_s * spec.fps - 1e-9)
    if k1 <= k0:
        return np.empty(0, dtype=float)
    epochs = np.arange(k0, k1, dtype=float) / spec.fps
    jitter = rng.uniform(-spec.frame_jitter_s, spec.frame_jitter_s, len(epochs))
    frame_bytes = rng.normal(spec.frame_bytes_mean, spec.frame_bytes_sigma,
                             len(epochs))
    times = np.clip(epochs + jitter, t0_s, np.nextafter(t1_s, t0_s))
    npkts = np.maximum(1, np.ceil(frame_bytes / spec.packet_bytes)).astype(int)
    return np.sort(np.repeat(times, npkts))


def generate_arrivals(spec: TrafficSpec, t0_s: float, t1_s: float, rng):
    """Packet objects for the window [t0_s, t1_s)."""
    return [Packet(arrival_time_s=float(t))
            for t in arrival_times_s(spec, t0_s, t1_s, rng)]


def arrival_times_us(spec: TrafficSpec, t0_us: int, t1_us: int, rng):
    """Integer-microsecond arrival instants for the simulation engine."""
    times = arrival_times_s(spec, t0_us * 1e-6, t1_us * 1e-6, rng)
    out = np.ceil(times * 1e6 - 1e-9).astype(np.int64)
    return np.clip(out, t0_us, t1_us - 1).tolist()


def packets_fitting(budget_us: float, rate_bps: float, size_bits: int,
                    available: int) -> int:
    """How many fixed-size packets fit front-first into an airtime budget."""
    if budget_us <= 0 or available <= 0:
        return 0
    k = int(budget_us * rate_bps / (size_bits * 1e6))
    return min(k, available)


def drain_queue(queue, budget_us: float, rate_bps: float, success: bool,
                grant_start_s: float):
    """Serve a FIFO queue within an airtime budget.

    On success the served packets are delivered (delivered_time stamps the end
    of each packet's own transmission); on failure nothing leaves the queue, so
    the same packets retransmit later and conservation holds exactly.
    Returns (delivered, queue).
    """
    if budget_us < 0:
        raise ValueError("budget_us must be >= 0")
    delivered = []
    if not success or not queue:
        return delivered, queue
    head = queue[0]
    n = packets_fitting(budget_us, rate_bps, head.size_bits, len(queue))
    airtime_s = head.size_bits / rate_bps
    for i in range(n):
        pkt = queue.popleft()
        pkt.delivered_time_s = grant_start_s + (i + 1) * airtime_s
        delivered.append(pkt)
    return delivered, queue


def mean_delay_s(delivered):
    """Mean end-to-end delay.  Returns (mean, defined); empty input is (0, False)."""
    if not delivered:
        return 0.0, False
    total = 0.0
    for pkt in delivered:
        if pkt.delivered_time_s is None:
            raise ValueError("packet has no delivery time")
        total += pkt.delivered_time_s - pkt.arrival_time_s
    return total / len(delivered), True


def new_queue(packets=()):
    return deque(packets)
