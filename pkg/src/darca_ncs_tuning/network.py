"""
network.py

Packet-level model of one network path: Bernoulli drop, stochastic delay
and a time-stamp-order (TSO) receive buffer.

Packets carry an integer sequence stamp assigned at send. A channel keeps
the packets in flight in a heap ordered by (delivery_time, seq) and a log
of every packet's fate, from which ``channel_stats`` derives counts and a
delay histogram.
"""

import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from darca_exception.exception import DarcaException
from darca_log_facility.logger import DarcaLogger

# Initialize the logger
logger = DarcaLogger(name="network").get_logger()

DELAY_LAWS = ("uniform", "truncated_normal", "truncated_exponential", "constant")
MAX_REJECTION_DRAWS = 10_000

SC_CHANNEL_ID = 0
CA_CHANNEL_ID = 1

DROPPED = "dropped"
IN_FLIGHT = "in_flight"
DELIVERED = "delivered"
ACCEPTED = "accepted"
DISCARDED = "discarded"
BYPASSED = "bypassed"


class NetworkException(DarcaException):
    """
    Custom exception for channel configuration and sampling errors.
    Inherits from DarcaException to provide structured logging,
    metadata handling, and optional chaining of original exceptions.
    """

    def __init__(self, message, error_code=None, metadata=None, cause=None):
        super().__init__(
            message=message,
            error_code=error_code or "NETWORK_ERROR",
            metadata=metadata,
            cause=cause,
        )


@dataclass(frozen=True)
class DelayLaw:
    """
    Delay distribution bounded to [lo, hi] seconds.

    ``uniform`` uses lo/hi; ``truncated_normal`` adds mean/sd;
    ``truncated_exponential`` is lo + Exp(rate) with rate in 1/s;
    ``constant`` has lo == hi == the delay.
    """

    law: str
    lo: float
    hi: float
    mean: Optional[float] = None
    sd: Optional[float] = None
    rate: Optional[float] = None

    def __post_init__(self):
        problems = []
        if self.law not in DELAY_LAWS:
            raise NetworkException(
                message=f"Unknown delay law: {self.law}",
                error_code="UNKNOWN_DELAY_LAW",
                metadata={"law": self.law, "known": list(DELAY_LAWS)},
            )
        if not (0.0 <= self.lo <= self.hi) or not math.isfinite(self.hi):
            problems.append("bounds must satisfy 0 <= lo <= hi")
        if self.law == "truncated_normal" and (
            self.mean is None or self.sd is None or not self.sd > 0.0
        ):
            problems.append("truncated_normal needs mean and sd > 0")
        if self.law == "truncated_exponential" and (
            self.rate is None or not self.rate > 0.0
        ):
            problems.append("truncated_exponential needs rate > 0")
        if self.law == "constant" and self.lo != self.hi:
            problems.append("constant law needs lo == hi")
        if problems:
            raise NetworkException(
                message="; ".join(problems),
                error_code="INVALID_CHANNEL_CONFIG",
                metadata=self.to_dict(),
            )

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "DelayLaw":
        return cls("uniform", lo, hi)

    @classmethod
    def truncated_normal(cls, mean: float, sd: float, lo: float, hi: float):
        return cls("truncated_normal", lo, hi, mean=mean, sd=sd)

    @classmethod
    def truncated_exponential(cls, rate: float, lo: float, hi: float):
        return cls("truncated_exponential", lo, hi, rate=rate)

    @classmethod
    def constant(cls, d: float) -> "DelayLaw":
        return cls("constant", d, d)

    def sample(self, rng: np.random.Generator) -> float:
        """
        Draw one delay. Truncated laws resample until inside [lo, hi].

        Raises:
            NetworkException: If rejection sampling cannot hit the bounds.
        """
        if self.law == "constant":
            return self.lo
        if self.law == "uniform":
            return self.lo + (self.hi - self.lo) * rng.random()
        for _ in range(MAX_REJECTION_DRAWS):
            if self.law == "truncated_normal":
                value = rng.normal(self.mean, self.sd)
            else:
                value = self.lo + rng.exponential(1.0 / self.rate)
            if self.lo <= value <= self.hi:
                return float(value)
        raise NetworkException(
            message="Rejection sampling never landed inside the delay bounds",
            error_code="DELAY_SAMPLING_ERROR",
            metadata=self.to_dict(),
        )

    def to_dict(self) -> dict:
        data = {"law": self.law, "lo": self.lo, "hi": self.hi}
        for key in ("mean", "sd", "rate"):
            value = getattr(self, key)
            if value is not None:
                data[key] = value
        if self.law == "constant":
            data = {"law": "constant", "d": self.lo}
        return data


@dataclass(frozen=True)
class ChannelConfig:
    drop_prob: float = 0.0
    delay: DelayLaw = field(default_factory=lambda: DelayLaw.constant(0.0))
    seed: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.drop_prob <= 1.0):
            raise NetworkException(
                message="drop_prob must lie in [0, 1]",
                error_code="INVALID_CHANNEL_CONFIG",
                metadata={"drop_prob": self.drop_prob},
            )

    def to_dict(self) -> dict:
        data = {"drop_prob": self.drop_prob, "delay": self.delay.to_dict()}
        if self.seed is not None:
            data["seed"] = self.seed
        return data


@dataclass(frozen=True)
class Packet:
    seq: int
    payload: float
    send_time: float
    delivery_time: Optional[float] = None

    @property
    def dropped(self) -> bool:
        return self.delivery_time is None


@dataclass
class LogRecord:
    seq: int
    send_time: float
    delay: float
    delivery_time: Optional[float]
    outcome: str


@dataclass
class ChannelState:
    """In-flight packets plus the per-packet log of one channel."""

    in_flight: list = field(default_factory=list)
    log: Dict[int, LogRecord] = field(default_factory=dict)
    next_seq: int = 0
    last_send_time: float = -math.inf
    last_poll_time: float = -math.inf

    def stamp(self, payload: float, send_time: float) -> Packet:
        """Create the next packet with a fresh sequence number."""
        packet = Packet(self.next_seq, float(payload), send_time)
        self.next_seq += 1
        return packet

    def record_outcome(self, seq: int, outcome: str) -> None:
        self.log[seq].outcome = outcome


@dataclass
class TsoBuffer:
    last_seq: Optional[int] = None
    held_value: float = 0.0


def channel_rng(master_seed: int, channel_id: int, replicate: int = 0):
    """Independent stream for (seed, channel, replicate) via SeedSequence."""
    return np.random.default_rng(
        np.random.SeedSequence([int(master_seed), int(channel_id), int(replicate)])
    )


def channel_send(
    cfg: ChannelConfig,
    state: ChannelState,
    packet: Packet,
    rng: np.random.Generator,
) -> ChannelState:
    """
    Put *packet* on the channel.

    The drop draw comes first and the delay draw is consumed either way,
    so the delay stream does not depend on the drop outcomes.

    Raises:
        NetworkException: If packets are sent out of time order.
    """
    if packet.send_time < state.last_send_time:
        raise NetworkException(
            message="Packets must be sent in non-decreasing time order",
            error_code="NON_MONOTONIC_TIME",
            metadata={
                "send_time": packet.send_time,
                "last_send_time": state.last_send_time,
            },
        )
    state.last_send_time = packet.send_time
    dropped = rng.random() < cfg.drop_prob
    delay = cfg.delay.sample(rng)
    if dropped:
        state.log[packet.seq] = LogRecord(
            packet.seq, packet.send_time, delay, None, DROPPED
        )
        return state
    delivery = packet.send_time + delay
    state.log[packet.seq] = LogRecord(
        packet.seq, packet.send_time, delay, delivery, IN_FLIGHT
    )
    heapq.heappush(
        state.in_flight,
        (
            delivery,
            packet.seq,
            Packet(packet.seq, packet.payload, packet.send_time, delivery),
        ),
    )
    return state


def channel_poll(state: ChannelState, now: float) -> List[Packet]:
    """
    Remove and return every packet due by *now*, in delivery order
    (ties by seq).
    """
    if now < state.last_poll_time:
        raise NetworkException(
            message="Poll times must be non-decreasing",
            error_code="NON_MONOTONIC_TIME",
            metadata={"now": now, "last_poll_time": state.last_poll_time},
        )
    state.last_poll_time = now
    delivered = []
    while state.in_flight and state.in_flight[0][0] <= now:
        _, seq, packet = heapq.heappop(state.in_flight)
        state.log[seq].outcome = DELIVERED
        delivered.append(packet)
    return delivered


def tso_accept(buffer: TsoBuffer, packet: Packet) -> bool:
    """Accept only packets strictly newer than the last accepted one."""
    if buffer.last_seq is not None and packet.seq <= buffer.last_seq:
        return False
    buffer.last_seq = packet.seq
    buffer.held_value = packet.payload
    return True


@dataclass
class ChannelStats:
    sent_count: int
    delivered_count: int
    dropped_count: int
    in_flight_count: int
    tso_accepted_count: int
    tso_discarded_count: int
    delay_histogram: List[int]
    bin_edges: List[float]

    @property
    def drop_rate(self) -> float:
        return self.dropped_count / self.sent_count if self.sent_count else 0.0

    def to_dict(self) -> dict:
        return {
            "sent_count": self.sent_count,
            "delivered_count": self.delivered_count,
            "dropped_count": self.dropped_count,
            "in_flight_count": self.in_flight_count,
            "tso_accepted_count": self.tso_accepted_count,
            "tso_discarded_count": self.tso_discarded_count,
            "drop_rate": self.drop_rate,
            "delay_histogram": self.delay_histogram,
            "bin_edges": self.bin_edges,
        }


def channel_stats(
    log: Dict[int, LogRecord], law: DelayLaw, bins: int = 20
) -> ChannelStats:
    """
    Summarize a channel log. Delivered counts every packet that left the
    channel, whatever the buffer did with it; the histogram covers the
    law's [lo, hi] and includes the delays drawn for dropped packets.
    """
    records = list(log.values())
    dropped = sum(1 for r in records if r.outcome == DROPPED)
    in_flight = sum(1 for r in records if r.outcome == IN_FLIGHT)
    accepted = sum(1 for r in records if r.outcome in (ACCEPTED, BYPASSED))
    discarded = sum(1 for r in records if r.outcome == DISCARDED)
    delivered = len(records) - dropped - in_flight
    delays = np.array([r.delay for r in records], dtype=float)
    counts, edges = np.histogram(delays, bins=bins, range=(law.lo, law.hi))
    stats = ChannelStats(
        sent_count=len(records),
        delivered_count=delivered,
        dropped_count=dropped,
        in_flight_count=in_flight,
        tso_accepted_count=accepted,
        tso_discarded_count=discarded,
        delay_histogram=[int(c) for c in counts],
        bin_edges=[float(e) for e in edges],
    )
    logger.debug(f"Channel stats: {stats.to_dict()}")
    return stats


def log_rows(log: Dict[int, LogRecord]) -> List[Sequence]:
    """CSV rows (seq, send_time, delivery_time_or_DROP, tso_outcome)."""
    rows = []
    for seq in sorted(log):
        record = log[seq]
        delivery = "DROP" if record.delivery_time is None else record.delivery_time
        rows.append((record.seq, record.send_time, delivery, record.outcome))
    return rows


def run_channel_audit(
    cfg: ChannelConfig,
    packets: int,
    ts: float,
    tso_enabled: bool = True,
    seed: int = 0,
) -> ChannelState:
    """
    Push *packets* time-driven packets through one channel and its
    receive buffer, then drain it. Payload is the sample index.
    """
    master = cfg.seed if cfg.seed is not None else seed
    rng = channel_rng(master, SC_CHANNEL_ID, 0)
    state = ChannelState()
    buffer = TsoBuffer()
    for k in range(packets):
        now = k * ts
        channel_send(cfg, state, state.stamp(k, now), rng)
        receive_into(state, buffer, channel_poll(state, now), tso_enabled)
    receive_into(state, buffer, channel_poll(state, math.inf), tso_enabled)
    logger.info(f"Channel audit pushed {packets} packets (drop_prob={cfg.drop_prob})")
    return state


def receive_into(
    state: ChannelState,
    buffer: TsoBuffer,
    packets: List[Packet],
    tso_enabled: bool,
) -> None:
    """Pass delivered packets through the buffer, logging each outcome."""
    for packet in packets:
        if not tso_enabled:
            buffer.last_seq = packet.seq
            buffer.held_value = packet.payload
            state.record_outcome(packet.seq, BYPASSED)
        elif tso_accept(buffer, packet):
            state.record_outcome(packet.seq, ACCEPTED)
        else:
            state.record_outcome(packet.seq, DISCARDED)
