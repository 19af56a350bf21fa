import math

import numpy as np
import pytest
from scipy.stats import kstest

from darca_ncs_tuning.network import (
    ACCEPTED,
    BYPASSED,
    DISCARDED,
    DROPPED,
    ChannelConfig,
    ChannelState,
    DelayLaw,
    NetworkException,
    Packet,
    TsoBuffer,
    channel_poll,
    channel_rng,
    channel_send,
    channel_stats,
    log_rows,
    run_channel_audit,
    tso_accept,
)


class ScriptedRng:
    """Stands in for a Generator: fixed drop draws, then fixed uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_drop_everything():
    law = DelayLaw.uniform(0.0, 0.05)
    state = run_channel_audit(ChannelConfig(1.0, law), 500, 0.01)
    stats = channel_stats(state.log, law)
    assert stats.delivered_count == 0
    assert stats.dropped_count == 500
    assert stats.drop_rate == 1.0


def test_zero_delay_delivers_in_order():
    cfg = ChannelConfig()
    state = ChannelState()
    rng = channel_rng(0, 0)
    seen = []
    for k in range(50):
        channel_send(cfg, state, state.stamp(float(k), k * 0.01), rng)
        seen.extend(p.seq for p in channel_poll(state, k * 0.01))
    assert seen == list(range(50))


def test_drop_rate_over_many_packets():
    cfg = ChannelConfig(0.1, DelayLaw.constant(0.0))
    state = run_channel_audit(cfg, 100_000, 0.01, seed=11)
    rate = channel_stats(state.log, cfg.delay).drop_rate
    assert 0.094 <= rate <= 0.106


def test_late_packet_arrives_after_newer_one():
    # packet 0 waits 0.03 s, packet 1 only 0.005 s
    cfg = ChannelConfig(0.0, DelayLaw.uniform(0.0, 0.05))
    state = ChannelState()
    rng = ScriptedRng([0.5, 0.6, 0.5, 0.1])
    channel_send(cfg, state, state.stamp(10.0, 0.0), rng)
    channel_send(cfg, state, state.stamp(11.0, 0.01), rng)
    delivered = channel_poll(state, 0.031)
    assert [p.seq for p in delivered] == [1, 0]
    assert delivered[0].delivery_time == pytest.approx(0.015)
    assert delivered[1].delivery_time == pytest.approx(0.03)

    buffer = TsoBuffer()
    assert tso_accept(buffer, delivered[0]) is True
    assert tso_accept(buffer, delivered[1]) is False
    assert buffer.held_value == 11.0


def test_poll_removes_delivered_packets():
    cfg = ChannelConfig(0.0, DelayLaw.constant(0.02))
    state = ChannelState()
    rng = channel_rng(0, 0)
    channel_send(cfg, state, state.stamp(1.0, 0.0), rng)
    assert channel_poll(state, 0.01) == []
    assert len(channel_poll(state, 0.02)) == 1
    assert channel_poll(state, 0.03) == []
    assert state.in_flight == []


def test_tso_accepts_only_newer_sequence_numbers():
    buffer = TsoBuffer()
    assert tso_accept(buffer, Packet(1, 1.0, 0.0, 0.1))
    assert tso_accept(buffer, Packet(3, 3.0, 0.0, 0.1))
    assert not tso_accept(buffer, Packet(2, 2.0, 0.0, 0.1))
    assert not tso_accept(buffer, Packet(3, 9.0, 0.0, 0.1))
    assert buffer.last_seq == 3
    assert buffer.held_value == 3.0


def test_every_packet_is_accounted_for():
    cfg = ChannelConfig(0.2, DelayLaw.uniform(0.0, 0.05))
    state = run_channel_audit(cfg, 2_000, 0.01, seed=5)
    stats = channel_stats(state.log, cfg.delay)
    assert stats.sent_count == 2_000
    assert stats.delivered_count + stats.dropped_count + stats.in_flight_count == 2_000
    assert stats.in_flight_count == 0
    assert stats.tso_accepted_count + stats.tso_discarded_count == stats.delivered_count
    assert sum(stats.delay_histogram) == 2_000


def test_accepted_sequence_is_strictly_increasing():
    cfg = ChannelConfig(0.05, DelayLaw.uniform(0.0, 0.05))
    state = ChannelState()
    buffer = TsoBuffer()
    rng = channel_rng(3, 0)
    accepted = []
    for k in range(3_000):
        channel_send(cfg, state, state.stamp(float(k), k * 0.01), rng)
        for packet in channel_poll(state, k * 0.01):
            if tso_accept(buffer, packet):
                accepted.append(packet.seq)
    assert accepted
    assert all(b > a for a, b in zip(accepted, accepted[1:]))


def test_audit_is_deterministic():
    cfg = ChannelConfig(0.1, DelayLaw.truncated_normal(0.03, 0.02, 0.0, 0.1))
    first = run_channel_audit(cfg, 1_000, 0.01, seed=9)
    second = run_channel_audit(cfg, 1_000, 0.01, seed=9)
    assert log_rows(first.log) == log_rows(second.log)
    other = run_channel_audit(cfg, 1_000, 0.01, seed=10)
    assert log_rows(first.log) != log_rows(other.log)


def test_streams_differ_per_channel_and_replicate():
    draws = {
        key: channel_rng(*key).random(3).tolist()
        for key in [(0, 0, 0), (0, 1, 0), (0, 0, 1)]
    }
    assert len({tuple(v) for v in draws.values()}) == 3


def test_uniform_delays_pass_ks_test():
    law = DelayLaw.uniform(0.0, 0.1)
    state = run_channel_audit(ChannelConfig(0.1, law), 20_000, 0.01, seed=1)
    delays = [r.delay for r in state.log.values()]
    statistic = kstest(delays, "uniform", args=(0.0, 0.1)).statistic
    # 1% critical value of the one-sample KS statistic
    assert statistic < 1.63 / math.sqrt(len(delays))


@pytest.mark.parametrize(
    "law",
    [
        DelayLaw.truncated_normal(0.05, 0.03, 0.0, 0.1),
        DelayLaw.truncated_exponential(30.0, 0.0, 0.1),
        DelayLaw.uniform(0.02, 0.04),
    ],
)
def test_samples_stay_within_bounds(law):
    rng = np.random.default_rng(0)
    samples = [law.sample(rng) for _ in range(2_000)]
    assert min(samples) >= law.lo
    assert max(samples) <= law.hi


def test_constant_law_fills_one_histogram_bin():
    law = DelayLaw.constant(0.02)
    state = run_channel_audit(ChannelConfig(0.0, law), 100, 0.01)
    stats = channel_stats(state.log, law)
    assert sum(1 for c in stats.delay_histogram if c) == 1
    assert stats.tso_discarded_count == 0


def test_jittery_delays_cause_discards():
    cfg = ChannelConfig(0.0, DelayLaw.uniform(0.0, 0.05))
    state = run_channel_audit(cfg, 2_000, 0.01, seed=2)
    assert channel_stats(state.log, cfg.delay).tso_discarded_count > 0


def test_bypass_when_buffer_disabled():
    cfg = ChannelConfig(0.0, DelayLaw.uniform(0.0, 0.05))
    state = run_channel_audit(cfg, 500, 0.01, tso_enabled=False, seed=2)
    outcomes = {r.outcome for r in state.log.values()}
    assert outcomes == {BYPASSED}


def test_log_rows_mark_drops():
    cfg = ChannelConfig(0.5, DelayLaw.constant(0.01))
    state = run_channel_audit(cfg, 200, 0.01, seed=4)
    rows = log_rows(state.log)
    assert [row[0] for row in rows] == list(range(200))
    for seq, _, delivery, outcome in rows:
        if outcome == DROPPED:
            assert delivery == "DROP"
        else:
            assert outcome in (ACCEPTED, DISCARDED)
            assert delivery == pytest.approx(seq * 0.01 + 0.01)


def test_unreachable_truncation_fails_cleanly():
    law = DelayLaw.truncated_normal(10.0, 0.01, 0.0, 0.1)
    with pytest.raises(NetworkException) as exc:
        law.sample(np.random.default_rng(0))
    assert exc.value.error_code == "DELAY_SAMPLING_ERROR"


def test_time_must_not_run_backwards():
    cfg = ChannelConfig()
    state = ChannelState()
    rng = channel_rng(0, 0)
    channel_send(cfg, state, state.stamp(0.0, 0.1), rng)
    with pytest.raises(NetworkException) as exc:
        channel_send(cfg, state, state.stamp(0.0, 0.05), rng)
    assert exc.value.error_code == "NON_MONOTONIC_TIME"
    channel_poll(state, 0.2)
    with pytest.raises(NetworkException):
        channel_poll(state, 0.1)


@pytest.mark.parametrize(
    "build, code",
    [
        (lambda: DelayLaw("pareto", 0.0, 1.0), "UNKNOWN_DELAY_LAW"),
        (lambda: DelayLaw.uniform(0.1, 0.0), "INVALID_CHANNEL_CONFIG"),
        (
            lambda: DelayLaw.truncated_normal(0.0, 0.0, 0.0, 1.0),
            "INVALID_CHANNEL_CONFIG",
        ),
        (
            lambda: DelayLaw.truncated_exponential(-1.0, 0.0, 1.0),
            "INVALID_CHANNEL_CONFIG",
        ),
        (lambda: ChannelConfig(1.5), "INVALID_CHANNEL_CONFIG"),
    ],
)
def test_invalid_channel_configs(build, code):
    with pytest.raises(NetworkException) as exc:
        build()
    assert exc.value.error_code == code
