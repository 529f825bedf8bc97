"""Deterministic packet-level single-link simulator.

Time advances in 1 ms ticks over a time-varying (bandwidth, latency)
trace.  The link is a drop-tail FIFO of at most ``buffer_len`` packets;
each tick grants fractional packet-slots to a token accumulator so low
bandwidths accumulate correctly (1 Mbps is about 0.083 packets/ms at a
1500-byte MTU).  Dequeued packets are delivered after the one-way latency
of the interval current at dequeue time, so a latency drop can reorder
in-flight packets.  ACKs return on an uncongested reverse path.

The congestion-control models are deliberately simplified stand-ins for
kernel protocols; their job is to give the search a realistic, noisy
objective, not to be kernel-faithful.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .env import Trace
from .score import PerfSummary

MTU_BYTES = 1500
RTO_FLOOR_MS = 200.0
RTO_CEIL_MS = 60_000.0

EVENT_KINDS = ("send", "enqueue", "drop", "dequeue", "deliver", "ack", "rto", "dupack")


@dataclass
class SimResult:
    """Per-flow outcome of one simulation."""

    summary: PerfSummary
    packets_sent: int
    packets_enqueued: int
    packets_dropped: int
    packets_dequeued: int
    packets_delivered: int
    events: list = field(default_factory=list)  # (time_ms, kind, packet_seq, flow_id)


class CCModel:
    """Base window-based sender. Subclasses adjust cwnd/pacing on feedback."""

    name = "base"

    def __init__(self):
        self.cwnd = 1.0            # packets; never below 1
        self.ssthresh = float("inf")
        self.srtt: Optional[float] = None
        self.rttvar = 0.0

    # -- RTT / RTO -------------------------------------------------------
    def observe_rtt(self, rtt_ms: float) -> None:
        if self.srtt is None:
            self.srtt = rtt_ms
            self.rttvar = rtt_ms / 2
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt_ms)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt_ms

    @property
    def rto_ms(self) -> float:
        if self.srtt is None:
            return 1000.0
        return min(max(self.srtt + 4 * self.rttvar, RTO_FLOOR_MS), RTO_CEIL_MS)

    # -- hooks -----------------------------------------------------------
    def on_ack(self, acked: int, rtt_ms: float, now_ms: float) -> None:
        raise NotImplementedError

    def on_fast_retransmit(self, now_ms: float) -> None:
        self.ssthresh = max(self.cwnd / 2, 2.0)
        self.cwnd = self.ssthresh

    def on_rto(self, now_ms: float) -> None:
        self.ssthresh = max(self.cwnd / 2, 2.0)
        self.cwnd = 1.0

    def pacing_rate_pkts_per_ms(self, now_ms: float) -> Optional[float]:
        """None = pure window-based sending (no pacing limit)."""
        return None


class Reno(CCModel):
    """Slow start + AIMD; halves on triple-dupack, collapses to 1 on RTO."""

    name = "reno"

    def on_ack(self, acked: int, rtt_ms: float, now_ms: float) -> None:
        self.observe_rtt(rtt_ms)
        for _ in range(acked):
            if self.cwnd < self.ssthresh:
                self.cwnd += 1.0
            else:
                self.cwnd += 1.0 / self.cwnd


class Vegas(CCModel):
    """Delay-based cwnd adjustment keeping 2-4 packets queued."""

    name = "vegas"
    ALPHA = 2.0
    BETA = 4.0

    def __init__(self):
        super().__init__()
        self.base_rtt = float("inf")
        self.last_adjust_ms = 0.0
        self.slow_start = True

    def on_ack(self, acked: int, rtt_ms: float, now_ms: float) -> None:
        self.observe_rtt(rtt_ms)
        self.base_rtt = min(self.base_rtt, rtt_ms)
        # Adjust once per RTT using the queue-occupancy estimate
        # diff = cwnd * (1 - base_rtt/rtt) packets.
        if now_ms - self.last_adjust_ms < (self.srtt or rtt_ms):
            return
        self.last_adjust_ms = now_ms
        diff = self.cwnd * (1.0 - self.base_rtt / max(rtt_ms, 1e-9))
        if self.slow_start:
            if diff < 1.0:
                self.cwnd *= 2.0
            else:
                self.slow_start = False
            return
        if diff < self.ALPHA:
            self.cwnd += 1.0
        elif diff > self.BETA:
            self.cwnd = max(self.cwnd - 1.0, 1.0)

    def on_fast_retransmit(self, now_ms: float) -> None:
        super().on_fast_retransmit(now_ms)
        self.base_rtt = self.srtt or self.base_rtt


class BBRLike(CCModel):
    """Paced sender tracking a windowed max delivery-rate estimate.

    Startup doubles the pacing rate each RTT until the bandwidth estimate
    plateaus, then drains, then cycles through the 8-phase gain schedule.
    cwnd caps in-flight data at twice the estimated BDP.
    """

    name = "bbr_like"
    STARTUP_GAIN = 2.885
    DRAIN_GAIN = 1.0 / 2.885
    GAIN_CYCLE = (1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    BW_WINDOW_MS = 2500.0

    def __init__(self):
        super().__init__()
        self.ack_times: deque[tuple[float, int]] = deque()  # (time, pkts acked)
        self.ack_sum = 0
        # Monotonic deque of (time, sample) for a sliding-window max.
        self.bw_window: deque[tuple[float, float]] = deque()
        self.mode = "startup"
        self.phase = 0
        self.phase_start_ms = 0.0
        self.full_bw = 0.0
        self.full_bw_count = 0
        self.min_rtt = float("inf")

    def _max_bw(self) -> float:
        return self.bw_window[0][1] if self.bw_window else 0.25

    def on_ack(self, acked: int, rtt_ms: float, now_ms: float) -> None:
        self.observe_rtt(rtt_ms)
        self.min_rtt = min(self.min_rtt, rtt_ms)
        # Delivery-rate sample: packets acked over the last RTT.
        self.ack_times.append((now_ms, acked))
        self.ack_sum += acked
        horizon = max(self.min_rtt, 10.0)
        while self.ack_times and self.ack_times[0][0] < now_ms - horizon:
            self.ack_sum -= self.ack_times.popleft()[1]
        sample = self.ack_sum / horizon
        while self.bw_window and self.bw_window[-1][1] <= sample:
            self.bw_window.pop()
        self.bw_window.append((now_ms, sample))
        while self.bw_window[0][0] < now_ms - self.BW_WINDOW_MS:
            self.bw_window.popleft()

        bw = self._max_bw()
        if self.mode == "startup":
            if bw >= self.full_bw * 1.25:
                self.full_bw = bw
                self.full_bw_count = 0
            else:
                self.full_bw_count += 1
                if self.full_bw_count >= 3:
                    self.mode = "drain"
                    self.phase_start_ms = now_ms
        elif self.mode == "drain":
            if now_ms - self.phase_start_ms >= self.min_rtt:
                self.mode = "cycle"
                self.phase = 0
                self.phase_start_ms = now_ms
        elif now_ms - self.phase_start_ms >= max(self.min_rtt, 1.0):
            self.phase = (self.phase + 1) % len(self.GAIN_CYCLE)
            self.phase_start_ms = now_ms

        # cwnd bounds in-flight data at 2x BDP.
        bdp = bw * max(self.min_rtt, 1.0)
        self.cwnd = max(2.0 * bdp, 4.0)

    def on_fast_retransmit(self, now_ms: float) -> None:
        pass  # rate-based; loss does not collapse the window

    def on_rto(self, now_ms: float) -> None:
        self.cwnd = max(self.cwnd / 2, 4.0)

    def pacing_rate_pkts_per_ms(self, now_ms: float) -> Optional[float]:
        if self.mode == "startup":
            gain = self.STARTUP_GAIN
        elif self.mode == "drain":
            gain = self.DRAIN_GAIN
        else:
            gain = self.GAIN_CYCLE[self.phase]
        return max(gain * self._max_bw(), 0.05)


MODEL_FACTORIES = {
    "reno": Reno,
    "vegas": Vegas,
    "bbr_like": BBRLike,
}


def make_model(name: str) -> CCModel:
    try:
        return MODEL_FACTORIES[name]()
    except KeyError:
        raise ValueError(f"unknown CC model {name!r}") from None


@dataclass
class _FlowState:
    model: CCModel
    data_packets: Optional[int]       # None = unlimited within trace duration
    next_seq: int = 0
    cum_ack: int = 0                  # next expected seq at receiver, as acked
    dup_acks: int = 0
    recovery_until: int = -1
    in_fast_recovery: bool = False
    rto_mult: float = 1.0
    pace_credit: float = 1.0
    send_times: dict = field(default_factory=dict)     # seq -> first-send time
    retx_seqs: set = field(default_factory=set)        # Karn: no RTT samples
    received: set = field(default_factory=set)
    recv_next: int = 0
    last_progress_ms: float = 0.0
    delivered_pkts: int = 0
    delay_sum: float = 0.0
    completion_ms: Optional[float] = None
    retransmit_now: list = field(default_factory=list)

    def want_more(self) -> bool:
        if self.data_packets is None:
            return True
        return self.next_seq < self.data_packets

    @property
    def pipe(self) -> int:
        """Sender's estimate of packets still in the network."""
        return max(self.next_seq - self.cum_ack - self.dup_acks, 0)


def simulate(trace: Trace, models, seed: int = 0, noise_sigma_ms: float = 0.0,
             collect_events: bool = False) -> list[SimResult]:
    """Run one or two flows over the trace's shared drop-tail link.

    Returns one SimResult per flow, in input order.  Deterministic for a
    fixed (trace, models, seed); noise_sigma_ms adds nonnegative Gaussian
    jitter to per-packet delivery.
    """
    if isinstance(models, (CCModel, str)):
        models = [models]
    flows = []
    data_pkts = None
    if trace.data_size is not None:
        data_pkts = max(1, math.ceil(trace.data_size * 1000 / MTU_BYTES))
    for m in models:
        model = make_model(m) if isinstance(m, str) else m
        flows.append(_FlowState(model=model, data_packets=data_pkts))
    if not 1 <= len(flows) <= 2:
        raise ValueError("simulate supports 1 or 2 flows")

    rng = np.random.default_rng(seed)
    total = trace.total_duration
    # Per-tick interval index lookup.
    boundaries = []
    t_acc = 0
    for iv in trace.intervals:
        t_acc += iv.duration
        boundaries.append(t_acc)

    events: list = []
    counts = [dict.fromkeys(("sent", "enqueued", "dropped", "dequeued", "delivered"), 0)
              for _ in flows]

    def log(t, kind, seq, fid):
        if collect_events:
            events.append((t, kind, seq, fid))

    queue: deque[tuple[int, int, float]] = deque()   # (flow_id, seq, send_time)
    deliveries: list = []  # heap of (time, order, flow_id, seq, send_time)
    acks: list = []        # heap of (time, order, flow_id, ack_seq, rtt_sample)
    order = 0
    tokens = 0.0
    iv_idx = 0
    last_delivery = [0.0] * len(flows)

    for now in range(total):
        while iv_idx < len(boundaries) - 1 and now >= boundaries[iv_idx]:
            iv_idx += 1
        iv = trace.intervals[iv_idx]

        # Deliveries arriving this tick.
        while deliveries and deliveries[0][0] <= now:
            _, _, fid, seq, stime = heapq.heappop(deliveries)
            fl = flows[fid]
            counts[fid]["delivered"] += 1
            log(now, "deliver", seq, fid)
            delay = now - stime
            if seq not in fl.received:
                fl.received.add(seq)
                fl.delivered_pkts += 1
                fl.delay_sum += delay
            dup = seq != fl.recv_next
            while fl.recv_next in fl.received:
                fl.recv_next += 1
            order += 1
            tainted = seq in fl.retx_seqs
            heapq.heappush(acks, (now + iv.latency, order, fid, fl.recv_next,
                                  delay * 2, dup, tainted))
            if (fl.data_packets is not None and fl.completion_ms is None
                    and fl.recv_next >= fl.data_packets):
                fl.completion_ms = now

        # ACKs reaching senders this tick.
        while acks and acks[0][0] <= now:
            _, _, fid, ack_seq, rtt, dup, tainted = heapq.heappop(acks)
            fl = flows[fid]
            if tainted and fl.model.srtt is not None:
                rtt = fl.model.srtt  # Karn: keep the estimator clean
            log(now, "ack", ack_seq, fid)
            if ack_seq > fl.cum_ack:
                newly = ack_seq - fl.cum_ack
                fl.cum_ack = ack_seq
                fl.dup_acks = 0
                if fl.in_fast_recovery and fl.cum_ack < fl.recovery_until:
                    # Partial ack: retransmit the next hole, stay in recovery.
                    # Does not rearm the RTO timer, so a many-hole recovery
                    # eventually falls back to go-back-N.
                    fl.retransmit_now.append(fl.cum_ack)
                else:
                    fl.in_fast_recovery = False
                    fl.last_progress_ms = now
                    fl.rto_mult = 1.0
                fl.model.on_ack(newly, rtt, now)
            elif dup and ack_seq == fl.cum_ack:
                fl.dup_acks += 1
                log(now, "dupack", ack_seq, fid)
                if (fl.dup_acks == 3 and fl.cum_ack >= fl.recovery_until
                        and fl.cum_ack < fl.next_seq):
                    fl.recovery_until = fl.next_seq
                    fl.in_fast_recovery = True
                    fl.model.on_fast_retransmit(now)
                    fl.retransmit_now.append(fl.cum_ack)

        # RTO check: collapse and go-back-N from the last cumulative ack.
        for fid, fl in enumerate(flows):
            if (fl.next_seq > fl.cum_ack
                    and now - fl.last_progress_ms > fl.model.rto_ms * fl.rto_mult):
                log(now, "rto", fl.cum_ack, fid)
                fl.model.on_rto(now)
                fl.recovery_until = fl.next_seq
                fl.next_seq = fl.cum_ack
                fl.dup_acks = 0
                fl.in_fast_recovery = False
                fl.retransmit_now.clear()
                fl.rto_mult = min(fl.rto_mult * 2, 64.0)
                fl.last_progress_ms = now

        # Senders: retransmits first, then new data; two flows interleave.
        for fid, fl in enumerate(flows):
            rate = fl.model.pacing_rate_pkts_per_ms(now)
            if rate is not None:
                fl.pace_credit = min(fl.pace_credit + rate, max(4.0, 2 * rate))

        progress = True
        while progress:
            progress = False
            for fid, fl in enumerate(flows):
                seq = None
                if fl.retransmit_now:
                    seq = fl.retransmit_now.pop(0)
                    retx = True
                else:
                    retx = False
                    paced = fl.model.pacing_rate_pkts_per_ms(now) is not None
                    if (fl.want_more() and fl.pipe < fl.model.cwnd
                            and (not paced or fl.pace_credit >= 1.0)):
                        seq = fl.next_seq
                if seq is None:
                    continue
                progress = True
                if retx:
                    fl.send_times.setdefault(seq, now)
                    fl.retx_seqs.add(seq)
                else:
                    fl.next_seq += 1
                    if seq in fl.send_times:   # go-back-N resend
                        fl.retx_seqs.add(seq)
                    else:
                        fl.send_times[seq] = now
                    if fl.model.pacing_rate_pkts_per_ms(now) is not None:
                        fl.pace_credit -= 1.0
                counts[fid]["sent"] += 1
                log(now, "send", seq, fid)
                if len(queue) < trace.buffer_len:
                    queue.append((fid, seq, fl.send_times[seq]))
                    counts[fid]["enqueued"] += 1
                    log(now, "enqueue", seq, fid)
                else:
                    counts[fid]["dropped"] += 1
                    log(now, "drop", seq, fid)
                assert len(queue) <= trace.buffer_len

        # Link service: grant this tick's packet-slots, drain the queue.
        tokens += iv.bandwidth * 1000.0 / (8.0 * MTU_BYTES)
        while tokens >= 1.0 and queue:
            fid, seq, stime = queue.popleft()
            tokens -= 1.0
            counts[fid]["dequeued"] += 1
            log(now, "dequeue", seq, fid)
            order += 1
            when = now + iv.latency
            if noise_sigma_ms > 0:
                # Jitter delays service but cannot reorder a FIFO link:
                # each flow's deliveries stay monotone in dequeue order.
                when = max(when + abs(rng.normal(0.0, noise_sigma_ms)),
                           last_delivery[fid])
                last_delivery[fid] = when
            heapq.heappush(deliveries, (when, order, fid, seq, stime))
        if not queue:
            tokens = min(tokens, 1.0)  # an idle link does not bank capacity

    results = []
    for fid, fl in enumerate(flows):
        dur_s = total / 1000.0
        bytes_delivered = fl.delivered_pkts * MTU_BYTES
        throughput = bytes_delivered * 8 / (dur_s * 1e6)
        mean_delay = fl.delay_sum / fl.delivered_pkts if fl.delivered_pkts else 0.0
        summary = PerfSummary(throughput=throughput, mean_delay=mean_delay,
                              completion_time=fl.completion_ms,
                              bytes_delivered=bytes_delivered)
        c = counts[fid]
        results.append(SimResult(
            summary=summary,
            packets_sent=c["sent"], packets_enqueued=c["enqueued"],
            packets_dropped=c["dropped"], packets_dequeued=c["dequeued"],
            packets_delivered=c["delivered"],
            events=[e for e in events if e[3] == fid] if collect_events else []))
    return results


def capacity_oracle(trace: Trace) -> PerfSummary:
    """Upper bound on achievable performance for any sender on the trace."""
    total = trace.total_duration
    max_bytes = sum(iv.bandwidth * iv.duration for iv in trace.intervals) * 125
    completion = None
    if trace.data_size is not None:
        need = trace.data_size * 1000
        acc = 0.0
        t = 0
        for iv in trace.intervals:
            rate = iv.bandwidth * 125.0  # bytes per ms
            if acc + rate * iv.duration >= need:
                completion = t + (need - acc) / rate + iv.latency
                break
            acc += rate * iv.duration
            t += iv.duration
    return PerfSummary(throughput=trace.mean_bandwidth(),
                       mean_delay=trace.mean_latency(),
                       completion_time=completion,
                       bytes_delivered=int(max_bytes))


def write_event_log(results: list[SimResult], path) -> None:
    """CSV export of packet events for root-cause analysis."""
    rows = []
    for res in results:
        rows.extend(res.events)
    rows.sort(key=lambda e: (e[0], e[3]))
    with open(path, "w", newline="\n") as f:
        f.write("time_ms,event,packet_id,flow_id\n")
        for t, kind, seq, fid in rows:
            f.write(f"{int(t)},{kind},{seq},{fid}\n")
