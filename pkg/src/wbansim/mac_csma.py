"""Beacon-enabled slotted CSMA/CA with criticality-differentiated backoff.

The coordinator beacons every beacon interval; awake nodes contend during the
active portion using the slotted algorithm: random backoff in unit backoff
periods, two clear CCAs at consecutive backoff boundaries, binary exponential
escalation on busy, channel-access failure after too many attempts.  Critical
nodes start from a smaller backoff exponent than non-critical ones
(min_be_critical <= min_be_noncritical), which is what buys them lower
latency under contention.

Transactions are acknowledged: a missing ack restarts the CSMA procedure with
fresh backoff state, up to max_frame_retries, after which the frame drops.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .core import BROADCAST_ID, BNC_ID, Criticality, Frame, FrameKind, SimTime, TrafficClass
from .channel import CcaResult
from .engine import Event, EventKind

BASE_SLOT_SYMBOLS = 60
SLOTS_PER_SUPERFRAME = 16
UNIT_BACKOFF_SYMBOLS = 20
TURNAROUND_SYMBOLS = 12
ACK_WAIT_SYMBOLS = 54


@dataclass(frozen=True)
class SuperframeConfig:
    """Beacon-interval / active-duration arithmetic, exact in microseconds."""

    beacon_order: int = 6
    superframe_order: int = 6
    symbol_rate_sps: int = 62_500

    def __post_init__(self) -> None:
        if not 0 <= self.superframe_order <= self.beacon_order <= 14:
            raise ValueError(
                f"need 0 <= SO <= BO <= 14, got SO={self.superframe_order} BO={self.beacon_order}"
            )
        if self.symbol_rate_sps <= 0 or 1_000_000 % self.symbol_rate_sps != 0:
            raise ValueError(
                f"symbol rate must divide 1e6 for exact microsecond timing, got {self.symbol_rate_sps}"
            )

    @property
    def us_per_symbol(self) -> int:
        return 1_000_000 // self.symbol_rate_sps

    @property
    def beacon_interval_us(self) -> SimTime:
        return BASE_SLOT_SYMBOLS * SLOTS_PER_SUPERFRAME * (1 << self.beacon_order) * self.us_per_symbol

    @property
    def active_duration_us(self) -> SimTime:
        return BASE_SLOT_SYMBOLS * SLOTS_PER_SUPERFRAME * (1 << self.superframe_order) * self.us_per_symbol

    @property
    def unit_backoff_us(self) -> SimTime:
        return UNIT_BACKOFF_SYMBOLS * self.us_per_symbol

    @property
    def turnaround_us(self) -> SimTime:
        return TURNAROUND_SYMBOLS * self.us_per_symbol

    @property
    def ack_wait_us(self) -> SimTime:
        return ACK_WAIT_SYMBOLS * self.us_per_symbol

    @property
    def default_bitrate_bps(self) -> int:
        return self.symbol_rate_sps * 4  # 4 bits/symbol


@dataclass(frozen=True)
class BackoffPolicy:
    min_be_critical: int = 2
    min_be_noncritical: int = 4
    max_be: int = 5
    max_csma_backoffs: int = 4
    max_frame_retries: int = 3

    def __post_init__(self) -> None:
        if not 0 <= self.min_be_critical <= self.min_be_noncritical <= self.max_be:
            raise ValueError(
                "need 0 <= min_be_critical <= min_be_noncritical <= max_be, got "
                f"{self.min_be_critical}/{self.min_be_noncritical}/{self.max_be}"
            )
        if self.max_csma_backoffs < 0 or self.max_frame_retries < 0:
            raise ValueError("retry limits must be non-negative")

    def min_be(self, criticality: Criticality) -> int:
        if criticality is Criticality.CRITICAL:
            return self.min_be_critical
        return self.min_be_noncritical


def backoff_draw(
    policy: BackoffPolicy, criticality: Criticality, be: int, rng: random.Random
) -> int:
    """Uniform draw in [0, 2^BE - 1] unit backoff periods."""
    if not policy.min_be(criticality) <= be <= policy.max_be:
        raise ValueError(f"BE {be} outside [{policy.min_be(criticality)}, {policy.max_be}]")
    return rng.randrange(1 << be)


class CsmaAction(Enum):
    SECOND_CCA = "second_cca"
    TRANSMIT = "transmit"
    NEW_BACKOFF = "new_backoff"
    FAILURE = "failure"


class CsmaBackoffFsm:
    """NB/BE/CW core of the slotted algorithm, one instance per frame attempt.

    Busy CCA: CW back to 2, NB+1, BE escalates toward max_be, failure once NB
    exceeds max_csma_backoffs.  Idle CCA: CW-1, transmit after two in a row.
    """

    def __init__(self, policy: BackoffPolicy, criticality: Criticality) -> None:
        self.policy = policy
        self.criticality = criticality
        self.nb = 0
        self.cw = 2
        self.be = policy.min_be(criticality)

    def reset_cw(self) -> None:
        self.cw = 2

    def on_cca(self, busy: bool) -> CsmaAction:
        if busy:
            self.cw = 2
            self.nb += 1
            self.be = min(self.be + 1, self.policy.max_be)
            if self.nb > self.policy.max_csma_backoffs:
                return CsmaAction.FAILURE
            return CsmaAction.NEW_BACKOFF
        self.cw -= 1
        if self.cw == 0:
            return CsmaAction.TRANSMIT
        return CsmaAction.SECOND_CCA


@dataclass(frozen=True)
class BeaconInfo:
    superframe_index: int
    cap_anchor: SimTime  # first usable backoff boundary / slot-region start
    cap_end: SimTime
    table_version: int
    commands: tuple = ()  # coordinator frames piggybacked under TDMA


def make_beacon(
    sf_index: int, cap_anchor: SimTime, cap_end: SimTime,
    table_version: int, size_bits: int, now: SimTime, sequence: int,
    commands: tuple = (),
) -> Frame:
    """Broadcast beacon carrying superframe timing and the wakeup-table version."""
    return Frame(
        kind=FrameKind.BEACON,
        src=BNC_ID,
        dst=BROADCAST_ID,
        size_bits=size_bits,
        traffic_class=None,
        created_at=now,
        sequence=sequence,
        payload=BeaconInfo(sf_index, cap_anchor, cap_end, table_version, commands),
    )


class CsmaMac:
    """Contention logic for one run; device bookkeeping lives on sim.devices."""

    name = "csma"

    def __init__(self, sim) -> None:
        self.sim = sim
        self._beacon_listeners: list[int] = []

    # -- superframe lifecycle -------------------------------------------------

    def start_superframe(self, sf_index: int, t_b: SimTime, awake_nodes: list[int]) -> None:
        sim = self.sim
        sf = sim.sf
        beacon_air = sim.air_us(sim.fp.beacon_bits)
        ubp = sf.unit_backoff_us
        anchor = t_b + -(-beacon_air // ubp) * ubp  # align past the beacon
        cap_end = t_b + sf.active_duration_us
        beacon = make_beacon(
            sf_index, anchor, cap_end, sim.table.version,
            sim.fp.beacon_bits, t_b, sim.next_seq(),
        )
        self._beacon_listeners = list(awake_nodes)
        bnc = sim.bnc
        bnc.cap_anchor, bnc.cap_end = anchor, cap_end
        bnc.in_cap = True
        sim.begin_tx(bnc, beacon, t_b)
        for node_id in awake_nodes:
            dev = sim.devices[node_id]
            sim.wake_device(dev)
            sim.set_state(dev, sim.RX)
            dev.cap_anchor, dev.cap_end = anchor, cap_end
            sim.schedule(Event(cap_end, EventKind.SLOT_BOUNDARY, node_id, ("cap_end",)))
        sim.schedule(Event(cap_end, EventKind.SLOT_BOUNDARY, BNC_ID, ("cap_end",)))

    def on_beacon_tx_end(self, tx) -> None:
        sim = self.sim
        for node_id in self._beacon_listeners:
            dev = sim.devices[node_id]
            if not dev.awake:
                continue
            sim.set_state(dev, sim.IDLE)
            outcome = sim.channel.deliver(tx, dev.placement, sim.rngs.channel, dst_id=node_id)
            if outcome is None:
                sim.schedule(Event(sim.now, EventKind.RX_END, node_id, ("beacon", tx.frame)))
            else:
                sim.ledger.loss_reasons[f"beacon_{outcome.value}"] += 1
        # The coordinator contends for its own pending frames in the CAP.
        bnc = sim.bnc
        bnc.in_cap = True
        sim.wake_device(bnc)
        sim.set_state(bnc, sim.IDLE)
        self.try_start(bnc)

    def on_beacon_received(self, dev, beacon: Frame) -> None:
        info: BeaconInfo = beacon.payload
        dev.in_cap = True
        dev.cap_anchor, dev.cap_end = info.cap_anchor, info.cap_end
        self.try_start(dev)

    def on_cap_end(self, dev) -> None:
        sim = self.sim
        dev.in_cap = False
        if dev.backoff_ev is not None:
            # Pause the countdown; leftover periods resume in the next CAP.
            sim.scheduler.cancel(dev.backoff_ev)
            left = -(-(dev.backoff_expiry - sim.now) // sim.sf.unit_backoff_us)
            dev.backoff_remaining = max(0, left)
            dev.backoff_ev = None
        if dev.cca_ev is not None:
            # CCAs must be consecutive within one CAP; redo both next time.
            sim.scheduler.cancel(dev.cca_ev)
            dev.cca_ev = None
            if dev.fsm is not None:
                dev.fsm.reset_cw()
            dev.backoff_remaining = 0
        sim.maybe_sleep(dev)

    # -- contention -----------------------------------------------------------

    def try_start(self, dev) -> None:
        if (
            not dev.in_cap
            or dev.active_frame is not None
            or dev.backoff_ev is not None
            or dev.cca_ev is not None
            or not dev.queue
        ):
            return
        if dev.attempt_frame is None:
            # One frame is bound to the transceiver for the whole attempt;
            # higher-priority arrivals wait for it to resolve.
            dev.attempt_frame = dev.queue[0]
        if dev.fsm is None:
            dev.fsm = CsmaBackoffFsm(self.sim.policy, dev.criticality)
        if dev.backoff_remaining is not None:
            periods = dev.backoff_remaining
            dev.backoff_remaining = None
        else:
            periods = backoff_draw(self.sim.policy, dev.criticality, dev.fsm.be, dev.rng)
        self._schedule_countdown(dev, periods, self.sim.now)

    def _schedule_countdown(self, dev, periods: int, from_t: SimTime) -> None:
        sim = self.sim
        ubp = sim.sf.unit_backoff_us
        b0 = max(from_t, dev.cap_anchor)
        off = (b0 - dev.cap_anchor) % ubp
        if off:
            b0 += ubp - off
        expiry = b0 + periods * ubp
        if expiry >= dev.cap_end:
            consumed = max(0, (dev.cap_end - b0) // ubp)
            dev.backoff_remaining = periods - consumed
            return  # countdown resumes in the next CAP this device joins
        dev.backoff_expiry = expiry
        dev.backoff_ev = sim.schedule(Event(expiry, EventKind.BACKOFF_EXPIRED, dev.id))

    def transaction_us(self, dev) -> SimTime:
        sim = self.sim
        frame = dev.attempt_frame
        return (
            sim.air_us(frame.size_bits)
            + sim.sf.turnaround_us
            + sim.air_us(sim.fp.ack_bits)
        )

    def on_backoff_expired(self, dev) -> None:
        sim = self.sim
        dev.backoff_ev = None
        # Both CCA slots plus the full acked transaction must fit in the CAP.
        needed = 2 * sim.sf.unit_backoff_us + self.transaction_us(dev)
        if sim.now + needed > dev.cap_end:
            dev.backoff_remaining = 0
            return
        dev.cca_ev = sim.schedule(Event(sim.now, EventKind.CCA_DUE, dev.id))

    def on_cca_due(self, dev) -> None:
        sim = self.sim
        dev.cca_ev = None
        busy = (
            sim.channel.cca_energy_detect(
                dev.placement, sim.channel.params.cca_threshold_dbm, sim.now
            )
            is CcaResult.BUSY
        )
        action = dev.fsm.on_cca(busy)
        ubp = sim.sf.unit_backoff_us
        if action is CsmaAction.SECOND_CCA:
            dev.cca_ev = sim.schedule(Event(sim.now + ubp, EventKind.CCA_DUE, dev.id))
        elif action is CsmaAction.TRANSMIT:
            self._start_transaction(dev, sim.now + ubp)
        elif action is CsmaAction.NEW_BACKOFF:
            periods = backoff_draw(sim.policy, dev.criticality, dev.fsm.be, dev.rng)
            self._schedule_countdown(dev, periods, sim.now + ubp)
        else:  # channel access failure: the frame never made it onto the air
            sim.ledger.loss_reasons["channel_access_failure"] += 1
            if dev.attempt_frame.traffic_class is TrafficClass.EMERGENCY:
                self._persist_emergency(dev)
            else:
                self._finish_frame(dev, dev.attempt_frame, delivered=False)

    def _start_transaction(self, dev, tx_start: SimTime) -> None:
        sim = self.sim
        frame = dev.attempt_frame
        # re-verify the fit; the CAP may have less room than at backoff expiry
        if tx_start + self.transaction_us(dev) > dev.cap_end:
            dev.backoff_remaining = 0
            return
        dev.active_frame = frame
        tx = sim.begin_tx(dev, frame, tx_start)
        dev.ack_ev = sim.schedule(
            Event(tx.end + sim.sf.ack_wait_us, EventKind.ACK_TIMEOUT, dev.id, frame)
        )

    # -- transaction completion ------------------------------------------------

    def on_data_tx_end(self, dev, tx, delivered: bool) -> None:
        sim = self.sim
        if delivered:
            tx.frame.rx_end = sim.now
            sim.schedule(Event(sim.now, EventKind.RX_END, tx.frame.dst, ("data", tx.frame)))

    def on_data_received(self, dev, frame: Frame) -> None:
        """Destination side: record first delivery, always acknowledge."""
        sim = self.sim
        key = (frame.src, frame.sequence)
        if key not in dev.seen:
            dev.seen.add(key)
            if not frame.delivered:
                frame.delivered = True
                sim.record_delivery(frame)
        ack = Frame(
            kind=FrameKind.ACK,
            src=dev.id,
            dst=frame.src,
            size_bits=sim.fp.ack_bits,
            traffic_class=None,
            created_at=sim.now,
            sequence=frame.sequence,
        )
        sim.begin_tx(dev, ack, sim.now + sim.sf.turnaround_us)

    def on_ack_received(self, dev, ack: Frame) -> None:
        frame = dev.active_frame
        if frame is None or ack.sequence != frame.sequence:
            return
        if dev.ack_ev is not None:
            self.sim.scheduler.cancel(dev.ack_ev)
            dev.ack_ev = None
        self._finish_frame(dev, frame, delivered=True)

    def on_ack_timeout(self, dev, frame: Frame) -> None:
        dev.ack_ev = None
        dev.active_frame = None
        frame.retries += 1
        if frame.retries > self.sim.policy.max_frame_retries:
            if frame.traffic_class is TrafficClass.EMERGENCY and not frame.delivered:
                self._persist_emergency(dev)
                return
            self._finish_frame(dev, frame, delivered=frame.delivered)
            return
        dev.fsm = None  # retry restarts CSMA with fresh NB/BE
        self.try_start(dev)

    def _persist_emergency(self, dev) -> None:
        # Emergency reports are never abandoned: the retry budget refills and
        # the node keeps contending (it stays awake while the frame queues).
        dev.attempt_frame.retries = 0
        dev.fsm = None
        dev.backoff_remaining = None
        self.sim.ledger.loss_reasons["emergency_retry_refill"] += 1
        self.try_start(dev)

    def _finish_frame(self, dev, frame: Frame, delivered: bool) -> None:
        sim = self.sim
        dev.queue.remove(frame)
        dev.attempt_frame = None
        dev.active_frame = None
        dev.fsm = None
        dev.backoff_remaining = None
        if not delivered:
            sim.record_drop(frame)
        sim.on_frame_resolved(dev, frame)
        self.try_start(dev)

    # -- event routing ----------------------------------------------------------

    def on_slot_boundary(self, dev, data) -> None:
        if data[0] == "cap_end":
            self.on_cap_end(dev)
        elif data[0] == "spurious_end":
            self.sim.end_spurious(dev)

    def on_tx_end(self, tx, delivered: bool) -> None:
        sim = self.sim
        kind = tx.frame.kind
        if kind is FrameKind.BEACON:
            self.on_beacon_tx_end(tx)
        elif kind in (FrameKind.DATA, FrameKind.COMMAND):
            self.on_data_tx_end(sim.devices[tx.frame.src], tx, delivered)
        elif kind is FrameKind.ACK:
            if delivered:
                sim.schedule(Event(sim.now, EventKind.RX_END, tx.frame.dst, ("ack", tx.frame)))

    def on_rx_end(self, dev, data) -> None:
        tag, frame = data
        if tag == "beacon":
            self.on_beacon_received(dev, frame)
        elif tag == "data":
            self.on_data_received(dev, frame)
        elif tag == "ack":
            self.on_ack_received(dev, frame)
