"""TDMA alternative: one dedicated data slot per node, gated by wakeup pattern.

A node's slot exists in every superframe but is only *active* on superframes
selected by its wakeup multiplier (index 0 counts as active); frames arriving
in between queue until the next active superframe.  Slot transmissions are
contention-free and unacknowledged: a loss is final and counts against PDR.

Emergency traffic bypasses slot gating entirely via the wakeup radio; the
coordinator grants it a dedicated window at the first instant the data radio
is free.  To keep the air collision-free around such windows, a node skips
its slot when it senses the channel busy at the slot start.  Coordinator
commands (e.g. stream stop) piggyback on beacons rather than taking airtime
from the slot region.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import BNC_ID, FrameKind, SimTime
from .channel import CcaResult
from .engine import Event, EventKind
from .mac_csma import make_beacon
from .wakeup import WakeupTable, is_awake


@dataclass(frozen=True)
class TdmaSchedule:
    """Static slot assignment from the scenario; no dynamic slot trading."""

    slots: dict[int, int]  # node id -> slot index
    slot_duration_us: SimTime
    slots_per_superframe: int

    def __post_init__(self) -> None:
        if self.slot_duration_us <= 0:
            raise ValueError("slot_duration_us must be positive")
        if self.slots_per_superframe < 1:
            raise ValueError("slots_per_superframe must be >= 1")
        seen: dict[int, int] = {}
        for node, idx in self.slots.items():
            if not 0 <= idx < self.slots_per_superframe:
                raise ValueError(f"node {node}: slot index {idx} out of range")
            if idx in seen:
                raise ValueError(f"slot {idx} assigned to both node {seen[idx]} and node {node}")
            seen[idx] = node

    def slot_offset_us(self, node: int) -> SimTime:
        return self.slots[node] * self.slot_duration_us

    @property
    def region_us(self) -> SimTime:
        return self.slots_per_superframe * self.slot_duration_us


def slot_active(table: WakeupTable, node: int, superframe_index: int) -> bool:
    """The wakeup pattern is the slot-activation pattern."""
    return is_awake(table, node, superframe_index)


class TdmaMac:
    name = "tdma"

    def __init__(self, sim, schedule: TdmaSchedule) -> None:
        self.sim = sim
        self.schedule = schedule
        self._beacon_listeners: list[int] = []

    # -- superframe lifecycle -------------------------------------------------

    def start_superframe(self, sf_index: int, t_b: SimTime, awake_nodes: list[int]) -> None:
        sim = self.sim
        region_start = t_b + sim.air_us(sim.fp.beacon_bits)
        region_end = region_start + self.schedule.region_us
        commands = tuple(sim.bnc.queue.drain())
        beacon = make_beacon(
            sf_index, region_start, region_end, sim.table.version,
            sim.fp.beacon_bits, t_b, sim.next_seq(), commands=commands,
        )
        self._beacon_listeners = list(awake_nodes)
        sim.bnc.hold_awake_until = max(sim.bnc.hold_awake_until, region_end)
        sim.begin_tx(sim.bnc, beacon, t_b)
        for node_id in awake_nodes:
            dev = sim.devices[node_id]
            sim.wake_device(dev)
            sim.set_state(dev, sim.RX)
        sim.schedule(Event(region_end, EventKind.SLOT_BOUNDARY, BNC_ID, ("cap_end",)))

    def on_beacon_tx_end(self, tx) -> None:
        sim = self.sim
        sim.wake_device(sim.bnc)
        sim.set_state(sim.bnc, sim.IDLE)  # coordinator listens across the slot region
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

    def on_beacon_received(self, dev, beacon) -> None:
        sim = self.sim
        info = beacon.payload
        for command in info.commands:
            if command.dst == dev.id:
                sim.apply_command(dev, command)
        if not dev.queue:
            sim.maybe_sleep(dev)
            return
        slot_start = max(sim.now, info.cap_anchor + self.schedule.slot_offset_us(dev.id))
        slot_end = info.cap_anchor + self.schedule.slot_offset_us(dev.id) + self.schedule.slot_duration_us
        if slot_start > sim.now:
            sim.micro_sleep(dev)  # doze between beacon and the owned slot
        sim.schedule(Event(slot_start, EventKind.SLOT_BOUNDARY, dev.id, ("slot_start", slot_end)))

    # -- slot transmissions -----------------------------------------------------

    def on_slot_start(self, dev, slot_end: SimTime) -> None:
        sim = self.sim
        dev.slot_end = slot_end
        sim.wake_device(dev)
        sim.set_state(dev, sim.IDLE)
        # An emergency window may own the channel; yield the whole slot then.
        busy = (
            sim.channel.cca_energy_detect(
                dev.placement, sim.channel.params.cca_threshold_dbm, sim.now
            )
            is CcaResult.BUSY
        )
        if busy:
            sim.ledger.loss_reasons["slot_yielded"] += 1
            dev.slot_end = None
            sim.maybe_sleep(dev)
            return
        self._tx_next(dev)

    def _tx_next(self, dev) -> None:
        sim = self.sim
        while dev.queue:
            frame = dev.queue[0]
            if sim.now + sim.air_us(frame.size_bits) > dev.slot_end:
                break  # queue head waits for the next active superframe
            sim.begin_tx(dev, frame, sim.now)
            return
        dev.slot_end = None
        sim.maybe_sleep(dev)

    def on_data_tx_end(self, dev, tx, delivered: bool) -> None:
        sim = self.sim
        frame = tx.frame
        frame.rx_end = sim.now
        if delivered:
            frame.delivered = True
            sim.record_delivery(frame)
        else:
            sim.record_drop(frame)
        dev.queue.remove(frame)
        sim.on_frame_resolved(dev, frame)
        if dev.slot_end is not None and sim.now < dev.slot_end and dev.queue:
            self._tx_next(dev)
        else:
            dev.slot_end = None
            sim.maybe_sleep(dev)

    # -- event routing ------------------------------------------------------------

    def on_slot_boundary(self, dev, data) -> None:
        tag = data[0]
        if tag == "slot_start":
            self.on_slot_start(dev, data[1])
        elif tag == "cap_end":
            self.sim.maybe_sleep(dev)
        elif tag == "spurious_end":
            self.sim.end_spurious(dev)

    def try_start(self, dev) -> None:
        # Mid-superframe arrivals wait for the node's next active slot.
        pass

    def on_tx_end(self, tx, delivered: bool) -> None:
        kind = tx.frame.kind
        if kind is FrameKind.BEACON:
            self.on_beacon_tx_end(tx)
        elif kind is FrameKind.DATA:
            self.on_data_tx_end(self.sim.devices[tx.frame.src], tx, delivered)

    def on_rx_end(self, dev, data) -> None:
        tag, frame = data
        if tag == "beacon":
            self.on_beacon_received(dev, frame)

    def on_backoff_expired(self, dev) -> None:
        raise RuntimeError("no CSMA backoff under TDMA")

    def on_cca_due(self, dev) -> None:
        raise RuntimeError("no CSMA CCA under TDMA")

    def on_ack_timeout(self, dev, frame) -> None:
        raise RuntimeError("no acknowledgements under TDMA")
