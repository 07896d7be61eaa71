"""Run wiring: devices, superframe loop, wakeup-radio flows, accounting.

One Simulation owns one seeded run: a scheduler, a channel, a ledger and one
device record per BN plus the coordinator.  The MAC object (CSMA or TDMA)
drives channel access inside the active portion of each superframe; this
module owns everything around it: who is awake on which superframe, traffic
generation, the emergency and on-demand wakeup paths, and radio-state
bookkeeping for the energy figures.

A device's low-power state is `wakeup_rx` when it carries an always-on wakeup
receiver and plain `sleep` otherwise; together with tx/rx/idle_listen this
partitions every microsecond of the run, per device.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from . import traffic as traffic_mod
from .channel import ChannelModel, Radio
from .core import (
    BNC_ID,
    Criticality,
    Frame,
    FrameKind,
    NodeProfile,
    Placement,
    SimTime,
    TrafficClass,
    airtime,
)
from .engine import Event, EventKind, RngStreams, Scheduler
from .mac_csma import CsmaMac
from .mac_tdma import TdmaMac
from .metrics import EmergencyRecord, MetricsLedger, RadioState
from .scenario import Scenario
from .traffic import ArrivalProcess, GeneratorSpec, OnDemandEntry
from .wakeup import (
    Direction,
    Purpose,
    WakeupSignal,
    build_table,
    is_awake,
    resolve_wakeup_targets,
)

EMERGENCY_RETRY_US = 10_000  # resend a lost emergency wakeup after this long
WAKEUP_SIGNAL_BITS = 8       # nominal; the signal airtime is configured directly


class PendingQueue:
    """Frame queue ordered by (class priority, created_at, sequence)."""

    def __init__(self) -> None:
        self._heap: list[tuple[tuple[int, SimTime, int], Frame]] = []

    def push(self, frame: Frame) -> None:
        heapq.heappush(self._heap, (frame.queue_key(), frame))

    def __getitem__(self, idx: int) -> Frame:
        if idx != 0:
            raise IndexError("only the queue head is addressable")
        return self._heap[0][1]

    def remove(self, frame: Frame) -> None:
        for i, (_, f) in enumerate(self._heap):
            if f is frame:
                self._heap[i] = self._heap[-1]
                self._heap.pop()
                heapq.heapify(self._heap)
                return
        raise ValueError("frame not queued")

    def drain(self) -> list[Frame]:
        out = [f for _, f in sorted(self._heap)]
        self._heap.clear()
        return out

    def __contains__(self, frame: Frame) -> bool:
        return any(f is frame for _, f in self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    def has_priority_le(self, priority: int) -> bool:
        return any(key[0] <= priority for key, _ in self._heap)


@dataclass
class StreamState:
    until: SimTime
    interval_us: SimTime
    stopped: bool = False


@dataclass
class EmergencyFlow:
    node: int
    frame: Frame
    record: EmergencyRecord
    granted: bool = False


@dataclass
class Device:
    id: int
    placement: Placement
    rng: object
    criticality: Criticality
    sleep_state: RadioState
    profile: NodeProfile | None = None
    gen: GeneratorSpec | None = None
    queue: PendingQueue = field(default_factory=PendingQueue)
    awake: bool = False
    incoming: int = 0
    tx_until: SimTime | None = None
    hold_awake_until: SimTime = 0
    spurious_until: SimTime = 0
    grant_active: bool = False
    stream: StreamState | None = None
    seen: set = field(default_factory=set)
    # CSMA attempt state
    in_cap: bool = False
    cap_anchor: SimTime = 0
    cap_end: SimTime = 0
    fsm: object = None
    backoff_ev: Event | None = None
    backoff_expiry: SimTime = 0
    backoff_remaining: int | None = None
    cca_ev: Event | None = None
    ack_ev: Event | None = None
    attempt_frame: Frame | None = None  # frame bound to the ongoing attempt
    active_frame: Frame | None = None   # frame currently on the air / awaiting ack
    # TDMA slot state
    slot_end: SimTime | None = None


class Simulation:
    RX = RadioState.RX
    TX = RadioState.TX
    IDLE = RadioState.IDLE_LISTEN

    def __init__(self, scenario: Scenario, seed: int | None = None, trace_sink=None):
        self.scn = scenario
        self.seed = scenario.seed if seed is None else seed
        self.sf = scenario.superframe
        self.policy = scenario.backoff
        self.fp = scenario.frames
        self.wc = scenario.wakeup
        self.horizon_us = scenario.horizon_us

        self.scheduler = Scheduler()
        self.scheduler.trace_sink = trace_sink
        self.rngs = RngStreams(self.seed)
        self.channel = ChannelModel(scenario.channel_params, scenario.link_errors)
        self.table = build_table(scenario.profiles())
        self.ledger = MetricsLedger({n.profile.id: n.profile.traffic_class for n in scenario.nodes})
        self._seq = 0

        self.devices: dict[int, Device] = {}
        self.bnc = Device(
            id=BNC_ID, placement=scenario.bnc_placement, rng=self.rngs.node(BNC_ID),
            criticality=Criticality.CRITICAL, sleep_state=RadioState.WAKEUP_RX,
        )
        self.devices[BNC_ID] = self.bnc
        for cfg in scenario.nodes:
            p = cfg.profile
            self.devices[p.id] = Device(
                id=p.id, placement=p.placement, rng=self.rngs.node(p.id),
                criticality=p.criticality,
                sleep_state=RadioState.WAKEUP_RX if p.wakeup_receiver else RadioState.SLEEP,
                profile=p, gen=cfg.generator,
            )
        self.node_ids = scenario.node_ids()
        self._receiver_nodes = [
            n for n in self.node_ids if self.devices[n].profile.wakeup_receiver
        ]

        if scenario.mac == "tdma":
            self.mac = TdmaMac(self, scenario.tdma)
        else:
            self.mac = CsmaMac(self)

        self._listening: dict[object, bool] = {}
        self._register_handlers()
        self._schedule_initial()

    # -- setup ------------------------------------------------------------------

    def _register_handlers(self) -> None:
        s = self.scheduler
        s.register(EventKind.BEACON_DUE, self._on_beacon_due)
        s.register(EventKind.TRAFFIC_ARRIVAL, self._on_traffic_arrival)
        s.register(EventKind.WAKEUP_DUE, self._on_wakeup_due)
        s.register(EventKind.SLOT_BOUNDARY, self._on_slot_boundary)
        s.register(EventKind.BACKOFF_EXPIRED,
                   lambda ev: self.mac.on_backoff_expired(self.devices[ev.node]))
        s.register(EventKind.CCA_DUE,
                   lambda ev: self.mac.on_cca_due(self.devices[ev.node]))
        s.register(EventKind.TX_END, self._on_tx_end)
        s.register(EventKind.RX_END, self._on_rx_end)
        s.register(EventKind.ACK_TIMEOUT,
                   lambda ev: self.mac.on_ack_timeout(self.devices[ev.node], ev.data))
        s.register(EventKind.MEASUREMENT_TICK, lambda ev: None)

    def _schedule_initial(self) -> None:
        for dev in self.devices.values():
            self.ledger.init_state(dev.id, dev.sleep_state, 0)
        self.schedule(Event(0, EventKind.BEACON_DUE, BNC_ID, 0))
        for node_id in self.node_ids:
            dev = self.devices[node_id]
            if dev.gen is None:
                continue
            if dev.gen.arrival is ArrivalProcess.SATURATED:
                self._offer_frame(dev, dev.gen.traffic_class)
            else:
                t0 = traffic_mod.first_arrival(dev.gen, dev.rng)
                if t0 <= self.horizon_us:
                    self.schedule(Event(t0, EventKind.TRAFFIC_ARRIVAL, node_id))
        for entry in self.scn.on_demand:
            self.schedule(Event(entry.time_us, EventKind.TRAFFIC_ARRIVAL, BNC_ID, ("query", entry)))
        self.schedule(Event(self.horizon_us, EventKind.MEASUREMENT_TICK))

    def run(self) -> MetricsLedger:
        self.scheduler.run_until(self.horizon_us)
        self.ledger.finalize_states(self.horizon_us)
        return self.ledger

    # -- small helpers -------------------------------------------------------------

    @property
    def now(self) -> SimTime:
        return self.scheduler.now

    def schedule(self, ev: Event) -> Event:
        return self.scheduler.schedule(ev)

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def air_us(self, size_bits: int) -> SimTime:
        return airtime(size_bits, self.fp.bitrate_bps)

    def set_state(self, dev: Device, state: RadioState) -> None:
        self.ledger.set_state(dev.id, state, self.now)

    def wake_device(self, dev: Device) -> None:
        dev.awake = True

    def wake_to_idle(self, dev: Device) -> None:
        """Turn the main radio on without clobbering an ongoing tx/rx."""
        self.wake_device(dev)
        if dev.tx_until is not None and dev.tx_until > self.now:
            return
        if dev.incoming > 0:
            return
        self.set_state(dev, self.IDLE)

    def micro_sleep(self, dev: Device) -> None:
        dev.awake = False
        self.set_state(dev, dev.sleep_state)

    def maybe_sleep(self, dev: Device) -> None:
        now = self.now
        if dev.in_cap or dev.incoming > 0:
            return
        if dev.tx_until is not None and dev.tx_until > now:
            return
        if dev.slot_end is not None and now < dev.slot_end:
            return
        if now < dev.spurious_until or now < dev.hold_awake_until:
            self.set_state(dev, self.IDLE)
            return
        self.micro_sleep(dev)

    def end_spurious(self, dev: Device) -> None:
        dev.spurious_until = 0
        self.maybe_sleep(dev)

    # -- superframe loop --------------------------------------------------------------

    def _node_awake(self, node_id: int, sf_index: int) -> bool:
        dev = self.devices[node_id]
        return is_awake(self.table, node_id, sf_index) or dev.grant_active

    def _on_beacon_due(self, ev: Event) -> None:
        sf_index: int = ev.data
        self.ledger.total_superframes += 1
        awake = []
        for node_id in self.node_ids:
            if self._node_awake(node_id, sf_index):
                awake.append(node_id)
                self.ledger.node_awake_superframes[node_id] += 1
        if awake:
            self.ledger.bnc_awake_superframes += 1
            self.mac.start_superframe(sf_index, self.now, awake)
        else:
            self.maybe_sleep(self.bnc)
        next_t = (sf_index + 1) * self.sf.beacon_interval_us
        if next_t < self.horizon_us:
            self.schedule(Event(next_t, EventKind.BEACON_DUE, BNC_ID, sf_index + 1))

    def _on_slot_boundary(self, ev: Event) -> None:
        dev = self.devices[ev.node]
        tag = ev.data[0]
        if tag == "tx_start":
            self._tx_started(dev, ev.data[1])
        elif tag == "emg_window":
            self._start_emergency_window(dev, ev.data[1])
        else:
            self.mac.on_slot_boundary(dev, ev.data)

    # -- transmissions -------------------------------------------------------------------

    def begin_tx(self, dev: Device, frame: Frame, start: SimTime,
                 radio: Radio = Radio.DATA, duration: SimTime | None = None):
        if duration is None:
            duration = self.air_us(frame.size_bits)
        tx = self.channel.register_tx(frame, dev.placement, start, duration, radio)
        if start <= self.now:
            self._tx_started(dev, tx)
        else:
            self.schedule(Event(start, EventKind.SLOT_BOUNDARY, dev.id, ("tx_start", tx)))
        self.schedule(Event(tx.end, EventKind.TX_END, frame.src, tx))
        return tx

    def _tx_started(self, dev: Device, tx) -> None:
        self.wake_device(dev)
        dev.tx_until = max(dev.tx_until or 0, tx.end)
        self.set_state(dev, self.TX)
        frame = tx.frame
        if tx.radio is Radio.DATA and frame.dst >= 0:
            ddev = self.devices.get(frame.dst)
            listening = (
                ddev is not None
                and ddev.awake
                and (ddev.tx_until is None or ddev.tx_until <= self.now)
            )
            self._listening[tx] = listening
            if listening:
                ddev.incoming += 1
                if ddev.tx_until is None or ddev.tx_until <= self.now:
                    self.set_state(ddev, self.RX)
        else:
            self._listening[tx] = True

    def _on_tx_end(self, ev: Event) -> None:
        tx = ev.data
        frame = tx.frame
        self.channel.end_tx(tx)
        src = self.devices[frame.src]
        if src.tx_until is not None and src.tx_until <= self.now:
            src.tx_until = None
            self.set_state(src, self.IDLE)
            self.maybe_sleep(src)
        listening = self._listening.pop(tx, True)
        if tx.radio is Radio.DATA and frame.dst >= 0 and listening:
            ddev = self.devices.get(frame.dst)
            if ddev is not None:
                ddev.incoming -= 1
                if ddev.incoming == 0 and ddev.awake and (
                    ddev.tx_until is None or ddev.tx_until <= self.now
                ):
                    self.set_state(ddev, self.IDLE)
        if frame.kind is FrameKind.WAKEUP_SIGNAL:
            self._on_wakeup_signal_end(tx)
            return
        if frame.kind is FrameKind.BEACON:
            self.mac.on_tx_end(tx, True)
            return
        if not listening:
            self.ledger.loss_reasons["destination_not_listening"] += 1
            delivered = False
        else:
            outcome = self.channel.deliver(
                tx, self.devices[frame.dst].placement, self.rngs.channel
            )
            delivered = outcome is None
            if outcome is not None:
                self.ledger.loss_reasons[outcome.value] += 1
        self.mac.on_tx_end(tx, delivered)

    def _on_rx_end(self, ev: Event) -> None:
        dev = self.devices[ev.node]
        self.mac.on_rx_end(dev, ev.data)
        tag, frame = ev.data
        if tag == "data" and frame.kind is FrameKind.COMMAND:
            self.apply_command(dev, frame)

    def apply_command(self, dev: Device, frame: Frame) -> None:
        if frame.payload == ("stop",) and dev.stream is not None:
            dev.stream.stopped = True

    # -- traffic -----------------------------------------------------------------------------

    def _offer_frame(self, dev: Device, cls: TrafficClass) -> Frame:
        frame = Frame(
            kind=FrameKind.DATA, src=dev.id, dst=BNC_ID,
            size_bits=dev.profile.payload_bits, traffic_class=cls,
            created_at=self.now, sequence=self.next_seq(),
        )
        self.ledger.add_offered(dev.id, cls)
        dev.queue.push(frame)
        self.mac.try_start(dev)
        return frame

    def _on_traffic_arrival(self, ev: Event) -> None:
        if ev.node == BNC_ID:
            tag, arg = ev.data
            if tag == "query":
                self._start_query(arg)
            else:
                self._enqueue_stop(arg)
            return
        dev = self.devices[ev.node]
        if ev.data is not None and ev.data[0] == "stream":
            st = dev.stream
            if st is None or st.stopped or self.now >= st.until:
                return
            self._offer_frame(dev, TrafficClass.ON_DEMAND_CONTINUOUS)
            nxt = self.now + st.interval_us
            if nxt < st.until:
                self.schedule(Event(nxt, EventKind.TRAFFIC_ARRIVAL, dev.id, ("stream",)))
            return
        frame = self._offer_frame(dev, dev.gen.traffic_class)
        if frame.traffic_class.is_emergency:
            self._start_emergency(dev, frame)
        nxt = traffic_mod.next_arrival(dev.gen, self.now, dev.rng)
        if nxt <= self.horizon_us:
            self.schedule(Event(nxt, EventKind.TRAFFIC_ARRIVAL, dev.id))

    def on_frame_resolved(self, dev: Device, frame: Frame) -> None:
        """Called once a queued frame leaves the MAC (delivered or dropped)."""
        if (
            dev.gen is not None
            and dev.gen.arrival is ArrivalProcess.SATURATED
            and frame.traffic_class is dev.gen.traffic_class
        ):
            self._offer_frame(dev, dev.gen.traffic_class)
        if dev.grant_active and not dev.queue.has_priority_le(1) and dev.active_frame is None:
            dev.grant_active = False

    def record_delivery(self, frame: Frame) -> None:
        if isinstance(frame.payload, EmergencyFlow):
            frame.payload.record.delivered_at = self.now
        if frame.kind is FrameKind.DATA:
            self.ledger.add_delivered(
                frame.src, frame.traffic_class, frame.rx_end - frame.created_at
            )

    def record_drop(self, frame: Frame) -> None:
        if frame.kind is FrameKind.DATA:
            self.ledger.add_dropped(frame.src, frame.traffic_class)

    # -- wakeup-radio paths ------------------------------------------------------------------

    def _send_signal(self, dev: Device, signal: WakeupSignal, ctx: tuple, dst: int) -> None:
        self.ledger.wakeup_signals_sent[dev.id] += 1
        sig = Frame(
            kind=FrameKind.WAKEUP_SIGNAL, src=dev.id, dst=dst,
            size_bits=WAKEUP_SIGNAL_BITS, traffic_class=None,
            created_at=self.now, sequence=self.next_seq(),
            payload=(signal, ctx),
        )
        self.begin_tx(dev, sig, self.now, radio=Radio.WAKEUP,
                      duration=self.wc.signal_airtime_us)

    def _start_emergency(self, dev: Device, frame: Frame) -> None:
        record = EmergencyRecord(dev.id, self.now, None)
        self.ledger.emergency_records.append(record)
        flow = EmergencyFlow(node=dev.id, frame=frame, record=record)
        frame.payload = flow
        self._send_emergency_signal(flow)

    def _send_emergency_signal(self, flow: EmergencyFlow) -> None:
        dev = self.devices[flow.node]
        signal = WakeupSignal(
            addressing=self.wc.mode, direction=Direction.TO_BNC,
            purpose=Purpose.EMERGENCY, sender=dev.id,
        )
        self._send_signal(dev, signal, ("emergency", flow), BNC_ID)
        self.schedule(Event(self.now + EMERGENCY_RETRY_US, EventKind.WAKEUP_DUE,
                            dev.id, ("emg_retry", flow)))

    def _start_query(self, entry: OnDemandEntry) -> None:
        bnc = self.bnc
        self.wake_to_idle(bnc)
        bnc.hold_awake_until = max(bnc.hold_awake_until, self._next_boundary())
        signal = WakeupSignal(
            addressing=self.wc.mode, direction=Direction.TO_NODE,
            purpose=Purpose.ON_DEMAND, sender=BNC_ID, target=entry.target,
        )
        self._send_signal(bnc, signal, ("query", entry), entry.target)

    def _enqueue_stop(self, target: int) -> None:
        cmd = Frame(
            kind=FrameKind.COMMAND, src=BNC_ID, dst=target,
            size_bits=self.fp.command_bits,
            traffic_class=TrafficClass.ON_DEMAND_NON_CONTINUOUS,
            created_at=self.now, sequence=self.next_seq(), payload=("stop",),
        )
        self.bnc.queue.push(cmd)
        self.mac.try_start(self.bnc)

    def _on_wakeup_signal_end(self, tx) -> None:
        signal, ctx = tx.frame.payload
        targets = resolve_wakeup_targets(signal, self._receiver_nodes, self.wc)
        for device_id in targets:
            dev = self.devices[device_id]
            outcome = self.channel.deliver(tx, dev.placement, self.rngs.channel,
                                           dst_id=device_id)
            if outcome is not None:
                self.ledger.loss_reasons["wakeup_signal_lost"] += 1
                continue
            delay = 0 if dev.awake else self.wc.latency_us
            if ctx[0] == "emergency":
                data = ("bnc_wake", ctx[1])
            elif device_id == ctx[1].target:
                data = ("node_wake", ctx[1])
            else:
                data = ("spurious", ctx[1])
            self.schedule(Event(self.now + delay, EventKind.WAKEUP_DUE, device_id, data))

    def _next_boundary(self) -> SimTime:
        return (self.now // self.sf.beacon_interval_us + 1) * self.sf.beacon_interval_us

    def _on_wakeup_due(self, ev: Event) -> None:
        dev = self.devices[ev.node]
        tag, arg = ev.data
        if tag == "emg_retry":
            if not arg.granted:
                self._send_emergency_signal(arg)
            return
        if tag == "bnc_wake":
            flow: EmergencyFlow = arg
            if flow.granted:
                return
            flow.granted = True
            self.wake_to_idle(dev)
            node = self.devices[flow.node]
            if self.mac.name == "csma":
                # Channel access is granted at the next beacon, top priority.
                node.grant_active = True
                dev.hold_awake_until = max(dev.hold_awake_until, self._next_boundary())
            else:
                # Dedicated response window as soon as the data radio frees up.
                start = max(self.now, self.channel.busy_until(Radio.DATA, self.now))
                air = self.air_us(flow.frame.size_bits)
                dev.hold_awake_until = max(dev.hold_awake_until, start + air)
                self.schedule(Event(start, EventKind.SLOT_BOUNDARY, flow.node,
                                    ("emg_window", flow)))
            self.maybe_sleep(dev)
            return
        entry: OnDemandEntry = arg
        if tag == "spurious":
            self.ledger.spurious_wakeups[dev.id] += 1
            self.wake_to_idle(dev)
            dev.spurious_until = self.now + self.sf.active_duration_us
            self.schedule(Event(dev.spurious_until, EventKind.SLOT_BOUNDARY, dev.id,
                                ("spurious_end",)))
            return
        # the queried node itself
        self.wake_to_idle(dev)
        dev.grant_active = True
        dev.hold_awake_until = max(dev.hold_awake_until, self._next_boundary())
        if entry.continuous:
            dev.stream = StreamState(
                until=self.now + entry.duration_us,
                interval_us=round(1_000_000 / entry.rate_per_s),
            )
            self.schedule(Event(self.now, EventKind.TRAFFIC_ARRIVAL, dev.id, ("stream",)))
            self.schedule(Event(dev.stream.until, EventKind.TRAFFIC_ARRIVAL, BNC_ID,
                                ("stop", dev.id)))
        else:
            self._offer_frame(dev, TrafficClass.ON_DEMAND_NON_CONTINUOUS)

    def _start_emergency_window(self, dev: Device, flow: EmergencyFlow) -> None:
        if flow.frame not in dev.queue:
            return  # already resolved through the regular slot
        dev.slot_end = self.now + self.air_us(flow.frame.size_bits)
        self.begin_tx(dev, flow.frame, self.now)


def run_simulation(scenario: Scenario, seed: int | None = None, trace_sink=None) -> MetricsLedger:
    return Simulation(scenario, seed=seed, trace_sink=trace_sink).run()
