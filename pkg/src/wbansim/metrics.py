"""Per-node and per-class accounting: delivery, latency, energy, duty cycle.

Latency is measured from frame creation to the successful end of the data
frame at its receiver; acknowledgements are excluded.  Radio-state time
integrals partition the whole run per device, which makes the energy figures
conservative by construction (they always cover the full horizon).

`delivered` counts frames the destination actually received (duplicates from
a lost acknowledgement are not double-counted); `dropped` counts frames
abandoned without any successful reception.  Frames still in flight when the
horizon ends belong to neither.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import IO, Iterable

from .core import SimTime, TrafficClass


class RadioState(Enum):
    TX = "tx"
    RX = "rx"
    IDLE_LISTEN = "idle_listen"  # awake, includes CCA
    SLEEP = "sleep"              # everything off
    WAKEUP_RX = "wakeup_rx"      # main radio off, wakeup receiver listening


@dataclass(frozen=True)
class EnergyModel:
    tx_mw: float = 52.2
    rx_mw: float = 56.4
    idle_listen_mw: float = 1.28
    sleep_mw: float = 0.06
    wakeup_rx_mw: float = 0.01

    def __post_init__(self) -> None:
        values = (self.tx_mw, self.rx_mw, self.idle_listen_mw, self.sleep_mw, self.wakeup_rx_mw)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("all power levels must be finite")
        if not (self.tx_mw > self.idle_listen_mw and self.rx_mw > self.idle_listen_mw):
            raise ValueError("tx and rx power must exceed idle_listen power")
        if not self.idle_listen_mw > self.sleep_mw >= 0:
            raise ValueError("idle_listen power must exceed sleep power, sleep >= 0")

    def power_mw(self, state: RadioState) -> float:
        return {
            RadioState.TX: self.tx_mw,
            RadioState.RX: self.rx_mw,
            RadioState.IDLE_LISTEN: self.idle_listen_mw,
            RadioState.SLEEP: self.sleep_mw,
            RadioState.WAKEUP_RX: self.wakeup_rx_mw,
        }[state]


@dataclass
class EmergencyRecord:
    node: int
    event_time: SimTime
    delivered_at: SimTime | None  # None while in flight / after a drop

    @property
    def latency_us(self) -> SimTime | None:
        if self.delivered_at is None:
            return None
        return self.delivered_at - self.event_time


NODE_CSV_COLUMNS = (
    "run_id,seed,mac,node_id,class,offered,delivered,dropped,pdr,"
    "mean_latency_us,p50_us,p99_us,max_us,energy_mj,spurious_wakeups"
)
SUMMARY_CSV_COLUMNS = (
    "run_id,seed,mac,total_superframes,bnc_awake_superframes,"
    "bnc_awake_fraction,bnc_energy_mj,wakeup_signals_sent"
)


class MetricsLedger:
    """Counters and samples for one run; ledgers merge for seed sweeps."""

    def __init__(self, profile_classes: dict[int, TrafficClass] | None = None) -> None:
        self.profile_classes = dict(profile_classes or {})
        self.offered: Counter[tuple[int, TrafficClass]] = Counter()
        self.delivered: Counter[tuple[int, TrafficClass]] = Counter()
        self.dropped: Counter[tuple[int, TrafficClass]] = Counter()
        self.latency: dict[tuple[int, TrafficClass], list[SimTime]] = {}
        self.state_us: dict[int, Counter[RadioState]] = {}
        self.spurious_wakeups: Counter[int] = Counter()
        self.node_awake_superframes: Counter[int] = Counter()
        self.wakeup_signals_sent: Counter[int] = Counter()
        self.loss_reasons: Counter[str] = Counter()
        self.bnc_awake_superframes = 0
        self.total_superframes = 0
        self.emergency_records: list[EmergencyRecord] = []
        # live state-tracking bookkeeping
        self._state_now: dict[int, RadioState] = {}
        self._state_since: dict[int, SimTime] = {}

    # -- counting -----------------------------------------------------------

    def add_offered(self, node: int, cls: TrafficClass) -> None:
        self.offered[(node, cls)] += 1

    def add_delivered(self, node: int, cls: TrafficClass, latency_us: SimTime) -> None:
        self.delivered[(node, cls)] += 1
        self.latency.setdefault((node, cls), []).append(latency_us)

    def add_dropped(self, node: int, cls: TrafficClass) -> None:
        self.dropped[(node, cls)] += 1

    # -- radio-state integrals ----------------------------------------------

    def init_state(self, node: int, state: RadioState, now: SimTime = 0) -> None:
        self.state_us.setdefault(node, Counter())
        self._state_now[node] = state
        self._state_since[node] = now

    def set_state(self, node: int, state: RadioState, now: SimTime) -> None:
        prev = self._state_now[node]
        if state is prev:
            return
        self.state_us[node][prev] += now - self._state_since[node]
        self._state_now[node] = state
        self._state_since[node] = now

    def current_state(self, node: int) -> RadioState:
        return self._state_now[node]

    def finalize_states(self, horizon: SimTime) -> None:
        for node, state in self._state_now.items():
            self.state_us[node][state] += horizon - self._state_since[node]
            self._state_since[node] = horizon

    # -- derived figures ------------------------------------------------------

    def pdr(self, node: int | None = None, cls: TrafficClass | None = None) -> float | None:
        offered = self._sum(self.offered, node, cls)
        if offered == 0:
            return None
        return self._sum(self.delivered, node, cls) / offered

    def energy_mj(self, node: int, model: EnergyModel) -> float:
        per_state = self.state_us.get(node, Counter())
        return sum(
            dur_us * 1e-6 * model.power_mw(state) for state, dur_us in per_state.items()
        )

    def latency_samples(self, node: int | None = None, cls: TrafficClass | None = None) -> list[SimTime]:
        out: list[SimTime] = []
        for (n, c), samples in self.latency.items():
            if (node is None or n == node) and (cls is None or c == cls):
                out.extend(samples)
        return out

    def bnc_awake_fraction(self) -> Fraction | None:
        if self.total_superframes == 0:
            return None
        return Fraction(self.bnc_awake_superframes, self.total_superframes)

    def _sum(self, counter: Counter, node: int | None, cls: TrafficClass | None) -> int:
        return sum(
            v for (n, c), v in counter.items()
            if (node is None or n == node) and (cls is None or c == cls)
        )

    # -- merging --------------------------------------------------------------

    def merge_from(self, other: "MetricsLedger") -> None:
        self.profile_classes.update(other.profile_classes)
        self.offered.update(other.offered)
        self.delivered.update(other.delivered)
        self.dropped.update(other.dropped)
        for key, samples in other.latency.items():
            self.latency.setdefault(key, []).extend(samples)
        for node, states in other.state_us.items():
            self.state_us.setdefault(node, Counter()).update(states)
        self.spurious_wakeups.update(other.spurious_wakeups)
        self.node_awake_superframes.update(other.node_awake_superframes)
        self.wakeup_signals_sent.update(other.wakeup_signals_sent)
        self.loss_reasons.update(other.loss_reasons)
        self.bnc_awake_superframes += other.bnc_awake_superframes
        self.total_superframes += other.total_superframes
        self.emergency_records.extend(other.emergency_records)


def merge_ledgers(ledgers: Iterable[MetricsLedger]) -> MetricsLedger:
    merged = MetricsLedger()
    for ledger in ledgers:
        merged.merge_from(ledger)
    return merged


def nearest_rank(sorted_samples: list[SimTime], q: float) -> SimTime:
    n = len(sorted_samples)
    idx = max(1, math.ceil(q * n))
    return sorted_samples[idx - 1]


def latency_stats(samples: list[SimTime]) -> dict[str, float | SimTime] | None:
    """mean/p50/p99/max over recorded samples; None when there are none."""
    if not samples:
        return None
    ordered = sorted(samples)
    return {
        "mean": sum(ordered) / len(ordered),
        "p50": nearest_rank(ordered, 0.50),
        "p99": nearest_rank(ordered, 0.99),
        "max": ordered[-1],
    }


# -- CSV export ---------------------------------------------------------------


def node_csv_rows(
    ledger: MetricsLedger,
    run_id: str,
    seed: int | str,
    mac: str,
    energy_model: EnergyModel,
) -> list[str]:
    keys = set(ledger.offered) | set(ledger.delivered) | set(ledger.dropped)
    covered_nodes = {n for n, _ in keys}
    for node, cls in sorted(ledger.profile_classes.items()):
        if node not in covered_nodes:
            keys.add((node, cls))
    rows = []
    for node, cls in sorted(keys, key=lambda k: (k[0], k[1].value)):
        offered = ledger.offered[(node, cls)]
        delivered = ledger.delivered[(node, cls)]
        dropped = ledger.dropped[(node, cls)]
        pdr = "" if offered == 0 else f"{delivered / offered:.6f}"
        stats = latency_stats(ledger.latency.get((node, cls), []))
        if stats is None:
            mean = p50 = p99 = mx = ""
        else:
            mean = f"{stats['mean']:.3f}"
            p50, p99, mx = str(stats["p50"]), str(stats["p99"]), str(stats["max"])
        energy = f"{ledger.energy_mj(node, energy_model):.6f}"
        rows.append(
            f"{run_id},{seed},{mac},{node},{cls.value},{offered},{delivered},{dropped},"
            f"{pdr},{mean},{p50},{p99},{mx},{energy},{ledger.spurious_wakeups[node]}"
        )
    return rows


def write_node_csv(
    fh: IO[str],
    ledger: MetricsLedger,
    run_id: str,
    seed: int | str,
    mac: str,
    energy_model: EnergyModel,
) -> None:
    fh.write(NODE_CSV_COLUMNS + "\n")
    for row in node_csv_rows(ledger, run_id, seed, mac, energy_model):
        fh.write(row + "\n")


def write_summary_csv(
    fh: IO[str],
    ledger: MetricsLedger,
    run_id: str,
    seed: int | str,
    mac: str,
    energy_model: EnergyModel,
    bnc_id: int = 0,
) -> None:
    fraction = ledger.bnc_awake_fraction()
    frac_txt = "" if fraction is None else f"{float(fraction):.6f}"
    bnc_energy = f"{ledger.energy_mj(bnc_id, energy_model):.6f}"
    signals = sum(ledger.wakeup_signals_sent.values())
    fh.write(SUMMARY_CSV_COLUMNS + "\n")
    fh.write(
        f"{run_id},{seed},{mac},{ledger.total_superframes},{ledger.bnc_awake_superframes},"
        f"{frac_txt},{bnc_energy},{signals}\n"
    )
