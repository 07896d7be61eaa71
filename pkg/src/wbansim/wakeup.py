"""Traffic-based wakeup table and wakeup-radio signaling.

Every node carries a wakeup multiplier k and wakes on superframes whose index
is a multiple of k (index 0 is the first active one).  The coordinator keeps
the per-node multipliers in a versioned table, derives its own schedule as
the union of the node schedules, and sleeps whenever no node is due.  Nodes
sharing a multiplier wake together and contend for the channel.

The wakeup radio carries short out-of-band signals: node-to-coordinator for
emergencies, coordinator-to-node for on-demand queries.  Broadcast signaling
wakes every receiver-equipped node (the classic wakeup-radio limitation);
frequency-addressed signaling wakes exactly the intended target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .core import BNC_ID, NodeProfile


class WakeupTableError(ValueError):
    """Invalid table contents (duplicate node, bad multiplier, unknown node)."""


class Addressing(Enum):
    BROADCAST = "broadcast"
    FREQUENCY_ADDRESSED = "frequency_addressed"


class Direction(Enum):
    TO_BNC = "to_bnc"
    TO_NODE = "to_node"


class Purpose(Enum):
    EMERGENCY = "emergency"
    ON_DEMAND = "on_demand"


@dataclass(frozen=True)
class WakeupSignal:
    """One wakeup-radio signal; emergencies go to the BNC, queries to nodes."""

    addressing: Addressing
    direction: Direction
    purpose: Purpose
    sender: int
    target: int | None = None  # required for FREQUENCY_ADDRESSED ToNode

    def __post_init__(self) -> None:
        if self.purpose is Purpose.EMERGENCY and self.direction is not Direction.TO_BNC:
            raise ValueError("emergency signals are always addressed to the BNC")
        if self.purpose is Purpose.ON_DEMAND and self.direction is not Direction.TO_NODE:
            raise ValueError("on-demand signals are always addressed to nodes")


@dataclass
class WakeupConfig:
    mode: Addressing = Addressing.BROADCAST
    latency_us: int = 5_000          # receiver settle + decode
    signal_airtime_us: int = 1_000
    frequencies: dict[int, int] | None = None  # node id -> wakeup tone, addressed mode


class WakeupTable:
    """Node id -> wakeup multiplier, with derived contention groups.

    The table is owned by the BNC; every modification bumps the version, and
    lookups happen at superframe boundaries, so a change takes effect on the
    following superframe.
    """

    def __init__(self, entries: dict[int, int], version: int = 0) -> None:
        self.version = version
        self._entries: dict[int, int] = dict(entries)

    @property
    def entries(self) -> dict[int, int]:
        return dict(self._entries)

    def multiplier(self, node: int) -> int:
        try:
            return self._entries[node]
        except KeyError:
            raise WakeupTableError(f"node {node} has no wakeup-table entry") from None

    def node_ids(self) -> list[int]:
        return sorted(self._entries)

    def update(self, node: int, multiplier: int) -> None:
        if node not in self._entries:
            raise WakeupTableError(f"node {node} has no wakeup-table entry")
        if multiplier < 1:
            raise WakeupTableError(f"node {node}: multiplier must be >= 1, got {multiplier}")
        self._entries[node] = multiplier
        self.version += 1

    def contention_groups(self) -> dict[int, set[int]]:
        """Multiplier -> nodes sharing it; equal patterns contend for the channel."""
        groups: dict[int, set[int]] = {}
        for node, k in self._entries.items():
            groups.setdefault(k, set()).add(node)
        return groups


def build_table(profiles: list[NodeProfile]) -> WakeupTable:
    if not profiles:
        raise WakeupTableError("cannot build a wakeup table from an empty node list")
    entries: dict[int, int] = {}
    for p in profiles:
        if p.id in entries:
            raise WakeupTableError(f"duplicate node id {p.id}")
        if p.wakeup_multiplier < 1:
            raise WakeupTableError(
                f"node {p.id}: multiplier must be >= 1, got {p.wakeup_multiplier}"
            )
        entries[p.id] = p.wakeup_multiplier
    return WakeupTable(entries)


def is_awake(table: WakeupTable, node: int, superframe_index: int) -> bool:
    """True on every k-th superframe, first activation at index 0."""
    return superframe_index % table.multiplier(node) == 0


def bnc_schedule(table: WakeupTable, horizon: int) -> set[int]:
    """Superframe indices within the horizon where the BNC must be active.

    The union of the per-node schedules; the BNC sleeps on every other
    superframe since no node can have traffic for it then.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    awake: set[int] = set()
    for k in table._entries.values():
        awake.update(range(0, horizon, k))
    return awake


def bnc_awake_fraction(table: WakeupTable) -> Fraction:
    """Exact long-run awake fraction, evaluated over one full pattern period."""
    period = math.lcm(*table._entries.values())
    return Fraction(len(bnc_schedule(table, period)), period)


def resolve_wakeup_targets(
    signal: WakeupSignal,
    receiver_nodes: list[int],
    config: WakeupConfig,
) -> list[int]:
    """Device ids a signal reaches, before any loss draw.

    Broadcast node-bound signals hit every BN with a wakeup receiver; the
    frequency-addressed mode narrows that to the single matching node.
    """
    if signal.direction is Direction.TO_BNC:
        return [BNC_ID]
    if signal.addressing is Addressing.FREQUENCY_ADDRESSED:
        if signal.target is None:
            raise ValueError("frequency-addressed signal needs a target")
        if config.frequencies is None or signal.target not in config.frequencies:
            raise WakeupTableError(
                f"node {signal.target} has no wakeup frequency assignment"
            )
        return [signal.target] if signal.target in receiver_nodes else []
    return sorted(receiver_nodes)
