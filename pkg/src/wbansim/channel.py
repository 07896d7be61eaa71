"""Propagation, packet error injection, collisions and energy-detection CCA.

Path loss follows a log-distance model with separate parameters per link
class (on-body/on-body, in-body/on-body, in-body/in-body); the in-body
exponents are much steeper, which is what makes energy-detection CCA blind
to implants beyond a few meters.  Power sums for CCA are always done in
linear milliwatts, never in dB.

The wakeup radio is a separate always-listening channel: no collisions, no
sensitivity floor, only an optional Bernoulli loss probability.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum

from .core import Frame, FrameKind, Placement, PlacementKind, SimTime

MIN_DISTANCE_M = 0.001  # log-singularity guard


class Radio(Enum):
    DATA = "data"
    WAKEUP = "wakeup"


class LinkClass(Enum):
    ON_BODY = "on_body"            # OnBody <-> OnBody
    IN_TO_ON = "in_to_on"          # InBody <-> OnBody, either direction
    IN_TO_IN = "in_to_in"          # InBody <-> InBody


class CcaResult(Enum):
    IDLE = "idle"
    BUSY = "busy"


class LossReason(Enum):
    COLLISION = "collision"
    BELOW_SENSITIVITY = "below_sensitivity"
    RANDOM_ERROR = "random_error"


@dataclass(frozen=True)
class PathLossParams:
    ref_loss_db: float
    ref_dist_m: float
    exponent: float

    def __post_init__(self) -> None:
        if self.ref_loss_db <= 0:
            raise ValueError(f"ref_loss_db must be > 0, got {self.ref_loss_db}")
        if self.ref_dist_m <= 0:
            raise ValueError(f"ref_dist_m must be > 0, got {self.ref_dist_m}")
        if self.exponent < 1.5:
            raise ValueError(f"exponent must be >= 1.5, got {self.exponent}")


def default_path_loss() -> dict[LinkClass, PathLossParams]:
    """Defaults calibrated so a -16 dBm implant is invisible to on-body CCA
    at 3 m but detected at 1.5 m with a -85 dBm threshold."""
    return {
        LinkClass.ON_BODY: PathLossParams(40.0, 1.0, 2.0),
        LinkClass.IN_TO_ON: PathLossParams(60.0, 1.0, 4.5),
        LinkClass.IN_TO_IN: PathLossParams(60.0, 1.0, 6.0),
    }


@dataclass
class ChannelParams:
    path_loss: dict[LinkClass, PathLossParams] = field(default_factory=default_path_loss)
    tx_power_on_body_dbm: float = 0.0
    tx_power_in_body_dbm: float = -16.0
    sensitivity_dbm: float = -95.0
    cca_threshold_dbm: float = -85.0
    capture_margin_db: float = 10.0
    wakeup_loss_p: float = 0.0

    def tx_power_for(self, placement: Placement) -> float:
        if placement.kind is PlacementKind.IN_BODY:
            return self.tx_power_in_body_dbm
        return self.tx_power_on_body_dbm


class LinkErrorTable:
    """Optional per-link packet success probabilities; absent links succeed."""

    def __init__(self, entries: dict[tuple[int, int], float] | None = None) -> None:
        self._entries: dict[tuple[int, int], float] = {}
        for link, p in (entries or {}).items():
            self.set(link[0], link[1], p)

    def set(self, src: int, dst: int, p_success: float) -> None:
        if not 0.0 <= p_success <= 1.0:
            raise ValueError(f"success probability must be in [0, 1], got {p_success}")
        self._entries[(src, dst)] = p_success

    def success_p(self, src: int, dst: int) -> float:
        return self._entries.get((src, dst), 1.0)


def link_class(src: Placement, dst: Placement) -> LinkClass:
    in_body = (src.kind is PlacementKind.IN_BODY, dst.kind is PlacementKind.IN_BODY)
    if all(in_body):
        return LinkClass.IN_TO_IN
    if any(in_body):
        return LinkClass.IN_TO_ON
    return LinkClass.ON_BODY


def path_loss_db(
    src: Placement, dst: Placement, params: dict[LinkClass, PathLossParams]
) -> float:
    """Log-distance loss using the parameter set of the link class."""
    p = params[link_class(src, dst)]
    d = max(src.distance_to(dst), MIN_DISTANCE_M)
    return p.ref_loss_db + 10.0 * p.exponent * math.log10(d / p.ref_dist_m)


def rx_power_dbm(
    tx_power_dbm: float,
    src: Placement,
    dst: Placement,
    params: dict[LinkClass, PathLossParams],
) -> float:
    return tx_power_dbm - path_loss_db(src, dst, params)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0.0:
        return -math.inf
    return 10.0 * math.log10(mw)


@dataclass(eq=False)
class ActiveTx:
    """A transmission registered on a radio for [start, end)."""

    frame: Frame
    tx_power_dbm: float
    src_placement: Placement
    start: SimTime
    end: SimTime
    radio: Radio
    interferers: list["ActiveTx"] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError("transmission must have positive duration")


class ChannelModel:
    """Active-transmission registry backing CCA and reception decisions."""

    def __init__(
        self,
        params: ChannelParams | None = None,
        link_errors: LinkErrorTable | None = None,
    ) -> None:
        self.params = params or ChannelParams()
        self.link_errors = link_errors or LinkErrorTable()
        self._active: list[ActiveTx] = []
        self.tx_log: list[ActiveTx] = []

    def register_tx(
        self,
        frame: Frame,
        src_placement: Placement,
        start: SimTime,
        duration: SimTime,
        radio: Radio = Radio.DATA,
        tx_power_dbm: float | None = None,
    ) -> ActiveTx:
        if frame.kind is FrameKind.WAKEUP_SIGNAL and radio is not Radio.WAKEUP:
            raise ValueError("wakeup signals travel only on the wakeup radio")
        if tx_power_dbm is None:
            tx_power_dbm = self.params.tx_power_for(src_placement)
        tx = ActiveTx(frame, tx_power_dbm, src_placement, start, start + duration, radio)
        frame.tx_start = start
        # A transmission may be registered ahead of its start instant, so
        # interference links require a genuine interval overlap.
        for other in self._active:
            if other.radio is radio and other.end > tx.start and tx.end > other.start:
                other.interferers.append(tx)
                tx.interferers.append(other)
        self._active.append(tx)
        self.tx_log.append(tx)
        return tx

    def end_tx(self, tx: ActiveTx) -> None:
        self._active.remove(tx)

    def busy_until(self, radio: Radio, now: SimTime) -> SimTime:
        """Earliest instant at or after now when the radio carries nothing."""
        ends = [tx.end for tx in self._active if tx.radio is radio and tx.end > now]
        return max(ends, default=now)

    def received_power_dbm(
        self, listener: Placement, now: SimTime, exclude_src: int | None = None
    ) -> float:
        """Linear-milliwatt sum over active data-radio transmissions, in dBm."""
        total_mw = 0.0
        for tx in self._active:
            if tx.radio is not Radio.DATA:
                continue
            if not tx.start <= now < tx.end:
                continue
            if exclude_src is not None and tx.frame.src == exclude_src:
                continue
            total_mw += dbm_to_mw(
                rx_power_dbm(tx.tx_power_dbm, tx.src_placement, listener, self.params.path_loss)
            )
        return mw_to_dbm(total_mw)

    def cca_energy_detect(
        self,
        listener: Placement,
        threshold_dbm: float,
        now: SimTime,
        exclude_src: int | None = None,
    ) -> CcaResult:
        power = self.received_power_dbm(listener, now, exclude_src=exclude_src)
        return CcaResult.BUSY if power >= threshold_dbm else CcaResult.IDLE

    def deliver(
        self,
        tx: ActiveTx,
        dst_placement: Placement,
        rng: random.Random,
        dst_id: int | None = None,
    ) -> LossReason | None:
        """Reception outcome at one destination; None means delivered.

        Failure reasons are checked in a fixed order: collision, then
        sensitivity, then configured link error.
        """
        frame = tx.frame
        dst = frame.dst if dst_id is None else dst_id
        if tx.radio is Radio.WAKEUP:
            # Ideal out-of-band channel apart from an optional loss draw.
            if self.params.wakeup_loss_p > 0.0 and rng.random() < self.params.wakeup_loss_p:
                return LossReason.RANDOM_ERROR
            return None
        own_rx = rx_power_dbm(tx.tx_power_dbm, tx.src_placement, dst_placement, self.params.path_loss)
        capture_floor = own_rx - self.params.capture_margin_db
        for other in tx.interferers:
            other_rx = rx_power_dbm(
                other.tx_power_dbm, other.src_placement, dst_placement, self.params.path_loss
            )
            if other_rx >= capture_floor:
                return LossReason.COLLISION
        if own_rx < self.params.sensitivity_dbm:
            return LossReason.BELOW_SENSITIVITY
        p = self.link_errors.success_p(frame.src, dst)
        if p < 1.0 and rng.random() >= p:
            return LossReason.RANDOM_ERROR
        return None
