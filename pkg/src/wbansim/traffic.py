"""Traffic generators: timed arrivals per node plus the BNC's query script.

Normal traffic is periodic (an ECG-grade node defaults to 4 frames/hour, the
low tier to 4/day; the medium tier's 1/hour default sits between the two).
Emergency traffic is event-driven with exponential inter-arrival times.
On-demand traffic is scripted: the BNC issues queries at fixed times.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .core import SimTime, TrafficClass

US_PER_HOUR = 3_600_000_000


class ArrivalProcess(Enum):
    PERIODIC = "periodic"
    POISSON = "poisson"
    SATURATED = "saturated"  # a fresh frame the instant the queue drains


DEFAULT_RATE_PER_HOUR = {
    TrafficClass.NORMAL_HIGH: 4.0,
    TrafficClass.NORMAL_MEDIUM: 1.0,
    TrafficClass.NORMAL_LOW: 4.0 / 24.0,
    TrafficClass.EMERGENCY: 1.0,
}

DEFAULT_ARRIVAL = {
    TrafficClass.NORMAL_HIGH: ArrivalProcess.PERIODIC,
    TrafficClass.NORMAL_MEDIUM: ArrivalProcess.PERIODIC,
    TrafficClass.NORMAL_LOW: ArrivalProcess.PERIODIC,
    TrafficClass.EMERGENCY: ArrivalProcess.POISSON,
}


@dataclass
class GeneratorSpec:
    traffic_class: TrafficClass
    payload_bits: int
    rate_per_hour: float = 0.0
    arrival: ArrivalProcess = ArrivalProcess.PERIODIC
    phase_us: SimTime = 0

    def __post_init__(self) -> None:
        if self.arrival is not ArrivalProcess.SATURATED and self.rate_per_hour <= 0:
            raise ValueError(f"rate_per_hour must be > 0, got {self.rate_per_hour}")
        if self.payload_bits <= 0:
            raise ValueError(f"payload_bits must be positive, got {self.payload_bits}")

    @property
    def period_us(self) -> SimTime:
        return round(US_PER_HOUR / self.rate_per_hour)


@dataclass(frozen=True)
class OnDemandEntry:
    """One scripted BNC query: wake the target and collect its response."""

    time_us: SimTime
    target: int
    continuous: bool
    rate_per_s: float = 0.0        # continuous streams only
    duration_us: SimTime = 0

    def __post_init__(self) -> None:
        if self.continuous:
            if self.rate_per_s <= 0:
                raise ValueError("continuous query needs rate_per_s > 0")
            if self.duration_us <= 0:
                raise ValueError("continuous query needs duration_us > 0")


def first_arrival(spec: GeneratorSpec, rng: random.Random) -> SimTime:
    if spec.arrival is ArrivalProcess.PERIODIC:
        return spec.phase_us
    if spec.arrival is ArrivalProcess.POISSON:
        return spec.phase_us + _exponential_us(spec, rng)
    raise ValueError("saturated generators do not produce timed arrivals")


def next_arrival(spec: GeneratorSpec, now: SimTime, rng: random.Random) -> SimTime:
    """Time of the arrival following one at `now`."""
    if spec.arrival is ArrivalProcess.PERIODIC:
        return now + spec.period_us
    if spec.arrival is ArrivalProcess.POISSON:
        return now + _exponential_us(spec, rng)
    raise ValueError("saturated generators do not produce timed arrivals")


def _exponential_us(spec: GeneratorSpec, rng: random.Random) -> SimTime:
    mean_us = US_PER_HOUR / spec.rate_per_hour
    return max(1, round(rng.expovariate(1.0 / mean_us)))
