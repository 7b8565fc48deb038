"""Channel gain and energy accounting for flight, power transfer, and collection."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidRouteError
from .scenario import PhysicsConfig, Point3, Scenario


def channel_gain(scenario: Scenario, device_id: int) -> float:
    """Free-space power gain between the hovering vehicle and a device.

    The vehicle hovers directly above the device, so the link distance is the
    flight height and the gain is channel_ref_gain / height^2. Uplink and
    downlink gains are equal.
    """
    scenario.device(device_id)  # range check
    d = scenario.physics.flight_height
    return scenario.physics.channel_ref_gain / (d * d)


def flight_time(a: Point3, b: Point3, physics: PhysicsConfig) -> float:
    """Straight-line travel time between two points at constant speed."""
    return a.distance_to(b) / physics.flight_speed


def flight_energy(distance: float, physics: PhysicsConfig) -> float:
    """Energy spent flying a given distance: flight power times travel time."""
    if distance < 0.0:
        raise InvalidRouteError(f"negative flight distance {distance}")
    return physics.flight_power * distance / physics.flight_speed


@dataclass(frozen=True)
class EnergyLedger:
    """Per-route energy split in joules."""

    flight: float
    transfer: float
    collect: float

    @property
    def total(self) -> float:
        return self.flight + self.transfer + self.collect

    def __add__(self, other: "EnergyLedger") -> "EnergyLedger":
        return EnergyLedger(
            self.flight + other.flight,
            self.transfer + other.transfer,
            self.collect + other.collect,
        )


ZERO_LEDGER = EnergyLedger(0.0, 0.0, 0.0)


def route_energy(plan_segment, profiles, scenario: Scenario) -> EnergyLedger:
    """Account a depot-closed index sequence.

    plan_segment is a list over {0..N} starting and ending at the depot
    index 0. Flight energy covers every leg; each device index adds its
    precomputed transfer and collection hover energies from profiles
    (ordered by device id).
    """
    segment = list(plan_segment)
    if len(segment) < 2 or segment[0] != 0 or segment[-1] != 0:
        raise InvalidRouteError(f"segment must start and end at the depot, got {segment}")

    flight = 0.0
    transfer = 0.0
    collect = 0.0
    prev = scenario.hover_point(segment[0])
    for index in segment[1:]:
        here = scenario.hover_point(index)
        flight += flight_energy(prev.distance_to(here), scenario.physics)
        prev = here
        if index != 0:
            profile = profiles[index - 1]
            transfer += profile.e_transfer
            collect += profile.e_collect
    return EnergyLedger(flight=flight, transfer=transfer, collect=collect)
