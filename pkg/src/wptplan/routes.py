"""Route plans: a flat tour over {depot, devices}, its per-vehicle segments,
and an independent validator that re-derives every invariant from scratch."""
from __future__ import annotations

from dataclasses import dataclass

from .energy import EnergyLedger, route_energy
from .errors import InvalidRouteError, PlanViolationError
from .scenario import Scenario

#: slack for floating-point accumulation when re-checking capacity sums
_REL_EPS = 1e-9


@dataclass(frozen=True)
class RoutePlan:
    """A complete multi-vehicle plan.

    tour is the flat visiting order, depot index 0 delimiting vehicles, for
    example [0, 4, 3, 0, 2, 1, 0]. segments holds the per-vehicle depot-closed
    routes, uav_count how many vehicles fly, and ledgers one energy split per
    segment.
    """

    tour: tuple[int, ...]
    segments: tuple[tuple[int, ...], ...]
    uav_count: int
    ledgers: tuple[EnergyLedger, ...]

    @property
    def total_energy(self) -> float:
        return sum(ledger.total for ledger in self.ledgers)

    @property
    def flight_energy(self) -> float:
        return sum(ledger.flight for ledger in self.ledgers)

    def flight_distance(self, scenario: Scenario) -> float:
        """Total leg length in meters, summed over all segments."""
        total = 0.0
        for segment in self.segments:
            prev = scenario.hover_point(segment[0])
            for index in segment[1:]:
                here = scenario.hover_point(index)
                total += prev.distance_to(here)
                prev = here
        return total


def segments_from_tour(tour) -> list[list[int]]:
    """Split a flat tour at depot indices into depot-closed segments.

    [0, 4, 3, 0, 2, 1, 0] becomes [[0, 4, 3, 0], [0, 2, 1, 0]]. Consecutive
    depot visits contribute no segment.
    """
    tour = list(tour)
    if len(tour) < 2 or tour[0] != 0 or tour[-1] != 0:
        raise InvalidRouteError(f"tour must start and end at the depot, got {tour}")
    segments = []
    current = [0]
    for index in tour[1:]:
        current.append(index)
        if index == 0:
            if len(current) > 2:
                segments.append(current)
            current = [0]
    return segments


def build_plan(tour, scenario: Scenario, profiles) -> RoutePlan:
    """Assemble a RoutePlan from a flat tour, recomputing all ledgers."""
    segments = segments_from_tour(tour)
    ledgers = tuple(route_energy(seg, profiles, scenario) for seg in segments)
    return RoutePlan(
        tour=tuple(tour),
        segments=tuple(tuple(seg) for seg in segments),
        uav_count=len(segments),
        ledgers=ledgers,
    )


def validate_plan(plan: RoutePlan, scenario: Scenario, profiles) -> None:
    """Check every plan invariant from first principles; raise on violation.

    Recomputes storage and energy per segment instead of trusting the plan's
    ledgers: serve-once coverage, depot closure, per-segment storage within
    storage_capacity, per-segment energy within energy_capacity, vehicle
    count, and ledger consistency.
    """
    n = scenario.n_devices
    if plan.uav_count != len(plan.segments):
        raise PlanViolationError(
            f"uav_count {plan.uav_count} disagrees with {len(plan.segments)} segments"
        )

    recombined = segments_from_tour(plan.tour)
    if [list(s) for s in plan.segments] != recombined:
        raise PlanViolationError("segments do not match the flat tour")

    seen: list[int] = []
    for segment in plan.segments:
        if len(segment) < 3 or segment[0] != 0 or segment[-1] != 0:
            raise PlanViolationError(f"segment {list(segment)} is not depot-closed")
        if any(idx == 0 for idx in segment[1:-1]):
            raise PlanViolationError(f"segment {list(segment)} visits the depot mid-route")
        seen.extend(segment[1:-1])
    if sorted(seen) != list(range(1, n + 1)):
        raise PlanViolationError(
            f"devices served {sorted(seen)} do not cover 1..{n} exactly once"
        )

    storage_cap = scenario.uav.storage_capacity
    energy_cap = scenario.uav.energy_capacity
    for k, segment in enumerate(plan.segments):
        load = sum(scenario.device(idx).data_bits for idx in segment[1:-1])
        if load > storage_cap * (1.0 + _REL_EPS):
            raise PlanViolationError(
                f"segment {k}: storage {load} bits exceeds capacity {storage_cap}"
            )
        ledger = route_energy(segment, profiles, scenario)
        if ledger.total > energy_cap * (1.0 + _REL_EPS):
            raise PlanViolationError(
                f"segment {k}: energy {ledger.total} J exceeds capacity {energy_cap}"
            )
        stored = plan.ledgers[k]
        if (
            abs(stored.flight - ledger.flight) > _REL_EPS * max(1.0, ledger.flight)
            or abs(stored.transfer - ledger.transfer) > _REL_EPS * max(1.0, ledger.transfer)
            or abs(stored.collect - ledger.collect) > _REL_EPS * max(1.0, ledger.collect)
        ):
            raise PlanViolationError(f"segment {k}: stored ledger disagrees with recomputation")
