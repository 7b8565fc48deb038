"""Classical planners: nearest-neighbor and random heuristics plus an exact
dynamic-programming oracle for small instances. All emit RoutePlans that pass
the same validator as policy rollouts."""
from __future__ import annotations

import numpy as np

from .errors import InfeasibleInstanceError, InvalidArgumentError
from .routes import RoutePlan, build_plan
from .scenario import Scenario
from .timealloc import ServiceProfile

EXACT_MAX_DEVICES = 10


class _CapacityTracker:
    """Running storage/energy state shared by the heuristic planners."""

    def __init__(self, scenario: Scenario, profiles: list[ServiceProfile]):
        phys = scenario.physics
        self.scenario = scenario
        self.price_per_meter = phys.flight_power / phys.flight_speed
        self.storage_cap = scenario.uav.storage_capacity
        self.energy_cap = scenario.uav.energy_capacity
        pos = scenario.positions_xy()
        self.pos = pos
        self.demands = np.array([p.demand for p in profiles])
        self.hover = np.array([p.e_transfer + p.e_collect for p in profiles])
        self.returns = np.hypot(pos[:, 0] - scenario.depot.x, pos[:, 1] - scenario.depot.y)
        self.reset()

    def reset(self) -> None:
        self.storage = self.storage_cap
        self.energy = self.energy_cap
        self.last_xy = (self.scenario.depot.x, self.scenario.depot.y)

    def leg_to(self, device_id: int) -> float:
        dx = self.pos[device_id - 1, 0] - self.last_xy[0]
        dy = self.pos[device_id - 1, 1] - self.last_xy[1]
        return float(np.hypot(dx, dy))

    def can_serve(self, device_id: int) -> bool:
        i = device_id - 1
        if self.demands[i] > self.storage:
            return False
        need = (self.leg_to(device_id) + self.returns[i]) * self.price_per_meter + self.hover[i]
        return need <= self.energy

    def serve(self, device_id: int) -> None:
        i = device_id - 1
        self.storage -= self.demands[i]
        self.energy -= self.leg_to(device_id) * self.price_per_meter + self.hover[i]
        self.last_xy = (self.pos[i, 0], self.pos[i, 1])

    def assert_instance_feasible(self) -> None:
        """Every device must be servable by a fresh full vehicle on its own."""
        round_trip = 2.0 * self.returns * self.price_per_meter + self.hover
        for i in range(len(self.demands)):
            if self.demands[i] > self.storage_cap or round_trip[i] > self.energy_cap:
                raise InfeasibleInstanceError(
                    f"device {i + 1} cannot be served even by a fresh vehicle",
                    device_id=i + 1,
                )


def nearest_neighbor_plan(scenario: Scenario, profiles: list[ServiceProfile]) -> RoutePlan:
    """Greedy heuristic: always fly to the nearest feasible unvisited device,
    returning to the depot when none fits the remaining capacity."""
    tracker = _CapacityTracker(scenario, profiles)
    tracker.assert_instance_feasible()
    n = scenario.n_devices
    unvisited = set(range(1, n + 1))
    tour = [0]
    while unvisited:
        best_id = None
        best_leg = np.inf
        for device_id in sorted(unvisited):
            if not tracker.can_serve(device_id):
                continue
            leg = tracker.leg_to(device_id)
            if leg < best_leg:
                best_leg = leg
                best_id = device_id
        if best_id is None:
            tour.append(0)
            tracker.reset()
            continue
        tracker.serve(best_id)
        unvisited.remove(best_id)
        tour.append(best_id)
    tour.append(0)
    return build_plan(tour, scenario, profiles)


def random_plan(scenario: Scenario, profiles: list[ServiceProfile], seed: int) -> RoutePlan:
    """Random feasible permutation, split greedily into capacity-feasible segments."""
    tracker = _CapacityTracker(scenario, profiles)
    tracker.assert_instance_feasible()
    rng = np.random.default_rng(seed)
    order = rng.permutation(scenario.n_devices) + 1
    tour = [0]
    for device_id in order:
        device_id = int(device_id)
        if not tracker.can_serve(device_id):
            tour.append(0)
            tracker.reset()
        tracker.serve(device_id)
        tour.append(device_id)
    tour.append(0)
    return build_plan(tour, scenario, profiles)


def exact_plan(scenario: Scenario, profiles: list[ServiceProfile]) -> RoutePlan:
    """Provably minimal total flight distance subject to storage and energy caps.

    Held-Karp dynamic programming gives the optimal open tour for every device
    subset; a subset is usable as one segment when its payload fits the
    storage and its best closed tour fits the energy budget. A second DP over
    subset partitions then picks the optimal segmentation. Hover energies are
    order-independent, so minimizing flight distance minimizes total energy.
    """
    n = scenario.n_devices
    if n > EXACT_MAX_DEVICES:
        raise InvalidArgumentError(
            f"exact_plan refused: {n} devices exceeds the limit of {EXACT_MAX_DEVICES}"
        )
    tracker = _CapacityTracker(scenario, profiles)
    tracker.assert_instance_feasible()

    pts = np.vstack(
        [[scenario.depot.x, scenario.depot.y]]
        + [[d.position.x, d.position.y] for d in scenario.devices]
    )
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))  # (N+1, N+1), index 0 = depot

    full = (1 << n) - 1
    price = tracker.price_per_meter

    # open-tour DP: best[mask][i] = shortest depot -> (mask) path ending at device i+1
    best = np.full((full + 1, n), np.inf)
    parent = np.full((full + 1, n), -1, dtype=np.int64)
    for i in range(n):
        best[1 << i][i] = dist[0, i + 1]
    for mask in range(1, full + 1):
        for i in range(n):
            if not mask & (1 << i) or not np.isfinite(best[mask][i]):
                continue
            base = best[mask][i]
            for j in range(n):
                bit = 1 << j
                if mask & bit:
                    continue
                cand = base + dist[i + 1, j + 1]
                nxt = mask | bit
                if cand < best[nxt][j]:
                    best[nxt][j] = cand
                    parent[nxt][j] = i

    # closed-tour cost and feasibility per subset
    route_cost = np.full(full + 1, np.inf)
    route_end = np.full(full + 1, -1, dtype=np.int64)
    for mask in range(1, full + 1):
        closed = best[mask] + dist[1:, 0]
        end = int(np.argmin(closed))
        cost = float(closed[end])
        load = sum(tracker.demands[i] for i in range(n) if mask & (1 << i))
        hover = sum(tracker.hover[i] for i in range(n) if mask & (1 << i))
        if load <= tracker.storage_cap and cost * price + hover <= tracker.energy_cap:
            route_cost[mask] = cost
            route_end[mask] = end

    # partition DP over segments; anchor each segment on the lowest unserved bit
    total = np.full(full + 1, np.inf)
    choice = np.zeros(full + 1, dtype=np.int64)
    total[0] = 0.0
    for mask in range(1, full + 1):
        low = mask & (-mask)
        sub = mask
        while sub:
            if sub & low and np.isfinite(route_cost[sub]):
                cand = total[mask ^ sub] + route_cost[sub]
                if cand < total[mask]:
                    total[mask] = cand
                    choice[mask] = sub
            sub = (sub - 1) & mask
    if not np.isfinite(total[full]):
        raise InfeasibleInstanceError("no feasible segmentation exists for this instance")

    tour = [0]
    mask = full
    while mask:
        sub = int(choice[mask])
        order = []
        end = int(route_end[sub])
        cursor = sub
        while end >= 0:
            order.append(end + 1)
            nxt = int(parent[cursor][end])
            cursor ^= 1 << end
            end = nxt
        tour.extend(reversed(order))
        tour.append(0)
        mask ^= sub
    return build_plan(tour, scenario, profiles)
