"""Evaluation harness: run planners over fixed instance sets, aggregate energy
statistics, and sweep the battery capacity over a mAh grid."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .baselines import exact_plan, nearest_neighbor_plan, random_plan
from .errors import InvalidArgumentError
from .policy import PolicyParams, rollout
from .routes import RoutePlan, validate_plan
from .scenario import MB_BITS, Scenario, UavConfig, generate_scenario, mah_to_joules
from .timealloc import build_profiles

METHODS = ("policy", "nearest_neighbor", "random", "exact")


@dataclass(frozen=True)
class InstanceSpec:
    """A reproducible instance set: seeds seed0 .. seed0+count-1."""

    n: int = 20
    count: int = 100
    seed0: int = 10_000
    area: float = 1000.0
    data_min: float = 0.2 * MB_BITS
    data_max: float = 1.5 * MB_BITS
    storage_bits: float = 48e6
    energy_j: float = 455544.0
    neighbor_radius: float = 200.0

    def seeds(self) -> list[int]:
        return list(range(self.seed0, self.seed0 + self.count))

    def build(self) -> list[Scenario]:
        uav = UavConfig(energy_capacity=self.energy_j, storage_capacity=self.storage_bits)
        return [
            generate_scenario(
                n=self.n,
                area=self.area,
                data_range=(self.data_min, self.data_max),
                seed=seed,
                uav=uav,
                neighbor_radius=self.neighbor_radius,
            )
            for seed in self.seeds()
        ]


@dataclass
class EvalResult:
    """Per-method outcomes; aggregates always derive from the stored values."""

    method: str
    energies: list[float] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)
    uav_counts: list[int] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def minimum(self) -> float:
        return min(self.energies)

    @property
    def mean(self) -> float:
        return sum(self.energies) / len(self.energies)

    @property
    def std(self) -> float:
        mu = self.mean
        return math.sqrt(sum((e - mu) ** 2 for e in self.energies) / len(self.energies))

    @property
    def mean_distance(self) -> float:
        return sum(self.distances) / len(self.distances)


def _plan_with(method: str, scenario: Scenario, profiles, policy: PolicyParams | None) -> RoutePlan:
    if method == "nearest_neighbor":
        return nearest_neighbor_plan(scenario, profiles)
    if method == "random":
        return random_plan(scenario, profiles, seed=scenario.seed or 0)
    if method == "exact":
        return exact_plan(scenario, profiles)
    if method == "policy":
        if policy is None:
            raise InvalidArgumentError("policy evaluation needs trained parameters")
        plan, _ = rollout(scenario, profiles, policy, mode="greedy")
        return plan
    raise InvalidArgumentError(f"unknown method {method!r}; choose from {METHODS}")


def evaluate(
    methods: list[str],
    instances: list[Scenario],
    profiles_mode: str = "numeric",
    policy: PolicyParams | None = None,
    threads: int = 1,
) -> list[EvalResult]:
    """Run each method over every instance; every plan is validated."""
    all_profiles = [build_profiles(s, profiles_mode) for s in instances]
    results = []
    for method in methods:
        started = time.perf_counter()

        def solve(pair):
            scenario, profiles = pair
            plan = _plan_with(method, scenario, profiles, policy)
            validate_plan(plan, scenario, profiles)
            return plan

        pairs = list(zip(instances, all_profiles))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                plans = list(pool.map(solve, pairs))
        else:
            plans = [solve(p) for p in pairs]

        result = EvalResult(method=method)
        for scenario, plan in zip(instances, plans):
            result.energies.append(plan.total_energy)
            result.distances.append(plan.flight_distance(scenario))
            result.uav_counts.append(plan.uav_count)
        result.wall_time = time.perf_counter() - started
        results.append(result)
    return results


def sweep_grid(lo_mah: float = 1700.0, hi_mah: float = 2550.0, step_mah: float = 170.0) -> list[float]:
    points = []
    mah = lo_mah
    while mah <= hi_mah + 1e-9:
        points.append(round(mah, 9))
        mah += step_mah
    return points


def battery_sweep(
    methods: list[str],
    spec: InstanceSpec,
    mah_points: list[float] | None = None,
    voltage: float = 22.2,
    profiles_mode: str = "numeric",
    policy: PolicyParams | None = None,
    threads: int = 1,
) -> list[dict]:
    """Energy-vs-battery curves: one row per (method, mAh point)."""
    mah_points = mah_points or sweep_grid()
    base_instances = spec.build()
    rows = []
    for mah in mah_points:
        energy_cap = mah_to_joules(mah, voltage)
        instances = [
            replace(s, uav=UavConfig(energy_cap, s.uav.storage_capacity)) for s in base_instances
        ]
        for result in evaluate(methods, instances, profiles_mode, policy, threads):
            rows.append(
                {
                    "method": result.method,
                    "battery_mah": mah,
                    "energy_capacity_j": energy_cap,
                    "mean_energy_j": result.mean,
                    "min_energy_j": result.minimum,
                    "std_energy_j": result.std,
                    "mean_uavs": sum(result.uav_counts) / len(result.uav_counts),
                }
            )
    return rows
