import numpy as np
import pytest

from wptplan.baselines import exact_plan, nearest_neighbor_plan, random_plan
from wptplan.errors import InfeasibleInstanceError, InvalidArgumentError
from wptplan.routes import validate_plan
from wptplan.scenario import (
    IotDevice,
    PhysicsConfig,
    Point3,
    Scenario,
    UavConfig,
    generate_scenario,
)
from wptplan.timealloc import build_profiles


def line_scenario(xs, storage=1e9, energy=1e6, data_bits=2e6):
    devices = tuple(
        IotDevice(id=i + 1, position=Point3(x, 0.0, 0.0), data_bits=data_bits)
        for i, x in enumerate(xs)
    )
    return Scenario(
        depot=Point3(0, 0, 20), devices=devices, physics=PhysicsConfig(),
        uav=UavConfig(energy_capacity=energy, storage_capacity=storage),
    )


def random_instance(seed, n=8, storage=24e6, energy=40_000.0):
    return generate_scenario(
        n=n, area=1000.0, seed=seed,
        uav=UavConfig(energy_capacity=energy, storage_capacity=storage),
    )


# ----------------------------------------------------------------------
# nearest neighbor
# ----------------------------------------------------------------------

def test_nn_visits_devices_outward_on_a_line():
    scenario = line_scenario([100.0, 200.0])
    profiles = build_profiles(scenario)
    plan = nearest_neighbor_plan(scenario, profiles)
    assert list(plan.tour) == [0, 1, 2, 0]


def test_nn_rejects_oversized_demands():
    scenario = line_scenario([100.0, 200.0], storage=1e6)  # every demand is 2e6
    profiles = build_profiles(scenario)
    with pytest.raises(InfeasibleInstanceError):
        nearest_neighbor_plan(scenario, profiles)


def test_nn_splits_when_storage_runs_out():
    scenario = line_scenario([100.0, 120.0, 140.0], storage=4e6)  # two devices per trip
    profiles = build_profiles(scenario)
    plan = nearest_neighbor_plan(scenario, profiles)
    assert plan.uav_count == 2
    validate_plan(plan, scenario, profiles)


def test_nn_valid_over_many_random_instances():
    for seed in range(150):
        scenario = random_instance(seed)
        profiles = build_profiles(scenario)
        plan = nearest_neighbor_plan(scenario, profiles)
        validate_plan(plan, scenario, profiles)


# ----------------------------------------------------------------------
# random baseline
# ----------------------------------------------------------------------

def test_random_plan_seed_deterministic():
    scenario = random_instance(5)
    profiles = build_profiles(scenario)
    assert random_plan(scenario, profiles, seed=9) == random_plan(scenario, profiles, seed=9)


def test_random_plan_single_device():
    scenario = line_scenario([250.0])
    profiles = build_profiles(scenario)
    plan = random_plan(scenario, profiles, seed=0)
    assert list(plan.tour) == [0, 1, 0]


def test_random_plans_valid_and_worse_than_nn_on_average():
    scenario = random_instance(12, n=10)
    profiles = build_profiles(scenario)
    nn_distance = nearest_neighbor_plan(scenario, profiles).flight_distance(scenario)
    distances = []
    for seed in range(300):
        plan = random_plan(scenario, profiles, seed=seed)
        validate_plan(plan, scenario, profiles)
        distances.append(plan.flight_distance(scenario))
    assert np.mean(distances) > nn_distance


# ----------------------------------------------------------------------
# exact oracle
# ----------------------------------------------------------------------

def test_exact_single_device():
    scenario = line_scenario([300.0])
    profiles = build_profiles(scenario)
    plan = exact_plan(scenario, profiles)
    assert list(plan.tour) == [0, 1, 0]
    assert plan.flight_distance(scenario) == pytest.approx(600.0)


def test_exact_refuses_large_instances():
    scenario = random_instance(1, n=11, storage=1e9, energy=1e7)
    profiles = build_profiles(scenario)
    with pytest.raises(InvalidArgumentError):
        exact_plan(scenario, profiles)


def test_exact_matches_enumeration_on_triangle():
    import itertools

    devices = (
        IotDevice(id=1, position=Point3(200.0, 100.0, 0.0), data_bits=2e6),
        IotDevice(id=2, position=Point3(400.0, 500.0, 0.0), data_bits=2e6),
        IotDevice(id=3, position=Point3(100.0, 400.0, 0.0), data_bits=2e6),
    )
    scenario = Scenario(depot=Point3(0, 0, 20), devices=devices,
                        uav=UavConfig(energy_capacity=1e6, storage_capacity=1e9))
    profiles = build_profiles(scenario)
    plan = exact_plan(scenario, profiles)

    pts = {0: (0.0, 0.0), 1: (200.0, 100.0), 2: (400.0, 500.0), 3: (100.0, 400.0)}

    def tour_length(order):
        path = [0, *order, 0]
        return sum(
            np.hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1])
            for a, b in zip(path, path[1:])
        )

    best = min(tour_length(order) for order in itertools.permutations([1, 2, 3]))
    assert plan.flight_distance(scenario) == pytest.approx(best)


def test_exact_enforces_storage_segmentation():
    scenario = line_scenario([100.0, 200.0, 300.0, 400.0], storage=4e6)
    profiles = build_profiles(scenario)
    plan = exact_plan(scenario, profiles)
    assert plan.uav_count == 2
    validate_plan(plan, scenario, profiles)


def test_dominance_exact_nn_random():
    for seed in range(200):
        scenario = random_instance(seed, n=6)
        profiles = build_profiles(scenario)
        exact_d = exact_plan(scenario, profiles).flight_distance(scenario)
        nn_d = nearest_neighbor_plan(scenario, profiles).flight_distance(scenario)
        rnd_d = random_plan(scenario, profiles, seed=seed).flight_distance(scenario)
        assert exact_d <= nn_d + 1e-6
        assert exact_d <= rnd_d + 1e-6


def test_exact_energy_monotone_in_battery():
    scenario = random_instance(3, n=6, energy=30_000.0)
    profiles = build_profiles(scenario)
    previous = np.inf
    for energy in (22_000.0, 26_000.0, 30_000.0, 60_000.0):
        tight = Scenario(
            depot=scenario.depot, devices=scenario.devices, physics=scenario.physics,
            uav=UavConfig(energy_capacity=energy, storage_capacity=24e6),
            neighbor_radius=scenario.neighbor_radius, area=scenario.area, seed=scenario.seed,
        )
        plan = exact_plan(tight, profiles)
        validate_plan(plan, tight, profiles)
        assert plan.total_energy <= previous + 1e-9
        previous = plan.total_energy
