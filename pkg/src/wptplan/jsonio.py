"""Deterministic JSON and CSV serialization.

Floats are written with 17 significant digits so doubles round-trip losslessly
and identical pipeline runs produce byte-identical files. Infinities and NaN
use the Python-parsable Infinity/NaN tokens.
"""
from __future__ import annotations

import json
import math

from .energy import EnergyLedger
from .errors import InvalidArgumentError
from .routes import RoutePlan
from .scenario import IotDevice, PhysicsConfig, Point3, Scenario, UavConfig
from .timealloc import ServiceProfile


def format_float(value: float) -> str:
    value = float(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return format(value, ".17g")


def _emit(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        parts.append(format_float(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                parts.append(",")
            parts.append(json.dumps(str(key)))
            parts.append(":")
            _emit(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, value in enumerate(obj):
            if i:
                parts.append(",")
            _emit(value, parts)
        parts.append("]")
    else:
        raise InvalidArgumentError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    parts: list[str] = []
    _emit(obj, parts)
    return "".join(parts)


def dump(obj, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def load(path: str):
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh, parse_constant=lambda name: {
            "Infinity": math.inf, "-Infinity": -math.inf, "NaN": math.nan,
        }[name])


# ----------------------------------------------------------------------
# domain converters
# ----------------------------------------------------------------------

def scenario_to_dict(scenario: Scenario, meta: dict | None = None) -> dict:
    doc = {
        "depot": [scenario.depot.x, scenario.depot.y, scenario.depot.z],
        "physics": {
            "flight_speed": scenario.physics.flight_speed,
            "flight_height": scenario.physics.flight_height,
            "flight_power": scenario.physics.flight_power,
            "transmit_power": scenario.physics.transmit_power,
            "collect_power": scenario.physics.collect_power,
            "hover_power": scenario.physics.hover_power,
            "bandwidth": scenario.physics.bandwidth,
            "noise_power": scenario.physics.noise_power,
            "eh_efficiency": scenario.physics.eh_efficiency,
            "channel_ref_gain": scenario.physics.channel_ref_gain,
        },
        "uav": {
            "energy_capacity": scenario.uav.energy_capacity,
            "storage_capacity": scenario.uav.storage_capacity,
        },
        "devices": [
            {"id": d.id, "x": d.position.x, "y": d.position.y, "data_bits": d.data_bits}
            for d in scenario.devices
        ],
        "neighbor_radius": scenario.neighbor_radius,
        "area": scenario.area,
        "seed": scenario.seed,
    }
    if meta is not None:
        doc["meta"] = meta
    return doc


def scenario_from_dict(doc: dict) -> Scenario:
    physics = PhysicsConfig(**{k: float(v) for k, v in doc["physics"].items()})
    uav = UavConfig(**{k: float(v) for k, v in doc["uav"].items()})
    depot = Point3(*(float(v) for v in doc["depot"]))
    devices = tuple(
        IotDevice(
            id=int(d["id"]),
            position=Point3(float(d["x"]), float(d["y"]), 0.0),
            data_bits=float(d["data_bits"]),
        )
        for d in doc["devices"]
    )
    seed = doc.get("seed")
    return Scenario(
        depot=depot,
        devices=devices,
        physics=physics,
        uav=uav,
        neighbor_radius=float(doc["neighbor_radius"]),
        area=float(doc.get("area", 1000.0)),
        seed=None if seed is None else int(seed),
    )


def profiles_to_dict(profiles: list[ServiceProfile], meta: dict | None = None) -> dict:
    doc = {
        "profiles": [
            {
                "id": p.device,
                "t_charge_s": p.t_charge,
                "t_collect_s": p.t_collect,
                "e_transfer_J": p.e_transfer,
                "e_collect_J": p.e_collect,
                "gap_rel": p.gap_rel,
            }
            for p in profiles
        ]
    }
    if meta is not None:
        doc["meta"] = meta
    return doc


def profiles_from_dict(doc: dict, scenario: Scenario | None = None) -> list[ServiceProfile]:
    """Rebuild profiles; demands are not on the wire, so they come from the scenario."""
    profiles = []
    for entry in doc["profiles"]:
        device_id = int(entry["id"])
        demand = scenario.device(device_id).data_bits if scenario is not None else 0.0
        profiles.append(
            ServiceProfile(
                device=device_id,
                t_charge=float(entry["t_charge_s"]),
                t_collect=float(entry["t_collect_s"]),
                e_transfer=float(entry["e_transfer_J"]),
                e_collect=float(entry["e_collect_J"]),
                demand=demand,
                gap_rel=None if entry["gap_rel"] is None else float(entry["gap_rel"]),
            )
        )
    return profiles


def plan_to_dict(plan: RoutePlan, meta: dict | None = None) -> dict:
    doc = {
        "tour": list(plan.tour),
        "segments": [list(seg) for seg in plan.segments],
        "m": plan.uav_count,
        "ledgers": [
            {
                "flight_j": ledger.flight,
                "transfer_j": ledger.transfer,
                "collect_j": ledger.collect,
                "total_j": ledger.total,
            }
            for ledger in plan.ledgers
        ],
        "total_energy_j": plan.total_energy,
    }
    if meta is not None:
        doc["meta"] = meta
    return doc


def plan_from_dict(doc: dict) -> RoutePlan:
    return RoutePlan(
        tour=tuple(int(i) for i in doc["tour"]),
        segments=tuple(tuple(int(i) for i in seg) for seg in doc["segments"]),
        uav_count=int(doc["m"]),
        ledgers=tuple(
            EnergyLedger(
                flight=float(l["flight_j"]),
                transfer=float(l["transfer_j"]),
                collect=float(l["collect_j"]),
            )
            for l in doc["ledgers"]
        ),
    )
