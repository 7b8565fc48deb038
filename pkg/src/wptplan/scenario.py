"""Instance model: field geometry, device payloads, radio and vehicle constants.

All values are SI: meters, seconds, watts, joules, bits, hertz. Types are
frozen dataclasses, so every instance is immutable and safe to share across
threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError

MB_BITS = 8e6  # 1 MB = 1e6 bytes

#: Joules per (mAh at 1 V): 3600 s/h / 1000 mA/A.
_JOULES_PER_MAH_VOLT = 3.6

DEFAULT_BATTERY_VOLTAGE = 22.2


def mah_to_joules(mah: float, voltage: float = DEFAULT_BATTERY_VOLTAGE) -> float:
    """Convert a battery rating in mAh to joules at the given pack voltage."""
    return float(mah) * float(voltage) * _JOULES_PER_MAH_VOLT


@dataclass(frozen=True)
class Point3:
    """A point in meters; z is height above ground."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise InvalidArgumentError(f"non-finite coordinate in {(self.x, self.y, self.z)}")
        if self.z < 0.0:
            raise InvalidArgumentError(f"negative height z={self.z}")

    def distance_to(self, other: "Point3") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )


@dataclass(frozen=True)
class IotDevice:
    """A ground sensor with a fixed position and a data payload to upload."""

    id: int
    position: Point3
    data_bits: float

    def __post_init__(self):
        if self.data_bits < 0.0:
            raise InvalidArgumentError(f"device {self.id}: negative data size {self.data_bits}")


@dataclass(frozen=True)
class PhysicsConfig:
    """Radio and flight constants (defaults follow the simulated system)."""

    flight_speed: float = 10.0          # m/s
    flight_height: float = 20.0         # m
    flight_power: float = 75.0          # W
    transmit_power: float = 0.5         # W, downlink wireless power transfer
    collect_power: float = 0.5          # W, uplink reception
    hover_power: float = 50.0           # W
    bandwidth: float = 2e6              # Hz
    noise_power: float = 1e-14          # W (-110 dBm)
    eh_efficiency: float = 0.8          # linear harvesting attenuation, in (0, 1]
    channel_ref_gain: float = 1e-3      # power gain at 1 m (-30 dB)

    def __post_init__(self):
        for name in (
            "flight_speed",
            "flight_height",
            "flight_power",
            "transmit_power",
            "collect_power",
            "hover_power",
            "bandwidth",
            "noise_power",
            "eh_efficiency",
            "channel_ref_gain",
        ):
            if getattr(self, name) <= 0.0:
                raise InvalidArgumentError(f"physics.{name} must be strictly positive")
        if self.eh_efficiency > 1.0:
            raise InvalidArgumentError("physics.eh_efficiency must be at most 1")


@dataclass(frozen=True)
class UavConfig:
    """Per-vehicle battery and storage limits.

    Defaults follow the DJI Matrice 100 numbers: a 5700 mAh pack at 22.2 V and
    500 MB of on-board storage.
    """

    energy_capacity: float = 455544.0   # J
    storage_capacity: float = 4e9       # bits

    def __post_init__(self):
        if self.energy_capacity <= 0.0 or self.storage_capacity <= 0.0:
            raise InvalidArgumentError("UAV capacities must be strictly positive")


@dataclass(frozen=True)
class Scenario:
    """One planning instance: a depot, N devices, and the shared constants.

    Device ids are 1..N with no gaps; index 0 always denotes the depot. The
    neighbor graph used by the encoder's pooling layer is derived
    deterministically from neighbor_radius (see edges()).
    """

    depot: Point3
    devices: tuple[IotDevice, ...]
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    uav: UavConfig = field(default_factory=UavConfig)
    neighbor_radius: float = 200.0
    area: float = 1000.0
    seed: int | None = None

    def __post_init__(self):
        for rank, dev in enumerate(self.devices, start=1):
            if dev.id != rank:
                raise InvalidArgumentError(
                    f"device ids must be 1..N with no gaps, found id {dev.id} at rank {rank}"
                )

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    def device(self, device_id: int) -> IotDevice:
        if not 1 <= device_id <= len(self.devices):
            raise InvalidArgumentError(f"device id {device_id} out of range 1..{len(self.devices)}")
        return self.devices[device_id - 1]

    def hover_point(self, index: int) -> Point3:
        """Hover location for a tour index: the depot for 0, else directly above the device."""
        if index == 0:
            return self.depot
        dev = self.device(index)
        return Point3(dev.position.x, dev.position.y, self.physics.flight_height)

    def positions_xy(self) -> np.ndarray:
        """Device ground coordinates as an (N, 2) array, ordered by id."""
        return np.array([[d.position.x, d.position.y] for d in self.devices], dtype=np.float64)

    def data_sizes(self) -> np.ndarray:
        return np.array([d.data_bits for d in self.devices], dtype=np.float64)

    def edges(self, knn_fallback: int = 10) -> list[tuple[int, int]]:
        """Directed neighbor pairs (0-based) for graph pooling.

        Pairs within neighbor_radius are connected both ways. A node with no
        neighbor in radius is linked symmetrically to its knn_fallback nearest
        nodes (ties broken by id). A single-device instance gets a self-loop.
        The derivation is deterministic, so it is memoized per instance.
        """
        memo = self.__dict__.setdefault("_edge_memo", {})
        if knn_fallback in memo:
            return memo[knn_fallback]
        memo[knn_fallback] = self._build_edges(knn_fallback)
        return memo[knn_fallback]

    def _build_edges(self, knn_fallback: int) -> list[tuple[int, int]]:
        n = len(self.devices)
        if n == 0:
            return []
        if n == 1:
            return [(0, 0)]
        pos = self.positions_xy()
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((delta * delta).sum(axis=2))
        pairs: set[tuple[int, int]] = set()
        within = dist <= self.neighbor_radius
        np.fill_diagonal(within, False)
        for i in range(n):
            neighbors = np.nonzero(within[i])[0]
            if neighbors.size == 0:
                order = np.lexsort((np.arange(n), dist[i]))
                neighbors = [j for j in order if j != i][: min(knn_fallback, n - 1)]
            for j in neighbors:
                pairs.add((i, int(j)))
                pairs.add((int(j), i))
        return sorted(pairs)

    def with_uav(self, uav: UavConfig) -> "Scenario":
        return replace(self, uav=uav)


def generate_scenario(
    n: int,
    area: float,
    data_range: tuple[float, float] = (0.2 * MB_BITS, 1.5 * MB_BITS),
    seed: int = 0,
    physics: PhysicsConfig | None = None,
    uav: UavConfig | None = None,
    neighbor_radius: float = 200.0,
) -> Scenario:
    """Draw a random instance: n devices uniform over [0, area]^2.

    Data sizes are uniform over data_range (bits). The depot sits at
    (0, 0, flight_height). The same arguments and seed always produce the
    same Scenario, byte for byte.
    """
    if n < 1:
        raise InvalidArgumentError(f"need at least one device, got n={n}")
    if area <= 0.0:
        raise InvalidArgumentError(f"area must be positive, got {area}")
    lo, hi = float(data_range[0]), float(data_range[1])
    if lo <= 0.0 or hi < lo:
        raise InvalidArgumentError(f"bad data range {data_range}")
    physics = physics or PhysicsConfig()
    uav = uav or UavConfig()

    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, area, size=(n, 2))
    sizes = rng.uniform(lo, hi, size=n)
    devices = tuple(
        IotDevice(id=i + 1, position=Point3(coords[i, 0], coords[i, 1], 0.0), data_bits=sizes[i])
        for i in range(n)
    )
    depot = Point3(0.0, 0.0, physics.flight_height)
    return Scenario(
        depot=depot,
        devices=devices,
        physics=physics,
        uav=uav,
        neighbor_radius=neighbor_radius,
        area=float(area),
        seed=int(seed),
    )
