"""Minimum-energy multi-UAV data-collection planning for wireless-power-transfer IoT fields."""

__version__ = "0.1.0"

from .energy import EnergyLedger, channel_gain, flight_energy, flight_time, route_energy
from .errors import (
    DomainError,
    InfeasibleClosedFormError,
    InfeasibleInstanceError,
    InvalidArgumentError,
    InvalidRouteError,
    InvalidStateError,
    NumericFailureError,
    PlanViolationError,
    WptplanError,
)
from .policy import (
    GraphState,
    ModelDims,
    PolicyParams,
    decode_step,
    encode,
    feasibility_mask,
    rollout,
)
from .routes import RoutePlan, build_plan, segments_from_tour, validate_plan
from .scenario import (
    IotDevice,
    MB_BITS,
    PhysicsConfig,
    Point3,
    Scenario,
    UavConfig,
    generate_scenario,
    mah_to_joules,
)
from .tensor import Tape, Tensor, constant, load_checkpoint, parameter, save_checkpoint
from .timealloc import (
    ServiceProfile,
    build_profiles,
    closed_form_times,
    hover_objective,
    lambert_w0,
    numeric_times,
)
from .trainer import CriticParams, TrainConfig, TrainReport, critic_value, reward, train, train_epoch
