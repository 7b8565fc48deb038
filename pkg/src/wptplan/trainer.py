"""Actor-critic training for the routing policy.

Each epoch samples a fresh batch of instances, runs one sampled rollout per
instance, scores every rollout with the true flight-distance reward, and
applies one policy-gradient step with a learned per-instance baseline:

    actor gradient   (1/K) * sum_k (R_k - Q_k) * grad log P(tour_k)
    critic gradient  (1/K) * sum_k grad (R_k - Q_k)^2

The critic reads only the pooled instance feature (detached from the actor
graph), so no gradient crosses between the two networks. Rewards enter the
updates divided by reward_scale to keep advantage magnitudes near unity;
reported mean rewards stay in meters.
"""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidArgumentError, NumericFailureError
from .policy import ModelDims, PolicyParams, encode, rollout
from .routes import RoutePlan
from .scenario import MB_BITS, Scenario, UavConfig, generate_scenario
from .tensor import (
    Tape,
    Tensor,
    clip_gradients,
    constant,
    global_norm,
    load_checkpoint,
    parameter,
    save_checkpoint,
)
from .timealloc import build_profiles

CHECKPOINT_PATTERN = "atom-{epoch}.ckpt"


def reward(plan: RoutePlan, scenario: Scenario) -> float:
    """Negated total flight distance in meters, summed over all segments."""
    return -plan.flight_distance(scenario)


# ----------------------------------------------------------------------
# critic
# ----------------------------------------------------------------------

@dataclass
class CriticParams:
    """Small MLP from the pooled instance feature to a scalar baseline."""

    w_in: Tensor   # (D, 128)
    w_h1: Tensor   # (128, 128)
    w_h2: Tensor   # (128, 128)
    w_out: Tensor  # (128, 1)

    HIDDEN = 128

    @classmethod
    def init(cls, d_model: int, seed: int | np.random.Generator = 0) -> "CriticParams":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        h = cls.HIDDEN

        def uniform(shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return parameter(rng.uniform(-bound, bound, size=shape))

        return cls(
            w_in=uniform((d_model, h), d_model),
            w_h1=uniform((h, h), h),
            w_h2=uniform((h, h), h),
            w_out=uniform((h, 1), h),
        )

    def named_tensors(self) -> dict[str, Tensor]:
        return {
            "critic.w_in": self.w_in,
            "critic.w_h1": self.w_h1,
            "critic.w_h2": self.w_h2,
            "critic.w_out": self.w_out,
        }

    def tensors(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def zero_grads(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def load_named(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self.named_tensors().items():
            if name not in arrays:
                raise InvalidArgumentError(f"checkpoint is missing tensor {name!r}")
            tensor.data = arrays[name].astype(np.float64)


def critic_value(scenario: Scenario, graph_feat, params: CriticParams, tape: Tape | None = None):
    """Baseline estimate for one instance from its pooled graph feature.

    graph_feat may be a (1, D) array or tensor; it enters as a constant, so
    critic gradients never reach the encoder. Returns a float, or a (1, 1)
    tensor when the caller supplies a tape.
    """
    del scenario  # the instance is summarized entirely by its pooled feature
    own_tape = tape is None
    if own_tape:
        tape = Tape(record=False)
    data = graph_feat.data if isinstance(graph_feat, Tensor) else np.asarray(graph_feat)
    x = constant(data.reshape(1, -1))
    h = tape.relu(tape.matmul(x, params.w_in))
    h = tape.relu(tape.matmul(h, params.w_h1))
    h = tape.relu(tape.matmul(h, params.w_h2))
    q = tape.matmul(h, params.w_out)
    return q.item() if own_tape else q


# ----------------------------------------------------------------------
# configuration and report
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters plus the instance distribution to train on."""

    n_devices: int = 20
    batch_size: int = 100
    epochs: int = 500
    lr_actor: float = 1e-5
    lr_critic: float = 1e-3
    lr_decay: float = 0.98
    seed: int = 0
    area: float = 1000.0
    data_min: float = 0.2 * MB_BITS
    data_max: float = 1.5 * MB_BITS
    storage_bits: float = 48e6
    energy_j: float = 455544.0
    neighbor_radius: float = 200.0
    d_model: int = 128
    n_layers: int = 3
    n_heads: int = 8
    d_ff: int = 512
    optimizer: str = "sgd"
    grad_clip: float | None = 1.0
    reward_scale: float = 1000.0
    profile_mode: str = "numeric"
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be at least 1")
        if self.lr_actor <= 0.0 or self.lr_critic <= 0.0:
            raise InvalidArgumentError("learning rates must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidArgumentError(f"unknown optimizer {self.optimizer!r}")

    @property
    def dims(self) -> ModelDims:
        return ModelDims(self.d_model, self.n_layers, self.n_heads, self.d_ff)

    def instance_uav(self) -> UavConfig:
        return UavConfig(energy_capacity=self.energy_j, storage_capacity=self.storage_bits)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidArgumentError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_reward: float       # meters, sign-flipped distance
    actor_loss: float
    critic_loss: float
    actor_grad_norm: float
    critic_grad_norm: float
    wall_time: float

    COLUMNS = (
        "epoch",
        "mean_reward",
        "actor_loss",
        "critic_loss",
        "actor_grad_norm",
        "critic_grad_norm",
        "wall_time",
    )


@dataclass
class TrainReport:
    rows: list[EpochStats] = field(default_factory=list)

    def write_csv(self, path: str, header_lines: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(EpochStats.COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [row.epoch]
                    + [format(getattr(row, col), ".17g") for col in EpochStats.COLUMNS[1:]]
                )


# ----------------------------------------------------------------------
# optimization
# ----------------------------------------------------------------------

class _Optimizer:
    """Plain SGD by default; optional Adam kept behind the config switch."""

    def __init__(self, kind: str):
        self.kind = kind
        self.step_count = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def step(self, tensors: list[Tensor], lr: float) -> None:
        self.step_count += 1
        if self.kind == "sgd":
            for t in tensors:
                if t.grad is not None:
                    t.data = t.data - lr * t.grad
            return
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        for t in tensors:
            if t.grad is None:
                continue
            key = id(t)
            m = self._m.get(key)
            v = self._v.get(key)
            if m is None:
                m = np.zeros_like(t.data)
                v = np.zeros_like(t.data)
            m = beta1 * m + (1.0 - beta1) * t.grad
            v = beta2 * v + (1.0 - beta2) * (t.grad * t.grad)
            self._m[key], self._v[key] = m, v
            m_hat = m / (1.0 - beta1 ** self.step_count)
            v_hat = v / (1.0 - beta2 ** self.step_count)
            t.data = t.data - lr * m_hat / (np.sqrt(v_hat) + eps)

    def state_tensors(self, named: dict[str, Tensor]) -> dict[str, Tensor]:
        out = {}
        if self.kind != "adam":
            return out
        for name, t in named.items():
            key = id(t)
            if key in self._m:
                out[f"adam_m.{name}"] = Tensor(self._m[key])
                out[f"adam_v.{name}"] = Tensor(self._v[key])
        return out

    def load_state(self, named: dict[str, Tensor], arrays: dict[str, np.ndarray],
                   step_count: int) -> None:
        self.step_count = step_count
        for name, t in named.items():
            m_key, v_key = f"adam_m.{name}", f"adam_v.{name}"
            if m_key in arrays:
                self._m[id(t)] = arrays[m_key].copy()
                self._v[id(t)] = arrays[v_key].copy()


def _instance_from(config: TrainConfig, scenario_seed: int) -> Scenario:
    return generate_scenario(
        n=config.n_devices,
        area=config.area,
        data_range=(config.data_min, config.data_max),
        seed=scenario_seed,
        uav=config.instance_uav(),
        neighbor_radius=config.neighbor_radius,
    )


def _check_finite(tensors: list[Tensor], what: str, diagnostics: str) -> None:
    for t in tensors:
        if t.grad is not None and not np.isfinite(t.grad).all():
            raise NumericFailureError(f"non-finite {what} gradient; {diagnostics}")


def train_epoch(
    config: TrainConfig,
    actor: PolicyParams,
    critic: CriticParams,
    rng: np.random.Generator,
    epoch: int = 0,
    actor_opt: _Optimizer | None = None,
    critic_opt: _Optimizer | None = None,
) -> EpochStats:
    """One update: sample batch_size instances, rollout, and step both networks."""
    started = time.perf_counter()
    actor_opt = actor_opt or _Optimizer(config.optimizer)
    critic_opt = critic_opt or _Optimizer(config.optimizer)
    decay = config.lr_decay ** epoch
    lr_actor = config.lr_actor * decay
    lr_critic = config.lr_critic * decay

    actor.zero_grads()
    critic.zero_grads()
    critic_tape = Tape()
    critic_terms = []
    rewards = []
    actor_loss_terms = []

    for k in range(config.batch_size):
        scenario_seed = int(rng.integers(2**63))
        sample_seed = int(rng.integers(2**63))
        scenario = _instance_from(config, scenario_seed)
        profiles = build_profiles(scenario, config.profile_mode)

        tape = Tape()
        encoded = encode(scenario, actor, tape)
        plan, log_prob = rollout(
            scenario, profiles, actor, mode="sample", seed=sample_seed,
            tape=tape, encoded=encoded,
        )
        reward_m = reward(plan, scenario)
        rewards.append(reward_m)
        scaled = reward_m / config.reward_scale

        q = critic_value(scenario, encoded[1], critic, tape=critic_tape)
        advantage = scaled - q.item()

        # actor: accumulate grad of -(advantage / K) * log_prob
        tape.backward(tape.scale(log_prob, -advantage / config.batch_size))
        actor_loss_terms.append(-scaled * log_prob.item())

        diff = critic_tape.sub(constant([[scaled]]), q)
        critic_terms.append(critic_tape.mul(diff, diff))

    diagnostics = f"epoch={epoch} seed={config.seed}"
    _check_finite(actor.tensors(), "actor", diagnostics)
    actor_norm = (
        clip_gradients(actor.tensors(), config.grad_clip)
        if config.grad_clip
        else global_norm(actor.tensors())
    )
    actor_opt.step(actor.tensors(), lr_actor)

    critic_loss = critic_tape.scale(
        critic_tape.sum_all(critic_tape.concat(critic_terms, axis=1)),
        1.0 / config.batch_size,
    )
    critic_loss_value = critic_loss.item()
    critic_tape.backward(critic_loss)
    _check_finite(critic.tensors(), "critic", diagnostics)
    critic_norm = (
        clip_gradients(critic.tensors(), config.grad_clip)
        if config.grad_clip
        else global_norm(critic.tensors())
    )
    critic_opt.step(critic.tensors(), lr_critic)

    return EpochStats(
        epoch=epoch,
        mean_reward=float(np.mean(rewards)),
        actor_loss=float(np.mean(actor_loss_terms)),
        critic_loss=critic_loss_value,
        actor_grad_norm=actor_norm,
        critic_grad_norm=critic_norm,
        wall_time=time.perf_counter() - started,
    )


def _checkpoint_tensors(actor: PolicyParams, critic: CriticParams,
                        actor_opt: _Optimizer, critic_opt: _Optimizer) -> dict[str, Tensor]:
    tensors = {}
    tensors.update(actor.named_tensors())
    tensors.update(critic.named_tensors())
    tensors.update(actor_opt.state_tensors(actor.named_tensors()))
    tensors.update(critic_opt.state_tensors(critic.named_tensors()))
    return tensors


def save_training_checkpoint(path: str, actor: PolicyParams, critic: CriticParams,
                             config: TrainConfig, next_epoch: int,
                             actor_opt: _Optimizer | None = None,
                             critic_opt: _Optimizer | None = None) -> None:
    from . import __version__

    actor_opt = actor_opt or _Optimizer(config.optimizer)
    critic_opt = critic_opt or _Optimizer(config.optimizer)
    meta = {
        "version": f"wptplan-{__version__}",
        "next_epoch": next_epoch,
        "config": config.to_dict(),
        "opt_steps": actor_opt.step_count,
    }
    save_checkpoint(path, _checkpoint_tensors(actor, critic, actor_opt, critic_opt), meta)


def load_policy(path: str) -> tuple[PolicyParams, CriticParams, dict]:
    """Rebuild actor and critic from a checkpoint; dims come from its config."""
    arrays, meta = load_checkpoint(path)
    config = TrainConfig.from_dict(meta["config"])
    actor = PolicyParams.init(config.dims, seed=0)
    actor.load_named(arrays)
    critic = CriticParams.init(config.d_model, seed=0)
    critic.load_named(arrays)
    return actor, critic, meta


def train(
    config: TrainConfig,
    resume_from: str | None = None,
    progress=None,
) -> tuple[PolicyParams, CriticParams, TrainReport]:
    """Run the full training loop; reproducible for a fixed seed.

    Epoch randomness comes from per-epoch children of one seed sequence, so
    resuming from a checkpoint continues exactly where an uninterrupted run
    would be. Checkpoints are written every checkpoint_every epochs (plus a
    final one) when checkpoint_dir is set.
    """
    actor_opt = _Optimizer(config.optimizer)
    critic_opt = _Optimizer(config.optimizer)
    start_epoch = 0
    if resume_from is not None:
        arrays, meta = load_checkpoint(resume_from)
        saved = TrainConfig.from_dict(meta["config"])
        if saved.dims != config.dims:
            raise InvalidArgumentError("checkpoint dims disagree with the requested config")
        actor = PolicyParams.init(config.dims, seed=0)
        actor.load_named(arrays)
        critic = CriticParams.init(config.d_model, seed=0)
        critic.load_named(arrays)
        actor_opt.load_state(actor.named_tensors(), arrays, meta.get("opt_steps", 0))
        critic_opt.load_state(critic.named_tensors(), arrays, meta.get("opt_steps", 0))
        start_epoch = int(meta["next_epoch"])
    else:
        actor = PolicyParams.init(config.dims, seed=np.random.default_rng([config.seed, 0xAC70]))
        critic = CriticParams.init(
            config.d_model, seed=np.random.default_rng([config.seed, 0xC217])
        )

    children = np.random.SeedSequence(config.seed).spawn(config.epochs)
    report = TrainReport()
    for epoch in range(start_epoch, config.epochs):
        rng = np.random.default_rng(children[epoch])
        row = train_epoch(config, actor, critic, rng, epoch=epoch,
                          actor_opt=actor_opt, critic_opt=critic_opt)
        report.rows.append(row)
        if progress is not None:
            progress(row)
        cadence_hit = config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0
        if config.checkpoint_dir and (cadence_hit or epoch + 1 == config.epochs):
            os.makedirs(config.checkpoint_dir, exist_ok=True)
            path = os.path.join(config.checkpoint_dir, CHECKPOINT_PATTERN.format(epoch=epoch + 1))
            save_training_checkpoint(path, actor, critic, config, epoch + 1,
                                     actor_opt, critic_opt)
    return actor, critic, report
