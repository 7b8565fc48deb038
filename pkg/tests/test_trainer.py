import math

import numpy as np
import pytest

from wptplan.policy import GraphState, ModelDims, PolicyParams, decode_step, encode, feasibility_mask, fresh_state, rollout
from wptplan.routes import build_plan
from wptplan.scenario import IotDevice, Point3, Scenario, UavConfig, generate_scenario
from wptplan.tensor import Tape, constant
from wptplan.timealloc import build_profiles
from wptplan.trainer import (
    CriticParams,
    TrainConfig,
    _Optimizer,
    critic_value,
    reward,
    train,
    train_epoch,
)
from wptplan.errors import InvalidArgumentError

DIMS = ModelDims(d_model=32, n_layers=2, n_heads=4, d_ff=32)

SMALL = TrainConfig(
    n_devices=6, batch_size=4, epochs=3, d_model=32, n_layers=2, n_heads=4, d_ff=32,
    lr_actor=0.01, lr_critic=0.01, storage_bits=24e6, energy_j=60_000.0, seed=11,
)


def tiny_scenario(n=3, seed=2):
    return generate_scenario(
        n=n, area=1000.0, seed=seed,
        uav=UavConfig(energy_capacity=60_000.0, storage_capacity=24e6),
    )


# ----------------------------------------------------------------------
# reward
# ----------------------------------------------------------------------

def test_reward_empty_plan_is_zero():
    scenario = tiny_scenario(n=1)
    profiles = build_profiles(scenario)
    plan = build_plan([0, 1, 0], scenario, profiles)
    empty = plan.__class__(tour=(0, 0), segments=(), uav_count=0, ledgers=())
    assert reward(empty, scenario) == 0.0


def test_reward_single_segment_hand_value():
    devices = (
        IotDevice(id=1, position=Point3(100.0, 0.0, 0.0), data_bits=2e6),
        IotDevice(id=2, position=Point3(200.0, 0.0, 0.0), data_bits=2e6),
    )
    scenario = Scenario(depot=Point3(0, 0, 20), devices=devices)
    profiles = build_profiles(scenario)
    plan = build_plan([0, 1, 2, 0], scenario, profiles)
    assert reward(plan, scenario) == pytest.approx(-400.0)


def test_reward_ranking_matches_flight_energy():
    scenario = tiny_scenario(n=5, seed=8)
    profiles = build_profiles(scenario)
    candidates = [
        build_plan([0, 1, 2, 3, 4, 5, 0], scenario, profiles),
        build_plan([0, 5, 4, 3, 2, 1, 0], scenario, profiles),
        build_plan([0, 2, 4, 1, 3, 5, 0], scenario, profiles),
        build_plan([0, 3, 1, 4, 0, 2, 5, 0], scenario, profiles),
    ]
    by_reward = max(range(4), key=lambda i: reward(candidates[i], scenario))
    by_flight = min(range(4), key=lambda i: candidates[i].flight_energy)
    assert by_reward == by_flight


# ----------------------------------------------------------------------
# critic
# ----------------------------------------------------------------------

def test_critic_value_deterministic_scalar():
    params = CriticParams.init(32, seed=4)
    feat = np.random.default_rng(0).normal(size=(1, 32))
    a = critic_value(None, feat, params)
    b = critic_value(None, feat, params)
    assert a == b
    assert isinstance(a, float)


def test_critic_learns_one_device_distances():
    # reward of a 1-device instance is -2 * dist(depot, device); the critic
    # should regress it from the pooled feature far below the reward variance
    actor = PolicyParams.init(DIMS, seed=1)
    critic = CriticParams.init(DIMS.d_model, seed=2)
    scale = 1000.0

    def batch(seed_base, count):
        feats, targets = [], []
        for i in range(count):
            scenario = tiny_scenario(n=1, seed=seed_base + i)
            profiles = build_profiles(scenario)
            _, pooled = encode(scenario, actor, Tape(record=False))
            plan = build_plan([0, 1, 0], scenario, profiles)
            feats.append(pooled.data.copy())
            targets.append(reward(plan, scenario) / scale)
        return feats, targets

    train_feats, train_targets = batch(0, 200)
    opt = _Optimizer("sgd")
    for step in range(600):
        tape = Tape()
        critic.zero_grads()
        terms = []
        for feat, target in zip(train_feats, train_targets):
            q = critic_value(None, feat, critic, tape=tape)
            diff = tape.sub(constant([[target]]), q)
            terms.append(tape.mul(diff, diff))
        loss = tape.scale(tape.sum_all(tape.concat(terms, axis=1)), 1.0 / len(terms))
        tape.backward(loss)
        opt.step(critic.tensors(), 0.05)

    held_feats, held_targets = batch(10_000, 80)
    errors = [
        (critic_value(None, f, critic) - t) ** 2 for f, t in zip(held_feats, held_targets)
    ]
    variance = np.var(held_targets)
    assert np.mean(errors) < 0.1 * variance


# ----------------------------------------------------------------------
# gradients
# ----------------------------------------------------------------------

def _frozen_rollout(scenario, profiles, params, seed):
    tape = Tape()
    plan, logp = rollout(scenario, profiles, params, mode="sample", seed=seed, tape=tape)
    return plan, logp, tape


def test_zero_advantage_gives_zero_actor_gradient():
    scenario = tiny_scenario()
    profiles = build_profiles(scenario)
    params = PolicyParams.init(DIMS, seed=3)
    params.zero_grads()
    _, logp, tape = _frozen_rollout(scenario, profiles, params, seed=1)
    tape.backward(tape.scale(logp, 0.0))  # advantage R - Q = 0
    for t in params.tensors():
        assert t.grad is None or not t.grad.any()


def test_critic_loss_arithmetic():
    tape = Tape()
    r = constant([[-100.0]])
    q = constant([[-90.0]])
    diff = tape.sub(r, q)
    assert tape.mul(diff, diff).item() == pytest.approx(100.0)


def test_actor_gradient_matches_finite_differences():
    scenario = tiny_scenario(n=3, seed=6)
    profiles = build_profiles(scenario)
    params = PolicyParams.init(DIMS, seed=5)
    plan, _, _ = _frozen_rollout(scenario, profiles, params, seed=9)
    actions = list(plan.tour[1:])
    advantage = -2.5
    price = scenario.physics.flight_power / scenario.physics.flight_speed
    pos = scenario.positions_xy()

    def surrogate():
        tape = Tape()
        feats, pooled = encode(scenario, params, tape)
        state = fresh_state(pooled, params)
        visited = set()
        terms = []
        for choice in actions:
            mask = feasibility_mask(state, scenario, profiles, visited)
            probs = decode_step(state, feats, mask, params, tape)
            terms.append(tape.log(tape.gather(probs, (0, choice))))
            if choice == 0:
                state = fresh_state(pooled, params)
            else:
                prof = profiles[choice - 1]
                last = scenario.hover_point(state.last_index)
                leg = math.hypot(pos[choice - 1, 0] - last.x, pos[choice - 1, 1] - last.y)
                spent = leg * price + prof.e_transfer + prof.e_collect
                state = GraphState(
                    pooled, tape.gather_row(feats, choice - 1),
                    (state.storage_frac * scenario.uav.storage_capacity - prof.demand)
                    / scenario.uav.storage_capacity,
                    (state.energy_frac * scenario.uav.energy_capacity - spent)
                    / scenario.uav.energy_capacity,
                    choice, True,
                )
                visited.add(choice)
        logp = tape.sum_all(tape.concat(terms, axis=1))
        return tape, tape.scale(logp, -advantage)

    tape, loss = surrogate()
    params.zero_grads()
    tape.backward(loss)

    rng = np.random.default_rng(0)
    h = 1e-5
    checked = 0
    for name, tensor in params.named_tensors().items():
        flat = tensor.data.reshape(-1)
        for i in rng.choice(flat.size, size=min(4, flat.size), replace=False):
            orig = flat[i]
            flat[i] = orig + h
            up = surrogate()[1].item()
            flat[i] = orig - h
            down = surrogate()[1].item()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            analytic = tensor.grad.reshape(-1)[i]
            assert abs(analytic - fd) <= max(1e-6, 1e-4 * max(abs(analytic), abs(fd))), (
                f"{name}[{i}]: analytic {analytic} vs fd {fd}"
            )
            checked += 1
    assert checked > 50


def _batch_actor_grads(scenario, profiles, advantage_fn, k=4):
    """Fresh forward passes with fixed seeds, then one accumulated backward."""
    params = PolicyParams.init(DIMS, seed=33)
    rewards, tapes, logps = [], [], []
    for i in range(k):
        tape = Tape()
        plan, logp = rollout(scenario, profiles, params, mode="sample", seed=50 + i, tape=tape)
        rewards.append(reward(plan, scenario) / 1000.0)
        tapes.append(tape)
        logps.append(logp)
    params.zero_grads()
    for tape, logp, adv in zip(tapes, logps, advantage_fn(np.array(rewards))):
        tape.backward(tape.scale(logp, -adv / k))
    return {n: t.grad.copy() for n, t in params.named_tensors().items() if t.grad is not None}


def test_baseline_shift_leaves_actor_gradient_unchanged():
    scenario = tiny_scenario(n=4, seed=13)
    profiles = build_profiles(scenario)
    baselines = np.array([-3.0, -4.0, -5.0, -6.0])
    shift = 7.5

    plain = _batch_actor_grads(scenario, profiles, lambda r: r - baselines)
    shifted = _batch_actor_grads(scenario, profiles, lambda r: (r + shift) - (baselines + shift))
    for name in plain:
        np.testing.assert_allclose(shifted[name], plain[name], rtol=1e-9, atol=1e-12)


def test_mean_baseline_equals_classic_reinforce_update():
    scenario = tiny_scenario(n=4, seed=17)
    profiles = build_profiles(scenario)

    # critic pinned at the batch-mean reward versus direct mean centering
    critic_style = _batch_actor_grads(
        scenario, profiles, lambda r: r - np.full_like(r, r.mean())
    )
    classic = _batch_actor_grads(scenario, profiles, lambda r: r - r.mean())
    for name in critic_style:
        np.testing.assert_allclose(critic_style[name], classic[name], rtol=1e-12, atol=0)


def test_critic_step_decreases_frozen_batch_loss():
    actor = PolicyParams.init(DIMS, seed=2)
    critic = CriticParams.init(DIMS.d_model, seed=3)
    feats = []
    targets = []
    for i in range(6):
        scenario = tiny_scenario(n=3, seed=40 + i)
        _, pooled = encode(scenario, actor, Tape(record=False))
        feats.append(pooled.data.copy())
        targets.append(-5.0 - 0.3 * i)

    def batch_loss():
        total = 0.0
        for f, t in zip(feats, targets):
            total += (critic_value(None, f, critic) - t) ** 2
        return total / len(feats)

    before = batch_loss()
    tape = Tape()
    critic.zero_grads()
    terms = []
    for f, t in zip(feats, targets):
        q = critic_value(None, f, critic, tape=tape)
        diff = tape.sub(constant([[t]]), q)
        terms.append(tape.mul(diff, diff))
    tape.backward(tape.scale(tape.sum_all(tape.concat(terms, axis=1)), 1.0 / len(terms)))
    _Optimizer("sgd").step(critic.tensors(), 1e-5)
    assert batch_loss() < before


def test_no_gradient_crosses_networks():
    scenario = tiny_scenario(n=3, seed=1)
    profiles = build_profiles(scenario)
    actor = PolicyParams.init(DIMS, seed=1)
    critic = CriticParams.init(DIMS.d_model, seed=2)
    actor.zero_grads()
    critic.zero_grads()

    # actor-side backward touches no critic tensor
    tape = Tape()
    encoded = encode(scenario, actor, tape)
    _, logp = rollout(scenario, profiles, actor, mode="sample", seed=3, tape=tape,
                      encoded=encoded)
    tape.backward(tape.scale(logp, -1.0))
    assert all(t.grad is None for t in critic.tensors())
    assert any(t.grad is not None for t in actor.tensors())

    # critic-side backward consumes detached features: no actor tensor involved
    actor.zero_grads()
    critic_tape = Tape()
    q = critic_value(scenario, encoded[1], critic, tape=critic_tape)
    diff = critic_tape.sub(constant([[-4.0]]), q)
    critic_tape.backward(critic_tape.mul(diff, diff))
    assert all(t.grad is None for t in actor.tensors())
    assert all(t.grad is not None for t in critic.tensors())


# ----------------------------------------------------------------------
# training loop
# ----------------------------------------------------------------------

def test_train_epoch_row_shape():
    config = SMALL
    actor = PolicyParams.init(config.dims, seed=1)
    critic = CriticParams.init(config.d_model, seed=2)
    row = train_epoch(config, actor, critic, np.random.default_rng(5), epoch=2)
    assert row.epoch == 2
    assert row.mean_reward < 0.0
    assert row.critic_loss >= 0.0
    assert math.isfinite(row.actor_grad_norm)


def test_train_reproducible_for_fixed_seed():
    _, _, report_a = train(SMALL)
    _, _, report_b = train(SMALL)
    for ra, rb in zip(report_a.rows, report_b.rows):
        assert ra.mean_reward == rb.mean_reward
        assert ra.actor_loss == rb.actor_loss
        assert ra.critic_loss == rb.critic_loss


def test_resume_matches_uninterrupted_run(tmp_path):
    full_cfg = TrainConfig(**{**SMALL.to_dict(), "epochs": 4})
    _, _, full_report = train(full_cfg)

    half_cfg = TrainConfig(**{**SMALL.to_dict(), "epochs": 2,
                              "checkpoint_dir": str(tmp_path), "checkpoint_every": 2})
    train(half_cfg)
    resumed_cfg = TrainConfig(**{**SMALL.to_dict(), "epochs": 4})
    _, _, tail_report = train(resumed_cfg, resume_from=str(tmp_path / "atom-2.ckpt"))

    assert [r.epoch for r in tail_report.rows] == [2, 3]
    for row, full_row in zip(tail_report.rows, full_report.rows[2:]):
        assert row.mean_reward == full_row.mean_reward
        assert row.actor_loss == full_row.actor_loss
        assert row.critic_loss == full_row.critic_loss


def test_train_config_rejects_unknown_keys():
    with pytest.raises(InvalidArgumentError):
        TrainConfig.from_dict({"epochs": 3, "bogus": 1})


def test_checkpoint_cadence_names(tmp_path):
    cfg = TrainConfig(**{**SMALL.to_dict(), "epochs": 2,
                         "checkpoint_dir": str(tmp_path), "checkpoint_every": 1})
    train(cfg)
    assert (tmp_path / "atom-1.ckpt").exists()
    assert (tmp_path / "atom-2.ckpt").exists()
