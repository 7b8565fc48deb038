"""Graph-transformer routing policy.

The encoder embeds each device's (x, y, payload) triple, runs a pre-norm
multi-head self-attention stack over the device graph, and pools attention
features over neighbor edges into one instance-level feature. The decoder
autoregressively picks the next stop from {depot, devices} using an alignment
distribution over device features, a context vector, and a masked softmax over
the feasible choice set. All weights are shared across nodes, so one set of
parameters serves any instance size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleInstanceError, InvalidArgumentError
from .routes import build_plan
from .scenario import Scenario
from .tensor import Tape, Tensor, constant, parameter
from .timealloc import ServiceProfile


@dataclass(frozen=True)
class ModelDims:
    """Architecture hyperparameters; d_model must be divisible by n_heads."""

    d_model: int = 128
    n_layers: int = 3
    n_heads: int = 8
    d_ff: int = 512

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise InvalidArgumentError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def state_dim(self) -> int:
        # pooled graph feature + last-node feature + storage and energy fractions
        return 2 * self.d_model + 2


@dataclass
class LayerParams:
    wq: Tensor  # (H, D, D/H)
    wk: Tensor
    wv: Tensor
    wo: Tensor  # (D, D)
    fc1: Tensor  # (D, D_ff)
    fc2: Tensor  # (D_ff, D)
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor


@dataclass
class EncoderParams:
    embed: Tensor  # (3, D)
    layers: list[LayerParams]
    w_pool: Tensor  # (2D, D)


@dataclass
class DecoderParams:
    w_align: Tensor  # (state_dim, D)
    w_ctx: Tensor    # (D + state_dim, D)
    w_prob: Tensor   # (D, D)
    depot: Tensor    # (1, D), learnable depot embedding


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape))


@dataclass
class PolicyParams:
    """Every learnable tensor of the encoder and decoder."""

    dims: ModelDims
    encoder: EncoderParams
    decoder: DecoderParams

    @classmethod
    def init(cls, dims: ModelDims = ModelDims(), seed: int | np.random.Generator = 0) -> "PolicyParams":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        d, dh, dff = dims.d_model, dims.d_head, dims.d_ff
        layers = []
        for _ in range(dims.n_layers):
            layers.append(
                LayerParams(
                    wq=_uniform(rng, (dims.n_heads, d, dh), d),
                    wk=_uniform(rng, (dims.n_heads, d, dh), d),
                    wv=_uniform(rng, (dims.n_heads, d, dh), d),
                    wo=_uniform(rng, (d, d), d),
                    fc1=_uniform(rng, (d, dff), d),
                    fc2=_uniform(rng, (dff, d), dff),
                    ln1_gain=parameter(np.ones((1, d))),
                    ln1_bias=parameter(np.zeros((1, d))),
                    ln2_gain=parameter(np.ones((1, d))),
                    ln2_bias=parameter(np.zeros((1, d))),
                )
            )
        encoder = EncoderParams(
            embed=_uniform(rng, (3, d), 3),
            layers=layers,
            w_pool=_uniform(rng, (2 * d, d), 2 * d),
        )
        decoder = DecoderParams(
            w_align=_uniform(rng, (dims.state_dim, d), dims.state_dim),
            w_ctx=_uniform(rng, (d + dims.state_dim, d), d + dims.state_dim),
            w_prob=_uniform(rng, (d, d), d),
            depot=_uniform(rng, (1, d), d),
        )
        return cls(dims=dims, encoder=encoder, decoder=decoder)

    def named_tensors(self) -> dict[str, Tensor]:
        named = {"encoder.embed": self.encoder.embed, "encoder.pool": self.encoder.w_pool}
        for i, layer in enumerate(self.encoder.layers):
            prefix = f"encoder.layer{i}."
            named[prefix + "wq"] = layer.wq
            named[prefix + "wk"] = layer.wk
            named[prefix + "wv"] = layer.wv
            named[prefix + "wo"] = layer.wo
            named[prefix + "fc1"] = layer.fc1
            named[prefix + "fc2"] = layer.fc2
            named[prefix + "ln1_gain"] = layer.ln1_gain
            named[prefix + "ln1_bias"] = layer.ln1_bias
            named[prefix + "ln2_gain"] = layer.ln2_gain
            named[prefix + "ln2_bias"] = layer.ln2_bias
        named["decoder.align"] = self.decoder.w_align
        named["decoder.context"] = self.decoder.w_ctx
        named["decoder.prob"] = self.decoder.w_prob
        named["decoder.depot"] = self.decoder.depot
        return named

    def tensors(self) -> list[Tensor]:
        return list(self.named_tensors().values())

    def zero_grads(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def load_named(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self.named_tensors().items():
            if name not in arrays:
                raise InvalidArgumentError(f"checkpoint is missing tensor {name!r}")
            if tuple(arrays[name].shape) != tensor.shape:
                raise InvalidArgumentError(
                    f"checkpoint tensor {name!r} has shape {arrays[name].shape}, "
                    f"expected {tensor.shape}"
                )
            tensor.data = arrays[name].astype(np.float64)


# ----------------------------------------------------------------------
# encoder
# ----------------------------------------------------------------------

def _self_attention(tape: Tape, x: Tensor, layer: LayerParams, dims: ModelDims) -> Tensor:
    n = x.shape[0]
    q = tape.matmul(x, layer.wq)  # (H, N, D/H)
    k = tape.matmul(x, layer.wk)
    v = tape.matmul(x, layer.wv)
    scores = tape.scale(
        tape.matmul(q, tape.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(dims.d_head)
    )
    weights = tape.softmax_with_mask(scores)
    merged = tape.reshape(
        tape.transpose(tape.matmul(weights, v), (1, 0, 2)), (n, dims.d_model)
    )
    return tape.matmul(merged, layer.wo)


def encode(scenario: Scenario, params: PolicyParams, tape: Tape) -> tuple[Tensor, Tensor]:
    """Run the encoder; returns (node_features (N, D), graph_feature (1, D)).

    Inputs are scale-free: coordinates divided by the instance area, payloads
    by the largest payload. The graph feature is the mean over directed
    neighbor edges (i, j) of w_pool applied to concat(h_i, h_j).
    """
    n = scenario.n_devices
    if n < 1:
        raise InvalidArgumentError("encode needs at least one device")
    coords = scenario.positions_xy() / scenario.area
    data = scenario.data_sizes()
    peak = data.max()
    if peak <= 0.0:
        peak = 1.0
    inputs = constant(np.column_stack([coords, data / peak]))

    h = tape.matmul(inputs, params.encoder.embed)
    for layer in params.encoder.layers:
        normed = tape.layer_norm(h, layer.ln1_gain, layer.ln1_bias)
        h = tape.add(h, _self_attention(tape, normed, layer, params.dims))
        normed = tape.layer_norm(h, layer.ln2_gain, layer.ln2_bias)
        ff = tape.matmul(tape.relu(tape.matmul(normed, layer.fc1)), layer.fc2)
        h = tape.add(h, ff)

    edges = scenario.edges()
    heads = np.array([i for i, _ in edges], dtype=np.intp)
    tails = np.array([j for _, j in edges], dtype=np.intp)
    paired = tape.concat([tape.gather_rows(h, heads), tape.gather_rows(h, tails)], axis=1)
    graph_feat = tape.mean_rows(tape.matmul(paired, params.encoder.w_pool))
    return h, graph_feat


# ----------------------------------------------------------------------
# decoder state and step
# ----------------------------------------------------------------------

@dataclass
class GraphState:
    """Decoder input for one step of one vehicle.

    graph_feat and last_feat live on the rollout's tape; the capacity
    fractions are plain numbers in [0, 1]. last_index is the tour index the
    vehicle currently occupies (0 for the depot).
    """

    graph_feat: Tensor
    last_feat: Tensor
    storage_frac: float
    energy_frac: float
    last_index: int = 0
    segment_nonempty: bool = False


def fresh_state(graph_feat: Tensor, params: PolicyParams) -> GraphState:
    return GraphState(
        graph_feat=graph_feat,
        last_feat=params.decoder.depot,
        storage_frac=1.0,
        energy_frac=1.0,
        last_index=0,
        segment_nonempty=False,
    )


def feasibility_mask(
    state: GraphState,
    scenario: Scenario,
    profiles: list[ServiceProfile],
    visited: set[int],
) -> np.ndarray:
    """Boolean mask over {0..N}: True where the next choice is allowed.

    A device stays available while unvisited, its payload fits the remaining
    storage, and the remaining energy covers the leg to it, both hover
    phases, and the return leg to the depot. The depot is available whenever
    the current segment is non-empty, or when every device has been served.
    From a fresh full vehicle at the depot, any unvisited device that fails
    the rule can never be served, so the instance is rejected.
    """
    n = scenario.n_devices
    mask = np.zeros(n + 1, dtype=bool)
    if len(visited) >= n:
        mask[0] = True
        return mask

    phys = scenario.physics
    price_per_meter = phys.flight_power / phys.flight_speed
    remaining_storage = state.storage_frac * scenario.uav.storage_capacity
    remaining_energy = state.energy_frac * scenario.uav.energy_capacity

    pos = scenario.positions_xy()
    last = scenario.hover_point(state.last_index)
    legs = np.hypot(pos[:, 0] - last.x, pos[:, 1] - last.y)
    returns = np.hypot(pos[:, 0] - scenario.depot.x, pos[:, 1] - scenario.depot.y)
    demands = np.array([p.demand for p in profiles])
    hover = np.array([p.e_transfer + p.e_collect for p in profiles])
    energy_needed = (legs + returns) * price_per_meter + hover

    unvisited = np.ones(n, dtype=bool)
    if visited:
        unvisited[np.array(sorted(visited), dtype=np.intp) - 1] = False
    mask[1:] = unvisited & (demands <= remaining_storage) & (energy_needed <= remaining_energy)

    at_fresh_depot = state.last_index == 0 and not state.segment_nonempty
    if at_fresh_depot:
        stuck = unvisited & ~mask[1:]
        if stuck.any():
            device_id = int(np.nonzero(stuck)[0][0]) + 1
            raise InfeasibleInstanceError(
                f"device {device_id} cannot be served even by a fresh vehicle",
                device_id=device_id,
            )
    else:
        mask[0] = True
    return mask


def decode_step(
    state: GraphState,
    node_features: Tensor,
    mask: np.ndarray,
    params: PolicyParams,
    tape: Tape,
) -> Tensor:
    """One decoder step: a (1, N+1) probability row over {depot, devices}.

    Alignment scores are taken per node through the alignment matrix (an
    N * D^2 projection, matching the decoder's step cost), softmaxed into a
    context vector, combined with the state through tanh, and scored against
    the depot embedding plus node features under the masked softmax. Masked
    entries get probability exactly zero.
    """
    extras = constant([[state.storage_frac, state.energy_frac]])
    h_state = tape.concat([state.graph_feat, state.last_feat, extras], axis=1)  # (1, S)

    # per-node alignment projection, nodes along GEMM columns
    projected = tape.matmul(params.decoder.w_align, tape.transpose(node_features, (1, 0)))
    align_scores = tape.matmul(h_state, projected)  # (1, N)
    align = tape.softmax_with_mask(align_scores)
    context = tape.matmul(align, node_features)  # (1, D)

    query = tape.tanh(tape.matmul(tape.concat([context, h_state], axis=1), params.decoder.w_ctx))
    choices = tape.concat([params.decoder.depot, node_features], axis=0)  # (N+1, D)
    keyed = tape.matmul(
        tape.transpose(params.decoder.w_prob, (1, 0)), tape.transpose(choices, (1, 0))
    )  # (D, N+1)
    logits = tape.matmul(query, keyed)  # (1, N+1)
    return tape.softmax_with_mask(logits, mask[None, :])


# ----------------------------------------------------------------------
# rollout
# ----------------------------------------------------------------------

def rollout(
    scenario: Scenario,
    profiles: list[ServiceProfile],
    params: PolicyParams,
    mode: str = "greedy",
    seed: int | None = None,
    tape: Tape | None = None,
    encoded: tuple[Tensor, Tensor] | None = None,
):
    """Decode a complete plan; returns (RoutePlan, log_prob).

    greedy mode picks the argmax at every step (ties resolve to the lowest
    index); sample mode draws from the step distribution using the seed.
    Choosing the depot closes the segment and restores full storage and
    energy. When the caller provides a recording tape the returned log_prob
    is a (1, 1) tensor on that tape; otherwise it is a float. encoded lets a
    caller reuse an (node_features, graph_feature) pair already on the tape.
    """
    if mode not in ("greedy", "sample"):
        raise InvalidArgumentError(f"unknown rollout mode {mode!r}")
    own_tape = tape is None
    if own_tape:
        tape = Tape(record=False)
    rng = np.random.default_rng(seed) if mode == "sample" else None

    node_features, graph_feat = encoded if encoded is not None else encode(scenario, params, tape)
    n = scenario.n_devices
    phys = scenario.physics
    uav = scenario.uav
    price_per_meter = phys.flight_power / phys.flight_speed

    visited: set[int] = set()
    state = fresh_state(graph_feat, params)
    tour = [0]
    log_terms: list[Tensor] = []
    positions = scenario.positions_xy()

    while len(visited) < n or state.last_index != 0:
        mask = feasibility_mask(state, scenario, profiles, visited)
        probs = decode_step(state, node_features, mask, params, tape)
        row = probs.data[0]
        if mode == "greedy":
            choice = int(np.argmax(row))
        else:
            cdf = np.cumsum(row)
            draw = rng.random() * cdf[-1]
            choice = int(np.searchsorted(cdf, draw, side="right"))
            choice = min(choice, n)
            if not mask[choice]:  # zero-width interval hit exactly at a boundary
                choice = int(np.argmax(np.where(mask, row, -1.0)))
        log_terms.append(tape.log(tape.gather(probs, (0, choice))))
        tour.append(choice)

        if choice == 0:
            state = fresh_state(graph_feat, params)
        else:
            profile = profiles[choice - 1]
            last = scenario.hover_point(state.last_index)
            leg = math.hypot(positions[choice - 1, 0] - last.x, positions[choice - 1, 1] - last.y)
            spent = leg * price_per_meter + profile.e_transfer + profile.e_collect
            state = GraphState(
                graph_feat=graph_feat,
                last_feat=tape.gather_row(node_features, choice - 1),
                storage_frac=(state.storage_frac * uav.storage_capacity - profile.demand)
                / uav.storage_capacity,
                energy_frac=(state.energy_frac * uav.energy_capacity - spent)
                / uav.energy_capacity,
                last_index=choice,
                segment_nonempty=True,
            )
            visited.add(choice)

    log_prob = tape.sum_all(tape.concat(log_terms, axis=1))
    plan = build_plan(tour, scenario, profiles)
    if own_tape:
        return plan, log_prob.item()
    return plan, log_prob
