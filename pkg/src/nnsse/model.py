"""Augmented state-space model for online-learned trajectory prediction.

The state vector stacks a window of lagged positions with every weight of a
small surrogate network.  The network serves two roles: as the one-step
transition map driving the filter, and as the multi-step position predictor.
Only the newest position is observed.

State layout for horizon ``a``, input width ``b`` and weight count ``c``
(total length ``n = (a - 1) + b + c``):

* indices ``0 .. a+b-2``: positions, newest first,
* indices ``a+b-1 .. n-1``: weights, layer by layer, each layer's matrix
  flattened row-major (row = destination neuron).  There are no bias terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class TopologyKind(Enum):
    WEIGHTED_SUM = "weighted_sum"
    MLP = "mlp"


class Activation(Enum):
    IDENTITY = "identity"
    TANH = "tanh"


@dataclass(frozen=True)
class Topology:
    """Architecture descriptor: layer widths, activation, horizon and rate.

    ``layer_widths`` starts with the input width ``b`` and ends with the
    output width, which must be exactly 1.  A weighted-sum topology is the
    degenerate two-layer case ``[b, 1]`` with identity activation.
    """

    kind: TopologyKind
    layer_widths: tuple[int, ...]
    hidden_activation: Activation = Activation.IDENTITY
    horizon_a: int = 1
    sample_period_T: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("layer_widths needs at least an input and an output layer")
        if any(w <= 0 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.layer_widths[-1] != 1:
            raise ValueError("output width must be exactly 1")
        if self.kind is TopologyKind.WEIGHTED_SUM:
            if len(self.layer_widths) != 2:
                raise ValueError("weighted-sum topology has exactly two layers [b, 1]")
            if self.hidden_activation is not Activation.IDENTITY:
                raise ValueError("weighted-sum topology has no hidden activation")
        if self.horizon_a < 1:
            raise ValueError("horizon_a must be a positive integer")
        if not self.sample_period_T > 0:
            raise ValueError("sample_period_T must be > 0")

    @classmethod
    def weighted_sum(cls, input_width: int, horizon_a: int = 1,
                     sample_period_T: float = 1.0) -> "Topology":
        return cls(TopologyKind.WEIGHTED_SUM, (input_width, 1),
                   Activation.IDENTITY, horizon_a, sample_period_T)

    @classmethod
    def mlp(cls, layer_widths, hidden_activation: Activation = Activation.IDENTITY,
            horizon_a: int = 1, sample_period_T: float = 1.0) -> "Topology":
        return cls(TopologyKind.MLP, tuple(layer_widths), hidden_activation,
                   horizon_a, sample_period_T)

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def weight_count(self) -> int:
        return weight_count(self)

    @property
    def position_count(self) -> int:
        """Length of the position block: horizon + input width - 1."""
        return self.horizon_a + self.input_width - 1

    @property
    def state_dim(self) -> int:
        return self.position_count + self.weight_count

    @property
    def position_slice(self) -> slice:
        return slice(0, self.position_count)

    @property
    def network_input_slice(self) -> slice:
        """Positions fed to the transition network: offsets a-1 .. a+b-2."""
        return slice(self.horizon_a - 1, self.position_count)

    @property
    def weight_slice(self) -> slice:
        return slice(self.position_count, self.state_dim)


def weight_count(topology: Topology) -> int:
    """Total number of weights: sum of width products over adjacent layers."""
    widths = topology.layer_widths
    return int(sum(widths[k] * widths[k + 1] for k in range(len(widths) - 1)))


@dataclass
class AugmentedState:
    """Joint vector of lagged positions and network weights for one topology."""

    topology: Topology
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.topology.state_dim,):
            raise ValueError(
                f"state length {self.values.shape} does not match topology "
                f"dimension ({self.topology.state_dim},)")

    @classmethod
    def from_blocks(cls, topology: Topology, positions, weights) -> "AugmentedState":
        positions = np.asarray(positions, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if positions.shape != (topology.position_count,):
            raise ValueError("position block has wrong length")
        if weights.shape != (topology.weight_count,):
            raise ValueError("weight block has wrong length")
        return cls(topology, np.concatenate([positions, weights]))

    @property
    def positions(self) -> np.ndarray:
        return self.values[self.topology.position_slice]

    @property
    def weights(self) -> np.ndarray:
        return self.values[self.topology.weight_slice]


@dataclass
class NoiseSpec:
    """Process covariance Q, scalar measurement variance R, initial covariance."""

    Q: np.ndarray
    R: float
    Pi0: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.Pi0 = np.asarray(self.Pi0, dtype=float)
        self.R = float(self.R)
        for name, M in (("Q", self.Q), ("Pi0", self.Pi0)):
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be a square matrix")
            scale = max(1.0, float(np.abs(M).max()))
            if np.abs(M - M.T).max() > 1e-9 * scale:
                raise ValueError(f"{name} must be symmetric")
        if self.Q.shape != self.Pi0.shape:
            raise ValueError("Q and Pi0 must have the same shape")
        if not self.R > 0:
            raise ValueError("R must be > 0")


def _as_values(state) -> np.ndarray:
    if isinstance(state, AugmentedState):
        return state.values
    return np.asarray(state, dtype=float)


def _layer_matrices(topology: Topology, weights: np.ndarray) -> list[np.ndarray]:
    mats = []
    offset = 0
    widths = topology.layer_widths
    for k in range(len(widths) - 1):
        n_in, n_out = widths[k], widths[k + 1]
        mats.append(weights[offset:offset + n_in * n_out].reshape(n_out, n_in))
        offset += n_in * n_out
    return mats


def _forward_stack(topology: Topology, inputs: np.ndarray,
                   weights: np.ndarray) -> list[np.ndarray]:
    """Layer inputs [h_0=inputs, h_1, ..., h_L] with h_L the output vector."""
    mats = _layer_matrices(topology, weights)
    tanh = topology.hidden_activation is Activation.TANH
    hs = [inputs]
    for k, W in enumerate(mats):
        z = W @ hs[-1]
        # activation on hidden layers only, never on the output node
        if k < len(mats) - 1 and tanh:
            z = np.tanh(z)
        hs.append(z)
    return hs


def forward(topology: Topology, inputs, weights) -> float:
    """Network output for one input window and one flat weight vector."""
    inputs = np.asarray(inputs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if inputs.shape != (topology.input_width,):
        raise ValueError(f"expected {topology.input_width} inputs, got {inputs.shape}")
    if weights.shape != (topology.weight_count,):
        raise ValueError(f"expected {topology.weight_count} weights, got {weights.shape}")
    if topology.kind is TopologyKind.WEIGHTED_SUM:
        return float(inputs @ weights)
    return float(_forward_stack(topology, inputs, weights)[-1][0])


def forward_batch(topology: Topology, inputs: np.ndarray,
                  weights: np.ndarray) -> np.ndarray:
    """Row-paired batch of `forward`: inputs (m, b) with weights (m, c)."""
    inputs = np.asarray(inputs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if topology.kind is TopologyKind.WEIGHTED_SUM:
        return np.einsum("ij,ij->i", inputs, weights)
    m = inputs.shape[0]
    widths = topology.layer_widths
    tanh = topology.hidden_activation is Activation.TANH
    h = inputs
    offset = 0
    n_layers = len(widths) - 1
    for k in range(n_layers):
        n_in, n_out = widths[k], widths[k + 1]
        W = weights[:, offset:offset + n_in * n_out].reshape(m, n_out, n_in)
        offset += n_in * n_out
        h = np.einsum("moi,mi->mo", W, h)
        if k < n_layers - 1 and tanh:
            h = np.tanh(h)
    return h[:, 0]


def forward_gradients(topology: Topology, inputs, weights):
    """Gradient of `forward` w.r.t. inputs (length b) and weights (length c)."""
    inputs = np.asarray(inputs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if topology.kind is TopologyKind.WEIGHTED_SUM:
        return weights.copy(), inputs.copy()
    mats = _layer_matrices(topology, weights)
    tanh = topology.hidden_activation is Activation.TANH
    hs = _forward_stack(topology, inputs, weights)
    delta = np.ones(1)
    grad_parts: list[np.ndarray] = [np.empty(0)] * len(mats)
    grad_inputs = np.empty(0)
    for k in range(len(mats) - 1, -1, -1):
        grad_parts[k] = np.outer(delta, hs[k]).ravel()
        back = mats[k].T @ delta
        if k == 0:
            grad_inputs = back
        elif tanh:
            # hs[k] is the activated hidden output, so tanh' = 1 - hs[k]^2
            delta = back * (1.0 - hs[k] ** 2)
        else:
            delta = back
    return grad_inputs, np.concatenate(grad_parts)


def transition(topology: Topology, state):
    """One-step map: push the network output onto the shifted position block.

    Weights are copied unchanged; the map is deterministic (process noise is
    applied by the estimators, not here).
    """
    values = _as_values(state)
    if values.shape != (topology.state_dim,):
        raise ValueError("state does not match topology dimension")
    out = values.copy()
    lead = forward(topology, values[topology.network_input_slice],
                   values[topology.weight_slice])
    pos_end = topology.position_count
    out[1:pos_end] = values[0:pos_end - 1]
    out[0] = lead
    if isinstance(state, AugmentedState):
        return AugmentedState(topology, out)
    return out


def transition_batch(topology: Topology, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[1] != topology.state_dim:
        raise ValueError("states must be (m, n) for this topology")
    out = states.copy()
    lead = forward_batch(topology, states[:, topology.network_input_slice],
                         states[:, topology.weight_slice])
    pos_end = topology.position_count
    out[:, 1:pos_end] = states[:, 0:pos_end - 1]
    out[:, 0] = lead
    return out


def observe(state) -> float:
    """Measurement map: the newest position (index 0), noise excluded."""
    return float(_as_values(state)[0])


def observe_batch(states: np.ndarray) -> np.ndarray:
    return np.asarray(states, dtype=float)[:, 0]


def predict_ahead(topology: Topology, state) -> float:
    """Horizon-step position forecast from the newest b positions and weights."""
    values = _as_values(state)
    if values.shape != (topology.state_dim,):
        raise ValueError("state does not match topology dimension")
    return forward(topology, values[:topology.input_width],
                   values[topology.weight_slice])


def predict_ahead_batch(topology: Topology, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=float)
    return forward_batch(topology, states[:, :topology.input_width],
                         states[:, topology.weight_slice])


def transition_jacobian(topology: Topology, state) -> np.ndarray:
    """Jacobian of `transition` at `state`.

    Row 0 carries the network gradients (chain rule) in the network-input and
    weight columns; the remaining position rows encode the shift; weight rows
    are identity.
    """
    values = _as_values(state)
    if values.shape != (topology.state_dim,):
        raise ValueError("state does not match topology dimension")
    n = topology.state_dim
    J = np.zeros((n, n))
    g_in, g_w = forward_gradients(topology, values[topology.network_input_slice],
                                  values[topology.weight_slice])
    J[0, topology.network_input_slice] = g_in
    J[0, topology.weight_slice] = g_w
    pos_end = topology.position_count
    for r in range(1, pos_end):
        J[r, r - 1] = 1.0
    for r in range(pos_end, n):
        J[r, r] = 1.0
    return J


class NetworkStateSpace:
    """Adapter bundling a topology with the estimator-facing map protocol."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.dim = topology.state_dim

    def transition(self, x: np.ndarray) -> np.ndarray:
        return transition(self.topology, x)

    def transition_batch(self, X: np.ndarray) -> np.ndarray:
        return transition_batch(self.topology, X)

    def observe(self, x: np.ndarray) -> float:
        return observe(x)

    def observe_batch(self, X: np.ndarray) -> np.ndarray:
        return observe_batch(X)

    def predict_ahead(self, x: np.ndarray) -> float:
        return predict_ahead(self.topology, x)

    def predict_ahead_batch(self, X: np.ndarray) -> np.ndarray:
        return predict_ahead_batch(self.topology, X)

    def transition_jacobian(self, x: np.ndarray) -> np.ndarray:
        return transition_jacobian(self.topology, x)
