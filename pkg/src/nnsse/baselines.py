"""Classical comparison predictors.

Uniformly accelerated (polynomial-kinematics) Kalman models of orders 1-4,
the position-stack family (fixed first-row transitions over a window of past
positions, including a variant whose coefficients are re-regressed online
from a sliding window), and an exact sine-rotation reference model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class StackKind(Enum):
    E2P = "E2P"
    E3P = "E3P"
    E4P = "E4P"
    E4PVW = "E4PVW"
    E4PRW = "E4PRW"
    E4PTRW = "E4PTRW"


# First-row coefficients of the companion transitions.  The difference-form
# rows collect p_{i+1} = p_i + sum_j lambda_j (p_{i-j} - p_{i-j-1}); the
# regressed row carries the published values as printed (sums to 1.0001).
_E4PRW_COEFFS = (1.2668, -0.0152, 0.0103, -0.2618)

STACK_COEFFS: dict[StackKind, tuple[float, ...]] = {
    StackKind.E2P: (2.0, -1.0),
    StackKind.E3P: (1.5, 0.0, -0.5),
    StackKind.E4P: (4.0 / 3.0, 0.0, 0.0, -1.0 / 3.0),
    StackKind.E4PVW: (1.5, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0),
    StackKind.E4PRW: _E4PRW_COEFFS,
    StackKind.E4PTRW: _E4PRW_COEFFS,
}

E4PTRW_WINDOW = 50
E4PTRW_MIN_PAIRS = 5


def _companion(coeffs: np.ndarray) -> np.ndarray:
    k = coeffs.size
    F = np.zeros((k, k))
    F[0] = coeffs
    for r in range(1, k):
        F[r, r - 1] = 1.0
    return F


@dataclass
class StackModel:
    """Linear predictor over a window of past positions (newest first)."""

    kind: StackKind
    coeffs: np.ndarray
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self.F = _companion(self.coeffs)

    @property
    def k(self) -> int:
        return self.coeffs.size

    @property
    def H(self) -> np.ndarray:
        H = np.zeros(self.k)
        H[0] = 1.0
        return H


def stack_transition(kind: StackKind) -> StackModel:
    """Fixed companion transition for a stack kind.

    The online-regressed kind starts from the published offline coefficients
    and is refitted by its runner via `e4ptrw_refit`.
    """
    return StackModel(kind, np.array(STACK_COEFFS[kind]))


def e4ptrw_refit(window) -> np.ndarray:
    """Least-squares coefficients from (inputs4, next) pairs.

    Minimum-norm solution of ``next ~ coeffs . inputs4`` with no intercept.
    With fewer than 5 usable pairs the published offline coefficients are
    returned unchanged.
    """
    pairs = [(np.asarray(a, dtype=float), float(y)) for a, y in window]
    usable = [(a, y) for a, y in pairs
              if a.shape == (4,) and np.all(np.isfinite(a)) and np.isfinite(y)]
    if len(usable) < E4PTRW_MIN_PAIRS:
        return np.array(_E4PRW_COEFFS)
    A = np.stack([a for a, _ in usable])
    y = np.array([t for _, t in usable])
    coeffs, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coeffs


@dataclass
class UamModel:
    """Polynomial-kinematics linear model of a given order (1..4)."""

    order: int
    T: float
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.order not in (1, 2, 3, 4):
            raise ValueError("order must be in 1..4")
        if not self.T > 0:
            raise ValueError("sample period must be > 0")
        k = self.order
        F = np.zeros((k, k))
        for i in range(k):
            for j in range(i, k):
                F[i, j] = self.T ** (j - i) / math.factorial(j - i)
        self.F = F

    @property
    def H(self) -> np.ndarray:
        H = np.zeros(self.order)
        H[0] = 1.0
        return H


def uam_model(order: int, T: float) -> UamModel:
    return UamModel(order, T)


def uam_predict_n(state, n: int, T: float) -> float:
    """Closed-form n-step position forecast: Taylor sum of the present state.

    Terms are included per the state length (position, velocity,
    acceleration, jerk).
    """
    state = np.asarray(state, dtype=float)
    h = n * T
    return float(sum(state[j] * h ** j / math.factorial(j) for j in range(state.size)))


@dataclass
class SineModel:
    """Two-state rotation model exactly representing one sinusoid frequency."""

    omega: float
    T: float
    F: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be > 0")
        if not self.T > 0:
            raise ValueError("sample period must be > 0")
        c, s = np.cos(self.omega * self.T), np.sin(self.omega * self.T)
        self.F = np.array([[c, s], [-s, c]])

    @property
    def H(self) -> np.ndarray:
        return np.array([1.0, 0.0])

    def predict_n(self, state, n: int) -> float:
        """n-step forecast: rotation by n*omega*T applied to the state."""
        angle = n * self.omega * self.T
        return float(np.cos(angle) * state[0] + np.sin(angle) * state[1])


def sine_reference_model(omega: float, T: float) -> SineModel:
    return SineModel(omega, T)


def multi_step_predict(model, state, n: int) -> float:
    """Observed coordinate after n one-step transitions.

    Stack models iterate their companion matrix; kinematic and sine models
    use their closed forms.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(model, UamModel):
        return uam_predict_n(state, n, model.T)
    if isinstance(model, SineModel):
        return model.predict_n(state, n)
    if isinstance(model, StackModel):
        x = np.asarray(state, dtype=float)
        for _ in range(n):
            x = model.F @ x
        return float(x[0])
    raise TypeError(f"unsupported model type {type(model)!r}")
