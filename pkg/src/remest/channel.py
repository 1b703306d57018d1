"""Finite-state Markov block-fading channels.

Each sensor sees M subcarriers whose gains take values in a common set of H
states. Subcarriers evolve as independent H-state chains, so the joint chain
over the H**M joint states has the Kronecker product of the per-channel
matrices as its transition matrix.

Joint states are numbered in mixed radix with channel 1 as the least
significant base-H digit: ``index = sum_m digit_m * H**m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import JointSpaceTooLarge

JOINT_CAP = 4096


@dataclass(frozen=True)
class ChannelStateSpace:
    """Channel values h_1 < ... < h_H shared by all subcarriers.

    ``kind`` says how the raw values are read: ``"power"`` gains (OMA and SIC)
    or ``"amplitude"`` coefficients (IRC-SIC), whose squares are power gains.
    """

    gains: tuple[float, ...]
    M: int
    kind: str = "power"

    def __post_init__(self):
        g = tuple(float(x) for x in self.gains)
        object.__setattr__(self, "gains", g)
        if not g or any(x <= 0 for x in g):
            raise ValueError("channel values must be positive")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("channel values must be strictly increasing")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.kind not in ("power", "amplitude"):
            raise ValueError(f"unknown channel value kind {self.kind!r}")

    @property
    def H(self) -> int:
        return len(self.gains)

    @property
    def size(self) -> int:
        return self.H ** self.M

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.gains)

    @property
    def power_gains(self) -> np.ndarray:
        v = self.values
        return v * v if self.kind == "amplitude" else v

    def digits_of(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise IndexError(f"joint index {index} out of range [0, {self.size})")
        return (index // self.H ** np.arange(self.M)) % self.H

    def index_of(self, digits) -> int:
        digits = np.asarray(digits, dtype=np.int64)
        return int(np.sum(digits * self.H ** np.arange(self.M)))

    def all_digits(self) -> np.ndarray:
        """Digits of every joint state, shape (H**M, M)."""
        idx = np.arange(self.size)[:, None]
        return (idx // self.H ** np.arange(self.M)[None, :]) % self.H


def gains_of(space: ChannelStateSpace, index: int) -> np.ndarray:
    """Per-subcarrier channel values of joint state ``index``."""
    return space.values[space.digits_of(index)]


def generate_random_transition(H: int, rng: np.random.Generator) -> np.ndarray:
    """H x H row-stochastic matrix with i.i.d. uniform rows, normalised."""
    if H < 1:
        raise ValueError("H must be at least 1")
    T = rng.random((H, H))
    # uniforms on [0, 1) can hit 0 exactly; keep every entry strictly positive
    T = np.where(T > 0, T, np.finfo(float).tiny)
    return T / T.sum(axis=1, keepdims=True)


def joint_transition(per_channel_T, cap: int = JOINT_CAP) -> np.ndarray:
    """Kronecker product consistent with the mixed-radix joint numbering."""
    mats = [np.asarray(T, dtype=float) for T in per_channel_T]
    size = int(np.prod([T.shape[0] for T in mats]))
    if size > cap:
        raise JointSpaceTooLarge(f"joint channel space has {size} states, cap is {cap}")
    # channel 1 is the fastest-varying digit, so it is the last Kronecker factor
    return reduce(np.kron, reversed(mats))


def sample_next_digits(cum_T: np.ndarray, digits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Advance a batch of independent chains one step.

    ``cum_T`` has shape (..., H, H) holding row-wise cumulative sums, ``digits``
    the matching (...) current states.
    """
    rows = np.take_along_axis(cum_T, digits[..., None, None], axis=-2)[..., 0, :]
    u = rng.random(digits.shape)
    nxt = (rows <= u[..., None]).sum(axis=-1)  # u in [cum[k-1], cum[k]) -> k
    return np.minimum(nxt, cum_T.shape[-1] - 1)


def cumulative(T: np.ndarray) -> np.ndarray:
    cum = np.cumsum(T, axis=-1)
    cum[..., -1] = 1.0
    return cum


@dataclass
class MarkovChannelModel:
    """One sensor's M-subcarrier channel with its current joint state."""

    space: ChannelStateSpace
    per_channel_T: list
    state: int = 0
    joint_cap: int = JOINT_CAP
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mats = [np.asarray(T, dtype=float) for T in self.per_channel_T]
        H = self.space.H
        if len(mats) != self.space.M:
            raise ValueError(f"expected {self.space.M} per-channel matrices, got {len(mats)}")
        for T in mats:
            if T.shape != (H, H):
                raise ValueError(f"transition matrix must be {H}x{H}, got {T.shape}")
            if np.any(T < 0) or np.any(np.abs(T.sum(axis=1) - 1) > 1e-12):
                raise ValueError("transition matrices must be row-stochastic")
        self.per_channel_T = mats
        self._cum = cumulative(np.stack(mats))

    @property
    def joint_T(self) -> np.ndarray | None:
        if self.space.size > self.joint_cap:
            return None
        return joint_transition(self.per_channel_T, cap=self.joint_cap)

    @property
    def digits(self) -> np.ndarray:
        return self.space.digits_of(self.state)

    @property
    def gains(self) -> np.ndarray:
        return gains_of(self.space, self.state)


def step_channel(model: MarkovChannelModel, rng: np.random.Generator) -> int:
    """Advance every subcarrier independently; returns the new joint index."""
    digits = sample_next_digits(model._cum, model.digits, rng)
    model.state = model.space.index_of(digits)
    return model.state
