"""Resource actions and the maps from the actor's virtual actions onto them.

Virtual action layouts (sensor-major):

* scenario 1: N scores; the M highest get subcarriers 1..M in order.
* scenario 2: N blocks of ``bits = ceil(log2(M+1))`` channel-code entries,
  followed by N power entries. A block is read as an unsigned integer, first
  entry most significant, positive entry = 1.
* scenario 3: N blocks of M+1 entries: M per-subcarrier weights then the
  total power ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation, PowerBudgetViolation


@dataclass(frozen=True)
class OmaAction:
    """N x M binary assignment D."""

    assignment: np.ndarray
    scenario = 1


@dataclass(frozen=True)
class SicAction:
    """Per-sensor subcarrier (0 = idle, 1..M) and transmit power in mW."""

    channel: np.ndarray
    power: np.ndarray
    scenario = 2


@dataclass(frozen=True)
class IrcAction:
    """N x M transmit powers in mW; a zero row is an idle sensor."""

    power: np.ndarray
    scenario = 3


ResourceAction = OmaAction | SicAction | IrcAction


def code_bits(M: int) -> int:
    return math.ceil(math.log2(M + 1))


def virtual_dim(scenario: int, N: int, M: int) -> int:
    if scenario == 1:
        return N
    if scenario == 2:
        return N * code_bits(M) + N
    if scenario == 3:
        return N * (M + 1)
    raise ValueError(f"unknown scenario {scenario}")


def _check_dim(v, expected):
    v = np.asarray(v, dtype=float).ravel()
    if v.size != expected:
        raise ValueError(f"virtual action has {v.size} entries, expected {expected}")
    return v


def _unit_power(x):
    return (np.clip(x, -1.0, 1.0) + 1.0) / 2.0


def map_scenario1(v, N: int, M: int) -> np.ndarray:
    v = _check_dim(v, N)
    ranked = np.argsort(-v, kind="stable")
    D = np.zeros((N, M), dtype=np.int8)
    D[ranked[:M], np.arange(min(M, N))] = 1
    return D


def map_scenario2(v, N: int, M: int, p_max: float) -> tuple[np.ndarray, np.ndarray]:
    bits = code_bits(M)
    v = _check_dim(v, N * bits + N)
    blocks = (v[: N * bits].reshape(N, bits) > 0).astype(np.int64)
    codes = blocks @ (1 << np.arange(bits - 1, -1, -1))
    channel = np.where(codes <= M, codes, 0)
    power = p_max * _unit_power(v[N * bits:])
    return channel, power


def map_scenario2_naive(v, N: int, M: int, p_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Benchmark map: one scalar per sensor quantised into M+1 levels.

    With N extra entries the powers follow the same map as scenario 2,
    otherwise every sensor transmits at full power.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size not in (N, 2 * N):
        raise ValueError(f"naive virtual action has {v.size} entries, expected {N} or {2 * N}")
    x = np.clip(v[:N], -1.0, 1.0)
    level = np.minimum(np.floor((x + 1.0) * (M + 1) / 2.0), M).astype(np.int64)
    power = p_max * _unit_power(v[N:]) if v.size == 2 * N else np.full(N, float(p_max))
    return level, power


def map_scenario3(v, N: int, M: int, p_max: float) -> np.ndarray:
    v = _check_dim(v, N * (M + 1)).reshape(N, M + 1)
    total = p_max * _unit_power(v[:, M])
    w = _unit_power(v[:, :M])
    wsum = w.sum(axis=1)
    P = np.zeros((N, M))
    on = wsum > 0
    P[on] = total[on, None] * w[on] / wsum[on, None]
    return P


def map_virtual(scenario: int, v, N: int, M: int, p_max: float, naive: bool = False) -> ResourceAction:
    if scenario == 1:
        return OmaAction(map_scenario1(v, N, M))
    if scenario == 2:
        f = map_scenario2_naive if naive else map_scenario2
        return SicAction(*f(v, N, M, p_max))
    if scenario == 3:
        return IrcAction(map_scenario3(v, N, M, p_max))
    raise ValueError(f"unknown scenario {scenario}")


def validate_action(action: ResourceAction, N: int, M: int, p_max: float) -> None:
    """Raise ConstraintViolation unless ``action`` is legal for its scenario."""
    if isinstance(action, OmaAction):
        D = np.asarray(action.assignment)
        if D.shape != (N, M) or np.any((D != 0) & (D != 1)):
            raise ConstraintViolation("scenario 1 needs a binary N x M assignment")
        if np.any(D.sum(axis=0) > 1) or np.any(D.sum(axis=1) > 1):
            raise ConstraintViolation("scenario 1: one sensor per channel and one channel per sensor")
    elif isinstance(action, SicAction):
        c, p = np.asarray(action.channel), np.asarray(action.power, dtype=float)
        if c.shape != (N,) or p.shape != (N,):
            raise ConstraintViolation("scenario 2 needs N channel choices and N powers")
        if np.any(c < 0) or np.any(c > M):
            raise ConstraintViolation("scenario 2 channel choice outside 0..M")
        if np.any(p < 0) or np.any(p > p_max * (1 + 1e-12)):
            raise PowerBudgetViolation("scenario 2 power outside [0, P_max]")
    elif isinstance(action, IrcAction):
        P = np.asarray(action.power, dtype=float)
        if P.shape != (N, M):
            raise ConstraintViolation("scenario 3 needs an N x M power matrix")
        if np.any(P < 0) or np.any(P.sum(axis=1) > p_max + 1e-9):
            raise PowerBudgetViolation("scenario 3 row power exceeds P_max")
    else:
        raise ConstraintViolation(f"unknown action type {type(action).__name__}")
