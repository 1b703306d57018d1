"""The resource-allocation MDP.

State: every sensor's current per-subcarrier channel values and its age of
information (AoI). One step decodes with the scenario's receiver, updates
AoI (1 on success, +1 otherwise, capped at tau_max), pays the summed remote
MSE as negative reward and advances the channels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .actions import IrcAction, OmaAction, ResourceAction, SicAction, validate_action
from .channel import cumulative, sample_next_digits
from .errors import ConstraintViolation
from .estimation import DEFAULT_TAU_MAX, steady_estimator
from .instance import Instance
from .phy import DecodeOutcome, irc_sic_receive, oma_receive, sic_receive


@dataclass(frozen=True)
class MdpState:
    digits: np.ndarray  # (N, M) channel state index per subcarrier
    gains: np.ndarray  # (N, M) channel values (power gains or amplitudes)
    aoi: np.ndarray  # (N,) ints


class RemoteEstimationEnv:
    """Environment for one instance under one multiple-access scenario.

    ``reward_timing="post"`` charges the cost at the AoI after the step's
    update; ``"pre"`` charges it at the AoI the step started from.
    """

    def __init__(self, instance: Instance, scenario: int, tau_max: int = DEFAULT_TAU_MAX,
                 reward_timing: str = "post"):
        if scenario not in (1, 2, 3):
            raise ValueError(f"unknown scenario {scenario}")
        if reward_timing not in ("post", "pre"):
            raise ValueError("reward_timing must be 'post' or 'pre'")
        self.instance = instance
        self.scenario = scenario
        self.tau_max = tau_max
        self.reward_timing = reward_timing
        self.N, self.M = instance.N, instance.M
        self.space = instance.space(scenario)
        self.budget = instance.budget
        self.estimators = [steady_estimator(p, tau_max=tau_max) for p in instance.plants]
        self.costs = np.stack([e.cost_by_age for e in self.estimators])  # (N, tau_max+1)
        self._cum = cumulative(instance.transitions)
        logv = np.log10(self.space.values)
        self._log_lo, self._log_span = logv[0], logv[-1] - logv[0]

    @property
    def obs_dim(self) -> int:
        return self.N * (self.M + 1)

    def _state(self, digits, aoi) -> MdpState:
        return MdpState(digits=digits, gains=self.space.values[digits], aoi=aoi)

    def reset(self, rng: np.random.Generator) -> MdpState:
        digits = rng.integers(0, self.space.H, size=(self.N, self.M))
        return self._state(digits, np.zeros(self.N, dtype=np.int64))

    def cost(self, aoi) -> float:
        aoi = np.minimum(np.asarray(aoi), self.tau_max)
        return float(self.costs[np.arange(self.N), aoi].sum())

    def decode(self, state: MdpState, action: ResourceAction, rng: np.random.Generator) -> DecodeOutcome:
        if action.scenario != self.scenario:
            raise ConstraintViolation(f"scenario {action.scenario} action in a scenario {self.scenario} environment")
        if isinstance(action, OmaAction):
            return oma_receive(self.budget, action.assignment, state.gains, rng)
        if isinstance(action, SicAction):
            return sic_receive(self.budget, action.channel, action.power, state.gains, rng)
        if isinstance(action, IrcAction):
            return irc_sic_receive(self.budget, action.power, state.gains, rng)
        raise ConstraintViolation(f"unknown action type {type(action).__name__}")

    def step(self, state: MdpState, action: ResourceAction,
             rng: np.random.Generator) -> tuple[MdpState, float, DecodeOutcome]:
        outcome = self.decode(state, action, rng)
        aoi = np.where(outcome.success, 1, np.minimum(state.aoi + 1, self.tau_max))
        charged = aoi if self.reward_timing == "post" else state.aoi
        reward = -self.cost(charged)
        digits = sample_next_digits(self._cum, state.digits, rng)
        return self._state(digits, aoi), reward, outcome

    def check_action(self, action: ResourceAction) -> None:
        validate_action(action, self.N, self.M, self.budget.p_max)

    def encode_observation(self, state: MdpState) -> np.ndarray:
        """N blocks of [M log-gain features in [-1, 1], AoI / tau_max]."""
        if self._log_span > 0:
            g = 2.0 * (np.log10(state.gains) - self._log_lo) / self._log_span - 1.0
        else:
            g = np.zeros((self.N, self.M))
        a = np.minimum(state.aoi, self.tau_max) / self.tau_max
        return np.concatenate([g, a[:, None]], axis=1).ravel()


class TraceWriter:
    """Streams per-step traces to CSV: t, action, reward, per-sensor AoI."""

    def __init__(self, path, N: int):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh)
        self._w.writerow(["t", "action", "reward"] + [f"aoi_{n + 1}" for n in range(N)])

    def write(self, t: int, action: ResourceAction, reward: float, state: MdpState) -> None:
        self._w.writerow([t, describe_action(action), repr(reward)] + [int(a) for a in state.aoi])

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def describe_action(action: ResourceAction) -> str:
    if isinstance(action, OmaAction):
        D = np.asarray(action.assignment)
        return " ".join(f"{n + 1}:{int(np.argmax(D[n])) + 1}" for n in np.flatnonzero(D.sum(axis=1)))
    if isinstance(action, SicAction):
        return " ".join(f"{n + 1}:{int(c)}@{p:.6g}" for n, (c, p) in enumerate(zip(action.channel, action.power))
                        if c > 0 and p > 0)
    return ";".join(",".join(f"{p:.6g}" for p in row) for row in np.asarray(action.power))
