"""Non-learning reference policies: random, round-robin and a greedy heuristic.

All of them transmit at full power. The greedy policy scores each sensor by
tau * (best subcarrier gain) * (cost(tau+1) - cost(tau)) and hands the top
sensors their best free subcarriers. The ``greedy_aoi`` variant ranks by raw
AoI instead.
"""

from __future__ import annotations

import numpy as np

from .actions import IrcAction, OmaAction, ResourceAction, SicAction
from .env import MdpState, RemoteEstimationEnv

KINDS = ("random", "round_robin", "greedy_aoi_gain", "greedy_aoi")


class BaselinePolicy:
    def __init__(self, kind: str, env: RemoteEstimationEnv, rng: np.random.Generator | None = None):
        if kind not in KINDS:
            raise ValueError(f"unknown baseline {kind!r}; choose from {KINDS}")
        self.kind = kind
        self.env = env
        self.N, self.M, self.scenario = env.N, env.M, env.scenario
        self.p_max = env.budget.p_max
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.counter = 0

    def __call__(self, state: MdpState) -> ResourceAction:
        return act(self, state)

    # scheduled sensors (in channel order) -> scenario action
    def _assign(self, sensors, channels) -> ResourceAction:
        N, M = self.N, self.M
        if self.scenario == 1:
            D = np.zeros((N, M), dtype=np.int8)
            D[sensors, channels] = 1
            return OmaAction(D)
        if self.scenario == 2:
            ch = np.zeros(N, dtype=np.int64)
            ch[sensors] = np.asarray(channels) + 1
            return SicAction(ch, np.where(ch > 0, self.p_max, 0.0))
        P = np.zeros((N, M))
        P[sensors, channels] = self.p_max
        return IrcAction(P)


def act(policy: BaselinePolicy, state: MdpState) -> ResourceAction:
    N, M = policy.N, policy.M
    if policy.kind == "random":
        return _random(policy)
    if policy.kind == "round_robin":
        k = policy.counter
        policy.counter += 1
        sensors = (k * M + np.arange(min(M, N))) % N
        return policy._assign(sensors, np.arange(sensors.size))
    return _greedy(policy, state)


def _random(policy: BaselinePolicy) -> ResourceAction:
    N, M, rng = policy.N, policy.M, policy.rng
    if policy.scenario == 1:
        sensors = rng.permutation(N)[: min(M, N)]
        return policy._assign(sensors, np.arange(sensors.size))
    if policy.scenario == 2:
        ch = rng.integers(0, M + 1, size=N)
        return SicAction(ch, np.where(ch > 0, policy.p_max, 0.0))
    w = rng.random((N, M))
    w = np.where(w > 0, w, 1.0)
    return IrcAction(policy.p_max * w / w.sum(axis=1, keepdims=True))


def _greedy(policy: BaselinePolicy, state: MdpState) -> ResourceAction:
    env = policy.env
    power = env.space.power_gains[state.digits]  # (N, M)
    cap = env.tau_max
    tau = np.minimum(state.aoi, cap - 1)
    if policy.kind == "greedy_aoi":
        score = state.aoi.astype(float)
    else:
        rows = np.arange(policy.N)
        slope = env.costs[rows, tau + 1] - env.costs[rows, tau]
        score = state.aoi * power.max(axis=1) * slope
    order = np.lexsort((np.arange(policy.N), -score))
    free = np.ones(policy.M, dtype=bool)
    sensors, channels = [], []
    for n in order[: min(policy.M, policy.N)]:
        g = np.where(free, power[n], -np.inf)
        m = int(np.argmax(g))  # first max: lowest channel index on ties
        free[m] = False
        sensors.append(int(n))
        channels.append(m)
    return policy._assign(np.array(sensors, dtype=np.int64), np.array(channels, dtype=np.int64))
