"""A generated problem instance: plants, channel statistics, link budget.

Instances persist as JSON (row-major matrices) so every experiment can be
rerun bit-for-bit from the file alone.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelStateSpace, MarkovChannelModel, generate_random_transition
from .errors import ResampleCapExceeded
from .estimation import PlantModel, generate_random_plant
from .phy import LinkBudget
from .stability import StabilityReport, check_stability

log = logging.getLogger(__name__)

TABLE_GAINS = tuple(10.0 ** k for k in range(-8, 0))
FORMAT_VERSION = 1


@dataclass
class Instance:
    plants: list
    transitions: np.ndarray  # (N, M, H, H) per-sensor, per-subcarrier
    channel_values: tuple  # power gains h_1..h_H
    budget: LinkBudget
    rho_targets: list = field(default_factory=list)
    seed: int | None = None
    stability: dict | None = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.channel_values = tuple(float(g) for g in self.channel_values)
        if self.transitions.ndim != 4 or self.transitions.shape[0] != len(self.plants):
            raise ValueError("transitions must have shape (N, M, H, H)")
        if self.transitions.shape[2] != len(self.channel_values):
            raise ValueError("transition matrices do not match the number of channel states")

    @property
    def N(self) -> int:
        return len(self.plants)

    @property
    def M(self) -> int:
        return self.transitions.shape[1]

    @property
    def H(self) -> int:
        return len(self.channel_values)

    def space(self, scenario: int = 1) -> ChannelStateSpace:
        """Scenarios 1-2 read channel values as power gains, scenario 3 as amplitudes."""
        if scenario == 3:
            return ChannelStateSpace(tuple(np.sqrt(self.channel_values)), self.M, kind="amplitude")
        return ChannelStateSpace(self.channel_values, self.M, kind="power")

    def channel_models(self, scenario: int = 1) -> list:
        space = self.space(scenario)
        return [MarkovChannelModel(space, list(T)) for T in self.transitions]

    def check_stability(self, cap: int = 4096) -> StabilityReport:
        return check_stability(self.plants, list(self.transitions), self.space(1), self.budget, cap=cap)

    def to_dict(self) -> dict:
        b = self.budget
        return {
            "format_version": FORMAT_VERSION,
            "N": self.N,
            "M": self.M,
            "H": self.H,
            "seed": self.seed,
            "channel_values": list(self.channel_values),
            "budget": {"p_max_mw": b.p_max, "sigma2_mw": b.sigma2, "bits": b.bits, "blocklen": b.blocklen},
            "plants": [dict(p.to_dict(), rho_target=r) for p, r in zip(self.plants, self._rho_list())],
            "transitions": self.transitions.tolist(),
            "stability": self.stability,
        }

    def _rho_list(self):
        return self.rho_targets if self.rho_targets else [None] * self.N

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        b = d["budget"]
        return cls(
            plants=[PlantModel.from_dict(p) for p in d["plants"]],
            transitions=np.array(d["transitions"], dtype=float),
            channel_values=tuple(d["channel_values"]),
            budget=LinkBudget(p_max=b["p_max_mw"], sigma2=b["sigma2_mw"], bits=b["bits"], blocklen=b["blocklen"]),
            rho_targets=[p.get("rho_target") for p in d["plants"]],
            seed=d.get("seed"),
            stability=d.get("stability"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def gen_instance(N: int, M: int, budget: LinkBudget, rng: np.random.Generator, *,
                 channel_values=TABLE_GAINS, plant_dim: int = 2, rho_range=(1.0, 1.3),
                 joint_cap: int = 4096, stability_gate: bool = True, max_resamples: int = 10_000,
                 seed: int | None = None) -> Instance:
    """Draw plants and channel matrices until the sufficient stability condition holds.

    When H**M exceeds ``joint_cap`` the condition cannot be evaluated exactly;
    the gate is skipped with a warning and the instance records that.
    """
    H = len(channel_values)
    gate = stability_gate
    if gate and H**M > joint_cap:
        log.warning("joint channel space %d exceeds cap %d; stability gate disabled", H**M, joint_cap)
        gate = False
    for _ in range(max_resamples):
        drawn = [generate_random_plant(plant_dim, rho_range[0], rho_range[1], rng) for _ in range(N)]
        trans = np.array([[generate_random_transition(H, rng) for _ in range(M)] for _ in range(N)])
        inst = Instance(plants=[p for p, _ in drawn], transitions=trans, channel_values=channel_values,
                        budget=budget, rho_targets=[r for _, r in drawn], seed=seed)
        if not gate:
            inst.stability = {"checked": False, "reason": f"H**M={H**M} exceeds joint cap {joint_cap}"
                              if stability_gate else "gate disabled"}
            return inst
        report = inst.check_stability(cap=joint_cap)
        if report.sufficient_holds:
            inst.stability = dict(report.to_dict(), checked=True)
            return inst
    raise ResampleCapExceeded(f"no instance met the sufficient stability condition in {max_resamples} draws")
