"""LTI plants, the sensors' steady-state Kalman filters, and the AoI cost table.

A sensor that last delivered a packet ``tau`` slots ago leaves the remote
estimator with error covariance ``f^tau(P_bar)``, where
``f(X) = A X A^T + W`` and ``P_bar`` is the local filter's steady posterior
covariance. Only covariances matter, so plant trajectories are never sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDraw, DimensionMismatch, NonConvergence
from .stability import spectral_radius

DEFAULT_TAU_MAX = 50


@dataclass(frozen=True)
class PlantModel:
    """x(t+1) = A x(t) + w(t),  y(t) = C x(t) + v(t) with cov(w)=W, cov(v)=V."""

    A: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        for name in ("A", "C", "W", "V"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        l, r = self.A.shape[0], self.C.shape[0]
        if self.A.shape != (l, l):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.C.shape != (r, l):
            raise DimensionMismatch(f"C must be {r}x{l}, got {self.C.shape}")
        if self.W.shape != (l, l):
            raise DimensionMismatch(f"W must be {l}x{l}, got {self.W.shape}")
        if self.V.shape != (r, r):
            raise DimensionMismatch(f"V must be {r}x{r}, got {self.V.shape}")

    @property
    def l(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> dict:
        return {
            "l": self.l,
            "r": self.r,
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "W": self.W.tolist(),
            "V": self.V.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlantModel":
        return cls(A=np.array(d["A"]), C=np.array(d["C"]), W=np.array(d["W"]), V=np.array(d["V"]))


@dataclass(frozen=True)
class SteadyEstimator:
    p_bar: np.ndarray
    cost_by_age: np.ndarray
    tau_max: int = field(default=DEFAULT_TAU_MAX)


def kf_update(plant: PlantModel, P: np.ndarray) -> np.ndarray:
    """One pass of the covariance part of the Kalman filter (predict + update)."""
    A, C = plant.A, plant.C
    prior = A @ P @ A.T + plant.W
    S = C @ prior @ C.T + plant.V
    K = np.linalg.solve(S.T, (prior @ C.T).T).T  # prior C^T S^-1
    post = (np.eye(plant.l) - K @ C) @ prior
    return (post + post.T) / 2


def solve_steady_covariance(plant: PlantModel, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Fixed point of the posterior covariance recursion, iterated from P = W.

    Raises NonConvergence when successive iterates still differ by more than
    ``tol`` (max-abs entry) after ``max_iter`` passes.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = (plant.W + plant.W.T) / 2
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            P_next = kf_update(plant, P)
        if not np.all(np.isfinite(P_next)):
            break
        if np.max(np.abs(P_next - P)) < tol:
            return P_next
        P = P_next
    raise NonConvergence(f"Kalman covariance recursion did not converge within {max_iter} iterations")


def lyapunov_step(plant: PlantModel, X: np.ndarray) -> np.ndarray:
    """f(X) = A X A^T + W: open-loop growth of the remote error covariance."""
    return plant.A @ X @ plant.A.T + plant.W


def steady_estimator(plant: PlantModel, tau_max: int = DEFAULT_TAU_MAX, tol: float = 1e-10,
                     max_iter: int = 1_000_000) -> SteadyEstimator:
    """Solve P_bar and tabulate Tr(f^tau(P_bar)) for tau = 0..tau_max."""
    if tau_max < 1:
        raise ValueError("tau_max must be positive")
    p_bar = solve_steady_covariance(plant, tol=tol, max_iter=max_iter)
    costs = np.empty(tau_max + 1)
    X = p_bar
    costs[0] = np.trace(X)
    for tau in range(1, tau_max + 1):
        X = lyapunov_step(plant, X)
        costs[tau] = np.trace(X)
    if not np.all(np.isfinite(costs)):
        raise NonConvergence("cost table overflowed; lower tau_max")
    costs.setflags(write=False)
    return SteadyEstimator(p_bar=p_bar, cost_by_age=costs, tau_max=tau_max)


def cost_at_age(est: SteadyEstimator, tau: int) -> float:
    """Remote MSE Tr(f^tau(P_bar)); ages beyond the table saturate at tau_max."""
    if tau < 0:
        raise ValueError("age must be non-negative")
    return float(est.cost_by_age[min(int(tau), est.tau_max)])


def generate_random_plant(dim: int, rho_low: float, rho_high: float, rng: np.random.Generator,
                          max_retries: int = 100) -> tuple[PlantModel, float]:
    """Random A with spectral radius drawn uniformly from (rho_low, rho_high).

    C, W and V are identities, which keeps the local filter stable. Returns the
    plant and the drawn target radius.
    """
    if not 0 < rho_low <= rho_high:
        raise ValueError("need 0 < rho_low <= rho_high")
    target = float(rng.uniform(rho_low, rho_high))
    for _ in range(max_retries):
        A = rng.standard_normal((dim, dim))
        rho = spectral_radius(A)
        if rho >= 1e-9:
            A = A * (target / rho)
            eye = np.eye(dim)
            return PlantModel(A=A, C=eye, W=eye, V=eye), target
    raise DegenerateDraw(f"random {dim}x{dim} matrix had vanishing spectral radius {max_retries} times")
