"""Mean-square stability conditions for the N-sensor M-channel estimator.

With rho_n the spectral radius of plant n and lambda_n = rho(Psi M_n), where
M_n is sensor n's joint channel transition matrix and Psi is diagonal with
the failure probability of the best subcarrier of each joint state at full
power:

* sufficient: max_n rho_n^2 * max_n lambda_n < 1
* necessary:  max_n rho_n^2 * lambda_n < 1
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import JointSpaceTooLarge, NonConvergence

EIG_DIM_LIMIT = 64


def spectral_radius(mtx, tol: float = 1e-12, max_doublings: int = 200) -> float:
    """Largest eigenvalue modulus.

    Up to 64x64 this takes the eigenvalues from LAPACK's Hessenberg-QR
    (real Schur) iteration. Larger matrices use Gelfand's formula
    ||M^k||^(1/k), squaring repeatedly with renormalisation until two
    successive estimates agree to ``tol`` (relative).
    """
    A = np.asarray(mtx, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if A.shape[0] == 0:
        return 0.0
    if A.shape[0] <= EIG_DIM_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvals(A))))
    return _gelfand(A, tol, max_doublings)


def _gelfand(A: np.ndarray, tol: float, max_doublings: int) -> float:
    norm = np.linalg.norm(A, "fro")
    if norm == 0:
        return 0.0
    B = A / norm
    log_norm, k = np.log(norm), 1.0  # log ||A^k||
    estimate = norm
    for _ in range(max_doublings):
        B = B @ B
        s = np.linalg.norm(B, "fro")
        if s == 0:
            return 0.0  # nilpotent
        B /= s
        log_norm = 2 * log_norm + np.log(s)
        k *= 2
        new = float(np.exp(log_norm / k))
        if abs(new - estimate) <= tol * max(new, 1e-300):
            return new
        estimate = new
    raise NonConvergence("Gelfand iteration for the spectral radius did not converge")


def psi_matrix(space, budget, cap: int = 4096) -> np.ndarray:
    """diag(psi_i): failure probability on the best subcarrier of joint state i at full power."""
    from .phy import decode_failure_prob

    if space.size > cap:
        raise JointSpaceTooLarge(f"joint channel space has {space.size} states, cap is {cap}")
    best = space.power_gains[space.all_digits()].max(axis=1)
    psi = np.atleast_1d(decode_failure_prob(budget, best * budget.p_max / budget.sigma2))
    return np.diag(psi)


@dataclass
class StabilityReport:
    rho: list
    lambda_: list
    sufficient_value: float  # max rho^2 * max lambda
    necessary_value: float  # max rho^2 lambda
    sufficient_holds: bool
    necessary_holds: bool

    @property
    def sufficient_margin(self) -> float:
        return 1.0 - self.sufficient_value

    @property
    def necessary_margin(self) -> float:
        return 1.0 - self.necessary_value

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        d["sufficient_margin"] = self.sufficient_margin
        d["necessary_margin"] = self.necessary_margin
        return d


def report_from_values(rho, lam) -> StabilityReport:
    rho = np.asarray(rho, dtype=float)
    lam = np.asarray(lam, dtype=float)
    suff = float(np.max(rho**2) * np.max(lam))
    nec = float(np.max(rho**2 * lam))
    return StabilityReport(rho=rho.tolist(), lambda_=lam.tolist(), sufficient_value=suff,
                           necessary_value=nec, sufficient_holds=suff < 1, necessary_holds=nec < 1)


def check_stability(plants, channel_models, space, budget, cap: int = 4096) -> StabilityReport:
    """Evaluate both conditions.

    ``plants`` are objects with an ``A`` matrix; ``channel_models`` give each
    sensor's per-subcarrier matrices (a MarkovChannelModel or a plain list).
    """
    from .channel import joint_transition

    if len(plants) != len(channel_models):
        raise ValueError("need one channel model per plant")
    psi = psi_matrix(space, budget, cap=cap)
    rho = [spectral_radius(p.A) for p in plants]
    lam = []
    for ch in channel_models:
        mats = getattr(ch, "per_channel_T", ch)
        lam.append(spectral_radius(psi @ joint_transition(mats, cap=cap)))
    return report_from_values(rho, lam)
