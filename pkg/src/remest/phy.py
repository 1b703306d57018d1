"""Short-packet decoding failure and the three receiver models.

* OMA: one sensor per subcarrier, SNR = g * P_max / sigma^2.
* SIC: sensors sharing a subcarrier are decoded strongest-first; each packet
  sees the not-yet-decoded ones as interference and the chain stops at the
  first failure.
* IRC-SIC: sensors spread power over all subcarriers; each round the receiver
  combines across subcarriers with the interference-rejection combiner,
  decodes the sensor with the best SINR and cancels it.

All powers are linear (mW). Decoding outcomes are sampled sequentially so a
failure early in a chain takes every later sensor in that chain with it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import ConstraintViolation, PowerBudgetViolation

LOG2E = np.log2(np.e)


def dbm_to_mw(dbm: float) -> float:
    return float(10.0 ** (dbm / 10.0))


@dataclass(frozen=True)
class LinkBudget:
    p_max: float  # mW
    sigma2: float  # mW
    bits: float
    blocklen: int

    def __post_init__(self):
        if min(self.p_max, self.sigma2, self.bits) <= 0 or self.blocklen < 1:
            raise ValueError("link budget entries must be positive")

    @classmethod
    def from_dbm(cls, p_max_dbm: float = 23.0, noise_dbm: float = -60.0, code_rate: float = 2.0,
                 blocklen: int = 200) -> "LinkBudget":
        return cls(p_max=dbm_to_mw(p_max_dbm), sigma2=dbm_to_mw(noise_dbm),
                   bits=code_rate * blocklen, blocklen=blocklen)

    @property
    def rate(self) -> float:
        return self.bits / self.blocklen


@dataclass
class DecodeOutcome:
    """Per-sensor result of one slot.

    ``attempted`` marks sensors that transmitted; ``success`` is False for
    everyone else. ``order`` lists attempted sensors in the order the receiver
    tried them and ``sinr_trace`` the SINR each was decoded at (sensors cut off
    by an earlier failure in their chain get NaN).
    """

    success: np.ndarray
    attempted: np.ndarray
    order: list = field(default_factory=list)
    sinr_trace: list = field(default_factory=list)


def q_function(x):
    """Gaussian upper tail probability Q(x) = P(Z > x)."""
    q = 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))
    q = np.clip(q, 0.0, 1.0)
    return float(q) if np.ndim(q) == 0 else q


def decode_failure_prob(budget: LinkBudget, gamma):
    """Normal-approximation block error rate at SNR/SINR ``gamma``.

    eps = Q((C(gamma) - b/l) / sqrt(V(gamma)/l)); gamma = 0 gives 1.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("SNR must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        cap = np.log2(1.0 + g)
        disp = (1.0 - (1.0 + g) ** -2) * LOG2E**2
        arg = (cap - budget.rate) / np.sqrt(disp / budget.blocklen)
    eps = np.where(g > 0, q_function(np.where(g > 0, arg, 0.0)), 1.0)
    # gamma -> inf: arg -> inf; q_function already handles inf
    return float(eps) if eps.ndim == 0 else eps


def _bernoulli_success(budget, sinr, rng) -> bool:
    return bool(rng.random() >= decode_failure_prob(budget, sinr))


def oma_receive(budget: LinkBudget, assignment: np.ndarray, gains: np.ndarray,
                rng: np.random.Generator) -> DecodeOutcome:
    """Scenario 1: every scheduled sensor owns its subcarrier outright.

    ``assignment`` is the N x M binary matrix D, ``gains`` the N x M power gains.
    """
    D = np.asarray(assignment)
    G = np.asarray(gains, dtype=float)
    if D.shape != G.shape:
        raise ConstraintViolation(f"assignment shape {D.shape} does not match gains {G.shape}")
    if np.any((D != 0) & (D != 1)):
        raise ConstraintViolation("assignment entries must be 0 or 1")
    if np.any(D.sum(axis=0) > 1):
        raise ConstraintViolation("a channel is allocated to more than one sensor")
    if np.any(D.sum(axis=1) > 1):
        raise ConstraintViolation("a sensor is allocated more than one channel")
    N = D.shape[0]
    attempted = D.sum(axis=1) == 1
    success = np.zeros(N, dtype=bool)
    # channel order keeps sampling deterministic
    chans = np.flatnonzero(D.sum(axis=0))
    users = np.argmax(D[:, chans], axis=0)
    snr = G[users, chans] * budget.p_max / budget.sigma2
    eps = np.atleast_1d(decode_failure_prob(budget, snr))
    success[users] = rng.random(users.size) >= eps
    return DecodeOutcome(success=success, attempted=attempted, order=users.tolist(), sinr_trace=snr.tolist())


def _check_sic_action(channel, power, gains, p_max):
    channel = np.asarray(channel)
    power = np.asarray(power, dtype=float)
    G = np.asarray(gains, dtype=float)
    N, M = G.shape
    if channel.shape != (N,) or power.shape != (N,):
        raise ConstraintViolation("channel choice and power must have one entry per sensor")
    if np.any(channel < 0) or np.any(channel > M) or np.any(channel != np.round(channel)):
        raise ConstraintViolation("channel choice must be an integer in 0..M")
    if np.any(power < 0) or np.any(power > p_max * (1 + 1e-12)):
        raise PowerBudgetViolation("transmit power outside [0, P_max]")
    return channel.astype(np.int64), power, G


def sic_decode_chains(budget: LinkBudget, channel, power, gains):
    """Decode order and SINR per subcarrier for SIC.

    Returns ``{m: (sensors, sinrs)}`` with m 1-based; sensors sorted by
    received power descending, ties by sensor index.
    """
    channel, power, G = _check_sic_action(channel, power, gains, budget.p_max)
    chains = {}
    for m in range(1, G.shape[1] + 1):
        users = np.flatnonzero((channel == m) & (power > 0))
        if users.size == 0:
            continue
        prx = G[users, m - 1] * power[users]
        order = np.lexsort((users, -prx))
        users, prx = users[order], prx[order]
        # interference from everyone decoded later on the same subcarrier
        tail = np.concatenate([np.cumsum(prx[::-1])[::-1][1:], [0.0]])
        chains[m] = (users, prx / (tail + budget.sigma2))
    return chains


def sic_receive(budget: LinkBudget, channel, power, gains, rng: np.random.Generator) -> DecodeOutcome:
    """Scenario 2: SIC on each subcarrier.

    ``channel[n]`` is 0 for idle or the 1-based subcarrier of sensor n,
    ``power[n]`` its transmit power in mW; a zero-power sensor is idle.
    """
    chains = sic_decode_chains(budget, channel, power, gains)
    N = np.asarray(gains).shape[0]
    success = np.zeros(N, dtype=bool)
    attempted = np.zeros(N, dtype=bool)
    order, trace = [], []
    for m in sorted(chains):
        users, sinrs = chains[m]
        eps = np.atleast_1d(decode_failure_prob(budget, sinrs))
        alive = np.cumprod(rng.random(users.size) >= eps).astype(bool)
        attempted[users] = True
        success[users] = alive
        order.extend(users.tolist())
        # a sensor is decoded at its SINR only if every predecessor succeeded
        reached = np.concatenate([[True], alive[:-1]])
        trace.extend(np.where(reached, sinrs, np.nan).tolist())
    return DecodeOutcome(success=success, attempted=attempted, order=order, sinr_trace=trace)


def sic_failure_probs(budget: LinkBudget, channel, power, gains) -> np.ndarray:
    """Marginal failure probability of every sensor under SIC, in closed form.

    For the k-th sensor in a subcarrier's decode order,
    eps_hat_k = sum_{j<=k} eps(gamma_j) * prod_{i<j} (1 - eps(gamma_i)).
    Idle sensors get 1.
    """
    chains = sic_decode_chains(budget, channel, power, gains)
    out = np.ones(np.asarray(gains).shape[0])
    for users, sinrs in chains.values():
        eps = np.atleast_1d(decode_failure_prob(budget, sinrs))
        survive = np.concatenate([[1.0], np.cumprod(1.0 - eps)[:-1]])
        out[users] = np.cumsum(eps * survive)
    return out


def irc_sinr(signatures: np.ndarray, sigma2: float, remaining=None) -> np.ndarray:
    """IRC SINR s_n^T (sigma2 I + sum_{i != n, i in remaining} s_i s_i^T)^-1 s_n.

    ``signatures`` is N x M with rows s_n = sqrt(p_n) * g_n. Returns SINRs for
    the sensors in ``remaining`` (all rows by default), in that order.
    """
    S = np.asarray(signatures, dtype=float)
    idx = np.arange(S.shape[0]) if remaining is None else np.asarray(remaining, dtype=np.int64)
    Sr = S[idx] / np.sqrt(sigma2)  # whiten so the covariance is I + ...
    K, M = Sr.shape
    others = 1.0 - np.eye(K)
    R = np.eye(M)[None] + np.einsum("ki,im,il->kml", others, Sr, Sr)
    L = np.linalg.cholesky(R)  # noise term keeps R positive definite
    z = np.linalg.solve(L, Sr[:, :, None])[:, :, 0]
    return np.einsum("km,km->k", z, z)


def _check_power_matrix(power_matrix, amplitudes, p_max):
    P = np.asarray(power_matrix, dtype=float)
    G = np.asarray(amplitudes, dtype=float)
    if P.shape != G.shape or P.ndim != 2:
        raise ConstraintViolation(f"power matrix {P.shape} and channel matrix {G.shape} must both be N x M")
    if np.any(P < 0):
        raise PowerBudgetViolation("negative transmit power")
    if np.any(P.sum(axis=1) > p_max + 1e-9):
        raise PowerBudgetViolation("a sensor's total power exceeds P_max")
    return P, G


def irc_sic_receive(budget: LinkBudget, power_matrix, amplitudes, rng: np.random.Generator) -> DecodeOutcome:
    """Scenario 3: multi-round IRC-SIC over all subcarriers jointly.

    Each round recomputes the IRC SINR of every undecoded sensor against the
    other undecoded ones, tries the best (ties by index) and stops at the first
    failure.
    """
    P, G = _check_power_matrix(power_matrix, amplitudes, budget.p_max)
    N = P.shape[0]
    S = np.sqrt(P) * G
    attempted = np.any(P > 0, axis=1)
    success = np.zeros(N, dtype=bool)
    remaining = [int(n) for n in np.flatnonzero(attempted)]
    order, trace = [], []
    while remaining:
        sinr = irc_sinr(S, budget.sigma2, remaining)
        k = int(np.argmax(sinr))  # first maximum is the lowest sensor index
        n = remaining.pop(k)
        order.append(n)
        trace.append(float(sinr[k]))
        if not _bernoulli_success(budget, sinr[k], rng):
            order.extend(remaining)
            trace.extend([float("nan")] * len(remaining))
            break
        success[n] = True
    return DecodeOutcome(success=success, attempted=attempted, order=order, sinr_trace=trace)
