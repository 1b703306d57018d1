import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from remest.channel import ChannelStateSpace, MarkovChannelModel, generate_random_transition, joint_transition
from remest.errors import JointSpaceTooLarge
from remest.estimation import PlantModel
from remest.phy import LinkBudget, decode_failure_prob
from remest.stability import check_stability, psi_matrix, report_from_values, spectral_radius

BUDGET = LinkBudget.from_dbm()
GAMMA_EPS_02 = 3.2381448476410233


def _charpoly_radius(A):
    """Independent oracle: exact characteristic polynomial, high-precision roots."""
    M = sympy.Matrix(A.shape[0], A.shape[1], [sympy.Rational(float(x)) for x in A.ravel()])
    coeffs = M.charpoly().all_coeffs()
    with mpmath.workdps(50):
        roots = mpmath.polyroots([mpmath.mpf(sympy.Rational(c).p) / sympy.Rational(c).q for c in coeffs],
                                 maxsteps=400, extraprec=300)
        return float(max(abs(r) for r in roots))


def test_diag_and_rotation():
    assert spectral_radius(np.diag([1.2, 0.5])) == pytest.approx(1.2, abs=1e-12)
    t = 0.7
    R = 0.9 * np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    assert spectral_radius(R) == pytest.approx(0.9, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_random_5x5_against_charpoly(seed):
    A = np.random.default_rng(seed).standard_normal((5, 5))
    assert spectral_radius(A) == pytest.approx(_charpoly_radius(A), abs=1e-8)


def test_gelfand_branch_large_matrix():
    r = np.random.default_rng(1)
    P = np.abs(r.standard_normal((80, 80)))
    P /= P.sum(axis=1, keepdims=True)
    D = np.diag(r.uniform(0.1, 0.4, 80))
    # non-negative matrix: Perron root is real and dominant, Gelfand converges
    ref = np.max(np.abs(np.linalg.eigvals(D @ P)))
    assert spectral_radius(D @ P, tol=1e-12) == pytest.approx(ref, rel=1e-6)


def test_psi_examples():
    perfect = ChannelStateSpace((1.0,), 1)
    np.testing.assert_array_equal(psi_matrix(perfect, BUDGET), [[0.0]])
    g = GAMMA_EPS_02 * BUDGET.sigma2 / BUDGET.p_max
    assert psi_matrix(ChannelStateSpace((g,), 1), BUDGET)[0, 0] == pytest.approx(0.2, abs=1e-12)
    gains = (1e-9 * 3.0, 1e-9 * 3.5)
    psi = psi_matrix(ChannelStateSpace(gains, 2), BUDGET)
    eps = decode_failure_prob(BUDGET, np.array(gains) * BUDGET.p_max / BUDGET.sigma2)
    # joint states (d1, d2): 0=(0,0) 1=(1,0) 2=(0,1) 3=(1,1)
    np.testing.assert_allclose(np.diag(psi), [eps[0], eps[1], eps[1], eps[1]], rtol=1e-14)
    with pytest.raises(JointSpaceTooLarge):
        psi_matrix(ChannelStateSpace(tuple(range(1, 9)), 5), BUDGET)


def test_static_scalar_condition():
    g = GAMMA_EPS_02 * BUDGET.sigma2 / BUDGET.p_max
    space = ChannelStateSpace((g,), 1)
    plant = PlantModel(A=[[1.2]], C=[[1.0]], W=[[1.0]], V=[[1.0]])
    rep = check_stability([plant], [[np.eye(1)]], space, BUDGET)
    assert rep.sufficient_value == pytest.approx(0.288, abs=1e-10)
    assert rep.sufficient_holds and rep.necessary_holds


def test_gap_between_conditions():
    rep = report_from_values([1.29, 1.01], [0.4, 0.7])
    assert rep.necessary_holds and not rep.sufficient_holds
    assert rep.necessary_value == pytest.approx(max(1.29**2 * 0.4, 1.01**2 * 0.7))
    assert rep.sufficient_value == pytest.approx(1.6641 * 0.7)
    d = rep.to_dict()
    assert d["lambda"] == [0.4, 0.7] and "lambda_" not in d


def test_perfect_channels_give_zero_lambda(rng):
    space = ChannelStateSpace((1e-2, 1e-1), 2)
    models = [MarkovChannelModel(space, [generate_random_transition(2, rng) for _ in range(2)]) for _ in range(3)]
    plants = [PlantModel(A=[[r]], C=[[1.0]], W=[[1.0]], V=[[1.0]]) for r in (1.1, 5.0, 30.0)]
    rep = check_stability(plants, models, space, BUDGET)
    assert rep.lambda_ == [0.0, 0.0, 0.0] and rep.sufficient_holds


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), H=st.integers(1, 4), M=st.integers(1, 3))
def test_random_instance_invariants(seed, H, M):
    r = np.random.default_rng(seed)
    gains = tuple(np.sort(r.uniform(2.0, 6.0, H)) * BUDGET.sigma2 / BUDGET.p_max)
    if len(set(gains)) < H:
        return
    space = ChannelStateSpace(gains, M)
    N = 3
    mats = [[generate_random_transition(H, r) for _ in range(M)] for _ in range(N)]
    plants = [PlantModel(A=[[x]], C=[[1.0]], W=[[1.0]], V=[[1.0]]) for x in r.uniform(1.0, 1.3, N)]
    rep = check_stability(plants, mats, space, BUDGET)
    psi = np.diag(psi_matrix(space, BUDGET))
    assert max(rep.lambda_) <= psi.max() + 1e-12
    assert (not rep.sufficient_holds) or rep.necessary_holds
    assert rep.sufficient_value >= rep.necessary_value - 1e-15
    # more power never raises any lambda
    louder = LinkBudget(BUDGET.p_max * 1.5, BUDGET.sigma2, BUDGET.bits, BUDGET.blocklen)
    rep2 = check_stability(plants, mats, space, louder)
    assert all(b <= a + 1e-12 for a, b in zip(rep.lambda_, rep2.lambda_))


def test_lambda_is_radius_of_psi_times_joint(rng):
    space = ChannelStateSpace((1e-9 * 3.0, 1e-9 * 3.4, 1e-9 * 4.0), 2)
    mats = [generate_random_transition(3, rng) for _ in range(2)]
    plant = PlantModel(A=[[1.1]], C=[[1.0]], W=[[1.0]], V=[[1.0]])
    rep = check_stability([plant], [mats], space, BUDGET)
    expected = np.max(np.abs(np.linalg.eigvals(psi_matrix(space, BUDGET) @ joint_transition(mats))))
    assert rep.lambda_[0] == pytest.approx(expected, rel=1e-12)
