import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from remest.errors import ConstraintViolation, PowerBudgetViolation
from remest.phy import (
    LinkBudget,
    dbm_to_mw,
    decode_failure_prob,
    irc_sic_receive,
    irc_sinr,
    oma_receive,
    q_function,
    sic_decode_chains,
    sic_failure_probs,
    sic_receive,
)

BUDGET = LinkBudget.from_dbm(23.0, -60.0, 2.0, 200)
# mpmath oracles, 40 significant digits
EPS_AT_4 = 6.3916720403418461e-4
Q_AT_1 = 0.15865525393145705
GAMMA_EPS_02 = 3.2381448476410233  # eps(gamma) = 0.2


def test_q_function_values():
    assert q_function(0.0) == 0.5
    assert q_function(1.0) == pytest.approx(Q_AT_1, abs=1e-15)
    assert q_function(40.0) == 0.0
    assert q_function(np.inf) == 0.0
    assert q_function(-np.inf) == 1.0


def test_q_function_against_mpmath():
    mpmath = pytest.importorskip("mpmath")
    xs = np.linspace(-8, 8, 161)
    ref = np.array([float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2) for x in xs])
    np.testing.assert_allclose(q_function(xs), ref, atol=1e-15, rtol=1e-12)


def test_eps_exact_half():
    assert decode_failure_prob(BUDGET, 3.0) == pytest.approx(0.5, abs=1e-12)


def test_eps_at_4():
    assert decode_failure_prob(BUDGET, 4.0) == pytest.approx(EPS_AT_4, abs=1e-12)


def test_eps_limits():
    assert decode_failure_prob(BUDGET, 0.0) == 1.0
    assert decode_failure_prob(BUDGET, 1e12) == 0.0
    assert decode_failure_prob(BUDGET, GAMMA_EPS_02) == pytest.approx(0.2, abs=1e-12)
    with pytest.raises(ValueError):
        decode_failure_prob(BUDGET, -1.0)


def test_eps_strictly_decreasing_where_resolvable():
    g = np.linspace(2.0, 4.5, 1000)
    eps = decode_failure_prob(BUDGET, g)
    assert np.all(np.diff(eps) < 0)


def test_dbm_conversion():
    assert dbm_to_mw(23.0) == pytest.approx(199.52623149688796, rel=1e-15)
    assert BUDGET.sigma2 == pytest.approx(1e-6, rel=1e-15)
    assert BUDGET.rate == 2.0


def test_oma_snr_example(rng):
    D = np.array([[1]])
    out = oma_receive(BUDGET, D, np.array([[0.1]]), rng)
    assert out.sinr_trace[0] == pytest.approx(19952623.149688796, rel=1e-12)
    assert out.success[0]


def test_oma_zero_gain_fails(rng):
    out = oma_receive(BUDGET, np.array([[1, 0], [0, 0]]), np.array([[0.0, 1.0], [1.0, 1.0]]), rng)
    assert not out.success[0] and not out.attempted[1] and not out.success[1]


def test_oma_rejects_shared_channel(rng):
    with pytest.raises(ConstraintViolation):
        oma_receive(BUDGET, np.array([[1, 0], [1, 0]]), np.ones((2, 2)), rng)


def _gain_for_sinr(sinr):
    return sinr * BUDGET.sigma2 / BUDGET.p_max


def test_sic_single_equals_oma():
    g = np.array([[_gain_for_sinr(3.1)]])
    ch = sic_decode_chains(BUDGET, [1], [BUDGET.p_max], g)
    assert ch[1][1][0] == pytest.approx(3.1, rel=1e-12)
    a = sic_receive(BUDGET, [1], [BUDGET.p_max], g, np.random.default_rng(5))
    b = oma_receive(BUDGET, np.array([[1]]), g, np.random.default_rng(5))
    assert a.success[0] == b.success[0]


def test_sic_tie_rule():
    g = np.full((2, 1), 1e-6)
    users, sinr = sic_decode_chains(BUDGET, [1, 1], [BUDGET.p_max] * 2, g)[1]
    assert users.tolist() == [0, 1]
    prx = 1e-6 * BUDGET.p_max
    assert sinr[0] == pytest.approx(prx / (prx + BUDGET.sigma2), rel=1e-14)


def test_sic_zero_power_is_idle():
    g = np.full((2, 1), 1e-6)
    users, sinr = sic_decode_chains(BUDGET, [1, 1], [BUDGET.p_max, 0.0], g)[1]
    assert users.tolist() == [0]


def test_sic_order_follows_received_power(rng):
    g = rng.uniform(1e-9, 1e-7, size=(6, 2))
    ch = np.array([1, 2, 1, 1, 2, 1])
    p = rng.uniform(1, BUDGET.p_max, 6)
    for m, (users, _) in sic_decode_chains(BUDGET, ch, p, g).items():
        prx = g[users, m - 1] * p[users]
        assert np.all(np.diff(prx) <= 0)


def test_sic_chain_stops_at_failure(rng):
    g = np.array([[1e-12], [1e-5], [1e-6]])  # the weakest is doomed; strongest first
    for _ in range(50):
        out = sic_receive(BUDGET, [1, 1, 1], [BUDGET.p_max] * 3, g, rng)
        failed = [not out.success[n] for n in out.order]
        if any(failed):
            first = failed.index(True)
            assert all(failed[first:])


def test_sic_constraints(rng):
    with pytest.raises(ConstraintViolation):
        sic_receive(BUDGET, [3], [1.0], np.ones((1, 2)), rng)
    with pytest.raises(PowerBudgetViolation):
        sic_receive(BUDGET, [1], [BUDGET.p_max * 1.01], np.ones((1, 2)), rng)


def _three_sensor_config():
    # received powers chosen so each stage has a visibly non-trivial failure probability
    sinr_last = 3.3  # sensor decoded last sees only noise
    prx3 = sinr_last * BUDGET.sigma2
    prx2 = 3.2 * (prx3 + BUDGET.sigma2)
    prx1 = 3.15 * (prx2 + prx3 + BUDGET.sigma2)
    gains = np.array([[prx1], [prx2], [prx3]]) / BUDGET.p_max
    return gains


def test_sic_closed_form_matches_product_oracle():
    gains = _three_sensor_config()
    users, sinrs = sic_decode_chains(BUDGET, [1, 1, 1], [BUDGET.p_max] * 3, gains)[1]
    eps = decode_failure_prob(BUDGET, sinrs)
    oracle = 1.0 - np.cumprod(1.0 - eps)  # survive every stage up to and including n
    np.testing.assert_allclose(sic_failure_probs(BUDGET, [1, 1, 1], [BUDGET.p_max] * 3, gains)[users],
                               oracle, rtol=1e-13)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_irc_column_permutation_invariance(seed):
    r = np.random.default_rng(seed)
    S = r.uniform(0, 1e-3, size=(4, 3))
    perm = r.permutation(3)
    np.testing.assert_allclose(irc_sinr(S, 1e-6), irc_sinr(S[:, perm], 1e-6), rtol=1e-9)


def test_irc_single_sensor_mrc():
    p = np.array([[50.0, 100.0, 20.0]])
    a = np.array([[1e-4, 3e-4, 2e-4]])
    expected = np.sum(p * a * a) / BUDGET.sigma2
    assert irc_sinr(np.sqrt(p) * a, BUDGET.sigma2)[0] == pytest.approx(expected, rel=1e-12)


def test_irc_reduces_to_sic_for_one_channel():
    p = np.array([[150.0], [80.0]])
    a = np.array([[2e-4], [1e-4]])
    sinr = irc_sinr(np.sqrt(p) * a, BUDGET.sigma2)
    assert sinr[0] == pytest.approx(p[0, 0] * a[0, 0] ** 2 / (p[1, 0] * a[1, 0] ** 2 + BUDGET.sigma2), rel=1e-10)


def test_irc_remaining_subset():
    r = np.random.default_rng(3)
    S = r.uniform(0, 1e-3, size=(5, 3))
    np.testing.assert_allclose(irc_sinr(S, 1e-6, [1, 3]), irc_sinr(S[[1, 3]], 1e-6), rtol=1e-12)


def test_irc_receive_budget(rng):
    with pytest.raises(PowerBudgetViolation):
        irc_sic_receive(BUDGET, np.full((1, 2), BUDGET.p_max), np.ones((1, 2)), rng)


def test_irc_receive_idle_rows(rng):
    P = np.array([[0.0, 0.0], [BUDGET.p_max / 2, BUDGET.p_max / 2]])
    out = irc_sic_receive(BUDGET, P, np.full((2, 2), 1e-3), rng)
    assert out.order == [1] and not out.attempted[0] and out.success[1]


def test_irc_stops_after_failure():
    # two equal sensors on one subcarrier: the first sees SINR ~1 and fails
    P = np.full((2, 1), BUDGET.p_max)
    out = irc_sic_receive(BUDGET, P, np.full((2, 1), 1e-2), np.random.default_rng(0))
    assert out.order == [0, 1] and not out.success.any()
    assert np.isnan(out.sinr_trace[1])
