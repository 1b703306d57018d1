import numpy as np
import pytest

from remest.actions import IrcAction, OmaAction, SicAction
from remest.env import RemoteEstimationEnv, TraceWriter
from remest.errors import ConstraintViolation, ResampleCapExceeded
from remest.instance import TABLE_GAINS, Instance, gen_instance
from remest.phy import LinkBudget

BUDGET = LinkBudget.from_dbm()
GAIN_EPS_HALF = 3.0 * BUDGET.sigma2 / BUDGET.p_max  # SNR 3 at full power


@pytest.fixture(scope="module")
def inst():
    return gen_instance(4, 2, BUDGET, np.random.default_rng(7), seed=7)


def test_reset(inst, rng):
    env = RemoteEstimationEnv(inst, 1)
    s = env.reset(rng)
    assert s.aoi.tolist() == [0, 0, 0, 0]
    assert s.digits.shape == (4, 2) and set(np.unique(s.gains)) <= set(TABLE_GAINS)


def test_reward_identity_and_aoi(inst, rng):
    for scenario in (1, 2, 3):
        env = RemoteEstimationEnv(inst, scenario)
        s = env.reset(rng)
        for _ in range(30):
            a = _random_legal(env, rng)
            nxt, r, out = env.step(s, a, rng)
            rows = np.arange(env.N)
            assert r == -np.sum(env.costs[rows, nxt.aoi])
            assert np.all(nxt.aoi >= 1)
            expected = np.where(out.success, 1, np.minimum(s.aoi + 1, env.tau_max))
            np.testing.assert_array_equal(nxt.aoi, expected)
            s = nxt


def _random_legal(env, rng):
    N, M = env.N, env.M
    if env.scenario == 1:
        D = np.zeros((N, M), dtype=int)
        D[rng.permutation(N)[:M], np.arange(M)] = 1
        return OmaAction(D)
    if env.scenario == 2:
        return SicAction(rng.integers(0, M + 1, N), rng.uniform(0, env.budget.p_max, N))
    w = rng.random((N, M))
    return IrcAction(env.budget.p_max * w / w.sum(axis=1, keepdims=True) * rng.random((N, 1)))


def test_all_succeed_gives_cost1(inst, rng):
    env = RemoteEstimationEnv(inst, 1)
    s = env.reset(rng)
    D = np.zeros((4, 2), dtype=int)
    D[0, 0] = D[1, 1] = 1
    nxt, r, _ = env.step(s, OmaAction(D), rng)  # every gain in the table decodes with certainty
    assert nxt.aoi.tolist() == [1, 1, 1, 1]
    assert r == -env.costs[:, 1].sum()


def test_idle_reward_decreases(inst, rng):
    env = RemoteEstimationEnv(inst, 1)
    s = env.reset(rng)
    idle = OmaAction(np.zeros((4, 2), dtype=int))
    prev = None
    for _ in range(10):
        s, r, _ = env.step(s, idle, rng)
        if prev is not None:
            assert r < prev
        prev = r
    assert s.aoi.tolist() == [10] * 4


def test_aoi_cap(inst, rng):
    env = RemoteEstimationEnv(inst, 1, tau_max=5)
    s = env.reset(rng)
    idle = OmaAction(np.zeros((4, 2), dtype=int))
    for _ in range(9):
        s, r, _ = env.step(s, idle, rng)
    assert s.aoi.max() == 5


def test_pre_timing(inst, rng):
    env = RemoteEstimationEnv(inst, 1, reward_timing="pre")
    s = env.reset(rng)
    _, r, _ = env.step(s, OmaAction(np.zeros((4, 2), dtype=int)), rng)
    assert r == -env.costs[:, 0].sum()


def test_determinism(inst):
    env = RemoteEstimationEnv(inst, 2)
    s = env.reset(np.random.default_rng(3))
    a = SicAction(np.array([1, 1, 2, 0]), np.full(4, 50.0))
    x = env.step(s, a, np.random.default_rng(9))
    y = env.step(s, a, np.random.default_rng(9))
    np.testing.assert_array_equal(x[0].aoi, y[0].aoi)
    np.testing.assert_array_equal(x[0].digits, y[0].digits)
    assert x[1] == y[1]


def test_wrong_scenario_action(inst, rng):
    env = RemoteEstimationEnv(inst, 1)
    with pytest.raises(ConstraintViolation):
        env.step(env.reset(rng), IrcAction(np.zeros((4, 2))), rng)


def _static_instance(gain, N=1, M=1, rho=1.2):
    from remest.estimation import PlantModel

    plants = [PlantModel(A=[[rho]], C=[[1.0]], W=[[1.0]], V=[[1.0]]) for _ in range(N)]
    return Instance(plants=plants, transitions=np.ones((N, M, 1, 1)), channel_values=(gain,), budget=BUDGET)


def test_half_success_rate(rng):
    env = RemoteEstimationEnv(_static_instance(GAIN_EPS_HALF), 1)
    s = env.reset(rng)
    act = OmaAction(np.array([[1]]))
    n = 10_000
    wins = 0
    for _ in range(n):
        s, _, out = env.step(s, act, rng)
        wins += int(out.success[0])
    assert abs(wins - n / 2) <= 3 * np.sqrt(n / 4)


def test_observation_encoding(inst):
    env = RemoteEstimationEnv(inst, 1)
    lo = env._state(np.zeros((4, 2), dtype=int), np.zeros(4, dtype=int))
    np.testing.assert_array_equal(env.encode_observation(lo), np.tile([-1.0, -1.0, 0.0], 4))
    hi = env._state(np.full((4, 2), 7), np.full(4, 50))
    np.testing.assert_allclose(env.encode_observation(hi), np.tile([1.0, 1.0, 1.0], 4), atol=1e-15)
    assert env.obs_dim == 12
    # a mid-log gain of 10^-4.5 sits at 0
    g = env._log_lo
    mid = 2.0 * (-4.5 - g) / env._log_span - 1.0
    assert mid == pytest.approx(0.0, abs=1e-12)


def test_scenario3_observation_uses_amplitudes(inst):
    env = RemoteEstimationEnv(inst, 3)
    np.testing.assert_allclose(env.space.values ** 2, TABLE_GAINS, rtol=1e-14)
    hi = env._state(np.full((4, 2), 7), np.full(4, 50))
    np.testing.assert_allclose(env.encode_observation(hi), 1.0, atol=1e-15)


def test_trace_writer(tmp_path, inst, rng):
    env = RemoteEstimationEnv(inst, 1)
    s = env.reset(rng)
    D = np.zeros((4, 2), dtype=int)
    D[2, 0] = 1
    with TraceWriter(tmp_path / "t.csv", 4) as tw:
        s, r, _ = env.step(s, OmaAction(D), rng)
        tw.write(0, OmaAction(D), r, s)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,action,reward,aoi_1,aoi_2,aoi_3,aoi_4"
    assert lines[1].startswith("0,3:1,")


def test_gen_instance_reproducible(tmp_path):
    a = gen_instance(3, 2, BUDGET, np.random.default_rng(11), seed=11)
    b = gen_instance(3, 2, BUDGET, np.random.default_rng(11), seed=11)
    a.save(tmp_path / "a.json")
    b.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    back = Instance.load(tmp_path / "a.json")
    np.testing.assert_array_equal(back.transitions, a.transitions)
    np.testing.assert_array_equal(back.plants[0].A, a.plants[0].A)
    assert a.stability["checked"] and a.stability["sufficient_holds"]


def test_gen_instance_perfect_channel_first_draw():
    rng = np.random.default_rng(0)
    inst = gen_instance(2, 1, BUDGET, rng, channel_values=(1e-1,), max_resamples=1)
    assert inst.stability["lambda"] == [0.0, 0.0]


def test_gen_instance_cap_exceeded():
    with pytest.raises(ResampleCapExceeded):
        gen_instance(1, 1, BUDGET, np.random.default_rng(0), channel_values=(GAIN_EPS_HALF,),
                     rho_range=(2.0, 2.1), plant_dim=1, max_resamples=50)


def test_gen_instance_gate_skipped_when_too_large(caplog):
    inst = gen_instance(6, 5, BUDGET, np.random.default_rng(0))
    assert inst.stability["checked"] is False
    assert "exceeds" in caplog.text
