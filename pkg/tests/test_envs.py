import math

import numpy as np
import pytest

from aqe.envs import (
    Chain3Env,
    PendulumEnv,
    TabularMdp,
    angle_normalize,
    bellman_residual,
    make_env,
    make_random_mdp,
    parse_env_spec,
    q_pi_evaluation,
    value_iteration,
)
from aqe.errors import InvalidArgument, NumericError


def rk4_pendulum(theta, theta_dot, seconds, dt=1e-3, g=10.0, length=1.0):
    """Fine-step RK4 of theta'' = 3g/(2l) sin(theta), sampled every 0.05 s."""
    def f(th, w):
        return w, 3 * g / (2 * length) * math.sin(th)

    out = []
    per_sample = int(round(0.05 / dt))
    for i in range(int(round(seconds / dt))):
        k1 = f(theta, theta_dot)
        k2 = f(theta + dt / 2 * k1[0], theta_dot + dt / 2 * k1[1])
        k3 = f(theta + dt / 2 * k2[0], theta_dot + dt / 2 * k2[1])
        k4 = f(theta + dt * k3[0], theta_dot + dt * k3[1])
        theta += dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        theta_dot += dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if (i + 1) % per_sample == 0:
            out.append((theta, theta_dot))
    return out


def test_angle_normalize_range():
    assert angle_normalize(math.pi) == math.pi
    assert angle_normalize(-math.pi) == math.pi
    assert angle_normalize(3 * math.pi) == pytest.approx(math.pi)
    assert angle_normalize(0.5) == 0.5


def test_pendulum_upright_equilibrium():
    env = PendulumEnv(0)
    env.set_physical_state(0.0, 0.0)
    obs, r, term, trunc = env.step([0.0])
    assert r == 0.0 and not term and not trunc
    assert env.theta == 0.0 and env.theta_dot == 0.0
    assert np.array_equal(obs, [1.0, 0.0, 0.0])


def test_pendulum_hanging_reward():
    env = PendulumEnv(0)
    env.set_physical_state(math.pi, 0.0)
    _, r, _, _ = env.step([0.0])
    assert r == pytest.approx(-math.pi**2, abs=1e-12)


def test_pendulum_matches_fine_step_integrator():
    th0 = math.pi - 0.1
    env = PendulumEnv(0)
    env.set_physical_state(th0, 0.0)
    ref = rk4_pendulum(th0, 0.0, 1.0)
    assert len(ref) == 20
    for th, w in ref:
        env.step([0.0])
        assert abs(env.theta - th) < 1e-2
        assert abs(env.theta_dot - w) < 1e-2


def test_pendulum_clamps_and_truncates():
    env = PendulumEnv(0, horizon=5)
    env.reset()
    env.set_physical_state(1.0, 7.99)
    env.step([100.0])
    assert env.theta_dot == 8.0
    env.reset()
    flags = [env.step([0.0])[3] for _ in range(5)]
    assert flags == [False] * 4 + [True]
    a, b = PendulumEnv(0), PendulumEnv(0)
    a.set_physical_state(1.0, 0.0)
    b.set_physical_state(1.0, 0.0)
    a.step([5.0])
    b.step([2.0])
    assert a.theta == b.theta


def test_pendulum_reward_nonpositive_and_deterministic():
    rng = np.random.default_rng(0)
    for _ in range(500):
        th, w, u = rng.uniform(-4, 4), rng.uniform(-8, 8), rng.uniform(-2, 2)
        a, b = PendulumEnv(), PendulumEnv()
        a.set_physical_state(th, w)
        b.set_physical_state(th, w)
        ra = a.step([u])
        rb = b.step([u])
        assert ra[1] <= 0.0
        assert np.array_equal(ra[0], rb[0]) and ra[1] == rb[1]


def test_pendulum_reset_distribution_and_seeding():
    env = PendulumEnv(3)
    starts = np.array([(env.reset(), env.theta, env.theta_dot)[1:] for _ in range(2000)])
    assert np.all(starts[:, 0] > -math.pi) and np.all(starts[:, 0] <= math.pi)
    assert np.all(np.abs(starts[:, 1]) <= 1.0)
    a, b = PendulumEnv(9), PendulumEnv(9)
    assert np.array_equal(a.reset(), b.reset())


def test_pendulum_state_round_trip():
    env = PendulumEnv(1)
    env.reset()
    env.step([0.3])
    saved = env.get_state()
    nxt = env.step([0.1])
    other = PendulumEnv(99)
    other.set_state(saved)
    assert np.array_equal(other.step([0.1])[0], nxt[0])
    assert np.array_equal(other.reset(), env.reset())


def test_chain3_truncates_without_terminal():
    env = Chain3Env()
    env.reset()
    out = [env.step([0.0]) for _ in range(3)]
    assert [o[1] for o in out] == [1.0, 1.0, 1.0]
    assert [o[2] for o in out] == [False] * 3
    assert [o[3] for o in out] == [False, False, True]


def test_random_mdp_properties():
    m = make_random_mdp(5, 3, seed=4, reward_scale=2.0)
    assert np.all(np.abs(m.P.sum(-1) - 1) <= 1e-12) and np.all(m.P >= 0)
    assert np.all((m.R >= 0) & (m.R <= 2.0))
    m2 = make_random_mdp(5, 3, seed=4, reward_scale=2.0)
    assert np.array_equal(m.P, m2.P) and np.array_equal(m.R, m2.R)
    one = make_random_mdp(1, 1, seed=0)
    assert one.P.shape == (1, 1, 1) and one.P[0, 0, 0] == 1.0
    with pytest.raises(InvalidArgument):
        make_random_mdp(0, 2, seed=0)


def test_value_iteration_examples():
    m = TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.5)
    assert value_iteration(m)[0, 0] == pytest.approx(2.0, abs=1e-11)
    z = make_random_mdp(4, 2, seed=0)
    z.R[...] = 0
    assert np.all(value_iteration(z) == 0)
    r = make_random_mdp(5, 3, seed=1)
    q = value_iteration(r, tol=1e-10)
    assert bellman_residual(r, q) < 1e-10


def test_value_iteration_rejects_gamma_one():
    with pytest.raises(InvalidArgument):
        value_iteration(TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 1.0))
    with pytest.raises(NumericError):
        value_iteration(make_random_mdp(3, 2, seed=0, gamma=0.99), max_iter=5)


def test_q_pi_examples():
    m = make_random_mdp(5, 3, seed=2)
    q_star = value_iteration(m)
    greedy = np.eye(3)[q_star.argmax(1)]
    np.testing.assert_allclose(q_pi_evaluation(m, greedy), q_star, atol=1e-10)
    c = make_random_mdp(4, 3, seed=3)
    c.R[...] = 0.7
    uniform = np.full((4, 3), 1 / 3)
    np.testing.assert_allclose(q_pi_evaluation(c, uniform), 0.7 / (1 - 0.9), atol=1e-10)
    pi = np.random.default_rng(0).dirichlet(np.ones(3), size=5)
    q = q_pi_evaluation(m, pi, tol=1e-10)
    assert bellman_residual(m, q, pi) < 1e-10


def test_env_spec_parsing():
    assert parse_env_spec("pendulum") == ("pendulum", {})
    kind, kw = parse_env_spec("random_mdp:S=5,A=3,seed=7,gamma=0.5")
    assert kind == "random_mdp" and kw == {"S": 5, "A": 3, "seed": 7, "gamma": 0.5}
    assert isinstance(make_env("chain3"), Chain3Env)
    assert make_env("random_mdp:S=2,A=2").S == 2
    for bad in ("cartpole", "random_mdp:S=2", "random_mdp:S=2,A=2,foo=1"):
        with pytest.raises(InvalidArgument):
            parse_env_spec(bad)
