import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from conftest import alternating

from mininfo import InfoBreakdown, ReactivePolicy, free_energy, information_costs, kl_divergence, marginal_policy
from mininfo import SolverOptions, solve
from mininfo.core import BeliefTable, _make_model
from mininfo.information import DivergenceError, distortion, pointwise_information
from mininfo.solver import ValueFunction, evaluate_state


def table(obs_marginals, n_states=1):
    om = np.atleast_2d(np.asarray(obs_marginals, dtype=float))
    T, O = om.shape
    return BeliefTable(om, np.full((T, O, n_states), 1.0 / n_states), om > 0)


def plugin_mi(joint):
    """I[x;y] from a joint table by the textbook formula."""
    joint = joint / joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / (px @ py)[nz])))


def test_uniform_policy_gives_uniform_marginals():
    pol = ReactivePolicy.uniform(3, 4, period=2)
    mg = marginal_policy(pol, table([[0.2, 0.3, 0.5], [0.6, 0.4, 0.0]]))
    np.testing.assert_allclose(mg.per_phase, 0.25)
    np.testing.assert_allclose(mg.phase_averaged, 0.25)


def test_phase_average_of_opposite_marginals():
    mg = marginal_policy(alternating(), table([[1.0], [1.0]]))
    np.testing.assert_allclose(mg.per_phase, [[0, 1], [1, 0]])
    np.testing.assert_allclose(mg.phase_averaged, [0.5, 0.5])
    assert mg.prior(0, clock_aware=False).tolist() == [0, 1]
    assert mg.prior(0, clock_aware=True).tolist() == [0.5, 0.5]


def test_marginals_reject_phase_mismatch():
    with pytest.raises(ValueError):
        marginal_policy(alternating(), table([[1.0]]))


def test_observation_independent_policy_has_no_information():
    pol = ReactivePolicy(np.array([[[0.3, 0.7], [0.3, 0.7]]]))
    bt = table([[0.4, 0.6]])
    info = information_costs(pol, bt, marginal_policy(pol, bt))
    assert info.obs_info == 0.0 and info.clock_info == 0.0


def test_identity_policy_one_bit():
    pol = ReactivePolicy(np.eye(2)[None])
    bt = table([[0.5, 0.5]])
    info = information_costs(pol, bt, marginal_policy(pol, bt))
    assert info.obs_info == pytest.approx(np.log(2), abs=1e-15)
    assert info.obs_info_bits == pytest.approx(1.0)
    assert info.clock_info == 0.0


def test_alternating_policy_is_pure_clock_information():
    bt = table([[1.0], [1.0]])
    pol = alternating()
    info = information_costs(pol, bt, marginal_policy(pol, bt))
    assert info.obs_info == 0.0
    assert info.clock_info == pytest.approx(np.log(2), abs=1e-15)
    assert info.total_bits == pytest.approx(1.0)


def random_case(seed, T, O, A, sparse=False):
    rng = np.random.default_rng(seed)
    alpha = 0.3 if sparse else 1.0
    k = rng.dirichlet(np.full(A, alpha), size=(T, O))
    if sparse:
        k = np.where(k < 0.05, 0.0, k)
        k /= k.sum(axis=2, keepdims=True)
    pol = ReactivePolicy(k)
    om = rng.dirichlet(np.ones(O), size=T)
    return pol, table(om)


cases = st.tuples(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.booleans())


@settings(max_examples=80, deadline=None)
@given(cases)
def test_obs_info_matches_plugin_mutual_information(case):
    seed, T, O, A, sparse = case
    pol, bt = random_case(seed, T, O, A, sparse)
    info = information_costs(pol, bt, marginal_policy(pol, bt))
    direct = np.mean([plugin_mi(bt.obs_marginals[t][:, None] * pol.kernels[t]) for t in range(T)])
    assert info.obs_info == pytest.approx(direct, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(cases)
def test_chain_rule_against_joint_over_phase_and_observation(case):
    seed, T, O, A, sparse = case
    pol, bt = random_case(seed, T, O, A, sparse)
    info = information_costs(pol, bt, marginal_policy(pol, bt))
    joint = (bt.obs_marginals[:, :, None] * pol.kernels / T).reshape(T * O, A)
    assert info.total == pytest.approx(plugin_mi(joint), abs=1e-12)
    assert info.total <= np.log(A) + np.log(T) + 1e-12
    assert info.obs_info >= 0 and info.clock_info >= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 4), st.integers(2, 4))
def test_clock_info_zero_iff_marginals_equal(seed, T, A):
    rng = np.random.default_rng(seed)
    row = rng.dirichlet(np.ones(A))
    same = ReactivePolicy(np.tile(row, (T, 1, 1)))
    bt = table(np.ones((T, 1)))
    assert information_costs(same, bt, marginal_policy(same, bt)).clock_info < 1e-12
    rows = rng.dirichlet(np.ones(A), size=T)
    rows[1] = rows[0][::-1] if not np.allclose(rows[0], rows[0][::-1]) else np.eye(A)[0]
    diff = ReactivePolicy(rows[:, None, :])
    assert information_costs(diff, bt, marginal_policy(diff, bt)).clock_info > 1e-12


def test_stationary_policy_has_no_clock_info(bot):
    pol = ReactivePolicy(np.random.default_rng(0).dirichlet(np.ones(4), size=(1, 4)))
    st_ = evaluate_state(bot, pol, 1.0)
    info = information_costs(pol, st_.beliefs, st_.marginals)
    assert info.clock_info == 0.0 and info.obs_info > 0


def test_kl_conventions():
    assert kl_divergence([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) > 0
    with pytest.raises(DivergenceError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


def test_free_energy_arithmetic():
    assert free_energy(InfoBreakdown(0.0, 0.0), -0.7, 3.0) == -0.7
    assert free_energy(InfoBreakdown(0.0, np.log(2)), -1.0, 1.0) == pytest.approx(np.log(2) - 1, abs=1e-15)
    # plain mode ignores the clock term
    assert free_energy(InfoBreakdown(0.1, np.log(2)), -1.0, 2.0, clock_aware=False) == pytest.approx(0.05 - 1)
    with pytest.raises(ValueError):
        free_energy(InfoBreakdown(0.0, 0.0), 0.0, 0.0)


@pytest.mark.parametrize("beta", [0.3, 1.0, 5.0])
def test_m2_uniform_free_energy(m2, beta):
    pol = ReactivePolicy.uniform(1, 2)
    s = evaluate_state(m2, pol, beta)
    info = information_costs(pol, s.beliefs, s.marginals)
    assert free_energy(info, -0.5, beta) == -0.5


def test_pointwise_information_averages_to_obs_info():
    pol, bt = random_case(1, 2, 3, 3)
    mg = marginal_policy(pol, bt)
    i = pointwise_information(pol, mg, clock_aware=False)
    avg = np.mean([np.sum(bt.obs_marginals[t][:, None] * pol.kernels[t] * i[t]) for t in range(2)])
    assert avg == pytest.approx(information_costs(pol, bt, mg).obs_info, abs=1e-14)
    ic = pointwise_information(pol, mg, clock_aware=True)
    avg = np.mean([np.sum(bt.obs_marginals[t][:, None] * pol.kernels[t] * ic[t]) for t in range(2)])
    assert avg == pytest.approx(information_costs(pol, bt, mg).total, abs=1e-14)


def test_distortion_zero_cost_zero_values():
    n = 3
    p = np.repeat(np.eye(n)[:, None, :], 2, axis=1)
    m = _make_model(tuple("abc"), ("x",), ("u", "v"), p, np.ones((n, 1)), np.zeros((n, 2)))
    d = distortion(m, table([[1.0]], n), ValueFunction(np.zeros((1, n)), np.zeros(1), True), 0)
    np.testing.assert_array_equal(d.values, 0.0)


def test_distortion_m2_uniform_belief(m2):
    bt = BeliefTable(np.ones((1, 1)), np.full((1, 1, 2), 0.5), np.ones((1, 1), bool))
    d = distortion(m2, bt, ValueFunction(np.zeros((1, 2)), np.zeros(1), True), 0)
    np.testing.assert_allclose(d.values, [[-0.5, -0.5]])


def test_distortion_masks_unseen_observations(m2):
    bt = BeliefTable(np.array([[1.0, 0.0]]), np.array([[[0.5, 0.5], [0.0, 0.0]]]), np.array([[True, False]]))
    m = _make_model(("L", "R"), ("x", "y"), m2.action_labels, m2.transition,
                    np.array([[1.0, 0.0], [1.0, 0.0]]), m2.cost)
    d = distortion(m, bt, ValueFunction(np.zeros((1, 2)), np.zeros(1), True), 0)
    assert np.isnan(d.values[1]).all() and np.isfinite(d.values[0]).all()


def test_robot_distortion_matches_triple_sum(bot):
    pol, state, _ = solve(bot, SolverOptions(beta=2.0))
    T = pol.period
    for t in range(T):
        d = distortion(bot, state.beliefs, state.values, t).values
        nu = state.values.nu[(t + 1) % T]
        naive = np.zeros((4, 4))
        for o in range(4):
            for a in range(4):
                for s in range(4):
                    b = state.beliefs.beliefs[t, o, s]
                    naive[o, a] += b * bot.cost[s, a]
                    for s2 in range(4):
                        naive[o, a] += b * bot.transition[s, a, s2] * nu[s2]
        np.testing.assert_allclose(d, naive, atol=1e-13)
