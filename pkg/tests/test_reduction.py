import numpy as np
import pytest

from mininfo import (
    ModelValidationError,
    RetentiveSetup,
    build_reduced_pomdp,
    check_equivalence,
    check_policy,
    embed_retentive_policy,
    model_to_dict,
    random_setup,
    two_state,
)
from mininfo.core import _make_model
from mininfo.dynamics import external_cost, stationary_phase_distributions
from mininfo.reduction import NULL_OBS, reduced_joint, retentive_joint, setup_from_dict


def small_setup(seed=0, K=2, S=2, O=2, A=2):
    return random_setup(np.random.default_rng(seed), K, S, O, A)


def switcher_setup():
    """Memory flips every step and control moves to the other side."""
    q = np.zeros((2, 1, 2))
    q[0, 0, 1] = q[1, 0, 0] = 1.0
    pi = np.array([[1.0, 0.0], [0.0, 1.0]])  # m0 -> left, m1 -> right
    return RetentiveSetup(two_state(), ("m0", "m1"), q, pi, np.array([1.0, 0.0]))


def test_sizes():
    red = build_reduced_pomdp(small_setup())
    assert red.model.shape == (4, 6, 4)
    assert red.model.n_phases == 2 and red.model.phases_per_step == 2
    assert red.model.obs_labels[2] == f"m0|{NULL_OBS}"


@pytest.mark.parametrize("dims", [(1, 1, 1, 1), (3, 2, 3, 1), (2, 3, 1, 3)])
def test_size_formulas(dims):
    K, S, O, A = dims
    red = build_reduced_pomdp(small_setup(1, *dims))
    assert red.model.shape == (K * S, K * (O + 1), K + A)


def test_phase_kernels_follow_the_construction():
    st = small_setup(4)
    red = build_reduced_pomdp(st)
    ph0, ph1 = red.model.phases
    b = st.base
    for m in range(2):
        for s in range(2):
            i = red.state_index(m, s)
            for o in range(2):
                assert ph0.observation[i, red.obs_index(m, o)] == b.observation[s, o]
            assert ph1.observation[i, red.obs_index(m, 2)] == 1.0
            for m2 in range(2):
                assert ph0.transition[i, red.memory_action(m2), red.state_index(m2, s)] == 1.0
            for a in range(2):
                for s2 in range(2):
                    assert ph1.transition[i, red.base_action(a), red.state_index(m, s2)] == b.transition[s, a, s2]
                assert ph1.cost[i, red.base_action(a)] == b.cost[s, a]
    assert np.all(ph0.cost == 0)
    assert red.model.allowed_actions.tolist() == [[True, True, False, False], [False, False, True, True]]


def test_single_memory_keeps_base_dynamics():
    st = small_setup(2, K=1)
    red = build_reduced_pomdp(st)
    ph1 = red.model.phases[1]
    A = st.base.n_actions
    np.testing.assert_array_equal(ph1.transition[:, 1:1 + A, :], st.base.transition)


def test_m2_base_kernels_stochastic():
    red = build_reduced_pomdp(switcher_setup())
    for ph in red.model.phases:
        np.testing.assert_allclose(ph.transition.sum(axis=2), 1.0)
        np.testing.assert_allclose(ph.observation.sum(axis=1), 1.0)


def test_label_collision_rejected():
    base = two_state()
    q = np.full((2, 1, 2), 0.5)
    st = RetentiveSetup(base, ("left", "m1"), q, np.full((2, 2), 0.5), np.array([0.5, 0.5]))
    with pytest.raises(ModelValidationError, match="collide"):
        build_reduced_pomdp(st)


def test_setup_validation():
    base = two_state()
    with pytest.raises(ModelValidationError):
        RetentiveSetup(base, ("a", "a"), np.full((2, 1, 2), 0.5), np.full((2, 2), 0.5), np.array([0.5, 0.5]))
    with pytest.raises(ModelValidationError):
        RetentiveSetup(base, ("a", "b"), np.full((2, 1, 2), 0.4), np.full((2, 2), 0.5), np.array([0.5, 0.5]))
    with pytest.raises(ModelValidationError):
        RetentiveSetup(base, ("a", "b"), np.full((2, 2, 2), 0.5), np.full((2, 2), 0.5), np.array([0.5, 0.5]))
    with pytest.raises(ModelValidationError, match="states"):
        setup_from_dict({"base": {}, "memory": ["a"]})
    with pytest.raises(ModelValidationError, match="control"):
        setup_from_dict({"base": model_to_dict(base), "memory": ["a"], "inference": [[[1.0]]]})


def test_embedding_is_a_valid_masked_period_two_policy():
    st = small_setup(7)
    red = build_reduced_pomdp(st)
    pol = check_policy(red.model, embed_retentive_policy(st, red))
    assert pol.period == 2
    assert pol.kernels[0, red.obs_index(1, 1), :2].tolist() == st.inference[1, 1].tolist()
    assert pol.kernels[1, red.obs_index(0, 2), 2:].tolist() == st.control[0].tolist()


def test_deterministic_and_uniform_embeddings():
    pol = embed_retentive_policy(switcher_setup())
    assert set(np.unique(pol.kernels)) == {0.0, 1.0}
    base = two_state()
    st = RetentiveSetup(base, ("a", "b"), np.full((2, 1, 2), 0.5), np.full((2, 2), 0.5), np.array([1.0, 0.0]))
    pol = embed_retentive_policy(st)
    np.testing.assert_array_equal(pol.kernels[0][:, :2], 0.5)
    np.testing.assert_array_equal(pol.kernels[0][:, 2:], 0.0)
    np.testing.assert_array_equal(pol.kernels[1][:, 2:], 0.5)


def test_single_memory_equivalence_is_exact():
    st = small_setup(3, K=1)
    rep = check_equivalence(st)
    assert rep.verdict and rep.deviation < 1e-15


def test_switcher_equivalence_and_cost():
    rep = check_equivalence(switcher_setup())
    assert rep.verdict and rep.deviation < 1e-12
    assert rep.retentive_cost == pytest.approx(-1.0, abs=1e-12)
    assert rep.reduced_cost == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_random_equivalence(seed):
    rep = check_equivalence(small_setup(seed))
    assert rep.deviation < 1e-9
    assert rep.retentive_cost == pytest.approx(rep.reduced_cost, abs=1e-12)


def test_joints_are_distributions():
    st = small_setup(5, 3, 2, 3, 2)
    J = retentive_joint(st)
    assert J.sum() == pytest.approx(1.0) and np.all(J >= 0)
    J2, leak = reduced_joint(build_reduced_pomdp(st), embed_retentive_policy(st))
    assert leak == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(J, J2, atol=1e-12)


def test_non_ergodic_setup_gets_diagnosis_only():
    n = 2
    p = np.repeat(np.eye(n)[:, None, :], 1, axis=1)
    base = _make_model(("a", "b"), ("x",), ("stay",), p, np.ones((n, 1)), np.zeros((n, 1)))
    st = RetentiveSetup(base, ("m",), np.ones((1, 1, 1)), np.ones((1, 1)), np.ones(1))
    rep = check_equivalence(st)
    assert rep.verdict is None and rep.deviation is None and "reducible" in rep.diagnosis


def test_penalty_mode_matches_mask_for_embedded_policy():
    st = small_setup(9)
    masked = build_reduced_pomdp(st, "mask")
    pen = build_reduced_pomdp(st, "penalty", penalty=5.0)
    assert pen.model.allowed_actions.all()
    pol = embed_retentive_policy(st, masked)
    for red in (masked, pen):
        d = stationary_phase_distributions(red.model, pol, method="direct")
        assert external_cost(red.model, pol, d) == pytest.approx(check_equivalence(st).retentive_cost, abs=1e-12)
    assert check_equivalence(st, reduced=pen).deviation < 1e-9


def test_penalty_mode_charges_wrong_action_type():
    pen = build_reduced_pomdp(small_setup(0), "penalty", penalty=3.0)
    ph0, ph1 = pen.model.phases
    assert np.all(ph0.cost[:, 2:] == 3.0) and np.all(ph1.cost[:, :2] == 3.0)
    with pytest.raises(ValueError):
        build_reduced_pomdp(small_setup(0), "soft")
