import numpy as np
import pytest

from gigamae.information import (
    DiscreteJoint,
    conditional_mi_from_entropies,
    entropy,
    exact_mi,
    mutual_information,
    random_joint,
)


def random_joints(count, seed=0):
    """Random 3-variable joints with shapes up to 4x4x4, some with zero cells."""
    rng = np.random.default_rng(seed)
    for k in range(count):
        shape = tuple(int(s) for s in rng.integers(2, 5, size=3))
        joint = random_joint(shape, rng, concentration=float(rng.choice([0.2, 1.0, 5.0])))
        if k % 4 == 0:
            t = joint.table * (rng.random(shape) > 0.3)
            if t.sum() > 0:
                joint = DiscreteJoint(t / t.sum())
        yield joint


def chain_rule_gap(joint):
    lhs = exact_mi(joint, [[0], [1, 2]])
    rhs = exact_mi(joint, [[0], [2]]) + exact_mi(joint, [[0], [1]], given=[2])
    return abs(lhs - rhs)


def interaction_gap(joint):
    lhs = exact_mi(joint, [[0], [1], [2]])
    rhs = exact_mi(joint, [[0], [1]]) + exact_mi(joint, [[0], [2]]) - exact_mi(joint, [[0], [1, 2]])
    return abs(lhs - rhs)


class TestBasics:
    def test_independent_bits(self):
        assert exact_mi(DiscreteJoint(np.full((2, 2), 0.25)), [[0], [1]]) == 0.0

    def test_copied_bit(self):
        mi = exact_mi(DiscreteJoint(np.array([[0.5, 0.0], [0.0, 0.5]])), [[0], [1]])
        assert abs(mi - np.log(2)) < 1e-15

    def test_mass_check(self):
        with pytest.raises(ValueError):
            DiscreteJoint(np.array([0.5, 0.4]))
        with pytest.raises(ValueError):
            DiscreteJoint(np.array([1.5, -0.5]))

    def test_invalid_grouping(self):
        j = random_joint((2, 2, 2), 0)
        with pytest.raises(ValueError):
            exact_mi(j, [[0], [0, 1]])
        with pytest.raises(ValueError):
            exact_mi(j, [[0], [3]])
        with pytest.raises(ValueError):
            exact_mi(j, [[0]])

    def test_entropy_of_uniform(self):
        assert abs(entropy(DiscreteJoint(np.full((2, 3), 1 / 6)), [0, 1]) - np.log(6)) < 1e-14

    def test_kl_matches_entropy_form(self):
        for joint in random_joints(100, seed=1):
            a = mutual_information(joint, [0], [1], [2])
            b = conditional_mi_from_entropies(joint, [0], [1], [2])
            assert abs(a - b) < 1e-12

    def test_interaction_entropy_form(self):
        for joint in random_joints(100, seed=2):
            h = lambda *ax: entropy(joint, list(ax))
            want = h(0) + h(1) + h(2) - h(0, 1) - h(0, 2) - h(1, 2) + h(0, 1, 2)
            assert abs(exact_mi(joint, [[0], [1], [2]]) - want) < 1e-12


class TestChainRules:
    def test_hand_2x2x2(self):
        t = np.array([[[0.1, 0.05], [0.2, 0.05]], [[0.15, 0.1], [0.05, 0.3]]])
        assert chain_rule_gap(DiscreteJoint(t)) < 1e-12

    def test_chain_rule_random(self):
        assert max(chain_rule_gap(j) for j in random_joints(1000, seed=3)) < 1e-12

    def test_interaction_random(self):
        assert max(interaction_gap(j) for j in random_joints(1000, seed=4)) < 1e-12
