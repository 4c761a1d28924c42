"""Exact probability engine: construction, composition, functionals.

Expected values come from independent oracles written before the
assertions: brute-force loops over outcome tuples, hand Bayes arithmetic,
and direct formula evaluation.
"""

import math

import numpy as np
import pytest

from chainlab.errors import (
    AbsoluteContinuityViolated,
    AllZeroWeights,
    InvalidDistribution,
    NegativeWeight,
    SupportMismatch,
    UnknownAxis,
    ZeroEvidence,
)
from chainlab.instances import naive_tree_chain, random_chain
from chainlab.probability import (
    ConditionalTable,
    FiniteDistribution,
    JointDistribution,
    PipelineChain,
    assemble_joint,
    axis_distribution,
    condition,
    entropy,
    joint_entropy,
    kl_divergence,
    marginal,
    mutual_information,
    normalize,
)
from chainlab.rng import stream_rng


def brute_force_joint(chain):
    """Triple/quadruple loop oracle for the chain tensor."""
    nt, nx = len(chain.prior), len(chain.family.output_support)
    ny = len(chain.channel.output_support)
    if chain.restorer is None:
        t = np.zeros((nt, nx, ny))
        for a in range(nt):
            for b in range(nx):
                for c in range(ny):
                    t[a, b, c] = (
                        chain.prior.probs[a]
                        * chain.family.rows[a, b]
                        * chain.channel.rows[b, c]
                    )
        return t
    nz = len(chain.restorer.output_support)
    t = np.zeros((nt, nx, ny, nz))
    for a in range(nt):
        for b in range(nx):
            for c in range(ny):
                for d in range(nz):
                    t[a, b, c, d] = (
                        chain.prior.probs[a]
                        * chain.family.rows[a, b]
                        * chain.channel.rows[b, c]
                        * chain.restorer.rows[c, d]
                    )
    return t


def mi_by_enumeration(pair: np.ndarray) -> float:
    """Double-loop mutual information oracle in nats."""
    pa = pair.sum(axis=1)
    pb = pair.sum(axis=0)
    total = 0.0
    for i in range(pair.shape[0]):
        for j in range(pair.shape[1]):
            if pair[i, j] > 0:
                total += pair[i, j] * math.log(pair[i, j] / (pa[i] * pb[j]))
    return total


class TestNormalize:
    def test_symmetric_weights(self):
        d = normalize([2, 2])
        np.testing.assert_allclose(d.probs, [0.5, 0.5])

    def test_forced_proportions(self):
        d = normalize([1, 0, 3])
        np.testing.assert_allclose(d.probs, [0.25, 0.0, 0.75])

    def test_already_normalized_prior(self):
        d = normalize([0.8, 0.2])
        np.testing.assert_allclose(d.probs, [0.8, 0.2])

    def test_all_zero_rejected(self):
        with pytest.raises(AllZeroWeights):
            normalize([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(NegativeWeight):
            normalize([1.0, -0.1])


class TestDistributionInvariants:
    def test_sum_must_be_one(self):
        with pytest.raises(InvalidDistribution):
            FiniteDistribution((0, 1), np.array([0.6, 0.6]))

    def test_duplicate_labels_rejected(self):
        with pytest.raises(InvalidDistribution):
            FiniteDistribution((0, 0), np.array([0.5, 0.5]))

    def test_rows_must_normalize(self):
        with pytest.raises(InvalidDistribution):
            ConditionalTable((0,), (0, 1), np.array([[0.5, 0.4]]))


class TestAssembleJoint:
    def test_naive_tree_known_cells(self):
        """p(class1, x=1, y=1.5) = 0.8 * (1/3) * 0.4."""
        joint = assemble_joint(naive_tree_chain())
        assert abs(joint.prob_of(theta="class1", x=1, y=1.5) - 0.8 * (1 / 3) * 0.4) < 1e-15
        assert abs(joint.prob_of(x=1, y=1.5) - 0.10666666666666667) < 1e-15
        assert abs(joint.prob_of(x=4, y=1.5) - 0.06666666666666667) < 1e-15

    def test_identity_channel_delta_family_copies_prior(self):
        prior = normalize([0.3, 0.7], support=("a", "b"))
        family = ConditionalTable.deterministic(("a", "b"), (0, 1), {"a": 0, "b": 1})
        channel = ConditionalTable.deterministic((0, 1), (0, 1), {0: 0, 1: 1})
        joint = assemble_joint(PipelineChain(prior, family, channel))
        np.testing.assert_allclose(joint.prob_of(theta="a", x=0, y=0), 0.3)
        np.testing.assert_allclose(joint.prob_of(theta="b", x=1, y=1), 0.7)
        assert joint.prob_of(theta="a", x=1) == 0.0

    def test_matches_brute_force_loops(self):
        for i in range(20):
            chain = random_chain(stream_rng(11, i), 2, 3, 3, 3)
            joint = assemble_joint(chain)
            np.testing.assert_allclose(joint.tensor, brute_force_joint(chain), atol=1e-15)

    def test_support_mismatch_raises(self):
        prior = normalize([1, 1], support=("a", "b"))
        family = ConditionalTable.deterministic(("a", "b"), (0, 1), {"a": 0, "b": 1})
        channel = ConditionalTable.deterministic((5, 6), (0, 1), {5: 0, 6: 1})
        with pytest.raises(SupportMismatch):
            PipelineChain(prior, family, channel)


class TestMarginalCondition:
    def test_marginalizing_y_recovers_family(self):
        chain = naive_tree_chain()
        joint = assemble_joint(chain)
        pair = marginal(joint, ["theta", "x"])
        expected = chain.prior.probs[:, None] * chain.family.rows
        np.testing.assert_allclose(pair.tensor, expected, atol=1e-15)

    def test_naive_tree_ambiguous_measurement_mass(self):
        joint = assemble_joint(naive_tree_chain())
        y = axis_distribution(joint, "y")
        assert abs(y.prob_of(1.5) - (0.10666666666666667 + 0.06666666666666667)) < 1e-15

    def test_matches_loop_summation(self):
        joint = assemble_joint(random_chain(stream_rng(12, 0), 2, 3, 4, None))
        t = joint.tensor
        by_hand = np.zeros(t.shape[1])
        for b in range(t.shape[1]):
            for a in range(t.shape[0]):
                for c in range(t.shape[2]):
                    by_hand[b] += t[a, b, c]
        np.testing.assert_allclose(marginal(joint, ["x"]).tensor, by_hand, atol=1e-15)

    def test_marginal_axis_order_follows_request(self):
        joint = assemble_joint(random_chain(stream_rng(12, 1), 2, 3, 4, None))
        swapped = marginal(joint, ["x", "theta"])
        direct = marginal(joint, ["theta", "x"])
        np.testing.assert_allclose(swapped.tensor, direct.tensor.T)

    def test_unknown_axis(self):
        joint = assemble_joint(naive_tree_chain())
        with pytest.raises(UnknownAxis):
            marginal(joint, ["theta", "nope"])

    def test_condition_naive_tree_posterior(self):
        """Hand Bayes arithmetic: P(class1 | y=1.5) = 0.1067 / 0.1733."""
        joint = assemble_joint(naive_tree_chain())
        post = condition(joint, "y", 1.5)
        expected = 0.10666666666666667 / 0.17333333333333334
        assert abs(post.prob_of(theta="class1") - expected) < 1e-12
        assert abs(expected - 0.6157) < 5e-4

    def test_condition_on_invertible_channel_gives_point_mass(self):
        prior = normalize([0.4, 0.6], support=("a", "b"))
        family = ConditionalTable.deterministic(("a", "b"), (0, 1), {"a": 0, "b": 1})
        channel = ConditionalTable.deterministic((0, 1), ("u", "v"), {0: "u", 1: "v"})
        joint = assemble_joint(PipelineChain(prior, family, channel))
        post = condition(joint, "y", "u")
        np.testing.assert_allclose(axis_distribution(post, "x").probs, [1.0, 0.0])

    def test_condition_independent_joint_is_noop(self):
        t = np.full((2, 3), 1.0 / 6.0)
        joint = JointDistribution(("a", "b"), ((0, 1), (0, 1, 2)), t)
        post = condition(joint, "a", 0)
        np.testing.assert_allclose(post.tensor, np.full(3, 1.0 / 3.0))

    def test_zero_evidence(self):
        prior = normalize([1.0, 0.0], support=("a", "b"))
        family = ConditionalTable.deterministic(("a", "b"), (0, 1), {"a": 0, "b": 1})
        channel = ConditionalTable.deterministic((0, 1), (0, 1), {0: 0, 1: 1})
        joint = assemble_joint(PipelineChain(prior, family, channel))
        with pytest.raises(ZeroEvidence):
            condition(joint, "y", 1)

    def test_condition_then_mix_reconstructs_joint(self):
        joint = assemble_joint(random_chain(stream_rng(13, 0), 2, 3, 4, 3))
        y_axis = joint.axis_index("y")
        rebuilt = np.zeros_like(joint.tensor)
        y_dist = axis_distribution(joint, "y")
        for k, label in enumerate(joint.support_of("y")):
            p = y_dist.probs[k]
            if p == 0:
                continue
            sl = condition(joint, "y", label)
            rebuilt[:, :, k, :] = p * sl.tensor
        np.testing.assert_allclose(rebuilt, joint.tensor, atol=1e-12)


class TestInformationFunctionals:
    def test_entropy_fair_bit(self):
        assert entropy(FiniteDistribution((0, 1), np.array([0.5, 0.5])), base=2) == pytest.approx(1.0)

    def test_entropy_point_mass(self):
        assert entropy(FiniteDistribution((0, 1, 2), np.array([1.0, 0.0, 0.0]))) == 0.0

    def test_entropy_direct_formula(self):
        expected = -(0.8 * math.log2(0.8) + 0.2 * math.log2(0.2))
        got = entropy(FiniteDistribution((0, 1), np.array([0.8, 0.2])), base=2)
        assert got == pytest.approx(expected)
        assert got == pytest.approx(0.7219, abs=1e-4)

    def test_kl_zero_iff_equal(self):
        p = FiniteDistribution((0, 1), np.array([0.3, 0.7]))
        assert kl_divergence(p, p) == 0.0

    def test_kl_forced_value(self):
        p = FiniteDistribution((0, 1), np.array([1.0, 0.0]))
        q = FiniteDistribution((0, 1), np.array([0.5, 0.5]))
        assert kl_divergence(p, q, base=2) == pytest.approx(1.0)

    def test_kl_direct_formula(self):
        p = FiniteDistribution((0, 1), np.array([0.8, 0.2]))
        q = FiniteDistribution((0, 1), np.array([0.5, 0.5]))
        expected = 0.8 * math.log2(0.8 / 0.5) + 0.2 * math.log2(0.2 / 0.5)
        assert kl_divergence(p, q, base=2) == pytest.approx(expected)
        assert kl_divergence(p, q, base=2) == pytest.approx(0.2781, abs=1e-4)

    def test_kl_absolute_continuity(self):
        p = FiniteDistribution((0, 1), np.array([0.5, 0.5]))
        q = FiniteDistribution((0, 1), np.array([1.0, 0.0]))
        with pytest.raises(AbsoluteContinuityViolated):
            kl_divergence(p, q)

    def test_mi_product_joint_is_zero(self):
        t = np.outer([0.3, 0.7], [0.2, 0.5, 0.3])
        joint = JointDistribution(("a", "b"), ((0, 1), (0, 1, 2)), t)
        assert mutual_information(joint, "a", "b") == 0.0

    def test_mi_perfectly_correlated_bit(self):
        t = np.array([[0.5, 0.0], [0.0, 0.5]])
        joint = JointDistribution(("a", "b"), ((0, 1), (0, 1)), t)
        assert mutual_information(joint, "a", "b", base=2) == pytest.approx(1.0)

    def test_mi_matches_enumeration_oracle_and_dpi(self):
        joint = assemble_joint(naive_tree_chain())
        i_x = mutual_information(joint, "theta", "x")
        i_y = mutual_information(joint, "theta", "y")
        np.testing.assert_allclose(i_x, mi_by_enumeration(marginal(joint, ["theta", "x"]).tensor))
        np.testing.assert_allclose(i_y, mi_by_enumeration(marginal(joint, ["theta", "y"]).tensor))
        assert i_x >= i_y


class TestChainRuleProperties:
    def test_joint_entropy_chain_rule(self):
        """H(A,B) = H(A) + H(B|A) on random joints."""
        for i in range(30):
            rng = stream_rng(14, i)
            t = rng.dirichlet(np.ones(12)).reshape(3, 4)
            joint = JointDistribution(("a", "b"), (tuple(range(3)), tuple(range(4))), t)
            h_ab = joint_entropy(joint)
            pa = t.sum(axis=1)
            h_a = entropy(FiniteDistribution(tuple(range(3)), pa))
            h_b_given_a = sum(
                pa[k] * entropy(FiniteDistribution(tuple(range(4)), t[k] / pa[k]))
                for k in range(3)
                if pa[k] > 0
            )
            assert abs(h_ab - (h_a + h_b_given_a)) < 1e-9

    def test_mi_entropy_identity(self):
        """I(A;B) = H(A) + H(B) - H(A,B)."""
        for i in range(30):
            rng = stream_rng(15, i)
            t = rng.dirichlet(np.ones(12)).reshape(3, 4)
            joint = JointDistribution(("a", "b"), (tuple(range(3)), tuple(range(4))), t)
            h_a = entropy(FiniteDistribution(tuple(range(3)), t.sum(axis=1)))
            h_b = entropy(FiniteDistribution(tuple(range(4)), t.sum(axis=0)))
            assert abs(mutual_information(joint, "a", "b") - (h_a + h_b - joint_entropy(joint))) < 1e-9

    def test_dpi_on_random_chains(self):
        """Class information is monotone along every assembled chain."""
        for i in range(100):
            rng = stream_rng(16, i)
            chain = random_chain(rng, 2, 4, 4, 4)
            joint = assemble_joint(chain)
            i_x = mutual_information(joint, "theta", "x")
            i_y = mutual_information(joint, "theta", "y")
            i_z = mutual_information(joint, "theta", "xhat")
            assert i_x >= i_y - 1e-9
            assert i_y >= i_z - 1e-9


class TestSerialization:
    def test_distribution_round_trip_bit_exact(self):
        rng = stream_rng(17, 0)
        d = normalize(rng.random(7))
        back = FiniteDistribution.from_json(d.to_json())
        assert back.support == d.support
        assert back.probs.tobytes() == d.probs.tobytes()

    def test_joint_round_trip_bit_exact(self):
        joint = assemble_joint(random_chain(stream_rng(17, 1), 2, 3, 4, 3))
        back = JointDistribution.from_json(joint.to_json())
        assert back.axes == joint.axes
        assert back.tensor.tobytes() == joint.tensor.tobytes()

    def test_table_round_trip_bit_exact(self):
        chain = naive_tree_chain()
        back = ConditionalTable.from_json(chain.channel.to_json())
        assert back.rows.tobytes() == chain.channel.rows.tobytes()
