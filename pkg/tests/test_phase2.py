import numpy as np
import pytest

from dcss.config import DcssConfig
from dcss.data_io import gen_blobs
from dcss.errors import ConfigError, ContractError
from dcss.membership import kmeans_init, memberships
from dcss.nn import init_params, mlp_forward
from dcss.phase2 import (
    PairThresholds,
    Phase2State,
    assign,
    loss_m,
    loss_m_prime,
    pairwise_inner,
    phase2_epoch,
)

from conftest import (
    choose_clear_thresholds,
    grad_entry,
    pair_loss_value,
    param_coords,
    perturb_entry,
    random_simplex_rows,
)

THR = PairThresholds(0.8, 0.2)


class TestPairwiseInner:
    def test_identical_onehots_all_ones(self):
        rows = np.tile([1.0, 0.0, 0.0], (3, 1))
        assert np.array_equal(pairwise_inner(rows), np.ones((3, 3)))

    def test_orthogonal_onehots_zero_offdiag(self):
        rows = np.eye(3)
        s = pairwise_inner(rows)
        assert np.array_equal(s, np.eye(3))

    def test_worked_dot_product(self):
        s = pairwise_inner(np.array([[0.6, 0.4], [0.3, 0.7]]))
        assert abs(s[0, 1] - 0.46) <= 1e-15
        assert s[0, 1] == s[1, 0]

    def test_non_simplex_rejected(self):
        with pytest.raises(ContractError):
            pairwise_inner(np.array([[0.6, 0.6]]))

    def test_entries_in_unit_interval(self, rng):
        rows = random_simplex_rows(rng, 50, 5)
        s = pairwise_inner(rows)
        assert s.min() >= 0.0 and s.max() <= 1.0 + 1e-12


class TestLossM:
    def test_similar_pair_worked_case(self):
        p = np.array([[1.0, 0.0], [1.0, 0.0]])
        q = np.array([[0.5, 0.5], [0.5, 0.5]])
        report = loss_m(p, q, THR)
        # all 4 ordered pairs similar (p.p = 1), each contributes 1 - 0.5
        assert report.n_similar == 4 and report.n_dissimilar == 0
        assert abs(report.loss - 4 * 0.5) <= 1e-12

    def test_ambiguous_pair_contributes_nothing(self):
        # p.p = 0.5 between the thresholds
        a = np.sqrt(0.5)
        p = np.array([[a, 1 - a], [a, 1 - a]])
        s = pairwise_inner(p)
        assert 0.2 < s[0, 1] < 0.8
        q = random_simplex_rows(np.random.default_rng(0), 2, 2)
        report = loss_m(p, q, THR)
        # self-pairs may gate; the cross pair must not
        cross_expected = report.n_similar + report.n_dissimilar
        assert cross_expected <= 2  # only the two self-pairs can participate

    def test_dissimilar_pair_worked_case(self):
        p = np.array([[1.0, 0.0], [0.0, 1.0]])
        q = np.array([[0.6, 0.4], [0.3, 0.7]])
        report = loss_m(p, q, THR)
        # cross pairs are dissimilar (p.p=0), both orderings contribute q.q=0.46;
        # self-pairs are similar (p.p=1) and contribute 1-||q_i||^2 each
        self_terms = (1 - 0.6**2 - 0.4**2) + (1 - 0.3**2 - 0.7**2)
        assert abs(report.loss - (2 * 0.46 + self_terms)) <= 1e-12
        assert report.n_similar == 2 and report.n_dissimilar == 2

    def test_counts_sum_to_ordered_pairs(self, rng):
        p = random_simplex_rows(rng, 17, 4, alpha=0.3)
        q = random_simplex_rows(rng, 17, 4)
        report = loss_m(p, q, THR)
        assert report.n_similar + report.n_dissimilar + report.n_ambiguous == 17 * 17
        assert report.source == "u-space"

    def test_permutation_invariance(self, rng):
        p = random_simplex_rows(rng, 12, 3, alpha=0.3)
        q = random_simplex_rows(rng, 12, 3)
        perm = rng.permutation(12)
        a = loss_m(p, q, THR).loss
        b = loss_m(p[perm], q[perm], THR).loss
        assert abs(a - b) <= 1e-9

    def test_loss_nonnegative_and_zero_at_fixed_point(self):
        q = np.tile([0.0, 1.0, 0.0], (4, 1))
        report = loss_m(q, q, THR)
        assert report.loss == 0.0


class TestLossMPrime:
    def test_identical_onehots_zero_loss(self):
        q = np.tile([1.0, 0.0], (5, 1))
        report = loss_m_prime(q, THR)
        assert report.loss == 0.0
        assert report.n_similar == 25

    def test_two_orthogonal_groups_zero_loss(self):
        q = np.vstack([np.tile([1.0, 0.0], (3, 1)), np.tile([0.0, 1.0], (3, 1))])
        report = loss_m_prime(q, THR)
        # within-group pairs: 1-1=0; cross-group: q.q=0 counted dissimilar, adds 0
        assert report.loss == 0.0
        assert report.n_dissimilar == 18

    def test_soft_similar_pair_worked_case(self):
        q = np.array([[0.9, 0.1], [0.9, 0.1]])
        report = loss_m_prime(q, THR)
        # q.q = 0.82 >= 0.8 for all four ordered pairs: each adds 1 - 0.82
        assert abs(report.loss - 4 * (1 - 0.82)) <= 1e-12

    def test_counts_sum(self, rng):
        q = random_simplex_rows(rng, 9, 3, alpha=0.4)
        report = loss_m_prime(q, THR)
        assert report.n_similar + report.n_dissimilar + report.n_ambiguous == 81
        assert report.source == "q-space"


class TestPairLossGradients:
    def _nets(self, seed):
        encoder = init_params([3, 6, 2], ["relu", "linear"], seed=seed)
        mnet = init_params([2, 5, 3], ["relu", "softmax"], seed=seed + 1)
        return encoder, mnet

    @pytest.mark.parametrize("mode", ["u", "q"])
    def test_full_chain_gradients_match_fd(self, mode, rng):
        m = 1.5
        encoder, mnet = self._nets(21)
        batch = rng.normal(size=(5, 3))
        centers = rng.normal(size=(3, 2))
        u, enc_cache = mlp_forward(encoder, batch)
        q, mnet_cache = mlp_forward(mnet, u)
        if mode == "u":
            p = memberships(u, centers, m)
            thr = choose_clear_thresholds(p @ p.T)
            _, g_q = loss_m(p, q, thr, with_grad=True)
        else:
            thr = choose_clear_thresholds(q @ q.T)
            _, g_q = loss_m_prime(q, thr, with_grad=True)

        from dcss.nn import mlp_backward

        mnet_grads, g_u = mlp_backward(mnet, mnet_cache, g_q)
        enc_grads, _ = mlp_backward(encoder, enc_cache, g_u)

        h = 1e-6
        for which, net, grads in (("mnet", mnet, mnet_grads), ("enc", encoder, enc_grads)):
            for layer, kind, idx in param_coords(net):
                if which == "mnet":
                    up = pair_loss_value(
                        encoder, perturb_entry(net, layer, kind, idx, h), batch, centers, m, thr, mode
                    )
                    down = pair_loss_value(
                        encoder, perturb_entry(net, layer, kind, idx, -h), batch, centers, m, thr, mode
                    )
                else:
                    up = pair_loss_value(
                        perturb_entry(net, layer, kind, idx, h), mnet, batch, centers, m, thr, mode
                    )
                    down = pair_loss_value(
                        perturb_entry(net, layer, kind, idx, -h), mnet, batch, centers, m, thr, mode
                    )
                numeric = (up - down) / (2 * h)
                analytic = grad_entry(grads, layer, kind, idx)
                denom = max(abs(numeric), abs(analytic), 1e-6)
                assert abs(numeric - analytic) / denom <= 1e-4, (which, layer, kind, idx)


class TestPhase2Epoch:
    def _setup(self, k=2, n=60, seed=0, d=2):
        bundle = gen_blobs(k, n // k, dim=3, spread=0.4, separation=8.0, seed=seed)
        encoder = init_params([3, 8, d], ["relu", "linear"], seed=seed)
        mnet = init_params([d, 8, k], ["relu", "softmax"], seed=seed + 1)
        u, _ = mlp_forward(encoder, bundle.data)
        centers = kmeans_init(u, k, seed=seed)
        return bundle.data, Phase2State.fresh(encoder, mnet, centers)

    def test_supervision_switch_at_t2(self):
        data, state = self._setup()
        cfg = DcssConfig(k=2, d=2, t2=5, epochs_phase2=8, batch_size=32)
        rng = np.random.default_rng(1)
        sources = []
        for epoch in range(1, 9):
            state, report = phase2_epoch(data, state, cfg, rng, epoch)
            sources.append(report.source)
        assert sources == ["u-space"] * 5 + ["q-space"] * 3

    def test_centers_frozen_after_switch(self):
        data, state = self._setup()
        cfg = DcssConfig(k=2, d=2, t2=2, epochs_phase2=4, batch_size=32)
        rng = np.random.default_rng(1)
        state, _ = phase2_epoch(data, state, cfg, rng, 1)
        c1 = state.centers.copy()
        state, _ = phase2_epoch(data, state, cfg, rng, 2)
        c2 = state.centers.copy()
        assert not np.array_equal(c1, c2)  # refresh during u-supervised epochs
        state, _ = phase2_epoch(data, state, cfg, rng, 3)
        assert np.array_equal(state.centers, c2)  # frozen afterwards

    def test_maximal_ambiguity_region_freezes_nets(self):
        data, state = self._setup()
        cfg = DcssConfig(k=2, d=2, zeta=1.0, gamma=0.0, t2=2, epochs_phase2=4, batch_size=32)
        w_before = [w.copy() for w in state.mnet.weights]
        e_before = [w.copy() for w in state.encoder.weights]
        rng = np.random.default_rng(1)
        state, report = phase2_epoch(data, state, cfg, rng, 1)
        assert report.n_similar == 0 and report.n_dissimilar == 0
        assert all(np.array_equal(a, b) for a, b in zip(state.mnet.weights, w_before))
        assert all(np.array_equal(a, b) for a, b in zip(state.encoder.weights, e_before))

    def test_thresholds_validated(self):
        with pytest.raises(ConfigError):
            PairThresholds(0.2, 0.8)


class TestAssign:
    def test_argmax(self):
        assert assign(np.array([[0.1, 0.7, 0.2]]))[0] == 1

    def test_tie_breaks_low_index(self):
        assert assign(np.array([[0.5, 0.5]]))[0] == 0

    def test_onehot_rows(self):
        labels = np.array([2, 0, 1])
        q = np.eye(3)[labels]
        assert np.array_equal(assign(q), labels)
