import numpy as np
import pytest

import gelato
from gelato import (AdamState, EnhancerConfig, MlpParams, TrainConfig,
                    adam_update, bce_loss, build_graph, compute_gradients,
                    forward_loss, init_mlp_params, npair_loss, split_edges,
                    standardize_scores, train)
from gelato.enhancer import select_augmentation_pairs
from gelato.errors import ConfigError
from gelato.splits import MaskedBatch
from gelato.trainer import flatten_params, grads_finite, unflatten_params

from conftest import make_attribute_sbm, random_attributes, random_graph


class TestNpairLoss:
    def test_equal_scores(self):
        assert npair_loss([0.0], [[0.0]]) == pytest.approx(np.log(2.0))

    def test_empty_negatives(self):
        assert npair_loss([1.5], [[]]) == 0.0

    def test_dominant_positive(self):
        assert npair_loss([10.0], [[0.0]]) == pytest.approx(
            np.log(1 + np.exp(-10.0)), rel=1e-9)
        assert npair_loss([10.0], [[0.0]]) == pytest.approx(4.54e-5, rel=1e-2)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        pos = rng.normal(size=4)
        negs = [rng.normal(size=3) for _ in range(4)]
        base = npair_loss(pos, negs)
        shifted = npair_loss(pos + 7.5, [n + 7.5 for n in negs])
        assert shifted == pytest.approx(base, rel=1e-12)

    def test_overflow_safety(self):
        assert np.isfinite(npair_loss([1000.0], [[990.0, 995.0]]))
        assert np.isfinite(npair_loss([-1000.0], [[-990.0]]))


class TestBceLoss:
    def test_half_probability(self):
        # a=0 head: sigmoid(0) = 0.5 against label 1
        assert bce_loss([0.0], [1.0], a=1.0, b=0.0) == pytest.approx(
            np.log(2.0))

    def test_perfect_separation_limit(self):
        loss = bce_loss([30.0, -30.0], [1.0, 0.0], a=1.0, b=0.0)
        assert loss < 1e-12

    def test_constant_probability_closed_form(self):
        # labels all 1, probability p = sigmoid(x) -> mean loss = -ln p
        x = 0.7
        p = 1 / (1 + np.exp(-x))
        got = bce_loss([x, x, x], [1.0, 1.0, 1.0])
        assert got == pytest.approx(-np.log(p), rel=1e-12)


class TestStandardize:
    def test_hand_computed(self):
        z = standardize_scores([1.0, 2.0, 3.0])
        expected = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0 / 3.0)
        np.testing.assert_allclose(z, expected, atol=1e-12)
        assert z[0] == pytest.approx(-1.2247, abs=1e-4)

    def test_constant_list(self):
        z = standardize_scores([4.2, 4.2, 4.2])
        np.testing.assert_array_equal(z, [0.0, 0.0, 0.0])

    def test_single_element(self):
        np.testing.assert_array_equal(standardize_scores([7.0]), [0.0])


class TestAdam:
    def test_zero_gradient_no_move(self):
        state = AdamState.zeros(3)
        p = np.array([1.0, -2.0, 0.5])
        p2 = adam_update(state, p, np.zeros(3), lr=0.1)
        np.testing.assert_array_equal(p, p2)

    def test_first_step_is_signed_lr(self):
        state = AdamState.zeros(2)
        p = np.zeros(2)
        g = np.array([0.3, -7.0])
        p2 = adam_update(state, p, g, lr=0.01)
        np.testing.assert_allclose(p2, -0.01 * np.sign(g), rtol=1e-6)

    def test_quadratic_descent(self):
        # f(x) = 0.5 * (x - 3)^2, two identical-gradient evaluations
        state = AdamState.zeros(1)
        x = np.array([0.0])
        f = lambda x: 0.5 * float((x[0] - 3.0) ** 2)
        values = [f(x)]
        for _ in range(50):
            x = adam_update(state, x, x - 3.0, lr=0.1)
            values.append(f(x))
        assert values[-1] < values[0]
        assert values[1] < values[0] and values[2] < values[1]

    def test_flatten_round_trip(self):
        params = init_mlp_params(3, hidden=4, seed=0)
        flat = flatten_params(params)
        back = unflatten_params(flat, 3, 4)
        np.testing.assert_array_equal(back.W1, params.W1)
        assert back.b2 == params.b2


from conftest import finite_difference_error as _fd_check
from conftest import gradcheck_instance as _gradcheck_instance


class TestGradients:
    def test_finite_difference_spot_checks(self):
        for seed, loss_kind in ((11, "npair"), (12, "bce")):
            parts = _gradcheck_instance(seed, loss_kind)
            assert _fd_check(*parts) < 1e-4

    def test_alpha_one_gives_zero_gradients(self):
        g, X, params, enh, cfg, batch, added, head = \
            _gradcheck_instance(13, "npair", with_aug=False)
        enh = EnhancerConfig(eta=0.0, alpha=1.0, beta=0.5,
                             self_loop_mode="all")
        _, grads = compute_gradients(g, X, params, enh, cfg, batch,
                                     added_pairs=added, training=False)
        for name in ("W1", "b1", "W2", "b2"):
            assert np.all(np.asarray(grads[name]) == 0.0)

    def test_duplicated_batch_doubles_loss_and_gradients(self):
        g, X, params, enh, cfg, batch, added, _ = \
            _gradcheck_instance(14, "npair")
        loss1, grads1 = compute_gradients(g, X, params, enh, cfg, batch,
                                          added_pairs=added, training=False)
        doubled = MaskedBatch(
            batch_pos=np.vstack([batch.batch_pos, batch.batch_pos]),
            residual_edges=batch.residual_edges,
            negatives=np.vstack([batch.negatives, batch.negatives]))
        # interleave so each copy keeps the same negative group
        P = len(batch.batch_pos)
        order = np.r_[np.arange(P), np.arange(P)]
        doubled.batch_pos = batch.batch_pos[order % P]
        loss2, grads2 = compute_gradients(g, X, params, enh, cfg, doubled,
                                          added_pairs=added, training=False)
        assert loss2 == pytest.approx(2 * loss1, rel=1e-9)
        for name in ("W1", "b1", "W2", "b2"):
            np.testing.assert_allclose(grads2[name], 2 * np.asarray(grads1[name]),
                                       rtol=1e-8, atol=1e-12)

    def test_gradients_with_dropout_match_fd(self):
        # counter-keyed masks are deterministic, so FD stays consistent
        g, X, params, enh, cfg, batch, added, _ = \
            _gradcheck_instance(15, "npair")
        cfg = TrainConfig(loss="npair", dropout=0.4, ac_t=cfg.ac_t,
                          hidden=cfg.hidden, epochs=1)
        loss, grads = compute_gradients(g, X, params, enh, cfg, batch,
                                        added_pairs=added, training=True)
        flat = flatten_params(params)
        analytic = flatten_params(
            MlpParams(grads["W1"], grads["b1"], grads["W2"], grads["b2"]))

        def f(vec):
            return forward_loss(g, X, unflatten_params(vec, X.r, cfg.hidden),
                                enh, cfg, batch, added_pairs=added,
                                training=True)

        idx = np.random.default_rng(0).choice(len(flat), 12, replace=False)
        for i in idx:
            up, down = flat.copy(), flat.copy()
            up[i] += 1e-5
            down[i] -= 1e-5
            fd = (f(up) - f(down)) / 2e-5
            denom = max(abs(fd), abs(analytic[i]), 1e-6)
            assert abs(fd - analytic[i]) / denom < 1e-4

    def test_direct_mlp_path_fd(self):
        g, X, params, enh, cfg, batch, added, _ = \
            _gradcheck_instance(16, "npair")
        cfg = TrainConfig(loss="npair", dropout=0.0, hidden=cfg.hidden,
                          epochs=1, direct_mlp=True)
        assert _fd_check(g, X, params, enh, cfg, batch, added, None) < 1e-4


def _sbm_setup(seed=0, n=60):
    g, X = make_attribute_sbm(n, seed, p_in=0.3, p_out=0.02)
    split = split_edges(g, (0.7, 0.15, 0.15), seed=seed)
    enh = EnhancerConfig(eta=0.0, alpha=0.0, beta=1.0, self_loop_mode="all")
    return g, X, split, enh


class TestTrainLoop:
    def test_history_bookkeeping(self):
        g, X, split, enh = _sbm_setup(0)
        cfg = TrainConfig(epochs=2, batch_count=3, seed=1, dropout=0.0,
                          ac_t=2, hidden=8, neg_cap=5)
        params, history = train(g, X, split, enh, cfg)
        assert [rec.epoch for rec in history] == [1, 2]
        for rec in history:
            assert np.isfinite(rec.loss)
            assert rec.skipped == 0
            assert 0.0 <= rec.valid_prec <= 1.0
        assert isinstance(params, MlpParams)

    def test_loss_decreases_on_separable_sbm(self):
        # net decrease over the first 10 epochs at the default rate
        g, X, split, enh = _sbm_setup(1, n=80)
        cfg = TrainConfig(epochs=10, batch_count=3, seed=2, lr=0.001,
                          dropout=0.0, ac_t=2, hidden=16, neg_cap=20)
        _, history = train(g, X, split, enh, cfg)
        assert history[-1].loss < history[0].loss

    def test_deterministic_histories(self):
        g, X, split, enh = _sbm_setup(2)
        cfg = TrainConfig(epochs=3, batch_count=3, seed=5, dropout=0.5,
                          ac_t=2, hidden=8, neg_cap=5)
        p1, h1 = train(g, X, split, enh, cfg)
        p2, h2 = train(g, X, split, enh, cfg)
        assert h1 == h2
        np.testing.assert_array_equal(p1.W1, p2.W1)
        np.testing.assert_array_equal(p1.W2, p2.W2)

    def test_no_trainable_parameters_rejected(self):
        g, X, split, _ = _sbm_setup(3)
        cfg = TrainConfig(epochs=1, batch_count=3, hidden=8)
        with pytest.raises(ConfigError, match="trainable"):
            train(g, X, split, EnhancerConfig(alpha=1.0, beta=0.5), cfg)
        with pytest.raises(ConfigError, match="trainable"):
            train(g, X, split, EnhancerConfig(alpha=0.5, beta=0.0), cfg)

    def test_epochs_zero_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)

    def test_invalid_gradient_batches_skipped(self, monkeypatch):
        import gelato.trainer as trainer_mod
        g, X, split, enh = _sbm_setup(4)
        cfg = TrainConfig(epochs=2, batch_count=3, seed=1, dropout=0.0,
                          ac_t=1, hidden=8, neg_cap=3)
        real = trainer_mod.compute_gradients
        state = {"calls": 0}

        def poisoned(*args, **kwargs):
            loss, grads = real(*args, **kwargs)
            state["calls"] += 1
            if state["calls"] % 2 == 1:  # every other batch goes bad
                grads["W1"] = grads["W1"] + np.nan
            return loss, grads

        monkeypatch.setattr(trainer_mod, "compute_gradients", poisoned)
        _, history = train(g, X, split, enh, cfg)
        assert [rec.skipped for rec in history] == [2, 1]
        assert all(np.isfinite(rec.loss) for rec in history)

    def test_grads_finite_detects_poison(self):
        assert grads_finite(1.0, {"W1": np.zeros(3), "b2": 0.5})
        assert not grads_finite(np.nan, {"W1": np.zeros(3)})
        assert not grads_finite(1.0, {"W1": np.array([1.0, np.inf])})
        assert not grads_finite(1.0, {"b2": float("nan")})

    def test_biased_regime_runs(self):
        g, X, split, enh = _sbm_setup(5)
        cfg = TrainConfig(loss="npair", regime="biased", epochs=2,
                          batch_count=3, seed=3, dropout=0.0, ac_t=2,
                          hidden=8)
        _, history = train(g, X, split, enh, cfg)
        assert len(history) == 2

    def test_bce_regime_runs(self):
        g, X, split, enh = _sbm_setup(6)
        cfg = TrainConfig(loss="bce", regime="unbiased", epochs=2,
                          batch_count=3, seed=3, dropout=0.0, ac_t=2,
                          hidden=8, neg_cap=5)
        _, history = train(g, X, split, enh, cfg)
        assert len(history) == 2

    def test_direct_mlp_training_runs(self):
        g, X, split, enh = _sbm_setup(7)
        cfg = TrainConfig(epochs=2, batch_count=3, seed=4, dropout=0.0,
                          hidden=8, neg_cap=5, direct_mlp=True)
        _, history = train(g, X, split, enh, cfg)
        assert len(history) == 2

    def test_best_epoch_selection(self):
        g, X, split, enh = _sbm_setup(8)
        cfg = TrainConfig(epochs=4, batch_count=3, seed=6, dropout=0.0,
                          ac_t=2, hidden=8, neg_cap=10)
        params, history = train(g, X, split, enh, cfg)
        best = max(history, key=lambda rec: rec.valid_prec)
        # the returned parameters reproduce the best epoch's validation score
        from gelato.trainer import _validation_prec
        got = _validation_prec(g, X, split, enh, cfg, params,
                               np.empty((0, 2), dtype=np.int64), None)
        assert got == pytest.approx(best.valid_prec)
