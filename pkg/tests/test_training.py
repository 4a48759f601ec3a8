"""Loss values against hand-computed fixtures, optimizer behavior, and the
training loop's determinism and early-stopping contract."""
from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import pytest

from negscope.corpus import build_vocab, encode_instances
from negscope.layers import CrfParams
from negscope.models import Tagger, cue_config, scope_config
from negscope.training import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    crf_nll,
    instance_loss_grads,
    model_inputs,
    softmax_seq_grads,
    step_decay,
    token_nll,
    train,
)
from helpers import assert_grad_close, synthetic_instances


class TestTokenNll:
    def test_perfect_prediction_costs_nothing(self):
        probs = np.eye(4)[[2, 0, 3]]
        assert token_nll(probs, [2, 0, 3]) == 0.0

    def test_uniform_prediction_costs_log_num_labels(self):
        probs = np.full((5, 4), 0.25)
        assert token_nll(probs, [0, 1, 2, 3, 0]) == pytest.approx(math.log(4))

    def test_hand_mixed_case(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75]])
        expected = (math.log(2) + math.log(4)) / 2
        assert token_nll(probs, [0, 0]) == pytest.approx(expected)

    def test_mask_drops_padded_positions(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75], [1.0, 0.0]])
        with_pad = token_nll(probs, [0, 0, 1], mask=[1, 1, 0])
        assert with_pad == pytest.approx((math.log(2) + math.log(4)) / 2)

    def test_zero_probability_is_clamped_with_warning(self, caplog):
        probs = np.array([[1.0, 0.0]])
        with caplog.at_level("WARNING", logger="negscope.training"):
            loss = token_nll(probs, [1])
        assert loss == pytest.approx(-math.log(1e-12))
        assert "clamped" in caplog.text

    def test_bad_rows_are_an_error(self):
        with pytest.raises(ValueError, match="sum to 1"):
            token_nll(np.array([[0.7, 0.7]]), [0])
        with pytest.raises(ValueError, match="keeps no positions"):
            token_nll(np.array([[0.5, 0.5]]), [0], mask=[0])


class TestSoftmaxSeqGrads:
    def test_loss_matches_token_nll_times_n(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(size=(4, 6))
        gold = rng.integers(4, size=6)
        loss, _ = softmax_seq_grads(scores, gold)
        probs = np.exp(scores - scores.max(axis=0))
        probs /= probs.sum(axis=0)
        assert loss == pytest.approx(6 * token_nll(probs.T, gold))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=(3, 5))
        gold = rng.integers(3, size=5)
        _, d_scores = softmax_seq_grads(scores, gold)
        assert_grad_close(lambda s: softmax_seq_grads(s, gold)[0], scores, d_scores)


class TestCrfNll:
    def test_uniform_scores_cost_n_log_num_labels(self):
        # every labeling ties, so the gold path holds 1/L^n of the mass
        crf = CrfParams(np.zeros((5, 5)))
        nll = crf_nll(np.zeros((3, 2)), crf, [1, 2])
        assert nll == pytest.approx(2 * math.log(3))

    def test_single_label_chain_is_certain(self):
        crf = CrfParams(np.zeros((3, 3)))
        assert crf_nll(np.array([[1.0, -2.0, 0.5]]), crf, [0, 0, 0]) == pytest.approx(0.0)

    def test_never_negative(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            crf = CrfParams(rng.normal(size=(6, 6)))
            emissions = rng.normal(size=(4, 5))
            gold = rng.integers(4, size=5)
            assert crf_nll(emissions, crf, gold) >= -1e-12


class TestFullModelGradients:
    """End-to-end finite differences through scores -> loss for one
    representative softmax and one representative CRF model. The wide
    sweep across all variants lives in the acceptance tests."""

    @staticmethod
    def _check_all(tagger, ids, gold, bits=None):
        _, _, grads = instance_loss_grads(tagger, ids, gold, bits)
        params = tagger.trainable_parameters()
        assert set(grads) == set(params)
        for name, arr in params.items():
            original = arr.copy()

            def objective(value, _arr=arr):
                _arr[:] = value
                loss, _, _ = instance_loss_grads(tagger, ids, gold, bits)
                return loss

            try:
                assert_grad_close(objective, original, grads[name])
            finally:
                arr[:] = original

    def test_trainable_embedding_softmax_model(self):
        tagger = Tagger.build(cue_config("emb-train", 6, 3, 2), np.random.default_rng(4))
        self._check_all(tagger, np.array([1, 4, 0, 2]), np.array([0, 1, 1, 2]))

    def test_two_input_bilstm_crf_model(self):
        tagger = Tagger.build(scope_config("bilstm-crf", 6, 3, 2), np.random.default_rng(5))
        ids = np.array([2, 5, 1, 3])
        self._check_all(tagger, ids, np.array([1, 2, 3, 0]), np.array([0, 1, 0, 0]))


class TestAdam:
    def test_first_step_matches_closed_form(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.array([3.0, -0.5])}
        state = AdamState.init(params)
        adam_step(params, grads, state, lr=0.1)
        # bias correction makes m_hat = g and v_hat = g*g on step one
        expected = np.array([1.0, -2.0]) - 0.1 * np.array([3.0, -0.5]) / (
            np.array([3.0, 0.5]) + 1e-8
        )
        np.testing.assert_allclose(params["w"], expected, rtol=1e-12)
        assert state.step == 1

    def test_constant_gradient_moves_at_learning_rate(self):
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([2.0])}
        state = AdamState.init(params)
        for _ in range(5):
            adam_step(params, grads, state, lr=0.01)
        assert params["w"][0] == pytest.approx(-0.05, rel=1e-6)

    def test_zero_gradient_changes_nothing(self):
        params = {"w": np.array([1.5])}
        state = AdamState.init(params)
        adam_step(params, {"w": np.zeros(1)}, state, lr=0.1)
        assert params["w"][0] == 1.5

    def test_non_finite_gradient_is_a_hard_error(self):
        params = {"dense.W": np.ones((2, 2))}
        state = AdamState.init(params)
        with pytest.raises(ValueError, match="dense.W"):
            adam_step(params, {"dense.W": np.array([[1.0, np.nan], [0, 0]])}, state, 0.1)

    def test_descends_random_convex_quadratics(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            a = rng.uniform(0.5, 3.0)
            b = rng.uniform(-3.0, 3.0)
            x = {"x": np.array([rng.uniform(-5.0, 5.0)])}
            start = a * (x["x"][0] - b) ** 2
            state = AdamState.init(x)
            for _ in range(100):
                adam_step(x, {"x": 2 * a * (x["x"] - b)}, state, lr=0.05)
            assert a * (x["x"][0] - b) ** 2 < start


class TestStepDecay:
    def test_halves_every_ten_epochs(self):
        assert step_decay(0, 0.001) == 0.001
        assert step_decay(9, 0.001) == 0.001
        assert step_decay(10, 0.001) == 0.0005
        assert step_decay(25, 0.001) == 0.00025

    def test_zero_interval_means_constant(self):
        assert step_decay(40, 0.01, every=0) == 0.01

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            step_decay(-1, 0.001)


def encoded_corpus(count=12, seed=0, max_len=12):
    instances = synthetic_instances(count, seed)
    vocab = build_vocab(instances)
    return encode_instances(instances, vocab, max_len), vocab


def small_config(**overrides):
    base = dict(epochs=6, batch_size=4, lr0=0.01, decay_every=0, seed=3,
                embed_dim=8, units=8)
    base.update(overrides)
    return TrainConfig(**base)


class TestModelInputs:
    def test_cue_task_slices_to_real_length(self):
        data, _ = encoded_corpus(4)
        tagger = Tagger.build(cue_config("baseline", 40, 4, 2), np.random.default_rng(0))
        ids, gold, bits = model_inputs(tagger, data[1])
        assert bits is None
        assert len(ids) == data[1].n == len(gold)

    def test_scope_task_provides_cue_bits(self):
        data, _ = encoded_corpus(4)
        tagger = Tagger.build(scope_config("bilstm", 40, 4, 2), np.random.default_rng(0))
        _, gold, bits = model_inputs(tagger, data[1])
        assert bits is not None and bits.sum() == 1  # pattern 1 has one cue token


class TestTrainLoop:
    def test_loss_goes_down_on_learnable_data(self):
        data, vocab = encoded_corpus()
        config = small_config()
        tagger = Tagger.build(
            cue_config("emb-train", vocab.size, 8, 8), np.random.default_rng(config.seed)
        )
        history = train(tagger, data, [], config)
        assert history.epochs_run == 6
        assert history.train_loss[-1] < history.train_loss[0]
        assert history.lr == [0.01] * 6

    def test_same_seed_reproduces_run_exactly(self):
        data, vocab = encoded_corpus()
        config = small_config(epochs=3)
        runs = []
        for _ in range(2):
            tagger = Tagger.build(
                scope_config("bilstm", vocab.size, 8, 8), np.random.default_rng(config.seed)
            )
            history = train(tagger, data, data[:4], config)
            runs.append((history, tagger.snapshot()))
        assert runs[0][0].train_loss == runs[1][0].train_loss
        assert runs[0][0].val_f1 == runs[1][0].val_f1
        for name, arr in runs[0][1].items():
            np.testing.assert_array_equal(arr, runs[1][1][name])

    def test_early_stopping_restores_best_epoch(self):
        data, vocab = encoded_corpus(8)
        config = small_config(epochs=10, early_stopping=True)
        tagger = Tagger.build(
            cue_config("bilstm", vocab.size, 8, 8), np.random.default_rng(1)
        )
        falling = iter([50.0, 40.0, 30.0, 20.0, 10.0, 5.0])
        best_params = {}

        def on_best(t):
            best_params.update(t.snapshot())

        history = train(
            tagger, data, data[:4], config,
            on_best=on_best, val_scorer=lambda t, d: next(falling),
        )
        assert history.stopped_early
        assert history.best_epoch == 0
        assert history.epochs_run == 3  # best, then patience-2 worth of misses
        for name, arr in tagger.parameters().items():
            np.testing.assert_array_equal(arr, best_params[name])

    def test_nan_validation_never_counts_as_improvement(self):
        data, vocab = encoded_corpus(8)
        config = small_config(epochs=10, early_stopping=True)
        tagger = Tagger.build(
            cue_config("bilstm", vocab.size, 8, 8), np.random.default_rng(1)
        )
        history = train(tagger, data, data[:4], config,
                        val_scorer=lambda t, d: math.nan)
        assert history.stopped_early
        assert history.best_epoch is None
        assert history.epochs_run == 2

    def test_frozen_embeddings_stay_bit_identical(self):
        data, vocab = encoded_corpus()
        tagger = Tagger.build(
            cue_config("bilstm", vocab.size, 8, 8), np.random.default_rng(2)
        )
        before = tagger.embedding.weights.copy()
        train(tagger, data, [], small_config(epochs=2))
        np.testing.assert_array_equal(tagger.embedding.weights, before)

    def test_empty_training_set_rejected(self):
        tagger = Tagger.build(cue_config("baseline", 5, 4, 2), np.random.default_rng(0))
        with pytest.raises(ValueError, match="empty training set"):
            train(tagger, [], [], small_config())

    def test_overflowing_loss_raises_diverged(self):
        # a pathological start transition makes each sequence NLL ~1e308,
        # so a two-instance batch overflows to inf
        tagger = Tagger.build(cue_config("emb-crf", 5, 4, 2), np.random.default_rng(0))
        tagger.crf.trans[tagger.crf.start, 0] = -1.7e308
        inst = SimpleNamespace(
            n=2,
            token_ids=np.array([1, 2]),
            cue_label_ids=np.array([0, 0]),
            scope_label_ids=np.array([0, 0]),
            cue_bits=np.array([0, 0]),
        )
        with pytest.raises(TrainingDiverged):
            train(tagger, [inst, inst], [], small_config(epochs=1))


class TestConfigValidation:
    def test_rejects_nonsense(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(lr0=0.0)
        with pytest.raises(ValueError):
            TrainConfig(patience=0)
