"""Losses, the Adam optimizer, and the training loop.

Loss is the per-token mean NLL within a batch: the softmax head sums
per-token cross-entropy, the CRF head contributes its sequence NLL, and
either sum is divided by the batch's real (unmasked) token count. Runs
are deterministic given the seed: init, shuffles, and updates all flow
from it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .layers import bilstm_backward, crf_nll_grads, dense_backward, embed_backward
from .models import Tagger
from .numerics import logsumexp

log = logging.getLogger("negscope.training")


# ---------------------------------------------------------------------------
# losses

def token_nll(probs, gold, mask=None) -> float:
    """Mean negative log probability of the gold label per real token.

    probs is (n, L) with rows summing to 1; mask (0/1, length n) drops
    padded positions. Probabilities are clamped at 1e-12 before the log
    and a clamp is reported as a warning.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(gold)
    if p.ndim != 2 or y.shape != (p.shape[0],):
        raise ValueError(f"probs {p.shape} do not match {y.shape} gold labels")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probability rows must sum to 1")
    keep = np.ones(p.shape[0], dtype=bool) if mask is None else np.asarray(mask) == 1
    if not keep.any():
        raise ValueError("mask keeps no positions")
    picked = p[np.arange(p.shape[0]), y][keep]
    if (picked < 1e-12).any():
        log.warning("clamped %d gold probabilities below 1e-12", int((picked < 1e-12).sum()))
        picked = np.maximum(picked, 1e-12)
    return float(-np.log(picked).mean())


def crf_nll(emissions, crf, gold) -> float:
    """Sequence-level CRF negative log likelihood, always >= 0."""
    from .layers import crf_log_partition, crf_score

    return crf_log_partition(emissions, crf) - crf_score(emissions, crf, gold)


def softmax_seq_grads(scores, gold) -> tuple[float, np.ndarray]:
    """Summed per-token softmax NLL over score columns plus d(loss)/d(scores).

    Computed from raw scores via logsumexp, so it is stable and matches
    token_nll(softmax of each column) times n.
    """
    y = np.asarray(gold)
    num_labels, n = scores.shape
    loss = 0.0
    d_scores = np.empty_like(scores)
    for k in range(n):
        lse = logsumexp(scores[:, k])
        loss += lse - scores[y[k], k]
        d_scores[:, k] = np.exp(scores[:, k] - lse)
        d_scores[y[k], k] -= 1.0
    return float(loss), d_scores


def instance_loss_grads(tagger: Tagger, token_ids, gold, cue_bits=None):
    """Forward + full backward for one instance.

    Returns (summed loss, token count, gradient dict) where the gradient
    keys match tagger.trainable_parameters().
    """
    scores, cache = tagger.scores(token_ids, cue_bits)
    if tagger.crf is not None:
        loss_sum, d_scores, d_trans = crf_nll_grads(scores, tagger.crf, gold)
    else:
        loss_sum, d_scores = softmax_seq_grads(scores, gold)
        d_trans = None

    grads: dict[str, np.ndarray] = {}
    dw, db, d_states = dense_backward(tagger.dense, cache["states"], d_scores)
    grads["dense.W"] = dw
    grads["dense.b"] = db
    if d_trans is not None:
        grads["crf.T"] = d_trans

    if tagger.config.use_lstm:
        g_f, g_b, d_embedded, _ = bilstm_backward(
            tagger.lstm_fwd, tagger.lstm_bwd, cache["lstm"], d_states
        )
        for tag, g in (("f", g_f), ("b", g_b)):
            for gate in ("i", "f", "o", "g"):
                grads[f"lstm.{tag}.w_in.{gate}"] = g.w_in[gate]
                grads[f"lstm.{tag}.w_rec.{gate}"] = g.w_rec[gate]
                grads[f"lstm.{tag}.b.{gate}"] = g.b[gate]
                if g.w_aux is not None:
                    grads[f"lstm.{tag}.w_aux.{gate}"] = g.w_aux[gate]
    else:
        d_embedded = d_states

    if tagger.embedding.trainable:
        grads["emb.E"] = embed_backward(tagger.embedding, cache["ids"], d_embedded)
    return loss_sum, len(np.asarray(token_ids)), grads


# ---------------------------------------------------------------------------
# optimizer and schedule

def step_decay(epoch: int, lr0: float, every: int = 10, factor: float = 0.5) -> float:
    """lr0 * factor^floor(epoch / every); every=0 keeps the rate constant."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if every == 0:
        return lr0
    return lr0 * factor ** (epoch // every)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place. Non-finite gradients are a
    hard error naming the parameter."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = state.m[name] / (1 - state.beta1 ** t)
        v_hat = state.v[name] / (1 - state.beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr0: float = 0.001
    decay_every: int = 10
    decay_factor: float = 0.5
    early_stopping: bool = False
    patience: int = 2
    seed: int = 0
    embed_dim: int = 200
    units: int = 200
    embeddings_trainable: bool = False
    max_len: int = 100

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr0 <= 0:
            raise ValueError("epochs and batch_size must be >= 1 and lr0 > 0")
        if self.patience < 1 or self.max_len < 1:
            raise ValueError("patience and max_len must be >= 1")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, history: TrainHistory):
        super().__init__(message)
        self.history = history


def model_inputs(tagger: Tagger, inst) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """(token ids, gold label ids, cue bits or None) for one encoded instance,
    sliced to the real length."""
    n = inst.n
    ids = inst.token_ids[:n]
    if tagger.config.task == "cue":
        return ids, inst.cue_label_ids[:n], None
    return ids, inst.scope_label_ids[:n], inst.cue_bits[:n]


def token_f1_score(tagger: Tagger, data) -> float:
    """Validation token F1 for the tagger's task over encoded instances."""
    from .evaluation import cue_token_metrics, scope_token_metrics

    preds, golds = [], []
    for inst in data:
        ids, _, bits = model_inputs(tagger, inst)
        preds.append(tagger.predict_tags(ids, bits))
        golds.append(list(inst.cue_tags if tagger.config.task == "cue" else inst.scope_tags))
    metric = cue_token_metrics if tagger.config.task == "cue" else scope_token_metrics
    return metric(preds, golds).f1


def train(tagger: Tagger, train_data, val_data, config: TrainConfig,
          log_line=None, on_best=None, val_scorer=None) -> TrainHistory:
    """Adam over shuffled mini-batches with step-decayed learning rate.

    Validation token F1 is scored each epoch; with early stopping on,
    `patience` epochs without improvement stop the run and the best
    epoch's parameters are restored (a NaN score never improves).
    `on_best(tagger)` fires whenever a new best epoch is recorded.
    """
    if not train_data:
        raise ValueError("empty training set")
    emit = log_line or (lambda msg: log.info("%s", msg))
    score = val_scorer or token_f1_score
    params = tagger.trainable_parameters()
    adam = AdamState.init(params)
    rng = np.random.default_rng([config.seed, 1])
    history = TrainHistory()
    best_f1 = -math.inf
    best_snapshot = None
    since_best = 0

    for epoch in range(config.epochs):
        lr = step_decay(epoch, config.lr0, config.decay_every, config.decay_factor)
        order = rng.permutation(len(train_data))
        epoch_loss = 0.0
        epoch_tokens = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_data[i] for i in order[start:start + config.batch_size]]
            acc = {name: np.zeros_like(p) for name, p in params.items()}
            batch_loss = 0.0
            batch_tokens = 0
            for inst in batch:
                ids, gold, bits = model_inputs(tagger, inst)
                loss_sum, n_tok, grads = instance_loss_grads(tagger, ids, gold, bits)
                batch_loss += loss_sum
                batch_tokens += n_tok
                for name in acc:
                    acc[name] += grads[name]
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"loss diverged at epoch {epoch}", history
                )
            for name in acc:
                acc[name] /= batch_tokens
            adam_step(params, acc, adam, lr)
            epoch_loss += batch_loss
            epoch_tokens += batch_tokens

        train_loss = epoch_loss / epoch_tokens
        val_f1 = score(tagger, val_data) if val_data else math.nan
        history.train_loss.append(train_loss)
        history.val_f1.append(val_f1)
        history.lr.append(lr)
        emit(f"epoch={epoch} loss={train_loss:.6f} val_f1={val_f1:.4f} lr={lr:.8f}")

        if config.early_stopping and val_data:
            if not math.isnan(val_f1) and val_f1 > best_f1:
                best_f1 = val_f1
                best_snapshot = tagger.snapshot()
                history.best_epoch = epoch
                since_best = 0
                if on_best is not None:
                    on_best(tagger)
            else:
                since_best += 1
                if since_best >= config.patience:
                    history.stopped_early = True
                    break

    if best_snapshot is not None:
        tagger.restore(best_snapshot)
    return history
