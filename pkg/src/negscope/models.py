"""Model assembly for both tasks.

A tagger is embedding -> optional BiLSTM -> dense -> head. The cue task
labels {NC, C, MC}; the scope task labels {O, B, C, A} and feeds the cue
indicator in as a second, constant embedding. The head is a per-token
softmax or a linear-chain CRF.

Cue variants: baseline (embeddings -> dense), emb-train (the same with
trainable embeddings), bilstm, emb-crf, bilstm-crf.
Scope variants: bilstm, bilstm-crf, bilstm-post (bilstm plus smoothing
at prediction time).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .labeling import CUE_TAGS, SCOPE_TAGS
from .layers import (
    CrfParams,
    DenseParams,
    EmbeddingParams,
    GATES,
    bilstm_forward,
    crf_viterbi,
    cue_embed_seq,
    dense_forward,
    embed,
    init_crf,
    init_dense,
    init_embedding,
    init_lstm,
    LstmParams,
)

CHECKPOINT_FORMAT = 1

CUE_VARIANTS = {
    "baseline": dict(use_lstm=False, head="softmax", embeddings_trainable=False),
    "emb-train": dict(use_lstm=False, head="softmax", embeddings_trainable=True),
    "bilstm": dict(use_lstm=True, head="softmax", embeddings_trainable=False),
    "emb-crf": dict(use_lstm=False, head="crf", embeddings_trainable=False),
    "bilstm-crf": dict(use_lstm=True, head="crf", embeddings_trainable=False),
}

SCOPE_VARIANTS = {
    "bilstm": dict(use_lstm=True, head="softmax", embeddings_trainable=False),
    "bilstm-crf": dict(use_lstm=True, head="crf", embeddings_trainable=False),
    "bilstm-post": dict(use_lstm=True, head="softmax", embeddings_trainable=False),
}


@dataclass(frozen=True)
class TaggerConfig:
    task: str  # "cue" | "scope"
    variant: str
    vocab_size: int
    embed_dim: int
    units: int
    head: str  # "softmax" | "crf"
    use_lstm: bool
    two_input: bool
    embeddings_trainable: bool
    labels: tuple[str, ...]
    oov_index: int = 0

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def smooth_predictions(self) -> bool:
        return self.variant.endswith("-post")


def cue_config(variant: str, vocab_size: int, embed_dim: int, units: int) -> TaggerConfig:
    if variant not in CUE_VARIANTS:
        raise ValueError(f"unknown cue variant {variant!r}; pick from {sorted(CUE_VARIANTS)}")
    opts = CUE_VARIANTS[variant]
    return TaggerConfig(
        task="cue", variant=variant, vocab_size=vocab_size, embed_dim=embed_dim,
        units=units, head=opts["head"], use_lstm=opts["use_lstm"], two_input=False,
        embeddings_trainable=opts["embeddings_trainable"], labels=CUE_TAGS,
    )


def scope_config(variant: str, vocab_size: int, embed_dim: int, units: int) -> TaggerConfig:
    if variant not in SCOPE_VARIANTS:
        raise ValueError(
            f"unknown scope variant {variant!r}; pick from {sorted(SCOPE_VARIANTS)}"
        )
    opts = SCOPE_VARIANTS[variant]
    return TaggerConfig(
        task="scope", variant=variant, vocab_size=vocab_size, embed_dim=embed_dim,
        units=units, head=opts["head"], use_lstm=opts["use_lstm"], two_input=True,
        embeddings_trainable=opts["embeddings_trainable"], labels=SCOPE_TAGS,
    )


class Tagger:
    """Parameters plus the wiring between them; losses live in training."""

    def __init__(self, config: TaggerConfig, embedding: EmbeddingParams,
                 lstm_fwd: LstmParams | None, lstm_bwd: LstmParams | None,
                 dense: DenseParams, crf: CrfParams | None):
        self.config = config
        self.embedding = embedding
        self.lstm_fwd = lstm_fwd
        self.lstm_bwd = lstm_bwd
        self.dense = dense
        self.crf = crf

    @classmethod
    def build(cls, config: TaggerConfig, rng: np.random.Generator,
              embedding_matrix: np.ndarray | None = None) -> "Tagger":
        if embedding_matrix is not None:
            want = (config.embed_dim, config.vocab_size)
            if embedding_matrix.shape != want:
                raise ValueError(
                    f"embedding matrix shape {embedding_matrix.shape} != {want}"
                )
            embedding = EmbeddingParams(
                np.array(embedding_matrix, dtype=np.float64),
                config.oov_index, config.embeddings_trainable,
            )
        else:
            embedding = init_embedding(
                config.embed_dim, config.vocab_size, config.oov_index, rng,
                config.embeddings_trainable,
            )
        lstm_fwd = lstm_bwd = None
        width = config.embed_dim
        if config.use_lstm:
            lstm_fwd = init_lstm(config.units, config.embed_dim, rng, config.two_input)
            lstm_bwd = init_lstm(config.units, config.embed_dim, rng, config.two_input)
            width = 2 * config.units
        dense = init_dense(config.num_labels, width, rng)
        crf = init_crf(config.num_labels) if config.head == "crf" else None
        return cls(config, embedding, lstm_fwd, lstm_bwd, dense, crf)

    # -- parameter book-keeping ------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        """Name -> live array, in a stable order."""
        out: dict[str, np.ndarray] = {"emb.E": self.embedding.weights}
        for tag, lstm in (("f", self.lstm_fwd), ("b", self.lstm_bwd)):
            if lstm is None:
                continue
            for gate in GATES:
                out[f"lstm.{tag}.w_in.{gate}"] = lstm.w_in[gate]
                out[f"lstm.{tag}.w_rec.{gate}"] = lstm.w_rec[gate]
                out[f"lstm.{tag}.b.{gate}"] = lstm.b[gate]
                if lstm.w_aux is not None:
                    out[f"lstm.{tag}.w_aux.{gate}"] = lstm.w_aux[gate]
        out["dense.W"] = self.dense.weights
        out["dense.b"] = self.dense.bias
        if self.crf is not None:
            out["crf.T"] = self.crf.trans
        return out

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        params = self.parameters()
        if not self.embedding.trainable:
            params.pop("emb.E")
        return params

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.parameters().items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, arr in self.parameters().items():
            arr[:] = snapshot[name]

    # -- forward ----------------------------------------------------------

    def scores(self, token_ids, cue_bits=None):
        """Unpadded ids (n,) [+ cue bits (n,)] -> (scores (L, n), cache)."""
        ids = np.asarray(token_ids)
        if self.config.two_input:
            if cue_bits is None:
                raise ValueError(f"{self.config.task} model needs cue bits")
            aux = cue_embed_seq(cue_bits, self.config.embed_dim)
        else:
            aux = None
        embedded = embed(self.embedding, ids)
        if self.config.use_lstm:
            states, lstm_caches = bilstm_forward(
                self.lstm_fwd, self.lstm_bwd, embedded, aux
            )
        else:
            states, lstm_caches = embedded, None
        scores = dense_forward(self.dense, states)
        cache = {"ids": ids, "embedded": embedded, "aux": aux,
                 "states": states, "lstm": lstm_caches}
        return scores, cache

    def predict_ids(self, token_ids, cue_bits=None) -> list[int]:
        """Argmax per token (softmax head) or the Viterbi path (CRF head);
        ties resolve to the lowest label index either way."""
        scores, _ = self.scores(token_ids, cue_bits)
        if self.crf is not None:
            labels, _ = crf_viterbi(scores, self.crf)
            return labels
        return [int(k) for k in scores.argmax(axis=0)]

    def predict_tags(self, token_ids, cue_bits=None) -> list[str]:
        return [self.config.labels[k] for k in self.predict_ids(token_ids, cue_bits)]


# ---------------------------------------------------------------------------
# checkpoints
#
# A checkpoint is a numpy .npz archive. Entry "__meta__" is a JSON string:
#   {"format": 1, "task", "variant", "labels", "vocab_size", "embed_dim",
#    "units", "head", "use_lstm", "two_input", "embeddings_trainable",
#    "oov_index", "vocab_sha256"}
# Every other entry is one float64 parameter array stored under the names
# Tagger.parameters() uses (emb.E, lstm.f.w_in.i, ..., dense.W, crf.T).

def save_checkpoint(path, tagger: Tagger, vocab_hash: str) -> None:
    cfg = tagger.config
    meta = {
        "format": CHECKPOINT_FORMAT,
        "task": cfg.task,
        "variant": cfg.variant,
        "labels": list(cfg.labels),
        "vocab_size": cfg.vocab_size,
        "embed_dim": cfg.embed_dim,
        "units": cfg.units,
        "head": cfg.head,
        "use_lstm": cfg.use_lstm,
        "two_input": cfg.two_input,
        "embeddings_trainable": cfg.embeddings_trainable,
        "oov_index": cfg.oov_index,
        "vocab_sha256": vocab_hash,
    }
    arrays = {name: arr.astype(np.float64) for name, arr in tagger.parameters().items()}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> tuple[Tagger, dict]:
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise ValueError(f"{path}: not a tagger checkpoint (missing __meta__)")
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')}")
        arrays = {name: np.array(data[name], dtype=np.float64)
                  for name in data.files if name != "__meta__"}

    config = TaggerConfig(
        task=meta["task"], variant=meta["variant"], vocab_size=meta["vocab_size"],
        embed_dim=meta["embed_dim"], units=meta["units"], head=meta["head"],
        use_lstm=meta["use_lstm"], two_input=meta["two_input"],
        embeddings_trainable=meta["embeddings_trainable"],
        labels=tuple(meta["labels"]), oov_index=meta["oov_index"],
    )
    tagger = Tagger.build(config, np.random.default_rng(0))
    params = tagger.parameters()
    if set(params) != set(arrays):
        raise ValueError(
            f"{path}: parameter set mismatch: {sorted(set(params) ^ set(arrays))}"
        )
    for name, arr in params.items():
        if arrays[name].shape != arr.shape:
            raise ValueError(
                f"{path}: {name} has shape {arrays[name].shape}, expected {arr.shape}"
            )
        arr[:] = arrays[name]
    return tagger, meta
