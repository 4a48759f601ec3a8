"""Layer forward/backward passes, written out by hand on numpy.

Shapes: a sentence of n tokens flows through as
    token ids (n,) -> embedded (n, d) -> BiLSTM (n, 2U) -> scores (L, n)
and the score matrix feeds either a per-token softmax or a linear-chain CRF.
Gradients mirror each forward exactly; nothing here depends on autodiff.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import logsumexp, sigmoid, tanh_act

GATES = ("i", "f", "o", "g")


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform init on +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(np.float64)


# ---------------------------------------------------------------------------
# embeddings

@dataclass
class EmbeddingParams:
    weights: np.ndarray  # (d, v), one column per token index
    oov_index: int
    trainable: bool = False

    @property
    def embed_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[1]


def init_embedding(
    embed_dim: int,
    vocab_size: int,
    oov_index: int,
    rng: np.random.Generator,
    trainable: bool = False,
) -> EmbeddingParams:
    w = glorot(rng, embed_dim, vocab_size)
    w[:, oov_index] = 0.0  # unknown tokens start as the zero vector
    return EmbeddingParams(w, oov_index, trainable)


def embed(params: EmbeddingParams, token_ids: np.ndarray) -> np.ndarray:
    """ids (n,) -> embedded (n, d), row k = column token_ids[k] of the matrix."""
    ids = np.asarray(token_ids)
    if ids.size and (ids.min() < 0 or ids.max() >= params.vocab_size):
        raise ValueError(
            f"token id out of range [0, {params.vocab_size}): {ids.min()}..{ids.max()}"
        )
    return params.weights[:, ids].T.copy()


def embed_backward(
    params: EmbeddingParams, token_ids: np.ndarray, d_embedded: np.ndarray
) -> np.ndarray:
    """Scatter-add row gradients back into the (d, v) matrix; repeated ids
    accumulate."""
    grad = np.zeros_like(params.weights)
    np.add.at(grad.T, np.asarray(token_ids), d_embedded)
    return grad


def cue_embed(cue_bit: int, embed_dim: int) -> np.ndarray:
    """All-ones vector for a cue token, all-zeros otherwise."""
    if cue_bit not in (0, 1):
        raise ValueError(f"cue bit must be 0 or 1, got {cue_bit}")
    return np.ones(embed_dim) if cue_bit else np.zeros(embed_dim)


def cue_embed_seq(cue_bits, embed_dim: int) -> np.ndarray:
    """bits (n,) -> (n, d) of constant cue embeddings."""
    bits = np.asarray(cue_bits, dtype=np.float64)
    if bits.ndim != 1 or not np.all((bits == 0) | (bits == 1)):
        raise ValueError("cue bits must be a 1-d 0/1 vector")
    return np.repeat(bits[:, None], embed_dim, axis=1)


# ---------------------------------------------------------------------------
# LSTM

@dataclass
class LstmParams:
    """Per-gate weights; `w_aux` is present only for the two-input cell,
    which adds w_aux[g] @ aux_k to every gate preactivation."""

    w_in: dict[str, np.ndarray]  # gate -> (U, d)
    w_rec: dict[str, np.ndarray]  # gate -> (U, U)
    b: dict[str, np.ndarray]  # gate -> (U,)
    w_aux: dict[str, np.ndarray] | None = None  # gate -> (U, d)

    @property
    def units(self) -> int:
        return self.w_in["i"].shape[0]

    @property
    def in_dim(self) -> int:
        return self.w_in["i"].shape[1]

    def zeros_like(self) -> "LstmParams":
        return LstmParams(
            {g: np.zeros_like(self.w_in[g]) for g in GATES},
            {g: np.zeros_like(self.w_rec[g]) for g in GATES},
            {g: np.zeros_like(self.b[g]) for g in GATES},
            None
            if self.w_aux is None
            else {g: np.zeros_like(self.w_aux[g]) for g in GATES},
        )


def init_lstm(
    units: int, in_dim: int, rng: np.random.Generator, two_input: bool = False
) -> LstmParams:
    return LstmParams(
        {g: glorot(rng, units, in_dim) for g in GATES},
        {g: glorot(rng, units, units) for g in GATES},
        {g: np.zeros(units) for g in GATES},
        {g: glorot(rng, units, in_dim) for g in GATES} if two_input else None,
    )


@dataclass
class LstmCache:
    inputs: np.ndarray  # (n, d), in recurrence order
    aux: np.ndarray | None
    gate_i: np.ndarray  # (n, U)
    gate_f: np.ndarray
    gate_o: np.ndarray
    gate_g: np.ndarray
    cell: np.ndarray  # (n, U)
    tanh_cell: np.ndarray
    hidden: np.ndarray  # (n, U)
    reverse: bool


def lstm_forward(
    params: LstmParams,
    inputs: np.ndarray,
    aux: np.ndarray | None = None,
    reverse: bool = False,
) -> tuple[np.ndarray, LstmCache]:
    """inputs (n, d) [, aux (n, d)] -> hidden states (n, U) in input order.

    With reverse=True the recurrence runs right to left and the outputs are
    re-aligned to input positions. State starts at zero. Aux inputs must be
    supplied iff the params carry aux weights.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"expected inputs (n, {params.in_dim}), got {x.shape}")
    if (aux is None) != (params.w_aux is None):
        raise ValueError("aux inputs must be present iff params has aux weights")
    q = None
    if aux is not None:
        q = np.asarray(aux, dtype=np.float64)
        if q.shape != x.shape:
            raise ValueError(f"aux shape {q.shape} != input shape {x.shape}")
    if reverse:
        x = x[::-1]
        q = None if q is None else q[::-1]

    n, units = x.shape[0], params.units
    # input-side preactivations for every step at once
    pre = {g: x @ params.w_in[g].T + params.b[g] for g in GATES}
    if q is not None:
        for g in GATES:
            pre[g] += q @ params.w_aux[g].T

    gi = np.empty((n, units))
    gf = np.empty((n, units))
    go = np.empty((n, units))
    gg = np.empty((n, units))
    cell = np.empty((n, units))
    hidden = np.empty((n, units))
    h_prev = np.zeros(units)
    c_prev = np.zeros(units)
    for k in range(n):
        gi[k] = sigmoid(pre["i"][k] + params.w_rec["i"] @ h_prev)
        gf[k] = sigmoid(pre["f"][k] + params.w_rec["f"] @ h_prev)
        go[k] = sigmoid(pre["o"][k] + params.w_rec["o"] @ h_prev)
        gg[k] = tanh_act(pre["g"][k] + params.w_rec["g"] @ h_prev)
        cell[k] = gf[k] * c_prev + gi[k] * gg[k]
        hidden[k] = go[k] * np.tanh(cell[k])
        h_prev, c_prev = hidden[k], cell[k]

    cache = LstmCache(
        x, q, gi, gf, go, gg, cell, np.tanh(cell), hidden, reverse
    )
    out = hidden[::-1] if reverse else hidden
    return out.copy(), cache


def lstm_backward(
    params: LstmParams, cache: LstmCache, d_hidden: np.ndarray
) -> tuple[LstmParams, np.ndarray, np.ndarray | None]:
    """d_hidden (n, U) in input order -> (param grads, d_inputs, d_aux)."""
    dh_out = np.asarray(d_hidden, dtype=np.float64)
    if dh_out.shape != cache.hidden.shape:
        raise ValueError(f"expected d_hidden {cache.hidden.shape}, got {dh_out.shape}")
    if cache.reverse:
        dh_out = dh_out[::-1]

    n, units = cache.hidden.shape
    dpre = {g: np.zeros((n, units)) for g in GATES}
    dh_rec = np.zeros(units)
    dc_rec = np.zeros(units)
    for k in range(n - 1, -1, -1):
        i, f, o, g = cache.gate_i[k], cache.gate_f[k], cache.gate_o[k], cache.gate_g[k]
        tc = cache.tanh_cell[k]
        c_prev = cache.cell[k - 1] if k > 0 else np.zeros(units)
        dh = dh_out[k] + dh_rec
        dc = dh * o * (1 - tc * tc) + dc_rec
        dpre["o"][k] = dh * tc * o * (1 - o)
        dpre["f"][k] = dc * c_prev * f * (1 - f)
        dpre["i"][k] = dc * g * i * (1 - i)
        dpre["g"][k] = dc * i * (1 - g * g)
        dh_rec = sum(params.w_rec[x].T @ dpre[x][k] for x in GATES)
        dc_rec = dc * f

    h_shift = np.vstack([np.zeros(units), cache.hidden[:-1]])
    grads = LstmParams(
        {g: dpre[g].T @ cache.inputs for g in GATES},
        {g: dpre[g].T @ h_shift for g in GATES},
        {g: dpre[g].sum(axis=0) for g in GATES},
        None
        if cache.aux is None
        else {g: dpre[g].T @ cache.aux for g in GATES},
    )
    d_inputs = sum(dpre[g] @ params.w_in[g] for g in GATES)
    d_aux = None
    if cache.aux is not None:
        d_aux = sum(dpre[g] @ params.w_aux[g] for g in GATES)
    if cache.reverse:
        d_inputs = d_inputs[::-1].copy()
        d_aux = None if d_aux is None else d_aux[::-1].copy()
    return grads, d_inputs, d_aux


def bilstm_forward(
    fwd: LstmParams,
    bwd: LstmParams,
    inputs: np.ndarray,
    aux: np.ndarray | None = None,
) -> tuple[np.ndarray, tuple[LstmCache, LstmCache]]:
    """Concatenate left-to-right and right-to-left hidden states: (n, 2U)."""
    h_f, cache_f = lstm_forward(fwd, inputs, aux, reverse=False)
    h_b, cache_b = lstm_forward(bwd, inputs, aux, reverse=True)
    return np.hstack([h_f, h_b]), (cache_f, cache_b)


def bilstm_backward(
    fwd: LstmParams,
    bwd: LstmParams,
    caches: tuple[LstmCache, LstmCache],
    d_hidden: np.ndarray,
) -> tuple[LstmParams, LstmParams, np.ndarray, np.ndarray | None]:
    cache_f, cache_b = caches
    units = cache_f.hidden.shape[1]
    g_f, dx_f, dq_f = lstm_backward(fwd, cache_f, d_hidden[:, :units])
    g_b, dx_b, dq_b = lstm_backward(bwd, cache_b, d_hidden[:, units:])
    d_aux = None if dq_f is None else dq_f + dq_b
    return g_f, g_b, dx_f + dx_b, d_aux


# ---------------------------------------------------------------------------
# dense projection

@dataclass
class DenseParams:
    weights: np.ndarray  # (L, width)
    bias: np.ndarray  # (L,)


def init_dense(num_labels: int, width: int, rng: np.random.Generator) -> DenseParams:
    return DenseParams(glorot(rng, num_labels, width), np.zeros(num_labels))


def dense_forward(params: DenseParams, states: np.ndarray) -> np.ndarray:
    """states (n, width) -> scores (L, n), column k = scores for token k."""
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.weights.shape[1]:
        raise ValueError(f"expected states (n, {params.weights.shape[1]}), got {x.shape}")
    return params.weights @ x.T + params.bias[:, None]


def dense_backward(
    params: DenseParams, states: np.ndarray, d_scores: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """d_scores (L, n) -> (dW, db, d_states)."""
    dw = d_scores @ states
    db = d_scores.sum(axis=1)
    d_states = d_scores.T @ params.weights
    return dw, db, d_states


# ---------------------------------------------------------------------------
# linear-chain CRF

@dataclass
class CrfParams:
    """Transition scores over the label set plus start/end states.

    trans has shape (L+2, L+2); row L scores start->label transitions and
    column L+1 scores label->end. Only those entries ever enter a path
    score, the rest stay untouched at their init value.
    """

    trans: np.ndarray

    @property
    def num_labels(self) -> int:
        return self.trans.shape[0] - 2

    @property
    def start(self) -> int:
        return self.num_labels

    @property
    def end(self) -> int:
        return self.num_labels + 1


def init_crf(num_labels: int) -> CrfParams:
    return CrfParams(np.zeros((num_labels + 2, num_labels + 2)))


def _check_emissions(emissions: np.ndarray, crf: CrfParams) -> np.ndarray:
    e = np.asarray(emissions, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] != crf.num_labels:
        raise ValueError(f"expected emissions ({crf.num_labels}, n), got {e.shape}")
    if e.shape[1] < 1:
        raise ValueError("empty sequence")
    return e


def crf_score(emissions: np.ndarray, crf: CrfParams, labels) -> float:
    """Path score: emissions along the labeling plus start, pairwise, and
    end transitions."""
    e = _check_emissions(emissions, crf)
    y = np.asarray(labels)
    n = e.shape[1]
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= crf.num_labels):
        raise ValueError("label out of range")
    t = crf.trans
    score = e[y, np.arange(n)].sum() + t[crf.start, y[0]] + t[y[-1], crf.end]
    score += t[y[:-1], y[1:]].sum()
    return float(score)


def _forward_lattice(e: np.ndarray, crf: CrfParams) -> np.ndarray:
    """alpha (n, L): alpha[k, j] = log sum of path scores ending at label j,
    position k (end transition not yet applied)."""
    num_labels, n = e.shape
    t = crf.trans[:num_labels, :num_labels]
    alpha = np.empty((n, num_labels))
    alpha[0] = e[:, 0] + crf.trans[crf.start, :num_labels]
    for k in range(1, n):
        m = alpha[k - 1][:, None] + t  # (from, to)
        mx = m.max(axis=0)
        alpha[k] = e[:, k] + mx + np.log(np.exp(m - mx).sum(axis=0))
    return alpha


def _backward_lattice(e: np.ndarray, crf: CrfParams) -> np.ndarray:
    """beta (n, L): beta[k, i] = log sum of path-suffix scores from label i
    at position k through the end transition."""
    num_labels, n = e.shape
    t = crf.trans[:num_labels, :num_labels]
    beta = np.empty((n, num_labels))
    beta[n - 1] = crf.trans[:num_labels, crf.end]
    for k in range(n - 2, -1, -1):
        m = t + (e[:, k + 1] + beta[k + 1])[None, :]  # (from, to)
        mx = m.max(axis=1)
        beta[k] = mx + np.log(np.exp(m - mx[:, None]).sum(axis=1))
    return beta


def crf_log_partition(emissions: np.ndarray, crf: CrfParams) -> float:
    """log of the summed exp path score over all labelings."""
    e = _check_emissions(emissions, crf)
    alpha = _forward_lattice(e, crf)
    return logsumexp(alpha[-1] + crf.trans[: crf.num_labels, crf.end])


def crf_viterbi(emissions: np.ndarray, crf: CrfParams) -> tuple[list[int], float]:
    """Best-scoring labeling and its score; ties pick the lowest label index
    at every backtrack step."""
    e = _check_emissions(emissions, crf)
    num_labels, n = e.shape
    t = crf.trans[:num_labels, :num_labels]
    v = e[:, 0] + crf.trans[crf.start, :num_labels]
    back = np.empty((n, num_labels), dtype=np.int64)
    for k in range(1, n):
        m = v[:, None] + t
        back[k] = m.argmax(axis=0)  # argmax returns the lowest tied index
        v = e[:, k] + m.max(axis=0)
    ends = v + crf.trans[:num_labels, crf.end]
    last = int(ends.argmax())
    labels = [last]
    for k in range(n - 1, 0, -1):
        labels.append(int(back[k][labels[-1]]))
    labels.reverse()
    return labels, float(ends.max())


def crf_marginals(
    emissions: np.ndarray, crf: CrfParams
) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-position and per-transition label marginals.

    Returns (unary (n, L), pairwise (n-1, L, L), log partition); unary rows
    sum to 1, pairwise[k] sums to 1 over both axes.
    """
    e = _check_emissions(emissions, crf)
    num_labels, n = e.shape
    alpha = _forward_lattice(e, crf)
    beta = _backward_lattice(e, crf)
    log_z = logsumexp(alpha[-1] + crf.trans[:num_labels, crf.end])
    unary = np.exp(alpha + beta - log_z)
    t = crf.trans[:num_labels, :num_labels]
    pairwise = np.empty((n - 1, num_labels, num_labels))
    for k in range(n - 1):
        pairwise[k] = np.exp(
            alpha[k][:, None] + t + (e[:, k + 1] + beta[k + 1])[None, :] - log_z
        )
    return unary, pairwise, log_z


def crf_nll_grads(
    emissions: np.ndarray, crf: CrfParams, gold
) -> tuple[float, np.ndarray, np.ndarray]:
    """Sequence NLL (log partition minus gold path score) and its gradients.

    d_emissions[j, k] = P(label at k is j) - [gold_k == j]; d_trans holds
    expected minus observed transition counts, including start and end.
    """
    e = _check_emissions(emissions, crf)
    y = np.asarray(gold)
    num_labels, n = e.shape
    unary, pairwise, log_z = crf_marginals(e, crf)
    nll = log_z - crf_score(e, crf, y)

    d_e = unary.T.copy()
    d_e[y, np.arange(n)] -= 1.0

    d_t = np.zeros_like(crf.trans)
    d_t[:num_labels, :num_labels] = pairwise.sum(axis=0)
    np.subtract.at(d_t, (y[:-1], y[1:]), 1.0)
    d_t[crf.start, :num_labels] += unary[0]
    d_t[crf.start, y[0]] -= 1.0
    d_t[:num_labels, crf.end] += unary[-1]
    d_t[y[-1], crf.end] -= 1.0
    return float(nll), d_e, d_t
