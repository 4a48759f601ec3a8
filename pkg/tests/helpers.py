"""Shared test oracles: brute-force CRF enumeration, a scalar LSTM cell
written without numpy, gradient-check plumbing, and a synthetic corpus
builder. Everything here recomputes results independently of the package
code under test."""
from __future__ import annotations

import itertools
import math

import numpy as np

from negscope.labeling import NegationAnnotation
from negscope.numerics import finite_diff_grad

# ---------------------------------------------------------------------------
# CRF enumeration oracle

def brute_path_scores(emissions, trans, start, end):
    """Score of every labeling, accumulated with plain Python sums."""
    num_labels, n = emissions.shape
    out = []
    for labels in itertools.product(range(num_labels), repeat=n):
        s = trans[start][labels[0]]
        for k, lab in enumerate(labels):
            s += emissions[lab][k]
        for a, b in zip(labels, labels[1:]):
            s += trans[a][b]
        s += trans[labels[-1]][end]
        out.append((labels, s))
    return out


def brute_log_partition(emissions, trans, start, end):
    scores = [s for _, s in brute_path_scores(emissions, trans, start, end)]
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def brute_best_path(emissions, trans, start, end, tie_tol=1e-9):
    """Argmax labeling; among ties, the one a lowest-index backtrack picks,
    which is the labeling whose reversal is lexicographically smallest."""
    scored = brute_path_scores(emissions, trans, start, end)
    best = max(s for _, s in scored)
    tied = [labels for labels, s in scored if s >= best - tie_tol]
    pick = min(tied, key=lambda labels: tuple(reversed(labels)))
    return list(pick), best


# ---------------------------------------------------------------------------
# scalar LSTM reference (one step, pure Python floats)

def scalar_lstm_step(w_in, w_rec, b, x, h_prev, c_prev, w_aux=None, q=None):
    """One LSTM step evaluated coordinate by coordinate with math.exp."""

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    def tnh(v):
        return (math.exp(v) - math.exp(-v)) / (math.exp(v) + math.exp(-v))

    units = len(b["i"])
    acts = {}
    for gate in ("i", "f", "o", "g"):
        vals = []
        for u in range(units):
            pre = b[gate][u]
            for j, xj in enumerate(x):
                pre += w_in[gate][u][j] * xj
            if w_aux is not None:
                for j, qj in enumerate(q):
                    pre += w_aux[gate][u][j] * qj
            for j, hj in enumerate(h_prev):
                pre += w_rec[gate][u][j] * hj
            vals.append(tnh(pre) if gate == "g" else sig(pre))
        acts[gate] = vals
    c = [acts["f"][u] * c_prev[u] + acts["i"][u] * acts["g"][u] for u in range(units)]
    h = [acts["o"][u] * tnh(c[u]) for u in range(units)]
    return h, c


# ---------------------------------------------------------------------------
# gradient checking

def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1.0, np.abs(a) + np.abs(b))


def assert_grad_close(f, value, analytic, tol=1e-4, eps=1e-5):
    """Compare an analytic gradient for one array against central differences."""
    numeric = finite_diff_grad(f, np.asarray(value, dtype=np.float64), eps=eps)
    worst = rel_err(numeric, analytic).max() if numeric.size else 0.0
    assert worst <= tol, f"gradient mismatch: worst rel err {worst:.2e}"


# ---------------------------------------------------------------------------
# synthetic corpora

_NOUNS = ["cells", "mice", "protein", "il-2", "genes", "t-cells", "samples",
          "levels", "expression", "activity"]
_VERBS = ["showed", "contained", "expressed", "affected", "induced"]
_DETS = ["the", "these", "both"]


def synthetic_instances(count: int, seed: int = 0):
    """Deterministic toy corpus mixing assertions with four negation shapes.

    Labels are a pure function of the pattern, so a model can fit them
    exactly. Token inventory stays under 40 distinct types.
    """
    from negscope.corpus import NegationInstance, Sentence

    rng = np.random.default_rng(seed)
    out = []
    for idx in range(count):
        det = _DETS[rng.integers(len(_DETS))]
        n1 = _NOUNS[rng.integers(len(_NOUNS))]
        n2 = _NOUNS[rng.integers(len(_NOUNS))]
        verb = _VERBS[rng.integers(len(_VERBS))]
        kind = idx % 4
        if kind == 0:
            tokens = [det, n1, verb, n2, "."]
            ann = NegationAnnotation()
        elif kind == 1:
            # single-token cue, scope to the end of the clause
            tokens = [det, n1, verb, "no", n2, "."]
            ann = NegationAnnotation((3,), (3, 4))
        elif kind == 2:
            # continuous multiword cue
            tokens = [n1, "could", "not", "at", "all", "affect", n2, "."]
            ann = NegationAnnotation((2, 3, 4), (0, 6))
        else:
            # discontinuous cue pair
            tokens = ["neither", n1, "nor", n2, verb, "it", "."]
            ann = NegationAnnotation((0, 2), (0, 5))
        out.append(NegationInstance(Sentence(tuple(tokens), f"synth.{idx}"), ann))
    return out
