"""Set-encoder over relation-triplet semantics.

Each relation's predicate distribution and its subject/object label
distributions are mapped to expected embeddings (a probability-weighted
average of fixed, unit-norm embedding rows), concatenated and projected to
one triplet vector per relation. A mean global token is appended and a
single self-attention block (scaled dot-product + residual + feed-forward +
residual, no positional encoding) contextualizes the rows, so the encoder
is permutation-equivariant over the relation rows and the global row is
permutation-invariant. A linear head over the contextual relation rows
yields additive logit corrections; the correction head is deliberately
zero-initialized so corrections start at exactly zero and grow only as the
head is trained.

The squared distance between the predicted and ground-truth contextual
global tokens is the semantic-gap loss; the ground-truth side runs through
the same parameters but is treated as a constant (no gradient flows
through it).
"""

from dataclasses import dataclass

import numpy as np

from .numerics import (
    glorot_uniform,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
    softmax,
    softmax_vjp,
)

EMBED_DIM = 200


def add_embeddings(store, num_predicates, num_object_classes, rng):
    """Fixed unit-norm embedding rows for predicates and object labels."""
    for name, rows in (
        ("embedding.predicate", num_predicates + 1),
        ("embedding.object", num_object_classes + 1),
    ):
        table = rng.standard_normal((rows, EMBED_DIM))
        table /= np.linalg.norm(table, axis=1, keepdims=True)
        store.add(name, table, trainable=False)


def add_context_params(store, num_predicates, context_dim=512, rng=None):
    """Projection, one attention block, feed-forward, and the correction head.

    context_dim is the width the concatenated 600-dim triplet semantics are
    projected to (512 by default).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    d = context_dim
    store.add("context.proj.w", glorot_uniform(rng, 3 * EMBED_DIM, d))
    for gate in ("wq", "wk", "wv", "wo"):
        store.add(f"context.attn.{gate}", glorot_uniform(rng, d, d))
    # no key bias: it shifts every attention row by a constant, which the
    # row softmax cancels exactly, so it would be a dead parameter
    for gate in ("bq", "bv", "bo"):
        store.add(f"context.attn.{gate}", np.zeros(d))
    store.add("context.ffn.w1", glorot_uniform(rng, d, 2 * d))
    store.add("context.ffn.b1", np.zeros(2 * d))
    store.add("context.ffn.w2", glorot_uniform(rng, 2 * d, d))
    store.add("context.ffn.b2", np.zeros(d))
    # corrections start at exactly zero; gradients still flow to the head
    store.add("context.classifier.w", np.zeros((d, num_predicates + 1)))
    store.add("context.classifier.b", np.zeros(num_predicates + 1))


def _check_distribution_rows(name, rows):
    sums = np.sum(rows, axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError(f"{name} rows must sum to 1 (max deviation "
                         f"{np.max(np.abs(sums - 1.0)):.3g})")


def triplet_semantics(pred_dist, subj_dist, obj_dist, store):
    """Project one relation's expected embeddings to a triplet vector.

    The expected embedding of a distribution is its probability-weighted
    average of embedding rows; subject, predicate, and object expectations
    are concatenated in that order and multiplied by the projection.
    """
    out, _ = triplet_semantics_rows(
        np.asarray(pred_dist)[None, :],
        np.asarray(subj_dist)[None, :],
        np.asarray(obj_dist)[None, :],
        store,
    )
    return out[0]


def triplet_semantics_rows(pred_dists, subj_dists, obj_dists, store):
    """Batched triplet_semantics: returns (rows, cache for backward)."""
    _check_distribution_rows("predicate distribution", pred_dists)
    _check_distribution_rows("subject label distribution", subj_dists)
    _check_distribution_rows("object label distribution", obj_dists)
    pred_emb = store["embedding.predicate"]
    obj_emb = store["embedding.object"]
    concat = np.concatenate(
        [subj_dists @ obj_emb, pred_dists @ pred_emb, obj_dists @ obj_emb], axis=1
    )
    rows = concat @ store["context.proj.w"]
    return rows, concat


def triplet_semantics_rows_backward(concat, grad_rows, store):
    """Accumulate projection gradients; return gradient wrt predicate dists."""
    w = store["context.proj.w"]
    store.accumulate("context.proj.w", concat.T @ grad_rows)
    grad_concat = grad_rows @ w.T
    pred_slice = grad_concat[:, EMBED_DIM : 2 * EMBED_DIM]
    return pred_slice @ store["embedding.predicate"].T


def global_token(rows):
    """Whole-graph semantic token: the arithmetic mean of the triplet rows."""
    if rows.shape[0] < 1:
        raise ValueError("global token needs at least one row")
    return rows.mean(axis=0)


def encode_context(x, store):
    """One self-attention block over the rows of x; returns (y, cache).

    No positional encoding: permuting input rows permutes output rows
    identically (up to floating-point summation order).
    """
    d = x.shape[1]
    scale = 1.0 / np.sqrt(d)
    q = linear_forward(x, store["context.attn.wq"], store["context.attn.bq"])
    k = x @ store["context.attn.wk"]
    v = linear_forward(x, store["context.attn.wv"], store["context.attn.bv"])
    scores = (q @ k.T) * scale
    attn = softmax(scores, axis=1)
    heads = attn @ v
    out = linear_forward(heads, store["context.attn.wo"], store["context.attn.bo"])
    x1 = x + out
    pre = linear_forward(x1, store["context.ffn.w1"], store["context.ffn.b1"])
    hidden = relu(pre)
    ff = linear_forward(hidden, store["context.ffn.w2"], store["context.ffn.b2"])
    y = x1 + ff
    cache = {
        "x": x, "q": q, "k": k, "v": v, "attn": attn, "heads": heads,
        "x1": x1, "pre": pre, "hidden": hidden, "scale": scale,
    }
    return y, cache


def encode_context_backward(cache, grad_y, store):
    """Backward through the attention block; accumulates parameter grads."""
    grad_x1 = grad_y.copy()
    grad_hidden, gw2, gb2 = linear_backward(
        cache["hidden"], store["context.ffn.w2"], grad_y
    )
    store.accumulate("context.ffn.w2", gw2)
    store.accumulate("context.ffn.b2", gb2)
    grad_pre = relu_backward(cache["pre"], grad_hidden)
    gx1, gw1, gb1 = linear_backward(cache["x1"], store["context.ffn.w1"], grad_pre)
    store.accumulate("context.ffn.w1", gw1)
    store.accumulate("context.ffn.b1", gb1)
    grad_x1 += gx1

    grad_x = grad_x1.copy()
    grad_heads, gwo, gbo = linear_backward(
        cache["heads"], store["context.attn.wo"], grad_x1
    )
    store.accumulate("context.attn.wo", gwo)
    store.accumulate("context.attn.bo", gbo)
    grad_attn = grad_heads @ cache["v"].T
    grad_v = cache["attn"].T @ grad_heads
    grad_scores = softmax_vjp(cache["attn"], grad_attn, axis=1) * cache["scale"]
    grad_q = grad_scores @ cache["k"]
    grad_k = grad_scores.T @ cache["q"]
    for grad, gate_w, gate_b in (
        (grad_q, "wq", "bq"),
        (grad_k, "wk", None),
        (grad_v, "wv", "bv"),
    ):
        gx, gw, gb = linear_backward(cache["x"], store[f"context.attn.{gate_w}"], grad)
        store.accumulate(f"context.attn.{gate_w}", gw)
        if gate_b is not None:
            store.accumulate(f"context.attn.{gate_b}", gb)
        grad_x += gx
    return grad_x


def semantic_gap_loss(predicted_global, target_global):
    """Mean-squared gap between contextual global tokens: (loss, grad).

    The gradient is with respect to the predicted token only; the target is
    a constant.
    """
    predicted_global = np.asarray(predicted_global, dtype=np.float64)
    target_global = np.asarray(target_global, dtype=np.float64)
    if predicted_global.shape != target_global.shape:
        raise ValueError("global tokens must have equal dimensions")
    d = predicted_global.shape[0]
    diff = predicted_global - target_global
    return float(np.sum(diff * diff) / d), (2.0 / d) * diff


@dataclass
class ContextResult:
    """Forward bundle: logit corrections, gap loss, and backward caches."""

    correction: np.ndarray
    gap_loss: float
    predicted_global: np.ndarray
    target_global: np.ndarray
    cache: dict


def _one_hot_rows(indices, width):
    rows = np.zeros((len(indices), width))
    rows[np.arange(len(indices)), np.asarray(indices, dtype=np.int64)] = 1.0
    return rows


def target_global_token(gt_predicates, gt_subjects, gt_objects, store):
    """Contextual global token of the ground-truth graph (constant path)."""
    n_pred_rows = store["embedding.predicate"].shape[0]
    n_obj_rows = store["embedding.object"].shape[0]
    rows, _ = triplet_semantics_rows(
        _one_hot_rows(gt_predicates, n_pred_rows),
        _one_hot_rows(gt_subjects, n_obj_rows),
        _one_hot_rows(gt_objects, n_obj_rows),
        store,
    )
    stacked = np.vstack([rows, global_token(rows)])
    encoded, _ = encode_context(stacked, store)
    return encoded[-1]


def context_forward(fine_logits, subj_dists, obj_dists, store, ground_truth=None,
                    frozen_target=None):
    """Predicted-path forward: corrections for every relation plus gap loss.

    ground_truth is an optional (gt_predicates, gt_subjects, gt_objects)
    triple; when absent (inference) the gap loss is 0. frozen_target
    bypasses the ground-truth recomputation with a precomputed constant
    token, which is also how the gradient checks freeze the target.
    """
    n = fine_logits.shape[0]
    if n == 0:
        return ContextResult(
            correction=np.zeros_like(fine_logits),
            gap_loss=0.0,
            predicted_global=np.zeros(0),
            target_global=np.zeros(0),
            cache={},
        )
    probs = softmax(fine_logits, axis=1)
    rows, concat = triplet_semantics_rows(probs, subj_dists, obj_dists, store)
    stacked = np.vstack([rows, global_token(rows)])
    encoded, enc_cache = encode_context(stacked, store)
    correction = linear_forward(
        encoded[:n], store["context.classifier.w"], store["context.classifier.b"]
    )
    predicted_global = encoded[n]

    if frozen_target is not None:
        target = np.asarray(frozen_target, dtype=np.float64)
    elif ground_truth is not None:
        target = target_global_token(*ground_truth, store)
    else:
        target = None

    if target is None:
        gap_loss, grad_global = 0.0, np.zeros_like(predicted_global)
        target_out = np.zeros_like(predicted_global)
    else:
        gap_loss, grad_global = semantic_gap_loss(predicted_global, target)
        target_out = target
    cache = {
        "n": n,
        "probs": probs,
        "concat": concat,
        "encoded": encoded,
        "enc_cache": enc_cache,
        "grad_global": grad_global,
    }
    return ContextResult(correction, gap_loss, predicted_global, target_out, cache)


def context_backward(result, grad_correction, grad_gap, store):
    """Backward through the predicted path; returns gradient wrt fine logits.

    grad_correction is dL/d(correction rows); grad_gap is the scalar weight
    on the gap loss in the total objective.
    """
    cache = result.cache
    n = cache["n"]
    if n == 0:
        return np.zeros((0, grad_correction.shape[1] if grad_correction.ndim else 0))
    encoded = cache["encoded"]
    grad_encoded = np.zeros_like(encoded)
    gin, gw, gb = linear_backward(
        encoded[:n], store["context.classifier.w"], grad_correction
    )
    store.accumulate("context.classifier.w", gw)
    store.accumulate("context.classifier.b", gb)
    grad_encoded[:n] = gin
    grad_encoded[n] += grad_gap * cache["grad_global"]
    grad_stacked = encode_context_backward(cache["enc_cache"], grad_encoded, store)
    grad_rows = grad_stacked[:n] + grad_stacked[n] / n
    grad_probs = triplet_semantics_rows_backward(cache["concat"], grad_rows, store)
    return softmax_vjp(cache["probs"], grad_probs, axis=1)
