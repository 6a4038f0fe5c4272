"""Dual-branch relation model.

One shared two-layer feed-forward extractor maps each relation's
concatenated inputs (subject/object/union features plus the two object
label distributions) to a context vector. Two linear decoders read it: the
"coarse" branch, trained conventionally, and the "fine" branch, trained
with the curriculum objectives and used at inference. Both branches add the
frozen subject-object prior-bias slice to their logits. The extractor is a
single set of parameters, so sharing between branches is by construction.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import semantic_context
from .numerics import (
    ParamStore,
    glorot_uniform,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
)

BRANCHES = ("coarse", "fine")
CHECKPOINT_MAGIC = b"DBRM"
CHECKPOINT_VERSION = 1


@dataclass
class DualBranchModel:
    store: ParamStore
    num_object_classes: int
    num_predicates: int
    feature_dim: int
    hidden_dim: int
    context_dim: int

    @property
    def num_classes(self):
        return self.num_predicates + 1

    @property
    def input_dim(self):
        return 3 * self.feature_dim + 2 * (self.num_object_classes + 1)

    @classmethod
    def build(cls, num_object_classes, num_predicates, feature_dim, hidden_dim=64,
              context_dim=64, prior_table=None, seed=0):
        """Deterministically initialized model; prior defaults to all-zero."""
        rng = np.random.default_rng(seed)
        model = cls(
            store=ParamStore(),
            num_object_classes=num_object_classes,
            num_predicates=num_predicates,
            feature_dim=feature_dim,
            hidden_dim=hidden_dim,
            context_dim=context_dim,
        )
        store = model.store
        store.add("extractor.l1.w", glorot_uniform(rng, model.input_dim, hidden_dim))
        store.add("extractor.l1.b", np.zeros(hidden_dim))
        store.add("extractor.l2.w", glorot_uniform(rng, hidden_dim, hidden_dim))
        store.add("extractor.l2.b", np.zeros(hidden_dim))
        for branch in BRANCHES:
            store.add(
                f"decoder.{branch}.w",
                glorot_uniform(rng, hidden_dim, model.num_classes),
            )
            store.add(f"decoder.{branch}.b", np.zeros(model.num_classes))
        semantic_context.add_context_params(
            store, num_predicates, context_dim=context_dim, rng=rng
        )
        semantic_context.add_embeddings(store, num_predicates, num_object_classes, rng)
        if prior_table is None:
            prior_table = np.zeros(
                (num_object_classes + 1, num_object_classes + 1, model.num_classes)
            )
        expected = (num_object_classes + 1, num_object_classes + 1, model.num_classes)
        if prior_table.shape != expected:
            raise ValueError(
                f"prior table shape {prior_table.shape} does not match {expected}"
            )
        store.add("prior.table", prior_table, trainable=False)
        return model


def instance_matrix(model, instances):
    """Stack instances into the extractor input matrix, validating dims."""
    rows = []
    for inst in instances:
        if inst.subject_feature.shape[0] != model.feature_dim:
            raise ValueError(
                f"feature dim {inst.subject_feature.shape[0]} does not match "
                f"model feature_dim {model.feature_dim}"
            )
        if inst.subject_label_dist.shape[0] != model.num_object_classes + 1:
            raise ValueError(
                "label distribution width does not match the model's object classes"
            )
        rows.append(
            np.concatenate(
                [
                    inst.subject_feature,
                    inst.object_feature,
                    inst.union_feature,
                    inst.subject_label_dist,
                    inst.object_label_dist,
                ]
            )
        )
    return np.asarray(rows)


def extractor_forward(model, x):
    """Shared extractor: linear -> relu -> linear. Returns (h, cache)."""
    store = model.store
    pre = linear_forward(x, store["extractor.l1.w"], store["extractor.l1.b"])
    hidden = relu(pre)
    h = linear_forward(hidden, store["extractor.l2.w"], store["extractor.l2.b"])
    return h, {"x": x, "pre": pre, "hidden": hidden}


def extractor_backward(model, cache, grad_h):
    """Accumulate extractor gradients for a batch of context-vector grads."""
    store = model.store
    grad_hidden, gw2, gb2 = linear_backward(
        cache["hidden"], store["extractor.l2.w"], grad_h
    )
    store.accumulate("extractor.l2.w", gw2)
    store.accumulate("extractor.l2.b", gb2)
    grad_pre = relu_backward(cache["pre"], grad_hidden)
    _, gw1, gb1 = linear_backward(cache["x"], store["extractor.l1.w"], grad_pre)
    store.accumulate("extractor.l1.w", gw1)
    store.accumulate("extractor.l1.b", gb1)


def extract_features(model, instance):
    """Context vector for one relation; identical for both branches."""
    h, _ = extractor_forward(model, instance_matrix(model, [instance]))
    return h[0]


def _check_classes(model, subjects, objects):
    for value in list(subjects) + list(objects):
        if not 0 <= value <= model.num_object_classes:
            raise ValueError(
                f"object class {value} out of range [0, {model.num_object_classes}]"
            )


def prior_rows(model, subjects, objects):
    _check_classes(model, subjects, objects)
    return model.store["prior.table"][np.asarray(subjects), np.asarray(objects)]


def decode(model, branch, context, subject_class, object_class):
    """Branch logits: linear map of the context plus the pair's prior slice."""
    if branch not in BRANCHES:
        raise ValueError(f"unknown branch {branch!r}")
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (model.hidden_dim,):
        raise ValueError(
            f"context width {context.shape} does not match hidden_dim "
            f"{model.hidden_dim}"
        )
    return decode_rows(model, branch, context[None, :], [subject_class],
                       [object_class])[0]


def decode_rows(model, branch, contexts, subjects, objects):
    store = model.store
    logits = linear_forward(
        contexts, store[f"decoder.{branch}.w"], store[f"decoder.{branch}.b"]
    )
    return logits + prior_rows(model, subjects, objects)


def decode_rows_backward(model, branch, contexts, grad_logits):
    """Accumulate decoder grads; returns gradient wrt the context rows."""
    store = model.store
    grad_ctx, gw, gb = linear_backward(
        contexts, store[f"decoder.{branch}.w"], grad_logits
    )
    store.accumulate(f"decoder.{branch}.w", gw)
    store.accumulate(f"decoder.{branch}.b", gb)
    return grad_ctx


@dataclass
class FineBranchResult:
    """Fine-branch logits before and after context correction."""

    fine_logits: np.ndarray
    correction: np.ndarray
    output_logits: np.ndarray
    gap_loss: float


def fine_branch_forward(model, instances, with_gap=True):
    """Inference path for one image's relations: fine decode + correction.

    The gap loss is computed from the instances' ground-truth annotations
    when with_gap is true; at inference it can be skipped, the correction is
    always applied.
    """
    if not instances:
        raise ValueError("need at least one relation in the image")
    x = instance_matrix(model, instances)
    h, _ = extractor_forward(model, x)
    subjects = [inst.subject_class for inst in instances]
    objects = [inst.object_class for inst in instances]
    fine = decode_rows(model, "fine", h, subjects, objects)
    ground_truth = None
    if with_gap:
        ground_truth = (
            [inst.gt_predicate for inst in instances],
            subjects,
            objects,
        )
    result = semantic_context.context_forward(
        fine,
        np.asarray([inst.subject_label_dist for inst in instances]),
        np.asarray([inst.object_label_dist for inst in instances]),
        model.store,
        ground_truth=ground_truth,
    )
    return FineBranchResult(
        fine_logits=fine,
        correction=result.correction,
        output_logits=fine + result.correction,
        gap_loss=result.gap_loss,
    )


# ---------------------------------------------------------------------------
# checkpoints: little-endian binary, parameters in sorted-name order
# ---------------------------------------------------------------------------


def save_checkpoint(path, model):
    store = model.store
    names = store.names()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<6I",
                CHECKPOINT_VERSION,
                model.feature_dim,
                model.hidden_dim,
                model.context_dim,
                model.num_predicates,
                model.num_object_classes,
            )
        )
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            raw = name.encode("utf-8")
            arr = store[name]
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BB", int(store.is_trainable(name)), arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a model checkpoint")
        version, feature_dim, hidden_dim, context_dim, n_pred, n_obj = struct.unpack(
            "<6I", fh.read(24)
        )
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        store = ParamStore()
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            trainable, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").astype(np.float64)
            store.add(name, data.reshape(shape), trainable=bool(trainable))
    return DualBranchModel(
        store=store,
        num_object_classes=n_obj,
        num_predicates=n_pred,
        feature_dim=feature_dim,
        hidden_dim=hidden_dim,
        context_dim=context_dim,
    )
