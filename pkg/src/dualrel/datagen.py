"""Synthetic long-tailed relation data.

The vocabulary is organized as head predicates with tail refinements: every
tail predicate draws its interaction pattern from its parent head's anchor
vector plus a fixed tail-specific offset, so a classifier can separate a
tail from its parent only through that offset (with offset scale 0 the two
are indistinguishable by construction). Training frequencies follow a Zipf
law over predicate rank with every head ranked above every tail; the test
split is class-balanced so per-class recall differences are attributable to
the model rather than to test frequencies.

Relations are grouped into synthetic images of a fixed size so the context
encoder sees coherent relation sets, and each image's subject-object pairs
are drawn from per-head-group canonical pairs, which gives the frequency
prior the same head-favoring shape it has on real scene-graph data.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .numerics import ConfigurationError

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GeneratorConfig:
    num_object_classes: int = 16
    num_head_predicates: int = 16
    tails_per_head: int = 2
    feature_dim: int = 16
    zipf_exponent: float = 1.2
    tail_offset_scale: float = 0.2
    noise_scale: float = 0.4
    label_noise: float = 0.2
    pair_concentration: float = 0.7
    num_train: int = 5000
    num_test: int = 960
    relations_per_image: int = 18
    seed: int = 0

    @property
    def num_predicates(self):
        return self.num_head_predicates * (1 + self.tails_per_head)

    def __post_init__(self):
        if self.num_head_predicates < 1:
            raise ConfigurationError("need at least one head predicate")
        if self.feature_dim < 4:
            raise ConfigurationError("feature_dim must be at least 4")
        if self.num_train < self.num_predicates:
            raise ConfigurationError(
                "num_train must be at least the number of predicates"
            )
        if self.zipf_exponent <= 0:
            raise ConfigurationError("zipf_exponent must be positive")
        if self.num_object_classes < 2:
            raise ConfigurationError("need at least two object classes")
        if self.relations_per_image < 1:
            raise ConfigurationError("relations_per_image must be positive")
        if not 0.0 <= self.pair_concentration <= 1.0:
            raise ConfigurationError("pair_concentration must lie in [0, 1]")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigurationError("label_noise must lie in [0, 1)")


@dataclass
class PredicateVocabulary:
    """Predicate labels, training frequencies, and the head/tail structure.

    Index 0 is the background class (no parent, count 0 in generated data);
    heads are their own parent; every tail has exactly one head parent.
    """

    names: list
    train_counts: np.ndarray
    parent_of: np.ndarray

    @property
    def num_predicates(self):
        return len(self.names) - 1

    def tail_indices(self):
        return [
            i
            for i in range(1, len(self.names))
            if self.parent_of[i] != i and self.parent_of[i] > 0
        ]

    def head_parent_indices(self):
        return [i for i in range(1, len(self.names)) if self.parent_of[i] == i]


@dataclass
class RelationInstance:
    """One subject-predicate-object sample."""

    image_id: int
    subject_class: int
    object_class: int
    gt_predicate: int
    subject_feature: np.ndarray
    object_feature: np.ndarray
    union_feature: np.ndarray
    subject_label_dist: np.ndarray
    object_label_dist: np.ndarray


@dataclass
class PriorBias:
    """Per (subject, object) pair log-frequency bias over predicates.

    Slices for pairs never seen in training are all-zero.
    """

    table: np.ndarray


def zipf_allocation(num_classes, exponent, total):
    """Integer counts proportional to rank**(-exponent), summing to total.

    Largest-remainder rounding with ties broken by rank; raises if any
    class would receive zero samples.
    """
    ranks = np.arange(1, num_classes + 1, dtype=np.float64)
    weights = ranks**-exponent
    raw = total * weights / weights.sum()
    counts = np.floor(raw).astype(np.int64)
    remainder = total - int(counts.sum())
    frac = raw - counts
    order = np.lexsort((ranks, -frac))
    counts[order[:remainder]] += 1
    if counts.min() <= 0:
        raise ConfigurationError(
            f"zipf allocation gives zero samples to the rarest class "
            f"({num_classes} classes, exponent {exponent}, total {total})"
        )
    return counts


def _build_vocabulary(cfg):
    names = ["background"]
    parents = [-1]
    for h in range(1, cfg.num_head_predicates + 1):
        names.append(f"head{h:02d}")
        parents.append(h)
    for h in range(1, cfg.num_head_predicates + 1):
        for t in range(cfg.tails_per_head):
            names.append(f"head{h:02d}.t{t}")
            parents.append(h)
    counts = np.zeros(len(names), dtype=np.int64)
    counts[1:] = zipf_allocation(cfg.num_predicates, cfg.zipf_exponent, cfg.num_train)
    return PredicateVocabulary(names, counts, np.asarray(parents, dtype=np.int64))


def _label_dist(rng, true_class, num_object_classes, label_noise):
    dist = np.zeros(num_object_classes + 1)
    dist[true_class] = 1.0
    noise = rng.random(num_object_classes + 1)
    noise /= noise.sum()
    return (1.0 - label_noise) * dist + label_noise * noise


def _sample_instance(rng, cfg, predicate, parent, obj_anchors, pattern_anchors,
                     canonical_pairs):
    d = cfg.feature_dim
    if rng.random() < cfg.pair_concentration:
        subj, obj = canonical_pairs[parent]
    else:
        subj = int(rng.integers(1, cfg.num_object_classes + 1))
        obj = int(rng.integers(1, cfg.num_object_classes + 1))
    return RelationInstance(
        image_id=-1,
        subject_class=subj,
        object_class=obj,
        gt_predicate=predicate,
        subject_feature=obj_anchors[subj] + cfg.noise_scale * rng.standard_normal(d),
        object_feature=obj_anchors[obj] + cfg.noise_scale * rng.standard_normal(d),
        union_feature=pattern_anchors[predicate]
        + cfg.noise_scale * rng.standard_normal(d),
        subject_label_dist=_label_dist(
            rng, subj, cfg.num_object_classes, cfg.label_noise
        ),
        object_label_dist=_label_dist(rng, obj, cfg.num_object_classes, cfg.label_noise),
    )


def _assign_images(rng, instances, vocab, relations_per_image):
    """Pack relations into group-coherent synthetic images.

    Every image draws its relations from two or three head groups, so the
    rest of an image carries evidence about which interaction patterns are
    plausible for each relation (the signal the context encoder exploits).
    Exact per-predicate counts are preserved: samples are only regrouped,
    never resampled.
    """
    pools = {}
    for inst in instances:
        parent = int(vocab.parent_of[inst.gt_predicate])
        pools.setdefault(parent, []).append(inst)
    for parent in pools:
        pool = pools[parent]
        order = rng.permutation(len(pool))
        pools[parent] = [pool[i] for i in order]

    packed = []
    image_id = 0
    while pools:
        parents = sorted(pools)
        take = min(int(rng.integers(2, 4)), len(parents))
        sizes = np.array([len(pools[p]) for p in parents], dtype=np.float64)
        chosen = rng.choice(
            len(parents), size=take, replace=False, p=sizes / sizes.sum()
        )
        active = [parents[i] for i in sorted(chosen)]
        for _ in range(relations_per_image):
            active = [p for p in active if pools.get(p)]
            if not active:
                if not pools:
                    break
                active = [sorted(pools)[int(rng.integers(0, len(pools)))]]
            parent = active[int(rng.integers(0, len(active)))]
            inst = pools[parent].pop()
            inst.image_id = image_id
            packed.append(inst)
            if not pools[parent]:
                del pools[parent]
        image_id += 1
    return packed


def generate_dataset(cfg):
    """Build (vocabulary, train split, test split); bit-identical per seed."""
    vocab = _build_vocabulary(cfg)
    rng = np.random.default_rng(cfg.seed)
    d = cfg.feature_dim
    n_obj = cfg.num_object_classes
    n_pred = cfg.num_predicates

    obj_anchors = rng.standard_normal((n_obj + 1, d))
    head_anchors = rng.standard_normal((cfg.num_head_predicates + 1, d))
    offsets = rng.standard_normal((n_pred + 1, d)) * cfg.tail_offset_scale
    pattern_anchors = np.zeros((n_pred + 1, d))
    for i in range(1, n_pred + 1):
        parent = vocab.parent_of[i]
        pattern_anchors[i] = head_anchors[parent]
        if i != parent:
            pattern_anchors[i] += offsets[i]
    canonical_pairs = {}
    for h in range(1, cfg.num_head_predicates + 1):
        canonical_pairs[h] = (
            int(rng.integers(1, n_obj + 1)),
            int(rng.integers(1, n_obj + 1)),
        )

    train = []
    for i in range(1, n_pred + 1):
        parent = int(vocab.parent_of[i])
        for _ in range(int(vocab.train_counts[i])):
            train.append(
                _sample_instance(
                    rng, cfg, i, parent, obj_anchors, pattern_anchors, canonical_pairs
                )
            )
    train = _assign_images(rng, train, vocab, cfg.relations_per_image)

    per_class = cfg.num_test // n_pred
    if per_class < 1:
        raise ConfigurationError(
            f"num_test={cfg.num_test} is too small for a class-balanced split "
            f"over {n_pred} predicates"
        )
    test = []
    for i in range(1, n_pred + 1):
        parent = int(vocab.parent_of[i])
        for _ in range(per_class):
            test.append(
                _sample_instance(
                    rng, cfg, i, parent, obj_anchors, pattern_anchors, canonical_pairs
                )
            )
    test = _assign_images(rng, test, vocab, cfg.relations_per_image)
    return vocab, train, test


def head_set(vocab, threshold):
    """Indices of predicates with more than ``threshold`` training samples."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    return [
        i for i in range(1, len(vocab.names)) if vocab.train_counts[i] > threshold
    ]


def group_split(vocab):
    """Partition predicates by training frequency into (many, medium, few).

    Predicates are sorted by descending count (ties by ascending index) and
    split into thirds of sizes ceil(n/3), ceil((n - first)/2), remainder;
    for 50 predicates this yields 17/17/16.
    """
    n = vocab.num_predicates
    order = sorted(range(1, n + 1), key=lambda i: (-int(vocab.train_counts[i]), i))
    n_many = math.ceil(n / 3)
    n_medium = math.ceil((n - n_many) / 2)
    many = sorted(order[:n_many])
    medium = sorted(order[n_many : n_many + n_medium])
    few = sorted(order[n_many + n_medium :])
    return many, medium, few


def build_prior_bias(train, vocab, epsilon=1e-3):
    """Laplace-smoothed log-frequency bias per (subject, object) pair.

    table[s][o][r] = log((count(s,o,r) + eps) / (count(s,o) + eps*(R+1)));
    pairs never observed get an all-zero slice.
    """
    if not train:
        raise ValueError("prior bias needs a nonempty training split")
    n_obj = train[0].subject_label_dist.shape[0] - 1
    n_classes = vocab.num_predicates + 1
    counts = np.zeros((n_obj + 1, n_obj + 1, n_classes))
    for inst in train:
        counts[inst.subject_class, inst.object_class, inst.gt_predicate] += 1.0
    totals = counts.sum(axis=2)
    table = np.zeros_like(counts)
    seen = totals > 0
    table[seen] = np.log(
        (counts[seen] + epsilon) / (totals[seen][:, None] + epsilon * n_classes)
    )
    return PriorBias(table)


def relations_by_image(instances):
    """Group instances into per-image lists, ordered by image id."""
    groups = {}
    for inst in instances:
        groups.setdefault(inst.image_id, []).append(inst)
    return [groups[i] for i in sorted(groups)]


# ---------------------------------------------------------------------------
# file formats: one relation per line, floats as shortest round-trip decimals
# ---------------------------------------------------------------------------


def _fmt_floats(values):
    return " ".join(repr(float(v)) for v in values)


def save_vocabulary(path, vocab):
    with open(path, "w") as fh:
        for i, name in enumerate(vocab.names):
            fh.write(
                f"{i} {name} {int(vocab.train_counts[i])} {int(vocab.parent_of[i])}\n"
            )


def load_vocabulary(path):
    names, counts, parents = [], [], []
    with open(path) as fh:
        for line in fh:
            idx, name, count, parent = line.split()
            if int(idx) != len(names):
                raise ValueError(f"vocabulary indices out of order in {path}")
            names.append(name)
            counts.append(int(count))
            parents.append(int(parent))
    return PredicateVocabulary(
        names, np.asarray(counts, dtype=np.int64), np.asarray(parents, dtype=np.int64)
    )


def save_relations(path, instances, num_object_classes, num_predicates, feature_dim):
    with open(path, "w") as fh:
        fh.write(
            f"relations {DATASET_FORMAT_VERSION} {num_object_classes} "
            f"{num_predicates} {feature_dim}\n"
        )
        for inst in instances:
            fields = [
                str(inst.image_id),
                str(inst.subject_class),
                str(inst.object_class),
                str(inst.gt_predicate),
                _fmt_floats(inst.subject_feature),
                _fmt_floats(inst.object_feature),
                _fmt_floats(inst.union_feature),
                _fmt_floats(inst.subject_label_dist),
                _fmt_floats(inst.object_label_dist),
            ]
            fh.write(" ".join(fields) + "\n")


def load_relations(path):
    """Returns (instances, num_object_classes, num_predicates, feature_dim)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != "relations":
            raise ValueError(f"{path} is not a relation file")
        version, n_obj, n_pred, d = (int(x) for x in header[1:])
        if version != DATASET_FORMAT_VERSION:
            raise ValueError(f"unsupported relation file version {version}")
        instances = []
        for line in fh:
            tok = line.split()
            expected = 4 + 3 * d + 2 * (n_obj + 1)
            if len(tok) != expected:
                raise ValueError(
                    f"malformed relation line in {path}: expected {expected} "
                    f"fields, got {len(tok)}"
                )
            vals = np.array([float(x) for x in tok[4:]])
            parts = np.split(vals, [d, 2 * d, 3 * d, 3 * d + n_obj + 1])
            instances.append(
                RelationInstance(
                    image_id=int(tok[0]),
                    subject_class=int(tok[1]),
                    object_class=int(tok[2]),
                    gt_predicate=int(tok[3]),
                    subject_feature=parts[0],
                    object_feature=parts[1],
                    union_feature=parts[2],
                    subject_label_dist=parts[3],
                    object_label_dist=parts[4],
                )
            )
    return instances, n_obj, n_pred, d


def save_dataset(directory, cfg, vocab, train, test):
    os.makedirs(directory, exist_ok=True)
    save_vocabulary(os.path.join(directory, "vocab.txt"), vocab)
    for name, split in (("train.txt", train), ("test.txt", test)):
        save_relations(
            os.path.join(directory, name),
            split,
            cfg.num_object_classes,
            cfg.num_predicates,
            cfg.feature_dim,
        )


def load_dataset(directory):
    """Returns (vocab, train, test, num_object_classes, feature_dim)."""
    vocab = load_vocabulary(os.path.join(directory, "vocab.txt"))
    train, n_obj, n_pred, d = load_relations(os.path.join(directory, "train.txt"))
    test, n_obj2, n_pred2, d2 = load_relations(os.path.join(directory, "test.txt"))
    if (n_obj, n_pred, d) != (n_obj2, n_pred2, d2):
        raise ValueError("train and test headers disagree")
    if n_pred != vocab.num_predicates:
        raise ValueError("vocabulary size disagrees with relation files")
    return vocab, train, test, n_obj, d
