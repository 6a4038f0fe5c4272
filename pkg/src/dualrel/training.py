"""Three-phase curriculum training loop and fine-branch evaluation.

Each iteration samples a mini-batch of images, runs the coarse branch under
plain cross-entropy and the fine branch under the curriculum objective plus
the context-gap and head-restricted distillation terms, combines them with
the scheduled branch weight, and takes one plain SGD step. Through
iteration k1 the branch weight is 1, so the curriculum term carries no
update and only the coarse branch (plus the gap/distillation terms) train;
the focus then shifts to the fine branch along the schedule. Inference uses
the fine branch only.

Everything is deterministic given the config seed: batch sampling draws
from a dedicated generator stream and gradients accumulate in a fixed
order.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import group_split, head_set, relations_by_image
from .losses import (
    LossBreakdown,
    cross_entropy_rows,
    curriculum_cross_entropy_rows,
    effective_number_weights,
    head_distillation_rows,
    hybrid_loss,
    total_loss,
)
from .metrics import DEFAULT_KS, GroundTruth, RankedPrediction, compute_report
from .model import (
    decode_rows,
    decode_rows_backward,
    extractor_backward,
    extractor_forward,
    fine_branch_forward,
    instance_matrix,
)
from .numerics import ConfigurationError, softmax
from .schedules import ScheduleConfig, branch_weight, head_predicate_weight
from .semantic_context import context_backward, context_forward

WORKERS_ENV = "DUALREL_WORKERS"
LOG_FORMAT_VERSION = 1


def default_schedule(**overrides):
    """Desk-scale schedule: 4000 iterations with breakpoints at 1000/2000.

    The reference setting of 40k iterations with breakpoints at 10k/20k is
    scaled down by 10 with all ratios preserved; the floors (0.1, 0.2)
    and the linear shape are kept as-is. head_threshold=52 separates the 16
    designed head predicates of the default generator config.
    """
    params = dict(k1=1000, k2=2000, total_iterations=4000, beta1=0.1, beta2=0.2,
                  head_threshold=52, kind="linear", nu=0.01)
    params.update(overrides)
    return ScheduleConfig(**params)


@dataclass(frozen=True)
class TrainConfig:
    schedule: ScheduleConfig = field(default_factory=default_schedule)
    tau: float = 2.0
    mu: float = 0.05
    beta_en: float = 0.0
    learning_rate: float = 0.01
    batch_size: int = 12
    hidden_dim: int = 64
    context_dim: int = 32
    seed: int = 0
    disable_curriculum: bool = False
    disable_context: bool = False
    disable_distillation: bool = False
    coarse_only: bool = False
    distill_after_k1: bool = False
    log_every: int = 1
    eval_every: int = 0
    eval_ks: tuple = DEFAULT_KS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if self.mu < 0:
            raise ConfigurationError("mu must be nonnegative")

    @property
    def total_iterations(self):
        return self.schedule.total_iterations


@dataclass(frozen=True)
class LogEntry:
    iteration: int
    breakdown: LossBreakdown
    lambda_head: float


@dataclass
class TrainLog:
    entries: list = field(default_factory=list)
    eval_snapshots: list = field(default_factory=list)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration, component):
        super().__init__(
            f"non-finite {component} at iteration {iteration}; training aborted"
        )
        self.iteration = iteration
        self.component = component


@dataclass
class _BatchContext:
    """Per-iteration constants shared by every image in the mini-batch."""

    alpha: float
    lambda_head: float
    class_weights: np.ndarray
    head_indices: np.ndarray
    head_mask: np.ndarray
    tau: float
    mu: float
    n_relations: int
    n_images: int
    disable_curriculum: bool = False
    disable_context: bool = False
    coarse_only: bool = False
    distillation_on: bool = True
    # test hooks: freeze the constant-treated quantities so finite
    # differences see exactly the function the analytic gradient implements
    frozen_teachers: list = None
    frozen_targets: list = None


def batch_forward_backward(model, batch, ctx):
    """Forward and backward over one mini-batch of images.

    Accumulates gradients of the total objective into the model's store and
    returns the raw sums (ce, curriculum, gap, distillation) before
    normalization. The distillation teacher (coarse logits) and the gap
    target are treated as constants.
    """
    store = model.store
    ce_sum = crm_sum = sc_sum = kd_sum = 0.0
    for idx, image in enumerate(batch):
        x = instance_matrix(model, image)
        h, ecache = extractor_forward(model, x)
        subjects = [inst.subject_class for inst in image]
        objects = [inst.object_class for inst in image]
        labels = np.asarray([inst.gt_predicate for inst in image], dtype=np.int64)

        coarse = decode_rows(model, "coarse", h, subjects, objects)
        ce_losses, ce_grads = cross_entropy_rows(coarse, labels)
        ce_sum += float(np.sum(ce_losses))
        grad_coarse = (ctx.alpha / ctx.n_relations) * ce_grads

        if ctx.coarse_only:
            grad_h = decode_rows_backward(model, "coarse", h, grad_coarse)
            extractor_backward(model, ecache, grad_h)
            continue

        fine = decode_rows(model, "fine", h, subjects, objects)
        result = None
        if ctx.disable_context:
            output = fine
        else:
            frozen = ctx.frozen_targets[idx] if ctx.frozen_targets else None
            result = context_forward(
                fine,
                np.asarray([inst.subject_label_dist for inst in image]),
                np.asarray([inst.object_label_dist for inst in image]),
                store,
                ground_truth=(labels, subjects, objects),
                frozen_target=frozen,
            )
            output = fine + result.correction
            sc_sum += result.gap_loss

        if ctx.disable_curriculum:
            crm_losses, crm_grads = cross_entropy_rows(output, labels)
        else:
            lambda_rows = np.where(ctx.head_mask[labels], ctx.lambda_head, 1.0)
            crm_losses, crm_grads = curriculum_cross_entropy_rows(
                output, labels, ctx.class_weights, lambda_rows
            )
        crm_sum += float(np.sum(crm_losses))
        grad_output = ((1.0 - ctx.alpha) / ctx.n_relations) * crm_grads

        if ctx.distillation_on:
            teacher = ctx.frozen_teachers[idx] if ctx.frozen_teachers else coarse
            kd_losses, kd_grads = head_distillation_rows(
                teacher, output, ctx.tau, ctx.head_indices
            )
            kd_sum += float(np.sum(kd_losses))
            grad_output = grad_output + (ctx.mu / ctx.n_relations) * kd_grads

        grad_fine = grad_output.copy()
        if result is not None:
            grad_fine += context_backward(
                result, grad_output, 1.0 / ctx.n_images, store
            )
        grad_h = decode_rows_backward(model, "coarse", h, grad_coarse)
        grad_h += decode_rows_backward(model, "fine", h, grad_fine)
        extractor_backward(model, ecache, grad_h)
    return ce_sum, crm_sum, sc_sum, kd_sum


def _make_context(cfg, vocab, k, batch):
    sched = cfg.schedule
    alpha = 1.0 if cfg.coarse_only else branch_weight(k, sched)
    lambda_head = head_predicate_weight(k, True, sched)
    heads = np.asarray(head_set(vocab, sched.head_threshold), dtype=np.int64)
    head_mask = np.zeros(vocab.num_predicates + 1, dtype=bool)
    head_mask[heads] = True
    distillation_on = not (cfg.disable_distillation or cfg.coarse_only)
    if distillation_on and cfg.distill_after_k1 and k <= sched.k1:
        distillation_on = False
    return _BatchContext(
        alpha=alpha,
        lambda_head=lambda_head,
        class_weights=effective_number_weights(vocab.train_counts, cfg.beta_en),
        head_indices=heads,
        head_mask=head_mask,
        tau=cfg.tau,
        mu=cfg.mu,
        n_relations=sum(len(image) for image in batch),
        n_images=len(batch),
        disable_curriculum=cfg.disable_curriculum,
        disable_context=cfg.disable_context,
        coarse_only=cfg.coarse_only,
        distillation_on=distillation_on,
    )


def train(cfg, vocab, train_instances, model, eval_instances=None):
    """Run the curriculum loop; mutates the model, returns the TrainLog.

    When eval_instances is given, an evaluation snapshot is appended every
    eval_every iterations (if nonzero) and at the end of training.
    """
    sched = cfg.schedule
    if not (cfg.disable_distillation or cfg.coarse_only):
        if len(head_set(vocab, sched.head_threshold)) < 2:
            raise ConfigurationError(
                "distillation needs at least two head predicates; raise or "
                "lower head_threshold, or disable distillation"
            )
    images = relations_by_image(train_instances)
    if not images:
        raise ValueError("training split is empty")
    # class weights and head set are constant across iterations; build once
    template = _make_context(cfg, vocab, 1, images[:1])
    batch_rng = np.random.default_rng([cfg.seed, 1])
    log = TrainLog()

    for k in range(1, sched.total_iterations + 1):
        chosen = batch_rng.choice(
            len(images), size=min(cfg.batch_size, len(images)), replace=False
        )
        batch = [images[i] for i in chosen]
        alpha = 1.0 if cfg.coarse_only else branch_weight(k, sched)
        distillation_on = not (cfg.disable_distillation or cfg.coarse_only)
        if distillation_on and cfg.distill_after_k1 and k <= sched.k1:
            distillation_on = False
        ctx = replace(
            template,
            alpha=alpha,
            lambda_head=head_predicate_weight(k, True, sched),
            n_relations=sum(len(image) for image in batch),
            n_images=len(batch),
            distillation_on=distillation_on,
        )
        model.store.zero_grads()
        ce_sum, crm_sum, sc_sum, kd_sum = batch_forward_backward(model, batch, ctx)
        l_ce = ce_sum / ctx.n_relations
        l_crm = crm_sum / ctx.n_relations
        l_sc = sc_sum / ctx.n_images
        l_kd = kd_sum / ctx.n_relations
        l_hybrid = hybrid_loss(alpha, l_ce, l_crm)
        l_total = total_loss(l_hybrid, l_sc, l_kd, cfg.mu)
        for name, value in (
            ("l_ce", l_ce), ("l_crm", l_crm), ("l_sc", l_sc),
            ("l_kd", l_kd), ("l_total", l_total),
        ):
            if not np.isfinite(value):
                raise TrainingDiverged(k, name)
        model.store.sgd_step(cfg.learning_rate)
        if k % cfg.log_every == 0 or k == sched.total_iterations:
            log.entries.append(
                LogEntry(
                    k,
                    LossBreakdown(l_ce, l_crm, l_hybrid, l_sc, l_kd, l_total, alpha),
                    ctx.lambda_head,
                )
            )
        if (
            eval_instances is not None
            and cfg.eval_every
            and k % cfg.eval_every == 0
            and k < sched.total_iterations
        ):
            log.eval_snapshots.append(
                (k, evaluate(model, eval_instances, vocab, cfg.eval_ks))
            )
    if eval_instances is not None:
        log.eval_snapshots.append(
            (
                sched.total_iterations,
                evaluate(model, eval_instances, vocab, cfg.eval_ks),
            )
        )
    return log


def predictions_for_images(model, images, workers=None):
    """Fine-branch prediction scores per relation, one entry per predicate.

    workers > 1 parallelizes the per-image forward passes (bounded by the
    DUALREL_WORKERS environment variable when unset); aggregation order is
    fixed so results do not depend on scheduling.
    """
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or "1")

    def image_probs(image):
        result = fine_branch_forward(model, image, with_gap=False)
        return softmax(result.output_logits, axis=1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_probs = list(pool.map(image_probs, images))
    else:
        all_probs = [image_probs(image) for image in images]

    preds = []
    num_predicates = model.num_predicates
    for image, probs in zip(images, all_probs):
        for inst, row in zip(image, probs):
            for predicate in range(1, num_predicates + 1):
                preds.append(
                    RankedPrediction(
                        image_id=inst.image_id,
                        subject_class=inst.subject_class,
                        object_class=inst.object_class,
                        predicate=predicate,
                        score=float(row[predicate]),
                    )
                )
    return preds


def evaluate(model, test_instances, vocab, ks=DEFAULT_KS, workers=None):
    """Fine-branch evaluation report over the test split."""
    if not test_instances:
        raise ValueError("evaluation needs a nonempty test split")
    images = relations_by_image(test_instances)
    preds = predictions_for_images(model, images, workers=workers)
    gts = [
        GroundTruth(inst.image_id, inst.subject_class, inst.object_class,
                    inst.gt_predicate)
        for inst in test_instances
        if inst.gt_predicate != 0
    ]
    groups = group_split(vocab)
    return compute_report(preds, gts, vocab.num_predicates, groups, ks)


# ---------------------------------------------------------------------------
# training-log file format
# ---------------------------------------------------------------------------


def _f(value):
    return repr(float(value))


def write_log(path, log, vocab=None):
    with open(path, "w") as fh:
        fh.write(f"# training-log {LOG_FORMAT_VERSION}\n")
        for entry in log.entries:
            b = entry.breakdown
            fh.write(
                f"iter {entry.iteration} alpha={_f(b.alpha_used)} "
                f"lambda_head={_f(entry.lambda_head)} l_ce={_f(b.l_ce)} "
                f"l_crm={_f(b.l_crm)} l_hybrid={_f(b.l_hybrid)} "
                f"l_sc={_f(b.l_sc)} l_kd={_f(b.l_kd)} l_total={_f(b.l_total)}\n"
            )
        for iteration, report in log.eval_snapshots:
            for k in report.ks:
                many, medium, few = (
                    "absent" if g is None else _f(g)
                    for g in report.group_recalls[k]
                )
                fh.write(
                    f"eval {iteration} {k} r={_f(report.r_at_k[k])} "
                    f"mr={_f(report.mr_at_k[k])} m={_f(report.m_at_k[k])} "
                    f"many={many} medium={medium} few={few}\n"
                )
                per_class = report.per_predicate[k]
                for i in range(1, per_class.shape[0]):
                    name = vocab.names[i] if vocab else str(i)
                    count = int(vocab.train_counts[i]) if vocab else 0
                    recall = (
                        "absent" if np.isnan(per_class[i]) else _f(per_class[i])
                    )
                    fh.write(
                        f"evalpred {iteration} {k} {i} {name} {count} {recall}\n"
                    )


def parse_log(path):
    """Parse a training log into (iteration rows, eval rows, per-pred rows)."""
    iters, evals, evalpreds = [], [], []
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "training-log"]:
            raise ValueError(f"{path} is not a training log")
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "iter":
                row = {"iteration": int(tok[1])}
                for pair in tok[2:]:
                    key, value = pair.split("=")
                    row[key] = float(value)
                iters.append(row)
            elif tok[0] == "eval":
                row = {"iteration": int(tok[1]), "K": int(tok[2])}
                for pair in tok[3:]:
                    key, value = pair.split("=")
                    row[key] = None if value == "absent" else float(value)
                evals.append(row)
            elif tok[0] == "evalpred":
                evalpreds.append(
                    {
                        "iteration": int(tok[1]),
                        "K": int(tok[2]),
                        "index": int(tok[3]),
                        "name": tok[4],
                        "train_count": int(tok[5]),
                        "recall": None if tok[6] == "absent" else float(tok[6]),
                    }
                )
            else:
                raise ValueError(f"unknown log record {tok[0]!r} in {path}")
    return iters, evals, evalpreds
