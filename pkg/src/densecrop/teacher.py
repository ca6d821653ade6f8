"""Mean-teacher semi-supervised training with density-crop discovery.

The student network trains by gradient descent on a combined supervised
and unsupervised loss; the teacher is an exponential moving average of the
student and supplies confidence-thresholded pseudo-labels for unlabeled
images. Training starts with a supervised-only burn-in whose final weights
seed both networks. From a configurable iteration, density crops are
discovered on unlabeled images from teacher pseudo-labels; their upscaled
children join the unlabeled pool, which is what produces extra
pseudo-labels for clustered small objects.

Every source of randomness is derived from (root seed, purpose, iteration,
image), so runs are bit-reproducible and resumable, and results do not
depend on worker count.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .croplab import CropParams, label_density_crops
from .dataset import (
    Annotation,
    PSEUDO,
    SceneSample,
    UpscalePolicy,
    make_crop_children,
)
from .detect import (
    LossResult,
    SupervisedBatch,
    ToyDetector,
    UnsupervisedBatch,
    WeightVector,
    loss_sup,
    loss_unsup,
)
from .errors import ConfigError, DataError, InvariantViolation
from .geometry import Detection
from .seeding import rng_for

__all__ = [
    "TrainerConfig",
    "TrainerState",
    "IterationLog",
    "burn_in",
    "filter_pseudo_labels",
    "ema_update",
    "combined_loss",
    "discover_unlabeled_crops",
    "train",
    "write_run_report",
    "write_checkpoint",
    "read_checkpoint",
]


@dataclass(frozen=True)
class TrainerConfig:
    """Schedule and loss hyperparameters for one training run.

    ``crop_start_iter`` may exceed ``max_iters``, in which case crops are
    never discovered on unlabeled images (the plain mean-teacher setting).
    """

    burn_in_iters: int
    max_iters: int
    crop_start_iter: int
    learning_rate: float
    lambda_unsup: float = 4.0
    tau: float = 0.7
    alpha: float = 0.9996
    crop_recompute_period: int = 10_000
    data_ratio: float = 1.0
    labeled_batch: int = 2
    lr_decay_iter: int | None = None
    lr_decay_factor: float = 0.1
    crops_on_labeled: bool = False
    crop_params: CropParams = field(default_factory=CropParams)
    upscale: UpscalePolicy = field(default_factory=UpscalePolicy)
    checkpoint_interval: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.burn_in_iters < 0 or self.max_iters < 0:
            raise ConfigError("iteration counts must be >= 0")
        if self.burn_in_iters > self.max_iters:
            raise ConfigError(
                f"burn_in_iters {self.burn_in_iters} exceeds max_iters {self.max_iters}"
            )
        if self.crop_start_iter <= self.burn_in_iters:
            raise ConfigError(
                f"crop_start_iter {self.crop_start_iter} must be > burn_in_iters {self.burn_in_iters}"
            )
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if self.lambda_unsup < 0:
            raise ConfigError(f"lambda_unsup must be >= 0, got {self.lambda_unsup}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.data_ratio < 0:
            raise ConfigError("data_ratio must be >= 0")
        if self.labeled_batch < 1:
            raise ConfigError("labeled_batch must be >= 1")
        if self.crop_recompute_period < 1:
            raise ConfigError("crop_recompute_period must be >= 1")

    def learning_rate_at(self, iteration: int) -> float:
        if self.lr_decay_iter is not None and iteration > self.lr_decay_iter:
            return self.learning_rate * self.lr_decay_factor
        return self.learning_rate


@dataclass
class IterationLog:
    iteration: int
    lr: float
    loss_total: float
    loss_sup_cls: float
    loss_sup_reg: float
    loss_unsup: float
    pseudo_per_image: float
    unlabeled_images: int
    crops_cached: int


@dataclass
class CropCacheEntry:
    crops: list
    computed_iter: int
    child_ids: list


@dataclass
class TrainerState:
    """Everything the training loop owns.

    The teacher weight vector only ever changes through the EMA update;
    ``teacher_hash`` is refreshed there and nowhere else, so any stray
    mutation shows up as an integrity failure.
    """

    student: WeightVector
    teacher: WeightVector
    iteration: int = 0
    crop_cache: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    teacher_hash: str = ""

    def verify_teacher_integrity(self) -> bool:
        return self.teacher_hash == _weights_hash(self.teacher)


def _weights_hash(weights: WeightVector) -> str:
    return hashlib.sha256(np.ascontiguousarray(weights.values).tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------


def filter_pseudo_labels(preds: list[Detection], tau: float) -> list[Annotation]:
    """Keep predictions with score strictly above ``tau`` as pseudo-labels.

    Density-crop-class predictions pass the same filter; they keep their
    reserved class id, which is how downstream consumers recognize them.
    """
    if not (0.0 <= tau <= 1.0):
        raise InvariantViolation(f"tau must be in [0, 1], got {tau}")
    return [
        Annotation(box=p.box, class_id=p.class_id, source=PSEUDO)
        for p in preds
        if p.score > tau
    ]


def ema_update(teacher: WeightVector, student: WeightVector, alpha: float) -> WeightVector:
    """Exponential moving average: alpha * teacher + (1 - alpha) * student."""
    if teacher.layout != student.layout:
        raise InvariantViolation("teacher/student weight layouts differ")
    if not (0.0 <= alpha <= 1.0):
        raise InvariantViolation(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        return student.replace_values(student.values.copy())
    if alpha == 1.0:
        return teacher.replace_values(teacher.values.copy())
    return teacher.replace_values(alpha * teacher.values + (1.0 - alpha) * student.values)


def combined_loss(l_sup: float, l_unsup: float, lambda_unsup: float) -> float:
    """Total loss: supervised part plus weighted unsupervised part."""
    total = l_sup + lambda_unsup * l_unsup
    if not np.isfinite(total):
        raise InvariantViolation(f"non-finite combined loss {total}")
    return total


# ---------------------------------------------------------------------------
# Batch plumbing
# ---------------------------------------------------------------------------


def _sorted_ids(pool: dict) -> list:
    return sorted(pool, key=str)


def _sample_ids(pool: dict, size: int, seed_parts: tuple) -> list:
    ids = _sorted_ids(pool)
    if not ids or size <= 0:
        return []
    size = min(size, len(ids))
    rng = rng_for(*seed_parts)
    picked = rng.choice(len(ids), size=size, replace=False)
    return [ids[int(i)] for i in sorted(int(i) for i in picked)]


def _concat_supervised(batches: list[SupervisedBatch]) -> SupervisedBatch:
    return SupervisedBatch(
        features=np.concatenate([b.features for b in batches]),
        classes=np.concatenate([b.classes for b in batches]),
        offsets=np.concatenate([b.offsets for b in batches]),
    )


def _supervised_loss(
    config: TrainerConfig,
    labeled_pool: dict,
    backend: ToyDetector,
    weights: WeightVector,
    iteration: int,
) -> LossResult:
    """Supervised loss over this iteration's labeled batch. Shared by
    burn-in and the teacher-student phase so degenerate configs match
    supervised training bit for bit."""
    batch_ids = _sample_ids(
        labeled_pool, config.labeled_batch, (config.seed, "batch-labeled", iteration)
    )
    batches = [
        backend.supervised_batch(
            labeled_pool[i], "weak", seed=_aug_seed(config.seed, "sup-aug", iteration, i)
        )
        for i in batch_ids
    ]
    return loss_sup(weights, _concat_supervised(batches))


def _apply_step(weights: WeightVector, gradient: np.ndarray, lr: float, iteration: int) -> WeightVector:
    new_values = weights.values - lr * gradient
    if not np.all(np.isfinite(new_values)):
        raise InvariantViolation(f"training diverged at iteration {iteration}")
    return weights.replace_values(new_values)


def _aug_seed(seed: int, tag: str, iteration: int, image_id) -> int:
    # Fold the context into one integer so backend seeding stays simple.
    h = hashlib.sha256(f"{seed}|{tag}|{iteration}|{image_id}".encode()).digest()
    return int.from_bytes(h[:8], "big")


# ---------------------------------------------------------------------------
# Burn-in
# ---------------------------------------------------------------------------


def burn_in(
    config: TrainerConfig, labeled_pool: dict, backend: ToyDetector
) -> tuple[WeightVector, list[IterationLog]]:
    """Supervised pre-training; returns the weights that seed both networks."""
    if not labeled_pool:
        raise DataError("burn-in requires a non-empty labeled set")
    weights = backend.init_weights(config.seed)
    history: list[IterationLog] = []
    for iteration in range(1, config.burn_in_iters + 1):
        result = _supervised_loss(config, labeled_pool, backend, weights, iteration)
        if not np.isfinite(result.value):
            raise InvariantViolation(f"training diverged at iteration {iteration}")
        weights = _apply_step(
            weights, result.gradient, config.learning_rate_at(iteration), iteration
        )
        history.append(
            IterationLog(
                iteration=iteration,
                lr=config.learning_rate_at(iteration),
                loss_total=result.value,
                loss_sup_cls=result.cls_term,
                loss_sup_reg=result.reg_term,
                loss_unsup=0.0,
                pseudo_per_image=0.0,
                unlabeled_images=0,
                crops_cached=0,
            )
        )
    return weights, history


# ---------------------------------------------------------------------------
# Crop discovery on unlabeled images
# ---------------------------------------------------------------------------


def discover_unlabeled_crops(
    state: TrainerState,
    batch_ids: list,
    unlabeled_parents: dict,
    backend: ToyDetector,
    config: TrainerConfig,
) -> dict:
    """Label density crops on unlabeled images from teacher pseudo-labels.

    Runs on the given batch's parent images plus any cache entry older
    than the recompute period. Returns the new child samples keyed by id;
    the caller folds them into the unlabeled pool. Before
    ``crop_start_iter`` the cache is left untouched.
    """
    if state.iteration < config.crop_start_iter:
        return {}
    stale = [
        image_id
        for image_id, entry in state.crop_cache.items()
        if state.iteration - entry.computed_iter >= config.crop_recompute_period
    ]
    targets = sorted(
        {i for i in batch_ids if i in unlabeled_parents and i not in state.crop_cache}
        | set(stale),
        key=str,
    )
    new_children: dict = {}
    for image_id in targets:
        sample = unlabeled_parents[image_id]
        dets = backend.detect(
            state.teacher,
            sample,
            "weak",
            seed=_aug_seed(config.seed, "crop-detect", state.iteration, image_id),
        )
        pseudo = filter_pseudo_labels(dets, config.tau)
        base_boxes = [a.box for a in pseudo if a.class_id < backend.num_base_classes]
        crops = label_density_crops(base_boxes, sample.record.size, config.crop_params)
        children = make_crop_children(sample, crops, config.upscale)
        state.crop_cache[image_id] = CropCacheEntry(
            crops=crops,
            computed_iter=state.iteration,
            child_ids=[c.record.image_id for c in children],
        )
        for child in children:
            new_children[child.record.image_id] = child
    return new_children


# ---------------------------------------------------------------------------
# The full training loop
# ---------------------------------------------------------------------------


def prepare_labeled_pool(
    samples: dict, labeled_ids, config: TrainerConfig, backend: ToyDetector
) -> dict:
    """Labeled pool; with ``crops_on_labeled`` each image also contributes
    upscaled crop children and gains crop-class annotations."""
    pool: dict = {}
    for image_id in sorted(labeled_ids, key=str):
        sample = samples[image_id]
        if not config.crops_on_labeled:
            pool[image_id] = sample
            continue
        base_boxes = [
            a.box for a in sample.record.annotations if a.class_id < backend.num_base_classes
        ]
        crops = label_density_crops(base_boxes, sample.record.size, config.crop_params)
        for child in make_crop_children(sample, crops, config.upscale):
            pool[child.record.image_id] = child
        crop_anns = tuple(
            Annotation(box=c, class_id=backend.crop_class_id) for c in crops
        )
        record = replace(
            sample.record, annotations=sample.record.annotations + crop_anns
        )
        pool[image_id] = SceneSample(record=record, scene=sample.scene)
    return pool


def train(
    config: TrainerConfig,
    samples: dict,
    split,
    backend: ToyDetector,
    checkpoint_dir: str | os.PathLike | None = None,
    resume_from: str | os.PathLike | None = None,
) -> TrainerState:
    """Run burn-in followed by teacher-student training.

    ``samples`` maps image id to :class:`SceneSample`; ``split`` decides
    which ids contribute supervised loss. Per-iteration losses,
    pseudo-label counts, and crop-cache sizes land in ``state.history``.

    With ``checkpoint_dir`` set and ``config.checkpoint_interval`` enabled,
    intermediate checkpoints are written there; ``resume_from`` restores
    weights and the iteration counter from such a checkpoint and continues
    the schedule (per-iteration randomness is derived statelessly, so the
    remaining iterations replay exactly; the unlabeled crop cache rebuilds
    as images are revisited).
    """
    labeled_pool = prepare_labeled_pool(samples, split.labeled_ids, config, backend)
    unlabeled_parents = {
        image_id: samples[image_id] for image_id in sorted(split.unlabeled_ids, key=str)
    }
    if not labeled_pool:
        raise DataError("training requires at least one labeled image")

    if resume_from is not None:
        header, student, teacher = read_checkpoint(resume_from)
        start_iter = int(header.get("iteration", 0))
        if start_iter < config.burn_in_iters:
            raise DataError(
                f"cannot resume from iteration {start_iter}: still inside burn-in "
                f"({config.burn_in_iters} iterations)"
            )
        state = TrainerState(student=student, teacher=teacher, iteration=start_iter)
    else:
        weights, history = burn_in(config, labeled_pool, backend)
        state = TrainerState(
            student=weights,
            teacher=weights.replace_values(weights.values.copy()),
            iteration=config.burn_in_iters,
            history=history,
        )
    state.teacher_hash = _weights_hash(state.teacher)

    unlabeled_children: dict = {}
    for iteration in range(state.iteration + 1, config.max_iters + 1):
        state.iteration = iteration
        sup = _supervised_loss(config, labeled_pool, backend, state.student, iteration)

        unsup_value = 0.0
        pseudo_total = 0
        batch_parents: list = []
        batch_ids: list = []
        gradient = sup.gradient
        n_unlabeled = round(config.data_ratio * config.labeled_batch)
        if config.lambda_unsup > 0.0 and unlabeled_parents and n_unlabeled > 0:
            # Sample parent images; each brings its cached crop children
            # along as extra views of the same content.
            batch_parents = _sample_ids(
                unlabeled_parents, n_unlabeled, (config.seed, "batch-unlabeled", iteration)
            )
            for parent_id in batch_parents:
                batch_ids.append(parent_id)
                entry = state.crop_cache.get(parent_id)
                if entry is not None:
                    batch_ids.extend(
                        child_id for child_id in entry.child_ids if child_id in unlabeled_children
                    )
            unsup_batches: list[UnsupervisedBatch] = []
            for image_id in batch_ids:
                sample = (
                    unlabeled_parents.get(image_id) or unlabeled_children[image_id]
                )
                weak_seed = _aug_seed(config.seed, "teacher-weak", iteration, image_id)
                teacher_dets = backend.detect(state.teacher, sample, "weak", seed=weak_seed)
                pseudo = filter_pseudo_labels(teacher_dets, config.tau)
                pseudo_total += len(pseudo)
                unsup_batches.append(
                    backend.unsupervised_batch(
                        sample,
                        pseudo,
                        "strong",
                        seed=_aug_seed(config.seed, "student-strong", iteration, image_id),
                        teacher=state.teacher,
                        teacher_seed=weak_seed,
                    )
                )
            features = np.concatenate([b.features for b in unsup_batches])
            classes = np.concatenate([b.classes for b in unsup_batches])
            if len(classes):
                unsup = loss_unsup(state.student, UnsupervisedBatch(features, classes))
                unsup_value = unsup.value
                gradient = sup.gradient + config.lambda_unsup * unsup.gradient

        if not np.isfinite(sup.value + unsup_value):
            raise InvariantViolation(f"training diverged at iteration {iteration}")
        state.student = _apply_step(
            state.student, gradient, config.learning_rate_at(iteration), iteration
        )

        state.teacher = ema_update(state.teacher, state.student, config.alpha)
        state.teacher_hash = _weights_hash(state.teacher)

        new_children = discover_unlabeled_crops(
            state, batch_parents, unlabeled_parents, backend, config
        )
        if new_children or any(
            entry.computed_iter == iteration for entry in state.crop_cache.values()
        ):
            unlabeled_children = {
                child_id: child
                for child_id, child in {**unlabeled_children, **new_children}.items()
                if any(child_id in e.child_ids for e in state.crop_cache.values())
            }

        # Pseudo-labels found on a crop child count toward its parent, so
        # pseudo_per_image measures the label supply per unlabeled dataset
        # image regardless of how many zoomed views contributed.
        state.history.append(
            IterationLog(
                iteration=iteration,
                lr=config.learning_rate_at(iteration),
                loss_total=combined_loss(sup.value, unsup_value, config.lambda_unsup),
                loss_sup_cls=sup.cls_term,
                loss_sup_reg=sup.reg_term,
                loss_unsup=unsup_value,
                pseudo_per_image=pseudo_total / len(batch_parents) if batch_parents else 0.0,
                unlabeled_images=len(batch_ids),
                crops_cached=sum(len(e.crops) for e in state.crop_cache.values()),
            )
        )

        if (
            checkpoint_dir is not None
            and config.checkpoint_interval
            and iteration % config.checkpoint_interval == 0
            and iteration < config.max_iters
        ):
            write_checkpoint(
                os.path.join(os.fspath(checkpoint_dir), f"checkpoint_{iteration:06d}.txt"),
                state.student,
                state.teacher,
                iteration,
                backend.num_base_classes,
            )
    return state


# ---------------------------------------------------------------------------
# Run report and checkpoints
# ---------------------------------------------------------------------------

_REPORT_COLUMNS = (
    "iteration",
    "lr",
    "loss_total",
    "loss_sup_cls",
    "loss_sup_reg",
    "loss_unsup",
    "pseudo_per_image",
    "unlabeled_images",
    "crops_cached",
)


def write_run_report(history: list[IterationLog], path: str | os.PathLike) -> None:
    """Tab-separated per-iteration log, one column per logged quantity."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_REPORT_COLUMNS) + "\n")
        for log in history:
            row = [repr(getattr(log, c)) for c in _REPORT_COLUMNS]
            fh.write("\t".join(row) + "\n")


def write_checkpoint(
    path: str | os.PathLike,
    student: WeightVector,
    teacher: WeightVector,
    iteration: int,
    num_base_classes: int,
) -> None:
    """Weight layout header plus flat values, full float precision."""
    header = {
        "feature_dim": student.layout.feature_dim,
        "num_outputs": student.layout.num_outputs,
        "iteration": iteration,
        "num_base_classes": num_base_classes,
        "version": 1,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write("student\n")
        for v in student.values:
            fh.write(repr(float(v)) + "\n")
        fh.write("teacher\n")
        for v in teacher.values:
            fh.write(repr(float(v)) + "\n")


def read_checkpoint(path: str | os.PathLike) -> tuple[dict, WeightVector, WeightVector]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines:
        raise DataError(f"checkpoint {path} is empty")
    try:
        header = json.loads(lines[0])
        from .detect import WeightLayout

        layout = WeightLayout(
            feature_dim=int(header["feature_dim"]), num_outputs=int(header["num_outputs"])
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"checkpoint {path} has a malformed header") from exc
    sections: dict[str, list[float]] = {}
    current: list[float] | None = None
    for lineno, line in enumerate(lines[1:], start=2):
        if line in ("student", "teacher"):
            current = sections.setdefault(line, [])
        elif line.strip():
            if current is None:
                raise DataError(f"checkpoint {path}:{lineno}: value before section header")
            try:
                current.append(float(line))
            except ValueError as exc:
                raise DataError(f"checkpoint {path}:{lineno}: bad value {line!r}") from exc
    for name in ("student", "teacher"):
        if len(sections.get(name, [])) != layout.total:
            raise DataError(
                f"checkpoint {path}: section {name!r} has {len(sections.get(name, []))} values, "
                f"layout wants {layout.total}"
            )
    student = WeightVector(layout=layout, values=np.array(sections["student"]))
    teacher = WeightVector(layout=layout, values=np.array(sections["teacher"]))
    return header, student, teacher
