"""Detection backends.

Two backends implement the same contract. ``OracleBackend`` derives
detections directly from scene ground truth through a configurable noise
model (size-dependent misses, localization jitter, background false
positives); it needs no training and drives the inference-pipeline tests.
``ToyDetector`` is a small trainable linear model over hand-built scene
features with analytic gradients, used by the mean-teacher trainer.

Both are deterministic given (weights, input, augmentation tag, seed), and
both can emit the reserved density-crop class (id ``num_base_classes``) in
addition to the base classes.
"""

from __future__ import annotations

import abc
import os
from dataclasses import dataclass

import numpy as np

from .croplab import CropParams, label_density_crops
from .dataset import Annotation, ImageRecord, SceneSample, SceneSpec
from .errors import DataError, InvariantViolation
from .geometry import Box, Detection
from .seeding import rng_for

__all__ = [
    "WeightLayout",
    "WeightVector",
    "OracleNoiseModel",
    "oracle_detect",
    "extract_features",
    "feature_dim",
    "toy_forward",
    "SupervisedBatch",
    "UnsupervisedBatch",
    "LossResult",
    "loss_sup",
    "loss_unsup",
    "assign_targets",
    "DetectorBackend",
    "OracleBackend",
    "ToyDetector",
    "ToyDetectorConfig",
    "write_detections",
    "read_detections",
]

# Feature vector layout (K = number of base classes):
#   0       normalized log proposal area
#   1       log aspect ratio, clamped to [1/8, 8]
#   2..3    normalized center (cx/W, cy/H)
#   4       max IoU with any scene object
#   5       fraction of proposal area covered by objects (capped at 1)
#   6       log-scaled count of object centers inside the proposal
#   7       mean covered fraction of intersecting objects
#   8..8+K  class payload block (overlap-weighted object payload average)
_GEOM_FEATURES = 8
_ASPECT_CAP = 8.0
_CENTER_COUNT_CAP = 32.0
_MIN_SIDE = 1e-3


def feature_dim(num_base_classes: int) -> int:
    return _GEOM_FEATURES + num_base_classes


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightLayout:
    """Shape of the flat weight vector: classifier block then regressor block.

    The classifier has ``num_outputs`` rows (base classes, density-crop
    class, background) and the regressor 4 rows (corner offsets); both act
    on the feature vector plus a bias input.
    """

    feature_dim: int
    num_outputs: int

    @property
    def columns(self) -> int:
        return self.feature_dim + 1

    @property
    def cls_size(self) -> int:
        return self.num_outputs * self.columns

    @property
    def reg_size(self) -> int:
        return 4 * self.columns

    @property
    def total(self) -> int:
        return self.cls_size + self.reg_size


@dataclass(frozen=True)
class WeightVector:
    """Flat parameter vector with a named layout. Treat as immutable."""

    layout: WeightLayout
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.layout.total,):
            raise InvariantViolation(
                f"weight vector has {self.values.shape} values, layout wants ({self.layout.total},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvariantViolation("weight vector contains non-finite entries")

    def cls_matrix(self) -> np.ndarray:
        return self.values[: self.layout.cls_size].reshape(self.layout.num_outputs, self.layout.columns)

    def reg_matrix(self) -> np.ndarray:
        return self.values[self.layout.cls_size :].reshape(4, self.layout.columns)

    def replace_values(self, values: np.ndarray) -> "WeightVector":
        return WeightVector(layout=self.layout, values=values)


# ---------------------------------------------------------------------------
# Oracle backend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleNoiseModel:
    """Noise model turning ground truth into imperfect detections.

    ``miss_curve`` is a step function over object pixel area given as
    (area, probability) breakpoints starting at area 0 with non-increasing
    probabilities; the effective miss probability is evaluated at the
    post-upscale area, optionally scaled by ``upscale_relief`` when
    zoomed in, which is how upscaling rescues small objects.
    """

    miss_curve: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    upscale_relief: float = 1.0
    jitter_std: float = 0.0
    score_mean: float = 0.9
    score_std: float = 0.05
    fp_rate: float = 0.0
    fp_score_range: tuple[float, float] = (0.1, 0.5)
    emit_crops: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.miss_curve or self.miss_curve[0][0] != 0.0:
            raise InvariantViolation("miss_curve must start with a breakpoint at area 0")
        prev_area, prev_prob = -1.0, 1.0
        for area, prob in self.miss_curve:
            if area <= prev_area:
                raise InvariantViolation("miss_curve areas must be strictly increasing")
            if not (0.0 <= prob <= 1.0):
                raise InvariantViolation(f"miss probability {prob} outside [0, 1]")
            if prob > prev_prob and prev_area >= 0.0:
                raise InvariantViolation("miss_curve must be non-increasing in area")
            prev_area, prev_prob = area, prob
        if self.jitter_std < 0:
            raise InvariantViolation("jitter_std must be >= 0")
        if not (0.0 <= self.upscale_relief <= 1.0):
            raise InvariantViolation("upscale_relief must be in [0, 1]")

    def miss_probability(self, area: float) -> float:
        prob = self.miss_curve[0][1]
        for bp_area, bp_prob in self.miss_curve:
            if area >= bp_area:
                prob = bp_prob
            else:
                break
        return prob


def _safe_box(x1: float, y1: float, x2: float, y2: float, width: float, height: float) -> Box:
    """Clip to the image and pad degenerate sides so the box stays valid."""
    x1, x2 = min(max(x1, 0.0), width), min(max(x2, 0.0), width)
    y1, y2 = min(max(y1, 0.0), height), min(max(y2, 0.0), height)
    if x2 - x1 < _MIN_SIDE:
        c = min(max((x1 + x2) / 2.0, _MIN_SIDE / 2.0), width - _MIN_SIDE / 2.0)
        x1, x2 = c - _MIN_SIDE / 2.0, c + _MIN_SIDE / 2.0
    if y2 - y1 < _MIN_SIDE:
        c = min(max((y1 + y2) / 2.0, _MIN_SIDE / 2.0), height - _MIN_SIDE / 2.0)
        y1, y2 = c - _MIN_SIDE / 2.0, c + _MIN_SIDE / 2.0
    return Box(x1, y1, x2, y2)


def oracle_detect(
    record: ImageRecord,
    noise: OracleNoiseModel,
    upscale: float = 1.0,
    num_base_classes: int | None = None,
) -> list[Detection]:
    """Emit noisy detections for a record's annotations.

    Each annotation survives with probability 1 - miss(area * upscale^2),
    gets a jittered box and a sampled score; background false positives are
    appended at a Poisson rate. Deterministic per (noise seed, image id).
    """
    if upscale < 1.0:
        raise InvariantViolation(f"upscale must be >= 1, got {upscale}")
    rng = rng_for(noise.seed, "oracle", record.image_id)
    crop_class = num_base_classes
    out: list[Detection] = []
    for ann in record.annotations:
        is_crop = crop_class is not None and ann.class_id == crop_class
        if is_crop and not noise.emit_crops:
            continue
        p_miss = noise.miss_probability(ann.box.area * upscale * upscale)
        if upscale > 1.0:
            p_miss *= noise.upscale_relief
        if rng.random() < p_miss:
            continue
        jit = rng.normal(0.0, noise.jitter_std, 4) if noise.jitter_std > 0 else np.zeros(4)
        box = _safe_box(
            ann.box.x1 + jit[0], ann.box.y1 + jit[1], ann.box.x2 + jit[2], ann.box.y2 + jit[3],
            record.width, record.height,
        )
        score = float(np.clip(rng.normal(noise.score_mean, noise.score_std), 0.05, 1.0))
        out.append(Detection(box=box, class_id=ann.class_id, score=score))
    if noise.fp_rate > 0:
        n_classes = num_base_classes if num_base_classes is not None else 1
        for _ in range(int(rng.poisson(noise.fp_rate))):
            w = float(rng.uniform(4.0, max(8.0, record.width / 4.0)))
            h = float(rng.uniform(4.0, max(8.0, record.height / 4.0)))
            x = float(rng.uniform(0.0, max(record.width - w, _MIN_SIDE)))
            y = float(rng.uniform(0.0, max(record.height - h, _MIN_SIDE)))
            score = float(rng.uniform(*noise.fp_score_range))
            out.append(
                Detection(
                    box=_safe_box(x, y, x + w, y + h, record.width, record.height),
                    class_id=int(rng.integers(0, n_classes)),
                    score=score,
                )
            )
    return out


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def extract_features(
    scene: SceneSpec,
    proposal: Box,
    num_base_classes: int,
    payload_obs_scale: float = 4.0,
) -> np.ndarray:
    """Deterministic feature vector for a proposal inside a scene.

    The payload block is the overlap-weighted average of the payloads of
    intersecting objects, observed through additive noise whose scale
    shrinks with object area, so upscaled crops yield cleaner features than
    the same region at native resolution.
    """
    w, h = proposal.width, proposal.height
    area = proposal.area
    scene_area = scene.width * scene.height
    phi = np.zeros(feature_dim(num_base_classes))
    phi[0] = np.log(max(area, _MIN_SIDE)) / np.log(scene_area)
    aspect = min(max(w / h, 1.0 / _ASPECT_CAP), _ASPECT_CAP)
    phi[1] = np.log(aspect) / np.log(_ASPECT_CAP)
    cx, cy = proposal.center
    phi[2] = cx / scene.width
    phi[3] = cy / scene.height

    best_iou = 0.0
    inter_total = 0.0
    centers_inside = 0
    covered_fracs: list[float] = []
    covered_areas: list[float] = []
    payload_sum = np.zeros(num_base_classes)
    weight_sum = 0.0
    for obj in scene.objects:
        inter = proposal.intersection_area(obj.box)
        if inter > 0.0:
            obj_area = obj.box.area
            union = area + obj_area - inter
            best_iou = max(best_iou, inter / union)
            inter_total += inter
            frac = inter / obj_area
            covered_fracs.append(frac)
            covered_areas.append(obj_area)
            payload_sum += frac * np.asarray(obj.payload[:num_base_classes])
            weight_sum += frac
        ocx, ocy = obj.box.center
        if proposal.x1 <= ocx < proposal.x2 and proposal.y1 <= ocy < proposal.y2:
            centers_inside += 1
    phi[4] = best_iou
    phi[5] = min(inter_total / area, 1.0)
    phi[6] = np.log1p(min(centers_inside, _CENTER_COUNT_CAP)) / np.log1p(_CENTER_COUNT_CAP)
    phi[7] = float(np.mean(covered_fracs)) if covered_fracs else 0.0

    payload = payload_sum / max(weight_sum, 1.0)
    if payload_obs_scale > 0:
        ref_area = float(np.mean(covered_areas)) if covered_areas else area
        sigma = payload_obs_scale / np.sqrt(max(ref_area, 1.0))
        q = tuple(int(round(v * 16.0)) for v in proposal.as_tuple())
        noise_rng = rng_for(scene.seed, "payload-obs", *q)
        payload = payload + noise_rng.normal(0.0, sigma, num_base_classes)
    phi[_GEOM_FEATURES:] = payload
    return phi


# ---------------------------------------------------------------------------
# Linear model: forward pass and losses
# ---------------------------------------------------------------------------


def _with_bias(features: np.ndarray) -> np.ndarray:
    if features.ndim == 1:
        return np.concatenate([features, [1.0]])
    return np.concatenate([features, np.ones((features.shape[0], 1))], axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def toy_forward(weights: WeightVector, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities (softmax of linear logits) and linear box offsets."""
    if features.shape[-1] != weights.layout.feature_dim:
        raise InvariantViolation(
            f"feature length {features.shape[-1]} does not match layout {weights.layout.feature_dim}"
        )
    phi = _with_bias(np.asarray(features, dtype=np.float64))
    probs = _softmax(phi @ weights.cls_matrix().T)
    offsets = phi @ weights.reg_matrix().T
    return probs, offsets


@dataclass(frozen=True)
class SupervisedBatch:
    """Per-proposal features with class and corner-offset targets."""

    features: np.ndarray
    classes: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class UnsupervisedBatch:
    """Per-proposal features with pseudo-label class targets only."""

    features: np.ndarray
    classes: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class LossResult:
    value: float
    gradient: np.ndarray
    cls_term: float
    reg_term: float


def _cls_loss_and_grad(
    weights: WeightVector, phi: np.ndarray, classes: np.ndarray
) -> tuple[float, np.ndarray]:
    logits = phi @ weights.cls_matrix().T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(classes))
    loss = float(np.sum(log_z - shifted[rows, classes]))
    probs = _softmax(logits)
    dlogits = probs
    dlogits[rows, classes] -= 1.0
    return loss, dlogits.T @ phi


def loss_sup(weights: WeightVector, batch: SupervisedBatch) -> LossResult:
    """Cross-entropy plus smooth-L1 offset loss, summed over the batch.

    The gradient shares the weight vector's flat layout.
    """
    if len(batch) == 0:
        raise InvariantViolation("loss_sup requires a non-empty batch")
    phi = _with_bias(np.asarray(batch.features, dtype=np.float64))
    cls_loss, d_cls = _cls_loss_and_grad(weights, phi, batch.classes)

    pred = phi @ weights.reg_matrix().T
    err = pred - np.asarray(batch.offsets, dtype=np.float64)
    abs_err = np.abs(err)
    small = abs_err < 1.0
    reg_loss = float(np.sum(np.where(small, 0.5 * err * err, abs_err - 0.5)))
    d_err = np.where(small, err, np.sign(err))
    d_reg = d_err.T @ phi

    gradient = np.concatenate([d_cls.ravel(), d_reg.ravel()])
    return LossResult(
        value=cls_loss + reg_loss, gradient=gradient, cls_term=cls_loss, reg_term=reg_loss
    )


def loss_unsup(weights: WeightVector, batch: UnsupervisedBatch) -> LossResult:
    """Classification-only loss for pseudo-labeled proposals.

    Confidence thresholding says nothing about box quality, so the
    regressor block of the gradient is exactly zero.
    """
    if len(batch) == 0:
        raise InvariantViolation("loss_unsup requires a non-empty batch")
    phi = _with_bias(np.asarray(batch.features, dtype=np.float64))
    cls_loss, d_cls = _cls_loss_and_grad(weights, phi, batch.classes)
    gradient = np.concatenate([d_cls.ravel(), np.zeros(weights.layout.reg_size)])
    return LossResult(value=cls_loss, gradient=gradient, cls_term=cls_loss, reg_term=0.0)


def assign_targets(
    proposals: list[Box],
    annotations: list[Annotation] | tuple[Annotation, ...],
    fg_iou: float,
    background_class: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Match each proposal to its best-IoU annotation.

    Proposals reaching ``fg_iou`` take the annotation's class and corner
    offsets (annotation minus proposal); the rest become background with
    zero offsets.
    """
    classes = np.full(len(proposals), background_class, dtype=np.int64)
    offsets = np.zeros((len(proposals), 4))
    for i, prop in enumerate(proposals):
        best, best_iou_v = None, 0.0
        for ann in annotations:
            inter = prop.intersection_area(ann.box)
            if inter <= 0.0:
                continue
            v = inter / (prop.area + ann.box.area - inter)
            if v > best_iou_v:
                best, best_iou_v = ann, v
        if best is not None and best_iou_v >= fg_iou:
            classes[i] = best.class_id
            offsets[i] = np.array(best.box.as_tuple()) - np.array(prop.as_tuple())
    return classes, offsets


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


class DetectorBackend(abc.ABC):
    """Contract every detection backend satisfies.

    ``detect`` must be deterministic given (weights, input, augmentation
    tag, seed) and may emit the reserved density-crop class id
    ``num_base_classes`` alongside base classes 0..num_base_classes-1.
    """

    num_base_classes: int

    @property
    def crop_class_id(self) -> int:
        return self.num_base_classes

    @abc.abstractmethod
    def detect(
        self,
        weights: WeightVector | None,
        sample: SceneSample,
        augmentation: str = "none",
        seed: int = 0,
    ) -> list[Detection]:
        raise NotImplementedError


class OracleBackend(DetectorBackend):
    """Weight-free backend that replays ground truth through a noise model."""

    def __init__(self, num_base_classes: int, noise: OracleNoiseModel, upscale: float = 1.0):
        self.num_base_classes = num_base_classes
        self.noise = noise
        self.upscale = upscale

    def detect(
        self,
        weights: WeightVector | None,
        sample: SceneSample,
        augmentation: str = "none",
        seed: int = 0,
    ) -> list[Detection]:
        return oracle_detect(
            sample.record, self.noise, upscale=self.upscale, num_base_classes=self.num_base_classes
        )


@dataclass(frozen=True)
class ToyDetectorConfig:
    """Hyperparameters of the trainable linear detector."""

    num_base_classes: int
    proposal_jitter: float = 1.5
    background_proposals: int = 8
    fg_iou: float = 0.5
    payload_obs_scale: float = 4.0
    weak_flip_prob: float = 0.5
    strong_noise_std: float = 0.15
    strong_cutout: int = 3
    init_scale: float = 0.01
    emit_floor: float = 0.15
    bg_tau: float = 0.9
    proposal_crop_params: CropParams | None = None
    seed: int = 0


class ToyDetector(DetectorBackend):
    """Linear softmax classifier plus linear box regressor over scene features.

    Proposals stand in for a region-proposal network: jittered scene object
    boxes, cluster-shaped candidates around groups of overlapping objects
    (so the density-crop class has something to be predicted on), and
    uniform background samples, all fixed per image. Weak augmentation
    flips the horizontal center feature; strong augmentation adds feature
    noise and zeroes a random contiguous block.
    """

    def __init__(self, config: ToyDetectorConfig):
        self.config = config
        self.num_base_classes = config.num_base_classes
        self._proposal_crop_params = config.proposal_crop_params or CropParams()
        # classifier outputs: base classes, density-crop class, background
        self.layout = WeightLayout(
            feature_dim=feature_dim(config.num_base_classes),
            num_outputs=config.num_base_classes + 2,
        )

    @property
    def background_class(self) -> int:
        return self.num_base_classes + 1

    def init_weights(self, seed: int) -> WeightVector:
        rng = rng_for(seed, "init")
        return WeightVector(
            layout=self.layout,
            values=rng.normal(0.0, self.config.init_scale, self.layout.total),
        )

    def proposals(self, sample: SceneSample) -> list[Box]:
        """Fixed per-image proposal set: objects, clusters, background.

        Cluster candidates are skipped on crop children: the image already
        is a zoomed cluster, and a second level of crop proposals would
        only train the classifier to call dense children background.
        """
        record = sample.record
        scene = sample.scene
        rng = rng_for(self.config.seed, "proposals", record.image_id)
        candidates = [obj.box for obj in scene.objects]
        if record.provenance.kind != "crop":
            candidates += label_density_crops(
                [obj.box for obj in scene.objects],
                (scene.width, scene.height),
                self._proposal_crop_params,
            )
        out: list[Box] = []
        for box in candidates:
            jit = rng.normal(0.0, self.config.proposal_jitter, 4)
            out.append(
                _safe_box(
                    box.x1 + jit[0], box.y1 + jit[1], box.x2 + jit[2], box.y2 + jit[3],
                    record.width, record.height,
                )
            )
        short = min(record.width, record.height)
        for _ in range(self.config.background_proposals):
            w = float(rng.uniform(short / 24.0, short / 3.0))
            h = float(rng.uniform(short / 24.0, short / 3.0))
            x = float(rng.uniform(0.0, max(record.width - w, _MIN_SIDE)))
            y = float(rng.uniform(0.0, max(record.height - h, _MIN_SIDE)))
            out.append(_safe_box(x, y, x + w, y + h, record.width, record.height))
        return out

    def features(
        self,
        scene: SceneSpec,
        proposals: list[Box],
        augmentation: str = "none",
        seed: int = 0,
    ) -> np.ndarray:
        phi = np.stack(
            [
                extract_features(
                    scene, p, self.num_base_classes, self.config.payload_obs_scale
                )
                for p in proposals
            ]
        ) if proposals else np.zeros((0, self.layout.feature_dim))
        if augmentation == "none" or len(proposals) == 0:
            return phi
        if augmentation == "weak":
            rng = rng_for(seed, "weak")
            if rng.random() < self.config.weak_flip_prob:
                phi[:, 2] = 1.0 - phi[:, 2]
            return phi
        if augmentation == "strong":
            rng = rng_for(seed, "strong")
            phi = phi + rng.normal(0.0, self.config.strong_noise_std, phi.shape)
            if self.config.strong_cutout > 0:
                start = int(rng.integers(0, self.layout.feature_dim))
                stop = min(start + self.config.strong_cutout, self.layout.feature_dim)
                phi[:, start:stop] = 0.0
            return phi
        raise InvariantViolation(f"unknown augmentation tag {augmentation!r}")

    def detect(
        self,
        weights: WeightVector | None,
        sample: SceneSample,
        augmentation: str = "none",
        seed: int = 0,
    ) -> list[Detection]:
        if weights is None:
            raise InvariantViolation("ToyDetector.detect requires weights")
        props = self.proposals(sample)
        if not props:
            return []
        phi = self.features(sample.scene, props, augmentation, seed)
        probs, offsets = toy_forward(weights, phi)
        out: list[Detection] = []
        for i, prop in enumerate(props):
            box = _safe_box(
                prop.x1 + offsets[i, 0], prop.y1 + offsets[i, 1],
                prop.x2 + offsets[i, 2], prop.y2 + offsets[i, 3],
                sample.record.width, sample.record.height,
            )
            for class_id in range(self.background_class):
                score = float(probs[i, class_id])
                if score > self.config.emit_floor:
                    out.append(Detection(box=box, class_id=class_id, score=score))
        return out

    def supervised_batch(
        self, sample: SceneSample, augmentation: str = "none", seed: int = 0
    ) -> SupervisedBatch:
        """Training batch against the record's own annotations."""
        props = self.proposals(sample)
        phi = self.features(sample.scene, props, augmentation, seed)
        classes, offsets = assign_targets(
            props, sample.record.annotations, self.config.fg_iou, self.background_class
        )
        return SupervisedBatch(features=phi, classes=classes, offsets=offsets)

    def unsupervised_batch(
        self,
        sample: SceneSample,
        pseudo_labels: list[Annotation],
        augmentation: str = "strong",
        seed: int = 0,
        teacher: WeightVector | None = None,
        teacher_seed: int = 0,
    ) -> UnsupervisedBatch:
        """Training batch against teacher pseudo-labels (classes only).

        A proposal enters the batch when it matches a pseudo-label (taking
        that class) or, if teacher weights are given, when the teacher is
        confidently background on it (probability above ``bg_tau`` on the
        weak view). Everything else is excluded: confidence thresholding
        says nothing about the proposals the teacher is unsure of, so an
        object the teacher missed contributes no gradient rather than a
        background target.
        """
        props = self.proposals(sample)
        phi = self.features(sample.scene, props, augmentation, seed)
        classes, _ = assign_targets(
            props, pseudo_labels, self.config.fg_iou, self.background_class
        )
        keep = classes != self.background_class
        if teacher is not None and props:
            phi_weak = self.features(sample.scene, props, "weak", teacher_seed)
            probs, _ = toy_forward(teacher, phi_weak)
            confident_bg = probs[:, self.background_class] > self.config.bg_tau
            keep = keep | confident_bg
        return UnsupervisedBatch(features=phi[keep], classes=classes[keep])


# ---------------------------------------------------------------------------
# Detection dump format
# ---------------------------------------------------------------------------

_DUMP_HEADER = "# image_id\tclass_id\tscore\tx1\ty1\tx2\ty2"


def write_detections(
    detections: list[tuple[int | str, Detection]], path: str | os.PathLike
) -> None:
    """One tab-separated record per detection; floats keep full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_DUMP_HEADER + "\n")
        for image_id, det in detections:
            b = det.box
            fh.write(
                f"{image_id}\t{det.class_id}\t{det.score!r}\t{b.x1!r}\t{b.y1!r}\t{b.x2!r}\t{b.y2!r}\n"
            )


def read_detections(path: str | os.PathLike) -> list[tuple[int | str, Detection]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read detection file {path}: {exc}") from exc
    out: list[tuple[int | str, Detection]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
        try:
            raw_id = parts[0]
            image_id: int | str = int(raw_id) if raw_id.lstrip("-").isdigit() else raw_id
            det = Detection(
                box=Box(float(parts[3]), float(parts[4]), float(parts[5]), float(parts[6])),
                class_id=int(parts[1]),
                score=float(parts[2]),
            )
        except (ValueError, InvariantViolation) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        out.append((image_id, det))
    return out
