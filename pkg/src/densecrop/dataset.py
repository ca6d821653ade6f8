"""Annotation ingestion, tiling, splitting, crop augmentation, and the
synthetic scene generator used for desk-scale experiments.

Images are represented by :class:`ImageRecord` (metadata + annotations +
provenance); synthetic scenes additionally carry a :class:`SceneSpec`
holding the abstract per-object feature payloads that stand in for pixels.
Records are immutable after construction, so every transform here returns
new records and is safe to run in parallel across images.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, InvariantViolation
from .geometry import Box, project_into_crop
from .seeding import rng_for, stable_int

__all__ = [
    "GROUND_TRUTH",
    "PSEUDO",
    "Annotation",
    "Provenance",
    "ImageRecord",
    "DatasetSplit",
    "UpscalePolicy",
    "SceneObject",
    "ClusterSpec",
    "SceneSpec",
    "SceneSample",
    "AnnotationFile",
    "load_annotations",
    "write_annotations",
    "tile_image",
    "tile_image_report",
    "split_dataset",
    "write_split",
    "read_split",
    "augment_with_crops",
    "crop_scene",
    "make_crop_children",
    "SyntheticConfig",
    "generate_synthetic_dataset",
    "write_scenes",
    "read_scenes",
]

GROUND_TRUTH = "ground_truth"
PSEUDO = "pseudo"

# Fraction of an annotation's area that must survive clipping for the
# annotation to be assigned to a tile or crop child.
MIN_CLIPPED_AREA_FRACTION = 0.5


@dataclass(frozen=True)
class Annotation:
    """One labeled box: geometry, class id, and whether it is real GT."""

    box: Box
    class_id: int
    source: str = GROUND_TRUTH

    def __post_init__(self) -> None:
        if self.source not in (GROUND_TRUTH, PSEUDO):
            raise InvariantViolation(f"unknown annotation source {self.source!r}")
        if self.class_id < 0:
            raise InvariantViolation(f"negative class id {self.class_id}")


@dataclass(frozen=True)
class Provenance:
    """Where an image came from: original, sliding-window tile, or crop child.

    Crop children store exactly the parameters needed to map boxes back to
    the parent image (the crop box in parent pixels and the upscaled output
    size).
    """

    kind: str = "original"
    parent_id: int | str | None = None
    offset: tuple[float, float] | None = None
    crop_box: Box | None = None
    upscale_size: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("original", "tile", "crop"):
            raise InvariantViolation(f"unknown provenance kind {self.kind!r}")
        if self.kind == "tile" and (self.parent_id is None or self.offset is None):
            raise InvariantViolation("tile provenance needs parent_id and offset")
        if self.kind == "crop" and (
            self.parent_id is None or self.crop_box is None or self.upscale_size is None
        ):
            raise InvariantViolation("crop provenance needs parent_id, crop_box, upscale_size")

    @classmethod
    def original(cls) -> "Provenance":
        return cls()

    @classmethod
    def tile(cls, parent_id: int | str, offset: tuple[float, float]) -> "Provenance":
        return cls(kind="tile", parent_id=parent_id, offset=offset)

    @classmethod
    def crop(
        cls,
        parent_id: int | str,
        crop_box: Box,
        upscale_size: tuple[float, float],
    ) -> "Provenance":
        return cls(kind="crop", parent_id=parent_id, crop_box=crop_box, upscale_size=upscale_size)


@dataclass(frozen=True)
class ImageRecord:
    """An image's metadata, annotations, and provenance. No pixels."""

    image_id: int | str
    width: float
    height: float
    annotations: tuple[Annotation, ...] = ()
    provenance: Provenance = field(default_factory=Provenance.original)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvariantViolation(
                f"image {self.image_id!r} has non-positive size {self.width}x{self.height}"
            )

    @property
    def size(self) -> tuple[float, float]:
        return (self.width, self.height)

    def boxes(self, class_id: int | None = None) -> list[Box]:
        return [a.box for a in self.annotations if class_id is None or a.class_id == class_id]


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint labeled/unlabeled image-id sets plus the seed that made them."""

    labeled_ids: frozenset
    unlabeled_ids: frozenset
    seed: int
    fraction: float

    def __post_init__(self) -> None:
        if self.labeled_ids & self.unlabeled_ids:
            raise InvariantViolation("labeled and unlabeled ids overlap")


@dataclass(frozen=True)
class UpscalePolicy:
    """How a crop is resized before re-detection.

    ``short_edge`` mode scales the crop isotropically so its shorter edge
    reaches ``target`` pixels (never downscaling); ``factor`` mode applies
    a fixed isotropic factor.
    """

    mode: str = "short_edge"
    target: float = 512.0
    factor: float = 4.0

    def __post_init__(self) -> None:
        if self.mode not in ("short_edge", "factor"):
            raise ConfigError(f"unknown upscale mode {self.mode!r}")
        if self.target <= 0 or self.factor <= 0:
            raise ConfigError("upscale target and factor must be positive")

    def output_size(self, crop: Box) -> tuple[float, float]:
        if self.mode == "factor":
            s = self.factor
        else:
            s = max(1.0, self.target / min(crop.width, crop.height))
        return (crop.width * s, crop.height * s)


@dataclass(frozen=True)
class SceneObject:
    """Synthetic object: box, class, and its abstract feature payload."""

    box: Box
    class_id: int
    payload: tuple[float, ...]


@dataclass(frozen=True)
class ClusterSpec:
    center: tuple[float, float]
    spread: float
    count: int


@dataclass(frozen=True)
class SceneSpec:
    """Full description of a synthetic scene; regenerable bit-for-bit."""

    width: float
    height: float
    objects: tuple[SceneObject, ...]
    clusters: tuple[ClusterSpec, ...]
    seed: int


@dataclass(frozen=True)
class SceneSample:
    """An image record paired with the scene it was generated from."""

    record: ImageRecord
    scene: SceneSpec


# ---------------------------------------------------------------------------
# COCO-style annotation files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationFile:
    """Parsed annotation file: records, category names, and drop counters."""

    records: tuple[ImageRecord, ...]
    categories: dict[int, str]
    dropped_zero_area: int = 0


def _clip_box(x1: float, y1: float, x2: float, y2: float, width: float, height: float) -> Box | None:
    """Clip corners to the image; None when nothing with area remains."""
    cx1 = min(max(x1, 0.0), width)
    cy1 = min(max(y1, 0.0), height)
    cx2 = min(max(x2, 0.0), width)
    cy2 = min(max(y2, 0.0), height)
    if cx1 >= cx2 or cy1 >= cy2:
        return None
    return Box(cx1, cy1, cx2, cy2)


def load_annotations(path: str | os.PathLike) -> AnnotationFile:
    """Read a COCO-style JSON annotation file.

    Boxes arrive as [x, y, w, h] and are converted to corner form, clipped
    to their image, and dropped (with a count) when clipping leaves no
    area. Unknown image or category references are data errors.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read annotation file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"annotation file {path} is not valid JSON: {exc}") from exc

    for key in ("images", "annotations", "categories"):
        if key not in payload or not isinstance(payload[key], list):
            raise DataError(f"annotation file {path} is missing list field {key!r}")

    categories: dict[int, str] = {}
    for cat in payload["categories"]:
        try:
            categories[int(cat["id"])] = str(cat.get("name", cat["id"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed category entry {cat!r}") from exc

    images: dict[int | str, dict] = {}
    order: list[int | str] = []
    for img in payload["images"]:
        try:
            image_id = img["id"]
            width = float(img["width"])
            height = float(img["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed image entry {img!r}") from exc
        if image_id in images:
            raise DataError(f"duplicate image id {image_id!r}")
        images[image_id] = {"width": width, "height": height, "annotations": []}
        order.append(image_id)

    dropped = 0
    for idx, ann in enumerate(payload["annotations"]):
        try:
            image_id = ann["image_id"]
            category_id = int(ann["category_id"])
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed annotation entry #{idx}: {ann!r}") from exc
        if image_id not in images:
            raise DataError(f"annotation #{idx} references unknown image id {image_id!r}")
        if category_id not in categories:
            raise DataError(f"annotation #{idx} references unknown category id {category_id}")
        entry = images[image_id]
        box = _clip_box(x, y, x + w, y + h, entry["width"], entry["height"])
        if box is None:
            dropped += 1
            continue
        entry["annotations"].append(Annotation(box=box, class_id=category_id))

    records = tuple(
        ImageRecord(
            image_id=image_id,
            width=images[image_id]["width"],
            height=images[image_id]["height"],
            annotations=tuple(images[image_id]["annotations"]),
        )
        for image_id in order
    )
    return AnnotationFile(records=records, categories=categories, dropped_zero_area=dropped)


def write_annotations(
    records: list[ImageRecord] | tuple[ImageRecord, ...],
    categories: dict[int, str],
    path: str | os.PathLike,
) -> None:
    """Write records as COCO-style JSON with deterministic ordering.

    Records with non-integer ids (tiles, crop children) are renumbered
    after the largest existing integer id; the original id is preserved in
    ``file_name``.
    """
    next_id = 1 + max(
        (rec.image_id for rec in records if isinstance(rec.image_id, int)), default=0
    )
    images = []
    annotations = []
    for rec in records:
        if isinstance(rec.image_id, int):
            image_id = rec.image_id
        else:
            image_id = next_id
            next_id += 1
        images.append(
            {
                "id": image_id,
                "width": rec.width,
                "height": rec.height,
                "file_name": f"{rec.image_id}.png",
            }
        )
        for ann in rec.annotations:
            annotations.append(
                {
                    "id": len(annotations) + 1,
                    "image_id": image_id,
                    "category_id": ann.class_id,
                    "bbox": [ann.box.x1, ann.box.y1, ann.box.width, ann.box.height],
                    "area": ann.box.area,
                    "iscrowd": 0,
                }
            )
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": cid, "name": categories[cid]} for cid in sorted(categories)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------


def _tile_offsets(size: float, tile: float, stride: float) -> list[float]:
    """Sliding-window offsets; the final tile is clamped to the image edge."""
    if size <= tile:
        return [0.0]
    offsets: list[float] = []
    o = 0.0
    while True:
        if o + tile >= size:
            offsets.append(size - tile)
            break
        offsets.append(o)
        o += stride
    return offsets


def tile_image(record: ImageRecord, tile: float, stride: float) -> list[ImageRecord]:
    """Cut a record into overlapping square tiles of side ``tile``.

    Offsets advance by ``stride`` and the last row/column is clamped so the
    final tile ends exactly at the image edge. An annotation is assigned to
    a tile when at least half of its area lies inside, re-expressed in tile
    coordinates.
    """
    tiles, _ = tile_image_report(record, tile, stride)
    return tiles


def tile_image_report(
    record: ImageRecord, tile: float, stride: float
) -> tuple[list[ImageRecord], int]:
    """Like :func:`tile_image`, also counting annotations lost to straddling.

    An annotation is lost when it keeps less than half of its area in every
    tile it touches; the count is reported so tiling jobs can surface it.
    """
    if tile <= 0:
        raise ConfigError(f"tile must be positive, got {tile}")
    if not (0 < stride <= tile):
        raise ConfigError(f"stride must be in (0, tile], got {stride}")
    tiles: list[ImageRecord] = []
    placed = [False] * len(record.annotations)
    ys = _tile_offsets(record.height, tile, stride)
    xs = _tile_offsets(record.width, tile, stride)
    for row, oy in enumerate(ys):
        for col, ox in enumerate(xs):
            tw = min(tile, record.width - ox)
            th = min(tile, record.height - oy)
            kept: list[Annotation] = []
            for index, ann in enumerate(record.annotations):
                clipped = _clip_box(
                    ann.box.x1 - ox, ann.box.y1 - oy, ann.box.x2 - ox, ann.box.y2 - oy, tw, th
                )
                if clipped is None:
                    continue
                if clipped.area < MIN_CLIPPED_AREA_FRACTION * ann.box.area:
                    continue
                placed[index] = True
                kept.append(replace(ann, box=clipped))
            tiles.append(
                ImageRecord(
                    image_id=f"{record.image_id}:tile{row}_{col}",
                    width=tw,
                    height=th,
                    annotations=tuple(kept),
                    provenance=Provenance.tile(record.image_id, (ox, oy)),
                )
            )
    return tiles, sum(1 for flag in placed if not flag)


# ---------------------------------------------------------------------------
# Labeled / unlabeled splits
# ---------------------------------------------------------------------------


def split_dataset(ids: list | set | tuple, fraction: float, seed: int) -> DatasetSplit:
    """Sample round(fraction * n) labeled ids uniformly without replacement."""
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    ordered = sorted(set(ids), key=lambda v: (str(type(v).__name__), str(v)))
    n_labeled = round(fraction * len(ordered))
    if n_labeled == 0:
        raise ConfigError(
            f"fraction {fraction} of {len(ordered)} images yields zero labeled images"
        )
    rng = rng_for(seed, "split")
    picked = rng.choice(len(ordered), size=n_labeled, replace=False)
    labeled = frozenset(ordered[i] for i in sorted(int(i) for i in picked))
    unlabeled = frozenset(v for v in ordered if v not in labeled)
    return DatasetSplit(labeled_ids=labeled, unlabeled_ids=unlabeled, seed=seed, fraction=fraction)


def write_split(split: DatasetSplit, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# labeled split seed={split.seed} fraction={split.fraction!r}\n")
        for image_id in sorted(split.labeled_ids, key=str):
            fh.write(f"{image_id}\n")


def read_split(path: str | os.PathLike, all_ids: list | set | tuple) -> DatasetSplit:
    """Rebuild a split from a split file against the full id universe."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read split file {path}: {exc}") from exc
    seed, fraction = 0, 0.0
    labeled: set = set()
    universe = set(all_ids)
    by_str = {str(v): v for v in universe}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if token.startswith("seed="):
                    seed = int(token[5:])
                elif token.startswith("fraction="):
                    fraction = float(token[9:])
            continue
        if line not in by_str:
            raise DataError(f"split file {path} lists unknown image id {line!r}")
        labeled.add(by_str[line])
    if not labeled:
        raise DataError(f"split file {path} lists no labeled images")
    return DatasetSplit(
        labeled_ids=frozenset(labeled),
        unlabeled_ids=frozenset(universe - labeled),
        seed=seed,
        fraction=fraction,
    )


# ---------------------------------------------------------------------------
# Crop-based augmentation
# ---------------------------------------------------------------------------


def _crop_child_record(
    record: ImageRecord, crop: Box, policy: UpscalePolicy, index: int
) -> ImageRecord:
    out_w, out_h = policy.output_size(crop)
    kept: list[Annotation] = []
    for ann in record.annotations:
        inter = ann.box.intersection_area(crop)
        if inter < MIN_CLIPPED_AREA_FRACTION * ann.box.area:
            continue
        mapped = project_into_crop(ann.box, crop, (out_w, out_h))
        clipped = _clip_box(mapped.x1, mapped.y1, mapped.x2, mapped.y2, out_w, out_h)
        if clipped is None:
            continue
        kept.append(replace(ann, box=clipped))
    return ImageRecord(
        image_id=f"{record.image_id}:crop{index}",
        width=out_w,
        height=out_h,
        annotations=tuple(kept),
        provenance=Provenance.crop(record.image_id, crop, (out_w, out_h)),
    )


def augment_with_crops(
    records: list[ImageRecord],
    crops_per_image: dict,
    policy: UpscalePolicy,
) -> list[ImageRecord]:
    """Append one upscaled child record per density crop.

    Parent records pass through unchanged. Child annotations are the parent
    annotations with at least half their area inside the crop, mapped into
    upscaled-crop coordinates and clipped.
    """
    out = list(records)
    for record in records:
        for index, crop in enumerate(crops_per_image.get(record.image_id, [])):
            out.append(_crop_child_record(record, crop, policy, index))
    return out


def crop_scene(scene: SceneSpec, crop: Box, upscale_size: tuple[float, float]) -> SceneSpec:
    """Scene as seen inside an upscaled crop: objects clipped and rescaled."""
    out_w, out_h = upscale_size
    sx = out_w / crop.width
    sy = out_h / crop.height
    objects: list[SceneObject] = []
    for obj in scene.objects:
        clipped = _clip_box(
            obj.box.x1 - crop.x1, obj.box.y1 - crop.y1, obj.box.x2 - crop.x1, obj.box.y2 - crop.y1,
            crop.width, crop.height,
        )
        if clipped is None:
            continue
        objects.append(
            replace(
                obj,
                box=Box(clipped.x1 * sx, clipped.y1 * sy, clipped.x2 * sx, clipped.y2 * sy),
            )
        )
    clusters = tuple(
        ClusterSpec(
            center=((c.center[0] - crop.x1) * sx, (c.center[1] - crop.y1) * sy),
            spread=c.spread * (sx + sy) / 2.0,
            count=c.count,
        )
        for c in scene.clusters
        if crop.x1 <= c.center[0] <= crop.x2 and crop.y1 <= c.center[1] <= crop.y2
    )
    child_seed = stable_int(scene.seed) ^ stable_int(repr(crop.as_tuple()))
    return SceneSpec(width=out_w, height=out_h, objects=tuple(objects), clusters=clusters, seed=child_seed)


def make_crop_children(
    sample: SceneSample, crops: list[Box], policy: UpscalePolicy
) -> list[SceneSample]:
    """Child samples (record + scene) for each density crop of ``sample``."""
    children: list[SceneSample] = []
    for index, crop in enumerate(crops):
        record = _crop_child_record(sample.record, crop, policy, index)
        assert record.provenance.upscale_size is not None
        scene = crop_scene(sample.scene, crop, record.provenance.upscale_size)
        children.append(SceneSample(record=record, scene=scene))
    return children


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Distribution parameters for the synthetic aerial-like scenes.

    Each scene mixes a few clusters of small objects (the regions density
    crops should find) with scattered larger objects. Object payloads are
    noisy one-hot class vectors; they stand in for pixel appearance.
    """

    num_images: int = 20
    width: float = 512.0
    height: float = 512.0
    num_classes: int = 4
    clusters_per_image: tuple[int, int] = (1, 3)
    objects_per_cluster: tuple[int, int] = (5, 10)
    cluster_spread: float = 28.0
    small_size: tuple[float, float] = (6.0, 16.0)
    scattered_per_image: tuple[int, int] = (2, 5)
    large_size: tuple[float, float] = (40.0, 90.0)
    payload_noise: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_images < 0:
            raise ConfigError("num_images must be >= 0")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("scene size must be positive")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        for name in ("clusters_per_image", "objects_per_cluster", "scattered_per_image"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ConfigError(f"{name} range {lo}..{hi} is invalid")
        for name in ("small_size", "large_size"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ConfigError(f"{name} range {lo}..{hi} is invalid")
        if self.payload_noise < 0:
            raise ConfigError("payload_noise must be >= 0")


def _place_object(
    rng: np.random.Generator,
    cx: float,
    cy: float,
    size_range: tuple[float, float],
    class_id: int,
    config: SyntheticConfig,
) -> SceneObject:
    w = float(rng.uniform(*size_range))
    h = float(rng.uniform(*size_range))
    # Shift the center so the box always fits inside the scene.
    cx = min(max(cx, w / 2.0), config.width - w / 2.0)
    cy = min(max(cy, h / 2.0), config.height - h / 2.0)
    payload = np.zeros(config.num_classes)
    payload[class_id] = 1.0
    payload = payload + rng.normal(0.0, config.payload_noise, config.num_classes)
    return SceneObject(
        box=Box(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0),
        class_id=class_id,
        payload=tuple(float(v) for v in payload),
    )


def generate_synthetic_dataset(config: SyntheticConfig) -> list[SceneSample]:
    """Generate scenes with clustered small objects and scattered large ones.

    Ground truth is exact by construction and the whole dataset is a pure
    function of the config, so regeneration from the same seed is
    bit-identical.
    """
    samples: list[SceneSample] = []
    for i in range(config.num_images):
        rng = rng_for(config.seed, "scene", i)
        objects: list[SceneObject] = []
        clusters: list[ClusterSpec] = []
        n_clusters = int(rng.integers(config.clusters_per_image[0], config.clusters_per_image[1] + 1))
        margin = 3.0 * config.cluster_spread
        for _ in range(n_clusters):
            ccx = float(rng.uniform(min(margin, config.width / 2), max(config.width - margin, config.width / 2)))
            ccy = float(rng.uniform(min(margin, config.height / 2), max(config.height - margin, config.height / 2)))
            count = int(rng.integers(config.objects_per_cluster[0], config.objects_per_cluster[1] + 1))
            clusters.append(ClusterSpec(center=(ccx, ccy), spread=config.cluster_spread, count=count))
            for _ in range(count):
                ox = ccx + float(rng.normal(0.0, config.cluster_spread))
                oy = ccy + float(rng.normal(0.0, config.cluster_spread))
                class_id = int(rng.integers(0, config.num_classes))
                objects.append(_place_object(rng, ox, oy, config.small_size, class_id, config))
        n_scattered = int(rng.integers(config.scattered_per_image[0], config.scattered_per_image[1] + 1))
        for _ in range(n_scattered):
            ox = float(rng.uniform(0.0, config.width))
            oy = float(rng.uniform(0.0, config.height))
            class_id = int(rng.integers(0, config.num_classes))
            objects.append(_place_object(rng, ox, oy, config.large_size, class_id, config))
        scene = SceneSpec(
            width=config.width,
            height=config.height,
            objects=tuple(objects),
            clusters=tuple(clusters),
            seed=stable_int(config.seed) ^ stable_int(i * 2654435761),
        )
        record = ImageRecord(
            image_id=i + 1,
            width=config.width,
            height=config.height,
            annotations=tuple(Annotation(box=o.box, class_id=o.class_id) for o in objects),
        )
        samples.append(SceneSample(record=record, scene=scene))
    return samples


# ---------------------------------------------------------------------------
# Scene (de)serialization
# ---------------------------------------------------------------------------


def write_scenes(samples: list[SceneSample], path: str | os.PathLike) -> None:
    """Persist the scene specs next to the COCO annotations."""
    payload = {
        "scenes": {
            str(s.record.image_id): {
                "width": s.scene.width,
                "height": s.scene.height,
                "seed": s.scene.seed,
                "objects": [
                    {
                        "box": list(o.box.as_tuple()),
                        "class_id": o.class_id,
                        "payload": list(o.payload),
                    }
                    for o in s.scene.objects
                ],
                "clusters": [
                    {"center": list(c.center), "spread": c.spread, "count": c.count}
                    for c in s.scene.clusters
                ],
            }
            for s in samples
        }
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ": "), indent=1)
        fh.write("\n")


def read_scenes(path: str | os.PathLike, records: list[ImageRecord]) -> list[SceneSample]:
    """Join scene specs back onto annotation records by image id."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read scene file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"scene file {path} is not valid JSON: {exc}") from exc
    scenes = payload.get("scenes")
    if not isinstance(scenes, dict):
        raise DataError(f"scene file {path} is missing the 'scenes' mapping")
    samples: list[SceneSample] = []
    for record in records:
        raw = scenes.get(str(record.image_id))
        if raw is None:
            raise DataError(f"scene file {path} has no scene for image {record.image_id!r}")
        try:
            scene = SceneSpec(
                width=float(raw["width"]),
                height=float(raw["height"]),
                seed=int(raw["seed"]),
                objects=tuple(
                    SceneObject(
                        box=Box(*(float(v) for v in o["box"])),
                        class_id=int(o["class_id"]),
                        payload=tuple(float(v) for v in o["payload"]),
                    )
                    for o in raw["objects"]
                ),
                clusters=tuple(
                    ClusterSpec(
                        center=(float(c["center"][0]), float(c["center"][1])),
                        spread=float(c["spread"]),
                        count=int(c["count"]),
                    )
                    for c in raw["clusters"]
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed scene entry for image {record.image_id!r}") from exc
        samples.append(SceneSample(record=record, scene=scene))
    return samples
