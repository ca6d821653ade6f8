"""Density-crop discovery over clusters of overlapping boxes.

Boxes are first expanded by a few pixels so that near-adjacent objects
overlap, then an IoU-thresholded connection graph is built and each
connected cluster is merged into one enclosing "density crop". Merging is
repeated for a configurable number of rounds so that crops whose enclosing
boxes overlap get fused instead of producing redundant near-duplicates,
and crops covering too much of the image are filtered out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation
from .geometry import Box, enclosing_box, pairwise_iou, scale_box

__all__ = [
    "CropParams",
    "ConnectionGraph",
    "build_connections",
    "merge_once",
    "merge_round",
    "label_density_crops",
]


@dataclass(frozen=True)
class CropParams:
    """Knobs for density-crop discovery.

    merge_steps: number of merge rounds over the evolving crop set.
    sigma: per-side box expansion in pixels before overlap is measured.
    theta: IoU above which two boxes count as connected.
    pi: maximum crop area as a fraction of the image area.
    min_cluster: smallest number of boxes that counts as a cluster.
    """

    merge_steps: int = 3
    sigma: float = 15.0
    theta: float = 0.1
    pi: float = 0.3
    min_cluster: int = 2

    def __post_init__(self) -> None:
        if self.merge_steps < 1:
            raise InvariantViolation(f"merge_steps must be >= 1, got {self.merge_steps}")
        if self.sigma < 0:
            raise InvariantViolation(f"sigma must be >= 0, got {self.sigma}")
        if not (0.0 < self.theta < 1.0):
            raise InvariantViolation(f"theta must be in (0, 1), got {self.theta}")
        if not (0.0 < self.pi <= 1.0):
            raise InvariantViolation(f"pi must be in (0, 1], got {self.pi}")
        if self.min_cluster < 2:
            raise InvariantViolation(f"min_cluster must be >= 2, got {self.min_cluster}")


@dataclass(frozen=True)
class ConnectionGraph:
    """Pairwise IoU matrix plus the thresholded symmetric connection matrix."""

    iou_matrix: np.ndarray
    connections: np.ndarray = field(repr=False)


def build_connections(boxes: list[Box], theta: float) -> ConnectionGraph:
    """Connect every pair of boxes whose IoU strictly exceeds ``theta``."""
    if not (0.0 < theta < 1.0):
        raise InvariantViolation(f"theta must be in (0, 1), got {theta}")
    overlaps = pairwise_iou(boxes)
    connections = overlaps > theta
    np.fill_diagonal(connections, False)
    return ConnectionGraph(iou_matrix=overlaps, connections=connections)


def merge_once(
    boxes: list[Box], graph: ConnectionGraph
) -> list[tuple[Box, list[int]]]:
    """Collapse each connected cluster of boxes into one enclosing crop.

    Clusters are emitted in a deterministic discovery order: repeatedly
    seed at the box with the most remaining connections (ties go to the
    lowest index), absorb everything reachable from it, record the
    enclosing box and member indices, and zero the rows and columns of all
    absorbed members so each cluster produces exactly one crop per pass.
    Boxes with no connections are not emitted.
    """
    conn = graph.connections.copy()
    crops: list[tuple[Box, list[int]]] = []
    degrees = conn.sum(axis=1)
    while degrees.any():
        seed = int(np.argmax(degrees))
        members = _component_of(seed, conn)
        crops.append((enclosing_box([boxes[i] for i in members]), members))
        conn[members, :] = False
        conn[:, members] = False
        degrees = conn.sum(axis=1)
    return crops


def _component_of(seed: int, conn: np.ndarray) -> list[int]:
    """Indices reachable from ``seed`` in the connection graph, sorted."""
    seen = {seed}
    frontier = [seed]
    while frontier:
        nxt: list[int] = []
        for i in frontier:
            for j in np.flatnonzero(conn[i]):
                j = int(j)
                if j not in seen:
                    seen.add(j)
                    nxt.append(j)
        frontier = nxt
    return sorted(seen)


def merge_round(
    boxes: list[Box],
    image_size: tuple[float, float],
    params: CropParams,
    *,
    carry_unmerged: bool,
) -> list[Box]:
    """One build/merge/filter pass over the current box set.

    In the first round (``carry_unmerged=False``) boxes that joined no
    cluster are dropped and clusters below ``min_cluster`` members are
    discarded; in later rounds every input is already a crop, so unmerged
    boxes pass through unchanged.
    """
    if not boxes:
        return []
    graph = build_connections(boxes, params.theta)
    merged = merge_once(boxes, graph)
    out: list[Box] = []
    absorbed: set[int] = set()
    for crop, members in merged:
        absorbed.update(members)
        if carry_unmerged or len(members) >= params.min_cluster:
            out.append(crop)
    if carry_unmerged:
        out.extend(b for i, b in enumerate(boxes) if i not in absorbed)
    max_area = params.pi * image_size[0] * image_size[1]
    return [b for b in out if b.area <= max_area]


def label_density_crops(
    boxes: list[Box], image_size: tuple[float, float], params: CropParams
) -> list[Box]:
    """Discover density crops for one image.

    Inputs are expanded by ``sigma`` once, then ``merge_steps`` rounds of
    cluster merging and size filtering are applied. The output is
    deduplicated by exact coordinate equality (merging is deterministic,
    so exact duplicates are the only duplicate mode).
    """
    current = [scale_box(b, params.sigma, image_size) for b in boxes]
    for step in range(params.merge_steps):
        current = merge_round(current, image_size, params, carry_unmerged=step > 0)
        if not current:
            return []
    seen: set[tuple[float, float, float, float]] = set()
    unique: list[Box] = []
    for b in current:
        key = b.as_tuple()
        if key not in seen:
            seen.add(key)
            unique.append(b)
    return unique
