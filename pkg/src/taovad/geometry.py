"""Box and mask geometry.

Closed-form box overlap, mask-to-box derivation, 8-connected components,
and overlap-driven box merging. Pixel (x, y) occupies the half-open cell
[x, x+1) x [y, y+1); tight boxes around masks therefore end at max+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .model import BBox, MaskPlane

# 8-connectivity: diagonal neighbors belong to the same component.
_EIGHT = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Region:
    """A connected pixel component: its mask, tight box, and pixel count."""

    mask: MaskPlane
    bbox: BBox
    area: int


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when disjoint or touching."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def center(box: BBox) -> tuple[float, float]:
    """Box midpoint."""
    return ((box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0)


def mask_to_bbox(mask: MaskPlane) -> BBox | None:
    """Tight pixel-cell box around a mask, or None for an empty mask."""
    ys, xs = np.nonzero(mask.bits)
    if ys.size == 0:
        return None
    return BBox(
        float(xs.min()),
        float(ys.min()),
        float(xs.max()) + 1.0,
        float(ys.max()) + 1.0,
    )


def connected_components(mask: MaskPlane) -> list[Region]:
    """8-connected components of a mask, ordered by (min y, min x).

    Each returned Region carries a full-frame mask with only that
    component's pixels set.
    """
    labels, count = ndimage.label(mask.bits, structure=_EIGHT)
    regions: list[Region] = []
    for idx, slc in enumerate(ndimage.find_objects(labels), start=1):
        if slc is None:
            continue
        comp = labels == idx
        bbox = BBox(
            float(slc[1].start), float(slc[0].start), float(slc[1].stop), float(slc[0].stop)
        )
        regions.append(
            Region(
                mask=MaskPlane(mask.width, mask.height, comp),
                bbox=bbox,
                area=int(comp.sum()),
            )
        )
    regions.sort(key=lambda r: (r.bbox.y1, r.bbox.x1))
    return regions


def enclosing_box(boxes: list[BBox]) -> BBox:
    """Smallest box containing every input box."""
    if not boxes:
        raise ValidationError("enclosing_box needs at least one box")
    return BBox(
        min(b.x1 for b in boxes),
        min(b.y1 for b in boxes),
        max(b.x2 for b in boxes),
        max(b.y2 for b in boxes),
    )


def merge_overlapping(boxes: list[BBox], h: float) -> list[BBox]:
    """Replace transitive groups of pairwise-IoU>h boxes by their enclosing box.

    Merging is iterated until stable, so the result is idempotent even when
    the enclosing boxes of two separate groups themselves overlap. Output
    order is canonical: sorted by (y1, x1, y2, x2).
    """
    if not (0.0 < h < 1.0):
        raise ValidationError(f"h must lie in (0, 1), got {h!r}")
    current = list(boxes)
    while True:
        merged = _merge_once(current, h)
        if len(merged) == len(current):
            return sorted(merged, key=lambda b: (b.y1, b.x1, b.y2, b.x2))
        current = merged


def _merge_once(boxes: list[BBox], h: float) -> list[BBox]:
    n = len(boxes)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if iou(boxes[i], boxes[j]) > h:
                parent[find(i)] = find(j)
    groups: dict[int, list[BBox]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(boxes[i])
    return [enclosing_box(members) for members in groups.values()]
