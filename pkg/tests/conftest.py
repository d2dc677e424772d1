"""Shared helpers: mask literals, random generators, reference algorithms."""

from __future__ import annotations

import hashlib
import random
from pathlib import Path

import numpy as np

from taovad.model import BBox, MaskPlane


def mask_from_rows(rows: list[str]) -> MaskPlane:
    """Build a mask from strings, 'X' set and '.' clear."""
    height = len(rows)
    width = len(rows[0]) if rows else 0
    bits = np.zeros((height, width), dtype=bool)
    for y, row in enumerate(rows):
        assert len(row) == width, "ragged mask literal"
        for x, ch in enumerate(row):
            bits[y, x] = ch == "X"
    return MaskPlane(width, height, bits)


def random_mask(rng: random.Random, width: int, height: int, density: float = 0.4) -> MaskPlane:
    bits = np.array(
        [[rng.random() < density for _ in range(width)] for _ in range(height)], dtype=bool
    )
    return MaskPlane(width, height, bits)


def random_box(rng: random.Random, extent: float = 20.0, quantum: float | None = None) -> BBox:
    def draw(lo, hi):
        value = rng.uniform(lo, hi)
        if quantum is not None:
            value = round(value / quantum) * quantum
        return value

    while True:
        x1 = draw(0.0, extent * 0.8)
        y1 = draw(0.0, extent * 0.8)
        x2 = draw(x1, extent)
        y2 = draw(y1, extent)
        if x2 > x1 and y2 > y1:
            return BBox(x1, y1, x2, y2)


def flood_components(mask: MaskPlane) -> list[frozenset[tuple[int, int]]]:
    """Reference 8-connected components by breadth-first flood fill.

    Returns pixel sets as (x, y) pairs, ordered by each component's
    topmost-then-leftmost bounding corner.
    """
    bits = mask.bits
    seen = np.zeros_like(bits)
    comps: list[frozenset[tuple[int, int]]] = []
    for y in range(mask.height):
        for x in range(mask.width):
            if not bits[y, x] or seen[y, x]:
                continue
            queue = [(x, y)]
            seen[y, x] = True
            pixels = []
            while queue:
                cx, cy = queue.pop()
                pixels.append((cx, cy))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        nx, ny = cx + dx, cy + dy
                        if 0 <= nx < mask.width and 0 <= ny < mask.height:
                            if bits[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                queue.append((nx, ny))
            comps.append(frozenset(pixels))

    def corner(comp: frozenset[tuple[int, int]]) -> tuple[int, int]:
        return (min(p[1] for p in comp), min(p[0] for p in comp))

    return sorted(comps, key=corner)


def hash_tree(root: Path, skip_substring: str = "manifest") -> dict[str, str]:
    """Content hash per file under root, skipping manifests."""
    out: dict[str, str] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file() or skip_substring in path.name:
            continue
        out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out
