"""Region growing with a three-state cellular automaton.

States: ``B`` boundary (fixed from the edge mask), ``U`` unassigned,
``R`` region. A ``U`` cell becomes ``R`` when any neighbor is ``B`` or
``R``; sweeps are synchronous and run until nothing changes.

Growth floods every cell reachable from a boundary, including the
background around closed outlines. :func:`extract_objects` therefore
discards region components that touch the image frame before it labels
connected components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

U, R, B = 0, 1, 2
STATE_NAMES = {U: "U", R: "R", B: "B"}

_STRUCTURE = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def _structure(connectivity: int) -> np.ndarray:
    try:
        return _STRUCTURE[connectivity]
    except KeyError:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}") from None


@dataclass
class RegionGrid:
    states: np.ndarray
    sweeps: int = 0

    @property
    def height(self) -> int:
        return self.states.shape[0]

    @property
    def width(self) -> int:
        return self.states.shape[1]

    def counts(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(self.states == s)) for s, name in STATE_NAMES.items()}


def _has_active_neighbor(active: np.ndarray, connectivity: int) -> np.ndarray:
    p = np.pad(active, 1, constant_values=False)
    hit = p[:-2, 1:-1] | p[2:, 1:-1] | p[1:-1, :-2] | p[1:-1, 2:]
    if connectivity == 8:
        hit |= p[:-2, :-2] | p[:-2, 2:] | p[2:, :-2] | p[2:, 2:]
    return hit


def sweep(states: np.ndarray, connectivity: int = 4) -> np.ndarray:
    """One synchronous CA update."""
    _structure(connectivity)
    grow = (states == U) & _has_active_neighbor(states != U, connectivity)
    out = states.copy()
    out[grow] = R
    return out


def grow_regions(boundary: np.ndarray | RegionGrid, connectivity: int = 4) -> RegionGrid:
    """Run the region-growing CA to its fixpoint.

    Args:
        boundary: boolean edge mask, or an existing :class:`RegionGrid` to
            continue from.
        connectivity: 4 or 8.

    Returns:
        The fixpoint grid; ``sweeps`` counts every sweep performed, including
        the final one that changed nothing.
    """
    if isinstance(boundary, RegionGrid):
        states = boundary.states.copy()
    else:
        mask = np.asarray(boundary, dtype=bool)
        if mask.ndim != 2 or min(mask.shape) < 1:
            raise ValueError("boundary mask must be a non-empty 2-D grid")
        states = np.where(mask, B, U).astype(np.uint8)
    sweeps = 0
    while True:
        nxt = sweep(states, connectivity)
        sweeps += 1
        if np.array_equal(nxt, states):
            return RegionGrid(states, sweeps)
        states = nxt


@dataclass
class ExtractedObject:
    id: int
    pixels: np.ndarray
    boundary_pixels: np.ndarray
    bbox: tuple[int, int, int, int]

    @property
    def area_px(self) -> int:
        return len(self.pixels)

    def mask(self, shape: tuple[int, int] | None = None) -> np.ndarray:
        """Object as a boolean mask, cropped to its bbox unless ``shape`` is given."""
        if shape is None:
            r0, c0, r1, c1 = self.bbox
            out = np.zeros((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
            out[self.pixels[:, 0] - r0, self.pixels[:, 1] - c0] = True
        else:
            out = np.zeros(shape, dtype=bool)
            out[self.pixels[:, 0], self.pixels[:, 1]] = True
        return out

    def run_lengths(self) -> list[list[int]]:
        """Row runs ``[row, first_col, length]`` in raster order."""
        runs: list[list[int]] = []
        for r, c in self.pixels.tolist():
            if runs and runs[-1][0] == r and runs[-1][1] + runs[-1][2] == c:
                runs[-1][2] += 1
            else:
                runs.append([r, c, 1])
        return runs

    def to_record(self, pixel_size: float = 1.0) -> dict:
        return {
            "id": self.id,
            "area_px": self.area_px,
            "area_ground": self.area_px * pixel_size ** 2,
            "bbox": list(self.bbox),
            "rle": self.run_lengths(),
        }


def _enclosed_regions(states: np.ndarray, connectivity: int) -> np.ndarray:
    """R cells whose region component does not reach the image frame."""
    region = states == R
    lab, _ = ndimage.label(region, structure=_structure(connectivity))
    frame = np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]])
    outside = np.isin(lab, frame[frame > 0])
    return region & ~outside


def extract_objects(grid: RegionGrid, connectivity: int = 4,
                    keep_background: bool = False) -> list[ExtractedObject]:
    """Connected components of boundary plus enclosed region cells.

    Args:
        grid: a :func:`grow_regions` fixpoint.
        connectivity: 4 or 8, used for both the background test and labeling.
        keep_background: label components of all ``B``/``R`` cells, without
            dropping frame-touching regions.

    Returns:
        Objects ordered by their first pixel in raster order.
    """
    structure = _structure(connectivity)
    states = grid.states
    if keep_background:
        solid = states != U
    else:
        solid = (states == B) | _enclosed_regions(states, connectivity)
    lab, count = ndimage.label(solid, structure=structure)
    if count == 0:
        return []
    objects = []
    slices = ndimage.find_objects(lab)
    for i, sl in enumerate(slices, start=1):
        comp = lab[sl] == i
        rows, cols = np.nonzero(comp)
        rows = rows + sl[0].start
        cols = cols + sl[1].start
        pix = np.column_stack([rows, cols])
        full = lab == i
        edge = full & _has_active_neighbor(~full, 4)
        edge |= _frame_cells(full)
        er, ec = np.nonzero(edge)
        objects.append(ExtractedObject(
            id=0,
            pixels=pix,
            boundary_pixels=np.column_stack([er, ec]),
            bbox=(int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
        ))
    objects.sort(key=lambda o: tuple(o.pixels[0]))
    for n, obj in enumerate(objects):
        obj.id = n
    return objects


def _frame_cells(mask: np.ndarray) -> np.ndarray:
    frame = np.zeros_like(mask)
    frame[0] = frame[-1] = True
    frame[:, 0] = frame[:, -1] = True
    return mask & frame


def objects_mask(objects: list[ExtractedObject], shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for obj in objects:
        out[obj.pixels[:, 0], obj.pixels[:, 1]] = True
    return out
