"""Uncoupled cellular neural network (Chua-Yang) simulator.

Each cell follows

    dX/dt = -X + sum(A * Y_nbhd) + sum(B * U_nbhd) + Z
    Y = 0.5 * (|X + 1| - |X - 1|)

integrated with forward Euler on a synchronous, double-buffered grid.
Cells outside the grid are virtual cells with U = Y = 0.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from caextract.raster import Raster

DIVERGENCE_LIMIT = 1e6


class CnnInstabilityError(RuntimeError):
    """Raised when a state leaves the bounded region during integration."""


@dataclass(frozen=True)
class CnnTemplate:
    """Feedback template ``A``, control template ``B`` and bias ``Z``."""

    A: np.ndarray
    B: np.ndarray
    Z: float
    name: str = "custom"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2 == 0:
            raise ValueError(f"A and B must be equal odd squares, got {A.shape} and {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.isfinite(self.Z)):
            raise ValueError("template weights must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Z", float(self.Z))

    @property
    def radius(self) -> int:
        return self.A.shape[0] // 2

    @property
    def gene(self) -> np.ndarray:
        """Serialized (A, B, Z) vector."""
        return np.concatenate([self.A.ravel(), self.B.ravel(), [self.Z]])

    @property
    def uncoupled(self) -> bool:
        off = self.A.copy()
        off[self.radius, self.radius] = 0.0
        return not np.any(off)

    @classmethod
    def from_gene(cls, gene, radius: int = 1, name: str = "custom") -> "CnnTemplate":
        side = 2 * radius + 1
        gene = np.asarray(gene, dtype=np.float64)
        if gene.size != 2 * side * side + 1:
            raise ValueError(f"gene of length {gene.size} does not match radius {radius}")
        n = side * side
        return cls(gene[:n].reshape(side, side), gene[n : 2 * n].reshape(side, side),
                   gene[-1], name=name)

    def to_dict(self) -> dict:
        return {"name": self.name, "radius": self.radius, "A": self.A.ravel().tolist(),
                "B": self.B.ravel().tolist(), "Z": self.Z}

    @classmethod
    def from_dict(cls, d: dict) -> "CnnTemplate":
        side = 2 * int(d["radius"]) + 1
        return cls(np.reshape(d["A"], (side, side)), np.reshape(d["B"], (side, side)),
                   float(d["Z"]), name=d.get("name", "custom"))


EDGE = CnnTemplate(
    A=[[0, 0, 0], [0, 2, 0], [0, 0, 0]],
    B=[[-1, -1, -1], [-1, 8, -1], [-1, -1, -1]],
    Z=-1.0,
    name="EDGE",
)


def load_template(path: str | os.PathLike) -> CnnTemplate:
    """Read a template from a JSON file with keys radius, A, B, Z."""
    with open(path) as fh:
        return CnnTemplate.from_dict(json.load(fh))


def output_fn(x):
    """Piecewise-linear saturation ``0.5 * (|x + 1| - |x - 1|)``."""
    x = np.asarray(x, dtype=np.float64)
    y = 0.5 * (np.abs(x + 1.0) - np.abs(x - 1.0))
    return y if y.ndim else float(y)


@dataclass
class CnnState:
    X: np.ndarray
    U: np.ndarray
    t: float
    steps: int = 0
    converged: bool = False

    @property
    def Y(self) -> np.ndarray:
        return output_fn(self.X)


def _neighborhood_sum(template_part: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return correlate(grid, template_part, mode="constant", cval=0.0)


def integrate(
    template: CnnTemplate,
    u: np.ndarray,
    x0: np.ndarray | float = 0.0,
    h: float = 0.1,
    tol: float = 1e-6,
    t_max: float = 100.0,
) -> CnnState:
    """Run forward Euler until the state settles.

    Stops when ``max|dX| < tol * h`` for a single step (equivalently the
    derivative drops below ``tol``) or ``t >= t_max``.

    Args:
        template: CNN weights.
        u: fixed input grid.
        x0: initial state grid or scalar.
        h: Euler step.
        tol: derivative tolerance.
        t_max: integration horizon.

    Raises:
        CnnInstabilityError: if any ``|X|`` exceeds 1e6.
    """
    if h <= 0 or tol <= 0:
        raise ValueError("h and tol must be positive")
    u = np.asarray(u, dtype=np.float64)
    X = np.broadcast_to(np.asarray(x0, dtype=np.float64), u.shape).copy()
    # the control term is constant for the whole run
    drive = _neighborhood_sum(template.B, u) + template.Z
    a_center = template.A[template.radius, template.radius]
    uncoupled = template.uncoupled
    t = 0.0
    steps = 0
    converged = False
    while t < t_max:
        Y = output_fn(X)
        feedback = a_center * Y if uncoupled else _neighborhood_sum(template.A, Y)
        dX = h * (-X + feedback + drive)
        X = X + dX
        t += h
        steps += 1
        if not np.all(np.abs(X) <= DIVERGENCE_LIMIT):
            raise CnnInstabilityError(
                f"template {template.name!r} diverged at t={t:.3g}"
            )
        if np.max(np.abs(dX)) < tol * h:
            converged = True
            break
    return CnnState(X=X, U=u, t=t, steps=steps, converged=converged)


def detect_edges(
    raster: Raster | np.ndarray,
    template: CnnTemplate = EDGE,
    threshold: float = 0.0,
    h: float = 0.1,
    tol: float = 1e-6,
    t_max: float = 100.0,
) -> np.ndarray:
    """Boolean boundary mask from the steady-state CNN output.

    A multiband raster is reduced to its band mean; values in [0, 1] are
    mapped to inputs ``u = 2v - 1``. The initial state is zero.
    """
    if isinstance(raster, Raster):
        v = raster.band_mean()
    else:
        v = np.asarray(raster, dtype=np.float64)
    state = integrate(template, 2.0 * v - 1.0, 0.0, h=h, tol=tol, t_max=t_max)
    return state.Y > threshold


def morphological_boundary(mask: np.ndarray) -> np.ndarray:
    """Object pixels with at least one non-object 4-neighbor (off-grid counts as non-object)."""
    m = np.pad(np.asarray(mask, dtype=bool), 1, constant_values=False)
    inner = m[1:-1, 1:-1]
    all_in = m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    return inner & ~all_in
