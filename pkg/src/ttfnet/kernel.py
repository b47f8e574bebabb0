"""Aspect-ratio-aware 2D Gaussian kernels on the feature grid.

A kernel is truncated to the rectangle ``|x - cx| <= 3*sigma_x``,
``|y - cy| <= 3*sigma_y``. With ``sigma = a * size / 6`` that rectangle is
exactly the box scaled by ``a`` about the kernel centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BoundingBox

# slack for 3*sigma landing a hair below an integer after float rounding
_SUPPORT_TOL = 1e-9


@dataclass(frozen=True)
class KernelSpec:
    cx: float
    cy: float
    sigma_x: float
    sigma_y: float
    half_w: int
    half_h: int

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("degenerate kernel: sigmas must be positive")

    @classmethod
    def from_sigmas(cls, cx: float, cy: float, sigma_x: float, sigma_y: float) -> "KernelSpec":
        return cls(cx, cy, sigma_x, sigma_y, support_extent(sigma_x), support_extent(sigma_y))


def support_extent(sigma: float) -> int:
    """Largest integer cell offset that still lies within ``3*sigma``."""
    return int(math.floor(3.0 * sigma + _SUPPORT_TOL))


def sigmas(box_w: float, box_h: float, a: float) -> tuple[float, float]:
    """Per-axis standard deviations ``a*w/6`` and ``a*h/6`` (grid units)."""
    if box_w <= 0 or box_h <= 0 or a <= 0:
        raise ValueError(f"degenerate kernel: w={box_w}, h={box_h}, scale={a}")
    return a * box_w / 6.0, a * box_h / 6.0


def isotropic_sigmas(box_w: float, box_h: float, a: float) -> tuple[float, float]:
    """Baseline that ignores aspect ratio: one sigma from the longer side."""
    sx, sy = sigmas(box_w, box_h, a)
    s = max(sx, sy)
    return s, s


def quantize_center(box: BoundingBox) -> tuple[int, int]:
    """Grid cell holding the centre of a feature-scale box."""
    cx, cy = box.center
    return int(math.floor(cx)), int(math.floor(cy))


def kernel_spec(box: BoundingBox, a: float, aspect_aware: bool = True) -> KernelSpec:
    """Kernel for a feature-scale box, centred on its quantized centre cell."""
    fn = sigmas if aspect_aware else isotropic_sigmas
    sx, sy = fn(box.width, box.height, a)
    cx, cy = quantize_center(box)
    return KernelSpec.from_sigmas(float(cx), float(cy), sx, sy)


def gaussian(spec: KernelSpec, x, y):
    """Untruncated Gaussian value; accepts scalars or broadcastable arrays."""
    dx = np.asarray(x, dtype=np.float64) - spec.cx
    dy = np.asarray(y, dtype=np.float64) - spec.cy
    return np.exp(-(dx * dx) / (2.0 * spec.sigma_x**2) - (dy * dy) / (2.0 * spec.sigma_y**2))


def in_support(spec: KernelSpec, x, y):
    dx = np.abs(np.asarray(x, dtype=np.float64) - spec.cx)
    dy = np.abs(np.asarray(y, dtype=np.float64) - spec.cy)
    return (dx <= 3.0 * spec.sigma_x + _SUPPORT_TOL) & (dy <= 3.0 * spec.sigma_y + _SUPPORT_TOL)


def kernel_value(spec: KernelSpec, x: float, y: float) -> float:
    """Truncated kernel value at grid coordinate ``(x, y)``."""
    if not in_support(spec, x, y):
        return 0.0
    return float(gaussian(spec, x, y))


@dataclass(frozen=True)
class RenderedKernel:
    """A kernel patch and where it sits on the grid.

    ``patch`` covers rows ``y0:y0+patch.shape[0]`` and columns
    ``x0:x0+patch.shape[1]``; it may be empty.
    """

    patch: np.ndarray
    spec: KernelSpec
    x0: int
    y0: int

    @property
    def rows(self) -> slice:
        return slice(self.y0, self.y0 + self.patch.shape[0])

    @property
    def cols(self) -> slice:
        return slice(self.x0, self.x0 + self.patch.shape[1])

    @property
    def empty(self) -> bool:
        return self.patch.size == 0


def support_window(spec: KernelSpec, grid_w: int, grid_h: int) -> tuple[int, int, int, int]:
    """Grid-clipped support as ``(x_lo, x_hi, y_lo, y_hi)`` (exclusive ends)."""
    cx, cy = int(spec.cx), int(spec.cy)
    x_lo = max(cx - spec.half_w, 0)
    x_hi = min(cx + spec.half_w + 1, grid_w)
    y_lo = max(cy - spec.half_h, 0)
    y_hi = min(cy + spec.half_h + 1, grid_h)
    return x_lo, max(x_hi, x_lo), y_lo, max(y_hi, y_lo)


def render_kernel(
    box: BoundingBox,
    a: float,
    grid_w: int,
    grid_h: int,
    aspect_aware: bool = True,
) -> RenderedKernel:
    """Evaluate the truncated kernel of a feature-scale box over its support."""
    spec = kernel_spec(box, a, aspect_aware)
    x_lo, x_hi, y_lo, y_hi = support_window(spec, grid_w, grid_h)
    xs = np.arange(x_lo, x_hi, dtype=np.float64)
    ys = np.arange(y_lo, y_hi, dtype=np.float64)
    patch = gaussian(spec, xs[None, :], ys[:, None])
    return RenderedKernel(patch=patch, spec=spec, x0=x_lo, y0=y_lo)
