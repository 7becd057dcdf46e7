# Smoothing map a -> a_t and the approximation functional
# ||a - a_t||_L2 + t ||grad a_t||_L2 used to verify its t^s scaling.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .field import (CoefficientField, FieldArgumentError, grid_l2,
                    coefficient_h1_seminorm)

__all__ = ["MollifierSpec", "ResolutionError", "mollify",
           "approximation_functional", "bump_profile"]

KERNELS = ("box", "bump")


class ResolutionError(ValueError):
    """Smoothing scale too small for the grid (t < 2h)."""


def bump_profile(r):
    """Unnormalized C-infinity bump exp(-1/(1-r^2)) on |r| < 1, else 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True)
class MollifierSpec:
    """Kernel choice and smoothing scale; boundary handling is reflection."""

    t: float
    kernel: str = "box"
    boundary: str = "reflect"

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise FieldArgumentError(f"t must be in (0,1), got {self.t}")
        if self.kernel not in KERNELS:
            raise FieldArgumentError(f"kernel must be one of {KERNELS}")
        if self.boundary != "reflect":
            raise FieldArgumentError("only reflect boundary handling is supported")

    def weights(self, h: float) -> np.ndarray:
        """Symmetric 1D stencil with unit mass on a grid of spacing h."""
        if self.t < 2.0 * h:
            raise ResolutionError(
                f"t = {self.t} under the resolution limit 2h = {2 * h}")
        if self.kernel == "box":
            # exact overlap of each cell with [-t, t], so the discrete
            # convolution is the continuous box moll. of a cellwise field
            k_max = int(np.ceil(self.t / h + 0.5))
            k = np.arange(-k_max, k_max + 1)
            lo = np.maximum(-self.t, k * h - 0.5 * h)
            hi = np.minimum(self.t, k * h + 0.5 * h)
            w = np.maximum(hi - lo, 0.0)
        else:
            k_max = int(np.ceil(self.t / h))
            k = np.arange(-k_max, k_max + 1)
            w = bump_profile(k * h / self.t)
        return w / w.sum()


def mollify(a: CoefficientField, spec: MollifierSpec) -> CoefficientField:
    """Convolve a with the kernel of radius t, reflecting across the boundary.

    Convex averaging keeps the result inside [lam, Lam], so the output is a
    member of the same coefficient class.
    """
    w = spec.weights(a.mesh.h)
    out = a.values
    for axis in range(a.mesh.dim):
        # ndimage 'reflect' duplicates the edge sample, which is exactly the
        # cell-centered reflection across the physical boundary
        out = ndimage.convolve1d(out, w, axis=axis, mode="reflect")
    out = np.clip(out, a.lam, a.Lam)  # shave one-ulp convexity overshoot
    return CoefficientField(a.mesh, out, a.lam, a.Lam)


def approximation_functional(a: CoefficientField, a_t: CoefficientField,
                             t: float) -> float:
    """||a - a_t||_L2 + t ||grad a_t||_L2 on the shared mesh."""
    if a.mesh != a_t.mesh:
        raise FieldArgumentError("fields live on different meshes")
    return grid_l2(a.mesh, a.values - a_t.values) \
        + t * coefficient_h1_seminorm(a_t)
