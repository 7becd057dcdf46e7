# Inverse maps u -> a: mollifier-weighted piecewise-constant recovery on a
# partition, and pivot-based full recovery on the interval.

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, Partition
from .field import ScalarField, FieldArgumentError, gradient
from .forward import RightHandSide, _antiderivative_at_centers
from .mollify import bump_profile

__all__ = [
    "PwcRecovery", "Recovery1D",
    "RecoveryFailureError", "MalformedInputError", "AmbiguousPivotError",
    "recover_pwc", "recover_1d", "subcube_bump",
]

SANITY_FACTOR = 10.0  # recovered values outside [lam/10, Lam*10] get flagged


class RecoveryFailureError(RuntimeError):
    """No subcube produced a usable recovered value."""


class MalformedInputError(ValueError):
    """The discrete derivative never changes sign, so there is no pivot."""


class AmbiguousPivotError(ValueError):
    """The discrete derivative changes sign more than once."""

    def __init__(self, crossings):
        super().__init__(f"multiple pivot candidates at x = {list(crossings)}")
        self.crossings = tuple(crossings)


@dataclass(frozen=True)
class PwcRecovery:
    partition: Partition
    values: np.ndarray
    flags: tuple

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("q_index,value,flag\n")
            for q, (v, flag) in enumerate(zip(self.values, self.flags)):
                f.write(f"{q},{v:.17g},{flag}\n")


@dataclass(frozen=True)
class Recovery1D:
    mesh: Mesh
    gamma_hat: float
    values: np.ndarray
    w_excl: float

    @property
    def excluded_window(self):
        return (self.gamma_hat - self.w_excl, self.gamma_hat + self.w_excl)

    def to_json_dict(self) -> dict:
        return {"gamma_hat": self.gamma_hat, "w_excl": self.w_excl}


def subcube_bump(partition: Partition, q: int):
    """Normalized interior bump for subcube q, as (cell values, node values).

    The bump is the smooth kernel scaled to the subcube with a one-cell
    support margin, so it vanishes on the cells and nodes adjacent to the
    subcube boundary; the cell values integrate to one discretely.
    """
    mesh = partition.mesh
    h = mesh.h
    radius = 0.5 / partition.n - h
    if radius <= 0:
        raise FieldArgumentError(
            f"subcubes of P_{partition.n} too small for a one-cell margin at N={mesh.n}")
    center = partition.subcube_center(q)
    xc = mesh.cell_centers_1d()
    xn = np.arange(mesh.n + 1) * h
    if mesh.dim == 1:
        cell_vals = bump_profile((xc - center[0]) / radius)
        node_vals = bump_profile((xn - center[0]) / radius)
    else:
        cell_vals = np.multiply.outer(bump_profile((xc - center[0]) / radius),
                                      bump_profile((xc - center[1]) / radius))
        node_vals = np.multiply.outer(bump_profile((xn - center[0]) / radius),
                                      bump_profile((xn - center[1]) / radius))
    mass = float(mesh.h ** mesh.dim * cell_vals.sum())
    return cell_vals / mass, node_vals / mass


def _gradient_norm_on_subcube(u_grad, partition: Partition, q: int) -> float:
    """||grad u||_{L2(Q)} over the faces strictly inside subcube q."""
    mesh = partition.mesh
    m = partition.cells_per_side
    h = mesh.h
    if mesh.dim == 1:
        g = u_grad.components[0]
        sl = slice(q * m, (q + 1) * m)
        return float(np.sqrt(h * np.sum(g[sl] ** 2)))
    gx, gy = u_grad.components
    q1, q2 = q // partition.n, q % partition.n
    sx = slice(q1 * m, (q1 + 1) * m)
    sy = slice(q2 * m, (q2 + 1) * m)
    inner_x = slice(q1 * m + 1, (q1 + 1) * m)
    inner_y = slice(q2 * m + 1, (q2 + 1) * m)
    total = np.sum(gx[sx, inner_y] ** 2) + np.sum(gy[inner_x, sy] ** 2)
    return float(np.sqrt(h ** 2 * total))


def recover_pwc(u: ScalarField, f: RightHandSide, partition: Partition,
                bounds=None, eps_den: float = 1e-8) -> PwcRecovery:
    """Per-subcube coefficient recovery via interior test bumps.

    Each subcube Q yields a_Q = (sum f phi_Q h^d) / (sum grad u . grad phi_Q h^d),
    the weak-form quotient with the bump phi_Q from subcube_bump. The
    denominator uses grad u rather than a discrete Laplacian, which keeps the
    quotient stable for solutions that are only H1-accurate at interfaces.

    bounds, when given as (lam, Lam), flags recovered values outside
    [lam/10, Lam*10] as out-of-range (they are reported unclamped).
    """
    mesh = u.mesh
    if f.mesh != mesh or partition.mesh != mesh:
        raise FieldArgumentError("solution, rhs and partition meshes differ")
    if f.point_masses or f.values.min() <= 0:
        raise FieldArgumentError("recovery requires f >= c_f > 0 with no point masses")
    h = mesh.h
    hd = h ** mesh.dim
    scale = partition.n ** ((mesh.dim + 2) / 2.0)
    g_u = gradient(u)
    values = np.empty(partition.n_subcubes)
    flags = []
    for q in range(partition.n_subcubes):
        phi_cells, phi_nodes = subcube_bump(partition, q)
        interior = phi_nodes[(slice(1, -1),) * mesh.dim]
        g_phi = gradient(ScalarField(mesh, interior))
        num = hd * float(np.sum(f.values * phi_cells))
        den = hd * sum(float(np.sum(cu * cp))
                       for cu, cp in zip(g_u.components, g_phi.components))
        grad_local = _gradient_norm_on_subcube(g_u, partition, q)
        if abs(den) < eps_den * scale * grad_local or den == 0.0:
            values[q] = np.nan if den == 0.0 else num / den
            flags.append("unstable-denominator")
            continue
        values[q] = num / den
        if bounds is not None:
            lam, Lam = bounds
            if not lam / SANITY_FACTOR <= values[q] <= Lam * SANITY_FACTOR:
                flags.append("out-of-range")
                continue
        flags.append("ok")
    if all(flag != "ok" for flag in flags):
        raise RecoveryFailureError("every subcube was flagged; recovery failed")
    return PwcRecovery(partition, values, tuple(flags))


def recover_1d(u: ScalarField, f: RightHandSide, w_excl: float = None,
               *, lam: float, Lam: float) -> Recovery1D:
    """Pivot-based full recovery on (0,1): a = (F(gamma) - F(x)) / u'(x).

    The pivot gamma is the sign change of the discrete derivative, located
    by linear interpolation; cells inside |x - gamma| < w_excl are filled by
    linear interpolation of the window edge values (the quotient is 0/0 at
    the pivot), and the result is clamped to [lam, Lam]. w_excl defaults to
    four mesh cells.
    """
    mesh = u.mesh
    if mesh.dim != 1:
        raise FieldArgumentError("recover_1d requires a dim-1 mesh")
    if f.mesh != mesh:
        raise FieldArgumentError("solution and rhs meshes differ")
    if w_excl is None:
        w_excl = 4.0 * mesh.h
    if w_excl <= 0:
        raise FieldArgumentError(f"w_excl must be > 0, got {w_excl}")
    h = mesh.h
    x = mesh.cell_centers_1d()
    du = np.diff(u.padded()) / h
    sign = np.sign(du)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if len(flips) == 0:
        raise MalformedInputError("discrete derivative has no sign change")
    if len(flips) > 1:
        crossings = [float(x[i] + h * du[i] / (du[i] - du[i + 1])) for i in flips]
        raise AmbiguousPivotError(crossings)
    i = int(flips[0])
    gamma = float(x[i] + h * du[i] / (du[i] - du[i + 1]))

    F = _antiderivative_at_centers(f)
    F_gamma = float(np.interp(gamma, x, F))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (F_gamma - F) / du
    inside = np.abs(x - gamma) < w_excl
    outside = np.nonzero(~inside)[0]
    if len(outside) == 0:
        raise FieldArgumentError("exclusion window swallows the whole domain")
    left = outside[outside < np.nonzero(inside)[0][0]] if inside.any() else outside
    right = outside[outside > np.nonzero(inside)[0][-1]] if inside.any() else outside
    if inside.any():
        if len(left) and len(right):
            x0, x1 = x[left[-1]], x[right[0]]
            y0, y1 = a[left[-1]], a[right[0]]
            a[inside] = y0 + (x[inside] - x0) * (y1 - y0) / (x1 - x0)
        else:
            edge = a[left[-1]] if len(left) else a[right[0]]
            a[inside] = edge
    a = np.clip(a, lam, Lam)
    return Recovery1D(mesh, gamma, a, w_excl)
