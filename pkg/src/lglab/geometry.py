"""Conformally deformed model surfaces and their differential operators.

A metric here is always e^{2u} g_round on the unit sphere (or on its antipodal
quotient, represented through an antipodally even factor on the full sphere).
Curvature, integration, curve length and geodesic curvature all reduce to
round-sphere computations weighted by the conformal factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, ResolutionError, SymmetryError
from .grid import SphereGrid, xyz_to_angles

BASE_SPHERE = "sphere"
BASE_RP2 = "rp2"

ANTIPODAL_TOL = 1e-12


class ConformalMetric:
    """Model surface with conformal factor u sampled on a SphereGrid.

    base is "sphere" or "rp2"; for "rp2" the factor must be antipodally even
    so the field descends to the quotient.  K is the curvature constant the
    metric is measured against (admissibility target, not a property of u).
    """

    def __init__(self, base: str, grid: SphereGrid, u: np.ndarray, K: float = 1.0):
        if base not in (BASE_SPHERE, BASE_RP2):
            raise DomainError(f"unknown base {base!r}")
        u = np.asarray(u, dtype=float)
        if u.shape != grid.shape:
            raise DomainError(f"u shape {u.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(u)):
            raise DomainError("conformal factor must be finite at every node")
        if base == BASE_RP2:
            dev = np.max(np.abs(u - grid.antipodal_field(u)))
            if dev > ANTIPODAL_TOL:
                raise SymmetryError(
                    f"conformal factor not antipodally even (deviation {dev:.3e})"
                )
        self.base = base
        self.grid = grid
        self.u = u
        self.K = float(K)

    @cached_property
    def exp_u(self) -> np.ndarray:
        return np.exp(self.u)

    @cached_property
    def exp_2u(self) -> np.ndarray:
        return np.exp(2.0 * self.u)

    @cached_property
    def measure(self) -> np.ndarray:
        """Cell-wise conformal area element (full-sphere cells)."""
        return self.grid.cell_weights() * self.exp_2u

    @cached_property
    def total_volume(self) -> float:
        return integrate_volume(self)

    @cached_property
    def u_gradient(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.gradient(self.u)

    def with_added_factor(self, extra: np.ndarray) -> "ConformalMetric":
        """New metric with factor u + extra on the same grid."""
        return ConformalMetric(self.base, self.grid, self.u + extra, self.K)

    def factor_at(self, points_xyz: np.ndarray) -> np.ndarray:
        """Interpolated u at unit-vector points."""
        th, ph = xyz_to_angles(points_xyz)
        return self.grid.interpolate(self.u, th, ph)

    def normal_derivative_u(self, points_xyz: np.ndarray, normals: np.ndarray):
        """Directional derivative of u along tangent vectors at unit points."""
        th, ph = xyz_to_angles(points_xyz)
        gt, gp = self.u_gradient
        dudt = self.grid.interpolate(gt, th, ph, parity=-1)
        dudp = self.grid.interpolate(gp, th, ph, parity=1)
        st, ct = np.sin(th), np.cos(th)
        cp, sp = np.cos(ph), np.sin(ph)
        e_th = np.stack([ct * cp, ct * sp, -st], axis=-1)
        e_ph = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
        n_th = np.einsum("...k,...k->...", normals, e_th)
        n_ph = np.einsum("...k,...k->...", normals, e_ph)
        return n_th * dudt + n_ph * dudp / np.maximum(st, 1e-300)


@dataclass
class CurvatureField:
    """Gauss curvature at grid nodes with located extrema."""

    values: np.ndarray
    min_value: float
    argmin: int
    max_value: float
    argmax: int

    @classmethod
    def from_values(cls, values: np.ndarray) -> "CurvatureField":
        flat = values.ravel()
        imin = int(np.argmin(flat))
        imax = int(np.argmax(flat))
        return cls(values, float(flat[imin]), imin, float(flat[imax]), imax)


_MAX_EDGE_ANGLE = np.pi / 4


@dataclass
class Curve:
    """Closed polyline of unit vectors, traversed with its region on the left."""

    vertices: np.ndarray
    orientation: str = "region-on-left"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise DomainError("curve needs at least 3 points in R^3")
        norms = np.linalg.norm(v, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise DomainError("curve vertices must lie on the unit sphere")
        self.vertices = v
        arcs = self.edge_arcs()
        if np.any(arcs <= 0.0):
            raise ResolutionError("consecutive curve vertices coincide")
        if np.max(arcs) >= _MAX_EDGE_ANGLE:
            raise ResolutionError(
                f"curve edge subtends {np.max(arcs):.3f} rad; refine below pi/4"
            )

    def edge_arcs(self) -> np.ndarray:
        """Great-circle lengths of edges i -> i+1 (last wraps to first)."""
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        chord = np.linalg.norm(nxt - v, axis=1)
        return 2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))

    def edge_midpoints(self) -> np.ndarray:
        v = self.vertices
        mid = v + np.roll(v, -1, axis=0)
        return mid / np.linalg.norm(mid, axis=1, keepdims=True)

    def tangents(self) -> np.ndarray:
        """Unit tangents at vertices (bisector of adjacent edge directions)."""
        v = self.vertices
        prv = np.roll(v, 1, axis=0)
        nxt = np.roll(v, -1, axis=0)
        t_in = _project_tangent(v, v - prv)
        t_out = _project_tangent(v, nxt - v)
        t = t_in + t_out
        return t / np.maximum(np.linalg.norm(t, axis=1, keepdims=True), 1e-300)

    def inner_normals(self) -> np.ndarray:
        """Unit normals pointing into the enclosed region."""
        return np.cross(self.vertices, self.tangents())


def _project_tangent(base: np.ndarray, vec: np.ndarray) -> np.ndarray:
    t = vec - np.einsum("ij,ij->i", vec, base)[:, None] * base
    return t / np.maximum(np.linalg.norm(t, axis=1, keepdims=True), 1e-300)


# ---------------------------------------------------------------------------
# Laplace-Beltrami on the round sphere
# ---------------------------------------------------------------------------

# Azimuthal modes up to this order get the rescaled polar treatment; higher
# modes of smooth fields are O(r^m) near the pole and the plain stencil is
# already second order there.
_POLE_MODES = 4


def _pole_band_rows(n_theta: int) -> int:
    return min(max(2, n_theta // 16 + 2), n_theta // 4)


def _singular_coeff(m: int, r: np.ndarray) -> np.ndarray:
    """B_m(r) = m(m-1)/r^2 + m cot(r)/r - m^2/sin^2(r), evaluated stably.

    The three terms cancel to O(1); below r = 0.25 a series keeps full
    precision, above it the direct formula is adequate.
    """
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r < 0.25
    rs = r[small]
    r2 = rs * rs
    out[small] = -(
        m * (m + 1) / 3.0
        + m * (3 * m + 1) / 45.0 * r2
        + 2.0 * m * (5 * m + 1) / 945.0 * r2 * r2
        + m * (7 * m + 1) / 4725.0 * r2 * r2 * r2
    )
    rl = r[~small]
    out[~small] = (
        m * (m - 1) / rl**2 + m / (np.tan(rl) * rl) - m**2 / np.sin(rl) ** 2
    )
    return out


def _pole_band_correction(f: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Replacement values minus plain-stencil values for one polar band.

    Works on the band rows nearest theta = 0 of the array as given; the south
    pole is handled by flipping the field.  Modes m <= _POLE_MODES are
    rewritten as r^m h(r) with h smooth and even across the pole, which keeps
    every finite-difference error term uniformly second order despite the
    singular coefficients.
    """
    n_rows = _pole_band_rows(grid.n_theta)
    dt, dp = grid.dtheta, grid.dphi
    r = grid.theta[: n_rows + 1]  # includes the row feeding the last stencil
    modes = np.fft.rfft(f[: n_rows + 1], axis=1)
    n_m = modes.shape[1]

    sin_r = np.sin(r)
    edges = np.arange(n_rows + 1) * dt
    sin_lo = np.sin(edges)  # lower cell-edge sines; sin(0) = 0 kills the ghost
    sin_hi = np.sin(edges + dt)
    a = sin_hi / (dt * dt * sin_r)
    c = sin_lo / (dt * dt * sin_r)
    b = -(a + c)

    delta = np.zeros((n_rows, n_m), dtype=complex)
    for m in range(0, min(_POLE_MODES, n_m - 1) + 1):
        fm = modes[:, m]
        # plain stencil, theta flux form plus azimuthal difference symbol
        ghost = (-1) ** m * fm[0]
        below = np.concatenate([[ghost], fm[:-1]])
        phi_symbol = -4.0 * np.sin(0.5 * m * dp) ** 2 / (dp * dp)
        naive = (
            a[:n_rows] * fm[1 : n_rows + 1]
            + b[:n_rows] * fm[:n_rows]
            + c[:n_rows] * below[:n_rows]
            + phi_symbol * fm[:n_rows] / sin_r[:n_rows] ** 2
        )
        # rescaled scheme: h = f_m / r^m is even and smooth through the pole
        h = fm / r**m if m else fm.copy()
        h_ghost = np.concatenate([[h[0]], h[:-1]])
        d1 = (h[1 : n_rows + 1] - h_ghost[:n_rows]) / (2.0 * dt)
        d2 = (h[1 : n_rows + 1] - 2.0 * h[:n_rows] + h_ghost[:n_rows]) / (dt * dt)
        rb = r[:n_rows]
        good = rb**m * (d2 + (2.0 * m / rb + 1.0 / np.tan(rb)) * d1)
        good = good + _singular_coeff(m, rb) * fm[:n_rows]
        delta[:, m] = good - naive
    return np.fft.irfft(delta, n=grid.n_phi, axis=1)


def laplace_beltrami(metric: ConformalMetric, f: np.ndarray) -> np.ndarray:
    """Round-sphere Laplace-Beltrami of a node field.

    Divergence form (1/sin)d_theta(sin d_theta f) + d_phi^2 f / sin^2 with
    second-order central differences, periodic in phi.  Polar cells close
    across the pole via f(-theta, phi) = f(theta, phi + pi); within a thin
    polar band the low azimuthal modes are rewritten against the r^m leading
    behaviour, which restores uniform second-order accuracy where the naive
    stencil degrades to first order.
    """
    grid = metric.grid
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise DomainError(f"field shape {f.shape} does not match grid {grid.shape}")
    if grid.n_theta < 8:
        raise ResolutionError("laplace_beltrami needs n_theta >= 8")
    dt, dp = grid.dtheta, grid.dphi
    sin_t = np.sin(grid.theta)
    edges = np.arange(grid.n_theta + 1) * dt
    sin_edges = np.sin(edges)
    a = (sin_edges[1:] / (dt * dt * sin_t))[:, None]
    c = (sin_edges[:-1] / (dt * dt * sin_t))[:, None]

    out = np.empty_like(f)
    out[1:-1] = a[1:-1] * f[2:] + c[1:-1] * f[:-2] - (a[1:-1] + c[1:-1]) * f[1:-1]
    out[0] = a[0, 0] * (f[1] - f[0])  # polar edge flux coefficient is sin(0) = 0
    out[-1] = c[-1, 0] * (f[-2] - f[-1])
    out += (np.roll(f, -1, axis=1) - 2.0 * f + np.roll(f, 1, axis=1)) / (
        dp * dp * sin_t[:, None] ** 2
    )

    k = _pole_band_rows(grid.n_theta)
    out[:k] += _pole_band_correction(f, grid)
    out[-k:] += _pole_band_correction(f[::-1], grid)[::-1]
    return out


def gauss_curvature(metric: ConformalMetric) -> CurvatureField:
    """Gauss curvature of e^{2u} g_round: e^{-2u} (1 - Lap u)."""
    values = np.exp(-2.0 * metric.u) * (1.0 - laplace_beltrami(metric, metric.u))
    return CurvatureField.from_values(values)


# ---------------------------------------------------------------------------
# Integration and curve functionals
# ---------------------------------------------------------------------------


def integrate_volume(metric: ConformalMetric, weight: np.ndarray | None = None) -> float:
    """Conformal volume of the surface (optionally weighted by a node field).

    Midpoint sampling of the integrand against exact round cell areas; for the
    projective-plane base the full-sphere sum is halved.
    """
    dens = metric.measure if weight is None else metric.measure * np.asarray(weight)
    total = float(np.sum(dens))
    if metric.base == BASE_RP2:
        total *= 0.5
    return total


def integrate_on_curve(metric: ConformalMetric, curve: Curve, values_at_mid=None):
    """Line integral along the curve in the conformal metric.

    With values_at_mid None this is the conformal length; otherwise the field
    values (sampled at edge midpoints) are integrated against arclength.
    """
    arcs = curve.edge_arcs()
    mids = curve.edge_midpoints()
    factor = np.exp(metric.factor_at(mids))
    if values_at_mid is None:
        return float(np.sum(arcs * factor))
    return float(np.sum(arcs * factor * values_at_mid))


def curve_length(metric: ConformalMetric, curve: Curve) -> float:
    """Conformal length: great-circle edge arcs scaled by e^{u(midpoint)}."""
    return integrate_on_curve(metric, curve)


def geodesic_curvature(metric: ConformalMetric, curve: Curve) -> np.ndarray:
    """Per-vertex geodesic curvature with respect to the inner normal.

    The round part is the discrete turning angle over arclength; the
    conformal correction is e^{-u} (k_round - du/d_nu).
    """
    v = curve.vertices
    prv = np.roll(v, 1, axis=0)
    nxt = np.roll(v, -1, axis=0)
    t_in = _project_tangent(v, v - prv)
    t_out = _project_tangent(v, nxt - v)
    cross = np.cross(t_in, t_out)
    sin_a = np.einsum("ij,ij->i", cross, v)
    cos_a = np.einsum("ij,ij->i", t_in, t_out)
    turning = np.arctan2(sin_a, cos_a)
    arcs = curve.edge_arcs()
    ds = 0.5 * (arcs + np.roll(arcs, 1))
    k_round = np.where(ds > 1e-14, turning / np.maximum(ds, 1e-300), 0.0)
    collinear = np.abs(sin_a) < 1e-14
    k_round = np.where(collinear & (np.abs(turning) < 1e-13), 0.0, k_round)

    normals = np.cross(v, curve.tangents())
    du_dn = metric.normal_derivative_u(v, normals)
    u_v = metric.factor_at(v)
    return np.exp(-u_v) * (k_round - du_dn)


# ---------------------------------------------------------------------------
# Conformal Ricci transformation on flat periodic test lattices (general n)
# ---------------------------------------------------------------------------


def _laplacian_periodic(u: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(u)
    for ax in range(u.ndim):
        out += (np.roll(u, -1, axis=ax) - 2.0 * u + np.roll(u, 1, axis=ax)) / (h * h)
    return out


def _gradient_periodic(u: np.ndarray, h: float) -> list[np.ndarray]:
    return [
        (np.roll(u, -1, axis=ax) - np.roll(u, 1, axis=ax)) / (2.0 * h)
        for ax in range(u.ndim)
    ]


def _hessian_periodic(u: np.ndarray, h: float) -> np.ndarray:
    n = u.ndim
    hess = np.empty(u.shape + (n, n))
    for i in range(n):
        hess[..., i, i] = (
            np.roll(u, -1, axis=i) - 2.0 * u + np.roll(u, 1, axis=i)
        ) / (h * h)
        for j in range(i + 1, n):
            pp = np.roll(np.roll(u, -1, axis=i), -1, axis=j)
            pm = np.roll(np.roll(u, -1, axis=i), 1, axis=j)
            mp = np.roll(np.roll(u, 1, axis=i), -1, axis=j)
            mm = np.roll(np.roll(u, 1, axis=i), 1, axis=j)
            hess[..., i, j] = hess[..., j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
    return hess


def conformal_ricci_nd(
    dim: int,
    u: np.ndarray,
    spacing: float = 1.0,
    base_ric: np.ndarray | None = None,
) -> np.ndarray:
    """Ricci tensor of e^{2u} g_flat on a periodic lattice, any dimension >= 2.

    Implements Ric - (Lap u) g - (n-2) Hess u + (n-2)(du x du - |grad u|^2 g)
    with flat identity base metric; base_ric supplies a nonzero base Ricci
    field when wanted.  In dimension 2 the (n-2) blocks drop and the result
    depends on u only through its Laplacian.
    """
    if dim < 2:
        raise DomainError("conformal transformation needs dimension >= 2")
    u = np.asarray(u, dtype=float)
    if u.ndim != dim:
        raise DomainError(f"u has {u.ndim} axes, expected {dim}")
    eye = np.eye(dim)
    ric = np.zeros(u.shape + (dim, dim)) if base_ric is None else np.array(base_ric, dtype=float)
    lap = _laplacian_periodic(u, spacing)
    ric = ric - lap[..., None, None] * eye
    coeff = dim - 2
    hess = _hessian_periodic(u, spacing)
    grad = _gradient_periodic(u, spacing)
    g = np.stack(grad, axis=-1)
    outer = g[..., :, None] * g[..., None, :]
    grad_sq = np.einsum("...i,...i->...", g, g)
    return ric - coeff * hess + coeff * (outer - grad_sq[..., None, None] * eye)
