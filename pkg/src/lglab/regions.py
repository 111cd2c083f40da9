"""Regions with fractional boundary-cell quadrature.

A region is realized as an inside-fraction per grid cell.  Boundary cells get
the exact area fraction of a rectangle cut by a straight line (the signed
distance is locally linear with unit gradient), which removes the O(h)
staircase error of 0/1 indicators.  Caps use the closed-form geodesic distance
to their center; flowed regions use the distance to their boundary polyline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .geometry import BASE_RP2, ConformalMetric, Curve
from .grid import SphereGrid, angles_to_xyz


def straight_cut_fraction(t: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Fraction of a rectangle on the side {n.x <= t} of a straight cut.

    p and q are the rectangle half-widths projected on the cut normal n; the
    fraction is the CDF of the sum of two independent uniform variables, a
    piecewise-quadratic trapezoid law.  Exact for straight cuts at any angle.
    """
    t = np.asarray(t, dtype=float)
    hi = np.maximum(p, q)
    lo = np.minimum(p, q)
    hi = np.maximum(hi, 1e-300)
    full = hi + lo
    flat = hi - lo
    out = np.empty_like(t)
    out[t <= -full] = 0.0
    out[t >= full] = 1.0
    mid = np.abs(t) < full
    tm, him, lom = t[mid], hi[mid], lo[mid]
    fullm, flatm = him + lom, him - lom
    ramp_area = np.where(lom > 0, (tm + fullm) ** 2 / (8.0 * him * np.maximum(lom, 1e-300)), 0.0)
    linear = 0.5 + tm / (2.0 * him)
    val = np.where(tm <= -flatm, ramp_area, linear)
    val = np.where(tm >= flatm, 1.0 - np.where(lom > 0, (fullm - tm) ** 2 / (8.0 * him * np.maximum(lom, 1e-300)), 0.0), val)
    out[mid] = np.clip(val, 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# Grid geometry caches
# ---------------------------------------------------------------------------

_frame_cache: dict[tuple[int, int], dict[str, np.ndarray]] = {}


def _grid_frames(grid: SphereGrid) -> dict[str, np.ndarray]:
    """Node positions, local orthonormal frames, and cell half-widths."""
    key = grid.shape
    got = _frame_cache.get(key)
    if got is not None:
        return got
    xyz = grid.nodes_xyz().reshape(-1, 3)
    th = np.repeat(grid.theta, grid.n_phi)
    ph = np.tile(grid.phi, grid.n_theta)
    st, ct = np.sin(th), np.cos(th)
    cp, sp = np.cos(ph), np.sin(ph)
    e_th = np.stack([ct * cp, ct * sp, -st], axis=1)
    e_ph = np.stack([-sp, cp, np.zeros_like(sp)], axis=1)
    data = {
        "xyz": xyz,
        "e_th": e_th,
        "e_ph": e_ph,
        "half_th": np.full(th.shape, 0.5 * grid.dtheta),
        "half_ph": 0.5 * grid.dphi * st,
    }
    _frame_cache[key] = data
    return data


def cap_distance(grid: SphereGrid, center: np.ndarray) -> np.ndarray:
    """Geodesic distance from every node to the cap center (flat array)."""
    xyz = _grid_frames(grid)["xyz"]
    return np.arccos(np.clip(xyz @ np.asarray(center, dtype=float), -1.0, 1.0))


def _cap_normal_halfwidths(grid: SphereGrid, center: np.ndarray):
    """Cell half-widths projected on the distance gradient, per node."""
    fr = _grid_frames(grid)
    c = np.asarray(center, dtype=float)
    d = cap_distance(grid, c)
    sin_d = np.maximum(np.sin(d), 1e-12)
    p = np.abs(fr["e_th"] @ c) / sin_d * fr["half_th"]
    q = np.abs(fr["e_ph"] @ c) / sin_d * fr["half_ph"]
    return d, p, q


def cap_cell_fractions(
    grid: SphereGrid, center: np.ndarray, aperture: float, refine: int = 1
) -> np.ndarray:
    """Inside-fraction of every cell for the cap of given aperture.

    refine > 1 re-evaluates cells crossed by the boundary on an refine x refine
    subcell lattice with exact subcell areas, squeezing the residual curvature
    error of the straight-cut model.
    """
    d, p, q = _cap_normal_halfwidths(grid, center)
    frac = straight_cut_fraction(aperture - d, p, q)
    if refine > 1:
        band = np.nonzero((frac > 0.0) & (frac < 1.0))[0]
        if band.size:
            frac[band] = _cap_subcell_fractions(grid, center, aperture, band, refine)
    return frac.reshape(grid.shape)


def _cap_subcell_fractions(grid, center, aperture, flat_idx, refine):
    c = np.asarray(center, dtype=float)
    rows = flat_idx // grid.n_phi
    cols = flat_idx % grid.n_phi
    dt, dp = grid.dtheta, grid.dphi
    offs = (np.arange(refine) + 0.5) / refine
    th_lo = rows * dt
    ph_lo = cols * dp
    th_sub = th_lo[:, None, None] + (offs * dt)[None, :, None]
    ph_sub = ph_lo[:, None, None] + (offs * dp)[None, None, :]
    th_sub, ph_sub = np.broadcast_arrays(th_sub, ph_sub)
    xyz = angles_to_xyz(th_sub, ph_sub)
    dist = np.arccos(np.clip(xyz @ c, -1.0, 1.0))
    sin_d = np.maximum(np.sin(dist), 1e-12)
    st, ct = np.sin(th_sub), np.cos(th_sub)
    cp, sp = np.cos(ph_sub), np.sin(ph_sub)
    ldot_th = np.abs(ct * (cp * c[0] + sp * c[1]) - st * c[2])
    ldot_ph = np.abs(-sp * c[0] + cp * c[1])
    p = ldot_th / sin_d * (0.5 * dt / refine)
    q = ldot_ph / sin_d * (0.5 * dp / refine) * st
    sub = straight_cut_fraction(aperture - dist, p, q)
    # exact subcell round areas: cos spans in theta, uniform in phi
    edges = th_lo[:, None] + np.arange(refine + 1)[None, :] * (dt / refine)
    wt = np.cos(edges[:, :-1]) - np.cos(edges[:, 1:])
    weighted = np.einsum("ijk,ij->i", sub, wt)
    return weighted / (np.cos(th_lo) - np.cos(th_lo + dt)) / refine


def cap_boundary_curve(center: np.ndarray, aperture: float, n_vertices: int) -> Curve:
    """Boundary circle of a cap, oriented with the cap on the left."""
    c = np.asarray(center, dtype=float)
    seed = np.array([0.0, 0.0, 1.0]) if abs(c[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(seed, c)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    t = 2.0 * np.pi * np.arange(n_vertices) / n_vertices
    pts = (
        np.sin(aperture) * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
        + np.cos(aperture) * c
    )
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return Curve(pts)


# ---------------------------------------------------------------------------
# Region record and measurement
# ---------------------------------------------------------------------------


@dataclass
class Region:
    """Candidate isoperimetric region: a cap or a curve-bounded indicator.

    For a projective-plane metric the indicator holds one lifted component on
    the covering sphere (the fundamental-domain representative); its stored
    volume_fraction is the quotient fraction.
    """

    kind: str  # "cap" | "indicator"
    fractions: np.ndarray
    boundary: Curve
    volume_fraction: float
    center: np.ndarray | None = None
    aperture: float | None = None
    flags: tuple[str, ...] = ()


def region_volume(metric: ConformalMetric, fractions: np.ndarray) -> float:
    """Conformal volume of the indicated set.

    On the quotient base, an antipodally symmetric indicator is read as a
    lifted set (volume halves); otherwise it is the fundamental-domain
    component and is taken at face value.
    """
    vol = float(np.sum(metric.measure * fractions))
    if metric.base == BASE_RP2:
        sym = np.max(np.abs(fractions - metric.grid.antipodal_field(fractions)))
        if sym < 1e-9:
            vol *= 0.5
    return vol


def region_measures(metric: ConformalMetric, region: Region) -> tuple[float, float]:
    """(volume fraction, boundary length) of a region under the metric."""
    from .geometry import curve_length  # local import to avoid cycle at module load

    vol = region_volume(metric, region.fractions)
    frac = vol / metric.total_volume
    if not 1e-12 < frac < 1.0 - 1e-12:
        raise DomainError(f"region volume fraction {frac} is empty or full")
    return frac, curve_length(metric, region.boundary)


def region_from_cap(
    metric: ConformalMetric,
    center: np.ndarray,
    aperture: float,
    n_vertices: int | None = None,
    refine: int = 4,
) -> Region:
    """Build the cap region with fractional boundary weights and its circle."""
    if not 0.0 < aperture < np.pi:
        raise DomainError("cap aperture must lie in (0, pi)")
    grid = metric.grid
    if n_vertices is None:
        n_vertices = max(256, 2 * grid.n_phi)
    frac = cap_cell_fractions(grid, center, aperture, refine=refine)
    curve = cap_boundary_curve(center, aperture, n_vertices)
    vol = region_volume(metric, frac)
    return Region(
        kind="cap",
        fractions=frac,
        boundary=curve,
        volume_fraction=vol / metric.total_volume,
        center=np.asarray(center, dtype=float),
        aperture=float(aperture),
    )


# ---------------------------------------------------------------------------
# Aperture solving (volume -> cap radius)
# ---------------------------------------------------------------------------


@dataclass
class CapVolumeTable:
    """Per-center sorted cells enabling O(log N) cap volumes at any aperture."""

    grid: SphereGrid
    center: np.ndarray
    dist: np.ndarray = field(repr=False)
    halfwidth: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)
    cellvol: np.ndarray = field(repr=False)
    prefix: np.ndarray = field(repr=False)
    delta_max: float = 0.0

    @classmethod
    def build(cls, metric: ConformalMetric, center: np.ndarray) -> "CapVolumeTable":
        grid = metric.grid
        d, p, q = _cap_normal_halfwidths(grid, center)
        order = np.argsort(d, kind="stable")
        ds = d[order]
        ps, qs = p[order], q[order]
        cellvol = metric.measure.ravel()[order]
        prefix = np.concatenate([[0.0], np.cumsum(cellvol)])
        return cls(
            grid=grid,
            center=np.asarray(center, dtype=float),
            dist=ds,
            halfwidth=ps + qs,
            p=ps,
            q=qs,
            cellvol=cellvol,
            prefix=prefix,
            delta_max=float(np.max(ps + qs)),
        )

    def volume(self, aperture: float) -> float:
        lo = np.searchsorted(self.dist, aperture - self.delta_max)
        hi = np.searchsorted(self.dist, aperture + self.delta_max)
        band = slice(lo, hi)
        frac = straight_cut_fraction(
            aperture - self.dist[band], self.p[band], self.q[band]
        )
        return float(self.prefix[lo] + np.sum(self.cellvol[band] * frac))


def solve_cap_aperture(
    table: CapVolumeTable,
    target_volume: float,
    tol_volume: float,
    lo: float = 0.0,
    hi: float = np.pi,
) -> float:
    """Monotone bisection for the aperture enclosing the target raw volume."""
    flo = table.volume(lo) - target_volume
    fhi = table.volume(hi) - target_volume
    if flo > tol_volume or fhi < -tol_volume:
        raise DomainError("target volume not bracketed by aperture range")
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = table.volume(mid) - target_volume
        if abs(fm) <= tol_volume:
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return mid


def solve_cap_aperture_refined(
    metric: ConformalMetric,
    center: np.ndarray,
    target_volume: float,
    start: float,
    tol_volume: float,
    refine: int = 4,
) -> float:
    """Polish an aperture against the subcell-refined quadrature.

    target_volume and the returned solution refer to the raw conformal volume
    of the full-sphere cap indicator (no quotient halving).
    """
    grid = metric.grid

    def vol_of(a: float) -> float:
        f = cap_cell_fractions(grid, center, a, refine=refine)
        return float(np.sum(metric.measure * f))

    span = 4.0 * grid.dtheta
    lo, hi = max(start - span, 1e-9), min(start + span, np.pi - 1e-9)
    flo, fhi = vol_of(lo) - target_volume, vol_of(hi) - target_volume
    while flo > 0 and lo > 1e-9:
        lo = max(lo - span, 1e-9)
        flo = vol_of(lo) - target_volume
    while fhi < 0 and hi < np.pi - 1e-9:
        hi = min(hi + span, np.pi - 1e-9)
        fhi = vol_of(hi) - target_volume
    a, b, fa, fb = lo, hi, flo, fhi
    for _ in range(100):
        mid = a + (b - a) * (0.5 if fb == fa else float(np.clip(-fa / (fb - fa), 0.05, 0.95)))
        fm = vol_of(mid) - target_volume
        if abs(fm) <= tol_volume:
            return mid
        if fm < 0:
            a, fa = mid, fm
        else:
            b, fb = mid, fm
        if b - a < 1e-14:
            break
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Polyline-bounded regions
# ---------------------------------------------------------------------------


def _segment_distances(points: np.ndarray, curve: Curve):
    """Distance to the nearest boundary feature, its sign, and its direction.

    Sign is negative on the enclosed (left) side.  Direction is the unit
    tangent toward the nearest point, used to project cell half-widths.
    """
    v = curve.vertices
    a = v
    b = np.roll(v, -1, axis=0)
    n = np.cross(a, b)
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)

    d_best = np.full(points.shape[0], np.inf)
    sign_best = np.ones(points.shape[0])
    near_best = np.empty_like(points)
    chunk = max(1, 2**22 // max(1, v.shape[0]))
    for s in range(0, points.shape[0], chunk):
        pts = points[s : s + chunk]
        dot_n = pts @ n.T  # (npts, nseg): sine of signed distance to great circle
        foot = pts[:, None, :] - dot_n[:, :, None] * n[None, :, :]
        foot /= np.maximum(np.linalg.norm(foot, axis=2, keepdims=True), 1e-300)
        in_a = np.einsum("psk,sk->ps", np.cross(a[None, :, :], foot), n) >= 0
        in_b = np.einsum("psk,sk->ps", np.cross(foot, b[None, :, :]), n) >= 0
        on_seg = in_a & in_b
        d_line = np.abs(np.arcsin(np.clip(dot_n, -1.0, 1.0)))
        d_end_a = np.arccos(np.clip(pts @ a.T, -1.0, 1.0))
        dist = np.where(on_seg, d_line, np.minimum(d_end_a, np.roll(d_end_a, -1, axis=1)))
        k = np.argmin(dist, axis=1)
        rows = np.arange(pts.shape[0])
        d_best[s + rows] = dist[rows, k]
        # inner normal of the oriented boundary is along +n, so dot_n > 0 is inside
        sign_best[s + rows] = np.where(dot_n[rows, k] > 0, -1.0, 1.0)
        nearest = np.where(
            on_seg[rows, k][:, None],
            foot[rows, k],
            np.where(
                (d_end_a[rows, k] <= np.roll(d_end_a, -1, axis=1)[rows, k])[:, None],
                a[k],
                b[k],
            ),
        )
        near_best[s + rows] = nearest
    return d_best * sign_best, near_best


def polygon_cell_fractions(
    metric: ConformalMetric,
    curve: Curve,
    prior: np.ndarray | None = None,
    band_cells: float = 6.0,
) -> np.ndarray:
    """Inside fractions for the region enclosed by a closed polyline.

    Only cells within a band of the curve are measured against it; cells
    farther away inherit prior values (or a coarse inside test when no prior
    is supplied).  The prior must come from a curve less than half a band away.
    """
    grid = metric.grid
    fr = _grid_frames(grid)
    xyz = fr["xyz"]
    band = band_cells * grid.dtheta

    stride = 4
    coarse_rows = np.arange(0, grid.n_theta, stride)
    coarse_cols = np.arange(0, grid.n_phi, stride)
    cpts = grid.nodes_xyz()[np.ix_(coarse_rows, coarse_cols)].reshape(-1, 3)
    vsub = curve.vertices[:: max(1, curve.vertices.shape[0] // 512)]
    dcoarse = np.arccos(
        np.clip(cpts @ vsub.T, -1.0, 1.0)
    ).min(axis=1)
    margin = band + (stride * 1.5) * grid.dtheta + float(np.max(curve.edge_arcs()))
    cmask = (dcoarse <= margin).reshape(coarse_rows.size, coarse_cols.size)
    mask = np.zeros(grid.shape, dtype=bool)
    for bi in range(cmask.shape[0]):
        for bj in range(cmask.shape[1]):
            if cmask[bi, bj]:
                mask[
                    coarse_rows[bi] : coarse_rows[bi] + stride,
                    coarse_cols[bj] : coarse_cols[bj] + stride,
                ] = True
    if prior is not None:
        mask |= (prior > 0.0) & (prior < 1.0)
    flat_mask = mask.ravel()
    idx = np.nonzero(flat_mask)[0]

    d_signed, nearest = _segment_distances(xyz[idx], curve)
    to_near = nearest - np.einsum("ik,ik->i", nearest, xyz[idx])[:, None] * xyz[idx]
    norm = np.linalg.norm(to_near, axis=1)
    ok = norm > 1e-12
    dirn = np.zeros_like(to_near)
    dirn[ok] = to_near[ok] / norm[ok, None]
    p = np.abs(np.einsum("ik,ik->i", dirn, fr["e_th"][idx])) * fr["half_th"][idx]
    q = np.abs(np.einsum("ik,ik->i", dirn, fr["e_ph"][idx])) * fr["half_ph"][idx]
    # nodes sitting exactly on a feature point: fall back to isotropic widths
    p = np.where(ok, p, fr["half_th"][idx])
    q = np.where(ok, q, fr["half_ph"][idx])
    frac_band = straight_cut_fraction(-d_signed, p, q)

    if prior is None:
        # classify everything by sign; expensive but exact enough for a seed
        d_all, _ = _segment_distances(xyz, curve)
        frac = (d_all < 0).astype(float).reshape(grid.shape)
    else:
        frac = np.where(prior >= 0.5, 1.0, 0.0)
    flat = frac.ravel()
    flat[idx] = np.where(
        np.abs(d_signed) > band, (d_signed < 0).astype(float), frac_band
    )
    return flat.reshape(grid.shape)


def region_from_curve(
    metric: ConformalMetric,
    curve: Curve,
    prior: np.ndarray | None = None,
    flags: tuple[str, ...] = (),
) -> Region:
    frac = polygon_cell_fractions(metric, curve, prior=prior)
    vol = region_volume(metric, frac)
    return Region(
        kind="indicator",
        fractions=frac,
        boundary=curve,
        volume_fraction=vol / metric.total_volume,
        flags=flags,
    )


def curve_self_intersects(curve: Curve) -> bool:
    """Exact great-circle crossing test over non-adjacent segment pairs."""
    v = curve.vertices
    nseg = v.shape[0]
    a = v
    b = np.roll(v, -1, axis=0)
    n = np.cross(a, b)
    nn = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.maximum(nn, 1e-300)

    line = np.cross(n[:, None, :], n[None, :, :])
    norm = np.linalg.norm(line, axis=2)
    eps = 1e-12

    def on_arc(p, ai, bi, ni):
        c1 = np.einsum("ijk,ik->ij", np.cross(ai[:, None, :], p), ni) >= -eps
        c2 = np.einsum("ijk,ik->ij", np.cross(p, bi[:, None, :]), ni) >= -eps
        return c1 & c2

    with np.errstate(invalid="ignore"):
        p = line / np.maximum(norm[:, :, None], 1e-300)
    hits = np.zeros((nseg, nseg), dtype=bool)
    for sgn in (1.0, -1.0):
        pt = sgn * p
        close_i = on_arc(pt, a, b, n)
        close_j = on_arc(pt.transpose(1, 0, 2), a, b, n).T
        hits |= close_i & close_j & (norm > eps)
    i, j = np.meshgrid(np.arange(nseg), np.arange(nseg), indexing="ij")
    adjacent = (np.abs(i - j) <= 1) | (np.abs(i - j) == nseg - 1)
    return bool(np.any(hits & ~adjacent))
