"""Cell-centered latitude-longitude grid on the unit sphere.

Colatitude samples sit at theta_i = (i + 1/2) * pi / n_theta, so no node lies
on a pole and the antipodal map (theta, phi) -> (pi - theta, phi + pi) sends
nodes to nodes whenever n_phi is even.  Quadrature uses the exact spherical
measure of each cell, which makes integrals of constants exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError


@dataclass(frozen=True)
class SphereGrid:
    """Structured (theta, phi) lattice with quadrature weights."""

    n_theta: int
    n_phi: int
    theta: np.ndarray = field(init=False, repr=False, compare=False)
    phi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_theta < 8 or self.n_phi < 16:
            raise ResolutionError(
                f"grid {self.n_theta}x{self.n_phi} too coarse; need >= 8x16"
            )
        if self.n_phi % 2 != 0:
            raise ResolutionError("n_phi must be even for the antipodal node map")
        dt = np.pi / self.n_theta
        object.__setattr__(self, "theta", (np.arange(self.n_theta) + 0.5) * dt)
        object.__setattr__(
            self, "phi", np.arange(self.n_phi) * (2.0 * np.pi / self.n_phi)
        )

    @property
    def dtheta(self) -> float:
        return np.pi / self.n_theta

    @property
    def dphi(self) -> float:
        return 2.0 * np.pi / self.n_phi

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    def cell_weights(self) -> np.ndarray:
        """Exact round-sphere cell areas, shape (n_theta, n_phi).

        Row i carries (cos(theta_i - dt/2) - cos(theta_i + dt/2)) * dphi, so the
        weights sum to 4*pi up to rounding.
        """
        edges = np.arange(self.n_theta + 1) * self.dtheta
        band = np.cos(edges[:-1]) - np.cos(edges[1:])
        return np.repeat(band[:, None], self.n_phi, axis=1) * self.dphi

    def nodes_xyz(self) -> np.ndarray:
        """Cartesian node positions, shape (n_theta, n_phi, 3)."""
        st, ct = np.sin(self.theta), np.cos(self.theta)
        cp, sp = np.cos(self.phi), np.sin(self.phi)
        out = np.empty((self.n_theta, self.n_phi, 3))
        out[:, :, 0] = st[:, None] * cp[None, :]
        out[:, :, 1] = st[:, None] * sp[None, :]
        out[:, :, 2] = ct[:, None]
        return out

    def antipodal_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Row/column index arrays realizing (theta, phi) -> (pi-theta, phi+pi)."""
        rows = np.arange(self.n_theta)[::-1]
        cols = (np.arange(self.n_phi) + self.n_phi // 2) % self.n_phi
        return rows, cols

    def antipodal_field(self, values: np.ndarray) -> np.ndarray:
        rows, cols = self.antipodal_indices()
        return values[rows][:, cols]

    def extend_poles(self, values: np.ndarray, parity: int = 1) -> np.ndarray:
        """Append one ghost row beyond each pole.

        Ghosts realize f(-theta, phi) = parity * f(theta, phi + pi); parity is
        +1 for scalar fields and -1 for theta-derivative fields.
        """
        half = self.n_phi // 2
        top = parity * np.roll(values[0], half)
        bot = parity * np.roll(values[-1], half)
        return np.vstack([top, values, bot])

    def interpolate(
        self,
        values: np.ndarray,
        theta: np.ndarray,
        phi: np.ndarray,
        parity: int = 1,
    ) -> np.ndarray:
        """Bilinear interpolation in (theta, phi), periodic in phi.

        Points with theta inside the half-cell polar margins use the
        across-pole ghost rows, so smooth fields interpolate cleanly there.
        """
        ext = self.extend_poles(np.asarray(values), parity)
        dt, dp = self.dtheta, self.dphi
        # extended theta coordinates run from -dt/2 to pi + dt/2
        ti = np.clip((np.asarray(theta) + 0.5 * dt) / dt, 0.0, self.n_theta + 1 - 1e-12)
        i0 = np.minimum(ti.astype(int), self.n_theta)
        ft = ti - i0
        pj = (np.asarray(phi) % (2.0 * np.pi)) / dp
        j0 = pj.astype(int) % self.n_phi
        fp = pj - pj.astype(int)
        j1 = (j0 + 1) % self.n_phi
        v00 = ext[i0, j0]
        v01 = ext[i0, j1]
        v10 = ext[i0 + 1, j0]
        v11 = ext[i0 + 1, j1]
        return (
            v00 * (1 - ft) * (1 - fp)
            + v01 * (1 - ft) * fp
            + v10 * ft * (1 - fp)
            + v11 * ft * fp
        )

    def gradient(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Central-difference (d/dtheta, d/dphi) of a scalar field at nodes."""
        ext = self.extend_poles(values, parity=1)
        dfdt = (ext[2:] - ext[:-2]) / (2.0 * self.dtheta)
        dfdp = (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) / (
            2.0 * self.dphi
        )
        return dfdt, dfdp


def xyz_to_angles(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Colatitude/longitude of unit vectors; phi wrapped to [0, 2*pi)."""
    pts = np.asarray(points)
    theta = np.arccos(np.clip(pts[..., 2], -1.0, 1.0))
    phi = np.arctan2(pts[..., 1], pts[..., 0]) % (2.0 * np.pi)
    return theta, phi


def angles_to_xyz(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)
