"""Fourier plane-wave (wavenumber-domain) representation of array channels."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, Layout


@dataclass(frozen=True)
class WavenumberSupport:
    "Integer lattice points (l_x, l_z) inside the propagating ellipse."

    indices: np.ndarray
    L_x: float
    L_z: float
    lam: float

    @property
    def n(self) -> int:
        return len(self.indices)


@dataclass
class WavenumberBasis:
    matrix: np.ndarray
    geometry: ArrayGeometry
    support: WavenumberSupport
    indices: np.ndarray
    dropped: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def M(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class WavenumberChannel:
    coeffs: np.ndarray
    variance_map: np.ndarray
    r: float


def _span(L, lam):
    return int(np.floor(L / lam + 1e-9)) if L > 0 else 0


def wavenumber_support(L_x: float, L_z: float, lam: float) -> WavenumberSupport:
    """Enumerate (l_x, l_z) with (l_x lam/L_x)^2 + (l_z lam/L_z)^2 <= 1.

    A zero length collapses that axis to l = 0, giving the linear-array rule
    |l lam / L| <= 1.
    """
    if lam <= 0 or L_x < 0 or L_z < 0 or (L_x == 0 and L_z == 0):
        raise ValueError("need lam > 0 and at least one positive length")
    nx, nz = _span(L_x, lam), _span(L_z, lam)
    pts = []
    for lx in range(-nx, nx + 1):
        for lz in range(-nz, nz + 1):
            ex = (lx * lam / L_x) ** 2 if L_x > 0 else 0.0
            ez = (lz * lam / L_z) ** 2 if L_z > 0 else 0.0
            if ex + ez <= 1 + 1e-12:
                pts.append((lx, lz))
    return WavenumberSupport(np.array(pts, dtype=int).reshape(-1, 2), L_x, L_z, lam)


def dictionary(geom: ArrayGeometry, support: WavenumberSupport) -> WavenumberBasis:
    """Plane-wave dictionary with columns exp(j 2 pi (l_x s_x/L_x + l_z s_z/L_z)) / sqrt(M).

    On a grid with L = M d, indices that differ by a multiple of the element
    count sample to the same column; only the first of each such group is kept
    (recorded in `dropped`), so the columns stay orthonormal.
    """
    if geom.layout not in (Layout.UPA, Layout.ULA):
        raise ValueError("dictionary needs a uniform planar or linear grid")
    pos = geom.positions
    M = len(pos)
    warnings = []
    if geom.d > support.lam / 2 * (1 + 1e-12) and M > 1:
        warnings.append("element spacing exceeds half a wavelength; columns may not be orthonormal")

    on_grid = all(
        L == 0 or np.isclose(L, n * geom.d) for L, n in ((support.L_x, geom.M_x), (support.L_z, geom.M_z))
    )
    seen = set()
    keep, dropped = [], []
    for lx, lz in support.indices:
        key = (lx % geom.M_x, lz % geom.M_z) if on_grid else (lx, lz)
        if key in seen:
            dropped.append((int(lx), int(lz)))
            continue
        seen.add(key)
        keep.append((lx, lz))
    idx = np.array(keep, dtype=int).reshape(-1, 2)

    phase = np.zeros((M, len(idx)))
    if support.L_x > 0:
        phase += np.outer(pos[:, 0], idx[:, 0]) / support.L_x
    if support.L_z > 0:
        phase += np.outer(pos[:, 2], idx[:, 1]) / support.L_z
    matrix = np.exp(2j * np.pi * phase) / np.sqrt(M)
    return WavenumberBasis(matrix, geom, support, idx, dropped, warnings)


def _check_dim(vec, axis_len):
    if vec.shape[0] != axis_len:
        raise ValueError(f"dimension mismatch: got {vec.shape[0]}, expected {axis_len}")


def to_wavenumber(h, basis: WavenumberBasis) -> np.ndarray:
    "Wavenumber coefficients Phi^T h."
    h = np.asarray(h)
    _check_dim(h, basis.M)
    return basis.matrix.T @ h


def from_wavenumber(coeffs, basis: WavenumberBasis) -> np.ndarray:
    "Spatial channel conj(Phi) c, the inverse of `to_wavenumber` on its range."
    c = np.asarray(coeffs)
    _check_dim(c, basis.n)
    return basis.matrix.conj() @ c


def _axial_wavenumbers(indices, L_x, L_z):
    zero = np.zeros(len(indices))
    kx = 2 * np.pi * (indices[:, 0] + 0.5) / L_x if L_x > 0 else zero
    kz = 2 * np.pi * (indices[:, 1] + 0.5) / L_z if L_z > 0 else zero
    return kx, kz


def propagation_phases(basis: WavenumberBasis, r: float, lam: float) -> np.ndarray:
    """Diagonal of exp(j gamma(k_x, k_z) r), gamma = sqrt(k^2 - k_x^2 - k_z^2).

    Indices whose half-shifted wavenumber leaves the propagating disc get an
    imaginary gamma and hence a decaying factor.
    """
    sup = basis.support
    kx, kz = _axial_wavenumbers(basis.indices, sup.L_x, sup.L_z)
    gamma = np.sqrt((2 * np.pi / lam) ** 2 - kx**2 - kz**2 + 0j)
    return np.exp(1j * gamma * r)


def load_variance_map(path) -> np.ndarray:
    "Read a nonnegative variance grid from CSV (rows: receive, columns: transmit)."
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    grid = np.array(rows, dtype=float)
    if grid.ndim != 2 or np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValueError("variance map must be a finite nonnegative 2D grid")
    return grid


def sample_fourier_channel(basis_s: WavenumberBasis, basis_r: WavenumberBasis | None,
                           variance_map, r: float, lam: float, rng_seed, los_mean=None):
    """Draw a correlated-Rayleigh channel from its wavenumber-domain description.

    Returns the spatial N x M matrix H and the wavenumber coefficients. With
    `basis_r` set to None the receiver is a single antenna and H has one row.
    E||H||_F^2 equals M N times the sum of the variance map.
    """
    var = np.asarray(variance_map, dtype=float)
    nR = 1 if basis_r is None else basis_r.n
    if var.shape != (nR, basis_s.n):
        raise ValueError(f"variance map shape {var.shape} != {(nR, basis_s.n)}")
    if np.any(var < 0):
        raise ValueError("variance map must be nonnegative")
    M = basis_s.M
    N = 1 if basis_r is None else basis_r.M

    rng = np.random.default_rng(rng_seed)
    Ht = (rng.standard_normal(var.shape) + 1j * rng.standard_normal(var.shape)) / np.sqrt(2)
    coeffs = Ht * np.sqrt(M * N * var)
    if los_mean is not None:
        coeffs = coeffs + np.asarray(los_mean)

    if basis_r is None:
        left = np.ones((1, 1), dtype=complex)
    else:
        left = basis_r.matrix * propagation_phases(basis_r, r, lam)[None, :]
    H = left @ coeffs @ basis_s.matrix.conj().T
    return H, WavenumberChannel(coeffs, var, r)
