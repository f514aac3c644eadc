"""Line-of-sight channels for discrete and continuous apertures.

Discrete arrays follow a ladder of models from the exact spherical-wave
response down to the planar-wave one. Continuous apertures use the scalar
Green's function and its projected-aperture variant.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erfc

from .geometry import ArrayGeometry, Layout, UserPose
from .quadrature import integrate_1d, integrate_2d

MIN_DISTANCE = 1e-6


class Model(str, Enum):
    EXACT = "EXACT"
    UPD = "UPD"
    FRESNEL = "FRESNEL"
    FAR = "FAR"
    NOPROJ = "NOPROJ"
    EVANESCENT = "EVANESCENT"


class Green(str, Enum):
    SCALAR = "SCALAR"
    PROJ = "PROJ"
    EVANESCENT = "EVANESCENT"
    FRESNEL = "FRESNEL"


class SingularGeometryError(ValueError):
    "Observation point coincides with a source point."


@dataclass(frozen=True)
class ChannelVector:
    entries: np.ndarray
    model: Model
    wavelength: float
    geometry: ArrayGeometry | None = None

    def __len__(self):
        return len(self.entries)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class Scatterer:
    pose: UserPose
    rcs_variance: float = 1.0

    def __post_init__(self):
        if self.rcs_variance < 0:
            raise ValueError("rcs_variance must be nonnegative")


def _entries(h) -> np.ndarray:
    return np.asarray(h.entries if isinstance(h, ChannelVector) else h)


def _check_distance(dist):
    if np.min(dist) < MIN_DISTANCE:
        raise SingularGeometryError("observation point coincides with an array element")


def spd_channel(geom: ArrayGeometry, user: UserPose, lam: float, model: Model | str = Model.EXACT):
    """Channel vector between the array elements and a user.

    Every model keeps the phase convention exp(-j 2 pi distance / lambda). The
    magnitude carries the element area A and, for EXACT and EVANESCENT, the
    per-element projection onto the array normal.
    """
    model = Model(model)
    pos = geom.positions
    rvec = user.cartesian
    normal = np.asarray(geom.normal)
    k = 2.0 * np.pi / lam
    diff = rvec[None, :] - pos
    dist = np.linalg.norm(diff, axis=1)
    psi = abs(float(user.direction @ normal))

    if model in (Model.FRESNEL, Model.FAR):
        if geom.layout not in (Layout.UPA, Layout.ULA):
            raise ValueError(f"{model.value} needs a planar x-z layout")
        sx, sz = pos[:, 0], pos[:, 2]
        path = user.r - sx * user.Phi - sz * user.Omega
        if model is Model.FRESNEL:
            path = path + (sx**2 * (1 - user.Phi**2) + sz**2 * (1 - user.Omega**2)) / (2 * user.r)
        mag = np.full(len(pos), np.sqrt(psi * geom.A / (4 * np.pi)) / user.r)
        return ChannelVector(mag * np.exp(-1j * k * path), model, lam, geom)

    if model is Model.UPD:
        mag = np.full(len(pos), np.sqrt(psi * geom.A / (4 * np.pi)) / user.r)
        return ChannelVector(mag * np.exp(-1j * k * dist), model, lam, geom)

    _check_distance(dist)
    if model is Model.NOPROJ:
        mag = np.sqrt(geom.A / (4 * np.pi)) / dist
    else:
        proj = np.abs(diff @ normal) / dist
        mag = np.sqrt(geom.A * proj / (4 * np.pi)) / dist
        if model is Model.EVANESCENT:
            x2 = (lam / (2 * np.pi * dist)) ** 2
            mag = mag * np.sqrt(1 - x2 + x2**2)
    return ChannelVector(mag * np.exp(-1j * k * dist), model, lam, geom)


def channel_gain(h) -> float:
    e = _entries(h)
    return float(np.sum(np.abs(e) ** 2))


def _arctan_sum(X, Z, psi):
    total = 0.0
    for x in X:
        for z in Z:
            total += np.arctan(x * z / (psi * np.sqrt(psi**2 + x**2 + z**2)))
    return total


def gain_closed_form(geom: ArrayGeometry, user: UserPose, lam: float | None = None) -> float:
    """Channel gain of a planar array from the continuous-integral closed form.

    The wavelength does not enter; it is accepted for call symmetry.
    """
    if geom.layout not in (Layout.UPA, Layout.ULA):
        raise ValueError("closed-form gain needs a UPA or ULA")
    psi = user.Psi
    if psi <= 0:
        raise ValueError("user must be in front of the array (Psi > 0)")
    eps = geom.d / user.r
    X = (geom.M_x * eps / 2 + user.Phi, geom.M_x * eps / 2 - user.Phi)
    Z = (geom.M_z * eps / 2 + user.Omega, geom.M_z * eps / 2 - user.Omega)
    return float(geom.A / (4 * np.pi * geom.d**2) * _arctan_sum(X, Z, psi))


def gain_evanescent_asymptotic(xi_r: float, r: float, Psi: float, lam: float) -> float:
    "Large-array gain including the reactive correction terms."
    if r * Psi <= 0:
        raise ValueError("r * Psi must be positive")
    x2 = (lam / (2 * np.pi * r * Psi)) ** 2
    return xi_r / 2 * (1 - x2 / 3 + x2**2 / 5)


def correlation(h1, h2) -> float:
    a, b = _entries(h1), _entries(h2)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("correlation of a zero vector is undefined")
    return float(min(abs(np.vdot(a, b)) / (na * nb), 1.0))


def cap_green(r_point, s_points, lam, variant: Green | str = Green.SCALAR, normal=(0.0, 1.0, 0.0)):
    """Green's-function response from aperture points to an observation point.

    `s_points` is (3,) or (N, 3). The FRESNEL variant expands around the
    aperture centre and assumes an x-z aperture.
    """
    variant = Green(variant)
    r_point = np.asarray(r_point, dtype=float)
    s = np.atleast_2d(np.asarray(s_points, dtype=float))
    k = 2 * np.pi / lam
    diff = r_point[None, :] - s
    dist = np.linalg.norm(diff, axis=1)
    _check_distance(dist)

    if variant is Green.FRESNEL:
        r = np.linalg.norm(r_point)
        Phi, Omega = r_point[0] / r, r_point[2] / r
        sx, sz = s[:, 0], s[:, 2]
        path = r - sx * Phi - sz * Omega + (sx**2 * (1 - Phi**2) + sz**2 * (1 - Omega**2)) / (2 * r)
        out = np.exp(-1j * k * path) / (4 * np.pi * r)
    else:
        out = np.exp(-1j * k * dist) / (4 * np.pi * dist)
        if variant is Green.PROJ:
            out = out * np.sqrt(np.abs(diff @ np.asarray(normal)) / dist)
        elif variant is Green.EVANESCENT:
            x2 = (lam / (2 * np.pi * dist)) ** 2
            out = out * np.sqrt(1 - x2 + x2**2)
    return out if np.ndim(s_points) > 1 else out[0]


def _aperture_integral(aperture: ArrayGeometry, f, rtol=1e-8):
    "Integrate f(points) over a CAP aperture; f returns (..., N)."
    if aperture.layout is Layout.CAP_LINEAR:
        half = aperture.L_x / 2

        def fx(x):
            pts = np.zeros((len(x), 3))
            pts[:, 0] = x
            return f(pts)

        return integrate_1d(fx, -half, half, rtol=rtol)
    if aperture.layout is Layout.CAP_PLANAR:
        hx, hz = aperture.L_x / 2, aperture.L_z / 2

        def fxz(x, z):
            pts = np.zeros((len(x), 3))
            pts[:, 0] = x
            pts[:, 2] = z
            return f(pts)

        return integrate_2d(fxz, -hx, hx, -hz, hz, rtol=rtol)
    raise ValueError("expected a continuous aperture")


def cap_gain(aperture: ArrayGeometry, user: UserPose, lam: float, method: str = "CLOSED", rtol=1e-8):
    """Normalised captured power 4 pi * integral of |projected Green|^2.

    For a planar aperture this is dimensionless and tends to 1/2 for an
    unbounded aperture. For a linear aperture it is per metre of receive height.
    """
    psi = user.Psi
    if psi <= 0:
        raise ValueError("user must be in front of the aperture (Psi > 0)")
    method = method.upper()
    if method == "CLOSED":
        r = user.r
        if aperture.layout is Layout.CAP_PLANAR:
            X = (aperture.L_x / (2 * r) + user.Phi, aperture.L_x / (2 * r) - user.Phi)
            Z = (aperture.L_z / (2 * r) + user.Omega, aperture.L_z / (2 * r) - user.Omega)
            return float(_arctan_sum(X, Z, psi) / (4 * np.pi))
        if aperture.layout is Layout.CAP_LINEAR:
            rho2 = r**2 * (psi**2 + user.Omega**2)
            t = np.array([aperture.L_x / 2 - r * user.Phi, -aperture.L_x / 2 - r * user.Phi])
            prim = t / (rho2 * np.sqrt(t**2 + rho2))
            return float(r * psi / (4 * np.pi) * (prim[0] - prim[1]))
        raise ValueError("expected a continuous aperture")
    if method == "QUADRATURE":
        rp = user.cartesian

        def f(pts):
            return 4 * np.pi * np.abs(cap_green(rp, pts, lam, Green.PROJ)) ** 2

        return float(np.real(_aperture_integral(aperture, f, rtol)))
    raise ValueError(f"unknown method {method}")


def quadratic_phase_integral(alpha, beta, small=1e-6):
    """Magnitude of the integral of exp(j(alpha x + beta x^2)) over [-1/2, 1/2].

    Uses complementary error functions on the branch that avoids cancellation.
    For |beta| < `small` the chirp is dropped and the sinc form is returned.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    alpha, beta = np.broadcast_arrays(alpha, beta)
    out = np.empty(alpha.shape)
    flat = np.abs(beta) < small
    out[flat] = np.abs(np.sinc(alpha[flat] / (2 * np.pi)))

    a, b = alpha[~flat], beta[~flat]
    c = np.sqrt(-1j * b)
    t1 = 0.5 + a / (2 * b)
    t0 = -0.5 + a / (2 * b)
    z1, z0 = c * t1, c * t0
    diff = np.where(
        t0 >= 0,
        erfc(z0) - erfc(z1),
        np.where(t1 <= 0, erfc(-z1) - erfc(-z0), 2 - erfc(z1) - erfc(-z0)),
    )
    out[~flat] = np.abs(np.sqrt(np.pi) / (2 * c) * diff)
    return out if out.ndim else float(out)


def cap_correlation(aperture, u1: UserPose, u2: UserPose, lam, method="QUADRATURE",
                    variant: Green | str = Green.PROJ, rtol=1e-8):
    """Normalised inner product of two users' Green's functions over the aperture.

    ERF_APPROX applies the Fresnel expansion for a linear aperture on the x
    axis with users in the x-y plane.
    """
    if aperture.L_x <= 0 or (aperture.layout is Layout.CAP_PLANAR and aperture.L_z <= 0):
        raise ValueError("degenerate aperture")
    method = method.upper()
    if method == "QUADRATURE":
        r1, r2 = u1.cartesian, u2.cartesian

        def f(pts):
            g1 = cap_green(r1, pts, lam, variant)
            g2 = cap_green(r2, pts, lam, variant)
            return np.stack([g1 * np.conj(g2), np.abs(g1) ** 2, np.abs(g2) ** 2])

        cross, n1, n2 = _aperture_integral(aperture, f, rtol)
        return float(min(abs(cross) / np.sqrt(n1.real * n2.real), 1.0))
    if method == "ERF_APPROX":
        k = 2 * np.pi / lam
        D = aperture.L_x
        a1 = k * (np.cos(u2.theta) - np.cos(u1.theta))
        b1 = k * (np.sin(u1.theta) ** 2 / (2 * u1.r) - np.sin(u2.theta) ** 2 / (2 * u2.r))
        return float(quadratic_phase_integral(D * a1, D**2 * b1))
    raise ValueError(f"unknown method {method}")


def point_response(src, dst, lam):
    "Isotropic point-to-point response lambda/(4 pi D) exp(-j 2 pi D / lambda)."
    D = float(np.linalg.norm(np.asarray(dst) - np.asarray(src)))
    if D < MIN_DISTANCE:
        raise SingularGeometryError("scatterer coincides with the user")
    return lam / (4 * np.pi * D) * np.exp(-2j * np.pi * D / lam)


def multipath_channel(geom, user, scatterers, lam, rng_seed):
    """LoS channel plus single-bounce paths via point scatterers.

    Each bounce is weighted by a Swerling-I coefficient drawn from
    CN(0, rcs_variance) with a generator seeded by `rng_seed`.
    """
    h = spd_channel(geom, user, lam, Model.EXACT).entries.copy()
    rng = np.random.default_rng(rng_seed)
    n = len(scatterers)
    draws = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    for sc, z in zip(scatterers, draws):
        beta = z * np.sqrt(sc.rcs_variance)
        if beta == 0:
            continue
        h_bs = spd_channel(geom, sc.pose, lam, Model.EXACT).entries
        h += beta * h_bs * point_response(sc.pose.cartesian, user.cartesian, lam)
    return ChannelVector(h, Model.EXACT, lam, geom)
