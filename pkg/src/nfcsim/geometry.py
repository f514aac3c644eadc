"""Array layouts, user positions and field-region distances."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 299792458.0


class Layout(str, Enum):
    UPA = "UPA"
    ULA = "ULA"
    UCA = "UCA"
    CAP_LINEAR = "CAP_LINEAR"
    CAP_PLANAR = "CAP_PLANAR"

    @property
    def is_continuous(self) -> bool:
        return self in (Layout.CAP_LINEAR, Layout.CAP_PLANAR)


def wavelength(frequency_hz: float) -> float:
    "Free-space wavelength in meters."
    return SPEED_OF_LIGHT / frequency_hz


def centered_offsets(count: int) -> np.ndarray:
    "Element indices centred on zero: {-(n-1)/2, ..., (n-1)/2}."
    return np.arange(count) - (count - 1) / 2.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Element layout of a discrete array or the outline of a continuous aperture.

    Discrete arrays expose `positions` (M x 3, meters). Planar layouts live in
    the x-z plane with broadside along +y; the circular array lies in the x-y
    plane. Continuous apertures carry only their side lengths.
    """

    layout: Layout
    M_x: int = 1
    M_z: int = 1
    d: float = 0.0
    A: float = 0.0
    L_x: float = 0.0
    L_z: float = 0.0
    radius: float = 0.0
    normal: tuple = (0.0, 1.0, 0.0)

    @property
    def M(self) -> int:
        return self.M_x * self.M_z

    @property
    def xi(self) -> float:
        "Occupation ratio A/d^2."
        return self.A / self.d**2

    @property
    def aperture(self) -> float:
        "Largest physical dimension D_a of the array."
        if self.layout is Layout.UCA:
            return 2.0 * self.radius
        return float(np.hypot(self.L_x, self.L_z))

    @property
    def area(self) -> float:
        if self.layout is Layout.CAP_LINEAR:
            return self.L_x
        return self.L_x * self.L_z

    @cached_property
    def positions(self) -> np.ndarray:
        if self.layout.is_continuous:
            raise ValueError("continuous apertures have no element positions")
        if self.layout is Layout.UCA:
            angles = 2.0 * np.pi * np.arange(self.M_x) / self.M_x
            return np.column_stack(
                [self.radius * np.cos(angles), self.radius * np.sin(angles), np.zeros(self.M_x)]
            )
        x = centered_offsets(self.M_x) * self.d
        z = centered_offsets(self.M_z) * self.d
        xx, zz = np.meshgrid(x, z, indexing="ij")
        pos = np.zeros((self.M, 3))
        pos[:, 0] = xx.ravel()
        pos[:, 2] = zz.ravel()
        return pos


def build_geometry(
    layout: Layout | str,
    M_x: int = 1,
    M_z: int = 1,
    d: float | None = None,
    A: float | None = None,
    D_a: float | None = None,
    L_x: float | None = None,
    L_z: float | None = None,
    allow_even: bool = False,
) -> ArrayGeometry:
    """Construct an array geometry.

    UPA: M_x by M_z grid in the x-z plane, odd counts unless `allow_even`
    (even counts are centred on half-integer offsets).
    ULA: set one of M_x, M_z to 1; the array runs along the other axis.
    UCA: M_x elements on a circle of diameter D_a in the x-y plane.
    CAP_LINEAR / CAP_PLANAR: continuous apertures of side L_x (and L_z),
    defaulting to M_x d and M_z d when lengths are not given.
    """
    layout = Layout(layout)
    if M_x < 1 or M_z < 1:
        raise ValueError("element counts must be >= 1")

    if layout is Layout.UCA:
        if D_a is None or D_a <= 0:
            raise ValueError("UCA needs a positive diameter D_a")
        M = M_x * M_z
        spacing = D_a * np.sin(np.pi / M) if M > 1 else D_a
        area = A if A is not None else 0.0
        return ArrayGeometry(
            layout, M_x=M, M_z=1, d=float(spacing), A=float(area), L_x=D_a, L_z=D_a,
            radius=D_a / 2.0, normal=(0.0, 0.0, 1.0),
        )

    if layout.is_continuous:
        if L_x is None:
            if d is None:
                raise ValueError("continuous aperture needs L_x or (M_x, d)")
            L_x = M_x * d
        if layout is Layout.CAP_PLANAR and L_z is None:
            if d is None:
                raise ValueError("planar aperture needs L_z or (M_z, d)")
            L_z = M_z * d
        if L_x <= 0 or (layout is Layout.CAP_PLANAR and L_z <= 0):
            raise ValueError("aperture lengths must be positive")
        return ArrayGeometry(
            layout, M_x=M_x, M_z=M_z, d=float(d or 0.0), A=float(A or 0.0),
            L_x=float(L_x), L_z=float(L_z or 0.0),
        )

    if d is None or d <= 0:
        raise ValueError("element spacing d must be positive")
    if A is None:
        A = d * d
    if A < 0 or A > d * d * (1 + 1e-12):
        raise ValueError("element area must satisfy 0 <= A <= d^2")
    if layout is Layout.ULA and min(M_x, M_z) != 1:
        raise ValueError("ULA needs M_x == 1 or M_z == 1")
    if layout is Layout.UPA and not allow_even and (M_x % 2 == 0 or M_z % 2 == 0):
        raise ValueError("UPA counts must be odd (pass allow_even=True to centre even grids)")
    return ArrayGeometry(
        layout, M_x=M_x, M_z=M_z, d=float(d), A=float(A), L_x=M_x * d, L_z=M_z * d,
    )


@dataclass(frozen=True)
class UserPose:
    "User at range r, azimuth theta and elevation phi (radians)."

    r: float
    theta: float
    phi: float = np.pi / 2

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("range must be positive")

    @property
    def Phi(self) -> float:
        return float(np.sin(self.phi) * np.cos(self.theta))

    @property
    def Psi(self) -> float:
        return float(np.sin(self.phi) * np.sin(self.theta))

    @property
    def Omega(self) -> float:
        return float(np.cos(self.phi))

    @property
    def direction(self) -> np.ndarray:
        return np.array([self.Phi, self.Psi, self.Omega])

    @property
    def cartesian(self) -> np.ndarray:
        return self.r * self.direction


def field_boundaries(D_a: float, D_element: float, lam: float) -> dict:
    "Rayleigh distance and Fresnel (uniform-phase) distances in meters."
    if min(D_a, D_element, lam) <= 0:
        raise ValueError("all inputs must be positive")
    return {
        "rayleigh": 2.0 * D_a**2 / lam,
        "fresnel_array": 0.5 * np.sqrt(D_a**3 / lam),
        "fresnel_element": 0.5 * np.sqrt(D_element**3 / lam),
    }
