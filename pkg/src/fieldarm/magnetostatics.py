"""Magnetic field models for the tool magnet.

Covers the closed-form field of an axially magnetised (hollow) cylinder,
the point-dipole approximation, and the inverse dipole problem (the dipole
moment that produces a requested field at a given displacement).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ObserverInsideMaterial, ZeroDistance
from .kinematics import Pose

MU0 = 4.0e-7 * math.pi  # vacuum permeability, T m / A

_BOUNDARY_TOL = 1e-9  # m, observer-inside-material detection


@dataclass(frozen=True)
class MagnetSpec:
    """Hollow cylindrical magnet, magnetised along its symmetry axis."""

    outer_radius: float       # m
    inner_radius: float       # m, 0 for a solid cylinder
    length: float             # m
    magnetisation: float      # A/m along the axis

    def __post_init__(self):
        if not (0 <= self.inner_radius < self.outer_radius):
            raise ValueError("require 0 <= inner_radius < outer_radius")
        if self.length <= 0:
            raise ValueError("length must be > 0")
        if self.magnetisation <= 0:
            raise ValueError("magnetisation must be > 0")

    @classmethod
    def from_remanence(cls, outer_radius, inner_radius, length, remanence_T):
        return cls(outer_radius, inner_radius, length, remanence_T / MU0)

    @property
    def remanence(self) -> float:
        return MU0 * self.magnetisation

    @property
    def volume(self) -> float:
        return math.pi * (self.outer_radius**2 - self.inner_radius**2) * self.length


def cel(kc, p, c, s, tol=1e-12):
    """Bulirsch generalised complete elliptic integral, vectorised.

    cel(kc, p, c, s) = int_0^{pi/2} (c cos^2 t + s sin^2 t) /
                       ((cos^2 t + p sin^2 t) sqrt(cos^2 t + kc^2 sin^2 t)) dt
    """
    kc = np.atleast_1d(np.abs(np.asarray(kc, dtype=float)))
    p = np.broadcast_to(np.asarray(p, dtype=float), kc.shape).copy()
    c = np.broadcast_to(np.asarray(c, dtype=float), kc.shape).copy()
    s = np.broadcast_to(np.asarray(s, dtype=float), kc.shape).copy()
    if np.any(kc == 0.0):
        raise ValueError("cel undefined for kc = 0")

    k = kc.copy()
    pp = p.copy()
    cc = c.copy()
    ss = s.copy()
    neg = p <= 0.0
    if np.any(neg):
        f = kc[neg] * kc[neg]
        q = 1.0 - f
        g = 1.0 - pp[neg]
        f = f - pp[neg]
        q = q * (ss[neg] - c[neg] * pp[neg])
        pp[neg] = np.sqrt(f / g)
        cc[neg] = (c[neg] - ss[neg]) / g
        ss[neg] = -q / (g * g * pp[neg]) + cc[neg] * pp[neg]
    pos = ~neg
    pp[pos] = np.sqrt(pp[pos])
    ss[pos] = ss[pos] / pp[pos]

    em = np.ones_like(k)
    f = cc.copy()
    cc = cc + ss / pp
    g = k / pp
    ss = 2.0 * (ss + f * g)
    pp = g + pp
    g = em.copy()
    em = k + em
    kk = k.copy()
    while np.any(np.abs(g - k) > g * tol):
        k = 2.0 * np.sqrt(kk)
        kk = k * em
        f = cc.copy()
        cc = cc + ss / pp
        g = kk / pp
        ss = 2.0 * (ss + f * g)
        pp = g + pp
        g = em.copy()
        em = k + em
    return (math.pi / 2.0) * (ss + cc * em) / (em * (em + pp))


def _solid_cylinder_field_axial_frame(radius, half_length, M, rho, z):
    """(B_rho, B_z) of a solid axially magnetised cylinder, axis along z.

    Closed-form solution in terms of generalised complete elliptic
    integrals; valid everywhere off the material surface.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), rho.shape)
    a = radius
    b = half_length
    B0 = MU0 * M / math.pi

    zp = z + b
    zm = z - b
    rp = np.sqrt(zp * zp + (rho + a) ** 2)
    rm = np.sqrt(zm * zm + (rho + a) ** 2)
    alpha_p = a / rp
    alpha_m = a / rm
    beta_p = zp / rp
    beta_m = zm / rm
    gamma = (a - rho) / (a + rho)
    kp = np.sqrt((zp * zp + (a - rho) ** 2) / (zp * zp + (a + rho) ** 2))
    km = np.sqrt((zm * zm + (a - rho) ** 2) / (zm * zm + (a + rho) ** 2))

    B_rho = B0 * (alpha_p * cel(kp, np.ones_like(kp), 1.0, -1.0)
                  - alpha_m * cel(km, np.ones_like(km), 1.0, -1.0))
    B_z = (B0 * a / (a + rho)) * (beta_p * cel(kp, gamma * gamma, 1.0, gamma)
                                  - beta_m * cel(km, gamma * gamma, 1.0, gamma))
    return B_rho, B_z


def _inside_material(spec: MagnetSpec, rho: float, z_ax: float) -> bool:
    return (
        abs(z_ax) <= spec.length / 2.0 + _BOUNDARY_TOL
        and spec.inner_radius - _BOUNDARY_TOL <= rho <= spec.outer_radius + _BOUNDARY_TOL
    )


def cylinder_field(spec: MagnetSpec, magnet_pose: Pose, observer) -> np.ndarray:
    """World-frame field of the (hollow) cylinder at the observer point.

    The magnetisation axis is the magnet pose's local x-axis. The hollow
    cylinder is the superposition of the outer solid cylinder and an inner
    solid cylinder of opposite magnetisation. Points in the bore are valid;
    points in the material raise ObserverInsideMaterial.
    """
    observer = np.asarray(observer, dtype=float)
    R = magnet_pose.rotation()
    r_local = R.T @ (observer - magnet_pose.position)
    z_ax = r_local[0]                      # axial coordinate, along local x
    trans = r_local[1:]                    # transverse components (local y, z)
    rho = float(np.hypot(trans[0], trans[1]))
    if _inside_material(spec, rho, z_ax):
        raise ObserverInsideMaterial(
            f"observer at rho={rho:.6g} m, z={z_ax:.6g} m lies in the magnet material"
        )
    b_rho, b_ax = _solid_cylinder_field_axial_frame(
        spec.outer_radius, spec.length / 2.0, spec.magnetisation, rho, z_ax
    )
    if spec.inner_radius > 0.0:
        br_i, bz_i = _solid_cylinder_field_axial_frame(
            spec.inner_radius, spec.length / 2.0, spec.magnetisation, rho, z_ax
        )
        b_rho = b_rho - br_i
        b_ax = b_ax - bz_i
    b_rho = float(b_rho[0])
    b_ax = float(b_ax[0])
    rho_hat = trans / rho if rho > 0.0 else np.zeros(2)
    B_local = np.array([b_ax, b_rho * rho_hat[0], b_rho * rho_hat[1]])
    return R @ B_local


def equivalent_dipole(spec: MagnetSpec) -> float:
    """Magnitude of the equivalent point dipole: magnetisation times volume."""
    return spec.magnetisation * spec.volume


def dipole_field(m, r) -> np.ndarray:
    """Point-dipole field B = (mu0/4pi) [3(m.r^)r^ - m] / |r|^3.

    `r` is the displacement from the dipole to the observer, metres.
    """
    m = np.asarray(m, dtype=float)
    r = np.asarray(r, dtype=float)
    d = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(d == 0.0):
        raise ZeroDistance("dipole field requested at zero displacement")
    rhat = r / d
    mdotr = np.sum(m * rhat, axis=-1, keepdims=True)
    return (MU0 / (4.0 * math.pi)) * (3.0 * mdotr * rhat - m) / d**3


def inverse_dipole(B_target, r) -> np.ndarray:
    """Dipole moment producing B_target at displacement r (dipole -> observer).

    m = (6 pi / mu0)(B . r)|r| r - (4 pi / mu0)|r|^3 B; exact inverse of
    dipole_field, linear in B.
    """
    B = np.asarray(B_target, dtype=float)
    r = np.asarray(r, dtype=float)
    d = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(d == 0.0):
        raise ZeroDistance("inverse dipole requested at zero displacement")
    bdotr = np.sum(B * r, axis=-1, keepdims=True)
    return (6.0 * math.pi / MU0) * bdotr * d * r - (4.0 * math.pi / MU0) * d**3 * B


def default_magnet_spec() -> MagnetSpec:
    """Nominal magnet: ~44 cm^3 NdFeB-class cylinder with a mounting bore.

    The aspect ratio is close to L = sqrt(3) R, where the leading correction
    to the point-dipole far field vanishes; not the dimensions of any
    specific hardware.
    """
    return MagnetSpec.from_remanence(
        outer_radius=0.02, inner_radius=0.002, length=0.035, remanence_T=1.4
    )
