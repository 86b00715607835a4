"""NV-centre spin physics: spin-1 Hamiltonian, resonances, the characteristic
cubic for the spin energies, ODMR spectrum synthesis/fitting, and inference of
field polar angle and NV-axis orientation from splitting data.

All frequencies are in Hz internally; the NV frame has its z-axis along the
defect's symmetry axis.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit, least_squares

from .errors import (
    ComplexRoots,
    DegenerateFit,
    FitDiverged,
    InsufficientData,
    NoConsistentField,
    StateMixingTooStrong,
    ZeroMagnitude,
)
from .kinematics import unit_normal

GAMMA_E_DEFAULT = 28.02495e9  # Hz/T, electron gyromagnetic ratio / 2pi

# spin-1 operators in the {|+1>, |0>, |-1>} basis
_SQ2 = 1.0 / math.sqrt(2.0)
SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) * _SQ2
SY = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) * _SQ2
SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
_MS0_INDEX = 1


@dataclass(frozen=True)
class NVParams:
    D: float                   # zero-field splitting, Hz
    Pi: float                  # strain/charge splitting term, Hz
    gamma_e: float = GAMMA_E_DEFAULT  # Hz/T
    axis_alpha_y: float = 0.0  # NV axis orientation, rad
    axis_alpha_z: float = 0.0

    def __post_init__(self):
        if self.D <= 0:
            raise ValueError("D must be > 0")
        if self.Pi < 0:
            raise ValueError("Pi must be >= 0")
        if self.gamma_e <= 0:
            raise ValueError("gamma_e must be > 0")


@dataclass(frozen=True)
class ResonancePair:
    f_minus: float  # Hz
    f_plus: float   # Hz
    f_minus_err: float = 0.0
    f_plus_err: float = 0.0
    merged: bool = False

    def __post_init__(self):
        if self.f_plus < self.f_minus:
            raise ValueError("f_plus must be >= f_minus")

    @property
    def splitting(self) -> float:
        return self.f_plus - self.f_minus


@dataclass(frozen=True)
class OdmrSpectrum:
    frequencies: np.ndarray  # Hz
    contrast: np.ndarray     # dimensionless, ~1 off resonance
    noise_sigma: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        c = np.asarray(self.contrast, dtype=float)
        if f.shape != c.shape:
            raise ValueError("frequencies and contrast must have equal length")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "contrast", c)


@dataclass(frozen=True)
class OrientationFit:
    alpha_y_nv: float        # rad, reported in [0, pi)
    alpha_z_nv: float        # rad, reported in [0, pi)
    B_fit: float             # T (effective, "non-physical" free parameter)
    alpha_y_err: float
    alpha_z_err: float
    B_err: float
    residual_rms: float      # Hz


def hamiltonian(p: NVParams, B_nv) -> np.ndarray:
    """H = D Sz^2 + Pi (Sx^2 - Sy^2) + gamma (B_perp . S_perp) + gamma Bz Sz."""
    Bx, By, Bz = np.asarray(B_nv, dtype=float)
    H = (
        p.D * (SZ @ SZ)
        + p.Pi * (SX @ SX - SY @ SY)
        + p.gamma_e * (Bx * SX + By * SY + Bz * SZ)
    )
    return H


def resonances(p: NVParams, B_nv) -> ResonancePair:
    """Transition frequencies from the ms=0-like state to the two others.

    The ms=0-like state is identified by maximal overlap with |0>; raises
    StateMixingTooStrong when no eigenvector keeps >= 0.5 overlap.
    """
    H = hamiltonian(p, B_nv)
    evals, evecs = np.linalg.eigh(H)
    overlaps = np.abs(evecs[_MS0_INDEX, :]) ** 2
    k = int(np.argmax(overlaps))
    if overlaps[k] < 0.5:
        raise StateMixingTooStrong(
            f"largest ms=0 overlap is {overlaps[k]:.3f}; field too strong or transverse"
        )
    others = np.sort(np.delete(evals, k) - evals[k])
    return ResonancePair(float(others[0]), float(others[1]))


def characteristic_roots(D, Pi, beta, gamma_angle):
    """Real roots of the depressed cubic for the spin energies.

    x^3 - (D^2/3 + Pi^2 + beta^2) x - (beta^2/2) D cos(2 gamma)
        - (D/6)(4 Pi^2 + beta^2) + 2 D^3/27 = 0

    with beta = gamma_e |B| and gamma_angle the polar angle between the field
    and the NV axis. Roots + 2D/3 are the Hamiltonian eigenvalues. The cubic
    carries no transverse azimuth, so it matches the full Hamiltonian exactly
    when the transverse field bisects the strain axes (azimuth pi/4, where
    the Pi-B_perp cross term vanishes); at other azimuths the roots differ by
    a term of order Pi * (gamma_e B_perp)^2 / D^2. Solved by the
    trigonometric (Viete) method; raises ComplexRoots if the discriminant
    indicates a non-physical parameter set. Broadcasts over array inputs.
    """
    D, Pi, beta, gamma_angle = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (D, Pi, beta, gamma_angle))
    )
    p = -(D * D / 3.0 + Pi * Pi + beta * beta)
    q = (
        -(beta * beta / 2.0) * D * np.cos(2.0 * gamma_angle)
        - (D / 6.0) * (4.0 * Pi * Pi + beta * beta)
        + 2.0 * D**3 / 27.0
    )
    # three real roots require 4p^3 + 27q^2 <= 0
    disc = 4.0 * p**3 + 27.0 * q * q
    scale = np.maximum(np.abs(p) ** 3, 1e-300)
    if np.any(disc > 1e-9 * scale):
        raise ComplexRoots("characteristic cubic has complex roots")
    m = 2.0 * np.sqrt(-p / 3.0)
    arg = np.clip(3.0 * q / (p * m), -1.0, 1.0)
    phi = np.arccos(arg) / 3.0
    k = np.arange(3.0).reshape((3,) + (1,) * p.ndim)
    roots = m * np.cos(phi - 2.0 * np.pi * k / 3.0)
    return np.sort(np.moveaxis(roots, 0, -1), axis=-1)


def splitting_from_cubic(D, Pi, beta, gamma_angle):
    """Resonance splitting f_plus - f_minus from the characteristic cubic."""
    r = characteristic_roots(D, Pi, beta, gamma_angle)
    return r[..., 2] - r[..., 1]


def resonances_from_cubic(D, Pi, beta, gamma_angle):
    """(f_minus, f_plus) relative to the lowest-energy (ms=0-like) root."""
    r = characteristic_roots(D, Pi, beta, gamma_angle)
    return r[..., 1] - r[..., 0], r[..., 2] - r[..., 0]


def polar_angle_from_resonances(f_minus, f_plus, D, Pi, gamma_e=GAMMA_E_DEFAULT,
                                B_max=0.05, tol=1e3):
    """Invert the resonance model for (|B|, theta); round-trip within `tol` Hz."""
    if f_plus < f_minus:
        raise ValueError("f_plus must be >= f_minus")

    def residual(x):
        B, theta = x
        fm, fp = resonances_from_cubic(D, Pi, gamma_e * B, theta)
        return [fm - f_minus, fp - f_plus]

    best = None
    for B0 in np.linspace(1e-5, B_max * 0.9, 6):
        for th0 in np.linspace(0.05, np.pi / 2 - 0.05, 6):
            sol = least_squares(
                residual, [B0, th0], bounds=([0.0, 0.0], [B_max, np.pi / 2]),
                xtol=1e-14, ftol=1e-14, gtol=1e-14,
            )
            if best is None or sol.cost < best.cost:
                best = sol
            if sol.cost < (tol / 10.0) ** 2:
                best = sol
                break
        else:
            continue
        break
    fm, fp = resonances_from_cubic(D, Pi, gamma_e * best.x[0], best.x[1])
    if abs(fm - f_minus) > tol or abs(fp - f_plus) > tol:
        raise NoConsistentField(
            f"no (|B|, theta) reproduces the resonances within {tol:.0f} Hz"
        )
    return {"B_magnitude": float(best.x[0]), "theta": float(best.x[1])}


def normalize_splittings(splittings, B_magnitudes):
    """nu_n(i) = nu(i) / |B(i)| * max|B|."""
    nu = np.asarray(splittings, dtype=float)
    B = np.asarray(B_magnitudes, dtype=float)
    if nu.shape != B.shape:
        raise ValueError("splittings and magnitudes must have equal length")
    if np.any(B <= 0):
        raise ZeroMagnitude("all field magnitudes must be > 0")
    return nu / B * B.max()


def field_polar_angle(alpha_y_B, alpha_z_B, alpha_y_nv, alpha_z_nv):
    """gamma = arccos(|cos(az_B - az_NV) cos(ay_B - ay_NV)|)."""
    c = np.abs(
        np.cos(np.asarray(alpha_z_B) - alpha_z_nv)
        * np.cos(np.asarray(alpha_y_B) - alpha_y_nv)
    )
    return np.arccos(np.clip(c, 0.0, 1.0))


def fit_orientation(trajectory, D, Pi, gamma_e=GAMMA_E_DEFAULT,
                    grid_size=12, refine_starts=5) -> OrientationFit:
    """Fit NV-axis angles and an effective |B| to normalised splittings.

    `trajectory` rows are (alpha_y_B, alpha_z_B, nu_n) with angles in rad and
    nu_n in Hz. Multi-start over an angle grid guards against local minima.
    The +-axis degeneracy is resolved by reporting angles in [0, pi).
    """
    traj = np.asarray(trajectory, dtype=float).reshape(-1, 3)
    if len(traj) < 4:
        raise InsufficientData(f"need >= 4 trajectory points, got {len(traj)}")
    ay_B, az_B, nu = traj[:, 0], traj[:, 1], traj[:, 2]
    if np.std(nu) < 1e-9 * max(1.0, np.mean(np.abs(nu))):
        raise DegenerateFit("normalised splittings carry no angular information")

    def model(params):
        ay, az, B = params
        gam = field_polar_angle(ay_B, az_B, ay, az)
        return splitting_from_cubic(D, Pi, gamma_e * abs(B), gam)

    def residual(params):
        return model(params) - nu

    def match_B(ay, az, B_hi=0.05):
        # mean splitting is monotone in |B| at fixed angles: bisect
        gam = field_polar_angle(ay_B, az_B, ay, az)
        target = np.mean(nu)
        lo, hi = 0.0, B_hi
        for _ in range(50):
            mid = (lo + hi) / 2.0
            if np.mean(splitting_from_cubic(D, Pi, gamma_e * mid, gam)) < target:
                lo = mid
            else:
                hi = mid
        return (lo + hi) / 2.0

    angles = np.linspace(0.0, np.pi, grid_size, endpoint=False)
    costs = []
    for ay in angles:
        for az in angles:
            B_start = match_B(ay, az)
            r = residual([ay, az, B_start])
            costs.append((float(r @ r), ay, az, B_start))
    costs.sort(key=lambda t: t[0])

    best = None
    for _, ay, az, B_start in costs[:refine_starts]:
        try:
            sol = least_squares(residual, [ay, az, B_start],
                                xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except Exception:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not np.all(np.isfinite(best.x)):
        raise FitDiverged("orientation fit failed to converge")

    ay, az, B = best.x
    ay = ay % np.pi
    az = az % np.pi
    B = abs(B)
    gam = field_polar_angle(ay_B, az_B, ay, az)
    if gam.max() - gam.min() < np.deg2rad(0.5):
        raise DegenerateFit("trajectory spans < 0.5 degrees in polar angle")

    res = best.fun
    dof = max(len(nu) - 3, 1)
    sigma2 = float(res @ res) / dof
    JTJ = best.jac.T @ best.jac
    try:
        cov = sigma2 * np.linalg.inv(JTJ)
        errs = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        raise DegenerateFit("singular covariance: flat residual landscape") from None
    return OrientationFit(
        alpha_y_nv=float(ay), alpha_z_nv=float(az), B_fit=float(B),
        alpha_y_err=float(errs[0]), alpha_z_err=float(errs[1]), B_err=float(errs[2]),
        residual_rms=math.sqrt(float(res @ res) / len(nu)),
    )


def _lorentzian_dip(f, f0, width):
    hw = width / 2.0
    return hw * hw / ((f - f0) ** 2 + hw * hw)


def odmr_spectrum(p: NVParams, B_nv, linewidth, contrast_depth, grid,
                  noise_sigma=0.0, rng=None) -> OdmrSpectrum:
    """Synthetic two-dip ODMR trace for the given field (NV frame)."""
    if linewidth <= 0:
        raise ValueError("linewidth must be > 0")
    if not (0 < contrast_depth < 1):
        raise ValueError("contrast_depth must be in (0, 1)")
    grid = np.asarray(grid, dtype=float)
    pair = resonances(p, B_nv)
    c = 1.0 - contrast_depth * (
        _lorentzian_dip(grid, pair.f_minus, linewidth)
        + _lorentzian_dip(grid, pair.f_plus, linewidth)
    )
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        c = c + rng.normal(0.0, noise_sigma, size=grid.shape)
    return OdmrSpectrum(grid, c, noise_sigma)


def _two_deepest_minima(f, c, min_separation=None):
    # smooth first so shot noise does not masquerade as a dip
    win = max(3, len(c) // 200)
    kernel = np.ones(win) / win
    cs = np.convolve(c, kernel, mode="same")
    if min_separation is None:
        min_separation = (f.max() - f.min()) / 20.0
    minima = []
    for i in range(1, len(cs) - 1):
        if cs[i] <= cs[i - 1] and cs[i] <= cs[i + 1]:
            minima.append((cs[i], f[i]))
    minima.sort()
    picked = []
    for _, freq in minima:
        if all(abs(freq - other) >= min_separation for other in picked):
            picked.append(freq)
        if len(picked) == 2:
            break
    return picked


def fit_resonances(spectrum: OdmrSpectrum) -> ResonancePair:
    """Double-Lorentzian dip fit; falls back to one dip when they merge."""
    f = spectrum.frequencies
    c = spectrum.contrast
    span = f.max() - f.min()
    depth0 = max(1.0 - c.min(), 1e-4)
    width0 = span / 20.0
    mins = _two_deepest_minima(f, c)
    if not mins:
        mins = [f[int(np.argmin(c))]]
    merged = len(mins) < 2 or abs(mins[0] - mins[1]) < width0 / 2.0

    try:
        if merged:
            def single(x, f0, w, d, base):
                return base - d * _lorentzian_dip(x, f0, w)

            popt, pcov = curve_fit(
                single, f, c, p0=[mins[0], width0, depth0, 1.0], maxfev=20000
            )
            err = math.sqrt(max(pcov[0, 0], 0.0))
            return ResonancePair(popt[0], popt[0], err, err, merged=True)

        lo, hi = sorted(mins[:2])

        def double(x, f1, f2, w, d1, d2, base):
            return base - d1 * _lorentzian_dip(x, f1, w) - d2 * _lorentzian_dip(x, f2, w)

        popt, pcov = curve_fit(
            double, f, c, p0=[lo, hi, width0, depth0, depth0, 1.0], maxfev=20000
        )
    except RuntimeError as exc:
        raise FitDiverged(str(exc)) from None
    f1, f2 = popt[0], popt[1]
    e1 = math.sqrt(max(pcov[0, 0], 0.0))
    e2 = math.sqrt(max(pcov[1, 1], 0.0))
    if f2 < f1:
        f1, f2, e1, e2 = f2, f1, e2, e1
    return ResonancePair(float(f1), float(f2), e1, e2)


def nv_frame_rotation(p: NVParams) -> np.ndarray:
    """World->NV rotation; NV z-axis along the defect axis.

    Gauge: the NV x-axis is the world z-axis projected into the plane
    transverse to the NV axis (world x projected when the two are parallel).
    Splittings are gauge-independent; only the transverse phase changes.
    """
    n = unit_normal(p.axis_alpha_y, p.axis_alpha_z)
    ref = np.array([0.0, 0.0, 1.0])
    x_nv = ref - (ref @ n) * n
    if np.linalg.norm(x_nv) < 1e-8:
        ref = np.array([1.0, 0.0, 0.0])
        x_nv = ref - (ref @ n) * n
    x_nv = x_nv / np.linalg.norm(x_nv)
    y_nv = np.cross(n, x_nv)
    return np.column_stack([x_nv, y_nv, n])


def world_to_nv_frame(B_world, p: NVParams) -> np.ndarray:
    """Express a world-frame field in the NV frame (norm-preserving)."""
    R = nv_frame_rotation(p)
    return R.T @ np.asarray(B_world, dtype=float)
