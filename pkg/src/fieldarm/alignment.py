"""Field-generation algorithms: sphere-segment scans, offset calibration,
amplitude scheduling against the 1/r^3 fall-off, the Gaussian similarity
metric, and replacement of collision-forbidden poses via the inverse dipole
problem.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .environment import (
    FeasibilityStatus,
    build_trees,
    pose_feasibility,
    segment_collides,
    tool_capsule_for_pose,
)
from .errors import (
    FinalPoseForbidden,
    InsufficientData,
    FitDiverged,
    NoReachableDisplacement,
    TargetUnreachable,
    ZeroField,
)
from .kinematics import (
    Pose,
    angles_for_direction,
    magnet_pose_for_field_direction,
    unit_normal,
)
from .magnetostatics import MagnetSpec, cylinder_field, inverse_dipole

SIMILARITY_SCALE_MT = 3.0  # Gaussian kernel length scale, millitesla


@dataclass(frozen=True)
class ScanPoint:
    alpha_y: float
    alpha_z: float
    pose: Pose
    predicted_field: np.ndarray   # T, world frame
    order_index: int
    measured_field: np.ndarray | None = None


@dataclass(frozen=True)
class CalibrationResult:
    delta_alpha_y: float          # rad, shared across mass configurations
    delta_alpha_z: np.ndarray     # rad, one per mass configuration
    residual_rms: float           # T


@dataclass(frozen=True)
class AmplitudeSchedule:
    targets: np.ndarray      # T
    distances: np.ndarray    # m, quantised to the robot resolution
    achieved: np.ndarray     # T
    errors: np.ndarray       # T, achieved - target
    error_bounds: np.ndarray  # T, worst-case |error| from quantisation


@dataclass(frozen=True)
class ReplacementPlan:
    original_pose: Pose
    displaced_pose: Pose
    rotated_pose: Pose
    final_pose: Pose
    target_field: np.ndarray
    achieved_field: np.ndarray
    similarity: float
    far_field_ok: bool
    identity: bool = False


def sphere_segment_scan(sample, alpha_y_values, alpha_z_values, standoff,
                        spec: MagnetSpec) -> list[ScanPoint]:
    """Enumerate magnet poses over the (alpha_y, alpha_z) grid in meander order.

    Row k (fixed alpha_y) traverses alpha_z ascending when k is even,
    descending when odd. Predicted fields come from the cylinder model.
    """
    if standoff <= 0:
        raise ValueError("standoff must be > 0")
    ay_vals = np.atleast_1d(np.asarray(alpha_y_values, dtype=float))
    az_vals = np.atleast_1d(np.asarray(alpha_z_values, dtype=float))
    if ay_vals.size == 0 or az_vals.size == 0:
        raise ValueError("scan grid must be non-empty")
    sample = np.asarray(sample, dtype=float)
    points = []
    idx = 0
    for k, ay in enumerate(ay_vals):
        row = az_vals if k % 2 == 0 else az_vals[::-1]
        for az in row:
            pose = magnet_pose_for_field_direction(sample, ay, az, standoff)
            B = cylinder_field(spec, pose, sample)
            points.append(ScanPoint(float(ay), float(az), pose, B, idx))
            idx += 1
    return points


def angular_error(predicted, designed_direction) -> float:
    """Angle (rad) between a field vector and a designed unit direction."""
    B = np.asarray(predicted, dtype=float)
    n = np.asarray(designed_direction, dtype=float)
    nb = np.linalg.norm(B)
    if nb == 0.0:
        raise ZeroField("angular error undefined for zero field")
    c = (B @ n) / (nb * np.linalg.norm(n))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def calibrate_offsets(measured, specs, sample, standoff) -> CalibrationResult:
    """Fit a shared alpha_y offset and per-mass alpha_z offsets to field data.

    `measured` rows: (commanded alpha_y, commanded alpha_z, mass_index,
    Bx, By, Bz) with fields in tesla. `specs` is one MagnetSpec per mass
    configuration (or a single spec used for all).
    """
    rows = [(float(ay), float(az), int(mi), np.asarray(B, dtype=float))
            for ay, az, mi, B in measured]
    n_mass = max(r[2] for r in rows) + 1
    if isinstance(specs, MagnetSpec):
        specs = [specs] * n_mass
    if len(specs) < n_mass:
        raise ValueError(f"need a MagnetSpec for each of {n_mass} mass configurations")
    for m in range(n_mass):
        if sum(1 for r in rows if r[2] == m) < 4:
            raise InsufficientData(f"mass configuration {m} has fewer than 4 measurements")
    sample = np.asarray(sample, dtype=float)

    def residual(params):
        dy = params[0]
        dz = params[1:]
        out = []
        for ay, az, mi, B in rows:
            pose = magnet_pose_for_field_direction(sample, ay + dy, az + dz[mi], standoff)
            out.append(cylinder_field(specs[mi], pose, sample) - B)
        return np.concatenate(out)

    sol = least_squares(residual, np.zeros(1 + n_mass), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise FitDiverged("offset calibration failed to converge")
    res = sol.fun
    return CalibrationResult(
        delta_alpha_y=float(sol.x[0]),
        delta_alpha_z=sol.x[1:].copy(),
        residual_rms=float(np.sqrt(np.mean(res**2))),
    )


def _magnitude_on_ray(spec, direction, sample, r):
    pose = magnet_pose_for_field_direction(sample, *angles_for_direction(direction), r)
    return float(np.linalg.norm(cylinder_field(spec, pose, sample)))


def amplitude_schedule(targets, spec: MagnetSpec, direction, sample,
                       resolution=0.0005, r_min=None, r_max=0.6) -> AmplitudeSchedule:
    """Pick magnet distances realising each target amplitude on a fixed ray.

    Inverts the monotone |B|(r) curve by bisection (1e-9 m), snaps each
    distance to the robot resolution grid, and reports the achieved field,
    signed error, and the worst-case quantisation error bound.
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    sample = np.asarray(sample, dtype=float)
    if r_min is None:
        r_min = spec.length / 2.0 + spec.outer_radius  # just clear of the magnet body
    B_hi = _magnitude_on_ray(spec, direction, sample, r_min)
    B_lo = _magnitude_on_ray(spec, direction, sample, r_max)
    distances = np.empty_like(targets)
    achieved = np.empty_like(targets)
    bounds = np.empty_like(targets)
    for i, t in enumerate(targets):
        if t > B_hi or t < B_lo:
            raise TargetUnreachable(
                f"target {t:.4e} T outside achievable [{B_lo:.4e}, {B_hi:.4e}] T"
            )
        lo, hi = r_min, r_max
        while hi - lo > 1e-9:
            mid = (lo + hi) / 2.0
            if _magnitude_on_ray(spec, direction, sample, mid) > t:
                lo = mid
            else:
                hi = mid
        r_exact = (lo + hi) / 2.0
        r_q = max(r_min, round(r_exact / resolution) * resolution)
        b_q = _magnitude_on_ray(spec, direction, sample, r_q)
        # local slope of |B|(r) bounds the snap-to-grid error
        h = resolution / 2.0
        slope = abs(
            _magnitude_on_ray(spec, direction, sample, r_exact + h)
            - _magnitude_on_ray(spec, direction, sample, max(r_min, r_exact - h))
        ) / (2.0 * h)
        distances[i] = r_q
        achieved[i] = b_q
        bounds[i] = slope * resolution / 2.0
    return AmplitudeSchedule(targets, distances, achieved, achieved - targets, bounds)


def similarity(B1, B2, d_mT=SIMILARITY_SCALE_MT) -> float:
    """Gaussian kernel similarity in (0, 1]: exp(-||B2-B1||^2 / (2 d^2)).

    Fields in tesla; the norm is evaluated in millitesla with length scale
    `d_mT` (default 3 mT).
    """
    if d_mT <= 0:
        raise ValueError("similarity length scale must be > 0")
    diff_mT = (np.asarray(B2, dtype=float) - np.asarray(B1, dtype=float)) * 1e3
    return float(math.exp(-float(diff_mT @ diff_mT) / (2.0 * d_mT**2)))


FAR_FIELD_DIAMETERS = 8.0


def replace_forbidden_pose(forbidden: Pose, sample, spec: MagnetSpec, env, dh, body,
                           displacement_axis="z", search_step=0.005, max_steps=40,
                           seed=None, magnitude_tol=1e-9) -> ReplacementPlan:
    """Four-stage replacement of a collision-forbidden magnet pose.

    (i) record the target field of the forbidden pose at the sample;
    (ii) translate the magnet centre along the chosen world axis until the
    pose is reachable; (iii) re-orient the magnet along the inverse-dipole
    moment for the new displacement so the field direction is recovered;
    (iv) slide the magnet along the magnet-sample ray (cube-root initial
    guess, then bisection on the cylinder model) to recover the magnitude.
    """
    if displacement_axis not in ("y", "z"):
        raise ValueError("displacement_axis must be 'y' or 'z'")
    sample = np.asarray(sample, dtype=float)
    trees = build_trees(env)
    state = {"seed": dh.home() if seed is None else np.asarray(seed, dtype=float)}

    def feasible(pose, thorough=True):
        # the tool capsule follows from the pose alone: cheap proof of collision
        p, q, radius = tool_capsule_for_pose(dh, body, pose)
        if segment_collides(trees, p, q, radius):
            return False
        if thorough:
            result = pose_feasibility(pose, dh, body, env, state["seed"], trees)
        else:
            # search phase: a missed branch just skips one candidate
            result = pose_feasibility(pose, dh, body, env, state["seed"], trees,
                                      restarts=4, branch_attempts=2)
        if result.joints is not None:
            state["seed"] = result.joints
        return result.status is FeasibilityStatus.REACHABLE

    target = cylinder_field(spec, forbidden, sample)
    target_mag = float(np.linalg.norm(target))

    if feasible(forbidden):
        return ReplacementPlan(
            original_pose=forbidden, displaced_pose=forbidden, rotated_pose=forbidden,
            final_pose=forbidden, target_field=target, achieved_field=target,
            similarity=1.0, far_field_ok=True, identity=True,
        )

    axis = np.array([0.0, 1.0, 0.0]) if displacement_axis == "y" else np.array([0.0, 0.0, 1.0])
    r_clear = spec.length / 2.0 + spec.outer_radius + 1e-6

    def plan_for(displaced):
        r_vec = sample - displaced.position
        far_field_ok = bool(np.linalg.norm(r_vec) >= FAR_FIELD_DIAMETERS * 2.0 * spec.outer_radius)
        moment = inverse_dipole(target, r_vec)
        ay, az = angles_for_direction(moment)
        rotated = Pose(displaced.x, displaced.y, displaced.z, 0.0, ay, az)

        r0 = float(np.linalg.norm(r_vec))
        r_hat = r_vec / r0

        def mag_at(dist):
            pose = rotated.with_position(sample - dist * r_hat)
            return float(np.linalg.norm(cylinder_field(spec, pose, sample)))

        B_rot = cylinder_field(spec, rotated, sample)
        r_guess = r0 * (np.linalg.norm(B_rot) / target_mag) ** (1.0 / 3.0)
        lo = max(r_guess / 2.0, r_clear)
        hi = r_guess * 2.0
        while mag_at(hi) > target_mag and hi < 10.0:
            hi *= 1.5
        while mag_at(lo) < target_mag and lo / 1.5 > r_clear:
            lo = max(lo / 1.5, r_clear)
        while hi - lo > magnitude_tol:
            mid = (lo + hi) / 2.0
            if mag_at(mid) > target_mag:
                lo = mid
            else:
                hi = mid
        final = rotated.with_position(sample - ((lo + hi) / 2.0) * r_hat)
        if not feasible(final):
            return None
        achieved = cylinder_field(spec, final, sample)
        return ReplacementPlan(
            original_pose=forbidden, displaced_pose=displaced, rotated_pose=rotated,
            final_pose=final, target_field=target, achieved_field=achieved,
            similarity=similarity(target, achieved), far_field_ok=far_field_ok,
        )

    found_displacement = False
    for n in range(1, max_steps + 1):
        for sign in (1.0, -1.0):
            candidate = forbidden.with_position(forbidden.position + sign * n * search_step * axis)
            if not feasible(candidate, thorough=False):
                continue
            found_displacement = True
            plan = plan_for(candidate)
            if plan is not None:
                return plan
    if found_displacement:
        raise FinalPoseForbidden("amplitude-correcting pose is not reachable for any displacement")
    raise NoReachableDisplacement(
        f"no reachable pose within {max_steps} steps of {search_step} m along {displacement_axis}"
    )
