"""Pose algebra and forward/inverse kinematics of a 6-DoF serial arm.

Joint frames follow the classic Denavit-Hartenberg convention
(A_i = Rz(theta) Tz(d) Tx(a) Rx(alpha)); the tool centre point is offset
along the end-effector x-axis.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import JointLimitViolation, NoSolution
from .rotations import euler_to_matrix, matrix_to_euler, normalize_angle, rot_y, rot_z, rotvec_from_matrix

N_JOINTS = 6


@dataclass(frozen=True)
class Pose:
    """Position (m) and extrinsic x-y-z Euler orientation (rad), world frame."""

    x: float
    y: float
    z: float
    alpha_x: float = 0.0
    alpha_y: float = 0.0
    alpha_z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_x", normalize_angle(self.alpha_x))
        object.__setattr__(self, "alpha_y", normalize_angle(self.alpha_y))
        object.__setattr__(self, "alpha_z", normalize_angle(self.alpha_z))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        return euler_to_matrix(self.alpha_x, self.alpha_y, self.alpha_z)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation()
        T[:3, 3] = self.position
        return T

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        ax, ay, az = matrix_to_euler(np.asarray(T)[:3, :3])
        return cls(T[0, 3], T[1, 3], T[2, 3], ax, ay, az)

    def with_position(self, p) -> "Pose":
        p = np.asarray(p, dtype=float)
        return Pose(p[0], p[1], p[2], self.alpha_x, self.alpha_y, self.alpha_z)


@dataclass(frozen=True)
class DHTable:
    """Denavit-Hartenberg description of the 6-joint arm plus tool offset."""

    a: np.ndarray            # link lengths, m
    alpha: np.ndarray        # link twists, rad
    d: np.ndarray            # link offsets, m
    theta_offset: np.ndarray  # joint-angle offsets, rad
    q_min: np.ndarray        # lower joint limits, rad
    q_max: np.ndarray        # upper joint limits, rad
    tool_offset: float       # TCP offset along end-effector x-axis, m
    link_radii: np.ndarray = field(default=None)  # collision capsule radii, m (7 entries)

    def __post_init__(self):
        for name in ("a", "alpha", "d", "theta_offset", "q_min", "q_max"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N_JOINTS,):
                raise ValueError(f"DH field '{name}' must have exactly {N_JOINTS} entries")
            object.__setattr__(self, name, arr)
        if self.tool_offset < 0:
            raise ValueError("tool_offset must be >= 0")
        if np.any(self.q_min >= self.q_max):
            raise ValueError("joint limits must satisfy q_min < q_max")
        if self.link_radii is None:
            object.__setattr__(self, "link_radii", np.full(N_JOINTS + 1, 0.04))
        else:
            r = np.asarray(self.link_radii, dtype=float)
            if r.shape != (N_JOINTS + 1,):
                raise ValueError("link_radii must have 7 entries (6 links + tool)")
            object.__setattr__(self, "link_radii", r)

    def check_limits(self, q: np.ndarray):
        q = np.asarray(q, dtype=float)
        bad = np.where((q < self.q_min - 1e-12) | (q > self.q_max + 1e-12))[0]
        if bad.size:
            i = int(bad[0])
            raise JointLimitViolation(
                f"joint {i + 1} at {q[i]:.4f} rad outside [{self.q_min[i]:.4f}, {self.q_max[i]:.4f}]"
            )

    def home(self) -> np.ndarray:
        return np.clip(np.zeros(N_JOINTS), self.q_min, self.q_max)


def default_dh_table() -> DHTable:
    """Nominal 6-joint table with plausible small-arm link lengths.

    These are NOT measured values for any specific robot; they exist so the
    toolkit runs out of the box. Real deployments load their own table.
    """
    lim = np.deg2rad(175.0)
    return DHTable(
        a=np.array([0.021, 0.21, 0.0315, 0.0, 0.0, 0.0]),
        alpha=np.array([np.pi / 2, 0.0, np.pi / 2, -np.pi / 2, np.pi / 2, 0.0]),
        d=np.array([0.183, 0.0, 0.0, 0.235, 0.0, 0.087]),
        theta_offset=np.array([0.0, np.pi / 2, 0.0, 0.0, 0.0, 0.0]),
        q_min=np.array([-lim, -np.deg2rad(120.0), -np.deg2rad(150.0), -lim, -np.deg2rad(135.0), -lim]),
        q_max=np.array([lim, np.deg2rad(120.0), np.deg2rad(150.0), lim, np.deg2rad(135.0), lim]),
        tool_offset=0.04,
    )


def dh_transform(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def frame_chain(dh: DHTable, q: np.ndarray) -> list[np.ndarray]:
    """All cumulative frames: base, joints 1..6, and the TCP frame (8 total)."""
    q = np.asarray(q, dtype=float)
    frames = [np.eye(4)]
    T = np.eye(4)
    for i in range(N_JOINTS):
        T = T @ dh_transform(dh.a[i], dh.alpha[i], dh.d[i], q[i] + dh.theta_offset[i])
        frames.append(T.copy())
    tool = np.eye(4)
    tool[0, 3] = dh.tool_offset
    frames.append(T @ tool)
    return frames


def fk_matrix(dh: DHTable, q: np.ndarray) -> np.ndarray:
    return frame_chain(dh, q)[-1]


def forward_kinematics(dh: DHTable, q: np.ndarray) -> Pose:
    """TCP pose for a joint configuration; raises on joint-limit violation."""
    dh.check_limits(q)
    return Pose.from_matrix(fk_matrix(dh, q))


def jacobian(dh: DHTable, q: np.ndarray) -> np.ndarray:
    """Geometric 6x6 Jacobian (linear on top, angular below) at the TCP."""
    return _jacobian_from_frames(frame_chain(dh, q))


POS_TOL = 1e-4   # m
ROT_TOL = 1e-3   # rad


def _pose_error(T_target: np.ndarray, T_current: np.ndarray) -> np.ndarray:
    e = np.empty(6)
    e[:3] = T_target[:3, 3] - T_current[:3, 3]
    e[3:] = rotvec_from_matrix(T_target[:3, :3] @ T_current[:3, :3].T)
    return e


def _jacobian_from_frames(frames) -> np.ndarray:
    p_tcp = frames[-1][:3, 3]
    J = np.empty((6, N_JOINTS))
    for i in range(N_JOINTS):
        zx, zy, zz = frames[i][:3, 2]
        rx, ry, rz = p_tcp - frames[i][:3, 3]
        J[0, i] = zy * rz - zz * ry
        J[1, i] = zz * rx - zx * rz
        J[2, i] = zx * ry - zy * rx
        J[3, i] = zx
        J[4, i] = zy
        J[5, i] = zz
    return J


def _dls_solve(dh, T_target, q0, damping, max_iter, stall_limit=30):
    q = np.clip(np.asarray(q0, dtype=float).copy(), dh.q_min, dh.q_max)
    lam2 = damping * damping
    eye6 = np.eye(6)
    best = np.inf
    stall = 0
    for _ in range(max_iter):
        frames = frame_chain(dh, q)
        e = _pose_error(T_target, frames[-1])
        if np.linalg.norm(e[:3]) <= 0.5 * POS_TOL and np.linalg.norm(e[3:]) <= 0.5 * ROT_TOL:
            return q
        err = np.linalg.norm(e)
        if err < best - 1e-12:
            best = err
            stall = 0
        else:
            stall += 1
            if stall > stall_limit:  # clamped into a corner or wrong branch
                return None
        J = _jacobian_from_frames(frames)
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * eye6, e)
        step = np.linalg.norm(dq)
        if step > 0.5:
            dq *= 0.5 / step
        q = np.clip(q + dq, dh.q_min, dh.q_max)
    e = _pose_error(T_target, fk_matrix(dh, q))
    if np.linalg.norm(e[:3]) <= POS_TOL and np.linalg.norm(e[3:]) <= ROT_TOL:
        return q
    return None


def inverse_kinematics(
    dh: DHTable,
    target: Pose,
    seed: np.ndarray = None,
    damping: float = 0.01,
    max_iter: int = 500,
    restarts: int = 40,
    rng: np.random.Generator = None,
) -> np.ndarray:
    """Damped least-squares IK with joint-limit clamping and random restarts.

    Raises NoSolution when no attempt reaches the pose tolerance
    (position 1e-4 m, orientation 1e-3 rad).
    """
    if seed is None:
        seed = dh.home()
    dh.check_limits(seed)
    # quick reach rejection: target beyond maximal arm extension
    reach = float(np.sum(np.abs(dh.a)) + np.sum(np.abs(dh.d)) + dh.tool_offset)
    if np.linalg.norm(target.position) > reach:
        raise NoSolution(f"target at {np.linalg.norm(target.position):.3f} m exceeds reach {reach:.3f} m")
    T_target = target.matrix()
    q = _dls_solve(dh, T_target, seed, damping, max_iter)
    if q is not None:
        return q
    if rng is None:
        rng = np.random.default_rng(0)
    for _ in range(restarts):
        q0 = rng.uniform(dh.q_min, dh.q_max)
        q = _dls_solve(dh, T_target, q0, damping, max_iter)
        if q is not None:
            return q
    raise NoSolution("inverse kinematics did not converge within the iteration budget")


def unit_normal(alpha_y: float, alpha_z: float) -> np.ndarray:
    """World x-axis rotated by alpha_y about y, then alpha_z about z.

    Equals (cos az cos ay, sin az cos ay, -sin ay); always unit norm.
    """
    n = rot_z(alpha_z) @ rot_y(alpha_y) @ np.array([1.0, 0.0, 0.0])
    return n / np.linalg.norm(n)


def magnet_pose_for_field_direction(sample, alpha_y: float, alpha_z: float, standoff: float) -> Pose:
    """Magnet-centre pose at sample - standoff*n, axis along n(alpha_y, alpha_z)."""
    if standoff <= 0:
        raise ValueError("standoff must be > 0")
    sample = np.asarray(sample, dtype=float)
    p = sample - standoff * unit_normal(alpha_y, alpha_z)
    return Pose(p[0], p[1], p[2], 0.0, alpha_y, alpha_z)


def angles_for_direction(n) -> tuple[float, float]:
    """(alpha_y, alpha_z) such that unit_normal(alpha_y, alpha_z) == n-hat."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    ay = -np.arcsin(np.clip(n[2], -1.0, 1.0))
    az = np.arctan2(n[1], n[0]) if np.hypot(n[0], n[1]) > 1e-15 else 0.0
    return normalize_angle(float(ay)), normalize_angle(float(az))


def quantize_position(p, resolution: float = 0.0005) -> np.ndarray:
    """Snap a position to the robot's linear resolution grid (default 0.5 mm)."""
    p = np.asarray(p, dtype=float)
    return np.round(p / resolution) * resolution
