"""Serial-chain forward kinematics and calibration Jacobians.

The chain uses modified Denavit-Hartenberg parameters: the transform carried
by joint ``i`` (all angles in radians, lengths in meters) is

    A_i = Rx(alpha_i) @ Tx(a_i) @ Rz(theta_i + q_i) @ Tz(d_i)   revolute
    A_i = Rx(alpha_i) @ Tx(a_i) @ Rz(theta_i) @ Tz(d_i + q_i)   prismatic

composed left to right behind a fixed base transform and followed by a fixed
tool transform.  Markers are fixed points of the tool frame; all public
positions are marker positions in the world (base/measurement) frame.

Geometric parameters are addressed by string ids: ``a3``, ``alpha3``, ``d3``,
``theta3`` for joint 3 (1-based numbering) plus ``tool_x``/``tool_y``/``tool_z``
for the tool-frame translation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

REVOLUTE = "revolute"
PRISMATIC = "prismatic"

_TOOL_PARAMS = ("tool_x", "tool_y", "tool_z")
_JOINT_FIELDS = ("a", "alpha", "d", "theta")

#: Orthonormality tolerance for rotation blocks of user-supplied transforms.
_ROTATION_TOL = 1e-9


def _check_rigid(T: np.ndarray, what: str) -> None:
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4):
        raise ValueError(f"{what} transform must be 4x4, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValueError(f"{what} transform contains non-finite entries")
    R = T[:3, :3]
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err > _ROTATION_TOL:
        raise ValueError(f"{what} rotation block is not orthonormal (|R'R - I| = {err:.3e})")
    if np.linalg.det(R) < 0.0:
        raise ValueError(f"{what} rotation block is left-handed")
    if np.max(np.abs(T[3] - (0.0, 0.0, 0.0, 1.0))) > 0.0:
        raise ValueError(f"{what} transform has a non-trivial last row")


@dataclass(frozen=True)
class Joint:
    """One modified-DH joint record.  ``theta`` is the fixed offset angle."""

    kind: str
    a: float
    alpha: float
    d: float
    theta: float

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        for name in _JOINT_FIELDS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"joint parameter {name!r} is not finite")


@dataclass(frozen=True)
class ManipulatorModel:
    """Kinematic description: base, DH joints, tool transform, tool markers.

    ``markers`` are fixed 3-vector offsets expressed in the tool frame.
    """

    joints: tuple[Joint, ...]
    base: np.ndarray
    tool: np.ndarray
    markers: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("model needs at least one joint")
        _check_rigid(self.base, "base")
        _check_rigid(self.tool, "tool")
        if len(self.markers) < 1:
            raise ValueError("model needs at least one marker")
        markers = []
        for i, m in enumerate(self.markers):
            m = np.asarray(m, dtype=float).reshape(3)
            if not np.all(np.isfinite(m)):
                raise ValueError(f"marker {i} offset is not finite")
            m.setflags(write=False)
            markers.append(m)
        base = np.asarray(self.base, dtype=float)
        tool = np.asarray(self.tool, dtype=float)
        base.setflags(write=False)
        tool.setflags(write=False)
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "tool", tool)
        object.__setattr__(self, "markers", tuple(markers))

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def parameter_ids(self) -> tuple[str, ...]:
        """All identifiable geometric parameter ids, joints first, then tool."""
        ids = []
        for i in range(1, self.n_joints + 1):
            ids.extend(f"{field}{i}" for field in _JOINT_FIELDS)
        ids.extend(_TOOL_PARAMS)
        return tuple(ids)


@dataclass(frozen=True)
class Pose:
    """Rigid pose: marker position (m) and rotation of the tool frame."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        err = np.max(np.abs(R.T @ R - np.eye(3)))
        if err > _ROTATION_TOL or np.linalg.det(R) < 0.0:
            raise ValueError(f"rotation is not a proper rotation (|R'R - I| = {err:.3e})")
        p.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", R)


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis x-y-z rotation: Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def transform(xyz: Sequence[float] = (0.0, 0.0, 0.0), rpy: Sequence[float] = (0.0, 0.0, 0.0)) -> np.ndarray:
    """Homogeneous transform from a translation and fixed-axis rpy angles (radians)."""
    T = np.eye(4)
    T[:3, :3] = rpy_matrix(*rpy)
    T[:3, 3] = np.asarray(xyz, dtype=float)
    return T


def _joint_transform(joint: Joint, q: float) -> np.ndarray:
    theta = joint.theta + (q if joint.kind == REVOLUTE else 0.0)
    d = joint.d + (q if joint.kind == PRISMATIC else 0.0)
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(joint.alpha), math.sin(joint.alpha)
    return np.array(
        [
            [ct, -st, 0.0, joint.a],
            [st * ca, ct * ca, -sa, -sa * d],
            [st * sa, ct * sa, ca, ca * d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _check_q(model: ManipulatorModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != model.n_joints:
        raise ValueError(f"expected {model.n_joints} joint values, got {q.shape[0]}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint vector contains non-finite values")
    return q


def _check_marker(model: ManipulatorModel, marker: int) -> int:
    if not 0 <= marker < len(model.markers):
        raise ValueError(f"marker index {marker} out of range 0..{len(model.markers) - 1}")
    return marker


def _frames(model: ManipulatorModel, q: np.ndarray) -> list[np.ndarray]:
    """Cumulative transforms T_0^i for i = 0..n (frame 0 is the base)."""
    frames = [np.asarray(model.base, dtype=float)]
    for joint, qi in zip(model.joints, q):
        frames.append(frames[-1] @ _joint_transform(joint, qi))
    return frames


def forward_kinematics(model: ManipulatorModel, q, marker: int = 0) -> Pose:
    """Pose of a tool marker: world position plus the tool-frame rotation."""
    q = _check_q(model, q)
    marker = _check_marker(model, marker)
    T = _frames(model, q)[-1] @ model.tool
    return Pose(position=T[:3, :3] @ model.markers[marker] + T[:3, 3], rotation=T[:3, :3])


def joint_jacobian(model: ManipulatorModel, q, marker: int = 0) -> np.ndarray:
    """6 x n jacobian of the marker twist w.r.t. joint motion.

    Rows 0..2 are the linear part (marker velocity), rows 3..5 the angular
    part.  Column j uses the joint-j axis line: for a revolute joint the
    linear block is z_j x (p - o_j), for a prismatic joint it is z_j.
    """
    q = _check_q(model, q)
    marker = _check_marker(model, marker)
    frames = _frames(model, q)
    T = frames[-1] @ model.tool
    p = T[:3, :3] @ model.markers[marker] + T[:3, 3]
    J = np.zeros((6, model.n_joints))
    for j, joint in enumerate(model.joints):
        z = frames[j + 1][:3, 2]
        o = frames[j + 1][:3, 3]
        if joint.kind == REVOLUTE:
            J[:3, j] = np.cross(z, p - o)
            J[3:, j] = z
        else:
            J[:3, j] = z
    return J


def _parse_param(model: ManipulatorModel, param: str) -> tuple[str, int]:
    """Split a parameter id into (field, joint index).  Tool ids map to joint -1."""
    if param in _TOOL_PARAMS:
        return param, -1
    for field in _JOINT_FIELDS:
        if param.startswith(field):
            suffix = param[len(field):]
            if suffix.isdigit():
                idx = int(suffix) - 1
                if 0 <= idx < model.n_joints:
                    return field, idx
    raise ValueError(f"unknown geometric parameter id {param!r}")


def parameter_jacobian(model: ManipulatorModel, q, marker: int, params: Sequence[str]) -> np.ndarray:
    """3 x len(params) derivative of the marker position w.r.t. geometric parameters.

    Derivatives follow from the screw geometry of the modified-DH factors:

    * ``alpha_i``: rotation about the x axis of frame i-1 -> x_{i-1} x (p - o_{i-1})
    * ``a_i``:     translation along that same x axis      -> x_{i-1}
    * ``theta_i``: rotation about the joint-i axis line    -> z_i x (p - o_i)
    * ``d_i``:     translation along the joint-i axis      -> z_i
    * ``tool_*``:  translation of the tool frame           -> flange rotation column
    """
    params = list(params)
    if not params:
        raise ValueError("parameter selection is empty")
    q = _check_q(model, q)
    marker = _check_marker(model, marker)
    frames = _frames(model, q)
    T = frames[-1] @ model.tool
    p = T[:3, :3] @ model.markers[marker] + T[:3, 3]
    flange_R = frames[-1][:3, :3]

    out = np.zeros((3, len(params)))
    for c, param in enumerate(params):
        field, j = _parse_param(model, param)
        if j < 0:
            out[:, c] = flange_R[:, _TOOL_PARAMS.index(field)]
            continue
        if field == "alpha":
            x = frames[j][:3, 0]
            out[:, c] = np.cross(x, p - frames[j][:3, 3])
        elif field == "a":
            out[:, c] = frames[j][:3, 0]
        elif field == "theta":
            z = frames[j + 1][:3, 2]
            out[:, c] = np.cross(z, p - frames[j + 1][:3, 3])
        else:  # d
            out[:, c] = frames[j + 1][:3, 2]
    return out


def perturbed(model: ManipulatorModel, deltas: Mapping[str, float]) -> ManipulatorModel:
    """Copy of ``model`` with geometric parameters shifted by ``deltas``."""
    joints = list(model.joints)
    tool = np.array(model.tool)
    for param, delta in deltas.items():
        field, j = _parse_param(model, param)
        if j < 0:
            tool[_TOOL_PARAMS.index(field), 3] += delta
        else:
            joints[j] = replace(joints[j], **{field: getattr(joints[j], field) + delta})
    return ManipulatorModel(joints=tuple(joints), base=model.base, tool=tool, markers=model.markers)


def chain_pose(model: ManipulatorModel, q) -> np.ndarray:
    """World transform of the tool frame (4x4), mostly for diagnostics."""
    q = _check_q(model, q)
    return _frames(model, q)[-1] @ model.tool
