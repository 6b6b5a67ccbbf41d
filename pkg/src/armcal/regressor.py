"""Observation equations for geometric and elastostatic identification.

Under an external wrench ``w`` applied at a tool marker, virtual joint
springs deflect by ``dq_j = k_j * (J^T w)_j`` and the observed marker moves by

    dp = sum_j Jp[:, j] * k_j * (J[:, j] . w)

so the regressor column for compliance ``k_j`` is ``Jp_j (J_j . w)``.  The
second joint's compliance is allowed to depend on its own angle (gravity
loading of the link changes the effective stiffness), which is modelled by
bucketing: each declared reference angle owns a separate parameter.

``stack_system`` assembles the per-record 3-row blocks into one tall linear
system ``B x = dp`` with a per-row sigma vector, sorted deterministically by
(configuration, marker, repetition, axis) regardless of input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import BucketMatchError, MissingNoiseError, UnderDeterminedError
from .kinematics import ManipulatorModel, forward_kinematics, joint_jacobian, parameter_jacobian
from .noise import AXES, DEFAULT_SIGMA0, NoiseModel, build_sigma

#: Angle tolerance (radians) when matching a configuration to a bucket level.
BUCKET_TOL = 1e-6


@dataclass(frozen=True)
class Wrench:
    """External load: force/torque (N, N m) applied at one tool marker."""

    force: np.ndarray
    application_marker: int = 0
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float).reshape(3)
        t = np.asarray(self.torque, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise ValueError("wrench components must be finite")
        f.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "torque", t)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


@dataclass(frozen=True)
class ExperimentRecord:
    """One loaded/unloaded position pair for a (config, marker, repetition).

    Positions are meters in the measurement frame; ``p0`` is the unloaded
    marker position, ``p`` the position under ``load``.
    """

    config: int
    q: np.ndarray
    load: Wrench
    marker: int
    repetition: int
    p0: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        p0 = np.asarray(self.p0, dtype=float).reshape(3)
        p = np.asarray(self.p, dtype=float).reshape(3)
        for name, arr in (("q", q), ("p0", p0), ("p", p)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"record field {name} contains non-finite values")
        for name, arr in (("q", q), ("p0", p0), ("p", p)):
            arr.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p", p)

    @property
    def deflection(self) -> np.ndarray:
        return self.p - self.p0


@dataclass(frozen=True)
class ComplianceParameterMap:
    """Layout of the compliance parameter vector.

    ``bucket_levels`` are reference angles (radians, strictly increasing) of
    the bucketed joint; each level owns one parameter.  ``tail_joints`` are
    0-based indices of joints that own one parameter each regardless of
    posture.  Joints in neither set are treated as rigid.  Parameter order is
    bucket levels first, then tail joints.
    """

    bucket_levels: tuple[float, ...] = ()
    tail_joints: tuple[int, ...] = ()
    bucket_joint: int = 1

    def __post_init__(self):
        levels = tuple(float(v) for v in self.bucket_levels)
        if any(b - a <= BUCKET_TOL for a, b in zip(levels, levels[1:])):
            raise ValueError("bucket levels must be strictly increasing and separated")
        tails = tuple(int(j) for j in self.tail_joints)
        if len(set(tails)) != len(tails):
            raise ValueError("tail joints must be distinct")
        if levels and self.bucket_joint in tails:
            raise ValueError("bucketed joint cannot also be a tail joint")
        if not levels and not tails:
            raise ValueError("compliance map is empty")
        object.__setattr__(self, "bucket_levels", levels)
        object.__setattr__(self, "tail_joints", tails)

    @property
    def n_parameters(self) -> int:
        return len(self.bucket_levels) + len(self.tail_joints)

    @property
    def parameter_names(self) -> tuple[str, ...]:
        names = [f"k{self.bucket_joint + 1}_{i + 1}" for i in range(len(self.bucket_levels))]
        names += [f"k{j + 1}" for j in self.tail_joints]
        return tuple(names)

    def bucket_index(self, angle: float) -> int:
        """Index of the level matching ``angle`` within ``BUCKET_TOL``."""
        for i, level in enumerate(self.bucket_levels):
            if abs(angle - level) <= BUCKET_TOL:
                return i
        raise BucketMatchError(
            f"joint angle {angle:.8f} rad matches no declared bucket level "
            f"(levels: {', '.join(f'{v:.6f}' for v in self.bucket_levels)})"
        )

    def column_of(self, joint: int, q_joint: float) -> int | None:
        """Parameter column owned by ``joint`` at angle ``q_joint``, or None."""
        if self.bucket_levels and joint == self.bucket_joint:
            return self.bucket_index(q_joint)
        if joint in self.tail_joints:
            return len(self.bucket_levels) + self.tail_joints.index(joint)
        return None

    @classmethod
    def from_configurations(
        cls,
        configurations: Sequence[np.ndarray],
        bucket_joint: int = 1,
        tail_joints: Sequence[int] = (2, 3, 4, 5),
    ) -> "ComplianceParameterMap":
        """Derive bucket levels from the distinct bucket-joint angles seen in a study."""
        levels: list[float] = []
        for q in configurations:
            angle = float(np.asarray(q, dtype=float)[bucket_joint])
            if not any(abs(angle - v) <= BUCKET_TOL for v in levels):
                levels.append(angle)
        return cls(bucket_levels=tuple(sorted(levels)), tail_joints=tuple(tail_joints), bucket_joint=bucket_joint)


def elastostatic_regressor(
    model: ManipulatorModel,
    q,
    load: Wrench,
    cmap: ComplianceParameterMap,
    marker: int,
) -> np.ndarray:
    """3 x n_k regressor mapping joint compliances to the marker deflection.

    Joint torques are taken at the wrench's application marker; the observed
    deflection is that of ``marker``.  Columns of joints outside the map stay
    zero-free (no column at all), and the bucketed joint writes only into the
    column of its matching level.
    """
    q = np.asarray(q, dtype=float).reshape(-1)
    J_obs = joint_jacobian(model, q, marker)
    if load.application_marker == marker:
        J_app = J_obs
    else:
        J_app = joint_jacobian(model, q, load.application_marker)
    torques = J_app.T @ load.vector  # tau = J^T w, one entry per joint
    A = np.zeros((3, cmap.n_parameters))
    for j in range(model.n_joints):
        col = cmap.column_of(j, q[j])
        if col is not None:
            A[:, col] += J_obs[:3, j] * torques[j]
    return A


def geometric_regressor(model: ManipulatorModel, q, marker: int, params: Sequence[str]) -> np.ndarray:
    """3 x |params| regressor mapping geometric deviations to position error."""
    return parameter_jacobian(model, q, marker, params)


RowTag = tuple[int, int, str]

Mode = Literal["elastostatic", "geometric", "combined"]


@dataclass(frozen=True)
class StackedSystem:
    """Tall linear system ``B x = dp`` with per-row dispersions.

    ``row_tags`` aligns each scalar row with its (config, marker, axis)
    origin; ``columns`` names the entries of ``x``.
    """

    B: np.ndarray
    dp: np.ndarray
    sigma: np.ndarray
    row_tags: tuple[RowTag, ...]
    columns: tuple[str, ...]
    mode: str = "elastostatic"

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        dp = np.asarray(self.dp, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        m, n = B.shape
        if dp.shape[0] != m or sigma.shape[0] != m or len(self.row_tags) != m:
            raise ValueError("B, dp, sigma and row_tags disagree on the row count")
        if len(self.columns) != n:
            raise ValueError("columns must name every parameter")
        if np.any(sigma <= 0.0):
            raise ValueError("sigma entries must be strictly positive")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(dp)) and np.all(np.isfinite(sigma))):
            raise ValueError("stacked system contains non-finite values")
        B.setflags(write=False)
        dp.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "dp", dp)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "row_tags", tuple(tuple(t) for t in self.row_tags))
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def n_equations(self) -> int:
        return self.B.shape[0]

    @property
    def n_parameters(self) -> int:
        return self.B.shape[1]


def stack_system(
    records: Sequence[ExperimentRecord],
    model: ManipulatorModel,
    cmap: ComplianceParameterMap | None,
    noise: NoiseModel,
    mode: Mode = "elastostatic",
    params: Sequence[str] | None = None,
    sigma_floor: float = DEFAULT_SIGMA0,
) -> StackedSystem:
    """Assemble per-record observation blocks into one stacked system.

    * ``elastostatic``: observations are deflections ``p - p0``, columns are
      the compliance parameters of ``cmap``.
    * ``geometric``: observations are ``p0`` minus the nominal forward
      kinematics, columns are the geometric parameters in ``params``.
    * ``combined``: each record contributes an unloaded block ``[J | 0]``
      against ``p0 - fk`` and a loaded block ``[J | A]`` against ``p - fk``,
      so the unknowns are the concatenation (geometric first).

    Records are sorted by (config, marker, repetition) and axes expand x, y, z
    so the row order never depends on input order.  Repeated experiments are
    stacked as independent rows, not averaged: averaging would hide the very
    replicate scatter the weighting stage feeds on.
    """
    if not records:
        raise ValueError("no records to stack")
    if mode not in ("elastostatic", "geometric", "combined"):
        raise ValueError(f"unknown stacking mode {mode!r}")
    if mode in ("elastostatic", "combined") and cmap is None:
        raise ValueError(f"{mode} stacking needs a compliance parameter map")
    if mode in ("geometric", "combined"):
        if not params:
            raise ValueError(f"{mode} stacking needs a geometric parameter selection")
        params = list(params)

    ordered = sorted(records, key=lambda r: (r.config, r.marker, r.repetition))

    columns: tuple[str, ...]
    if mode == "elastostatic":
        columns = cmap.parameter_names
    elif mode == "geometric":
        columns = tuple(params)
    else:
        columns = tuple(params) + cmap.parameter_names

    blocks: list[np.ndarray] = []
    obs: list[np.ndarray] = []
    tags: list[RowTag] = []
    n_geo = len(params) if params else 0
    for rec in ordered:
        tag_block = [(rec.config, rec.marker, axis) for axis in AXES]
        if mode == "elastostatic":
            A = elastostatic_regressor(model, rec.q, rec.load, cmap, rec.marker)
            blocks.append(A)
            obs.append(rec.deflection)
            tags.extend(tag_block)
            continue
        fk = forward_kinematics(model, rec.q, rec.marker).position
        J = geometric_regressor(model, rec.q, rec.marker, params)
        if mode == "geometric":
            blocks.append(J)
            obs.append(rec.p0 - fk)
            tags.extend(tag_block)
        else:
            A = elastostatic_regressor(model, rec.q, rec.load, cmap, rec.marker)
            unloaded = np.hstack([J, np.zeros_like(A)])
            loaded = np.hstack([J, A])
            blocks.extend([unloaded, loaded])
            obs.extend([rec.p0 - fk, rec.p - fk])
            tags.extend(tag_block)
            tags.extend(tag_block)

    B = np.vstack(blocks)
    dp = np.concatenate(obs)
    if B.shape[0] < B.shape[1]:
        raise UnderDeterminedError(
            f"{B.shape[0]} scalar equations cannot determine {B.shape[1]} parameters"
        )
    sigma = build_sigma(noise, tags, floor=sigma_floor)
    return StackedSystem(B=B, dp=dp, sigma=sigma, row_tags=tuple(tags), columns=columns, mode=mode)
