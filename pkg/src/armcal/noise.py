"""Per-configuration, per-axis dispersion estimation for tracker measurements.

The laser tracker's error level depends strongly on where the reflector sits
in the work cell, so dispersions are kept per (configuration, axis) rather
than pooled.  A :class:`NoiseModel` maps configuration ids to per-axis
standard deviations of one stacked observation row (for deflection studies
that is the dispersion of the loaded-minus-unloaded difference, which is what
gets regressed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MissingNoiseError, ReplicateCountError

AXES = ("x", "y", "z")

#: Default dispersion floor: the tracker's claimed precision, 10 um.
DEFAULT_SIGMA0 = 10e-6


@dataclass(frozen=True)
class NoiseModel:
    """Per-configuration, per-axis standard deviations, in meters.

    ``uncertainty`` optionally carries the standard error of each sigma
    estimate (same shape), from the chi-distribution large-sample formula
    se(sigma) = sigma / sqrt(2 (n - 1)).
    """

    entries: Mapping[int, np.ndarray]
    uncertainty: Mapping[int, np.ndarray] | None = None

    def __post_init__(self):
        frozen = {}
        for cfg, sig in self.entries.items():
            s = np.asarray(sig, dtype=float).reshape(3)
            if not np.all(np.isfinite(s)) or np.any(s < 0.0):
                raise ValueError(f"noise entry for configuration {cfg!r} must be finite and >= 0")
            s.setflags(write=False)
            frozen[cfg] = s
        object.__setattr__(self, "entries", frozen)
        if self.uncertainty is not None:
            frozen_u = {}
            for cfg, u in self.uncertainty.items():
                a = np.asarray(u, dtype=float).reshape(3)
                a.setflags(write=False)
                frozen_u[cfg] = a
            object.__setattr__(self, "uncertainty", frozen_u)

    def sigma(self, config: int) -> np.ndarray:
        try:
            return self.entries[config]
        except KeyError:
            raise MissingNoiseError(f"no noise entry for configuration {config!r}") from None

    @property
    def configurations(self) -> tuple[int, ...]:
        return tuple(self.entries)

    @classmethod
    def uniform(cls, configs: Iterable[int], sigma: float) -> "NoiseModel":
        """One common sigma on every axis of every listed configuration."""
        s = np.full(3, float(sigma))
        return cls(entries={cfg: s.copy() for cfg in configs})


def _sigma_and_se(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise ReplicateCountError(f"need at least 2 replicates to estimate a dispersion, got {n}")
    s = np.std(values, axis=0, ddof=1)
    return s, s / math.sqrt(2.0 * (n - 1))


def estimate_dispersions(groups: Mapping[int, np.ndarray]) -> NoiseModel:
    """Unbiased per-axis sample dispersions from replicate groups.

    ``groups`` maps a configuration id to an (n_i, 3) array of replicate
    3-vectors (meters).  Replicates are differenced about their own group
    mean, so a constant offset common to a group does not contribute.
    """
    entries: dict[int, np.ndarray] = {}
    uncert: dict[int, np.ndarray] = {}
    for cfg, values in groups.items():
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 3:
            raise ValueError(f"group {cfg!r}: replicates must form an (n, 3) array")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"group {cfg!r}: replicates contain non-finite values")
        entries[cfg], uncert[cfg] = _sigma_and_se(values)
    if not entries:
        raise ValueError("no replicate groups supplied")
    return NoiseModel(entries=entries, uncertainty=uncert)


def dispersions_from_rows(values: np.ndarray, row_tags: Sequence) -> NoiseModel:
    """Dispersions of flat per-axis rows grouped by (configuration, axis).

    ``row_tags`` pairs each scalar in ``values`` with a (config, marker, axis)
    tag; all markers and repetitions of one configuration pool into one group
    per axis.  Used to re-estimate noise from fit residuals.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape[0] != len(row_tags):
        raise ValueError("values and row_tags length mismatch")
    buckets: dict[tuple[int, str], list[float]] = {}
    for v, tag in zip(values, row_tags):
        cfg, _, axis = tag
        buckets.setdefault((cfg, axis), []).append(v)
    entries: dict[int, np.ndarray] = {}
    uncert: dict[int, np.ndarray] = {}
    for (cfg, axis), vals in buckets.items():
        s, se = _sigma_and_se(np.asarray(vals))  # scalar std about the group mean
        entries.setdefault(cfg, np.zeros(3))[AXES.index(axis)] = s
        uncert.setdefault(cfg, np.zeros(3))[AXES.index(axis)] = se
    return NoiseModel(entries=entries, uncertainty=uncert)


def deflection_dispersions(records) -> NoiseModel:
    """Noise model from raw deflection replicates of an experiment.

    Pools the loaded-minus-unloaded differences of all markers and
    repetitions of each configuration.  Before any fit has been run this is
    the non-compensated dispersion (marker-to-marker signal spread included),
    which is the usual starting point when the tracker noise is unknown.
    """
    groups: dict[int, list[np.ndarray]] = {}
    for rec in records:
        groups.setdefault(rec.config, []).append(rec.p - rec.p0)
    return estimate_dispersions({cfg: np.asarray(v) for cfg, v in groups.items()})


def build_sigma(noise: NoiseModel, row_tags: Sequence, floor: float = DEFAULT_SIGMA0) -> np.ndarray:
    """Stacked per-row sigma vector for a system, floored at ``floor``.

    The floor (default 10 um, the tracker's claimed precision) guarantees
    strictly positive entries so downstream weight rules never divide by zero.
    """
    if floor <= 0.0:
        raise ValueError("sigma floor must be positive")
    out = np.empty(len(row_tags))
    for i, tag in enumerate(row_tags):
        cfg, _, axis = tag
        out[i] = noise.sigma(cfg)[AXES.index(axis)]
    return np.maximum(out, floor)
