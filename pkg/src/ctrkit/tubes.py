"""Tube geometry, material constants, and actuation-vector helpers.

A robot is an ordered set of telescoping tubes, innermost first (index 1
in the math, index 0 in code).  The actuation vector is
``q = [alpha_1, beta_1, ..., alpha_n, beta_n]`` with rotations in radians
and base translations in meters (``beta_i <= 0`` retracts the tube).
"""

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import InvalidConfigurationError

_ANNULUS = np.pi / 64.0


@dataclass(frozen=True)
class TubeParams:
    """Geometric and material parameters of a single tube (SI units)."""

    id_m: float
    od_m: float
    straight_m: float
    curved_m: float
    kappa_per_m: float
    e_pa: float
    g_pa: float
    gamma_min_m: float
    gamma_max_m: float

    def __post_init__(self):
        if not (self.od_m > self.id_m > 0.0):
            raise InvalidConfigurationError(
                f"tube diameters must satisfy od > id > 0, got id={self.id_m}, od={self.od_m}"
            )
        if self.straight_m <= 0.0 or self.curved_m <= 0.0:
            raise InvalidConfigurationError("tube section lengths must be positive")
        if self.kappa_per_m < 0.0:
            raise InvalidConfigurationError("precurvature must be non-negative")
        if not (0.0 < self.gamma_min_m < self.gamma_max_m):
            raise InvalidConfigurationError("exposed-length limits must satisfy 0 < min < max")

    @property
    def length_m(self):
        return self.straight_m + self.curved_m

    @property
    def area_moment_m4(self):
        """Second moment of area of the annular cross-section."""
        return _ANNULUS * (self.od_m**4 - self.id_m**4)

    @property
    def polar_moment_m4(self):
        """Polar moment; twice the area moment for an annulus."""
        return 2.0 * self.area_moment_m4

    @property
    def bending_stiffness(self):
        return self.e_pa * self.area_moment_m4

    @property
    def torsion_stiffness(self):
        return self.g_pa * self.polar_moment_m4


@dataclass(frozen=True)
class TubeSet:
    """Ordered tuple of telescoping tubes, innermost (longest) first."""

    tubes: tuple

    def __post_init__(self):
        if len(self.tubes) < 1:
            raise InvalidConfigurationError("a tube set needs at least one tube")
        for inner, outer in zip(self.tubes[:-1], self.tubes[1:]):
            if outer.id_m < inner.od_m:
                raise InvalidConfigurationError(
                    "telescoping violated: an outer tube must enclose the tube inside it"
                )

    @property
    def n(self):
        return len(self.tubes)

    @property
    def lengths(self):
        return np.array([t.length_m for t in self.tubes])

    @property
    def straight_lengths(self):
        return np.array([t.straight_m for t in self.tubes])

    @property
    def kappas(self):
        return np.array([t.kappa_per_m for t in self.tubes])

    @property
    def bending_stiffnesses(self):
        return np.array([t.bending_stiffness for t in self.tubes])

    @property
    def torsion_stiffnesses(self):
        return np.array([t.torsion_stiffness for t in self.tubes])

    @property
    def gamma_min(self):
        return np.array([t.gamma_min_m for t in self.tubes])

    @property
    def gamma_max(self):
        return np.array([t.gamma_max_m for t in self.tubes])

    @classmethod
    def from_dict(cls, payload):
        tubes = tuple(TubeParams(**entry) for entry in payload["tubes"])
        return cls(tubes)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        keys = (
            "id_m", "od_m", "straight_m", "curved_m", "kappa_per_m",
            "e_pa", "g_pa", "gamma_min_m", "gamma_max_m",
        )
        return {"tubes": [{k: getattr(t, k) for k in keys} for t in self.tubes]}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def default(cls):
        """Three-tube set shipped as the package fixture."""
        text = resources.files("ctrkit.data").joinpath("tubes_default.json").read_text()
        return cls.from_dict(json.loads(text))


def alphas(q):
    """Tube rotations from an actuation vector."""
    return np.asarray(q, dtype=float)[0::2]


def betas(q):
    """Tube base translations from an actuation vector."""
    return np.asarray(q, dtype=float)[1::2]


def pack_q(alpha, beta):
    """Interleave rotations and translations into an actuation vector."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    q = np.empty(2 * alpha.shape[0])
    q[0::2] = alpha
    q[1::2] = beta
    return q


def tube_ends(q, tubes):
    """Arc length of each tube's distal end, s_end_i = beta_i + length_i."""
    return betas(q) + tubes.lengths


def curvature_onsets(q, tubes):
    """Arc length where each tube's precurved section starts."""
    return betas(q) + tubes.straight_lengths


def exposed_lengths(q, tubes):
    """Exposed length of each tube past the next outer tube.

    The outermost tube's exposure is measured from the base plate (s = 0).
    """
    ends = tube_ends(q, tubes)
    return ends - np.append(ends[1:], 0.0)


def validate_actuation(q, tubes, check_limits=False):
    """Check the telescoping geometry; optionally the exposure limits.

    Raises InvalidConfigurationError on violation.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (2 * tubes.n,):
        raise InvalidConfigurationError(
            f"actuation vector must have length {2 * tubes.n}, got {q.shape}"
        )
    if not np.all(np.isfinite(q)):
        raise InvalidConfigurationError("actuation vector has non-finite entries")
    ends = tube_ends(q, tubes)
    if np.any(ends <= 0.0):
        raise InvalidConfigurationError(f"tube end at or below the base plate: s_end={ends}")
    if np.any(np.diff(ends) >= 0.0):
        raise InvalidConfigurationError(f"tube ends must be strictly decreasing: s_end={ends}")
    if np.any(betas(q) > 0.0):
        raise InvalidConfigurationError("base translations must be non-positive")
    if check_limits:
        gam = exposed_lengths(q, tubes)
        low, high = tubes.gamma_min, tubes.gamma_max
        if np.any(gam < low) or np.any(gam > high):
            raise InvalidConfigurationError(
                f"exposed lengths {gam} outside limits [{low}, {high}]"
            )
    return q
