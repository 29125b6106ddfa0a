"""Minimal rigid-body math for the rod model.

Twist ordering convention: every 6-vector twist is stacked as
``[linear; angular]`` (``[v; u]``).  Jacobian and compliance rows inherit
this ordering, so rows 0-2 are translational and rows 3-5 rotational.

Frames are plain 4x4 homogeneous matrices, rotations plain 3x3 arrays.
All functions are pure and safe for concurrent use.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CtrError


@dataclass(frozen=True)
class Tolerances:
    """Central record of the numerical tolerances used across the package."""

    rot_orthonormality: float = 1e-10
    rot_determinant: float = 1e-10
    frame_inverse: float = 1e-12
    skew_asymmetry: float = 1e-9
    unit_speed: float = 1e-9
    torsion_drift: float = 1e-10
    residual: float = 1e-10
    pinv_cutoff: float = 1e-12
    singular_cond: float = 1e12
    direction_unit_norm: float = 1e-12


TOL = Tolerances()

E3 = np.array([0.0, 0.0, 1.0])


def hat3(v):
    """Skew-symmetric 3x3 matrix such that hat3(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee3(m, tol=TOL.skew_asymmetry):
    """Inverse of hat3.  Rejects matrices whose asymmetry exceeds ``tol``."""
    m = np.asarray(m, dtype=float)
    asym = np.max(np.abs(m + m.T))
    if asym > tol:
        raise CtrError(f"vee3: input is not skew-symmetric (asymmetry {asym:.3e})")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def hat6(xi):
    """4x4 se(3) element of a twist [v; u]; bottom row is zero."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = hat3(xi[3:6])
    out[:3, 3] = xi[0:3]
    return out


def vee6(m, tol=TOL.skew_asymmetry):
    """Inverse of hat6.  Rejects malformed 4x4 inputs."""
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise CtrError(f"vee6: expected a 4x4 matrix, got shape {m.shape}")
    if np.max(np.abs(m[3, :])) > tol:
        raise CtrError("vee6: bottom row of an se(3) element must vanish")
    u = vee3(m[:3, :3], tol=tol)
    return np.concatenate([m[:3, 3], u])


def rotz(theta):
    """Rotation by ``theta`` radians around the z axis."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def drotz(theta):
    """Derivative of rotz w.r.t. the angle; equals hat3(e3) @ rotz(theta)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def frame(rotation, position):
    """Homogeneous 4x4 frame from a rotation and a position."""
    g = np.eye(4)
    g[:3, :3] = rotation
    g[:3, 3] = position
    return g


def frame_inv(g):
    """Inverse of a homogeneous frame without a general matrix inverse."""
    r = g[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ g[:3, 3]
    return out


def adjoint(g):
    """6x6 adjoint of a frame: maps body twists to spatial twists.

    With the [v; u] ordering this is [[R, hat(p) R], [0, R]].
    """
    r = g[:3, :3]
    p = g[:3, 3]
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[:3, 3:] = hat3(p) @ r
    out[3:, 3:] = r
    return out


def ad6(xi):
    """6x6 adjoint of a twist: ad6(x) @ y == vee6(hat6(x) @ hat6(y) - hat6(y) @ hat6(x))."""
    v = np.asarray(xi[0:3], dtype=float)
    u = np.asarray(xi[3:6], dtype=float)
    out = np.zeros((6, 6))
    uh = hat3(u)
    out[:3, :3] = uh
    out[:3, 3:] = hat3(v)
    out[3:, 3:] = uh
    return out


def is_rotation(r, tol_orth=TOL.rot_orthonormality, tol_det=TOL.rot_determinant):
    """True when r is orthonormal with determinant +1 within tolerance."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        return False
    orth = np.max(np.abs(r.T @ r - np.eye(3)))
    return orth <= tol_orth and abs(np.linalg.det(r) - 1.0) <= tol_det


def project_rotation(r):
    """Nearest rotation matrix in the Frobenius sense (polar projection)."""
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        out = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return out


def contract(tensor, vec):
    """Contract the page index of a rank-3 array with a vector.

    ``contract(T, v)[i, j] == sum_k T[i, j, k] * v[k]``.
    """
    tensor = np.asarray(tensor, dtype=float)
    vec = np.asarray(vec, dtype=float)
    if tensor.ndim != 3:
        raise CtrError(f"contract: expected a rank-3 array, got ndim {tensor.ndim}")
    if tensor.shape[2] != vec.shape[0]:
        raise CtrError(
            f"contract: page count {tensor.shape[2]} does not match vector length {vec.shape[0]}"
        )
    return tensor @ vec
