"""Manipulability indices of the velocity and compliance ellipsoids.

Each index comes with its analytic gradient over the actuation vector,
assembled from the propagated Jacobian/compliance Hessians.  Gradients
are reported as None when the underlying ellipsoid matrix is too close
to singular to invert reliably.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularConfigurationError
from .liegroup import TOL


@dataclass
class ManipulabilityReport:
    """Scalar index value plus its gradient over q (None if unavailable)."""

    value: float
    gradient: np.ndarray = None


def check_direction(vec):
    vec = np.asarray(vec, dtype=float)
    if abs(np.linalg.norm(vec) - 1.0) > TOL.direction_unit_norm:
        raise ValueError(f"direction must be a unit vector, got norm {np.linalg.norm(vec)}")
    return vec


def weighted_jacobian(jac, weights, jac_pages=None, dweights_dq=None):
    """Right-multiply a Jacobian by W^(-1/2) and push the weighting through
    its q-derivative pages.

    weights is the diagonal of W; dweights_dq[i, j] = d(weights_i)/d(q_j).
    Returns (J_w, pages of d(J_w)/dq) with pages None when jac_pages is.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0.0):
        raise ValueError("joint weights must be positive")
    inv_sqrt = 1.0 / np.sqrt(weights)
    j_w = jac * inv_sqrt[None, :]
    if jac_pages is None:
        return j_w, None
    nq = jac.shape[1]
    pages = np.empty_like(jac_pages)
    for j in range(nq):
        pages[:, :, j] = jac_pages[:, :, j] * inv_sqrt[None, :]
        if dweights_dq is not None:
            d_inv_sqrt = -0.5 * weights**-1.5 * dweights_dq[:, j]
            pages[:, :, j] += jac * d_inv_sqrt[None, :]
    return j_w, pages


def _gram_solve(gram, rhs):
    return np.linalg.solve(gram, rhs)


def vmi(j_w, jw_pages=None):
    """Volume of the velocity manipulability ellipsoid, sqrt(det(Jw Jw^T)).

    The gradient entry for q_i is 0.5 * value * trace(G^-1 dG/dq_i); it is
    flagged unavailable at (near-)singular G.
    """
    gram = j_w @ j_w.T
    det = np.linalg.det(gram)
    value = float(np.sqrt(max(det, 0.0)))
    if jw_pages is None:
        return ManipulabilityReport(value=value)
    if det <= 0.0 or np.linalg.cond(gram) > TOL.singular_cond:
        return ManipulabilityReport(value=value, gradient=None)
    nq = j_w.shape[1]
    grad = np.empty(nq)
    for i in range(nq):
        dgram = jw_pages[:, :, i] @ j_w.T
        dgram = dgram + dgram.T
        grad[i] = 0.5 * value * np.trace(_gram_solve(gram, dgram))
    return ManipulabilityReport(value=value, gradient=grad)


def oriented_vmi(jac, direction, jac_pages=None):
    """Extent of the velocity ellipsoid along a unit direction.

    value = [rho^T (J J^T)^-1 rho]^(-1/2).  Raises on singular J J^T.
    """
    rho = check_direction(direction)
    gram = jac @ jac.T
    if np.linalg.cond(gram) > TOL.singular_cond:
        raise SingularConfigurationError("velocity ellipsoid matrix is singular")
    y = _gram_solve(gram, rho)
    x = float(rho @ y)
    value = x**-0.5
    if jac_pages is None:
        return ManipulabilityReport(value=value)
    nq = jac.shape[1]
    grad = np.empty(nq)
    for i in range(nq):
        dgram = jac_pages[:, :, i] @ jac.T
        dgram = dgram + dgram.T
        grad[i] = 0.5 * x**-1.5 * float(y @ dgram @ y)
    return ManipulabilityReport(value=value, gradient=grad)


def whole_body_vmi(points):
    """Weighted sum of oriented VMIs at several points of interest.

    points is an iterable of (jac, direction, weight, jac_pages) tuples;
    pass jac_pages None to skip the gradient.
    """
    total = 0.0
    grad = None
    have_grad = True
    for jac, direction, weight, jac_pages in points:
        if weight < 0.0:
            raise ValueError("point weights must be non-negative")
        rep = oriented_vmi(jac, direction, jac_pages)
        total += weight * rep.value
        if rep.gradient is None:
            have_grad = False
        elif have_grad:
            grad = weight * rep.gradient if grad is None else grad + weight * rep.gradient
    return ManipulabilityReport(value=total, gradient=grad if have_grad else None)


def oriented_compliance(comp, direction, comp_pages=None):
    """Extent of the compliance ellipsoid along a unit direction.

    Pass the positional rows of the compliance matrix (3 x 6) together
    with the matching rows of its q-Hessian pages.
    """
    nu = check_direction(direction)
    gram = comp @ comp.T
    if np.linalg.cond(gram) > TOL.singular_cond:
        raise SingularConfigurationError("compliance ellipsoid matrix is singular")
    y = _gram_solve(gram, nu)
    x = float(nu @ y)
    value = x**-0.5
    if comp_pages is None:
        return ManipulabilityReport(value=value)
    nq = comp_pages.shape[2]
    grad = np.empty(nq)
    for i in range(nq):
        dgram = comp_pages[:, :, i] @ comp.T
        dgram = dgram + dgram.T
        grad[i] = 0.5 * x**-1.5 * float(y @ dgram @ y)
    return ManipulabilityReport(value=value, gradient=grad)
