"""Kinematic controllers: weighted resolved rates, damped least squares,
and task-specific gradient projection, plus the joint-limit weighting."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tubes as tb
from .liegroup import TOL

W_SATURATION = 1e8
ALPHA_RATE_CAP = 2.0       # rad/s per rotary joint
BETA_RATE_CAP = 0.02       # m/s per translation joint


@dataclass
class ControlStep:
    """Joint velocity command with solver diagnostics."""

    qdot: np.ndarray
    task_residual: float = 0.0
    null_norm: float = 0.0
    alpha: float = 0.0
    cond: float = 0.0
    flags: list = field(default_factory=list)


def joint_limit_weights(q, tubes):
    """Diagonal of the adaptive weight matrix and its q-derivatives.

    Rotary joints keep weight 1; each translation joint carries a weight
    that grows without bound as the tube's exposed length approaches its
    limits and equals 1 at the midpoint.  Returns (weights (2n,),
    dweights_dq (2n, 2n)).
    """
    n = tubes.n
    gam = tb.exposed_lengths(q, tubes)
    low, high = tubes.gamma_min, tubes.gamma_max
    weights = np.ones(2 * n)
    dw = np.zeros((2 * n, 2 * n))
    for i in range(n):
        row = 2 * i + 1
        if gam[i] <= low[i] or gam[i] >= high[i]:
            warnings.warn(
                f"exposed length of tube {i + 1} at or outside its limits; "
                "weight saturated", RuntimeWarning, stacklevel=2,
            )
            weights[row] = W_SATURATION
            continue
        span = high[i] - low[i]
        mid = 0.5 * (low[i] + high[i])
        p = (high[i] - gam[i]) ** 2 * (gam[i] - low[i]) ** 2
        h = span**2 * (gam[i] - mid) / (2.0 * p)
        weights[row] = 1.0 + abs(h)
        dp = (-2.0 * (high[i] - gam[i]) * (gam[i] - low[i]) ** 2
              + 2.0 * (high[i] - gam[i]) ** 2 * (gam[i] - low[i]))
        dh = span**2 * (p - (gam[i] - mid) * dp) / (2.0 * p**2)
        dw_dgam = np.sign(h) * dh
        dw[row, row] += dw_dgam          # d gamma_i / d beta_i = +1
        if i + 1 < n:
            dw[row, 2 * (i + 1) + 1] -= dw_dgam
    return weights, dw


def stack_tasks(tasks):
    """Stack (jacobian, desired-rate) pairs into one augmented system."""
    mats = [np.atleast_2d(j) for j, _ in tasks]
    vecs = [np.atleast_1d(x) for _, x in tasks]
    return np.vstack(mats), np.concatenate(vecs)


def rr_step(j_stack, xi_stack, weights):
    """Weighted resolved-rates: the q-dot of minimum weighted norm that
    satisfies every stacked task row exactly (least-residual fallback on
    rank deficiency, flagged)."""
    winv = 1.0 / np.asarray(weights, dtype=float)
    a = (j_stack * winv[None, :]) @ j_stack.T
    cond = float(np.linalg.cond(a))
    flags = []
    if cond < TOL.singular_cond:
        lam = np.linalg.solve(a, xi_stack)
        qdot = (j_stack.T * winv[:, None]) @ lam
    else:
        flags.append("rank_deficient")
        inv_sqrt = np.sqrt(winv)
        qdot = inv_sqrt * (np.linalg.pinv(j_stack * inv_sqrt[None, :]) @ xi_stack)
    residual = float(np.linalg.norm(j_stack @ qdot - xi_stack))
    return ControlStep(qdot=qdot, task_residual=residual, cond=cond, flags=flags)


def null_projector(j_stack, weights):
    """I - W^-1 J^T (J W^-1 J^T)^-1 J; annihilated by J on the left."""
    nq = len(weights)
    if j_stack is None or j_stack.size == 0:
        return np.eye(nq)
    winv = 1.0 / np.asarray(weights, dtype=float)
    a = (j_stack * winv[None, :]) @ j_stack.T
    return np.eye(nq) - (j_stack.T * winv[:, None]) @ np.linalg.solve(a, j_stack)


def alpha_policy(null_dir, qdot_task, alpha_max=1.0e6, speed_fraction=0.5,
                 floor=1e-3, ceiling=0.005):
    """Gain for the null-space term.

    The null-space joint speed is held below a fraction of the task joint
    speed, floored so optimization continues when tracking is quiet and
    ceilinged so a large tracking correction cannot hand the null-space
    term enough authority to degrade tracking further (that coupling is
    a positive feedback loop).  The gain ceiling is large on purpose: the
    speed cap is the operative bound, and a unit ceiling would freeze the
    step whenever the index gradient is numerically small (the ellipsoid
    volume of a meter-scale robot is ~1e-6)."""
    norm = float(np.linalg.norm(null_dir))
    if norm < 1e-12:
        return 0.0
    cap = max(speed_fraction * float(np.linalg.norm(qdot_task)), floor)
    cap = min(cap, ceiling)
    return min(alpha_max, cap / norm)


def tsgp_step(j_stack, xi_stack, weights, gradient, direction=1.0,
              alpha_max=1.0e6, null_speed_cap=None):
    """Task-specific gradient projection: resolved rates plus a scaled
    gradient step projected into the task null space.

    direction +1 ascends the performance index, -1 descends.  A missing
    gradient falls back to the pure tracking step (alpha = 0).
    """
    weights = np.asarray(weights, dtype=float)
    if j_stack is None or j_stack.size == 0:
        base = ControlStep(qdot=np.zeros(len(weights)))
        proj = np.eye(len(weights))
    else:
        base = rr_step(j_stack, xi_stack, weights)
        proj = null_projector(j_stack, weights)
    if gradient is None or "rank_deficient" in base.flags:
        base.flags.append("null_step_skipped")
        return base
    null_dir = proj @ (gradient / weights)
    if null_speed_cap is not None:
        alpha = alpha_policy(null_dir, base.qdot, alpha_max=alpha_max,
                             ceiling=null_speed_cap)
    else:
        alpha = alpha_policy(null_dir, base.qdot, alpha_max=alpha_max)
    qdot = base.qdot + direction * alpha * null_dir
    return ControlStep(
        qdot=qdot,
        task_residual=float(np.linalg.norm(j_stack @ qdot - xi_stack))
        if j_stack is not None and j_stack.size else 0.0,
        null_norm=float(alpha * np.linalg.norm(null_dir)),
        alpha=direction * alpha,
        cond=base.cond,
        flags=base.flags,
    )


def dls_step(jac, pdot_desired, weights, wt_gain=1.0, damping=0.001, joint_gain=0.001):
    """Damped least squares on the positional Jacobian.

    Minimizes the tracking error in the metric wt_gain*I plus Tikhonov
    terms damping*I and joint_gain*W(q).
    """
    nq = jac.shape[1]
    wt = wt_gain * np.eye(jac.shape[0])
    reg = damping * np.eye(nq) + joint_gain * np.diag(weights)
    a = jac.T @ wt @ jac + reg
    qdot = np.linalg.solve(a, jac.T @ wt @ pdot_desired)
    return ControlStep(
        qdot=qdot,
        task_residual=float(np.linalg.norm(jac @ qdot - pdot_desired)),
        cond=float(np.linalg.cond(a)),
    )


def cap_joint_rates(qdot, alpha_cap=ALPHA_RATE_CAP, beta_cap=BETA_RATE_CAP):
    """Uniformly scale q-dot so no joint exceeds its rate cap; direction
    is preserved."""
    qdot = np.asarray(qdot, dtype=float)
    scale = 1.0
    a_max = float(np.max(np.abs(qdot[0::2]))) if qdot.size else 0.0
    b_max = float(np.max(np.abs(qdot[1::2]))) if qdot.size else 0.0
    if a_max > alpha_cap:
        scale = min(scale, alpha_cap / a_max)
    if b_max > beta_cap:
        scale = min(scale, beta_cap / b_max)
    return qdot * scale, scale
