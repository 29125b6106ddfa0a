"""Cosserat-rod model of an n-tube concentric tube robot.

The rod state at arc length s is the frame g = (R, p) of the innermost
tube plus the vector

    y = [theta_2 .. theta_n, u_1z .. u_nz, mbx, mby]

holding the relative tube angles, per-tube torsional curvatures, and the
bending components of the total internal moment expressed in the first
material frame.  Tubes that have ended are kept in y at frozen values so
the state dimension never changes; their rows simply stop evolving.

Everything here is piecewise in s: tube ends and curvature onsets split
the rod into segments with constant parameters, and the integrator never
steps across a segment boundary.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tubes as tb
from .errors import (
    ConvergenceError,
    IntegrationError,
    InvalidConfigurationError,
    SingularClosureError,
)
from .liegroup import TOL, frame, rotz

_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class StateLayout:
    """Index map into the state vector y for an n-tube robot."""

    n: int

    @property
    def ny(self):
        return 2 * self.n + 1

    @property
    def th(self):
        """Rows of theta_2 .. theta_n (empty for a single tube)."""
        return slice(0, self.n - 1)

    @property
    def uz(self):
        return slice(self.n - 1, 2 * self.n - 1)

    @property
    def imx(self):
        return 2 * self.n - 1

    @property
    def imy(self):
        return 2 * self.n

    # Layout of the full input vector x = [q, F, L, y_u(0)].
    @property
    def nx(self):
        return 3 * self.n + 8

    @property
    def xq(self):
        return slice(0, 2 * self.n)

    @property
    def xf(self):
        return slice(2 * self.n, 2 * self.n + 3)

    @property
    def xl(self):
        return slice(2 * self.n + 3, 2 * self.n + 6)

    @property
    def xu(self):
        return slice(2 * self.n + 6, 3 * self.n + 8)

    def beta_col(self, tube_idx):
        """Column of beta_{tube_idx+1} in x (0-based tube index)."""
        return 2 * tube_idx + 1


@dataclass(frozen=True)
class SegmentParams:
    """Per-tube stiffness and precurvature on one constant-parameter segment.

    Inactive tubes report zero stiffness and curvature and are excluded
    from every closure sum.
    """

    ei: np.ndarray
    gj: np.ndarray
    kappa: np.ndarray
    active: np.ndarray


@dataclass(frozen=True)
class Breakpoint:
    """A parameter discontinuity along the rod.

    kinds is a tuple of ("end" | "onset", tube_index) entries; coincident
    discontinuities are merged into one breakpoint carrying several kinds.
    """

    s: float
    kinds: tuple


def breakpoints(q, tubes):
    """Sorted parameter discontinuities in (0, s_tip], tip included."""
    q = tb.validate_actuation(q, tubes)
    ends = tb.tube_ends(q, tubes)
    onsets = tb.curvature_onsets(q, tubes)
    events = []
    for i in range(tubes.n):
        events.append((ends[i], ("end", i)))
        if onsets[i] > 0.0:
            events.append((onsets[i], ("onset", i)))
    events.sort(key=lambda e: e[0])
    merged = []
    for s, kind in events:
        if merged and abs(s - merged[-1].s) <= _MERGE_TOL:
            prev = merged[-1]
            merged[-1] = Breakpoint(prev.s, prev.kinds + (kind,))
        else:
            merged.append(Breakpoint(s, (kind,)))
    return merged


def active_params(s, q, tubes):
    """Piecewise tube parameters at arc length s.

    Curvature is active on [s_onset_i, s_end_i); a tube is active while
    s < s_end_i.  Out-of-range s raises.
    """
    q = np.asarray(q, dtype=float)
    ends = tb.tube_ends(q, tubes)
    if s < 0.0 or s > ends[0]:
        raise InvalidConfigurationError(f"arc length {s} outside [0, {ends[0]}]")
    onsets = tb.curvature_onsets(q, tubes)
    active = s < ends
    ei = tubes.bending_stiffnesses * active
    gj = tubes.torsion_stiffnesses * active
    kappa = tubes.kappas * active * ((s >= onsets) & (s < ends))
    return SegmentParams(ei=ei, gj=gj, kappa=kappa, active=active)


def params_after(kind, params, tubes):
    """Parameters just past a single breakpoint kind."""
    what, i = kind
    if what == "end":
        active = params.active.copy()
        active[i] = False
        ei = params.ei.copy()
        gj = params.gj.copy()
        kappa = params.kappa.copy()
        ei[i] = 0.0
        gj[i] = 0.0
        kappa[i] = 0.0
        return SegmentParams(ei=ei, gj=gj, kappa=kappa, active=active)
    if what == "onset":
        kappa = params.kappa.copy()
        kappa[i] = tubes.kappas[i] if params.active[i] else 0.0
        return replace(params, kappa=kappa)
    raise ValueError(f"unknown breakpoint kind {what!r}")


class RodFields:
    """Closure quantities and partial derivatives of the rod ODE at one state.

    order 0 fills f and zeta only, order 1 adds the first partials needed
    for derivative propagation, order 2 the second partials.
    """

    __slots__ = (
        "f", "zeta", "u1", "mz", "u1xy", "uiy", "uix",
        "fy", "zy", "fxf", "fyy", "zyy", "kb",
    )

    def __init__(self, y, rotation, wrench, params, layout, order=0):
        n = layout.n
        kb = float(np.sum(params.ei))
        if kb <= 0.0:
            raise SingularClosureError("no active tube carries bending stiffness")
        self.kb = kb

        theta = np.zeros(n)
        theta[1:] = y[layout.th]
        c = np.cos(theta)
        s = np.sin(theta)
        uz = y[layout.uz]
        mxy = np.array([y[layout.imx], y[layout.imy]])

        kap_ei = params.kappa * params.ei
        a = (mxy + np.array([np.dot(kap_ei, c), np.dot(kap_ei, s)])) / kb
        rho = np.vstack([-s, c])          # 2 x n, row selector for u_iy
        sig = np.vstack([c, s])           # 2 x n, row selector for u_ix
        uiy = rho.T @ a
        uix = sig.T @ a
        mz = float(np.dot(params.gj, uz))
        u1 = np.array([a[0], a[1], uz[0]])

        tau = np.zeros(n)
        tors = params.gj > 0.0
        tau[tors] = kap_ei[tors] / params.gj[tors]

        force = np.asarray(wrench, dtype=float)[0:3]
        h = rotation.T @ force

        f = np.zeros(layout.ny)
        f[layout.th] = params.active[1:] * (uz[1:] - uz[0])
        f[layout.uz] = -tau * uiy
        f[layout.imx] = -a[1] * mz + uz[0] * mxy[1] + h[1]
        f[layout.imy] = -uz[0] * mxy[0] + a[0] * mz - h[0]

        zeta = np.zeros(6)
        zeta[2] = 1.0
        zeta[3:6] = u1

        self.f = f
        self.zeta = zeta
        self.u1 = u1
        self.mz = mz
        self.u1xy = a
        self.uiy = uiy
        self.uix = uix
        self.fy = None
        self.zy = None
        self.fxf = None
        self.fyy = None
        self.zyy = None
        if order < 1:
            return

        ny = layout.ny
        iu0 = layout.uz.start
        imx, imy = layout.imx, layout.imy
        # d(u1xy)/d(theta_j), tube j >= 2; zero column for ended tubes.
        ap = np.zeros((2, n))
        ap[0, 1:] = -kap_ei[1:] * s[1:] / kb
        ap[1, 1:] = kap_ei[1:] * c[1:] / kb

        fy = np.zeros((ny, ny))
        outer_active = params.active[1:].astype(float)
        idx_th = np.arange(n - 1)
        fy[idx_th, iu0 + 1 + idx_th] = outer_active
        fy[idx_th, iu0] = -outer_active
        # u_iz rows: -tau_i * d(u_iy)/dy
        fy[iu0:iu0 + n, :n - 1] = -(tau[:, None]) * (rho.T @ ap[:, 1:])
        fy[iu0 + 1 + idx_th, idx_th] += tau[1:] * uix[1:]
        fy[iu0:iu0 + n, imx] = tau * s / kb
        fy[iu0:iu0 + n, imy] = -tau * c / kb
        fy[imx, :n - 1] = -ap[1, 1:] * mz
        fy[imy, :n - 1] = ap[0, 1:] * mz
        fy[imx, iu0:iu0 + n] = -a[1] * params.gj
        fy[imy, iu0:iu0 + n] = a[0] * params.gj
        fy[imx, iu0] += mxy[1]
        fy[imy, iu0] -= mxy[0]
        fy[imx, imy] = -mz / kb + uz[0]
        fy[imy, imx] = mz / kb - uz[0]

        zy = np.zeros((6, ny))
        zy[3, : n - 1] = ap[0, 1:]
        zy[4, : n - 1] = ap[1, 1:]
        zy[3, imx] = 1.0 / kb
        zy[4, imy] = 1.0 / kb
        zy[5, iu0] = 1.0

        fxf = np.zeros((ny, 3))
        fxf[imx, :] = rotation[:, 1]
        fxf[imy, :] = -rotation[:, 0]

        self.fy = fy
        self.zy = zy
        self.fxf = fxf
        if order < 2:
            return

        # Second derivative of u1xy w.r.t. theta_j (diagonal in j).
        app = np.zeros((2, n))
        app[0, 1:] = -kap_ei[1:] * c[1:] / kb
        app[1, 1:] = -kap_ei[1:] * s[1:] / kb

        fyy = np.zeros((ny, ny, ny))
        sa = sig.T @ ap                   # sig_i . ap_j
        ra2 = rho.T @ app                 # rho_i . app_j
        for i in range(n):
            if tau[i] == 0.0:
                continue
            r_i = iu0 + i
            d = np.arange(n - 1)
            fyy[r_i, d, d] = -tau[i] * ra2[i, 1:]
            if i >= 1:
                fyy[r_i, i - 1, : n - 1] += tau[i] * sa[i, 1:]
                fyy[r_i, : n - 1, i - 1] += tau[i] * sa[i, 1:]
                fyy[r_i, i - 1, i - 1] += tau[i] * uiy[i]
                fyy[r_i, i - 1, imx] = tau[i] * c[i] / kb
                fyy[r_i, imx, i - 1] = tau[i] * c[i] / kb
                fyy[r_i, i - 1, imy] = tau[i] * s[i] / kb
                fyy[r_i, imy, i - 1] = tau[i] * s[i] / kb
        d = np.arange(n - 1)
        fyy[imx, d, d] = -app[1, 1:] * mz
        fyy[imy, d, d] = app[0, 1:] * mz
        fyy[imx, :n - 1, iu0:iu0 + n] = -np.outer(ap[1, 1:], params.gj)
        fyy[imx, iu0:iu0 + n, :n - 1] = -np.outer(params.gj, ap[1, 1:])
        fyy[imy, :n - 1, iu0:iu0 + n] = np.outer(ap[0, 1:], params.gj)
        fyy[imy, iu0:iu0 + n, :n - 1] = np.outer(params.gj, ap[0, 1:])
        vmixed = -params.gj / kb
        vmixed[0] += 1.0
        fyy[imx, iu0:iu0 + n, imy] = vmixed
        fyy[imx, imy, iu0:iu0 + n] = vmixed
        fyy[imy, iu0:iu0 + n, imx] = -vmixed
        fyy[imy, imx, iu0:iu0 + n] = -vmixed

        # zyy is diagonal in the theta block; kept as the compact 2 x (n-1)
        # stack of second derivatives of u1xy.
        self.fyy = fyy
        self.zyy = app[:, 1:]


def closure(y, params, layout):
    """Algebraic closure at one state: (m_bz, u1_xy, u_iy per tube)."""
    fields = RodFields(y, np.eye(3), np.zeros(6), params, layout, order=0)
    return fields.mz, fields.u1xy, fields.uiy


def ode_rhs(y, rotation, wrench, params, layout):
    """Right-hand side of the rod ODE: (body twist zeta, y')."""
    fields = RodFields(y, rotation, wrench, params, layout, order=0)
    return fields.zeta, fields.f


def initial_conditions(q, y_u0, tubes):
    """Base frame and state at s = 0 from the actuation and unknown initials."""
    n = tubes.n
    layout = StateLayout(n)
    al = tb.alphas(q)
    be = tb.betas(q)
    y_u0 = np.asarray(y_u0, dtype=float)
    uz0 = y_u0[:n]
    g0 = frame(rotz(al[0] - be[0] * uz0[0]), np.zeros(3))
    y0 = np.zeros(layout.ny)
    y0[layout.th] = al[1:] - al[0] - (be[1:] * uz0[1:] - be[0] * uz0[0])
    y0[layout.uz] = uz0
    y0[layout.imx] = y_u0[n]
    y0[layout.imy] = y_u0[n + 1]
    return g0, y0


def transition_y(y, kind):
    """State transition across a breakpoint.

    The frame and the full state vector are continuous; a tube end merely
    freezes that tube's rows (their derivatives vanish on the far side).
    """
    del kind
    return np.array(y, dtype=float, copy=True)


@dataclass(frozen=True)
class IntegrateOptions:
    """Integrator selection shared by every IVP in the package.

    method "rk45" is adaptive Dormand-Prince via scipy; "rk4fixed" is a
    classic fixed-grid RK4 whose output varies smoothly with the inputs,
    which makes it the right backend for finite-difference oracles.
    """

    method: str = "rk45"
    rtol: float = 1e-8
    atol: float = 1e-10
    sample_ds: float = None
    fixed_step: float = 2.5e-4

    def tighter(self, factor=1e-3):
        return replace(self, rtol=self.rtol * factor, atol=self.atol * factor)


TIGHT_OPTIONS = IntegrateOptions(rtol=1e-11, atol=1e-13)
FD_OPTIONS = IntegrateOptions(method="rk4fixed", fixed_step=1.0e-3)


@dataclass
class Backbone:
    """Dense samples of a forward solve plus the breakpoint records."""

    s: np.ndarray
    positions: np.ndarray
    rotations: np.ndarray
    states: np.ndarray
    events: list
    nfev: int

    @property
    def tip_frame(self):
        return frame(self.rotations[-1], self.positions[-1])

    @property
    def tip_position(self):
        return self.positions[-1]


def integrate_ivp(q, w, y_u0, tubes, options=None):
    """Integrate the rod from base to tip and return the sampled backbone."""
    from . import derivprop

    options = options or IntegrateOptions()
    ds = options.sample_ds if options.sample_ds is not None else 1.0e-3
    run = derivprop.integrate_augmented(
        q, w, y_u0, tubes, order=0, options=replace(options, sample_ds=ds)
    )
    return Backbone(
        s=run.sample_s,
        positions=run.sample_p,
        rotations=run.sample_r,
        states=run.sample_y,
        events=run.events,
        nfev=run.nfev,
    )


def residual_scales(tubes):
    """Per-row magnitude scales used to nondimensionalize the residual."""
    kref = max(float(np.max(tubes.kappas)), 1.0)
    ei_ref = float(np.max(tubes.bending_stiffnesses))
    gj1 = tubes.torsion_stiffnesses[0]
    return np.concatenate([
        [gj1 * kref],
        np.full(tubes.n - 1, kref),
        [ei_ref * kref, ei_ref * kref],
    ])


def residual_from_tip(y_tip, r_tip, w, tubes):
    """Boundary residual given the frozen tip state (pre-transition values)."""
    n = tubes.n
    layout = StateLayout(n)
    moment = np.asarray(w, dtype=float)[3:6]
    rl = r_tip.T @ moment
    b = np.empty(n + 2)
    b[0] = tubes.torsion_stiffnesses[0] * y_tip[layout.uz.start] - rl[2]
    b[1:n] = y_tip[layout.uz][1:]
    b[n] = y_tip[layout.imx] - rl[0]
    b[n + 1] = y_tip[layout.imy] - rl[1]
    return b


def boundary_residual(q, w, y_u0, tubes, options=None):
    """Moment-equilibrium residual of the shooting problem, dim n + 2."""
    from . import derivprop

    run = derivprop.integrate_augmented(q, w, y_u0, tubes, order=0, options=options)
    return residual_from_tip(run.y, run.g[:3, :3], w, tubes)


def residual_converged(b, tubes, tol=TOL.residual):
    scales = residual_scales(tubes)
    return bool(np.all(np.abs(b) <= tol * np.maximum(1.0, scales)))


@dataclass
class BvpSolution:
    """Outcome of the shooting solve."""

    y_u0: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool
    nfev: int
    g_tip: np.ndarray = None
    y_tip: np.ndarray = None


def solve_bvp(q, w, tubes, guess=None, options=None, max_iter=50, max_halvings=30,
              frozen_jacobian=None):
    """Shooting solve of the rod boundary value problem.

    Newton iteration on the unknown initials with the exact residual
    Jacobian from first-order derivative propagation, damped by step
    halving on the scaled residual norm.  Passing ``frozen_jacobian``
    switches to chord iterations with that matrix, which is cheap and
    sufficient for re-solves after tiny input perturbations.
    """
    from . import derivprop

    n = tubes.n
    tb.validate_actuation(q, tubes)
    w = np.zeros(6) if w is None else np.asarray(w, dtype=float)
    yu = np.zeros(n + 2) if guess is None else np.array(guess, dtype=float)
    scales = np.maximum(1.0, residual_scales(tubes))
    nfev_total = 0

    def scaled_inf(b):
        return float(np.max(np.abs(b) / scales))

    b, run = derivprop.shooting_residual(q, w, yu, tubes, options)
    nfev_total += run.nfev
    best = (scaled_inf(b), yu.copy(), b.copy())
    for it in range(max_iter):
        if residual_converged(b, tubes):
            return BvpSolution(
                y_u0=yu, residual=b, iterations=it, converged=True,
                nfev=nfev_total, g_tip=run.g, y_tip=run.y,
            )
        if frozen_jacobian is not None:
            b_j, bu = b, frozen_jacobian
        else:
            b_j, bu, run_j = derivprop.shooting_residual_jacobian(q, w, yu, tubes, options)
            nfev_total += run_j.nfev
        try:
            step = np.linalg.solve(bu, -b_j)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(bu, -b_j, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            raise ConvergenceError(
                "shooting step is not finite", best_guess=best[1],
                best_residual=best[2], iterations=it,
            )
        norm0 = scaled_inf(b)
        lam = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            trial = yu + lam * step
            b_trial, run = derivprop.shooting_residual(q, w, trial, tubes, options)
            nfev_total += run.nfev
            if np.all(np.isfinite(b_trial)) and scaled_inf(b_trial) < norm0:
                yu, b = trial, b_trial
                accepted = True
                break
            lam *= 0.5
        if scaled_inf(b) < best[0]:
            best = (scaled_inf(b), yu.copy(), b.copy())
        if not accepted:
            raise ConvergenceError(
                f"line search stalled at scaled residual {norm0:.3e}",
                best_guess=best[1], best_residual=best[2], iterations=it + 1,
            )
    if residual_converged(b, tubes):
        return BvpSolution(
            y_u0=yu, residual=b, iterations=max_iter, converged=True,
            nfev=nfev_total, g_tip=run.g, y_tip=run.y,
        )
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations "
        f"(best scaled residual {best[0]:.3e})",
        best_guess=best[1], best_residual=best[2], iterations=max_iter,
    )
