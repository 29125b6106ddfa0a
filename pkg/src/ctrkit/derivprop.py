"""Single-pass propagation of first- and second-order derivatives.

The rod IVP is augmented with the derivatives of the frame and of the
state vector with respect to the full input vector

    x = [q, F, L, y_u(0)],      N = 3 n + 8

E (6 x N) holds the spatial-twist derivatives of the frame, V (ny x N)
the state derivatives, and the rank-3 stacks D, U their derivatives in
turn.  All four jump at tube ends and curvature onsets; the jumps live
entirely in the beta column (and beta pages) of the tube owning the
breakpoint, because a breakpoint position moves one-for-one with that
tube's base translation.

The boundary residual is evaluated where each tube ends, so its
derivatives are total derivatives including the breakpoint motion.  The
engine realizes this by applying one extra "freeze" transition at the
tip, after which every row of V and U carries the total derivative of
its frozen end value and E, D carry those of the tip pose.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import model as md
from . import tubes as tb
from .errors import IllPosedModelError, IntegrationError
from .liegroup import TOL, ad6, adjoint, frame, frame_inv, hat3, project_rotation


def _cross_stack(a, b):
    """Cross product of every column/page of ``a`` (leading axis 3) with a
    fixed 3-vector ``b``; avoids np.cross axis bookkeeping in hot loops."""
    out = np.empty_like(a)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


def _hat_stack(vecs):
    """Stack of skew matrices, (m, 3) -> (m, 3, 3)."""
    m = vecs.shape[0]
    out = np.zeros((m, 3, 3))
    out[:, 0, 1] = -vecs[:, 2]
    out[:, 0, 2] = vecs[:, 1]
    out[:, 1, 0] = vecs[:, 2]
    out[:, 1, 2] = -vecs[:, 0]
    out[:, 2, 0] = -vecs[:, 1]
    out[:, 2, 1] = vecs[:, 0]
    return out


def _ad6_stack(e):
    """Twist adjoints for every column of a 6 x m block, (m, 6, 6)."""
    m = e.shape[1]
    out = np.zeros((m, 6, 6))
    uh = _hat_stack(e[3:6, :].T)
    vh = _hat_stack(e[0:3, :].T)
    out[:, 0:3, 0:3] = uh
    out[:, 0:3, 3:6] = vh
    out[:, 3:6, 3:6] = uh
    return out


def augmented_initials(q, y_u0, tubes, cols=None, order=2):
    """Exact derivatives of the base conditions w.r.t. x.

    Returns (E0, V0, D0, U0) restricted to the requested x columns; the
    second-order stacks are None for order < 2.
    """
    n = tubes.n
    lay = md.StateLayout(n)
    al = tb.alphas(q)
    be = tb.betas(q)
    uz0 = np.asarray(y_u0, dtype=float)[:n]
    nx = lay.nx
    iu = lay.xu.start

    v0 = np.zeros((lay.ny, nx))
    for ti in range(1, n):
        r = ti - 1
        v0[r, 0] = -1.0
        v0[r, 2 * ti] = 1.0
        v0[r, 1] = uz0[0]
        v0[r, 2 * ti + 1] = -uz0[ti]
        v0[r, iu] = be[0]
        v0[r, iu + ti] = -be[ti]
    for ti in range(n):
        v0[lay.uz.start + ti, iu + ti] = 1.0
    v0[lay.imx, iu + n] = 1.0
    v0[lay.imy, iu + n + 1] = 1.0

    e0 = np.zeros((6, nx))
    e0[5, 0] = 1.0
    e0[5, 1] = -uz0[0]
    e0[5, iu] = -be[0]

    d0 = u0 = None
    if order >= 2:
        u0 = np.zeros((lay.ny, nx, nx))
        for ti in range(1, n):
            r = ti - 1
            u0[r, 1, iu] += 1.0
            u0[r, iu, 1] += 1.0
            u0[r, 2 * ti + 1, iu + ti] += -1.0
            u0[r, iu + ti, 2 * ti + 1] += -1.0
        d0 = np.zeros((6, nx, nx))
        d0[5, 1, iu] = -1.0
        d0[5, iu, 1] = -1.0

    if cols is not None:
        cols = np.asarray(cols, dtype=int)
        v0 = v0[:, cols]
        e0 = e0[:, cols]
        if order >= 2:
            u0 = u0[:, cols][:, :, cols]
            d0 = d0[:, cols][:, :, cols]
    return e0, v0, d0, u0


@dataclass
class _ColumnMeta:
    cols: np.ndarray          # global x indices of the propagated columns
    f_local: list             # (local column, force axis) pairs
    l_local: list             # (local column, moment axis) pairs
    beta_local: dict          # tube index -> local column of its beta

    @classmethod
    def build(cls, cols, lay):
        f_local = [(j, int(c - lay.xf.start)) for j, c in enumerate(cols)
                   if lay.xf.start <= c < lay.xf.stop]
        l_local = [(j, int(c - lay.xl.start)) for j, c in enumerate(cols)
                   if lay.xl.start <= c < lay.xl.stop]
        beta_local = {}
        for ti in range((lay.nx - 8) // 3):
            b = lay.beta_col(ti)
            hit = np.nonzero(cols == b)[0]
            if hit.size:
                beta_local[ti] = int(hit[0])
        return cls(cols=np.asarray(cols, dtype=int), f_local=f_local,
                   l_local=l_local, beta_local=beta_local)


class _AugSystem:
    """Flattened augmented ODE system on one constant-parameter segment."""

    def __init__(self, lay, meta, order, wrench):
        self.lay = lay
        self.meta = meta
        self.order = order
        self.w = wrench
        self.force = wrench[0:3]
        self.has_force = bool(np.any(self.force))
        ny = lay.ny
        m = len(meta.cols) if order >= 1 else 0
        self.m = m
        sizes = [9, 3, ny]
        if order >= 1:
            sizes += [6 * m, ny * m]
        if order >= 2:
            sizes += [6 * m * m, ny * m * m]
        self.offsets = np.cumsum([0] + sizes)
        self.size = int(self.offsets[-1])

    def pack(self, r, p, y, e=None, v=None, d=None, u=None):
        parts = [r.ravel(), p, y]
        if self.order >= 1:
            parts += [e.ravel(), v.ravel()]
        if self.order >= 2:
            parts += [d.ravel(), u.ravel()]
        return np.concatenate(parts)

    def unpack(self, vec):
        o = self.offsets
        ny, m = self.lay.ny, self.m
        r = vec[o[0]:o[1]].reshape(3, 3)
        p = vec[o[1]:o[2]]
        y = vec[o[2]:o[3]]
        e = v = d = u = None
        if self.order >= 1:
            e = vec[o[3]:o[4]].reshape(6, m)
            v = vec[o[4]:o[5]].reshape(ny, m)
        if self.order >= 2:
            d = vec[o[5]:o[6]].reshape(6, m, m)
            u = vec[o[6]:o[7]].reshape(ny, m, m)
        return r, p, y, e, v, d, u

    def _first_order_slabs(self, fields, r, adg, e, v):
        """E' and V' for the current column set."""
        ep = adg @ (fields.zy @ v)
        vp = fields.fy @ v
        for lc, axis in self.meta.f_local:
            vp[:, lc] += fields.fxf[:, axis]
        if self.has_force:
            rtc = r.T @ _cross_stack(e[3:6, :], self.force)
            vp[self.lay.imx, :] += -rtc[1, :]
            vp[self.lay.imy, :] += rtc[0, :]
        return ep, vp

    def rhs(self, s, vec, params):
        del s
        lay = self.lay
        ny = lay.ny
        m = self.m
        r, p, y, e, v, d, u = self.unpack(vec)
        fields = md.RodFields(y, r, self.w, params, lay, order=self.order)
        dr = r @ hat3(fields.u1)
        dp = r[:, 2].copy()
        out = [dr.ravel(), dp, fields.f]
        if self.order >= 1:
            adg = adjoint(frame(r, p))
            ep, vp = self._first_order_slabs(fields, r, adg, e, v)
            out += [ep.ravel(), vp.ravel()]
        if self.order >= 2:
            ad_stack = _ad6_stack(e)
            dp_t = np.matmul(ad_stack, ep).transpose(1, 2, 0)
            zu = (fields.zy @ u.reshape(ny, m * m)).reshape(6, m, m)
            if lay.n > 1:
                vth = v[: lay.n - 1, :]
                pairs = vth[:, :, None] * vth[:, None, :]
                zu[3] += np.tensordot(fields.zyy[0], pairs, axes=(0, 0))
                zu[4] += np.tensordot(fields.zyy[1], pairs, axes=(0, 0))
            dp_t += (adg @ zu.reshape(6, m * m)).reshape(6, m, m)
            up = (fields.fy @ u.reshape(ny, m * m)).reshape(ny, m, m)
            m1 = (fields.fyy.reshape(ny * ny, ny) @ v).reshape(ny, ny, m)
            up += np.matmul(m1.transpose(0, 2, 1), v).transpose(0, 2, 1)
            om = e[3:6, :]
            if self.has_force:
                c1 = _cross_stack(d[3:6, :, :], self.force)
                inner = _cross_stack(om, self.force)        # omega_k x F
                c2 = np.empty((3, m, m))
                c2[0] = np.outer(inner[2], om[1]) - np.outer(inner[1], om[2])
                c2[1] = np.outer(inner[0], om[2]) - np.outer(inner[2], om[0])
                c2[2] = np.outer(inner[1], om[0]) - np.outer(inner[0], om[1])
                rx = (r.T @ (c1 - c2).reshape(3, m * m)).reshape(3, m, m)
                up[lay.imx, :, :] += -rx[1]
                up[lay.imy, :, :] += rx[0]
            # Mixed force/rotation second derivatives survive at zero force.
            for lc, axis in self.meta.f_local:
                unit = np.zeros(3)
                unit[axis] = 1.0
                rtw = r.T @ _cross_stack(om, unit)
                up[lay.imx, :, lc] += -rtw[1, :]
                up[lay.imy, :, lc] += rtw[0, :]
                up[lay.imx, lc, :] += -rtw[1, :]
                up[lay.imy, lc, :] += rtw[0, :]
            out += [dp_t.ravel(), up.ravel()]
        return np.concatenate(out)

    def transition(self, vec, params_minus, params_plus, owner):
        """Jump the derivative blocks across one breakpoint kind.

        params_plus None encodes the freeze transition at the tip where
        nothing exists on the far side.
        """
        bloc = self.meta.beta_local.get(owner)
        if self.order < 1 or bloc is None:
            return vec
        lay = self.lay
        r, p, y, e, v, d, u = self.unpack(vec)
        adg = adjoint(frame(r, p))
        fm = md.RodFields(y, r, self.w, params_minus, lay, order=self.order)
        fp = None
        if params_plus is not None:
            fp = md.RodFields(y, r, self.w, params_plus, lay, order=self.order)

        zeta_p = fp.zeta if fp else np.zeros(6)
        f_p = fp.f if fp else np.zeros(lay.ny)
        de = adg @ (fm.zeta - zeta_p)
        e_new = e.copy()
        v_new = v.copy()
        e_new[:, bloc] += de
        v_new[:, bloc] += fm.f - f_p
        if self.order < 2:
            return self.pack(r, p, y, e_new, v_new)

        ep_m, vp_m = self._first_order_slabs(fm, r, adg, e, v)
        if fp is not None:
            ep_p, vp_p = self._first_order_slabs(fp, r, adg, e_new, v_new)
        else:
            ep_p = np.zeros_like(ep_m)
            vp_p = np.zeros_like(vp_m)
        dep = ep_m - ep_p
        dvp = vp_m - vp_p

        def s_curvature(fields):
            """d/ds of the state RHS within a segment (params constant)."""
            yss = fields.fy @ fields.f
            if self.has_force:
                cr = np.cross(fields.u1, r.T @ self.force)
                yss[lay.imx] += -cr[1]
                yss[lay.imy] += cr[0]
            return yss

        yss_m = s_curvature(fm)
        zs_m = fm.zy @ fm.f
        if fp is not None:
            yss_p = s_curvature(fp)
            zs_p = fp.zy @ fp.f
        else:
            yss_p = np.zeros(lay.ny)
            zs_p = np.zeros(6)

        u_new = u.copy()
        u_new[:, :, bloc] += dvp
        u_new[:, bloc, :] += dvp
        u_new[:, bloc, bloc] += yss_m - yss_p

        d_new = d.copy()
        ad_stack = _ad6_stack(e)                     # adjoints of the pre-jump twists
        ad_de = np.einsum("rab,b->ar", ad_stack, de)
        d_new[:, :, bloc] += dep
        d_new[:, bloc, :] += dep + ad_de
        d_new[:, bloc, bloc] += ad6(adg @ fm.zeta) @ de + adg @ (zs_m - zs_p)
        return self.pack(r, p, y, e_new, v_new, d_new, u_new)


@dataclass
class PropagationRun:
    """Raw result of one augmented integration."""

    g: np.ndarray
    y: np.ndarray
    E: np.ndarray = None
    V: np.ndarray = None
    D: np.ndarray = None
    U: np.ndarray = None
    E_total: np.ndarray = None
    V_total: np.ndarray = None
    D_total: np.ndarray = None
    U_total: np.ndarray = None
    cols: np.ndarray = None
    events: list = None
    sample_s: np.ndarray = None
    sample_p: np.ndarray = None
    sample_r: np.ndarray = None
    sample_y: np.ndarray = None
    nfev: int = 0
    s_end: float = 0.0


def _rk4_fixed(fun, lo, hi, y0, step, t_eval):
    """Classic RK4 on a uniform grid; returns (samples, y_end, nfev)."""
    span = hi - lo
    nsteps = max(1, int(math.ceil(span / step)))
    h = span / nsteps
    grid = lo + h * np.arange(nsteps + 1)
    y = y0
    samples = []
    want = 0
    t_eval = np.asarray(t_eval) if t_eval is not None else None

    def record(t, state):
        nonlocal want
        if t_eval is None:
            return
        while want < len(t_eval) and t_eval[want] <= t + 1e-15:
            samples.append((t_eval[want], state))
            want += 1

    record(grid[0], y)
    nfev = 0
    for i in range(nsteps):
        t = grid[i]
        k1 = fun(t, y)
        k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nfev += 4
        record(grid[i + 1], y)
    return samples, y, nfev


def integrate_augmented(q, w, y_u0, tubes, order=0, cols=None, options=None, upto=None):
    """Integrate the (possibly augmented) rod system from base to tip.

    order 0 integrates the frame and state only; order 1 adds E and V for
    the requested x columns; order 2 adds D and U.  ``upto`` truncates the
    run at a fixed arc length (no freeze transition is applied there).
    """
    options = options or md.IntegrateOptions()
    q = np.asarray(q, dtype=float)
    w = np.zeros(6) if w is None else np.asarray(w, dtype=float)
    lay = md.StateLayout(tubes.n)
    if cols is None:
        cols = np.arange(lay.nx)
    else:
        cols = np.asarray(cols, dtype=int)
    meta = _ColumnMeta.build(cols, lay)
    sys_ = _AugSystem(lay, meta, order, w)

    bps = md.breakpoints(q, tubes)
    s_tip = bps[-1].s
    s_stop = s_tip if upto is None else float(upto)
    if not (0.0 < s_stop <= s_tip + 1e-12):
        raise IntegrationError(f"truncation point {s_stop} outside (0, {s_tip}]")
    interior = [bp for bp in bps if bp.s < s_stop - 1e-12]

    g0, y0 = md.initial_conditions(q, y_u0, tubes)
    if order >= 1:
        e0, v0, d0, u0 = augmented_initials(q, y_u0, tubes, cols=cols, order=order)
        vec = sys_.pack(g0[:3, :3], g0[:3, 3], y0, e0, v0, d0, u0)
    else:
        vec = sys_.pack(g0[:3, :3], g0[:3, 3], y0)

    edges = [0.0] + [bp.s for bp in interior] + [s_stop]
    want_samples = options.sample_ds is not None
    samples = []
    events = []
    nfev = 0
    params = None
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        if hi - lo <= 1e-14:
            params = md.active_params(0.5 * (lo + hi), q, tubes)
            continue
        params = md.active_params(0.5 * (lo + hi), q, tubes)
        t_eval = None
        if want_samples:
            ds = options.sample_ds
            inner = np.arange(lo + ds, hi - 0.25 * ds, ds)
            t_eval = np.concatenate([[lo], inner, [hi]])
        fun = lambda s, v: sys_.rhs(s, v, params)
        if options.method == "rk4fixed":
            seg_samples, vec, seg_nfev = _rk4_fixed(
                fun, lo, hi, vec, options.fixed_step, t_eval
            )
            nfev += seg_nfev
            samples.extend(seg_samples)
        else:
            sol = solve_ivp(
                fun, (lo, hi), vec, method="RK45",
                rtol=options.rtol, atol=options.atol,
                t_eval=t_eval, dense_output=False,
            )
            if not sol.success:
                raise IntegrationError(f"solver failed on [{lo}, {hi}]: {sol.message}")
            nfev += sol.nfev
            if t_eval is not None:
                samples.extend((t, sol.y[:, j]) for j, t in enumerate(sol.t))
            vec = sol.y[:, -1].copy()
        if not np.all(np.isfinite(vec)):
            raise IntegrationError(f"non-finite state at s={hi}")
        # Re-orthonormalize the rotation block between segments.
        r_seg = vec[0:9].reshape(3, 3)
        vec[0:9] = project_rotation(r_seg).ravel()

        if i + 1 < len(edges) - 1:
            bp = interior[i]
            kinds = sorted(bp.kinds, key=lambda k: 0 if k[0] == "end" else 1)
            events.append((bp.s, bp.kinds, vec[12:12 + lay.ny].copy()))
            p_mid = params
            for kind in kinds:
                p_next = md.params_after(kind, p_mid, tubes)
                vec = sys_.transition(vec, p_mid, p_next, kind[1])
                p_mid = p_next

    r_end, p_end, y_end, e_end, v_end, d_end, u_end = sys_.unpack(vec)
    run = PropagationRun(
        g=frame(r_end, p_end), y=y_end.copy(),
        E=e_end, V=v_end, D=d_end, U=u_end,
        cols=cols, events=events, nfev=nfev, s_end=s_stop,
    )
    if upto is None and order >= 1 and params is not None:
        vec_t = sys_.transition(vec, params, None, 0)
        _, _, _, e_t, v_t, d_t, u_t = sys_.unpack(vec_t)
        run.E_total, run.V_total = e_t, v_t
        run.D_total, run.U_total = d_t, u_t

    if want_samples and samples:
        run.sample_s = np.array([t for t, _ in samples])
        run.sample_r = np.array([v[0:9].reshape(3, 3) for _, v in samples])
        run.sample_p = np.array([v[9:12] for _, v in samples])
        run.sample_y = np.array([v[12:12 + lay.ny] for _, v in samples])
    return run


def shooting_residual(q, w, y_u0, tubes, options=None):
    """Boundary residual from one plain IVP."""
    run = integrate_augmented(q, w, y_u0, tubes, order=0, options=options)
    b = md.residual_from_tip(run.y, run.g[:3, :3], w, tubes)
    return b, run


def shooting_residual_jacobian(q, w, y_u0, tubes, options=None):
    """Residual and its exact Jacobian w.r.t. the unknown initials.

    Propagates first-order derivatives for the y_u(0) columns only; those
    columns carry no breakpoint jumps, which keeps the Newton iteration
    cheap.
    """
    lay = md.StateLayout(tubes.n)
    cols = np.arange(lay.xu.start, lay.xu.stop)
    run = integrate_augmented(q, w, y_u0, tubes, order=1, cols=cols, options=options)
    b, bu = boundary_derivatives(run, w, tubes)[:2]
    return b, bu, run


def boundary_derivatives(run, w, tubes):
    """Assemble (b, B) and, when second-order blocks exist, A.

    Uses the post-freeze blocks, whose rows are total derivatives of the
    per-tube end values, so the moving-endpoint terms are already in.
    """
    lay = md.StateLayout(tubes.n)
    n = tubes.n
    cols = run.cols
    m = len(cols)
    v_t = run.V_total if run.V_total is not None else run.V
    e_t = run.E_total if run.E_total is not None else run.E
    u_t = run.U_total if run.U_total is not None else run.U
    d_t = run.D_total if run.D_total is not None else run.D
    r_tip = run.g[:3, :3]
    y_tip = run.y
    moment = np.asarray(w, dtype=float)[3:6]

    b = md.residual_from_tip(y_tip, r_tip, w, tubes)

    sl = np.zeros((3, m))
    for j, c in enumerate(cols):
        if lay.xl.start <= c < lay.xl.stop:
            sl[c - lay.xl.start, j] = 1.0
    om = e_t[3:6, :]
    d_rl = -r_tip.T @ np.cross(om.T, moment).T + r_tip.T @ sl

    gj1 = tubes.torsion_stiffnesses[0]
    iu0 = lay.uz.start
    bmat = np.empty((n + 2, m))
    bmat[0, :] = gj1 * v_t[iu0, :] - d_rl[2, :]
    for i in range(1, n):
        bmat[i, :] = v_t[iu0 + i, :]
    bmat[n, :] = v_t[lay.imx, :] - d_rl[0, :]
    bmat[n + 1, :] = v_t[lay.imy, :] - d_rl[1, :]

    if u_t is None:
        return b, bmat

    ang_d = d_t[3:6, :, :]
    t1 = np.cross(ang_d.transpose(1, 2, 0), moment).transpose(2, 0, 1)
    inner = np.cross(om.T, moment)
    t2 = np.cross(om.T[:, None, :], inner[None, :, :]).transpose(2, 1, 0)
    c1 = np.cross(om.T[:, None, :], sl.T[None, :, :]).transpose(2, 0, 1)
    c2 = c1.transpose(0, 2, 1)
    d2_rl = np.einsum("ab,bkr->akr", r_tip.T, -t1 + t2 - c1 - c2)

    amat = np.empty((n + 2, m, m))
    amat[0] = gj1 * u_t[iu0] - d2_rl[2]
    for i in range(1, n):
        amat[i] = u_t[iu0 + i]
    amat[n] = u_t[lay.imx] - d2_rl[0]
    amat[n + 1] = u_t[lay.imy] - d2_rl[1]
    return b, bmat, amat


def _pinv(mat, cutoff=TOL.pinv_cutoff):
    """SVD pseudo-inverse; rejects rank deficiency below the cutoff."""
    uu, sv, vt = np.linalg.svd(mat)
    if sv[-1] <= cutoff * sv[0]:
        raise IllPosedModelError(
            f"residual Jacobian is rank deficient (singular values {sv})"
        )
    return vt.T @ np.diag(1.0 / sv) @ uu.T, float(sv[-1])


def jacobian_compliance(e_total, bmat, tubes):
    """Tip Jacobian (6 x 2n) and compliance (6 x 6) from E and B blocks."""
    lay = md.StateLayout(tubes.n)
    xw = slice(lay.xf.start, lay.xl.stop)
    bu = bmat[:, lay.xu]
    bu_inv, _ = _pinv(bu)
    jac = e_total[:, lay.xq] - e_total[:, lay.xu] @ (bu_inv @ bmat[:, lay.xq])
    comp = e_total[:, xw] - e_total[:, lay.xu] @ (bu_inv @ bmat[:, xw])
    return jac, comp


def hessians(e_total, d_total, bmat, amat, tubes):
    """Total q-derivatives of the Jacobian and of the compliance matrix.

    Returns (dqJ: 6 x 2n x 2n, dqC: 6 x 6 x 2n).
    """
    lay = md.StateLayout(tubes.n)
    xq, xu = lay.xq, lay.xu
    xw = slice(lay.xf.start, lay.xl.stop)
    bu_inv, _ = _pinv(bmat[:, xu])
    k_q = bu_inv @ bmat[:, xq]
    k_w = bu_inv @ bmat[:, xw]
    m_eu = e_total[:, xu] @ bu_inv

    def partial_pages(block_cols, k_blk):
        pages = d_total[:, block_cols, :]
        pages = pages - np.einsum("aur,uq->aqr", d_total[:, xu, :], k_blk)
        pages = pages + np.einsum("au,uvr,vq->aqr", m_eu, amat[:, xu, :], k_blk)
        pages = pages - np.einsum("au,uqr->aqr", m_eu, amat[:, block_cols, :])
        return pages

    pj = partial_pages(xq, k_q)
    pc = partial_pages(xw, k_w)
    dq_j = pj[:, :, xq] - np.einsum("aqu,uj->aqj", pj[:, :, xu], k_q)
    dq_c = pc[:, :, xq] - np.einsum("aqu,uj->aqj", pc[:, :, xu], k_q)
    return dq_j, dq_c


@dataclass
class KinematicSolution:
    """Converged model solve with first- and second-order tip derivatives."""

    q: np.ndarray
    w: np.ndarray
    y_u0: np.ndarray
    g_tip: np.ndarray
    residual: np.ndarray
    iterations: int
    jacobian: np.ndarray
    compliance: np.ndarray
    jac_hessian: np.ndarray = None
    comp_hessian: np.ndarray = None
    run: PropagationRun = None
    boundary_jac: np.ndarray = None
    boundary_hess: np.ndarray = None


def kinematics(q, w, tubes, guess=None, order=2, options=None):
    """Solve the BVP, then one augmented IVP for J, C (order 1) and their
    q-Hessians (order 2)."""
    sol = md.solve_bvp(q, w, tubes, guess=guess, options=options)
    run = integrate_augmented(q, w, sol.y_u0, tubes, order=order, options=options)
    out = boundary_derivatives(run, np.zeros(6) if w is None else w, tubes)
    bmat = out[1]
    jac, comp = jacobian_compliance(run.E_total, bmat, tubes)
    result = KinematicSolution(
        q=np.asarray(q, dtype=float),
        w=np.zeros(6) if w is None else np.asarray(w, dtype=float),
        y_u0=sol.y_u0, g_tip=run.g, residual=sol.residual,
        iterations=sol.iterations, jacobian=jac, compliance=comp,
        run=run, boundary_jac=bmat,
    )
    if order >= 2:
        amat = out[2]
        result.jac_hessian, result.comp_hessian = hessians(
            run.E_total, run.D_total, bmat, amat, tubes
        )
        result.boundary_hess = amat
    return result


def position_rows(block, point, pages=None, jac_pos=None):
    """Positional 3-row block of a twist-valued matrix.

    The translation rows of J and C are linear parts of spatial twists,
    v = p_dot - omega x p; the velocity of the material point itself is
    recovered by v + omega x p, i.e. rows[:3] - hat(p) rows[3:].  When the
    q-derivative pages are supplied, the motion of the point enters the
    chain rule through the position-Jacobian columns ``jac_pos``.
    """
    p_hat = hat3(point)
    out = block[:3, :] - p_hat @ block[3:, :]
    if pages is None:
        return out, None
    out_pages = np.empty((3, block.shape[1], pages.shape[2]))
    for r in range(pages.shape[2]):
        out_pages[:, :, r] = (
            pages[:3, :, r]
            - p_hat @ pages[3:, :, r]
            - hat3(jac_pos[:, r]) @ block[3:, :]
        )
    return out, out_pages


def positional_jacobian(solution):
    """Position Jacobian of the tip (3 x 2n) and its q-pages."""
    point = solution.g_tip[:3, 3]
    jac_pos, _ = position_rows(solution.jacobian, point)
    if solution.jac_hessian is None:
        return jac_pos, None
    return position_rows(
        solution.jacobian, point, solution.jac_hessian, jac_pos
    )


def positional_compliance(solution):
    """Position rows of the tip compliance (3 x 6) and their q-pages."""
    point = solution.g_tip[:3, 3]
    jac_pos, _ = position_rows(solution.jacobian, point)
    if solution.comp_hessian is None:
        comp_pos, _ = position_rows(solution.compliance, point)
        return comp_pos, None
    return position_rows(
        solution.compliance, point, solution.comp_hessian, jac_pos
    )


def body_jacobian_at(s_point, q, w, tubes, y_u0, bmat, amat=None, options=None):
    """Jacobian (and optionally its q-Hessian pages) of the backbone point
    at a fixed arc length, reusing boundary blocks from the full run."""
    order = 2 if amat is not None else 1
    run = integrate_augmented(
        q, w, y_u0, tubes, order=order, options=options, upto=s_point
    )
    jac, comp = jacobian_compliance(run.E, bmat, tubes)
    if amat is None:
        return jac, comp, run
    dq_j, dq_c = hessians(run.E, run.D, bmat, amat, tubes)
    return jac, comp, dq_j, dq_c, run


# ---------------------------------------------------------------------------
# Finite-difference oracles


@dataclass
class FdResult:
    jacobian: np.ndarray = None
    compliance: np.ndarray = None
    jac_hessian: np.ndarray = None
    comp_hessian: np.ndarray = None
    ivp_solves: int = 0
    rhs_evals: int = 0


def _pose_twist(g_plus, g_minus, g_base, h):
    delta = (g_plus - g_minus) @ frame_inv(g_base) / (2.0 * h)
    rot = delta[:3, :3]
    skew = 0.5 * (rot - rot.T)
    return np.concatenate([
        delta[:3, 3],
        [skew[2, 1], skew[0, 2], skew[1, 0]],
    ])


def fd_jacobian_compliance(q, w, tubes, h_q=1e-6, h_w=1e-4, options=None, guess=None):
    """Central differences of the converged tip pose over q and w.

    Every perturbed input is re-solved to boundary convergence, so the
    columns are total derivatives along the solution manifold.  Uses the
    fixed-grid integrator by default so the differences stay smooth.
    """
    options = options or md.FD_OPTIONS
    q = np.asarray(q, dtype=float)
    w = np.zeros(6) if w is None else np.asarray(w, dtype=float)
    base = md.solve_bvp(q, w, tubes, guess=guess, options=options)
    g_base = base.g_tip
    # Re-solves after 1e-6-scale perturbations converge in a step or two
    # with the base-point Jacobian, so chord iterations suffice.
    _, bu_base, _ = shooting_residual_jacobian(q, w, base.y_u0, tubes, options)
    res = FdResult(
        jacobian=np.zeros((6, q.size)), compliance=np.zeros((6, 6)),
    )

    def tip(q_i, w_i):
        sol = md.solve_bvp(q_i, w_i, tubes, guess=base.y_u0, options=options,
                           frozen_jacobian=bu_base)
        res.ivp_solves += 1
        res.rhs_evals += sol.nfev
        return sol.g_tip

    for j in range(q.size):
        dq = np.zeros(q.size)
        dq[j] = h_q
        res.jacobian[:, j] = _pose_twist(
            tip(q + dq, w), tip(q - dq, w), g_base, h_q
        )
    for j in range(6):
        dw = np.zeros(6)
        dw[j] = h_w
        res.compliance[:, j] = _pose_twist(
            tip(q, w + dw), tip(q, w - dw), g_base, h_w
        )
    return res


def fd_hessians(q, w, tubes, y_u0, h=1e-5, options=None, count_baseline=False):
    """Central differences of (J, C) along boundary-consistent directions.

    Each q direction is paired with the first-order shift of the unknown
    initials that keeps the residual at zero, so one first-order IVP per
    perturbation reproduces the total q-derivatives of J and C.
    """
    options = options or md.FD_OPTIONS
    q = np.asarray(q, dtype=float)
    w = np.zeros(6) if w is None else np.asarray(w, dtype=float)
    base_run = integrate_augmented(q, w, y_u0, tubes, order=1, options=options)
    _, bmat = boundary_derivatives(base_run, w, tubes)
    lay = md.StateLayout(tubes.n)
    bu_inv, _ = _pinv(bmat[:, lay.xu])
    shift = bu_inv @ bmat[:, lay.xq]              # d y_u0 / d q along the manifold

    nq = q.size
    res = FdResult(
        jac_hessian=np.zeros((6, nq, nq)),
        comp_hessian=np.zeros((6, 6, nq)),
    )
    if count_baseline:
        res.ivp_solves += 1
        res.rhs_evals += base_run.nfev

    def jc(q_i, yu_i):
        run = integrate_augmented(q_i, w, yu_i, tubes, order=1, options=options)
        res.ivp_solves += 1
        res.rhs_evals += run.nfev
        _, bm = boundary_derivatives(run, w, tubes)
        return jacobian_compliance(run.E_total, bm, tubes)

    for j in range(nq):
        dq = np.zeros(nq)
        dq[j] = h
        dyu = -h * shift[:, j]
        j_plus, c_plus = jc(q + dq, y_u0 + dyu)
        j_minus, c_minus = jc(q - dq, y_u0 - dyu)
        res.jac_hessian[:, :, j] = (j_plus - j_minus) / (2.0 * h)
        res.comp_hessian[:, :, j] = (c_plus - c_minus) / (2.0 * h)
    return res
