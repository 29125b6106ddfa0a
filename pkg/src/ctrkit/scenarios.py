"""Trajectory-tracking simulation scenarios and the Hessian benchmark.

Three experiments exercise the controllers on the default three-tube
robot: free-space tracking of a square path while maximizing the
weighted velocity manipulability, obstacle avoidance with nearest-point
constraint rows while maximizing an oriented body manipulability, and
tracking under a constant tip force while minimizing the directed
compliance.  Each run is deterministic for a given configuration.
"""

import csv
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import control as ct
from . import derivprop as dp
from . import manipulability as mp
from . import model as md
from . import tubes as tb
from .errors import ConvergenceError, CtrError, InvalidConfigurationError

CONTROLLERS = ("rr", "dls", "tsgp")


@dataclass
class ScenarioConfig:
    """Configuration shared by the scenario runners; SI units throughout."""

    scenario: int = 1
    controller: str = None            # None runs all three
    tubes: object = None              # TubeSet; default set when None
    dt_s: float = 0.5
    steps: int = None                 # None follows the full waypoint list
    seed: int = 0
    speed_cap_m_s: float = 0.02
    waypoint_spacing_m: float = 1.0e-3
    # null-space speed fades to zero as the tracking error approaches
    # this gate, so the secondary objective never outruns the primary
    null_gate_m: float = 0.004
    null_speed_ceiling: float = 0.01
    # scenario 1
    square_side_m: float = 0.03
    square_center_offset_m: tuple = (0.016, 0.0, 0.0)
    # scenario 2
    line_length_m: float = 0.04
    obstacle_dims_m: tuple = (0.02, 0.02, 0.04)
    obstacle_offset_m: tuple = (-0.002, 0.0201, -0.0285)
    obstacle_grid_m: float = 1.0e-3
    d_on_m: float = 0.005
    v_avoid_m_s: float = 0.005
    # per-joint slew caps used inside the stepping loop; tighter than the
    # controller-level rate caps so one 0.5 s step stays in the locally
    # linear regime
    alpha_rate_cap: float = 0.4
    beta_rate_cap: float = 0.01
    # scenario 3
    force_n: tuple = (0.0, 0.0, -0.25)
    rise_length_m: float = 0.04
    start_alpha_rad: tuple = (0.0, 0.9, -0.9)

    def resolved_tubes(self):
        return self.tubes if self.tubes is not None else tb.TubeSet.default()

    def controllers(self):
        return (self.controller,) if self.controller else CONTROLLERS


def home_actuation(tubes, alpha=None):
    """Default retractions, aligned tubes unless rotations are given."""
    del tubes
    if alpha is None:
        alpha = [0.0, 0.0, 0.0]
    return tb.pack_q(alpha, [-0.4, -0.18, -0.06])


def resample_polyline(points, spacing):
    """Waypoints along a polyline at a fixed spacing (endpoints kept)."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    targets = np.arange(spacing, total + 0.5 * spacing, spacing)
    out = []
    for t in targets:
        t = min(t, total)
        i = int(np.searchsorted(cum, t, side="right") - 1)
        i = min(i, len(seg) - 1)
        frac = (t - cum[i]) / seg[i] if seg[i] > 0 else 0.0
        out.append(pts[i] + frac * (pts[i + 1] - pts[i]))
    return np.array(out)


def square_waypoints(center, side, spacing, start=None):
    """One full lap of an axis-aligned square in the plane normal to z.

    The lap begins at the midpoint of the left edge (nearest to the robot
    home tip when the center is offset in +x) and runs through the four
    corners; ``start`` prepends an approach segment from that point.
    """
    half = 0.5 * side
    c = np.asarray(center, dtype=float)
    path = [
        c + np.array([-half, 0.0, 0.0]),
        c + np.array([-half, -half, 0.0]),
        c + np.array([half, -half, 0.0]),
        c + np.array([half, half, 0.0]),
        c + np.array([-half, half, 0.0]),
        c + np.array([-half, 0.0, 0.0]),
    ]
    if start is not None:
        path = [np.asarray(start, dtype=float)] + path
    return resample_polyline(path, spacing)


def line_waypoints(start, direction, length, spacing):
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return resample_polyline(
        [np.asarray(start, dtype=float), np.asarray(start) + length * d], spacing
    )


def cuboid_surface_cloud(center, dims, spacing):
    """Point cloud sampling all six faces of an axis-aligned cuboid."""
    c = np.asarray(center, dtype=float)
    h = 0.5 * np.asarray(dims, dtype=float)
    axes = [np.arange(-h[k], h[k] + 0.5 * spacing, spacing) for k in range(3)]
    pts = []
    for k in range(3):
        u, v = (k + 1) % 3, (k + 2) % 3
        uu, vv = np.meshgrid(axes[u], axes[v], indexing="ij")
        for sgn in (-1.0, 1.0):
            face = np.empty((uu.size, 3))
            face[:, k] = sgn * h[k]
            face[:, u] = uu.ravel()
            face[:, v] = vv.ravel()
            pts.append(face)
    return c + np.vstack(pts)


def box_signed_distance(p, center, dims):
    """Signed distance to an axis-aligned box (negative inside)."""
    d = np.abs(np.asarray(p, dtype=float) - center) - 0.5 * np.asarray(dims)
    outside = float(np.linalg.norm(np.maximum(d, 0.0)))
    inside = float(min(np.max(d), 0.0))
    return outside + inside


@dataclass
class ScenarioLog:
    """Per-step records of one controller run."""

    scenario: int
    controller: str
    n_tubes: int
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def columns(self):
        n = self.n_tubes
        cols = ["step", "t_s"]
        for i in range(1, n + 1):
            cols += [f"alpha{i}_rad", f"beta{i}_m"]
        cols += ["tip_x_m", "tip_y_m", "tip_z_m", "err_m", "mu", "obstacle_dist_m"]
        for i in range(1, n + 1):
            cols += [f"qd_alpha{i}_rad_s", f"qd_beta{i}_m_s"]
        cols += ["alpha_gain", "newton_iters"]
        return cols

    def add(self, step, t, q, tip, err, mu, dist, qdot, alpha, iters):
        row = [step, t, *q, *tip, err, mu, dist, *qdot, alpha, iters]
        self.rows.append(row)

    def column(self, name):
        idx = self.columns().index(name)
        return np.array([row[idx] for row in self.rows], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns())
            for row in self.rows:
                writer.writerow([_fmt(v) for v in row])

    def summary(self):
        if not self.rows:
            return {
                "scenario": self.scenario, "controller": self.controller,
                "steps": 0, "failures": len(self.failures),
            }
        err = self.column("err_m")
        mu = self.column("mu")
        dist = self.column("obstacle_dist_m")
        out = {
            "scenario": self.scenario,
            "controller": self.controller,
            "steps": len(self.rows),
            "mean_err_m": float(np.mean(err)),
            "max_err_m": float(np.max(err)),
            "final_err_m": float(err[-1]),
            "mean_mu": float(np.nanmean(mu)) if np.any(np.isfinite(mu)) else None,
            "min_obstacle_dist_m": float(np.nanmin(dist))
            if np.any(np.isfinite(dist)) else None,
            "failures": len(self.failures),
        }
        return out


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _capped_rate(target, tip, dt, cap):
    rate = (np.asarray(target) - tip) / dt
    speed = float(np.linalg.norm(rate))
    if speed > cap:
        rate *= cap / speed
    return rate


def _solve_state(q, w, tubes, guess, order):
    sol = dp.kinematics(q, w, tubes, guess=guess, order=order)
    return sol


def clamp_exposure(q, tubes, margin=1.0e-3):
    """Project the translations back inside the exposure limits.

    Actuator-level guard: the hardware cannot telescope a tube past its
    neighbor, so the simulation keeps every exposed length a margin away
    from its limits regardless of what the controller asked for.
    """
    gam = tb.exposed_lengths(q, tubes)
    lo = tubes.gamma_min + margin
    hi = tubes.gamma_max - margin
    clipped = np.clip(gam, lo, hi)
    if np.allclose(clipped, gam):
        return q
    ends = np.cumsum(clipped[::-1])[::-1]
    beta = np.minimum(ends - tubes.lengths, 0.0)
    out = q.copy()
    out[1::2] = beta
    return out


def _perpendicular(vec):
    """Any unit vector perpendicular to vec."""
    basis = np.eye(3)
    k = int(np.argmin(np.abs(vec)))
    out = np.cross(vec, basis[k])
    return out / np.linalg.norm(out)


def run_scenario(cfg):
    """Dispatch on cfg.scenario; returns {controller: ScenarioLog}."""
    if cfg.scenario == 1:
        return run_scenario1(cfg)
    if cfg.scenario == 2:
        return run_scenario2(cfg)
    if cfg.scenario == 3:
        return run_scenario3(cfg)
    raise InvalidConfigurationError(f"unknown scenario {cfg.scenario}")


def _track_loop(cfg, tubes, waypoints, w, controller, objective,
                extra_tasks=None, w_plant=None, q0=None):
    """Shared stepping loop.

    The controller plans on the model wrench ``w``; when ``w_plant``
    differs, the simulated robot carries that wrench instead and the
    controller dead-reckons: its believed tip is the model tip plus a
    constant offset calibrated at the start, so the un-modeled part of
    the load acts as a disturbance whose drift the controller cannot see.

    objective(sol, weights, dw, state) -> (gradient, direction, mu_value)
    for the TSGP null-space term; also used to log mu for the others.
    extra_tasks(sol, state) -> (list of (jac, rate) rows, info dict) adds
    scenario-specific constraint rows.
    """
    n = tubes.n
    log = ScenarioLog(scenario=cfg.scenario, controller=controller, n_tubes=n)
    q = home_actuation(tubes).copy() if q0 is None else np.array(q0, dtype=float)
    steps = len(waypoints) if cfg.steps is None else min(cfg.steps, len(waypoints))
    order = 2 if controller == "tsgp" else 1
    separate_plant = w_plant is not None and not np.array_equal(w_plant, w)
    try:
        sol = _solve_state(q, w, tubes, None, order)
        if separate_plant:
            plant = md.solve_bvp(q, w_plant, tubes)
            offset = plant.g_tip[:3, 3] - sol.g_tip[:3, 3]
        else:
            plant = None
            offset = np.zeros(3)
    except (CtrError, np.linalg.LinAlgError) as exc:
        log.failures.append((0, str(exc)))
        return log
    state = {}
    for k in range(steps):
        target = waypoints[k]
        believed_tip = sol.g_tip[:3, 3] + offset
        weights, dw = ct.joint_limit_weights(q, tubes)
        rate = _capped_rate(target, believed_tip, cfg.dt_s, cfg.speed_cap_m_s)
        jac_pos, _ = dp.position_rows(sol.jacobian, sol.g_tip[:3, 3])
        tasks = [(jac_pos, rate)]
        info = {"dist": math.nan}
        if extra_tasks is not None:
            rows, info = extra_tasks(sol, state)
            if controller in ("rr", "tsgp"):
                tasks.extend(rows)
        grad, direction, mu_val = objective(sol, weights, dw, state)
        err_now = float(np.linalg.norm(target - believed_tip))
        throttle = max(0.0, 1.0 - err_now / cfg.null_gate_m)
        if throttle == 0.0:
            grad = None
        j_stack, xi_stack = ct.stack_tasks(tasks)
        if controller == "rr":
            step = ct.rr_step(j_stack, xi_stack, weights)
        elif controller == "dls":
            step = ct.dls_step(jac_pos, rate, weights)
        else:
            step = ct.tsgp_step(j_stack, xi_stack, weights, grad, direction,
                                null_speed_cap=cfg.null_speed_ceiling * throttle)
        qdot, _ = ct.cap_joint_rates(step.qdot, cfg.alpha_rate_cap,
                                      cfg.beta_rate_cap)
        q = clamp_exposure(q + cfg.dt_s * qdot, tubes)
        try:
            sol = _solve_state(q, w, tubes, sol.y_u0, order)
            if separate_plant:
                plant = md.solve_bvp(q, w_plant, tubes, guess=plant.y_u0)
        except (CtrError, np.linalg.LinAlgError) as exc:
            log.failures.append((k, str(exc)))
            break
        true_tip = plant.g_tip[:3, 3] if separate_plant else sol.g_tip[:3, 3]
        log.add(
            k, (k + 1) * cfg.dt_s, q, true_tip,
            float(np.linalg.norm(true_tip - target)), mu_val, info["dist"],
            qdot, step.alpha, sol.iterations,
        )
    return log


def run_scenario1(cfg):
    """Square tracking in free space; TSGP ascends the weighted VMI."""
    tubes = cfg.resolved_tubes()
    w = np.zeros(6)
    q0 = home_actuation(tubes)
    base = md.solve_bvp(q0, w, tubes)
    center = base.g_tip[:3, 3] + np.asarray(cfg.square_center_offset_m)
    waypoints = square_waypoints(center, cfg.square_side_m, cfg.waypoint_spacing_m,
                                 start=base.g_tip[:3, 3])

    def objective(sol, weights, dw, state):
        # The tracked task is positional, so the index is the volume of
        # the weighted positional ellipsoid; the full six-row volume can
        # grow while the positional conditioning collapses.
        jac_pos, pos_pages = dp.positional_jacobian(sol)
        j_w, pages = mp.weighted_jacobian(jac_pos, weights, pos_pages, dw)
        rep = mp.vmi(j_w, pages)
        return rep.gradient, 1.0, rep.value

    out = {}
    for controller in cfg.controllers():
        out[controller] = _track_loop(cfg, tubes, waypoints, w, controller, objective)
    return out


def run_scenario2(cfg):
    """Straight-line tracking past a cuboid obstacle.

    The nearest backbone point to the obstacle cloud defines the point of
    interest; within the activation distance two constraint rows command a
    sideward escape velocity and zero approach velocity.  TSGP maximizes
    the oriented manipulability of that point weighted by closeness.
    """
    tubes = cfg.resolved_tubes()
    w = np.zeros(6)
    q0 = home_actuation(tubes)
    base = md.solve_bvp(q0, w, tubes)
    tip0 = base.g_tip[:3, 3]
    waypoints = line_waypoints(tip0, [1.0, 0.0, 0.0], cfg.line_length_m,
                               cfg.waypoint_spacing_m)
    center = tip0 + 0.5 * cfg.line_length_m * np.array([1.0, 0.0, 0.0])
    center = center + np.asarray(cfg.obstacle_offset_m)
    cloud = cuboid_surface_cloud(center, cfg.obstacle_dims_m, cfg.obstacle_grid_m)
    tree = cKDTree(cloud)

    def nearest_point(sol, state):
        backbone = md.integrate_ivp(
            sol.q, w, sol.y_u0, tubes,
            options=md.IntegrateOptions(sample_ds=1.0e-3),
        )
        dists, idx = tree.query(backbone.positions)
        j = int(np.argmin(dists))
        p_body = backbone.positions[j]
        signed = box_signed_distance(p_body, center, cfg.obstacle_dims_m)
        k_hat = p_body - cloud[idx[j]]
        nk = np.linalg.norm(k_hat)
        k_hat = k_hat / nk if nk > 1e-12 else np.array([0.0, 0.0, 1.0])
        tangent = backbone.rotations[j] @ np.array([0.0, 0.0, 1.0])
        rho = np.cross(tangent, k_hat)
        nr = np.linalg.norm(rho)
        degenerate = nr < 1e-6
        rho = _perpendicular(k_hat) if degenerate else rho / nr
        state.update({
            "s_star": float(backbone.s[j]), "k_hat": k_hat, "rho": rho,
            "dist": float(signed), "cloud_dist": float(dists[j]),
            "degenerate": degenerate,
        })
        return state

    def body_point_jacobian(sol, state):
        need_hess = sol.jac_hessian is not None
        body = dp.body_jacobian_at(
            state["s_star"], sol.q, w, tubes, sol.y_u0,
            sol.boundary_jac, sol.boundary_hess if need_hess else None,
        )
        jac6 = body[0]
        run = body[-1]
        p_body = run.g[:3, 3]
        jac_pos, _ = dp.position_rows(jac6, p_body)
        if need_hess:
            _, pages = dp.position_rows(jac6, p_body, body[2], jac_pos)
        else:
            pages = None
        state["body_jac"] = jac_pos
        state["body_pages"] = pages

    def extra_tasks(sol, state):
        nearest_point(sol, state)
        body_point_jacobian(sol, state)
        rows = []
        if state["cloud_dist"] < cfg.d_on_m:
            # Escape speed ramps linearly from 0 at the activation
            # distance to the configured value at contact; a constant
            # command chatters across the activation boundary.
            ramp = min(max(1.0 - state["cloud_dist"] / cfg.d_on_m, 0.0), 1.0)
            rows.append((state["rho"] @ state["body_jac"], cfg.v_avoid_m_s * ramp))
            rows.append((state["k_hat"] @ state["body_jac"], 0.0))
        return rows, {"dist": state["dist"]}

    def objective(sol, weights, dw, state):
        if "body_jac" not in state:
            nearest_point(sol, state)
            body_point_jacobian(sol, state)
        c_w = float(np.clip(1.0 / max(state["cloud_dist"], 1e-6), 0.1, 10.0))
        try:
            rep = mp.whole_body_vmi(
                [(state["body_jac"], state["rho"], c_w, state["body_pages"])]
            )
        except mp.SingularConfigurationError:
            rep = mp.ManipulabilityReport(value=0.0, gradient=None)
        state.pop("body_jac", None)
        state.pop("body_pages", None)
        return rep.gradient, 1.0, rep.value

    out = {}
    for controller in cfg.controllers():
        out[controller] = _track_loop(
            cfg, tubes, waypoints, w, controller, objective, extra_tasks
        )
    return out


def run_scenario3(cfg):
    """Straight rise under a constant tip force; TSGP descends the
    compliance projected on the load direction.

    The force is an unmeasured disturbance: the simulated robot carries
    it while the controllers plan on the unloaded model, calibrated to
    the loaded tip at the start.  Trajectory deviation then equals the
    drift of the load-induced deflection, which stiffening suppresses.
    """
    tubes = cfg.resolved_tubes()
    w_plant = np.concatenate([np.asarray(cfg.force_n, dtype=float), np.zeros(3)])
    w_model = np.zeros(6)
    q0 = home_actuation(tubes, cfg.start_alpha_rad)
    base = md.solve_bvp(q0, w_plant, tubes)
    waypoints = line_waypoints(
        base.g_tip[:3, 3], [0.0, 0.0, 1.0], cfg.rise_length_m,
        cfg.waypoint_spacing_m,
    )
    force = np.asarray(cfg.force_n, dtype=float)
    f_norm = np.linalg.norm(force)
    nu = force / f_norm if f_norm > 0 else np.array([0.0, 0.0, -1.0])

    def objective(sol, weights, dw, state):
        comp_pos, pages = dp.positional_compliance(sol)
        try:
            rep = mp.oriented_compliance(comp_pos, nu, pages)
        except mp.SingularConfigurationError:
            return None, -1.0, math.nan
        return rep.gradient, -1.0, rep.value

    out = {}
    for controller in cfg.controllers():
        out[controller] = _track_loop(
            cfg, tubes, waypoints, w_model, controller, objective,
            w_plant=w_plant, q0=q0,
        )
    return out


# ---------------------------------------------------------------------------
# Hessian benchmark


@dataclass
class BenchmarkConfig:
    samples: int = 1000
    seed: int = 0
    tubes: object = None
    options: object = None            # matched integrator settings
    reference_options: object = None  # tight reference for the error column
    max_alpha_rad: float = math.pi

    def resolved_tubes(self):
        return self.tubes if self.tubes is not None else tb.TubeSet.default()


def sample_actuation(tubes, rng, max_alpha=math.pi):
    """Uniform in-limit configuration; rejects geometry violations."""
    low, high = tubes.gamma_min, tubes.gamma_max
    lengths = tubes.lengths
    for _ in range(1000):
        gam = rng.uniform(low, high)
        ends = np.cumsum(gam[::-1])[::-1]
        if np.any(ends > lengths):
            continue
        beta = ends - lengths
        alpha = rng.uniform(-max_alpha, max_alpha, tubes.n)
        return tb.pack_q(alpha, beta)
    raise InvalidConfigurationError("rejection sampling failed")


def _max_rel_err(a, b, ref_scale):
    return float(np.max(np.abs(a - b)) / ref_scale)


def run_hessian_benchmark(cfg):
    """Per-sample cost and accuracy of propagated vs finite-difference
    Hessians.

    Counts only the derivative-computation integrations: one second-order
    IVP for propagation versus 2*2n first-order IVPs for central
    differences, both at matched integrator settings.  The error column
    compares each method against a fixed-grid reference.  Returns
    (rows, summary); rows carry {method, solver_tag, cpu_seconds,
    rhs_evals, ivp_solves, max_rel_err}.
    """
    tubes = cfg.resolved_tubes()
    options = cfg.options or md.IntegrateOptions()
    ref_options = cfg.reference_options or md.FD_OPTIONS
    tag = (f"rk45({options.rtol:g}/{options.atol:g})"
           if options.method == "rk45" else f"rk4fixed({options.fixed_step:g})")
    rows = []
    failures = 0
    w = np.zeros(6)
    for i in range(cfg.samples):
        rng = np.random.Generator(np.random.Philox(key=cfg.seed + (i << 20)))
        q = sample_actuation(tubes, rng, cfg.max_alpha_rad)
        try:
            sol = md.solve_bvp(q, w, tubes, options=options)
        except CtrError:
            failures += 1
            continue

        t0 = time.process_time()
        run = dp.integrate_augmented(q, w, sol.y_u0, tubes, order=2, options=options)
        _, bmat, amat = dp.boundary_derivatives(run, w, tubes)
        prop_j, prop_c = dp.hessians(run.E_total, run.D_total, bmat, amat, tubes)
        cpu_prop = time.process_time() - t0

        t0 = time.process_time()
        fd = dp.fd_hessians(q, w, tubes, sol.y_u0, options=options)
        cpu_fd = time.process_time() - t0

        ref = dp.fd_hessians(q, w, tubes, sol.y_u0, options=ref_options)
        scale_j = float(np.max(np.abs(ref.jac_hessian)))
        scale_c = float(np.max(np.abs(ref.comp_hessian)))
        err_prop = max(
            _max_rel_err(prop_j, ref.jac_hessian, scale_j),
            _max_rel_err(prop_c, ref.comp_hessian, scale_c),
        )
        err_fd = max(
            _max_rel_err(fd.jac_hessian, ref.jac_hessian, scale_j),
            _max_rel_err(fd.comp_hessian, ref.comp_hessian, scale_c),
        )
        rows.append({
            "method": "propagation", "solver_tag": tag,
            "cpu_seconds": cpu_prop, "rhs_evals": run.nfev,
            "ivp_solves": 1, "max_rel_err": err_prop,
        })
        rows.append({
            "method": "finite_difference", "solver_tag": tag,
            "cpu_seconds": cpu_fd, "rhs_evals": fd.rhs_evals,
            "ivp_solves": fd.ivp_solves, "max_rel_err": err_fd,
        })
    prop = [r for r in rows if r["method"] == "propagation"]
    fdr = [r for r in rows if r["method"] == "finite_difference"]

    def mean(key, sel):
        return float(np.mean([r[key] for r in sel])) if sel else math.nan

    summary = {
        "samples_requested": cfg.samples,
        "samples_completed": len(prop),
        "bvp_failures": failures,
        "solver_tag": tag,
        "propagation": {k: mean(k, prop) for k in
                        ("cpu_seconds", "rhs_evals", "ivp_solves", "max_rel_err")},
        "finite_difference": {k: mean(k, fdr) for k in
                              ("cpu_seconds", "rhs_evals", "ivp_solves", "max_rel_err")},
    }
    if prop and fdr:
        summary["rhs_eval_reduction"] = 1.0 - (
            summary["propagation"]["rhs_evals"]
            / summary["finite_difference"]["rhs_evals"]
        )
        summary["cpu_ratio"] = (
            summary["finite_difference"]["cpu_seconds"]
            / summary["propagation"]["cpu_seconds"]
        )
    return rows, summary


def benchmark_rows_to_csv(rows, path):
    cols = ["method", "solver_tag", "cpu_seconds", "rhs_evals",
            "ivp_solves", "max_rel_err"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            out["cpu_seconds"] = repr(float(row["cpu_seconds"]))
            out["max_rel_err"] = repr(float(row["max_rel_err"]))
            writer.writerow(out)
