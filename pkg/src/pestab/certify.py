"""Trajectory-level certification of the decay estimates and inequalities.

Every "there exists a constant" statement is certified as a measured
constant over a declared battery; certificates record what was measured,
the tolerances used and the battery that produced them, and are
reproducible bit-for-bit from (seed, tolerance) configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DomainError, InsufficientDataError, PreconditionError,
                     ShapeError, SimulationError)
from .gains import (A_DI, B_DI, ConeGeometry, cone_geometry, di_base_gain,
                    di_gain, multi_input_gain)
from .matkit import as_matrix, expm, one_norm
from .reachability import kalman_rank
from .signals import PeClass, PwcSignal, make_duty, rescale_time
from .simcore import ClosedLoop, Trajectory, fmap_F, polar_lift, propagate, \
    propagate_batch

__all__ = [
    "Certificate",
    "decay_rate",
    "check_V_neutral",
    "estimate_eta",
    "check_F_monotone",
    "dwell_times",
    "dwell_scaling",
    "check_quadrant_V",
    "check_cs_decay",
    "comparison_final0",
    "comparison_c2",
    "chain_contraction",
    "kl_envelope",
    "envelope_holds",
    "tune",
    "weak_star_demo",
    "rescaling_identity",
    "multi_input_identity",
    "f_monotone_battery",
    "quadrant_battery",
    "cs_decay_battery",
    "chain_battery",
    "di_runs",
    "neutral_runs",
    "unit_circle_grid",
    "sphere_grid",
    "c_rho_closed_form",
]

_ENERGY_SLACK = 1e-10
_F_SLACK = 1e-9
_ETA_MARGIN = 1e-5
_KL_RATE_MARGIN = 0.05
_KL_CONST_MARGIN = 0.25


@dataclass
class Certificate:
    """Pass/fail verdict with the constants that were actually measured."""

    name: str
    passed: bool
    measured: dict
    tolerance: object
    battery: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "measured": {k: float(v) for k, v in self.measured.items()},
            "tolerance": self.tolerance,
            "battery": self.battery,
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# grids and run builders
# ---------------------------------------------------------------------------

def unit_circle_grid(m: int) -> np.ndarray:
    """m unit vectors in the plane, as columns."""
    phi = 2.0 * np.pi * np.arange(m) / m
    return np.vstack([np.cos(phi), np.sin(phi)])


def sphere_grid(n: int, m: int, seed: int = 0) -> np.ndarray:
    """m seeded unit vectors in R^n, as columns."""
    if n == 2:
        return unit_circle_grid(m)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, m))
    return g / np.linalg.norm(g, axis=0)


def neutral_runs(A, B, battery, x0_columns, horizon: float, r: float = 1.0,
                 max_step: float | None = None) -> list:
    """Closed-loop runs of the transpose-feedback loop over a battery."""
    A = as_matrix(A, square=True)
    B = as_matrix(B)
    runs = []
    for sig in battery:
        loop = ClosedLoop(A, B, -r * B.T, sig)
        runs.extend(propagate_batch(loop, 0.0, x0_columns, horizon, max_step))
    return runs


def di_runs(cls: PeClass, rho: float, k: float, lam: float, battery,
            x0_columns, horizon: float, max_step: float | None = None,
            polar: bool = True) -> list:
    """Double-integrator runs in base-gain coordinates.

    The base gain (-rho k^2/2, -k) is driven by the lam-times-faster copies
    of the battery signals (class (T/lam, mu/lam)); this is the frame in
    which the cone estimates are stated, and it maps onto the user-facing
    lam-scaled gain at class (T, mu) by the exact rescaling identity.
    """
    K = di_base_gain(rho, k)
    runs = []
    for sig in battery:
        loop = ClosedLoop(A_DI, B_DI, K, rescale_time(sig, lam))
        batch = propagate_batch(loop, 0.0, x0_columns, horizon, max_step)
        if polar:
            batch = [polar_lift(t) for t in batch]
        runs.extend(batch)
    return runs


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------

def decay_rate(traj: Trajectory, t_start: float) -> dict:
    """Least-squares fit of log||x|| ~ log C - gamma (t - t_start)."""
    mask = traj.times >= t_start
    if int(mask.sum()) < 10:
        raise InsufficientDataError("need at least 10 samples after t_start")
    t = traj.times[mask] - t_start
    nrm = traj.norms()[mask]
    if np.any(nrm <= 0.0):
        raise DomainError("trajectory reaches zero norm; nothing to fit")
    y = np.log(nrm)
    slope, intercept = np.polyfit(t, y, 1)
    residual = float(np.max(np.abs(intercept + slope * t - y)))
    return {"gamma_hat": float(-slope), "C_hat": float(math.exp(intercept)),
            "residual": residual}


def kl_envelope(trajs, names=None) -> Certificate:
    """Fit (C_hat, gamma_hat) with ||x(t)|| <= C_hat ||x0|| e^{-gamma_hat dt}
    over every sample of the batch.

    The fitted pair carries explicit margins (rate shrunk by 5%, constant
    inflated by 25%) so that it transfers to a fresh battery of the same
    class; finite batches cannot pin the extremal envelope exactly.
    """
    if len(trajs) < 1:
        raise InsufficientDataError("empty batch")
    rates = []
    culprit = None
    for i, tr in enumerate(trajs):
        nrm = tr.norms()
        n0 = nrm[0]
        if n0 <= 0.0:
            raise DomainError("zero initial state in batch")
        if not np.all(np.isfinite(nrm)) or np.max(nrm) > 1e9 * n0:
            culprit = i
            rates.append(-math.inf)
            continue
        span = tr.times[-1] - tr.times[0]
        rates.append(-math.log(nrm[-1] / n0) / span)
    min_rate = float(min(rates))
    worst = int(np.argmin(rates))
    gamma_hat = (1.0 - _KL_RATE_MARGIN) * min_rate if min_rate > 0.0 else min_rate
    c_tight = 0.0
    if math.isfinite(gamma_hat):
        for tr in trajs:
            nrm = tr.norms()
            dt = tr.times - tr.times[0]
            with np.errstate(over="ignore", invalid="ignore"):
                env = nrm / nrm[0] * np.exp(gamma_hat * dt)
            good = np.isfinite(env)
            if good.any():
                c_tight = max(c_tight, float(np.max(env[good])))
    c_hat = (1.0 + _KL_CONST_MARGIN) * c_tight
    passed = gamma_hat > 0.0 and culprit is None
    notes = []
    if culprit is not None:
        notes.append(f"unbounded trajectory at batch index {culprit}")
    elif min_rate <= 0.0:
        notes.append(f"non-decaying trajectory at batch index {worst}")
    return Certificate(
        "kl_envelope", passed,
        {"gamma_hat": gamma_hat, "C_hat": c_hat, "C_tight": c_tight,
         "min_end_rate": min_rate, "worst_index": worst},
        {"rate_margin": _KL_RATE_MARGIN, "const_margin": _KL_CONST_MARGIN},
        {"size": len(trajs)}, notes)


def envelope_holds(trajs, C: float, gamma: float, slack: float = 1e-12):
    """Check ||x(t)|| <= C ||x0|| e^{-gamma dt} across a batch; returns
    (ok, worst_margin) where margin is the log-gap (positive = satisfied)."""
    worst = math.inf
    for tr in trajs:
        nrm = tr.norms()
        dt = tr.times - tr.times[0]
        margin = np.log(C) - gamma * dt - np.log(nrm / nrm[0])
        worst = min(worst, float(np.min(margin)))
    return worst >= -slack, worst


# ---------------------------------------------------------------------------
# neutral case
# ---------------------------------------------------------------------------

def check_V_neutral(traj: Trajectory, B, r: float = 1.0) -> Certificate:
    """V = ||x||^2/2 must never increase, and on constant-gate stretches its
    centered difference must match -r alpha ||B^T x||^2 to O(h^2)."""
    B = as_matrix(B)
    V = 0.5 * np.sum(traj.states ** 2, axis=1)
    dV = np.diff(V)
    slack = _ENERGY_SLACK * V[:-1] + 1e-300
    mono_viol = int(np.sum(dV > slack))
    worst_mono = float(np.max(dV - slack)) if len(dV) else 0.0

    bn2 = np.sum((traj.states @ B) ** 2, axis=1)
    a = traj.seg_alpha
    max_err = 0.0
    max_tol = 0.0
    for j in range(1, len(traj.times) - 1):
        if a[j - 1] != a[j]:
            continue
        h1 = traj.times[j] - traj.times[j - 1]
        h2 = traj.times[j + 1] - traj.times[j]
        if abs(h1 - h2) > 1e-12 * max(h1, h2):
            continue
        cd = (V[j + 1] - V[j - 1]) / (h1 + h2)
        model = -r * a[j] * bn2[j]
        m = traj.loop.matrix(float(a[j]))
        scale = (one_norm(m) + 1.0) ** 3 * (2.0 * V[j])
        tol = 2.0 * h1 * h1 * scale + 1e-300
        err = abs(cd - model)
        max_err = max(max_err, err)
        max_tol = max(max_tol, tol)
        if err > tol:
            return Certificate(
                "energy_identity", False,
                {"worst_derivative_error": err, "tolerance_at_worst": tol,
                 "monotonicity_violations": mono_viol},
                _ENERGY_SLACK, {}, [f"derivative mismatch at sample {j}"])
    passed = mono_viol == 0
    return Certificate(
        "energy_identity", passed,
        {"monotonicity_violations": mono_viol, "worst_increase": worst_mono,
         "max_derivative_error": max_err, "max_derivative_tol": max_tol},
        _ENERGY_SLACK, {}, [])


def estimate_eta(A, B, cls: PeClass, battery, x0_grid,
                 step_frac: float = 1e-3, battery_info=None) -> Certificate:
    """Battery-infimum of the one-window excitation-energy integral
    int_0^T alpha ||B^T x||^2 / v dt along unit-sphere initial states.

    A finite battery under-approximates the infimum over all admissible
    signals; the certificate records a battery value, not a bound on the
    true constant.  The log-energy balance (the integral must equal the drop
    of log v over the window) is checked with a 1e-5 budget folded into the
    positivity margin.
    """
    A = as_matrix(A, square=True)
    B = as_matrix(B)
    n = A.shape[0]
    if one_norm(A + A.T) > 1e-10 * max(one_norm(A), 1.0):
        raise PreconditionError("drift matrix must be skew-symmetric")
    if kalman_rank(A, B) != n:
        raise PreconditionError("(A, B) must be controllable")
    x0 = np.asarray(x0_grid, dtype=float)
    if x0.ndim != 2 or x0.shape[0] != n:
        raise ShapeError("x0 grid must be n x m")
    step = step_frac * cls.T
    eta_hat = math.inf
    worst_vint = 0.0
    for sig in battery:
        loop = ClosedLoop(A, B, -B.T, sig)
        runs = propagate_batch(loop, 0.0, x0, cls.T, max_step=step)
        for tr in runs:
            v = 0.5 * np.sum(tr.states ** 2, axis=1)
            g = np.sum((tr.states @ B) ** 2, axis=1) / v
            dt = np.diff(tr.times)
            integral = float(np.sum(tr.seg_alpha * 0.5 * (g[:-1] + g[1:]) * dt))
            eta_hat = min(eta_hat, integral)
            resid = abs(math.log(v[-1] / v[0]) + integral)
            worst_vint = max(worst_vint, resid)
    passed = eta_hat > _ETA_MARGIN and worst_vint <= 2e-5 * (1.0 + eta_hat)
    return Certificate(
        "excitation_energy_floor", passed,
        {"eta_hat": eta_hat, "positivity_margin": eta_hat - _ETA_MARGIN,
         "max_log_energy_residual": worst_vint,
         "grid_size": x0.shape[1]},
        {"eta_margin": _ETA_MARGIN, "quadrature_step": step},
        battery_info or {"size": len(battery)}, [])


# ---------------------------------------------------------------------------
# cone machinery (double integrator, base-gain coordinates)
# ---------------------------------------------------------------------------

def _bisect_state_functional(traj: Trajectory, seg: int, fn) -> float:
    """Zero of fn(x(t)) within sample segment seg, by bisection on exact
    dense output.  Assumes a sign change across the segment."""
    t_lo = float(traj.times[seg])
    t_hi = float(traj.times[seg + 1])
    f_lo = fn(traj.states[seg])
    m = traj.loop.matrix(float(traj.seg_alpha[seg]))
    base_x = traj.states[seg]
    tol = 1e-12 * (t_hi - t_lo)
    lo, hi = t_lo, t_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = fn(expm(m, mid - t_lo) @ base_x)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def c12_sojourns(traj: Trajectory, geom: ConeGeometry) -> list:
    """Maximal stays in the outer-cone union, with refined boundary times.

    The union of the two outer cones is one connected mod-pi arc around the
    horizontal axis, so a stay is a maximal run where the antipodal-invariant
    quadratic is non-negative.
    """
    x1 = traj.states[:, 0]
    x2 = traj.states[:, 1]
    q = geom.cs_quadratic(x1, x2)
    inside = q >= 0.0
    out = []
    j = 0
    N = len(inside)
    while j < N:
        if not inside[j]:
            j += 1
            continue
        i0 = j
        while j + 1 < N and inside[j + 1]:
            j += 1
        i1 = j
        fn = lambda x: float(geom.cs_quadratic(x[0], x[1]))
        if i0 > 0:
            t_enter = _bisect_state_functional(traj, i0 - 1, fn)
            left_censored = False
        else:
            t_enter = float(traj.times[0])
            left_censored = True
        if i1 < N - 1:
            t_exit = _bisect_state_functional(traj, i1, fn)
            right_censored = False
        else:
            t_exit = float(traj.times[-1])
            right_censored = True
        out.append({"i0": i0, "i1": i1, "t_enter": t_enter, "t_exit": t_exit,
                    "left_censored": left_censored,
                    "right_censored": right_censored})
        j += 1
    return out


def cs_sojourns(traj: Trajectory, geom: ConeGeometry) -> list:
    """Maximal stays in the central cone (complement of the outer union)."""
    x1 = traj.states[:, 0]
    x2 = traj.states[:, 1]
    q = geom.cs_quadratic(x1, x2)
    inside = q <= 0.0
    out = []
    j = 0
    N = len(inside)
    while j < N:
        if not inside[j]:
            j += 1
            continue
        i0 = j
        while j + 1 < N and inside[j + 1]:
            j += 1
        out.append({"i0": i0, "i1": j})
        j += 1
    return out


def check_F_monotone(traj: Trajectory, rho: float, k: float, cls: PeClass,
                     lam: float) -> Certificate:
    """On a stay inside the outer cones, the reparameterized angle must be
    non-increasing sample-to-sample, and over every sub-window of length
    T/lam it must drop by a definite amount; the largest constant making all
    window drops pass is reported."""
    if "theta" not in traj.channels:
        raise PreconditionError("trajectory must be polar-lifted")
    geom = cone_geometry(rho, k, cls.ratio)
    x1, x2 = traj.states[:, 0], traj.states[:, 1]
    q = geom.cs_quadratic(x1, x2)
    r2 = x1 * x1 + x2 * x2
    if np.any(q < -1e-9 * r2):
        raise PreconditionError("segment leaves the outer-cone union")
    F = fmap_F(traj.channels["theta"], k)
    dF = np.diff(F)
    mono_viol = int(np.sum(dF > _F_SLACK))
    worst = float(np.max(dF)) if len(dF) else 0.0

    W = cls.T / lam
    t = traj.times
    c_hat = math.inf
    n_windows = 0
    ends = np.searchsorted(t, t + W, side="left")
    for i in range(len(t)):
        j = ends[i]
        if j >= len(t):
            break
        drop = F[i] - F[j]
        c_hat = min(c_hat, drop * lam / (cls.mu * k))
        n_windows += 1
    measured = {"max_F_step_increase": worst,
                "monotonicity_violations": mono_viol,
                "n_windows": n_windows}
    if n_windows:
        measured["c_hat_window"] = c_hat
    passed = mono_viol == 0 and (n_windows == 0 or c_hat > 0.0)
    return Certificate("angle_reparam_monotone", passed, measured,
                       {"f_slack": _F_SLACK, "window": W}, {}, [])


def f_monotone_battery(cls: PeClass, rho: float, k: float, lam: float,
                       battery, x0_columns, horizon: float,
                       max_step: float | None = None,
                       battery_info=None) -> Certificate:
    """Run a battery and apply the monotonicity/window-drop check on every
    stay in the outer cones."""
    runs = di_runs(cls, rho, k, lam, battery, x0_columns, horizon, max_step)
    geom = cone_geometry(rho, k, cls.ratio)
    total_viol = 0
    worst_step = -math.inf
    c_hat = math.inf
    n_windows = 0
    n_sojourns = 0
    for tr in runs:
        for so in c12_sojourns(tr, geom):
            if so["i1"] - so["i0"] < 2:
                continue
            sub = tr.window(so["i0"], so["i1"])
            cert = check_F_monotone(sub, rho, k, cls, lam)
            n_sojourns += 1
            total_viol += int(cert.measured["monotonicity_violations"])
            worst_step = max(worst_step, cert.measured["max_F_step_increase"])
            if "c_hat_window" in cert.measured:
                c_hat = min(c_hat, cert.measured["c_hat_window"])
                n_windows += int(cert.measured["n_windows"])
    measured = {"violations": total_viol, "worst_step": worst_step,
                "n_sojourns": n_sojourns, "n_windows": n_windows}
    if n_windows:
        measured["c_hat"] = c_hat
        measured["c_closed_form"] = c_rho_closed_form(rho)
    passed = total_viol == 0 and (n_windows == 0 or c_hat > 0.0)
    return Certificate("angle_reparam_monotone_battery", passed, measured,
                       {"f_slack": _F_SLACK},
                       battery_info or {"size": len(battery)}, [])


def dwell_times(traj: Trajectory, geom: ConeGeometry) -> Certificate:
    """Maximal sojourn lengths in the outer-cone union.

    Sojourns truncated by the end of the horizon cannot certify their own
    finiteness and are reported separately."""
    sojourns = c12_sojourns(traj, geom)
    closed = [s["t_exit"] - s["t_enter"] for s in sojourns
              if not s["right_censored"]]
    censored = [s["t_exit"] - s["t_enter"] for s in sojourns
                if s["right_censored"]]
    max_closed = max(closed) if closed else 0.0
    measured = {"max_dwell": max_closed, "n_sojourns": len(sojourns),
                "n_censored": len(censored)}
    notes = []
    passed = True
    if censored and not closed:
        passed = False
        notes.append("only a horizon-truncated sojourn was observed")
    if censored:
        measured["max_censored"] = max(censored)
    return Certificate("outer_cone_dwell", passed, measured, None, {}, notes)


def dwell_scaling(cls: PeClass, rho: float, k: float, lam_over_k: float,
                  battery, x0_columns, horizon_factor: float = 40.0,
                  ratio_bound: float = 0.55, battery_info=None) -> Certificate:
    """Doubling the gain scale k (at fixed lam/k) must at least halve the
    worst outer-cone dwell, within a 10% allowance."""

    def max_dwell(kk: float) -> float:
        lam = lam_over_k * kk
        geom = cone_geometry(rho, kk, cls.ratio)
        runs = di_runs(cls, rho, kk, lam, battery, x0_columns,
                       horizon_factor / kk, polar=False)
        worst = 0.0
        for tr in runs:
            cert = dwell_times(tr, geom)
            worst = max(worst, cert.measured["max_dwell"])
        return worst

    d1 = max_dwell(k)
    d2 = max_dwell(2.0 * k)
    ratio = d2 / d1 if d1 > 0.0 else math.inf
    passed = ratio <= ratio_bound
    return Certificate(
        "dwell_scaling", passed,
        {"max_dwell_at_k": d1, "max_dwell_at_2k": d2, "ratio": ratio},
        {"ratio_bound": ratio_bound},
        battery_info or {"size": len(battery)}, [])


def check_quadrant_V(traj: Trajectory, rho: float, k: float) -> Certificate:
    """V = x1^2 + 2 x2^2/(rho k^2) must be non-increasing while the state
    stays in {x1 <= 0, x2 >= 0}; the check clips to the maximal prefix of
    the trajectory inside that set."""
    x1, x2 = traj.states[:, 0], traj.states[:, 1]
    inside = (x1 <= 0.0) & (x2 >= 0.0)
    n_prefix = 0
    for flag in inside:
        if not flag:
            break
        n_prefix += 1
    if n_prefix < 2:
        return Certificate("quadrant_energy", True,
                           {"prefix_samples": n_prefix, "worst_increase": 0.0},
                           _ENERGY_SLACK, {},
                           ["prefix too short; vacuous"])
    V = x1[:n_prefix] ** 2 + 2.0 * x2[:n_prefix] ** 2 / (rho * k * k)
    dV = np.diff(V)
    slack = _ENERGY_SLACK * V[:-1] + 1e-300
    viol = int(np.sum(dV > slack))
    worst = float(np.max(dV - slack))
    return Certificate("quadrant_energy", viol == 0,
                       {"prefix_samples": n_prefix, "violations": viol,
                        "worst_increase": worst},
                       _ENERGY_SLACK, {}, [])


def quadrant_battery(cls: PeClass, rho: float, k: float, lam: float, battery,
                     x0_columns, horizon: float,
                     battery_info=None) -> Certificate:
    """Apply the quadrant-energy check to every maximal stay of every run in
    {x1 <= 0, x2 >= 0}."""
    runs = di_runs(cls, rho, k, lam, battery, x0_columns, horizon,
                   polar=False)
    viol = 0
    worst = -math.inf
    n_checked = 0
    for tr in runs:
        x1, x2 = tr.states[:, 0], tr.states[:, 1]
        inside = (x1 <= 0.0) & (x2 >= 0.0)
        j = 0
        N = len(inside)
        while j < N:
            if not inside[j]:
                j += 1
                continue
            i0 = j
            while j + 1 < N and inside[j + 1]:
                j += 1
            if j - i0 >= 1:
                sub = tr.window(i0, j)
                cert = check_quadrant_V(sub, rho, k)
                viol += int(cert.measured.get("violations", 0))
                worst = max(worst, cert.measured["worst_increase"])
                n_checked += 1
            j += 1
    return Certificate("quadrant_energy_battery", viol == 0,
                       {"violations": viol, "worst_increase": worst,
                        "stays_checked": n_checked},
                       _ENERGY_SLACK,
                       battery_info or {"size": len(battery)}, [])


def check_cs_decay(traj: Trajectory, rho: float, k: float,
                   cls: PeClass | None = None) -> Certificate:
    """Inside the central cone the vertical component obeys a gated scalar
    law x2' = -k alpha w x2 with w confined to gain-independent bounds; check
    the bounds per sample and fit the decay envelope."""
    xi_s_plus = -0.5 * k * (1.0 + math.sqrt(1.0 - rho))
    xi_s_minus = -0.5 * k * (1.0 - math.sqrt(1.0 - (2.0 - rho / 2.0) * rho))
    x1, x2 = traj.states[:, 0], traj.states[:, 1]
    q = (x2 - xi_s_plus * x1) * (x2 - xi_s_minus * x1)
    r2 = x1 * x1 + x2 * x2
    if np.any(q > 1e-9 * r2):
        raise PreconditionError("segment leaves the central cone")
    if np.any(x2 == 0.0):
        raise PreconditionError("central cone excludes the horizontal axis")
    w = 1.0 + 0.5 * rho * k * (x1 / x2)
    lo = 1.0 + 0.5 * rho * k / xi_s_minus
    hi = 1.0 + 0.5 * rho * k / xi_s_plus
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    w_ok = bool(np.all(w >= lo - tol) and np.all(w <= hi + tol))
    measured = {"w_min": float(np.min(w)), "w_max": float(np.max(w)),
                "w_lower_bound": lo, "w_upper_bound": hi}
    if len(traj.times) >= 10:
        t = traj.times - traj.times[0]
        y = np.log(np.abs(x2))
        slope, _ = np.polyfit(t, y, 1)
        gamma_hat = -slope / k
        measured["gamma_hat"] = float(gamma_hat)
        nrm = np.sqrt(r2)
        env = nrm / nrm[0] * np.exp(k * gamma_hat * t)
        measured["C2_hat"] = float(np.max(env))
    return Certificate("central_cone_decay", w_ok, measured,
                       {"w_tol": tol}, {}, [])


def cs_decay_battery(cls: PeClass, rho: float, k: float, lam: float, battery,
                     x0_columns, horizon: float,
                     battery_info=None) -> Certificate:
    runs = di_runs(cls, rho, k, lam, battery, x0_columns, horizon,
                   polar=False)
    geom = cone_geometry(rho, k, cls.ratio)
    all_ok = True
    w_min, w_max = math.inf, -math.inf
    gammas = []
    c2s = []
    n_checked = 0
    for tr in runs:
        for so in cs_sojourns(tr, geom):
            if so["i1"] - so["i0"] < 3:
                continue
            sub = tr.window(so["i0"], so["i1"])
            cert = check_cs_decay(sub, rho, k, cls)
            all_ok = all_ok and cert.passed
            w_min = min(w_min, cert.measured["w_min"])
            w_max = max(w_max, cert.measured["w_max"])
            if "gamma_hat" in cert.measured:
                gammas.append(cert.measured["gamma_hat"])
                c2s.append(cert.measured["C2_hat"])
            n_checked += 1
    measured = {"stays_checked": n_checked, "w_min": w_min, "w_max": w_max}
    if gammas:
        measured["gamma_hat_min"] = float(min(gammas))
        measured["C2_hat_max"] = float(max(c2s))
    return Certificate("central_cone_decay_battery", all_ok and n_checked > 0,
                       measured, None,
                       battery_info or {"size": len(battery)}, [])


# ---------------------------------------------------------------------------
# constant-gate comparison computations
# ---------------------------------------------------------------------------

def comparison_final0(rho: float, k: float, ratio: float,
                      horizon: float | None = None) -> Certificate:
    """Constant-gate flow started on the shallow central-cone edge must stay
    between that edge and the slow eigendirection and decay to nothing.

    Confinement is verified on at least [0, 50/k]; the horizon is extended
    as needed for the terminal norm to fall below 1e-6 of the start."""
    geom = cone_geometry(rho, k, ratio)
    slow = abs(geom.xi_r_minus)
    need = (math.log(1e6) + 2.0) / slow + 5.0 / k
    H = max(50.0 / k, need, horizon or 0.0)
    x0 = np.array([-1.0, -geom.xi_s_minus])
    x0 = x0 / np.linalg.norm(x0)
    loop = ClosedLoop(A_DI, B_DI, di_base_gain(rho, k),
                      PwcSignal.constant(ratio))
    tr = propagate(loop, 0.0, x0, H)
    x1, x2 = tr.states[:, 0], tr.states[:, 1]
    slopes = x2 / x1
    tol = 1e-9 * k
    confined = bool(np.all(slopes >= geom.xi_r_minus - tol)
                    and np.all(slopes <= geom.xi_s_minus + tol)
                    and np.all(x1 < 0.0))
    final_ratio = float(tr.norms()[-1] / tr.norms()[0])
    passed = confined and final_ratio <= 1e-6
    return Certificate(
        "edge_flow_confinement", passed,
        {"final_norm_ratio": final_ratio,
         "slope_min": float(np.min(slopes)), "slope_max": float(np.max(slopes)),
         "horizon": H, "confinement_horizon": 50.0 / k},
        {"slope_tol": tol, "final_ratio_bound": 1e-6}, {}, [])


def comparison_c2(rho: float, k: float, ratio: float) -> Certificate:
    """Constant-gate flow started on the steep central-cone edge must sweep
    the outer cone, reach the positive horizontal axis in finite time and
    arrive with less norm than it started with."""
    geom = cone_geometry(rho, k, ratio)
    x0 = np.array([-1.0, -geom.xi_s_plus])
    x0 = x0 / np.linalg.norm(x0)
    loop = ClosedLoop(A_DI, B_DI, di_base_gain(rho, k),
                      PwcSignal.constant(ratio))
    H = 60.0 / k
    tr = propagate(loop, 0.0, x0, H)
    x2 = tr.states[:, 1]
    x1 = tr.states[:, 0]
    cross_seg = None
    for j in range(len(x2) - 1):
        if x2[j] > 0.0 and x2[j + 1] <= 0.0:
            cross_seg = j
            break
    if cross_seg is None:
        return Certificate("outer_sweep_contraction", False,
                           {"horizon": H}, None, {},
                           ["no axis crossing within the horizon"])
    tc = _bisect_state_functional(tr, cross_seg, lambda x: float(x[1]))
    xc = tr.state_at(tc)
    contraction = float(np.linalg.norm(xc))
    # staying inside the sweeping cone until the crossing means the mod-pi
    # direction never enters the central cone before tc
    qs = geom.cs_quadratic(x1[:cross_seg + 1], x2[:cross_seg + 1])
    swept_ok = bool(np.all(qs >= -1e-9 * (x1[:cross_seg + 1] ** 2
                                          + x2[:cross_seg + 1] ** 2)))
    passed = contraction < 1.0 and xc[0] > 0.0 and swept_ok
    return Certificate(
        "outer_sweep_contraction", passed,
        {"contraction": contraction, "t_cross": tc,
         "crossing_abscissa": float(xc[0]),
         # the scale-equivalent quantity: invariant under k -> 2k
         "abscissa_ratio": float(abs(xc[0] / x0[0]))},
        {"contraction_bound": 1.0}, {}, [])


# ---------------------------------------------------------------------------
# crossing-chain contraction and tuning
# ---------------------------------------------------------------------------

def _axis_representatives(traj: Trajectory) -> list:
    """One representative time per connected stay of the trajectory on the
    horizontal axis."""
    x2 = traj.states[:, 1]
    times = []
    span = traj.times[-1] - traj.times[0]
    for j in range(len(x2) - 1):
        if x2[j] == 0.0:
            times.append(float(traj.times[j]))
        elif x2[j] * x2[j + 1] < 0.0:
            times.append(_bisect_state_functional(traj, j, lambda x: float(x[1])))
    if len(x2) and x2[-1] == 0.0:
        times.append(float(traj.times[-1]))
    # merge representatives closer than a sliver of the horizon: they belong
    # to one connected component (e.g. an exact stall on the axis)
    merged = []
    for t in sorted(times):
        if not merged or t - merged[-1] > 1e-9 * span:
            merged.append(t)
    return merged


def chain_contraction(traj: Trajectory, k: float,
                      min_excursion: float = 1.0) -> Certificate:
    """Between consecutive axis visits that are at least one time unit apart
    the norm must at least halve, with the surplus decaying exponentially in
    k; the largest such exponential rate and the global envelope constant
    are reported."""
    reps = _axis_representatives(traj)
    notes = []
    if len(reps) < 2:
        notes.append("fewer than two axis visits; prefix-only certificate")
    gamma = math.inf
    n_qual = 0
    ratios = []
    for t_prev, t_next in zip(reps, reps[1:]):
        dt = t_next - t_prev
        if dt < min_excursion:
            continue
        n_prev = float(np.linalg.norm(traj.state_at(t_prev)))
        n_next = float(np.linalg.norm(traj.state_at(t_next)))
        ratio = n_next / n_prev
        ratios.append(ratio)
        n_qual += 1
        if ratio <= 0.0:
            continue
        gamma = min(gamma, -math.log(2.0 * ratio) / (k * dt))
    measured = {"n_axis_visits": len(reps), "n_qualifying": n_qual}
    if n_qual:
        measured["gamma_star_hat"] = gamma
        measured["worst_halving_ratio"] = max(ratios)
        g_env = max(gamma, 0.0) if math.isfinite(gamma) else 0.0
    else:
        g_env = 0.0
        gamma = 0.0
    t0 = traj.times[0]
    nrm = traj.norms()
    env = nrm / nrm[0] * np.exp(k * g_env * (traj.times - t0))
    measured["C3_sq_hat"] = float(np.max(env))
    passed = (n_qual == 0) or gamma > 0.0
    return Certificate("axis_chain_contraction", passed, measured,
                       {"min_excursion": min_excursion}, {}, notes)


def chain_battery(cls: PeClass, rho: float, k: float, lam: float, battery,
                  x0_columns, horizon: float, min_excursion: float = 1.0,
                  battery_info=None) -> Certificate:
    """Chain certificate over a battery.

    In the well-tuned regime trajectories are captured by the central cone
    after at most a couple of axis visits, so runs without qualifying
    excursions are the expected outcome; they pass vacuously and are
    counted, matching the prefix-only semantics of the per-run check."""
    runs = di_runs(cls, rho, k, lam, battery, x0_columns, horizon,
                   polar=False)
    gamma = math.inf
    c3 = 0.0
    n_qual = 0
    n_visits = 0
    all_pass = True
    for tr in runs:
        cert = chain_contraction(tr, k, min_excursion)
        all_pass = all_pass and cert.passed
        n_qual += int(cert.measured["n_qualifying"])
        n_visits += int(cert.measured["n_axis_visits"])
        if "gamma_star_hat" in cert.measured:
            gamma = min(gamma, cert.measured["gamma_star_hat"])
        c3 = max(c3, cert.measured["C3_sq_hat"])
    measured = {"n_qualifying": n_qual, "n_axis_visits": n_visits,
                "C3_sq_hat": c3}
    if n_qual:
        measured["gamma_star_hat"] = gamma
    notes = [] if n_qual else \
        ["no excursion lasted past the threshold; prefix-only certificate"]
    return Certificate("axis_chain_contraction_battery", all_pass, measured,
                       {"min_excursion": min_excursion},
                       battery_info or {"size": len(battery)}, notes)


def tune(cls: PeClass, rho: float, battery, x0_columns=None, k0: float = 1.0,
         horizon_periods: float = 12.0, cap: float = 2.0 ** 16,
         battery_info=None) -> dict:
    """Doubling search for gain parameters that contract every battery run.

    Outer loop doubles k, inner loop doubles lam starting at max(1, k); the
    first passing pair is returned with a 2x safety margin.  The pass
    predicate is the fitted envelope of the lam-scaled gain over the battery
    at the target class.
    """
    if x0_columns is None:
        x0_columns = unit_circle_grid(4)
    horizon = horizon_periods * cls.T
    trace = []

    def candidate_passes(k: float, lam: float) -> bool:
        K = di_gain(cls, rho, k, lam).K
        for sig in battery:
            loop = ClosedLoop(A_DI, B_DI, K, sig)
            runs = propagate_batch(loop, 0.0, x0_columns, horizon)
            for tr in runs:
                nrm = tr.norms()
                if not np.all(np.isfinite(nrm)) or nrm[-1] >= nrm[0]:
                    return False
        return True

    k = k0
    while k <= cap:
        lam = max(1.0, k)
        while lam <= cap:
            ok = candidate_passes(k, lam)
            trace.append({"k": k, "lam": lam, "pass": ok})
            if ok:
                return {"k_star_hat": 2.0 * k, "lambda_star_hat": 2.0 * lam,
                        "first_pass": {"k": k, "lam": lam},
                        "trace": trace,
                        "battery": battery_info or {"size": len(battery)}}
            lam *= 2.0
        k *= 2.0
    raise SimulationError(
        f"tuning search exhausted the cap {cap}; trace: {trace}")


# ---------------------------------------------------------------------------
# identities and limits
# ---------------------------------------------------------------------------

def rescaling_identity(k1: float, k2: float, alpha: PwcSignal, x0,
                       horizon: float, lams=(0.5, 2.0, 8.0),
                       max_step: float = 1e-2) -> Certificate:
    """Exact anisotropic rescaling: Diag(1, lam) x(lam t; K) must equal the
    trajectory of the lam-scaled gain driven by the lam-fast signal, at all
    shared samples."""
    x0 = np.asarray(x0, dtype=float)
    K = np.array([[-k1, -k2]])
    base_loop = ClosedLoop(A_DI, B_DI, K, alpha)
    worst = 0.0
    for lam in lams:
        base = propagate(base_loop, 0.0, x0, lam * horizon,
                         max_step=lam * max_step)
        K_lam = np.array([[-lam * lam * k1, -lam * k2]])
        d = np.array([1.0, lam])
        scaled_loop = ClosedLoop(A_DI, B_DI, K_lam, rescale_time(alpha, lam))
        scaled = propagate(scaled_loop, 0.0, d * x0, horizon,
                           max_step=max_step)
        if len(base.times) != len(scaled.times):
            raise SimulationError("rescaled grids failed to align")
        lhs = base.states * d
        err = np.abs(lhs - scaled.states)
        scale = np.maximum(np.abs(scaled.states), 1.0)
        worst = max(worst, float(np.max(err / scale)))
    return Certificate("anisotropic_rescaling", worst <= 1e-9,
                       {"max_rel_error": worst},
                       {"bound": 1e-9, "lams": list(lams)}, {}, [])


def multi_input_identity(B, k: float, cls: PeClass, battery, x0_list,
                         horizon: float, battery_info=None) -> Certificate:
    """For a full-rank planar input matrix, the drift-stripped state must
    contract exactly like exp(-k int alpha), and the raw state must obey the
    induced envelope ||x|| <= ||e^{At}|| exp(-k int alpha) ||x0||."""
    B = as_matrix(B)
    K = multi_input_gain(B, k)
    worst_identity = 0.0
    worst_bound = -math.inf
    for sig in battery:
        loop = ClosedLoop(A_DI, B, K, sig)
        for x0 in x0_list:
            tr = propagate(loop, 0.0, x0, horizon)
            t = tr.times
            x = tr.states
            # e^{-At} x with the nilpotent drift: (x1 - t x2, x2)
            y = np.column_stack([x[:, 0] - t * x[:, 1], x[:, 1]])
            ynorm = np.linalg.norm(y, axis=1)
            ints = np.array([sig.integral_from_zero(tt) for tt in t])
            target = ynorm[0] * np.exp(-k * ints)
            worst_identity = max(worst_identity, float(
                np.max(np.abs(ynorm - target) / np.maximum(target, 1e-300))))
            # ||e^{At}||_2 for the nilpotent drift, closed form
            t2 = t * t
            smax = np.sqrt((2.0 + t2 + t * np.sqrt(t2 + 4.0)) / 2.0)
            bound = smax * np.exp(-k * ints) * np.linalg.norm(x[0])
            gap = np.linalg.norm(x, axis=1) - bound * (1.0 + 1e-9)
            worst_bound = max(worst_bound, float(np.max(gap)))
    passed = worst_identity <= 1e-9 and worst_bound <= 0.0
    return Certificate("gated_contraction_identity", passed,
                       {"max_identity_rel_error": worst_identity,
                        "worst_envelope_gap": worst_bound},
                       {"identity_bound": 1e-9},
                       battery_info or {"size": len(battery)}, [])


def weak_star_demo(A, B, K, x0, duty: float = 0.5, exponents=range(11),
                   horizon: float = 10.0, final_tol: float = 1e-2) -> Certificate:
    """Fast square waves against their averaged limit.

    Square waves of period 1/i and on-fraction `duty` converge (in the
    averaged sense) to the constant `duty`; the closed-loop trajectories must
    converge uniformly on [0, horizon], with the sup-distance decreasing
    along i and below `final_tol` at the largest i."""
    A = as_matrix(A, square=True)
    B = as_matrix(B)
    K = as_matrix(K)
    x0 = np.asarray(x0, dtype=float)
    star_loop = ClosedLoop(A, B, K, PwcSignal.constant(duty))
    m_star = star_loop.matrix(duty)
    dists = []
    i_values = [2 ** e for e in exponents]
    for i in i_values:
        period = 1.0 / i
        sub = PeClass(period, duty * period)
        sig = make_duty(sub, on_value=1.0, pattern="front")
        loop = ClosedLoop(A, B, K, sig)
        tr = propagate(loop, 0.0, x0, horizon,
                       max_step=min(period / 4.0, horizon / 2000.0))
        # exact limit states at the same sample times, by incremental stepping
        cache: dict = {}
        xs = x0.copy()
        prev_t = 0.0
        worst = 0.0
        for t, xi in zip(tr.times, tr.states):
            dt = t - prev_t
            if dt:
                phi = cache.get(dt)
                if phi is None:
                    phi = expm(m_star, dt)
                    cache[dt] = phi
                xs = phi @ xs
            prev_t = t
            worst = max(worst, float(np.linalg.norm(xi - xs)))
        dists.append(worst)
    # a constant sequence (every member equal to the limit) is flat at zero
    all_zero = max(dists) <= 1e-12
    decreasing = all_zero or all(b < a for a, b in zip(dists, dists[1:]))
    final_ok = dists[-1] <= final_tol
    logs = np.polyfit(np.log(i_values), np.log(np.maximum(dists, 1e-300)), 1)
    measured = {f"sup_dist_i_{i}": d for i, d in zip(i_values, dists)}
    measured["rate_hat"] = float(-logs[0])
    measured["final_dist"] = dists[-1]
    return Certificate("averaged_limit_convergence",
                       decreasing and final_ok, measured,
                       {"final_tol": final_tol, "horizon": horizon},
                       {"duty": duty, "i_max": i_values[-1]}, [])


def c_rho_closed_form(rho: float) -> float:
    """Optimal constant c with s^2 + s + rho/2 >= c (s^2 + 1) outside the
    central-cone slope band; endpoint/critical-point analysis of the ratio
    (s^2 + s + rho/2)/(s^2 + 1)."""
    if not (0.0 < rho < 1.0):
        raise DomainError("rho must lie in (0, 1)")
    lo = -(1.0 + math.sqrt(1.0 - rho)) / 2.0
    hi = -(1.0 - math.sqrt(1.0 - (2.0 - rho / 2.0) * rho)) / 2.0

    def g(s: float) -> float:
        return (s * s + s + rho / 2.0) / (s * s + 1.0)

    cands = [lo, hi]
    disc = math.sqrt((2.0 - rho) ** 2 + 4.0)
    for s in ((2.0 - rho - disc) / 2.0, (2.0 - rho + disc) / 2.0):
        if not (lo < s < hi):
            cands.append(s)
    return min(g(s) for s in cands)
