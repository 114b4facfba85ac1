"""Destabilizing state feedback for the double integrator, and adversarial
signal search.

The feedback gates the loop at full strength where excitation hurts and at
the class floor where it would help; for a small enough floor the resulting
trajectory grows by a fixed factor every revolution, and the induced gate is
itself an admissible excitation signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateStateError, DomainError,
                     InternalConsistencyError, SimulationError)
from .gains import A_DI, B_DI
from .matkit import as_matrix, expm
from .signals import PeClass, PwcSignal, make_duty, verify_pe
from .simcore import ClosedLoop, Trajectory, propagate

__all__ = [
    "QPartition",
    "ZetaFeedback",
    "zeta",
    "run_destabilizer",
    "find_nu",
    "worst_case_search",
    "DestabilizerRun",
]

_MIN_DWELL = 1e-12


@dataclass(frozen=True)
class QPartition:
    """The four half-open sectors cut by the horizontal axis and the line
    where the gated and ungated vector fields are collinear."""

    k1: float
    k2: float

    def __post_init__(self):
        if self.k1 <= 0.0 or self.k2 <= 0.0:
            raise DomainError("both gain entries must be positive")

    @property
    def slope(self) -> float:
        return -self.k1 / self.k2

    def region(self, x) -> int:
        x1, x2 = float(x[0]), float(x[1])
        if x1 == 0.0 and x2 == 0.0:
            raise DegenerateStateError("the origin belongs to no sector")
        s = x2 + (self.k1 / self.k2) * x1
        if s >= 0.0 and x2 > 0.0:
            return 1
        if s > 0.0 and x2 <= 0.0:
            return 2
        if s <= 0.0 and x2 < 0.0:
            return 3
        return 4


@dataclass(frozen=True)
class ZetaFeedback:
    """Gate value 1 on sectors 2 and 4, the class ratio on sectors 1 and 3."""

    k1: float
    k2: float
    ratio: float

    def __post_init__(self):
        if not (0.0 < self.ratio <= 1.0):
            raise DomainError("ratio must lie in (0, 1]")

    @property
    def partition(self) -> QPartition:
        return QPartition(self.k1, self.k2)

    def value(self, x) -> float:
        return 1.0 if self.partition.region(x) in (2, 4) else self.ratio


def zeta(z: ZetaFeedback, x) -> float:
    return z.value(x)


def _phase_crossing(m: np.ndarray, x0: np.ndarray, fn, dt: float,
                    max_steps: int = 4000):
    """March a constant flow until fn(x) changes sign, then bisect.

    Returns (t_cross, x_cross), or None when no crossing appears within
    max_steps (the flow converges to an eigendirection instead)."""
    f_prev = fn(x0)
    t_prev, x_prev = 0.0, x0
    phi = expm(m, dt)
    for i in range(1, max_steps + 1):
        t = i * dt
        x = phi @ x_prev
        f = fn(x)
        if f == 0.0 or (f > 0.0) != (f_prev > 0.0):
            lo, hi = t_prev, t
            x_lo = x_prev
            tol = 1e-13 * max(dt, 1e-300)
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                fm = fn(expm(m, mid - t_prev) @ x_lo)
                if fm == 0.0:
                    lo = hi = mid
                    break
                if (fm > 0.0) == (f_prev > 0.0):
                    lo = mid
                else:
                    hi = mid
            tc = 0.5 * (lo + hi)
            return tc, expm(m, tc - t_prev) @ x_lo
        t_prev, x_prev, f_prev = t, x, f
    return None


def _rotation_step(m: np.ndarray) -> float:
    """Step small enough to never skip a sector while a constant flow turns."""
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = 0.25 * tr * tr - det
    if disc < 0.0:
        omega = math.sqrt(-disc)
        return (math.pi / omega) / 32.0
    scale = max(abs(m).max(), 1e-12)
    return 0.05 / scale


@dataclass(eq=False)
class DestabilizerRun:
    traj: Trajectory
    induced_signal: PwcSignal
    growth_per_rev: float
    factors: list
    pe_ok: bool
    crossings: list

    def to_json(self) -> dict:
        return {
            "growth_per_rev": self.growth_per_rev,
            "revolution_factors": [float(f) for f in self.factors],
            "pe_ok": bool(self.pe_ok),
            "induced_signal": self.induced_signal.to_json(),
        }


def _unpack_gain(K) -> tuple:
    arr = np.asarray(K, dtype=float).reshape(-1)
    if arr.size != 2:
        raise DomainError("gain must have exactly two entries")
    k1, k2 = -arr[0], -arr[1]
    if k1 <= 0.0 or k2 <= 0.0:
        raise DomainError("A+bK is not Hurwitz: gain entries must make "
                          "k1, k2 positive")
    return k1, k2


def run_destabilizer(K, cls: PeClass, x0=(-1.0, 0.0),
                     revolutions: int = 10) -> DestabilizerRun:
    """Simulate the sector feedback loop exactly, sector by sector.

    Inside a sector the dynamics is one constant matrix, so propagation is
    pure matrix exponentials with bisected sector crossings; committing to
    the entered sector until the next crossing (minimum dwell 1e-12) rules
    out chattering artifacts.
    """
    if revolutions < 1:
        raise DomainError("need at least one revolution")
    k1, k2 = _unpack_gain(K)
    ratio = cls.ratio
    fb = ZetaFeedback(k1, k2, ratio)
    part = fb.partition
    Kmat = np.array([[-k1, -k2]])
    bk = B_DI @ Kmat
    mats = {1.0: A_DI + bk, ratio: A_DI + ratio * bk}

    x = np.asarray(x0, dtype=float)
    if np.linalg.norm(x) == 0.0:
        raise DegenerateStateError("cannot start at the origin")
    region = part.region(x)
    t = 0.0
    bp = [0.0]
    vals = []
    times = [0.0]
    states = [x.copy()]
    seg_alpha = []
    on_neg_axis = x[1] == 0.0 and x[0] < 0.0
    rev_norms = [float(np.linalg.norm(x))] if on_neg_axis else []
    crossings = []

    def axis_fn(y):
        return float(y[1])

    def dline_fn(y):
        return float(y[1] + (k1 / k2) * y[0])

    while len(rev_norms) <= revolutions:
        a = 1.0 if region in (2, 4) else ratio
        m = mats[a]
        fn = dline_fn if region in (2, 4) else axis_fn
        dt = _rotation_step(m)
        vals.append(a)
        res = _phase_crossing(m, x, fn, dt)
        if res is None:
            raise SimulationError(
                "trajectory converges to an eigendirection and stops "
                "revolving; the sector feedback cannot destabilize here")
        tc, xc = res
        if tc < _MIN_DWELL:
            raise InternalConsistencyError(
                "two sector crossings within 1e-12: chattering detected")
        # in-phase samples, re-marched on an exact uniform sub-grid
        nsub = max(1, int(math.ceil(tc / dt)))
        h = tc / nsub
        phi = expm(m, h)
        xx = x
        for i in range(nsub):
            xx = phi @ xx
            times.append(t + (i + 1) * h if i < nsub - 1 else t + tc)
            states.append(xx)
            seg_alpha.append(a)
        t += tc
        x = xc
        states[-1] = xc
        bp.append(t)
        crossings.append({"t": t, "region_from": region})
        # committed sector cycle: 4 -> 1 -> 2 -> 3 -> 4 ...
        if region in (2, 4):
            region = 1 if region == 4 else 3
        else:
            region = 2 if region == 1 else 4
            if region == 4:
                # back on the negative axis: one full revolution
                rev_norms.append(float(np.linalg.norm(x)))

    induced = PwcSignal.held(tuple(bp), tuple(vals), hold=vals[-1])
    horizon = t
    pe_ok = (verify_pe(induced, cls, horizon).ok
             if horizon >= cls.T else False)
    factors = [b / a for a, b in zip(rev_norms, rev_norms[1:])]
    growth = factors[-1] if factors else math.nan
    loop = ClosedLoop(A_DI, B_DI, Kmat, induced)
    traj = Trajectory(loop, np.asarray(times), np.stack(states),
                      np.asarray(seg_alpha))
    return DestabilizerRun(traj, induced, growth, factors, pe_ok, crossings)


def find_nu(K, tol: float = 1e-10) -> float:
    """Largest constant gate level for which the post-collinearity sweep
    still lands beyond the starting abscissa.

    The full-strength flow from (-1, 0) is followed to its first meeting
    with the collinearity line; from there the constant-nu flow crosses the
    horizontal axis at some abscissa xi(nu), which grows without bound as nu
    shrinks and shrinks as nu grows.  Bisection on xi(nu) = 1 over
    [1e-12, 1] to absolute tolerance `tol`; classes with ratio at most the
    returned value are destabilized by the sector feedback.
    """
    k1, k2 = _unpack_gain(K)
    Kmat = np.array([[-k1, -k2]])
    bk = B_DI @ Kmat
    m1 = A_DI + bk
    x_start = np.array([-1.0, 0.0])

    def dline_fn(y):
        return float(y[1] + (k1 / k2) * y[0])

    res = _phase_crossing(m1, x_start, dline_fn, _rotation_step(m1))
    if res is None:
        raise SimulationError("full-strength flow never meets the "
                              "collinearity line")
    _, x_bar = res

    def xi(nu: float) -> float:
        m = A_DI + nu * bk
        res = _phase_crossing(m, x_bar, lambda y: float(y[1]),
                              _rotation_step(m))
        if res is None:
            # converges to an eigendirection above the axis: certainly not
            # landing beyond the unit abscissa
            return 0.0
        return float(res[1][0])

    lo, hi = 1e-12, 1.0
    if xi(lo) <= 1.0:
        raise InternalConsistencyError(
            "no destabilizing gate level found down to 1e-12; this should "
            "not happen for positive gain entries")
    if xi(hi) > 1.0:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if xi(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return lo


def tune_adversarial(cls: PeClass, rho: float, seed: int = 0,
                     phases: int = 8, budget: int = 24,
                     horizon_periods: float = 12.0,
                     cap: float = 2.0 ** 16) -> dict:
    """Gain-scale search hardened by the adversarial signal search.

    The doubling search runs over a duty battery covering all phases; the
    winner is then stressed with the worst signal the search can find, and
    if that signal breaks it, it joins the battery and the search repeats.
    """
    from .certify import tune, unit_circle_grid
    from .gains import di_gain

    battery = [make_duty(cls, phase=j * cls.T / phases, on_value=1.0,
                         pattern=p)
               for j in range(phases) for p in ("front", "back")]
    battery.append(make_duty(cls, pattern="split", splits=3))
    battery.append(PwcSignal.constant(cls.ratio))
    info = {"seed": seed, "size": len(battery),
            "spec": f"duty at {phases} phases + split + constant ratio"}
    x0s = unit_circle_grid(4)
    horizon = horizon_periods * cls.T

    for _ in range(3):
        result = tune(cls, rho, battery, x0s,
                      horizon_periods=horizon_periods, cap=cap,
                      battery_info=info)
        K = di_gain(cls, rho, result["k_star_hat"],
                    result["lambda_star_hat"]).K
        x0_list = [x0s[:, j] for j in range(x0s.shape[1])]
        sig, rep = worst_case_search(A_DI, B_DI, K, cls, x0_list, budget,
                                     horizon, seed)
        battery.append(sig)
        info = dict(info, size=len(battery))
        if rep["decay"] > 0.0:
            result["worst_case"] = rep
            result["battery_signals"] = battery
            return result
    raise SimulationError(
        "adversarial search kept defeating the tuned gain after 3 rounds")


def worst_case_search(A, B, K, cls: PeClass, x0_list, budget: int,
                      horizon: float, seed: int = 0,
                      max_step: float | None = None):
    """Search duty-cycle space for the signal with the slowest fitted decay.

    Random candidates over (pattern, on-level, phase, splits) followed by
    coordinate refinement around the best; deterministic under the seed, and
    every candidate is verified to belong to the class.  Returns
    (signal, report) with the measured decay of the winner.
    """
    if budget < 1:
        raise DomainError("budget must be >= 1")
    A = as_matrix(A, square=True)
    B = as_matrix(B)
    K = as_matrix(K)
    rng = np.random.default_rng(seed)
    T, ratio = cls.T, cls.ratio

    def build(params) -> PwcSignal:
        pattern, on_value, phase, splits = params
        sig = make_duty(cls, phase=phase, on_value=on_value,
                        pattern=pattern, splits=splits)
        return sig

    def rate_of(sig: PwcSignal) -> float:
        worst = math.inf
        for x0 in x0_list:
            tr = propagate(ClosedLoop(A, B, K, sig), 0.0, x0, horizon,
                           max_step)
            nrm = tr.norms()
            if not np.all(np.isfinite(nrm)) or nrm[-1] <= 0.0:
                return -math.inf
            worst = min(worst, -math.log(nrm[-1] / nrm[0]) / horizon)
        return worst

    base = ("front", 1.0, 0.0, 2)
    evaluated = []
    best_params, best_sig = base, build(base)
    best_rate = rate_of(best_sig)
    evaluated.append({"params": base, "rate": best_rate})
    n_random = max(0, int(0.7 * (budget - 1)))
    for _ in range(n_random):
        pattern = ("front", "back", "split")[rng.integers(0, 3)]
        on_value = float(min(1.0, ratio + (1.0 - ratio) * rng.random())) \
            if ratio < 1.0 else 1.0
        on_value = max(on_value, ratio * (1.0 + 1e-9)) if ratio < 1.0 else 1.0
        params = (pattern, on_value, float(rng.random() * T),
                  int(rng.integers(2, 5)))
        sig = build(params)
        rate = rate_of(sig)
        evaluated.append({"params": params, "rate": rate})
        if rate < best_rate:
            best_rate, best_params, best_sig = rate, params, sig
    # coordinate refinement on phase and on-level
    remaining = budget - 1 - n_random
    step_phase, step_on = T / 8.0, 0.1
    while remaining > 0:
        improved = False
        pattern, on_value, phase, splits = best_params
        for cand in (
            (pattern, on_value, (phase + step_phase) % T, splits),
            (pattern, on_value, (phase - step_phase) % T, splits),
            (pattern, min(1.0, on_value + step_on), phase, splits),
            (pattern, max(ratio * (1.0 + 1e-9) if ratio < 1.0 else 1.0,
                          on_value - step_on), phase, splits),
        ):
            if remaining <= 0:
                break
            sig = build(cand)
            rate = rate_of(sig)
            evaluated.append({"params": cand, "rate": rate})
            remaining -= 1
            if rate < best_rate:
                best_rate, best_params, best_sig = rate, cand, sig
                improved = True
        if not improved:
            step_phase *= 0.5
            step_on *= 0.5
            if step_phase < T / 256.0:
                break
    rep = verify_pe(best_sig, cls, horizon=2.0 * T)
    report = {
        "decay": best_rate,
        "params": {"pattern": best_params[0], "on_value": best_params[1],
                   "phase": best_params[2], "splits": best_params[3]},
        "seed": seed, "budget": budget, "evaluations": len(evaluated),
        "pe_ok": rep.ok,
    }
    return best_sig, report
