"""Exact propagation of x' = (A + alpha(t) B K) x for piecewise-constant alpha.

On every maximal interval where the signal is constant, the state advances by
a cached matrix exponential, so there is no integration error beyond expm
accuracy; signal breakpoints are mandatory samples.  Crossing detection works
on exponential dense output, never on interpolation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateStateError, DomainError, ShapeError)
from .matkit import as_matrix, expm, one_norm
from .signals import PwcSignal

__all__ = [
    "ClosedLoop",
    "Trajectory",
    "HalfLine",
    "propagate",
    "propagate_batch",
    "detect_crossing",
    "polar_lift",
    "fmap_F",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("t", "x", "alpha", "V", "r", "theta", "F_theta")

_CROSSING_REL_TOL = 1e-12


@dataclass(eq=False)
class ClosedLoop:
    """The loop x' = (A + alpha(t) B K) x."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    alpha: PwcSignal

    def __post_init__(self):
        self.A = as_matrix(self.A, square=True, name="A")
        self.B = as_matrix(self.B, name="B")
        self.K = as_matrix(self.K, name="K")
        n = self.A.shape[0]
        if self.B.shape[0] != n:
            raise ShapeError(f"B must have {n} rows, got {self.B.shape}")
        if self.K.shape != (self.B.shape[1], n):
            raise ShapeError(
                f"K must be {self.B.shape[1]}x{n}, got {self.K.shape}")
        self._bk = self.B @ self.K
        self._mats: dict = {}

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def matrix(self, a: float) -> np.ndarray:
        m = self._mats.get(a)
        if m is None:
            m = self.A + a * self._bk
            self._mats[a] = m
        return m

    def norm_scale(self) -> float:
        return max(one_norm(self.A) + one_norm(self._bk), 1e-9)

    def default_max_step(self) -> float:
        # 1e-2 of the characteristic time; also keeps per-step angle swings
        # well under pi/4 so the polar unwrap cannot alias.
        return 1e-2 / self.norm_scale()


@dataclass(eq=False)
class Trajectory:
    """Sampled solution with exact in-segment dense output.

    seg_alpha[j] is the signal value on [times[j], times[j+1]); channels maps
    a name (V, r, theta, F_theta) to a per-sample array.
    """

    loop: ClosedLoop
    times: np.ndarray
    states: np.ndarray
    seg_alpha: np.ndarray
    channels: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def state_at(self, t: float) -> np.ndarray:
        """Exact state at any time inside the sampled range."""
        if not (self.times[0] <= t <= self.times[-1]):
            raise DomainError(f"t={t} outside sampled range")
        j = int(np.searchsorted(self.times, t, side="right") - 1)
        j = min(max(j, 0), len(self.times) - 2)
        m = self.loop.matrix(float(self.seg_alpha[j]))
        return expm(m, t - self.times[j]) @ self.states[j]

    def with_channels(self, **named) -> "Trajectory":
        ch = dict(self.channels)
        for k, v in named.items():
            arr = np.asarray(v, dtype=float)
            if arr.shape != self.times.shape:
                raise ShapeError(f"channel {k} must be per-sample")
            ch[k] = arr
        return Trajectory(self.loop, self.times, self.states, self.seg_alpha, ch)

    def with_energy(self) -> "Trajectory":
        return self.with_channels(V=0.5 * np.sum(self.states ** 2, axis=1))

    def window(self, i0: int, i1: int) -> "Trajectory":
        """Sub-trajectory over sample indices [i0, i1] inclusive."""
        if not (0 <= i0 < i1 < len(self.times)):
            raise DomainError("bad sample window")
        ch = {k: v[i0:i1 + 1] for k, v in self.channels.items()}
        return Trajectory(self.loop, self.times[i0:i1 + 1],
                          self.states[i0:i1 + 1], self.seg_alpha[i0:i1], ch)

    def to_csv(self, path) -> None:
        n = self.n
        header = ["t"] + [f"x{i+1}" for i in range(n)] + \
            ["alpha", "V", "r", "theta", "F_theta"]
        chans = self.channels
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j, t in enumerate(self.times):
                a = self.seg_alpha[min(j, len(self.seg_alpha) - 1)]
                row = [repr(float(t))] + [repr(float(x)) for x in self.states[j]]
                row.append(repr(float(a)))
                for name in ("V", "r", "theta", "F_theta"):
                    row.append(repr(float(chans[name][j])) if name in chans else "")
                w.writerow(row)


def _propagate_states(loop: ClosedLoop, t0: float, x0: np.ndarray, t1: float,
                      max_step: float | None):
    """Shared driver; x0 has shape (n, m) and states come back (N, n, m)."""
    if not (0.0 <= t0 < t1):
        raise DomainError("need 0 <= t0 < t1")
    if max_step is None:
        max_step = loop.default_max_step()
    if max_step <= 0.0:
        raise DomainError("max_step must be positive")
    times = [t0]
    states = [x0]
    seg_alpha = []
    cache: dict = {}
    x = x0
    for (s, e, a) in loop.alpha.segments(t0, t1):
        seg_len = e - s
        nsub = max(1, int(math.ceil(seg_len / max_step - 1e-12)))
        h = seg_len / nsub
        phi = cache.get((a, h))
        if phi is None:
            phi = expm(loop.matrix(a), h)
            cache[(a, h)] = phi
        for i in range(nsub):
            x = phi @ x
            times.append(e if i == nsub - 1 else s + (i + 1) * h)
            states.append(x)
            seg_alpha.append(a)
    return (np.asarray(times), np.stack(states), np.asarray(seg_alpha))


def propagate(loop: ClosedLoop, t0: float, x0, t1: float,
              max_step: float | None = None) -> Trajectory:
    """Propagate a single initial state; exact on constant-alpha pieces."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (loop.n,):
        raise ShapeError(f"x0 must have length {loop.n}")
    if not np.all(np.isfinite(x0)):
        raise ShapeError("x0 has non-finite entries")
    times, states, seg_alpha = _propagate_states(
        loop, t0, x0.reshape(-1, 1), t1, max_step)
    return Trajectory(loop, times, states[:, :, 0], seg_alpha)


def propagate_batch(loop: ClosedLoop, t0: float, x0_columns, t1: float,
                    max_step: float | None = None) -> list:
    """Propagate many initial states through the same signal in one sweep.

    Returns one Trajectory per column; they share times and seg_alpha arrays.
    """
    x0m = np.asarray(x0_columns, dtype=float)
    if x0m.ndim != 2 or x0m.shape[0] != loop.n:
        raise ShapeError(f"x0 columns must form an {loop.n} x m array")
    times, states, seg_alpha = _propagate_states(loop, t0, x0m, t1, max_step)
    return [Trajectory(loop, times, states[:, :, j], seg_alpha)
            for j in range(x0m.shape[1])]


@dataclass(frozen=True)
class HalfLine:
    """A half-line through the origin: x2 = slope*x1 (or x1 = 0 if slope is
    None) restricted by a sign on x1 (on x2 for the vertical case)."""

    slope: float | None
    sign: int = 0
    closed: bool = True

    def functional(self, x) -> float:
        if self.slope is None:
            return float(x[0])
        return float(x[1] - self.slope * x[0])

    def side_ok(self, x, tol: float = 0.0) -> bool:
        if self.sign == 0:
            return True
        c = float(x[1]) if self.slope is None else float(x[0])
        return c * self.sign > -tol

    def contains(self, x, tol: float) -> bool:
        return abs(self.functional(x)) <= tol and self.side_ok(x, tol)

    @staticmethod
    def negative_x1_axis() -> "HalfLine":
        return HalfLine(0.0, -1)

    @staticmethod
    def positive_x1_axis() -> "HalfLine":
        return HalfLine(0.0, +1)

    @staticmethod
    def upper(slope: float) -> "HalfLine":
        """Half-line of slope < 0 lying in the open upper half-plane."""
        return HalfLine(slope, -1)


def detect_crossing(traj: Trajectory, seg_index: int, target: HalfLine):
    """Crossing time of `target` within sample segment seg_index, or None.

    Bisection on the target's linear functional evaluated on exponential
    dense output; time accuracy 1e-12 of the segment length.  The half-line
    sign constraint is verified at the located crossing.
    """
    j = int(seg_index)
    if not (0 <= j < len(traj.seg_alpha)):
        raise DomainError("segment index out of range")
    t_lo, t_hi = float(traj.times[j]), float(traj.times[j + 1])
    x_lo, x_hi = traj.states[j], traj.states[j + 1]
    g_lo, g_hi = target.functional(x_lo), target.functional(x_hi)
    scale = max(np.linalg.norm(x_lo), np.linalg.norm(x_hi), 1e-300)

    if g_lo == 0.0:
        return t_lo if target.side_ok(x_lo, 1e-12 * scale) else None
    if g_hi == 0.0:
        return t_hi if target.side_ok(x_hi, 1e-12 * scale) else None
    if g_lo * g_hi > 0.0:
        return None

    m = traj.loop.matrix(float(traj.seg_alpha[j]))
    base_t, base_x = t_lo, x_lo
    tol = _CROSSING_REL_TOL * (t_hi - t_lo)
    lo, hi = t_lo, t_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        x_mid = expm(m, mid - base_t) @ base_x
        g_mid = target.functional(x_mid)
        if g_mid == 0.0:
            lo = hi = mid
            break
        if (g_mid > 0.0) == (g_lo > 0.0):
            lo = mid
        else:
            hi = mid
    tc = 0.5 * (lo + hi)
    xc = expm(m, tc - base_t) @ base_x
    if not target.side_ok(xc, 1e-12 * max(float(np.linalg.norm(xc)), 1e-300)):
        return None
    return tc


def polar_lift(traj: Trajectory) -> Trajectory:
    """Attach r and continuously-unwrapped theta channels (planar only).

    theta starts in (-pi, pi] and continues by nearest branch; propagate's
    default step keeps per-step swings below pi/4, so no aliasing.
    """
    if traj.n != 2:
        raise ShapeError("polar lift requires a planar trajectory")
    x1 = traj.states[:, 0]
    x2 = traj.states[:, 1]
    r = np.hypot(x1, x2)
    if np.any(r < 1e-300):
        raise DegenerateStateError("zero state has no direction")
    base = np.arctan2(x2, x1)
    theta = np.empty_like(base)
    theta[0] = base[0] if base[0] != -np.pi else np.pi
    two_pi = 2.0 * np.pi
    for j in range(1, len(base)):
        theta[j] = base[j] + two_pi * np.round((theta[j - 1] - base[j]) / two_pi)
    return traj.with_channels(r=r, theta=theta)


def fmap_F(theta, k: float):
    """Gain-dependent reparameterization of the angle.

    On [0, pi]: arctan(tan(theta)/k), with value pi/2 at pi/2 and the branch
    on (pi/2, pi] lifted by pi; extended to all angles by F(t + pi) =
    F(t) + pi so it composes with unwrapped angles.
    """
    if k <= 0.0:
        raise DomainError("reparameterization gain must be positive")
    th = np.asarray(theta, dtype=float)
    scalar = th.ndim == 0
    th = np.atleast_1d(th)
    m = np.floor(th / np.pi)
    phi = th - m * np.pi  # in [0, pi)
    half = 0.5 * np.pi
    with np.errstate(divide="ignore"):
        out = np.arctan(np.tan(phi) / k)
    out = np.where(phi > half, out + np.pi, out)
    out = np.where(phi == half, half, out)
    out = out + m * np.pi
    return float(out[0]) if scalar else out
