"""Controllability Gramian of x' = Ax + alpha(t)Bu and the window threshold.

The Gramian carries the squared gate, W(t) = int_0^t alpha(s)^2
e^{A(t-s)} B B^T e^{A^T(t-s)} ds: the gate multiplies the input, so the
reachability integrand sees alpha^2.  Since alpha >= 0 this has the same
kernel as the unsquared condition.  Each constant-alpha segment is resolved
by a block-matrix-exponential quadrature, so the result is exact to expm
accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .matkit import as_matrix, expm, min_sv
from .signals import PeClass, PwcSignal, verify_pe

__all__ = [
    "GramianReport",
    "ThresholdReport",
    "gramian",
    "kalman_rank",
    "threshold_check",
    "adversarial_signal",
    "witness_residual",
]

_CTRL_TOL = 1e-9


@dataclass(eq=False)
class GramianReport:
    t: float
    W: np.ndarray
    min_sv: float
    controllable: bool
    witness: np.ndarray | None
    tol: float

    def to_json(self) -> dict:
        out = {"t": self.t, "min_sv": self.min_sv,
               "controllable": self.controllable}
        if self.witness is not None:
            out["witness"] = [float(v) for v in self.witness]
        return out


def _segment_gramian(A: np.ndarray, Q: np.ndarray, h: float) -> tuple:
    """(e^{Ah}, int_0^h e^{As} Q e^{A^T s} ds) via one block exponential."""
    n = A.shape[0]
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = -A
    C[:n, n:] = Q
    C[n:, n:] = A.T
    E = expm(C, h)
    f22 = E[n:, n:]          # e^{A^T h}
    phi = f22.T              # e^{A h}
    H = phi @ E[:n, n:]
    return phi, 0.5 * (H + H.T)


def gramian(A, B, alpha: PwcSignal, t: float, tol: float = _CTRL_TOL) -> GramianReport:
    """Gramian over [0, t]; controllable iff min_sv(W) > tol * trace(W)/n."""
    if t <= 0.0:
        raise DomainError("horizon must be positive")
    A = as_matrix(A, square=True, name="A")
    B = as_matrix(B, name="B")
    n = A.shape[0]
    Q = B @ B.T
    W = np.zeros((n, n))
    cache: dict = {}
    for (s, e, a) in alpha.segments(0.0, t):
        h = e - s
        got = cache.get(h)
        if got is None:
            got = _segment_gramian(A, Q, h)
            cache[h] = got
        phi, H = got
        W = phi @ W @ phi.T + (a * a) * H
    W = 0.5 * (W + W.T)
    sv = min_sv(W)
    scale = float(np.trace(W)) / n
    controllable = bool(sv > tol * scale)
    witness = None
    if not controllable:
        _, _, vt = np.linalg.svd(W)
        witness = vt[-1] / np.linalg.norm(vt[-1])
    return GramianReport(t, W, sv, controllable, witness, tol)


def kalman_rank(A, B) -> int:
    """Rank of [B, AB, ..., A^(n-1)B] at relative tolerance 1e-10."""
    A = as_matrix(A, square=True, name="A")
    B = as_matrix(B, name="B")
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    C = np.hstack(blocks)
    sv = np.linalg.svd(C, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > 1e-10 * sv[0]))


def adversarial_signal(cls: PeClass) -> PwcSignal:
    """Member of the class that is zero on [0, T - mu]: off-block first, then
    full excitation; every length-T window still integrates to exactly mu."""
    T, mu = cls.T, cls.mu
    if mu >= T:
        return PwcSignal.constant(1.0)
    return PwcSignal.periodic((0.0, T - mu, T), (0.0, 1.0))


def witness_residual(A, B, alpha: PwcSignal, t: float, p: np.ndarray,
                     grid: int = 2000) -> float:
    """max over a fine s-grid of |alpha(s) p^T e^{A(t-s)} B|.

    The gate is sampled at grid-cell midpoints: the kernel condition only
    holds almost everywhere, and switch instants carry no measure."""
    A = as_matrix(A, square=True)
    B = as_matrix(B)
    h = t / grid
    step = expm(A.T, -h)
    y = expm(A.T, t - 0.5 * h) @ p  # y(s) = e^{A^T (t-s)} p at s = h/2
    worst = 0.0
    for i in range(grid):
        s = (i + 0.5) * h
        val = alpha.value_at(s) * np.max(np.abs(B.T @ y))
        worst = max(worst, float(val))
        y = step @ y
    return worst


@dataclass(eq=False)
class ThresholdReport:
    t: float
    cls: PeClass
    claim: bool
    evidence: dict

    def to_json(self) -> dict:
        return {"t": self.t, "T": self.cls.T, "mu": self.cls.mu,
                "claim": self.claim, "evidence": self.evidence}


def threshold_check(A, B, cls: PeClass, t: float, battery,
                    tol: float = _CTRL_TOL) -> ThresholdReport:
    """Controllability dichotomy at horizon t.

    t <= T - mu: build the adversarial signal (zero on [0, t]) and certify the
    Gramian singular. t > T - mu: certify the Gramian nonsingular for every
    battery member and report the smallest min_sv seen.
    """
    A = as_matrix(A, square=True)
    B = as_matrix(B)
    n = A.shape[0]
    if kalman_rank(A, B) != n:
        raise PreconditionError("(A, B) must be a controllable pair")
    boundary = cls.T - cls.mu
    if t <= boundary + 1e-12:
        adv = adversarial_signal(cls)
        rep = gramian(A, B, adv, t, tol)
        singular = not rep.controllable
        ev = {"kind": "adversarial", "min_sv": rep.min_sv,
              "pe_ok": verify_pe(adv, cls, horizon=2 * cls.T).ok}
        if rep.witness is not None:
            ev["witness"] = [float(v) for v in rep.witness]
            ev["witness_residual"] = witness_residual(A, B, adv, t, rep.witness)
        return ThresholdReport(t, cls, singular, ev)
    worst = math.inf
    all_ok = True
    for sig in battery:
        rep = gramian(A, B, sig, t, tol)
        worst = min(worst, rep.min_sv / max(float(np.trace(rep.W)) / n, 1e-300))
        all_ok = all_ok and rep.controllable
    ev = {"kind": "battery", "battery_size": len(battery),
          "worst_relative_min_sv": worst}
    return ThresholdReport(t, cls, all_ok, ev)
