"""Stabilizing gain construction.

Three routes: transpose feedback on the oscillatory part of a neutrally
stable system (valid for every excitation class), the planar one-parameter
family for the double integrator with its cone geometry, and the full-rank
multi-input gain that turns the loop into a gated scalar contraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (DomainError, InternalConsistencyError, NotNeutrallyStable,
                     ShapeError)
from .matkit import as_matrix, eig, min_sv, one_norm, quad_roots
from .signals import PeClass

__all__ = [
    "A_DI", "B_DI", "A_ROTATION",
    "NeutralDecomposition", "neutral_decompose", "neutral_gain",
    "DIGain", "di_gain", "di_base_gain",
    "ConeGeometry", "cone_geometry",
    "multi_input_gain",
]

A_DI = np.array([[0.0, 1.0], [0.0, 0.0]])
B_DI = np.array([[0.0], [1.0]])
A_ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


# ---------------------------------------------------------------------------
# neutrally stable systems
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class NeutralDecomposition:
    """Coordinates y = S x in which A is block triangular with a Hurwitz
    leading block and a skew-symmetric trailing block."""

    S: np.ndarray
    S_inv: np.ndarray
    n_stable: int
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    B1: np.ndarray
    B3: np.ndarray


def _semisimple_on_axis(A: np.ndarray, axis_tol: float) -> None:
    """Raise unless every eigenvalue within axis_tol of the imaginary axis is
    semisimple.  Pairs +-i*omega are tested through the real kernel of
    A^2 + omega^2 I; the zero eigenvalue through the kernel of A itself."""
    n = A.shape[0]
    vals = eig(A)
    center = [v for v in vals if abs(v.real) <= axis_tol]
    if not center:
        return
    scale = max(one_norm(A), 1.0)
    omegas = sorted(abs(v.imag) for v in center)
    clusters: list[list[float]] = []
    for w in omegas:
        if clusters and w - clusters[-1][-1] <= 1e-7 * scale:
            clusters[-1].append(w)
        else:
            clusters.append([w])
    for group in clusters:
        w = float(np.mean(group))
        count = len(group)
        if w <= 1e-7 * scale:
            M = A
            rank_tol = 1e-8 * scale
        else:
            M = A @ A + (w * w) * np.eye(n)
            rank_tol = 1e-8 * scale * scale
        sv = np.linalg.svd(M, compute_uv=False)
        kdim = int(np.sum(sv <= rank_tol)) if sv.size else n
        if kdim != count:
            raise NotNeutrallyStable(
                f"imaginary-axis eigenvalue (omega={w:.6g}) has a nontrivial "
                f"Jordan block: kernel dim {kdim}, multiplicity {count}")


def neutral_decompose(A, B) -> NeutralDecomposition:
    """Split off the Hurwitz part and realize the oscillatory part as an
    honest skew-symmetric block.

    Ordered real Schur form puts the strictly stable eigenvalues first; the
    trailing quasi-triangular block, which is semisimple with purely
    imaginary spectrum, is then straightened into skew form through its real
    eigenvector pairs.
    """
    A = as_matrix(A, square=True, name="A")
    B = as_matrix(B, name="B")
    n = A.shape[0]
    axis_tol = 1e-10 * max(one_norm(A), 1.0)
    vals = eig(A)
    bad = [v for v in vals if v.real > axis_tol]
    if bad:
        raise NotNeutrallyStable(f"eigenvalue {bad[0]} has positive real part")
    _semisimple_on_axis(A, axis_tol)

    R, Z, n1 = scipy.linalg.schur(
        A, output="real", sort=lambda re, im: re < -axis_tol)
    nc = n - n1
    if nc == 0:
        S = Z.T
        S_inv = Z
        A3 = np.zeros((0, 0))
        A2 = np.zeros((n1, 0))
    else:
        R22 = R[n1:, n1:]
        w, V = np.linalg.eig(R22)
        cols = []
        used = np.zeros(nc, dtype=bool)
        order = np.argsort(-w.imag, kind="stable")
        pair_tol = 1e-9 * max(one_norm(R22), 1.0)
        for i in order:
            if used[i]:
                continue
            if w[i].imag > pair_tol:
                j = None
                for cand in range(nc):
                    if not used[cand] and cand != i and \
                            abs(w[cand] - w[i].conjugate()) <= 1e-6 * max(abs(w[i]), 1.0):
                        j = cand
                        break
                if j is None:
                    raise InternalConsistencyError("unpaired complex eigenvalue")
                used[i] = used[j] = True
                v = V[:, i]
                scale = math.sqrt(2.0) / np.linalg.norm(v)
                cols.append(v.real * scale)
                cols.append(v.imag * scale)
            elif abs(w[i].imag) <= pair_tol:
                used[i] = True
                v = V[:, i].real
                cols.append(v / np.linalg.norm(v))
        P3 = np.column_stack(cols)
        if P3.shape != (nc, nc):
            raise InternalConsistencyError("center basis has wrong size")
        P3_inv = np.linalg.inv(P3)
        A3 = P3_inv @ R22 @ P3
        A2 = R[:n1, n1:] @ P3
        S = np.block([
            [np.eye(n1), np.zeros((n1, nc))],
            [np.zeros((nc, n1)), P3_inv],
        ]) @ Z.T
        S_inv = Z @ np.block([
            [np.eye(n1), np.zeros((n1, nc))],
            [np.zeros((nc, n1)), P3],
        ])
    A1 = R[:n1, :n1]
    Bn = S @ B
    return NeutralDecomposition(S, S_inv, n1, A1, A2, A3, Bn[:n1], Bn[n1:])


def neutral_gain(A, B, r: float = 1.0) -> np.ndarray:
    """Gain that damps the oscillatory part: zero on the Hurwitz coordinates,
    -r times the transposed input block on the skew coordinates.  Valid for
    every excitation class; reduces to -r B^T when A is skew-symmetric."""
    if r <= 0.0:
        raise DomainError("gain scale r must be positive")
    dec = neutral_decompose(A, B)
    m = dec.B3.shape[1] if dec.B3.size else as_matrix(B).shape[1]
    K_dec = np.hstack([np.zeros((m, dec.n_stable)), -r * dec.B3.T])
    return K_dec @ dec.S


# ---------------------------------------------------------------------------
# double integrator
# ---------------------------------------------------------------------------

def di_base_gain(rho: float, k: float) -> np.ndarray:
    """The planar gain (-rho k^2 / 2, -k)."""
    return np.array([[-rho * k * k / 2.0, -k]])


@dataclass(frozen=True)
class DIGain:
    """Planar gain family member: K = (-lam^2 rho k^2 / 2, -lam k).

    The lam-scaled gain stabilizes a class exactly when the base gain
    stabilizes the lam-times-faster class.
    """

    cls: PeClass
    rho: float
    k: float
    lam: float = 1.0

    def __post_init__(self):
        bound = self.cls.mu / (2.0 * self.cls.T)
        if not (0.0 < self.rho < bound):
            raise DomainError(
                f"rho must lie in (0, {bound}) for this class, got {self.rho}")
        if self.k <= 0.0:
            raise DomainError("k must be positive")
        if self.lam < 1.0:
            raise DomainError("lam must be >= 1")
        # closed-loop eigenvalues stay real and negative across the whole
        # effective gate range [mu/T, 1]
        for a in (self.cls.ratio, 1.0):
            roots = quad_roots(a * self.k2, a * self.k1)
            if roots is None or roots[1] >= 0.0:
                raise InternalConsistencyError(
                    "closed-loop eigenvalues not real negative; rho bound breached")

    @property
    def k1(self) -> float:
        return self.lam ** 2 * self.rho * self.k ** 2 / 2.0

    @property
    def k2(self) -> float:
        return self.lam * self.k

    @property
    def K(self) -> np.ndarray:
        return np.array([[-self.k1, -self.k2]])

    @property
    def base_K(self) -> np.ndarray:
        return di_base_gain(self.rho, self.k)

    def to_json(self) -> dict:
        return {"kind": "di", "rho": self.rho, "k": self.k, "lam": self.lam,
                "T": self.cls.T, "mu": self.cls.mu, "K": self.K.tolist()}


def di_gain(cls: PeClass, rho: float, k: float, lam: float = 1.0) -> DIGain:
    return DIGain(cls, rho, k, lam)


@dataclass(frozen=True)
class ConeGeometry:
    """Slopes and membership tests for the upper-half-plane cones.

    xi_s_plus / xi_s_minus bound the sector in which the vertical component
    contracts like a gated scalar system; the other four slopes are the
    closed-loop eigendirections at the extreme constant gates.
    """

    rho: float
    k: float
    ratio: float
    xi_s_plus: float
    xi_s_minus: float
    xi_1_plus: float
    xi_1_minus: float
    xi_r_plus: float
    xi_r_minus: float

    @property
    def ordered_slopes(self) -> tuple:
        return (self.xi_s_plus, self.xi_1_plus, self.xi_r_plus,
                self.xi_r_minus, self.xi_1_minus, self.xi_s_minus)

    @property
    def theta_s_plus(self) -> float:
        return math.pi + math.atan(self.xi_s_plus)

    @property
    def theta_s_minus(self) -> float:
        return math.pi + math.atan(self.xi_s_minus)

    def cs_quadratic(self, x1, x2):
        """Negative inside the central cone, positive in the outer cones;
        antipodal-invariant, so it classifies mod-pi directions."""
        return (x2 - self.xi_s_plus * x1) * (x2 - self.xi_s_minus * x1)

    def in_cs(self, x, tol: float = 0.0) -> bool:
        x1, x2 = float(x[0]), float(x[1])
        return self.cs_quadratic(x1, x2) <= tol * (x1 * x1 + x2 * x2)

    def in_c12(self, x, tol: float = 0.0) -> bool:
        x1, x2 = float(x[0]), float(x[1])
        return self.cs_quadratic(x1, x2) >= -tol * (x1 * x1 + x2 * x2)

    def theta_mod_pi(self, theta: float) -> float:
        return theta - math.floor(theta / math.pi) * math.pi

    def region_of_theta(self, theta: float) -> str:
        """'C1', 'CS' or 'C2' for the mod-pi direction of an angle."""
        th = self.theta_mod_pi(theta)
        if th < self.theta_s_plus:
            return "C2"
        if th <= self.theta_s_minus:
            return "CS"
        return "C1"


def cone_geometry(rho: float, k: float, ratio: float) -> ConeGeometry:
    """Slopes for the cone decomposition; the strict ordering
    xi_s_plus < xi_1_plus < xi_r_plus < xi_r_minus < xi_1_minus < xi_s_minus < 0
    is asserted at tolerance 1e-12*k."""
    if not (0.0 < ratio <= 1.0):
        raise DomainError("ratio must lie in (0, 1]")
    if not (0.0 < rho < ratio / 2.0):
        raise DomainError(f"rho must lie in (0, {ratio / 2.0})")
    if k <= 0.0:
        raise DomainError("k must be positive")
    xi_s_plus = -0.5 * k * (1.0 + math.sqrt(1.0 - rho))
    xi_s_minus = -0.5 * k * (1.0 - math.sqrt(1.0 - (2.0 - rho / 2.0) * rho))
    r1 = quad_roots(k, rho * k * k / 2.0)
    rr = quad_roots(ratio * k, ratio * rho * k * k / 2.0)
    if r1 is None or rr is None:
        raise InternalConsistencyError("eigen-slopes not real; rho bound breached")
    geom = ConeGeometry(rho, k, ratio, xi_s_plus, xi_s_minus,
                        r1[0], r1[1], rr[0], rr[1])
    # at ratio == 1 the two eigen-slope families coincide; the strict chain
    # applies to the distinct slopes only
    if ratio == 1.0:
        chain = (geom.xi_s_plus, geom.xi_1_plus, geom.xi_1_minus,
                 geom.xi_s_minus, 0.0)
    else:
        chain = geom.ordered_slopes + (0.0,)
    margin = 1e-12 * k
    for a, b in zip(chain, chain[1:]):
        if not (a < b - margin):
            raise InternalConsistencyError(
                f"cone slope ordering violated: {a} !< {b}")
    return geom


# ---------------------------------------------------------------------------
# rank-2 input matrix
# ---------------------------------------------------------------------------

def gain_json(kind: str, K: np.ndarray, **params) -> dict:
    """Serialized gain: {kind, params..., K}."""
    out = {"kind": kind, "K": np.asarray(K, dtype=float).tolist()}
    out.update(params)
    return out


def multi_input_gain(B, k: float) -> np.ndarray:
    """K = -k * B^+ for a full-row-rank 2 x m input matrix, so B K = -k Id.

    The minimal-norm right inverse comes from the SVD; rank deficiency is
    rejected (a single effective input column should go through the planar
    gain family instead)."""
    B = as_matrix(B, name="B")
    if B.shape[0] != 2:
        raise ShapeError("multi-input gain expects a 2 x m input matrix")
    if k <= 0.0:
        raise DomainError("k must be positive")
    scale = max(one_norm(B), 1e-300)
    if min_sv(B) <= 1e-10 * scale:
        raise DomainError(
            "input matrix has rank < 2; use the planar gain family on a "
            "controllable column instead")
    return -k * np.linalg.pinv(B)
