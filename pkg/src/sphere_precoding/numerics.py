"""Dense complex linear algebra and the norm-constrained least-squares solver.

The solver handles exactly one problem class::

    minimize    || A f - C 1 ||_2
    subject to  || B_l f ||_2 <= eps_l      for each interference block l
                || f ||_2     <= P

with complex ``f``. It works on the squared form (same minimiser) in a
reduced coordinate system and runs a primal-dual interior-point method on
the real-lifted problem, where complex ``z`` maps to ``[Re z; Im z]``.
Iterates stay strictly feasible, so returned vectors satisfy every
inequality constraint exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import scipy.linalg


class NumericalError(RuntimeError):
    pass


class RankDeficientError(NumericalError):
    def __init__(self, column: int, ratio: float):
        super().__init__(f"matrix is rank deficient: column {column} is (nearly) dependent on the others (sigma_min/sigma_max = {ratio:.2e})")
        self.column = column


def hermitian_eig(r: np.ndarray, rtol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvectors and eigenvalues of a Hermitian matrix, largest first."""
    r = np.asarray(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("matrix has non-finite entries")
    scale = np.linalg.norm(r)
    if np.linalg.norm(r - r.conj().T) > rtol * max(scale, np.finfo(float).tiny):
        raise ValueError("matrix is not Hermitian")
    vals, vecs = np.linalg.eigh(r)
    return vecs[:, ::-1], vals[::-1]


def pseudo_inverse(h: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Left inverse ``(H^H H)^{-1} H^H`` of a tall full-column-rank matrix."""
    h = np.asarray(h)
    if h.ndim == 1:
        h = h[:, None]
    n, k = h.shape
    if k > n:
        raise ValueError(f"expected a tall matrix, got {n}x{k}")
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    if s[-1] <= rcond * s[0]:
        # the last pivot of a column-pivoted QR is the most dependent column
        _, _, piv = scipy.linalg.qr(h, mode="economic", pivoting=True)
        raise RankDeficientError(int(piv[-1]), s[-1] / s[0] if s[0] > 0 else 0.0)
    return (vh.conj().T / s) @ u.conj().T


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max-iterations"
    INFEASIBLE = "infeasible"


@dataclass
class ConeProblem:
    """Data for one sphere-precoding solve.

    ``objective_basis`` is the ``r x N`` matrix whose product with ``f`` is
    driven toward ``target_level * 1``; each interference block is a pair
    ``(B_l, eps_l)``.
    """

    objective_basis: np.ndarray
    target_level: float = 1.0
    interference_blocks: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    power_cap: float = 1.0

    @property
    def dim(self) -> int:
        return self.objective_basis.shape[1]

    def objective(self, f: np.ndarray) -> float:
        a = np.asarray(self.objective_basis)
        return float(np.linalg.norm(a @ f - self.target_level))

    def validate(self) -> None:
        a = np.asarray(self.objective_basis)
        if a.ndim != 2:
            raise ValueError("objective basis must be a matrix")
        n = a.shape[1]
        if not np.all(np.isfinite(a)) or not np.isfinite(self.target_level):
            raise ValueError("objective data has non-finite entries")
        for i, (b, eps) in enumerate(self.interference_blocks):
            b = np.asarray(b)
            if b.ndim != 2 or b.shape[1] != n:
                raise ValueError(f"interference block {i} has shape {b.shape}, expected (*, {n})")
            if not np.all(np.isfinite(b)) or not np.isfinite(eps):
                raise ValueError(f"interference block {i} has non-finite entries")
        if not np.isfinite(self.power_cap):
            raise ValueError("power cap must be finite")


@dataclass
class ConeSolution:
    vector: np.ndarray
    objective_value: float
    status: SolveStatus
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


@dataclass(frozen=True)
class SolverTolerances:
    """Stopping rule for :func:`cone_solve`.

    ``gap`` bounds the surrogate duality gap on the halved squared
    objective, relative to ``max(1, C^2 r / 2)``; ``residual`` bounds the
    dual (stationarity) residual.
    """

    gap: float = 1e-13
    residual: float = 1e-9
    max_iterations: int = 200


def _orth(m: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    if m.shape[1] == 0:
        return np.zeros((m.shape[0], 0), dtype=complex)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((m.shape[0], 0), dtype=complex)
    return u[:, s > rtol * s[0]]


def _null(m: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    d = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(d, dtype=complex)
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    keep = int(np.count_nonzero(s > rtol * max(s[0], 1e-300))) if s.size else 0
    return vh[keep:].conj().T


def _lift(p: np.ndarray) -> np.ndarray:
    """Real 2m x 2n representation of a complex m x n matrix."""
    return np.block([[p.real, -p.imag], [p.imag, p.real]])


def cone_solve(problem: ConeProblem, tol: SolverTolerances = SolverTolerances()) -> ConeSolution:
    """Solve the sphere-precoding problem; see the module docstring."""
    problem.validate()
    a = np.asarray(problem.objective_basis, dtype=complex)
    n = a.shape[1]
    c_level = float(problem.target_level)
    cap = float(problem.power_cap)
    blocks = [(np.asarray(b, dtype=complex), float(e)) for b, e in problem.interference_blocks]

    if cap <= 0 or any(e < 0 for _, e in blocks):
        return ConeSolution(np.zeros(n, dtype=complex), problem.objective(np.zeros(n)), SolveStatus.INFEASIBLE)

    # Components orthogonal to every row space change nothing but ||f||, so the
    # optimum lies in the joint row space; zero-capped blocks become equalities.
    q = _orth(np.hstack([a.conj().T] + [b.conj().T for b, _ in blocks]))
    eq = [b for b, e in blocks if e == 0.0]
    if eq and q.shape[1]:
        q = q @ _null(np.vstack(eq) @ q)
    ineq = [(b @ q, e) for b, e in blocks if e > 0.0]
    d = q.shape[1]
    zero = np.zeros(n, dtype=complex)
    if d == 0:
        return ConeSolution(zero, problem.objective(zero), SolveStatus.OPTIMAL)

    ar = _lift(a @ q)
    cr = np.concatenate([np.full(a.shape[0], c_level), np.zeros(a.shape[0])])
    obj_hess = ar.T @ ar
    obj_lin = ar.T @ cr
    dim = 2 * d
    # each constraint is normalised to (||B x||^2 / eps^2 - 1) / 2 <= 0
    hess_i = [_lift(b).T @ _lift(b) / (e * e) for b, e in ineq] + [np.eye(dim) / (cap * cap)]
    m = len(hess_i)
    scale = max(1.0, 0.5 * c_level**2 * a.shape[0])

    def constraints(x):
        return 0.5 * (np.array([x @ g @ x for g in hess_i]) - 1.0)

    def grads(x):
        return np.column_stack([g @ x for g in hess_i])

    def residual(x, lam, t):
        r_dual = obj_hess @ x - obj_lin + grads(x) @ lam
        r_cent = -lam * constraints(x) - 1.0 / t
        return r_dual, r_cent

    x = np.zeros(dim)
    lam = np.ones(m)
    mu, alpha, beta = 10.0, 0.01, 0.5
    status = SolveStatus.MAX_ITERATIONS
    it = 0
    for it in range(1, tol.max_iterations + 1):
        fx = constraints(x)
        gap = float(-fx @ lam)
        r_dual, _ = residual(x, lam, 1.0)
        if gap <= tol.gap * scale and np.linalg.norm(r_dual) <= tol.residual * scale:
            status = SolveStatus.OPTIMAL
            break
        t = mu * m / gap
        r_dual, r_cent = residual(x, lam, t)
        df = grads(x)
        h = obj_hess + sum(l * hi for l, hi in zip(lam, hess_i)) + (df * (lam / -fx)) @ df.T
        rhs = -r_dual - df @ (r_cent / fx)
        try:
            dx = scipy.linalg.solve(h, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            dx = np.linalg.lstsq(h, rhs, rcond=None)[0]
        dlam = (r_cent - lam * (df.T @ dx)) / fx

        neg = dlam < 0
        s = min(1.0, float(np.min(-lam[neg] / dlam[neg]))) if np.any(neg) else 1.0
        s *= 0.99
        while np.any(constraints(x + s * dx) >= 0):
            s *= beta
            if s < 1e-20:
                break
        norm0 = np.hypot(np.linalg.norm(r_dual), np.linalg.norm(r_cent))
        while s > 1e-20:
            rd, rc = residual(x + s * dx, lam + s * dlam, t)
            if np.hypot(np.linalg.norm(rd), np.linalg.norm(rc)) <= (1 - alpha * s) * norm0:
                break
            s *= beta
        if s <= 1e-20:
            break
        x = x + s * dx
        lam = lam + s * dlam

    z = x[:d] + 1j * x[d:]
    f = q @ z
    return ConeSolution(f, problem.objective(f), status, it)
