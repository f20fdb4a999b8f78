"""Linear solvers for the block saddle system.

Three iterative outer solvers are provided:

* ``dbp_gmres``: flexible GMRES on the symmetric form, right-preconditioned
  by the diagonal block preconditioner diag(A, -Cb).
* ``tricg``: orthogonal tridiagonalisation of the symmetric quasi-definite
  form with an LDL^T short recurrence; requires the maps v -> A\\v and
  u -> Cb\\u like the GMRES variants.
* ``scp_gmres``: flexible GMRES on the equivalent non-symmetric form,
  right-preconditioned by the lower-triangular block [[A, 0], [-B, Sbar]]
  with an element-assembled approximate Schur complement Sbar.

The block maps are evaluated inexactly with a preconditioned conjugate
gradient inner solver at a configurable relative tolerance; outer stopping
always uses the unpreconditioned relative residual of the original system,
recomputed exactly for the final report. A dense factorisation oracle and a
sparse-LU direct path are included for verification and desk-scale runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from .assembly import BlockSystem, ErsatzMaterial, element_ops, interpolate_material
from .grid import PeriodicGrid
from .levelset import LevelSetField
from .material import MaterialTensors


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    """Iteration cap reached before the requested tolerance."""


class BreakdownError(SolverError):
    """The Krylov process broke down with an unconverged residual."""


@dataclass
class InnerSolverConfig:
    """Settings for the SPD inner solves (the block maps)."""

    rel_tol: float = 1e-2
    max_iters: int = 20000
    preconditioner: str = "jacobi"  # jacobi | ssor | none

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.preconditioner not in ("jacobi", "ssor", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveReport:
    method: str
    outer_iters: int
    inner_iters_A: float  # typical (mean) PCG iterations per A-block map
    inner_iters_C: float  # same for the Cb (or Sbar) map
    residual: float  # true relative residual of the returned solution
    wall_time: float
    converged: bool = True


# ----------------------------------------------------------------------
# inner SPD solver


def _jacobi_inv(M: sp.csr_matrix) -> NDArray:
    d = M.diagonal().copy()
    d[d == 0.0] = 1.0
    return 1.0 / d


def _make_preconditioner(M: sp.csr_matrix, kind: str):
    if kind == "none":
        return lambda r: r
    if kind == "jacobi":
        dinv = _jacobi_inv(M)
        return lambda r: dinv * r
    # symmetric Gauss-Seidel (SSOR with omega = 1):
    # z = (D + L)^-1 D (D + U)^-1 r
    csr = M.tocsr()
    lower = sp.tril(csr, 0).tocsr()
    upper = sp.triu(csr, 0).tocsr()
    d = csr.diagonal().copy()
    d[d == 0.0] = 1.0

    def apply(r):
        y = spla.spsolve_triangular(upper, r, lower=False, unit_diagonal=False)
        return spla.spsolve_triangular(lower, d * y, lower=True, unit_diagonal=False)

    return apply


def pcg(
    M: sp.csr_matrix,
    b: NDArray,
    rel_tol: float,
    max_iters: int,
    precond="jacobi",
    x0: NDArray | None = None,
) -> tuple[NDArray, int]:
    """Preconditioned conjugate gradients; returns (x, iterations).

    Stops when ||Mx - b|| <= rel_tol * ||b||. Raises ConvergenceError at the
    iteration cap.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    apply_pc = precond if callable(precond) else _make_preconditioner(M, precond)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - M @ x if x0 is not None else b.copy()
    if np.linalg.norm(r) <= rel_tol * bnorm:
        return x, 0
    z = apply_pc(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iters + 1):
        Mp = M @ p
        alpha = rz / (p @ Mp)
        x += alpha * p
        r -= alpha * Mp
        if np.linalg.norm(r) <= rel_tol * bnorm:
            return x, it
        z = apply_pc(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"PCG: no convergence to {rel_tol:.1e} within {max_iters} iterations"
    )


def inner_solve(M: sp.csr_matrix, b: NDArray, cfg: InnerSolverConfig) -> NDArray:
    """Solve an SPD system to the configured relative tolerance."""
    x, _ = pcg(M, b, cfg.rel_tol, cfg.max_iters, cfg.preconditioner)
    return x


class _BlockMap:
    """An SPD block map solved by PCG, counting iterations per application."""

    def __init__(self, M: sp.csr_matrix, cfg: InnerSolverConfig):
        self.M = M
        self.cfg = cfg
        self.precond = _make_preconditioner(M, cfg.preconditioner)
        self.counts: list[int] = []

    def __call__(self, b: NDArray) -> NDArray:
        x, it = pcg(self.M, b, self.cfg.rel_tol, self.cfg.max_iters, self.precond)
        self.counts.append(it)
        return x

    @property
    def mean_iters(self) -> float:
        return float(np.mean(self.counts)) if self.counts else 0.0


def _mean(counts: list[int]) -> float:
    return float(np.mean(counts)) if counts else 0.0


# ----------------------------------------------------------------------
# flexible GMRES


def fgmres(
    matvec,
    b: NDArray,
    precond,
    tol: float,
    max_outer: int = 500,
    x0: NDArray | None = None,
) -> tuple[NDArray, int]:
    """Right-preconditioned flexible GMRES (full basis, no restarts).

    The preconditioner may vary between applications (inexact inner
    solves), which is why the flexible variant is used. The Givens-updated
    residual equals the unpreconditioned residual of the original system.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matvec(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    if beta <= tol * bnorm:
        return x, 0

    N = len(b)
    V = [r / beta]
    Z: list[NDArray] = []
    H = np.zeros((max_outer + 1, max_outer))
    cs = np.zeros(max_outer)
    sn = np.zeros(max_outer)
    g = np.zeros(max_outer + 1)
    g[0] = beta

    k = 0
    for k in range(max_outer):
        z = precond(V[k])
        w = matvec(z)
        Z.append(z)
        # modified Gram-Schmidt
        for i in range(k + 1):
            H[i, k] = w @ V[i]
            w -= H[i, k] * V[i]
        H[k + 1, k] = np.linalg.norm(w)
        if H[k + 1, k] > 0.0:
            V.append(w / H[k + 1, k])
        else:
            V.append(np.zeros(N))
        # apply stored Givens rotations to the new column
        for i in range(k):
            t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = t
        denom = np.hypot(H[k, k], H[k + 1, k])
        if denom == 0.0:
            cs[k], sn[k] = 1.0, 0.0
        else:
            cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
        H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        if abs(g[k + 1]) <= tol * bnorm:
            k += 1
            break
    else:
        raise ConvergenceError(
            f"GMRES: no convergence to {tol:.1e} within {max_outer} iterations"
        )

    y = sla.solve_triangular(H[:k, :k], g[:k])
    for j in range(k):
        x += y[j] * Z[j]
    return x, k


def _finalize_report(
    method: str,
    sys_matvec,
    rhs: NDArray,
    z: NDArray,
    outer: int,
    itA: float,
    itC: float,
    t0: float,
) -> SolveReport:
    rnorm = np.linalg.norm(rhs - sys_matvec(z))
    bnorm = np.linalg.norm(rhs)
    rel = rnorm / bnorm if bnorm > 0 else rnorm
    return SolveReport(
        method=method,
        outer_iters=outer,
        inner_iters_A=itA,
        inner_iters_C=itC,
        residual=float(rel),
        wall_time=time.perf_counter() - t0,
    )


def dbp_gmres(
    sys: BlockSystem,
    case: int,
    tol: float = 1e-8,
    inner: InnerSolverConfig | None = None,
    max_outer: int = 500,
    x0: NDArray | None = None,
) -> tuple[NDArray, SolveReport]:
    """GMRES with the diagonal block preconditioner diag(A, -Cb)."""
    inner = inner or InnerSolverConfig()
    t0 = time.perf_counter()
    mapA = _BlockMap(sys.A, inner)
    mapC = _BlockMap(sys.Cb, inner)
    n = sys.n

    def precond(r):
        return np.concatenate([mapA(r[:n]), -mapC(r[n:])])

    z, outer = fgmres(sys.saddle_matvec, sys.rhs[case], precond, tol, max_outer, x0)
    return z, _finalize_report(
        "dbp_gmres", sys.saddle_matvec, sys.rhs[case], z, outer,
        mapA.mean_iters, mapC.mean_iters, t0,
    )


# ----------------------------------------------------------------------
# approximate Schur complement


@dataclass
class SchurPreconditioner:
    """Element-assembled approximation of the Schur complement Cb + B A^-1 B^T."""

    Sbar: sp.csr_matrix
    delta: float = 1e-10


def assemble_schur(
    ls: LevelSetField,
    m_scaled: MaterialTensors,
    grid: PeriodicGrid,
    delta: float = 1e-10,
    ersatz: float = 1e-3,
    weights: NDArray | None = None,
    pinned_p: NDArray | None = None,
) -> SchurPreconditioner:
    """Assemble Sbar = sum_e C_e + B_e (A_e + delta I)^-1 B_e^T.

    The per-element elasticity matrix is singular (rigid body modes), so a
    small diagonal perturbation delta makes it invertible; the outer solver
    is insensitive to its value over many orders of magnitude.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if weights is None:
        weights = interpolate_material(ls, m_scaled, ersatz).weights
    ops = element_ops(grid, m_scaled)
    Ae = np.einsum("eq,qij->eij", weights, ops.KA)
    Be = np.einsum("eq,qlj->elj", weights, ops.KB)
    Ce = np.einsum("eq,qlm->elm", weights, ops.KC)
    Ae += delta * np.eye(ops.nu)
    try:
        Ainv = np.linalg.inv(Ae)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"regularised element elasticity not invertible; delta={delta} too small"
        ) from exc
    Se = Ce + np.einsum("elj,ejk,emk->elm", Be, Ainv, Be)

    N = grid.node_count
    conn = grid.conn
    nloc = grid.nloc
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    S = sp.coo_matrix((Se.ravel(), (rows, cols)), shape=(N, N))
    if pinned_p is None:
        pinned_p = np.array([0], dtype=np.int64)
    pinned = np.zeros(N, dtype=bool)
    pinned[pinned_p] = True
    keep = ~(pinned[S.row] | pinned[S.col]) | (S.row == S.col)
    S = sp.coo_matrix((S.data[keep], (S.row[keep], S.col[keep])), shape=S.shape)
    Sbar = S.tocsr()
    Sbar = (Sbar + Sbar.T) * 0.5  # exact by construction; clean roundoff
    return SchurPreconditioner(Sbar=Sbar.tocsr(), delta=delta)


def scp_gmres(
    sys: BlockSystem,
    case: int,
    tol: float = 1e-8,
    inner: InnerSolverConfig | None = None,
    schur: SchurPreconditioner | None = None,
    max_outer: int = 500,
    x0: NDArray | None = None,
) -> tuple[NDArray, SolveReport]:
    """GMRES on the non-symmetric form with the Schur complement preconditioner.

    The preconditioner is the lower block triangle [[A, 0], [-B, Sbar]]; its
    application needs one A map and one Sbar map per outer iteration.
    """
    inner = inner or InnerSolverConfig()
    if schur is None:
        raise ValueError("scp_gmres requires an assembled SchurPreconditioner")
    t0 = time.perf_counter()
    mapA = _BlockMap(sys.A, inner)
    mapS = _BlockMap(schur.Sbar, inner)
    n = sys.n
    B = sys.B

    def precond(r):
        z1 = mapA(r[:n])
        z2 = mapS(r[n:] + B @ z1)
        return np.concatenate([z1, z2])

    rhs = sys.nonsym_rhs(case)
    z, outer = fgmres(sys.nonsym_matvec, rhs, precond, tol, max_outer, x0)
    # report the residual in the symmetric (original) formulation
    return z, _finalize_report(
        "scp_gmres", sys.saddle_matvec, sys.rhs[case], z, outer,
        mapA.mean_iters, mapS.mean_iters, t0,
    )


# ----------------------------------------------------------------------
# TriCG


def tricg(
    sys: BlockSystem,
    case: int,
    tol: float = 1e-8,
    inner: InnerSolverConfig | None = None,
    max_outer: int = 500,
) -> tuple[NDArray, SolveReport]:
    """Orthogonal-tridiagonalisation CG for the symmetric quasi-definite form.

    Builds A-orthonormal and Cb-orthonormal bases from the two right-hand
    side blocks and solves the projected block-tridiagonal system through an
    LDL^T recurrence with 2x2 pivots. Breakdown of the tridiagonalisation is
    reported distinctly from a plain iteration-cap failure; a breakdown with
    a converged residual is a lucky exact solve and returns normally.
    """
    inner = inner or InnerSolverConfig()
    t0 = time.perf_counter()
    mapA = _BlockMap(sys.A, inner)
    mapC = _BlockMap(sys.Cb, inner)
    n, m = sys.n, sys.m
    rhs = sys.rhs[case]
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n + m), _finalize_report(
            "tricg", sys.saddle_matvec, rhs, np.zeros(n + m), 0, 0.0, 0.0, t0
        )
    b, c = rhs[:n], rhs[n:]
    Bmat = sys.B

    rng = np.random.default_rng(0)
    if np.linalg.norm(b) == 0.0:
        b = rng.standard_normal(n)  # seed vector only; rhs projection stays exact
        b_scale = 0.0
    else:
        b_scale = 1.0
    if np.linalg.norm(c) == 0.0:
        c = rng.standard_normal(m)
        c_scale = 0.0
    else:
        c_scale = 1.0

    def checked_sqrt(vec, mapped):
        val = vec @ mapped
        return np.sqrt(val) if val > 0 else 0.0

    Mb = mapA(b)
    beta = checked_sqrt(b, Mb)
    Nc = mapC(c)
    gamma = checked_sqrt(c, Nc)
    if beta == 0.0 or gamma == 0.0:
        raise BreakdownError("TriCG: unable to seed the tridiagonalisation")

    v = Mb / beta
    d = b / beta  # tracks A v
    u = Nc / gamma
    f = c / gamma  # tracks Cb u
    d_prev = np.zeros(n)
    f_prev = np.zeros(m)
    beta_k = 0.0
    gamma_k = 0.0

    z = np.zeros(n + m)
    G_prev = np.zeros((n + m, 2))
    Delta_prev = np.zeros((2, 2))
    pi_prev = np.zeros(2)
    pi = np.array([beta * b_scale, gamma * c_scale])

    report_iters = 0
    for k in range(1, max_outer + 1):
        report_iters = k
        # projected 2x2 blocks
        q = Bmat.T @ u - gamma_k * d_prev
        p = Bmat @ v - beta_k * f_prev
        alpha = v @ q
        q = q - alpha * d
        p = p - alpha * f

        Omega = np.array([[1.0, alpha], [alpha, -1.0]])
        if k == 1:
            Delta = Omega
        else:
            Psi = np.array([[0.0, beta_k], [gamma_k, 0.0]])
            Lam = Psi @ np.linalg.inv(Delta_prev)
            Delta = Omega - Lam @ Psi.T
            pi = -Lam @ pi_prev
        xi = np.linalg.solve(Delta, pi)

        W = np.zeros((n + m, 2))
        W[:n, 0] = v
        W[n:, 1] = u
        if k == 1:
            G = W
        else:
            G = W - G_prev @ Lam.T
        z = z + G @ xi

        resid = np.linalg.norm(rhs - sys.saddle_matvec(z))
        if resid <= tol * bnorm:
            break

        Mq = mapA(q)
        beta_next = checked_sqrt(q, Mq)
        Np = mapC(p)
        gamma_next = checked_sqrt(p, Np)
        if beta_next == 0.0 or gamma_next == 0.0:
            raise BreakdownError(
                f"TriCG: tridiagonalisation breakdown at iteration {k} "
                f"with relative residual {resid / bnorm:.3e}"
            )
        d_prev, f_prev = d, f
        v, d = Mq / beta_next, q / beta_next
        u, f = Np / gamma_next, p / gamma_next
        beta_k, gamma_k = beta_next, gamma_next
        G_prev, Delta_prev, pi_prev = G, Delta, pi
    else:
        raise ConvergenceError(
            f"TriCG: no convergence to {tol:.1e} within {max_outer} iterations"
        )

    return z, _finalize_report(
        "tricg", sys.saddle_matvec, rhs, z, report_iters,
        mapA.mean_iters, mapC.mean_iters, t0,
    )


# ----------------------------------------------------------------------
# direct solvers


def dense_oracle(sys: BlockSystem, case: int) -> NDArray:
    """Dense LU solve of the full saddle system (verification oracle)."""
    size = sys.n + sys.m
    if size > 5000:
        raise ValueError(f"dense oracle capped at 5000 dofs, got {size}")
    factor = getattr(sys, "_dense_factor", None)
    if factor is None:
        factor = sla.lu_factor(sys.saddle_matrix().toarray())
        sys._dense_factor = factor
    return sla.lu_solve(factor, sys.rhs[case])


def direct_solve(sys: BlockSystem, case: int) -> tuple[NDArray, SolveReport]:
    """Sparse-LU solve of the saddle system; fast path for desk-scale runs."""
    t0 = time.perf_counter()
    lu = getattr(sys, "_splu_factor", None)
    if lu is None:
        lu = spla.splu(sys.saddle_matrix().tocsc())
        sys._splu_factor = lu
    z = lu.solve(sys.rhs[case])
    return z, _finalize_report(
        "direct", sys.saddle_matvec, sys.rhs[case], z, 0, 0.0, 0.0, t0
    )
