"""Assembly of the block saddle system for periodic piezoelectric cells.

The discretised cell problems take the symmetric quasi-definite form

    [ A   B^T ] [u]   [a]
    [ B  -Cb  ] [p] = [b]

with A the elasticity block, Cb the dielectric block (both SPD after
null-space pinning) and B the piezoelectric coupling. Material tensors are
relaxed over the whole cell with the ersatz weight
w(phi) = ersatz + (1 - ersatz)(1 - H_eta(phi)) evaluated at quadrature
points, so void regions keep a small positive stiffness. One displacement
node and one potential node are pinned to zero to remove the constant
null space of the periodic problem; only gradients of the fluctuations
enter the homogenised tensors, so pinning is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .grid import PeriodicGrid
from .levelset import LevelSetField, solid_weight
from .material import MaterialTensors, VOIGT_PAIRS, voigt_count


@dataclass(frozen=True)
class LoadCase:
    """One applied macroscopic field: a unit strain (Voigt) or unit E-field."""

    kind: str  # "strain" | "efield"
    index: int  # Voigt index for strain, axis for efield
    macro: NDArray  # Voigt strain vector or E-field vector

    @property
    def label(self) -> str:
        return f"{self.kind}{self.index}"


def load_cases(dim: int) -> list[LoadCase]:
    """All unique macroscopic load cases: nv strains then dim E-fields."""
    nv = voigt_count(dim)
    cases = [
        LoadCase(kind="strain", index=p, macro=np.eye(nv)[p]) for p in range(nv)
    ]
    cases += [
        LoadCase(kind="efield", index=a, macro=np.eye(dim)[a]) for a in range(dim)
    ]
    return cases


@dataclass(frozen=True)
class ErsatzMaterial:
    """Material tensors with per-quadrature-point ersatz weights."""

    base: MaterialTensors
    weights: NDArray  # (nelem, nq)
    ersatz: float


def interpolate_material(
    ls: LevelSetField, m: MaterialTensors, ersatz: float
) -> ErsatzMaterial:
    """Scale material tensors pointwise by the relaxed characteristic function."""
    if not 0.0 < ersatz < 1.0:
        raise ValueError(f"ersatz must lie in (0, 1), got {ersatz}")
    vals, _ = ls.grid.interpolate_scalar(ls.phi)
    return ErsatzMaterial(base=m, weights=solid_weight(vals, ls.eta, ersatz), ersatz=ersatz)


# ----------------------------------------------------------------------
# per-quadrature-point element operators (identical for every element of
# the uniform grid; elements differ only through the ersatz weight)


@dataclass(frozen=True)
class ElementOps:
    strain_disp: NDArray  # (nq, nv, nu) Voigt strain from local displacements
    grad_scalar: NDArray  # (nq, dim, nloc) gradient of scalar shape functions
    KA: NDArray  # (nq, nu, nu)   elasticity, includes vol*wq
    KB: NDArray  # (nq, nloc, nu) coupling (+int e:eps(u) . grad N)
    KC: NDArray  # (nq, nloc, nloc) dielectric

    @property
    def nu(self) -> int:
        return self.KA.shape[1]

    @property
    def nloc(self) -> int:
        return self.KC.shape[1]


def element_ops(grid: PeriodicGrid, m: MaterialTensors) -> ElementOps:
    d = grid.dim
    nloc = grid.nloc
    nv = voigt_count(d)
    nu = nloc * d
    nq = grid.quadrature.npoints
    pairs = VOIGT_PAIRS[d]

    Bm = np.zeros((nq, nv, nu))
    Gm = np.zeros((nq, d, nloc))
    for q in range(nq):
        dN = grid.shape_grads[q] / grid.spacings  # (nloc, dim) physical
        Gm[q] = dN.T
        for v, (i, j) in enumerate(pairs):
            for l in range(nloc):
                if i == j:
                    Bm[q, v, l * d + i] = dN[l, i]
                else:  # engineering shear gamma_ij = u_i,j + u_j,i
                    Bm[q, v, l * d + i] += dN[l, j]
                    Bm[q, v, l * d + j] += dN[l, i]

    vol_w = grid.element_volume * grid.quadrature.weights  # (nq,)
    KA = np.einsum("q,qvi,vw,qwj->qij", vol_w, Bm, m.C, Bm)
    KB = np.einsum("q,qal,av,qvj->qlj", vol_w, Gm, m.e, Bm)
    KC = np.einsum("q,qal,ab,qbm->qlm", vol_w, Gm, m.kappa, Gm)
    return ElementOps(strain_disp=Bm, grad_scalar=Gm, KA=KA, KB=KB, KC=KC)


# ----------------------------------------------------------------------


@dataclass
class BlockSystem:
    """Assembled sparse blocks and right-hand sides of the saddle system."""

    A: sp.csr_matrix  # (n, n) elasticity, SPD after pinning
    B: sp.csr_matrix  # (m, n) coupling
    Cb: sp.csr_matrix  # (m, m) dielectric, SPD after pinning
    rhs: list[NDArray]  # one (n+m,) vector per load case
    cases: list[LoadCase]
    pinned_u: NDArray
    pinned_p: NDArray
    dim: int = field(default=3)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.Cb.shape[0]

    def split(self, z: NDArray) -> tuple[NDArray, NDArray]:
        return z[: self.n], z[self.n :]

    def saddle_matvec(self, z: NDArray) -> NDArray:
        """Product with the symmetric form [[A, B^T], [B, -Cb]]."""
        x, y = self.split(z)
        return np.concatenate([self.A @ x + self.B.T @ y, self.B @ x - self.Cb @ y])

    def nonsym_matvec(self, z: NDArray) -> NDArray:
        """Product with the equivalent non-symmetric form [[A, B^T], [-B, Cb]]."""
        x, y = self.split(z)
        return np.concatenate([self.A @ x + self.B.T @ y, -self.B @ x + self.Cb @ y])

    def nonsym_rhs(self, case: int) -> NDArray:
        r = self.rhs[case].copy()
        r[self.n :] *= -1.0
        return r

    def saddle_matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B.T], [self.B, -self.Cb]], format="csr")


def _pin_mask_square(M: sp.coo_matrix, pins: NDArray) -> sp.csr_matrix:
    """Zero rows/cols of pinned dofs, keeping the original diagonal entries."""
    pinned = np.zeros(M.shape[0], dtype=bool)
    pinned[pins] = True
    r, c, v = M.row, M.col, M.data
    keep = ~(pinned[r] | pinned[c]) | (r == c)
    return sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=M.shape).tocsr()


def assemble(
    ls: LevelSetField,
    m_scaled: MaterialTensors,
    grid: PeriodicGrid,
    cases: list[LoadCase] | None = None,
    ersatz: float = 1e-3,
    weights: NDArray | None = None,
) -> BlockSystem:
    """Assemble the block system and one right-hand side per load case.

    `m_scaled` should be non-dimensionalised for well-conditioned blocks.
    `weights` overrides the ersatz interpolation (used by tests).
    """
    if cases is None:
        cases = load_cases(grid.dim)
    if weights is None:
        weights = interpolate_material(ls, m_scaled, ersatz).weights

    ops = element_ops(grid, m_scaled)
    d = grid.dim
    nloc = grid.nloc
    nu = ops.nu
    N = grid.node_count
    n, m = d * N, N
    vconn = grid.vector_conn
    sconn = grid.conn

    Ae = np.einsum("eq,qij->eij", weights, ops.KA)
    Be = np.einsum("eq,qlj->elj", weights, ops.KB)
    Ce = np.einsum("eq,qlm->elm", weights, ops.KC)

    def scatter(elem_mats, rows_conn, cols_conn, shape):
        nr = rows_conn.shape[1]
        nc = cols_conn.shape[1]
        rows = np.repeat(rows_conn, nc, axis=1).ravel()
        cols = np.tile(cols_conn, (1, nr)).ravel()
        return sp.coo_matrix((elem_mats.ravel(), (rows, cols)), shape=shape)

    A = scatter(Ae, vconn, vconn, (n, n))
    B = scatter(Be, sconn, vconn, (m, n))
    Cb = scatter(Ce, sconn, sconn, (m, m))

    pinned_u = np.arange(d, dtype=np.int64)  # all components of node 0
    pinned_p = np.array([0], dtype=np.int64)

    A = _pin_mask_square(A, pinned_u)
    Cb = _pin_mask_square(Cb, pinned_p)
    # coupling: zero pinned displacement columns and the pinned potential row
    keep = ~(np.isin(B.col, pinned_u) | np.isin(B.row, pinned_p))
    B = sp.coo_matrix(
        (B.data[keep], (B.row[keep], B.col[keep])), shape=B.shape
    ).tocsr()

    # right-hand sides; per-qp constant source vectors scaled by the weights
    vol_w = grid.element_volume * grid.quadrature.weights
    rhs = []
    for case in cases:
        if case.kind == "strain":
            sig = m_scaled.C @ case.macro  # stress from unit macro strain
            dsp = m_scaled.e @ case.macro  # electric displacement
            vec_u = -np.einsum("q,qvi,v->qi", vol_w, ops.strain_disp, sig)
            vec_p = -np.einsum("q,qal,a->ql", vol_w, ops.grad_scalar, dsp)
        elif case.kind == "efield":
            sig = m_scaled.e.T @ case.macro
            dsp = m_scaled.kappa @ case.macro
            vec_u = np.einsum("q,qvi,v->qi", vol_w, ops.strain_disp, sig)
            vec_p = -np.einsum("q,qal,a->ql", vol_w, ops.grad_scalar, dsp)
        else:
            raise ValueError(f"unknown load case kind {case.kind!r}")
        ru = np.zeros(n)
        rp = np.zeros(m)
        np.add.at(ru, vconn.ravel(), np.einsum("eq,qi->ei", weights, vec_u).ravel())
        np.add.at(rp, sconn.ravel(), np.einsum("eq,ql->el", weights, vec_p).ravel())
        ru[pinned_u] = 0.0
        rp[pinned_p] = 0.0
        rhs.append(np.concatenate([ru, rp]))

    return BlockSystem(
        A=A,
        B=B.tocsr(),
        Cb=Cb,
        rhs=rhs,
        cases=list(cases),
        pinned_u=pinned_u,
        pinned_p=pinned_p,
        dim=d,
    )
