"""Piezoelectric material constants and non-dimensional scaling.

Voigt ordering is (xx, yy, zz, yz, xz, xy) in 3D with engineering shear
strains (factor 2) in the strain vector. The 2D model is the x-z plane
(plane strain in y) so the poling axis is always the last coordinate axis;
its Voigt order is (xx, zz, xz).

Stiffness (N/m^2), coupling (C/m^2) and dielectric (F/m) entries differ by
~20 orders of magnitude; :func:`nondimensionalize` rescales all three blocks
to O(1) before assembly and the inverse map is applied to effective tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

VOIGT_PAIRS = {
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
    2: ((0, 0), (1, 1), (0, 1)),
}


def voigt_count(dim: int) -> int:
    return len(VOIGT_PAIRS[dim])


@dataclass(frozen=True)
class MaterialTensors:
    """Constitutive tensors of a piezoelectric material in Voigt form."""

    C: NDArray  # (nv, nv) stiffness at fixed E
    e: NDArray  # (dim, nv) piezoelectric coupling
    kappa: NDArray  # (dim, dim) dielectric at fixed strain
    dim: int = 3

    def __post_init__(self):
        nv = voigt_count(self.dim)
        C = np.asarray(self.C, dtype=float)
        e = np.asarray(self.e, dtype=float)
        kappa = np.asarray(self.kappa, dtype=float)
        if C.shape != (nv, nv):
            raise ValueError(f"C must be {nv}x{nv}, got {C.shape}")
        if e.shape != (self.dim, nv):
            raise ValueError(f"e must be {self.dim}x{nv}, got {e.shape}")
        if kappa.shape != (self.dim, self.dim):
            raise ValueError(f"kappa must be {self.dim}x{self.dim}, got {kappa.shape}")
        if not np.allclose(C, C.T, rtol=1e-12, atol=0.0):
            raise ValueError("C must be symmetric")
        if not np.allclose(kappa, kappa.T, rtol=1e-12, atol=0.0):
            raise ValueError("kappa must be symmetric")
        if np.linalg.eigvalsh(C).min() <= 0:
            raise ValueError("C must be positive definite")
        if np.linalg.eigvalsh(kappa).min() <= 0:
            raise ValueError("kappa must be positive definite")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "kappa", kappa)


@dataclass(frozen=True)
class ScalingScheme:
    """Scales removed from (C, e, kappa) when non-dimensionalising.

    ``c0`` and ``k0`` are the largest stiffness/dielectric entries and the
    coupling scale is ``g0 = sqrt(c0*k0)``, which renders all three blocks of
    the assembled saddle matrix O(1). Potential dofs implicitly carry a
    sqrt(k0/c0) factor relative to the dimensional potential.
    """

    c0: float
    k0: float

    @property
    def g0(self) -> float:
        return float(np.sqrt(self.c0 * self.k0))

    @property
    def identity(self) -> bool:
        return self.c0 == 1.0 and self.k0 == 1.0


def pzt5a() -> MaterialTensors:
    """z-poled PZT-5A constants (stiffness at fixed E, coupling, dielectric)."""
    C = np.array(
        [
            [12.04, 7.52, 7.51, 0.0, 0.0, 0.0],
            [7.52, 12.04, 7.51, 0.0, 0.0, 0.0],
            [7.51, 7.51, 11.09, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 2.1, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 2.1, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 2.3],
        ]
    ) * 1e10
    e = np.array(
        [
            [0.0, 0.0, 0.0, 0.0, 12.3, 0.0],
            [0.0, 0.0, 0.0, 12.3, 0.0, 0.0],
            [-5.4, -5.4, 15.8, 0.0, 0.0, 0.0],
        ]
    )
    kappa = np.diag([4.78, 4.78, 7.35]) * 1e-9
    return MaterialTensors(C=C, e=e, kappa=kappa, dim=3)


def plane_model(m: MaterialTensors) -> MaterialTensors:
    """Reduce a 3D z-poled material to the 2D x-z plane-strain model.

    Plane strain in y (eps_yy = gamma_yz = gamma_xy = 0, E_y = 0) keeps the
    poling axis in the model; the reduced Voigt order is (xx, zz, xz).
    """
    if m.dim != 3:
        raise ValueError("plane_model expects a 3D material")
    # 3D Voigt indices retained: xx=0, zz=2, xz=4; E axes retained: x=0, z=2
    sv = [0, 2, 4]
    se = [0, 2]
    return MaterialTensors(
        C=m.C[np.ix_(sv, sv)],
        e=m.e[np.ix_(se, sv)],
        kappa=m.kappa[np.ix_(se, se)],
        dim=2,
    )


def nondimensionalize(m: MaterialTensors) -> tuple[MaterialTensors, ScalingScheme]:
    """Rescale material tensors so every entry lies in [-1, 1]."""
    c0 = float(np.abs(m.C).max())
    k0 = float(np.abs(m.kappa).max())
    if c0 <= 0 or k0 <= 0:
        raise ValueError("non-positive scaling constants")
    scheme = ScalingScheme(c0=c0, k0=k0)
    scaled = MaterialTensors(
        C=m.C / c0, e=m.e / scheme.g0, kappa=m.kappa / k0, dim=m.dim
    )
    return scaled, scheme


def redimensionalize(m: MaterialTensors, scheme: ScalingScheme) -> MaterialTensors:
    """Inverse of :func:`nondimensionalize`."""
    return MaterialTensors(
        C=m.C * scheme.c0, e=m.e * scheme.g0, kappa=m.kappa * scheme.k0, dim=m.dim
    )


def load_material_file(path) -> MaterialTensors:
    """Read a 3D material from a plain-text file.

    The file holds 12 data rows (``#`` comments and blank lines ignored):
    6 rows of 6 entries for C in N/m^2, then 3 rows of 6 entries for e in
    C/m^2, then 3 rows of 3 entries for kappa in F/m.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(tok) for tok in line.split()])
    if len(rows) != 12:
        raise ValueError(f"material file {path}: expected 12 data rows, got {len(rows)}")
    for i, row in enumerate(rows[:9]):
        if len(row) != 6:
            raise ValueError(f"material file {path}: row {i + 1} needs 6 entries")
    for i, row in enumerate(rows[9:]):
        if len(row) != 3:
            raise ValueError(f"material file {path}: row {i + 10} needs 3 entries")
    return MaterialTensors(
        C=np.array(rows[:6]),
        e=np.array(rows[6:9]),
        kappa=np.array(rows[9:12]),
        dim=3,
    )


MATERIAL_PRESETS = {"pzt5a": pzt5a}


def material_by_name(name: str) -> MaterialTensors:
    try:
        return MATERIAL_PRESETS[name.lower()]()
    except KeyError:
        raise ValueError(
            f"unknown material preset {name!r}; available: {sorted(MATERIAL_PRESETS)}"
        ) from None
