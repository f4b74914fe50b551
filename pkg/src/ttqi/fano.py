"""Two-qubit spin states in the Fano (Pauli) parameterization.

A state of the top-antitop spin system is written as

    rho = 1/4 (I x I + sum_i P_i s_i x I + sum_j Pbar_j I x s_j
               + sum_ij C_ij s_i x s_j)

where the Pauli index 1, 2, 3 is bound to the three axis labels of the
basis, in declared order. The first tensor factor is the top quark.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import DomainError, ValidationError

Side = Literal["top", "antitop"]

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
COEFF_TOL = 1e-12
EIG_CLAMP = 1e-10

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
I2 = np.eye(2, dtype=complex)


def _pauli_products() -> np.ndarray:
    """The 15 operators multiplying the canonical coefficient vector."""
    ops = [np.kron(s, I2) for s in SIGMA]
    ops += [np.kron(I2, s) for s in SIGMA]
    ops += [np.kron(SIGMA[i], SIGMA[j]) for i in range(3) for j in range(3)]
    out = np.array(ops)
    out.setflags(write=False)
    return out


# PAULI_BASIS[k] is the operator whose coefficient is entry k of the
# 15-vector (P1..P3, Pbar1..Pbar3, C11, C12, ..., C33).
PAULI_BASIS = _pauli_products()


def _frozen(a, dtype=float, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


class BasisKind(str, enum.Enum):
    HELICITY = "helicity"
    BEAM = "beam"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SpinBasis:
    """Named spin quantization frame; labels bind Pauli indices 1, 2, 3."""

    kind: BasisKind
    axis_labels: tuple[str, str, str]

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        labels = tuple(self.axis_labels)
        if len(labels) != 3 or any(not str(s) for s in labels):
            raise ValidationError("axis_labels must be three non-empty strings")
        if len(set(labels)) != 3:
            raise ValidationError(f"axis_labels must be distinct, got {labels}")
        object.__setattr__(self, "axis_labels", labels)

    @classmethod
    def helicity(cls) -> "SpinBasis":
        return cls(BasisKind.HELICITY, ("n", "r", "k"))

    @classmethod
    def beam(cls) -> "SpinBasis":
        return cls(BasisKind.BEAM, ("x", "y", "z"))

    @classmethod
    def from_name(cls, name: str) -> "SpinBasis":
        if name == "helicity":
            return cls.helicity()
        if name == "beam":
            return cls.beam()
        raise ValidationError(f"unknown basis {name!r}; expected 'helicity' or 'beam'")


@dataclass(frozen=True)
class BinKinematics:
    """A doubly differential bin: m(tt) interval in GeV and |cos Theta| interval."""

    mtt_range: tuple[float, float]
    abs_costheta_range: tuple[float, float]

    def __post_init__(self):
        lo, hi = (float(v) for v in self.mtt_range)
        clo, chi = (float(v) for v in self.abs_costheta_range)
        if not lo < hi:
            raise ValidationError(f"mtt_range lower bound must be < upper, got {(lo, hi)}")
        if not clo < chi:
            raise ValidationError(
                f"abs_costheta_range lower bound must be < upper, got {(clo, chi)}"
            )
        if clo < 0.0 or chi > 1.0:
            raise ValidationError(f"abs_costheta_range must lie in [0, 1], got {(clo, chi)}")
        object.__setattr__(self, "mtt_range", (lo, hi))
        object.__setattr__(self, "abs_costheta_range", (clo, chi))

    @property
    def midpoint(self) -> tuple[float, float]:
        return (0.5 * sum(self.mtt_range), 0.5 * sum(self.abs_costheta_range))


@dataclass(frozen=True)
class FanoCoefficients:
    """Polarizations P, Pbar and spin-correlation matrix C in a named basis.

    Entries must lie in [-1, 1]. Positivity of the assembled density matrix
    is deliberately not enforced here; see :func:`validate_physicality`.
    """

    P: np.ndarray
    Pbar: np.ndarray
    C: np.ndarray
    basis: SpinBasis = field(default_factory=SpinBasis.helicity)

    def __post_init__(self):
        P = _frozen(self.P, shape=(3,))
        Pbar = _frozen(self.Pbar, shape=(3,))
        C = _frozen(self.C, shape=(3, 3))
        for name, arr in (("P", P), ("Pbar", Pbar), ("C", C)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite entries")
            if np.any(np.abs(arr) > 1.0 + COEFF_TOL):
                raise ValidationError(f"{name} entries must lie in [-1, 1], got {arr.tolist()}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Pbar", Pbar)
        object.__setattr__(self, "C", C)

    @classmethod
    def from_vector(cls, v: Sequence[float], basis: SpinBasis | None = None) -> "FanoCoefficients":
        """Build from the canonical 15-vector (P1..P3, Pbar1..Pbar3, C row-major)."""
        v = np.asarray(v, dtype=float)
        if v.shape != (15,):
            raise ValidationError(f"coefficient vector must have 15 entries, got {v.shape}")
        return cls(v[:3], v[3:6], v[6:].reshape(3, 3), basis or SpinBasis.helicity())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.P, self.Pbar, self.C.ravel()])

    def swapped(self) -> "FanoCoefficients":
        """Exchange the roles of top and antitop."""
        return FanoCoefficients(self.Pbar, self.P, self.C.T, self.basis)


@dataclass(frozen=True)
class DensityMatrix4:
    """4x4 Hermitian, unit-trace matrix on top (x) antitop spin space."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.shape != (4, 4):
            raise ValidationError(f"density matrix must be 4x4, got {m.shape}")
        herm_err = np.max(np.abs(m - m.conj().T))
        if herm_err > HERMITIAN_TOL:
            raise ValidationError(f"matrix is not Hermitian (max deviation {herm_err:.3g})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace must be 1, got {tr.real:.15g}{tr.imag:+.3g}j")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


@dataclass(frozen=True)
class SingleQubitState:
    bloch: np.ndarray

    def __post_init__(self):
        b = _frozen(self.bloch, shape=(3,))
        if np.linalg.norm(b) > 1.0 + 1e-12:
            raise ValidationError(f"Bloch vector norm exceeds 1: {np.linalg.norm(b):.15g}")
        object.__setattr__(self, "bloch", b)

    def matrix(self) -> np.ndarray:
        return 0.5 * (I2 + np.einsum("i,ijk->jk", self.bloch, SIGMA))


@dataclass(frozen=True)
class PhysicalityReport:
    min_eigenvalue: float
    is_physical: bool
    eigenvalues: np.ndarray


def _as_density(rho) -> DensityMatrix4:
    return rho if isinstance(rho, DensityMatrix4) else DensityMatrix4(rho)


def density_from_vector(v: np.ndarray) -> np.ndarray:
    """Raw 4x4 matrix for a 15-vector, without any validation."""
    return 0.25 * (np.eye(4, dtype=complex) + np.tensordot(v, PAULI_BASIS, axes=1))


def assemble_density(fano: FanoCoefficients) -> DensityMatrix4:
    return DensityMatrix4(density_from_vector(fano.as_vector()))


def extract_fano(rho, basis: SpinBasis | None = None) -> FanoCoefficients:
    """Invert :func:`assemble_density` using Tr[s_a s_b] = 2 delta_ab."""
    rho = _as_density(rho)
    # Tr[rho O_k] for Hermitian O_k is real; discard the rounding residue.
    v = np.einsum("kij,ji->k", PAULI_BASIS, rho.entries).real
    return FanoCoefficients.from_vector(v, basis)


def reduced_state(rho, side: Side) -> SingleQubitState:
    rho = _as_density(rho)
    t = rho.entries.reshape(2, 2, 2, 2)
    if side == "top":
        red = np.einsum("ajbj->ab", t)
    elif side == "antitop":
        red = np.einsum("iaib->ab", t)
    else:
        raise ValidationError(f"side must be 'top' or 'antitop', got {side!r}")
    bloch = np.einsum("kij,ji->k", SIGMA, red).real
    return SingleQubitState(bloch)


def partial_transpose(rho, side: Side = "antitop") -> np.ndarray:
    """Transpose on one tensor factor; returns a plain Hermitian 4x4 array."""
    m = rho.entries if isinstance(rho, DensityMatrix4) else np.asarray(rho, dtype=complex)
    t = m.reshape(2, 2, 2, 2)
    if side == "top":
        t = t.transpose(2, 1, 0, 3)
    elif side == "antitop":
        t = t.transpose(0, 3, 2, 1)
    else:
        raise ValidationError(f"side must be 'top' or 'antitop', got {side!r}")
    return t.reshape(4, 4)


def entropy_from_eigenvalues(lam: np.ndarray) -> float:
    """-sum lam log2 lam with 0 log 0 = 0. Callers clamp first."""
    lam = lam[lam > 0.0]
    return float(-np.sum(lam * np.log2(lam)))


def von_neumann_entropy(m) -> float:
    """Entropy in bits of a 2x2 or 4x4 density matrix."""
    if isinstance(m, DensityMatrix4):
        m = m.entries
    elif isinstance(m, SingleQubitState):
        m = m.matrix()
    m = np.asarray(m, dtype=complex)
    if m.shape not in ((2, 2), (4, 4)):
        raise DomainError(f"entropy needs a 2x2 or 4x4 matrix, got {m.shape}")
    tr = np.trace(m).real
    if abs(tr - 1.0) > 1e-9:
        raise DomainError(f"trace must be 1 within 1e-9, got {tr:.12g}")
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if lam[0] < -EIG_CLAMP:
        raise DomainError(f"negative eigenvalue {lam[0]:.3g} below tolerance {EIG_CLAMP:g}")
    return entropy_from_eigenvalues(np.clip(lam, 0.0, None))


def validate_physicality(fano, tol: float = 1e-9) -> PhysicalityReport:
    """Smallest eigenvalue of the assembled matrix against ``-tol``.

    Accepts :class:`FanoCoefficients` or a raw 15-vector; the latter skips
    the [-1, 1] range check so measured values beyond it can be inspected.
    """
    if isinstance(fano, FanoCoefficients):
        v = fano.as_vector()
    else:
        v = np.asarray(fano, dtype=float)
        if v.shape != (15,):
            raise ValidationError(f"coefficient vector must have 15 entries, got {v.shape}")
    lam = np.linalg.eigvalsh(density_from_vector(v))
    lam.setflags(write=False)
    return PhysicalityReport(float(lam[0]), bool(lam[0] >= -tol), lam)


def _check_rotation(R, name: str, allow_improper: bool) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValidationError(f"{name} must be 3x3, got {R.shape}")
    if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-9:
        raise ValidationError(f"{name} is not orthogonal")
    det = np.linalg.det(R)
    if abs(det - 1.0) > 1e-9 and not (allow_improper and abs(det + 1.0) <= 1e-9):
        raise ValidationError(
            f"{name} has determinant {det:.12g}; pass allow_improper=True for reflections"
        )
    return R


def rotate_basis(
    fano: FanoCoefficients,
    R_t,
    R_tbar,
    *,
    allow_improper: bool = False,
    basis: SpinBasis | None = None,
) -> FanoCoefficients:
    """Re-express the coefficients in rotated frames for top and antitop.

    ``P' = R_t P``, ``Pbar' = R_tbar Pbar``, ``C' = R_t C R_tbar^T``. Sign
    flips of the helicity-basis convention are improper maps and need
    ``allow_improper=True``.
    """
    Rt = _check_rotation(R_t, "R_t", allow_improper)
    Rb = _check_rotation(R_tbar, "R_tbar", allow_improper)
    return FanoCoefficients(
        Rt @ fano.P,
        Rb @ fano.Pbar,
        Rt @ fano.C @ Rb.T,
        basis or fano.basis,
    )
