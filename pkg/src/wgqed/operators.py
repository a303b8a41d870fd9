"""Tensor-product operator and state algebra for dot registers with a shared mode.

Everything downstream (Hamiltonian builders, propagators, schedules) is built
on the three types defined here: :class:`HilbertSpace`, :class:`QuantumState`
and :class:`LinearOperator`.  All values are immutable after construction and
all operations are pure functions, so they can be used freely from parallel
sweep workers.

Basis ordering is fixed throughout the package: dot 0 is the slowest index,
the cavity mode (when present) the fastest.  Dot levels are ordered
``(f, g, e)`` with the upper level ``e`` present only in three-level spaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sps

#: Dimension above which operator builders return sparse matrices.
SPARSE_DIM_THRESHOLD = 512

#: Max-norm tolerance for operators flagged Hermitian.
HERMITIAN_ATOL = 1e-10

#: Tolerances enforced on states at construction time.
PURE_NORM_ATOL = 1e-9
DENSITY_HERM_ATOL = 1e-9
DENSITY_TRACE_ATOL = 1e-9
DENSITY_EIG_FLOOR = -1e-8

#: Eigenvalue positivity is only verified below this dimension (O(d^3) cost).
EIG_CHECK_MAX_DIM = 512

LEVEL_F, LEVEL_G, LEVEL_E = 0, 1, 2

SiteIndex = Union[int, str]  # dot index or the literal "cavity"


class SpaceMismatchError(ValueError):
    """Raised when operands live on different Hilbert spaces."""


@dataclass(frozen=True)
class HilbertSpace:
    """``num_dots`` dots of 2 or 3 levels, optionally tensored with a Fock mode.

    Parameters
    ----------
    num_dots : int
        Number of dots, >= 1.
    levels_per_dot : int
        2 for qubit-only registers (f, g), 3 when the upper level e is kept.
    fock_cutoff : int
        Maximum photon number of the shared mode; the cavity factor has
        dimension ``fock_cutoff + 1``.  A cutoff of 0 means no cavity factor.
    """

    num_dots: int
    levels_per_dot: int = 2
    fock_cutoff: int = 0

    def __post_init__(self):
        if self.num_dots < 1:
            raise ValueError(f"num_dots must be >= 1, got {self.num_dots}")
        if self.levels_per_dot not in (2, 3):
            raise ValueError(
                f"levels_per_dot must be 2 or 3, got {self.levels_per_dot}"
            )
        if self.fock_cutoff < 0:
            raise ValueError(f"fock_cutoff must be >= 0, got {self.fock_cutoff}")

    @property
    def has_cavity(self) -> bool:
        return self.fock_cutoff >= 1

    @property
    def cavity_dim(self) -> int:
        return self.fock_cutoff + 1 if self.has_cavity else 1

    @property
    def local_dims(self) -> tuple[int, ...]:
        dims = (self.levels_per_dot,) * self.num_dots
        if self.has_cavity:
            dims = dims + (self.cavity_dim,)
        return dims

    @property
    def dim(self) -> int:
        return self.levels_per_dot**self.num_dots * self.cavity_dim

    def site_dim(self, site: SiteIndex) -> int:
        if site == "cavity":
            if not self.has_cavity:
                raise ValueError("space has no cavity factor")
            return self.cavity_dim
        site = int(site)
        if not 0 <= site < self.num_dots:
            raise ValueError(f"dot index {site} out of range [0, {self.num_dots})")
        return self.levels_per_dot

    def basis_index(self, dot_levels: Sequence[int], n_cav: int = 0) -> int:
        """Flat index of the product basis state |l_0 ... l_{N-1}> x |n_cav>."""
        if len(dot_levels) != self.num_dots:
            raise ValueError("need one level per dot")
        idx = 0
        for lv in dot_levels:
            if not 0 <= lv < self.levels_per_dot:
                raise ValueError(f"level {lv} out of range")
            idx = idx * self.levels_per_dot + lv
        if self.has_cavity:
            if not 0 <= n_cav <= self.fock_cutoff:
                raise ValueError(f"photon number {n_cav} above cutoff")
            idx = idx * self.cavity_dim + n_cav
        elif n_cav != 0:
            raise ValueError("space has no cavity factor")
        return idx

    def register_indices(self) -> np.ndarray:
        """Flat indices of all qubit bitstrings with the cavity in vacuum.

        Bit ``j`` of the register integer is 1 when dot j is in |g>; dot 0 is
        the most significant bit, matching the basis ordering.  Requires a
        two-level space.
        """
        if self.levels_per_dot != 2:
            raise ValueError("register indexing requires a two-level space")
        n = self.num_dots
        return np.arange(2**n) * self.cavity_dim


def _is_sparse(m) -> bool:
    return sps.issparse(m)


def _herm_defect(matrix) -> float:
    if _is_sparse(matrix):
        d = matrix - matrix.getH()
        return abs(d).max() if d.nnz else 0.0
    return float(np.max(np.abs(matrix - matrix.conj().T))) if matrix.size else 0.0


@dataclass(frozen=True)
class LinearOperator:
    """A square operator on a :class:`HilbertSpace`.

    ``matrix`` is either a dense complex ndarray or a scipy sparse matrix;
    builders switch to sparse above :data:`SPARSE_DIM_THRESHOLD`.  When
    ``hermitian`` is set the constructor verifies it to :data:`HERMITIAN_ATOL`.
    """

    space: HilbertSpace
    matrix: object
    hermitian: bool = False

    def __post_init__(self):
        m = self.matrix
        if not _is_sparse(m):
            m = np.asarray(m, dtype=complex)
            object.__setattr__(self, "matrix", m)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(
                f"operator shape {m.shape} does not match space dim {self.space.dim}"
            )
        if self.hermitian:
            defect = _herm_defect(m)
            if defect >= HERMITIAN_ATOL:
                raise ValueError(
                    f"operator flagged hermitian but max |A - A^dag| = {defect:.3e}"
                )

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if _is_sparse(self.matrix) else self.matrix

    def dagger(self) -> "LinearOperator":
        m = self.matrix.getH() if _is_sparse(self.matrix) else self.matrix.conj().T
        return LinearOperator(self.space, m, hermitian=self.hermitian)

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        if other.space != self.space:
            raise SpaceMismatchError("operator product across different spaces")
        return LinearOperator(self.space, self.matrix @ other.matrix)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec


@dataclass(frozen=True)
class QuantumState:
    """Pure state vector or density matrix over a :class:`HilbertSpace`."""

    space: HilbertSpace
    kind: str  # "pure" | "density"
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        d = self.space.dim
        if self.kind == "pure":
            if amp.shape != (d,):
                raise ValueError(f"pure state needs shape ({d},), got {amp.shape}")
            norm = float(np.linalg.norm(amp))
            if abs(norm - 1.0) > PURE_NORM_ATOL:
                raise ValueError(f"pure state norm {norm} deviates from 1")
        elif self.kind == "density":
            if amp.shape != (d, d):
                raise ValueError(f"density matrix needs shape ({d},{d})")
            herm = float(np.max(np.abs(amp - amp.conj().T)))
            if herm > DENSITY_HERM_ATOL:
                raise ValueError(f"density matrix not Hermitian: defect {herm:.3e}")
            tr = complex(np.trace(amp))
            if abs(tr - 1.0) > DENSITY_TRACE_ATOL:
                raise ValueError(f"density matrix trace {tr} deviates from 1")
            if d <= EIG_CHECK_MAX_DIM:
                lo = float(np.linalg.eigvalsh(amp)[0])
                if lo < DENSITY_EIG_FLOOR:
                    raise ValueError(f"density matrix has eigenvalue {lo:.3e}")
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")
        amp = amp.copy()
        amp.flags.writeable = False
        object.__setattr__(self, "amplitudes", amp)

    # -- constructors ---------------------------------------------------
    @classmethod
    def pure(cls, space: HilbertSpace, vec: np.ndarray) -> "QuantumState":
        return cls(space, "pure", vec)

    @classmethod
    def density(cls, space: HilbertSpace, mat: np.ndarray) -> "QuantumState":
        return cls(space, "density", mat)

    @classmethod
    def basis(
        cls, space: HilbertSpace, dot_levels: Sequence[int], n_cav: int = 0
    ) -> "QuantumState":
        vec = np.zeros(space.dim, dtype=complex)
        vec[space.basis_index(dot_levels, n_cav)] = 1.0
        return cls(space, "pure", vec)

    @classmethod
    def plus_register(cls, space: HilbertSpace) -> "QuantumState":
        """|+>^N over (f, g) on every dot, cavity (if any) in vacuum."""
        if space.levels_per_dot != 2:
            raise ValueError("plus_register requires a two-level space")
        vec = np.zeros(space.dim, dtype=complex)
        vec[space.register_indices()] = 2.0 ** (-space.num_dots / 2)
        return cls(space, "pure", vec)

    # -- conversions ----------------------------------------------------
    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        v = self.amplitudes
        return QuantumState(self.space, "density", np.outer(v, v.conj()))


def embed(space: HilbertSpace, site: SiteIndex, local_op: np.ndarray) -> LinearOperator:
    """Embed a single-site operator as I x ... x local_op x ... x I."""
    local_op = np.asarray(local_op, dtype=complex)
    d_site = space.site_dim(site)
    if local_op.shape != (d_site, d_site):
        raise ValueError(
            f"local operator shape {local_op.shape} does not match site dim {d_site}"
        )
    pos = space.num_dots if site == "cavity" else int(site)
    dims = space.local_dims
    left = int(np.prod(dims[:pos], dtype=np.int64)) if pos else 1
    right = int(np.prod(dims[pos + 1 :], dtype=np.int64)) if pos + 1 < len(dims) else 1
    if space.dim > SPARSE_DIM_THRESHOLD:
        m = sps.kron(
            sps.kron(sps.identity(left, format="csr"), sps.csr_matrix(local_op)),
            sps.identity(right, format="csr"),
            format="csr",
        )
    else:
        m = np.kron(np.kron(np.eye(left), local_op), np.eye(right))
    herm = _herm_defect(local_op) < HERMITIAN_ATOL
    return LinearOperator(space, m, hermitian=herm)


_DOT_OP_KINDS = ("raise", "lower", "proj_g", "proj_f", "proj_e")


def dot_operator(space: HilbertSpace, j: int, kind: str) -> LinearOperator:
    """Embedded single-dot operator; levels ordered (f, g, e).

    ``raise`` is |e><g|, ``lower`` its adjoint, and the projectors select one
    level.  e-involving operators require a three-level space.
    """
    if kind not in _DOT_OP_KINDS:
        raise ValueError(f"unknown dot operator kind {kind!r}")
    L = space.levels_per_dot
    if kind in ("raise", "lower", "proj_e") and L != 3:
        raise ValueError(f"{kind!r} requires a three-level space")
    m = np.zeros((L, L), dtype=complex)
    if kind == "raise":
        m[LEVEL_E, LEVEL_G] = 1.0
    elif kind == "lower":
        m[LEVEL_G, LEVEL_E] = 1.0
    elif kind == "proj_g":
        m[LEVEL_G, LEVEL_G] = 1.0
    elif kind == "proj_f":
        m[LEVEL_F, LEVEL_F] = 1.0
    else:
        m[LEVEL_E, LEVEL_E] = 1.0
    return embed(space, j, m)


def cavity_ops(space: HilbertSpace) -> tuple[LinearOperator, LinearOperator, LinearOperator]:
    """Annihilation, creation and number operators of the truncated mode."""
    if not space.has_cavity:
        raise ValueError("space has no cavity factor")
    dc = space.cavity_dim
    a = np.diag(np.sqrt(np.arange(1, dc, dtype=float)), 1).astype(complex)
    n = np.diag(np.arange(dc, dtype=float)).astype(complex)  # = a^dag a exactly
    return embed(space, "cavity", a), embed(space, "cavity", a.conj().T), embed(space, "cavity", n)


def _normalize_keep(space: HilbertSpace, keep: Iterable[SiteIndex]) -> list[int]:
    positions = []
    for site in keep:
        if site == "cavity":
            if not space.has_cavity:
                raise ValueError("cannot keep cavity: space has none")
            positions.append(space.num_dots)
        else:
            site = int(site)
            if not 0 <= site < space.num_dots:
                raise ValueError(f"dot index {site} out of range")
            positions.append(site)
    if not positions:
        raise ValueError("keep set must be non-empty")
    if len(set(positions)) != len(positions):
        raise ValueError("duplicate entries in keep set")
    return sorted(positions)


def partial_trace(state: QuantumState, keep: Iterable[SiteIndex]) -> QuantumState:
    """Reduced density matrix over the kept subsystems (pure inputs promoted)."""
    space = state.space
    kept = _normalize_keep(space, keep)
    dims = space.local_dims
    nf = len(dims)
    rho = state.to_density().amplitudes.reshape(dims + dims)
    # trace out complements, highest axis first so positions stay valid
    current = list(range(nf))
    for pos in reversed(range(nf)):
        if pos in kept:
            continue
        ax = current.index(pos)
        rho = np.trace(rho, axis1=ax, axis2=ax + len(current))
        current.remove(pos)
    kept_dots = [p for p in kept if p < space.num_dots]
    if not kept_dots:
        # a dotless space is not representable; keep at least one dot
        raise ValueError("keep set must retain at least one dot")
    reduced = HilbertSpace(
        num_dots=len(kept_dots),
        levels_per_dot=space.levels_per_dot,
        fock_cutoff=space.fock_cutoff if space.num_dots in kept else 0,
    )
    d = reduced.dim
    return QuantumState(reduced, "density", rho.reshape(d, d))


def fidelity(rho: QuantumState, rho_prime: QuantumState) -> float:
    """Overlap fidelity Tr(rho rho'); for two pure states |<psi|phi>|^2."""
    if rho.space != rho_prime.space:
        raise SpaceMismatchError("fidelity of states on different spaces")
    if rho.kind == "pure" and rho_prime.kind == "pure":
        ov = np.vdot(rho.amplitudes, rho_prime.amplitudes)
        return float(abs(ov) ** 2)
    a = rho.to_density().amplitudes
    b = rho_prime.to_density().amplitudes
    val = complex(np.einsum("ij,ji->", a, b))
    if abs(val.imag) > 1e-10:
        raise ValueError(f"Tr(rho rho') has imaginary residue {val.imag:.3e}")
    return float(val.real)
