"""Operators and density states on the (electronic, motional) product space.

Factor order is always ``(electronic, motional)``; indices are row-major, so
the composite index of ``|i, n>`` is ``i * n_fock + n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class HilbertSpace:
    factors: tuple[int, ...]

    def __post_init__(self):
        factors = tuple(int(d) for d in self.factors)
        if not factors:
            raise ValueError("HilbertSpace needs at least one factor")
        if any(d < 1 for d in factors):
            raise ValueError(f"factor dimensions must be >= 1, got {factors}")
        object.__setattr__(self, "factors", factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factors))

    def __len__(self):
        return len(self.factors)


class Operator:
    """A sparse matrix tied to a :class:`HilbertSpace`.

    Supports ``+``, ``-``, scalar ``*``, ``@`` and :meth:`dag`; everything
    else goes through :attr:`matrix` (CSR).
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix):
        m = sparse.csr_matrix(matrix, dtype=complex)
        if m.shape != (space.total_dim, space.total_dim):
            raise ValueError(
                f"operator shape {m.shape} does not match space dimension "
                f"{space.total_dim} (factors {space.factors})"
            )
        self.space = space
        self.matrix = m

    @classmethod
    def identity(cls, space: HilbertSpace) -> "Operator":
        return cls(space, sparse.identity(space.total_dim, dtype=complex, format="csr"))

    @classmethod
    def zero(cls, space: HilbertSpace) -> "Operator":
        return cls(space, sparse.csr_matrix((space.total_dim, space.total_dim), dtype=complex))

    @property
    def shape(self):
        return self.matrix.shape

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise ValueError(f"space mismatch: {self.space.factors} vs {other.space.factors}")

    def __add__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar):
        return Operator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or np.max(np.abs(diff.data)) <= atol

    def __repr__(self):
        return f"Operator(factors={self.space.factors}, nnz={self.matrix.nnz})"


def destroy(n: int) -> np.ndarray:
    """Truncated annihilation operator, ``a[k-1, k] = sqrt(k)``."""
    if n < 2:
        raise ValueError(f"Fock dimension must be >= 2, got {n}")
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), k=1).astype(complex)


def number(n: int) -> np.ndarray:
    return np.diag(np.arange(n, dtype=float)).astype(complex)


def embed(op, which_factor: int, space: HilbertSpace) -> Operator:
    """Lift a single-factor operator into the composite space.

    Returns ``1 x ... x op x ... x 1`` with the factor order of ``space``.
    """
    if not 0 <= which_factor < len(space):
        raise ValueError(f"factor index {which_factor} out of range for {space.factors}")
    op = sparse.csr_matrix(op, dtype=complex)
    dim = space.factors[which_factor]
    if op.shape != (dim, dim):
        raise ValueError(
            f"operator of shape {op.shape} cannot act on factor {which_factor} "
            f"of dimension {dim}"
        )
    parts = [
        op if k == which_factor else sparse.identity(d, dtype=complex, format="csr")
        for k, d in enumerate(space.factors)
    ]
    return Operator(space, reduce(lambda a, b: sparse.kron(a, b, format="csr"), parts))


def thermal_populations(nbar: float, n: int) -> np.ndarray:
    """Boltzmann occupation of the lowest ``n`` Fock states, renormalised.

    ``nbar`` is the untruncated mean occupation; after truncation the actual
    mean is lower whenever the tail above ``n - 1`` is not negligible.
    """
    if nbar < 0:
        raise ValueError(f"nbar must be >= 0, got {nbar}")
    if nbar == 0:
        p = np.zeros(n)
        p[0] = 1.0
        return p
    k = np.arange(n)
    logp = k * np.log(nbar) - (k + 1) * np.log1p(nbar)
    p = np.exp(logp)
    return p / p.sum()


class DensityState:
    """Dense density matrix on a :class:`HilbertSpace`."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (space.total_dim, space.total_dim):
            raise ValueError(
                f"density matrix shape {m.shape} does not match dimension {space.total_dim}"
            )
        self.space = space
        self.matrix = m

    @classmethod
    def product(cls, electronic: np.ndarray, motional: np.ndarray) -> "DensityState":
        electronic = np.asarray(electronic, dtype=complex)
        motional = np.asarray(motional, dtype=complex)
        space = HilbertSpace((electronic.shape[0], motional.shape[0]))
        return cls(space, np.kron(electronic, motional))

    @classmethod
    def thermal(cls, n_levels: int, level: int, nbar: float, n_fock: int) -> "DensityState":
        """Electronic level ``level`` times a truncated thermal motional state."""
        el = np.zeros((n_levels, n_levels))
        el[level, level] = 1.0
        return cls.product(el, np.diag(thermal_populations(nbar, n_fock)))

    def symmetrized(self) -> "DensityState":
        return DensityState(self.space, 0.5 * (self.matrix + self.matrix.conj().T))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def blocks(self) -> np.ndarray:
        """View as ``rho[i, n, j, m]`` for a two-factor space."""
        if len(self.space) != 2:
            raise ValueError("blocks() needs a two-factor space")
        d0, d1 = self.space.factors
        return self.matrix.reshape(d0, d1, d0, d1)

    def electronic_populations(self) -> np.ndarray:
        b = self.blocks()
        return np.einsum("inin->i", b).real.copy()

    def fock_populations(self) -> np.ndarray:
        b = self.blocks()
        return np.einsum("inin->n", b).real.copy()

    def validate(self, herm_tol=1e-10, trace_tol=1e-9, pos_tol=1e-8):
        herm = self.hermiticity_error()
        if herm > herm_tol:
            raise ValueError(f"state not Hermitian: max |rho - rho^dag| = {herm:.3e}")
        tr = abs(self.trace() - 1)
        if tr > trace_tol:
            raise ValueError(f"trace deviates from 1 by {tr:.3e}")
        lam = self.min_eigenvalue()
        if lam < -pos_tol:
            raise ValueError(f"state not positive: minimum eigenvalue {lam:.3e}")


def expect(op: Operator, rho: DensityState) -> complex:
    """``Tr(op rho)``."""
    if op.shape != rho.matrix.shape:
        raise ValueError(f"shape mismatch: operator {op.shape} vs state {rho.matrix.shape}")
    # Tr(A rho) = sum_ij A_ij rho_ji
    a = op.matrix.tocoo()
    return complex(np.sum(a.data * rho.matrix[a.col, a.row]))
