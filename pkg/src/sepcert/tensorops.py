"""Linear algebra on tensor-product spaces.

Everything in this package works with explicit tensor factorizations: a matrix
never knows its own factor structure, so every operation takes a TensorSpace
describing how the ambient space splits into factors.  Matrices are dense
numpy arrays, complex128 unless stated otherwise.

The symmetric-subspace helpers (isometry, projector, operator basis) are the
workhorses of the extension tests: the projector onto the symmetric subspace
of k copies of C^d has rank binom(d+k-1, k), and the isometry maps the
occupation-number basis of that subspace into the full k-fold tensor power.
"""

from dataclasses import dataclass
from itertools import combinations_with_replacement
import math

import numpy as np


class FactorError(ValueError):
    """A matrix does not match the tensor space, or a factor index is bad."""

    def __init__(self, message, factor=None, size=None):
        super().__init__(message)
        self.factor = factor
        self.size = size


@dataclass(frozen=True)
class TensorSpace:
    """An ordered tensor factorization; factor 0 is the leftmost factor."""

    factor_dims: tuple

    def __init__(self, factor_dims):
        dims = tuple(int(d) for d in factor_dims)
        if not dims or any(d < 1 for d in dims):
            raise FactorError(f"factor dimensions must be positive, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self):
        return int(np.prod(self.factor_dims))

    @property
    def nfactors(self):
        return len(self.factor_dims)

    def check_factor(self, which):
        if not 0 <= which < self.nfactors:
            raise FactorError(
                f"factor index {which} out of range for space with "
                f"{self.nfactors} factors",
                factor=which,
            )

    def check_matrix(self, mat):
        d = self.dim
        if mat.shape != (d, d):
            raise FactorError(
                f"matrix of shape {mat.shape} does not act on this space "
                f"(factors {self.factor_dims}, total dimension {d})",
                size=mat.shape,
            )


def check_hermitian(mat, tol=1e-12, what="matrix"):
    """Reject (never symmetrize) inputs that are not Hermitian.

    The tolerance is relative: ||M - M^dag||_F <= tol * max(1, ||M||_F).
    """
    dev = np.linalg.norm(mat - mat.conj().T)
    scale = max(1.0, np.linalg.norm(mat))
    if dev > tol * scale:
        raise ValueError(
            f"{what} is not Hermitian: deviation {dev:.3e} exceeds "
            f"{tol:.1e} relative tolerance"
        )


def partial_transpose(mat, space, which):
    """Transpose a single tensor factor of a square matrix.

    The operation is an involution and preserves trace, Hermiticity and
    Frobenius norm.  `which` follows the space's factor ordering (0 is the
    leftmost factor).
    """
    space.check_factor(which)
    space.check_matrix(mat)
    dims = space.factor_dims
    f = len(dims)
    t = np.asarray(mat).reshape(dims + dims)
    perm = list(range(2 * f))
    perm[which], perm[f + which] = perm[f + which], perm[which]
    return t.transpose(perm).reshape(space.dim, space.dim)


def partial_transpose_multi(mat, space, which_set):
    """Transpose several factors at once (composition of single transposes)."""
    out = mat
    for w in sorted(set(which_set)):
        out = partial_transpose(out, space, w)
    return out


def partial_trace(mat, space, which):
    """Trace out a set of factors; returns a matrix on the remaining factors.

    Tracing out every factor is allowed and produces a 1x1 matrix.
    """
    which = {int(w) for w in (which if np.iterable(which) else [which])}
    for w in which:
        space.check_factor(w)
    space.check_matrix(mat)
    dims = space.factor_dims
    f = len(dims)
    t = np.asarray(mat).reshape(dims + dims)
    # trace the highest factor index first so lower axis numbers stay valid
    removed = 0
    for w in sorted(which, reverse=True):
        nleft = f - removed
        t = np.trace(t, axis1=w, axis2=nleft + w)
        removed += 1
    keep = [d for i, d in enumerate(dims) if i not in which]
    dkeep = int(np.prod(keep)) if keep else 1
    return t.reshape(dkeep, dkeep)


def reduced_space(space, traced_out):
    keep = [d for i, d in enumerate(space.factor_dims) if i not in set(traced_out)]
    return TensorSpace(keep if keep else [1])


def factor_permutation_operator(space, perm):
    """Unitary that maps |i_perm[0], i_perm[1], ...> onto |i_0, i_1, ...>.

    perm lists, for each output slot, which input factor lands there.  All
    permuted slots must carry equal dimensions pairwise where they move.
    """
    dims = space.factor_dims
    f = len(dims)
    if sorted(perm) != list(range(f)):
        raise FactorError(f"{perm} is not a permutation of 0..{f - 1}")
    for out_slot, in_factor in enumerate(perm):
        if dims[out_slot] != dims[in_factor]:
            raise FactorError(
                f"cannot move factor {in_factor} (dim {dims[in_factor]}) into "
                f"slot {out_slot} (dim {dims[out_slot]})",
                factor=in_factor,
                size=dims[in_factor],
            )
    d = space.dim
    eye = np.eye(d).reshape(dims + dims)
    # P[(r), (c)] = prod_s delta(r_s, c_perm[s]), so the column axis feeding
    # old factor t must sit at position perm^-1(t)
    inv = [0] * f
    for slot, factor in enumerate(perm):
        inv[factor] = slot
    axes = list(range(f)) + [f + inv[s] for s in range(f)]
    return eye.transpose(axes).reshape(d, d)


def permute_factors(mat, space, perm):
    """Conjugate a matrix by the factor permutation: rows and columns move."""
    space.check_matrix(mat)
    dims = space.factor_dims
    f = len(dims)
    if sorted(perm) != list(range(f)):
        raise FactorError(f"{perm} is not a permutation of 0..{f - 1}")
    t = np.asarray(mat).reshape(dims + dims)
    axes = list(perm) + [f + p for p in perm]
    new_dims = [dims[p] for p in perm]
    d = space.dim
    return t.transpose(axes).reshape(d, d), TensorSpace(new_dims)


def swap_operator(space, i, j):
    """Self-inverse Hermitian unitary exchanging factors i and j."""
    space.check_factor(i)
    space.check_factor(j)
    dims = space.factor_dims
    if dims[i] != dims[j]:
        raise FactorError(
            f"cannot swap factor {i} (dim {dims[i]}) with factor {j} "
            f"(dim {dims[j]}): dimensions differ",
            factor=j,
            size=dims[j],
        )
    perm = list(range(space.nfactors))
    perm[i], perm[j] = perm[j], perm[i]
    return factor_permutation_operator(space, perm)


def symmetric_subspace_dim(d, k):
    """Dimension of the symmetric subspace of k copies of C^d."""
    return math.comb(d + k - 1, k)


def _multiset_index(d, k):
    """All d^k index tuples, each mapped to its sorted-multiset id.

    Returns (multisets, inverse, counts): the lexicographic list of sorted
    k-tuples over range(d), the multiset id of every raw tuple, and the
    number of arrangements of each multiset.
    """
    grids = np.indices((d,) * k).reshape(k, -1).T  # (d^k, k), rows are tuples
    srt = np.sort(grids, axis=1)
    multisets, inverse, counts = np.unique(
        srt, axis=0, return_inverse=True, return_counts=True
    )
    return multisets, inverse.ravel(), counts


_ISOMETRY_CAP = 20000


def symmetric_isometry(d, k):
    """Isometry from the occupation-number basis into (C^d)^(x k).

    Columns are indexed by sorted multisets in lexicographic order; column mu
    is the normalized sum over all distinct arrangements of mu.  B^dag B = 1
    and B B^dag is the symmetric projector.  Real-valued.
    """
    if d**k > _ISOMETRY_CAP:
        raise FactorError(
            f"symmetric isometry for d={d}, k={k} needs ambient dimension "
            f"{d**k}, beyond the dense cap {_ISOMETRY_CAP}"
        )
    _, inverse, counts = _multiset_index(d, k)
    nrows = d**k
    ncols = len(counts)
    b = np.zeros((nrows, ncols))
    b[np.arange(nrows), inverse] = 1.0 / np.sqrt(counts[inverse])
    return b


_PROJECTOR_CAP = 8192


def symmetric_projector(d, k):
    """Orthogonal projector onto the symmetric subspace of (C^d)^(x k).

    Equals the average of all k! factor-permutation operators; built here as
    B B^dag from the occupation-number isometry, which is the same matrix.
    Real-valued, rank binom(d+k-1, k).
    """
    if d**k > _PROJECTOR_CAP:
        raise FactorError(
            f"dense symmetric projector for d={d}, k={k} would be "
            f"{d**k}x{d**k}; beyond the cap {_PROJECTOR_CAP}. "
            "Use symmetric_isometry instead."
        )
    b = symmetric_isometry(d, k)
    return b @ b.T


@dataclass
class OperatorBasis:
    """Hermitian operator basis: first element is identity-like with unit
    trace, the rest are traceless and orthonormal (Tr[s_i s_j] = delta_ij
    for i, j >= 1, and Tr[s_1 s_j] = 0 for j >= 1)."""

    dim: int
    elements: list


def hermitian_basis(d):
    """Orthogonal Hermitian basis of d x d matrices.

    Element 0 is identity/d (trace one).  Then the d-1 normalized traceless
    diagonal matrices, then for each pair a < b the symmetric and
    antisymmetric off-diagonal pair.  d^2 elements in total.
    """
    out = [np.eye(d, dtype=complex) / d]
    for l in range(1, d):
        v = np.zeros(d)
        v[:l] = 1.0
        v[l] = -l
        m = np.diag(v) / np.sqrt(l * (l + 1))
        out.append(m.astype(complex))
    for a in range(d):
        for b in range(a + 1, d):
            x = np.zeros((d, d), dtype=complex)
            x[a, b] = x[b, a] = 1 / np.sqrt(2)
            out.append(x)
            y = np.zeros((d, d), dtype=complex)
            y[a, b] = -1j / np.sqrt(2)
            y[b, a] = 1j / np.sqrt(2)
            out.append(y)
    return OperatorBasis(dim=d, elements=out)


def basis_expand(mat, basis):
    """Coefficients c with mat = sum_i c_i s_i (real for Hermitian input).

    Uses the dual normalization: element 0 has Tr[s_0^2] = 1/d, the rest are
    orthonormal, so c_0 = Tr[mat] and c_i = Tr[mat s_i] for i >= 1.
    """
    c = np.empty(len(basis.elements))
    c[0] = np.trace(mat).real
    for i, s in enumerate(basis.elements[1:], start=1):
        c[i] = np.trace(mat @ s).real
    return c


def basis_assemble(coeffs, basis):
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    for c, s in zip(coeffs, basis.elements):
        out += c * s
    return out


_SYM_OP_BASIS_CAP = 160


def symmetric_operator_basis(d, k):
    """Hermitian basis of operators supported on the symmetric subspace.

    binom(d+k-1,k)^2 elements acting on the full d^k-dimensional space, each
    invariant under conjugation by the symmetric projector.  Ordering and
    normalization follow hermitian_basis of the subspace dimension.
    """
    if d**k > _SYM_OP_BASIS_CAP:
        raise FactorError(
            f"dense symmetric operator basis for d={d}, k={k} would hold "
            f"{symmetric_subspace_dim(d, k) ** 2} matrices of side {d**k}; "
            f"beyond the cap {_SYM_OP_BASIS_CAP}"
        )
    b = symmetric_isometry(d, k)
    small = hermitian_basis(symmetric_subspace_dim(d, k))
    elements = [b @ s @ b.T for s in small.elements]
    return OperatorBasis(dim=d**k, elements=elements)


def multisets(n, k):
    """Sorted k-multisets over range(n), lexicographic."""
    return list(combinations_with_replacement(range(n), k))


def multiset_arrangements(mu):
    """Number of distinct arrangements of the multiset mu."""
    k = len(mu)
    total = math.factorial(k)
    for v in set(mu):
        total //= math.factorial(mu.count(v))
    return total
