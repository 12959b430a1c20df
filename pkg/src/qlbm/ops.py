"""Lazy structured linear operators with matrix-free application.

The algebra covers identities, permutations, diagonals, small dense blocks,
tensor products, operator products, weighted sums, direct sums and
rectangular block embeddings.  Compositions stay lazy: applying an operator
to a vector never materializes anything wider than the vectors involved,
which is what lets 20+ qubit unitaries be verified on selected basis
vectors without ever forming them densely.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# Largest dimension handled by dense linear algebra (SVD, exhaustive checks).
DENSE_THRESHOLD = 4096
# Maximum dim_out * dim_in entries materialize() will produce.
MATERIALIZE_CAP = 2**26
# Entry budget for one batched application (bounds peak temporary memory).
_BATCH_ENTRIES = 2**23


class StructuredOperator:
    """A linear map C^dim_in -> C^dim_out applied lazily."""

    dim_out: int
    dim_in: int

    def _apply_block(self, block: np.ndarray) -> np.ndarray:
        """Apply to a (dim_in, k) matrix of column vectors."""
        raise NotImplementedError

    def adjoint(self) -> "StructuredOperator":
        raise NotImplementedError

    @property
    def H(self) -> "StructuredOperator":
        return self.adjoint()

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.complex128)
        if v.shape != (self.dim_in,):
            raise ValueError(
                f"dimension mismatch: operator is {self.dim_out}x{self.dim_in}, "
                f"vector has shape {v.shape}"
            )
        return self._apply_block(v.reshape(-1, 1))[:, 0]

    def apply_columns(self, block: np.ndarray) -> np.ndarray:
        """Apply to many column vectors, chunked to bound temporary memory."""
        block = np.asarray(block, dtype=np.complex128)
        if block.ndim != 2 or block.shape[0] != self.dim_in:
            raise ValueError(
                f"dimension mismatch: operator is {self.dim_out}x{self.dim_in}, "
                f"block has shape {block.shape}"
            )
        width = max(1, _BATCH_ENTRIES // max(self.dim_in, self.dim_out))
        if block.shape[1] <= width:
            return self._apply_block(block)
        parts = [
            self._apply_block(block[:, s : s + width])
            for s in range(0, block.shape[1], width)
        ]
        return np.hstack(parts)

    def materialize(self, cap: int = MATERIALIZE_CAP) -> np.ndarray:
        """Dense matrix, assembled by applying the operator to every basis vector."""
        size = self.dim_out * self.dim_in
        if size > cap:
            raise ValueError(
                f"materializing a {self.dim_out}x{self.dim_in} operator needs "
                f"{size} entries, cap is {cap}"
            )
        out = np.empty((self.dim_out, self.dim_in), dtype=np.complex128)
        width = max(1, _BATCH_ENTRIES // max(self.dim_in, self.dim_out))
        for s in range(0, self.dim_in, width):
            w = min(width, self.dim_in - s)
            basis = np.zeros((self.dim_in, w), dtype=np.complex128)
            basis[s + np.arange(w), np.arange(w)] = 1.0
            out[:, s : s + w] = self._apply_block(basis)
        return out

    # Small amount of sugar; compose/scale/add have explicit constructors too.
    def __matmul__(self, other: "StructuredOperator") -> "StructuredOperator":
        return Product([self, other])

    def __add__(self, other: "StructuredOperator") -> "StructuredOperator":
        return Sum([self, other])

    def __mul__(self, c: complex) -> "StructuredOperator":
        return Sum([self], [c])

    __rmul__ = __mul__


class Identity(StructuredOperator):
    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError(f"identity dimension must be positive, got {dim}")
        self.dim_out = self.dim_in = dim

    def _apply_block(self, block):
        return block

    def adjoint(self):
        return self

    def __repr__(self):
        return f"Identity({self.dim_in})"


class Permutation(StructuredOperator):
    """P e_i = e_{mapping[i]}: column i carries a one in row mapping[i]."""

    def __init__(self, mapping):
        mapping = np.asarray(mapping, dtype=np.int64)
        n = mapping.shape[0]
        if not np.array_equal(np.sort(mapping), np.arange(n)):
            raise ValueError("mapping is not a bijection on [0, n)")
        self.mapping = mapping
        self.dim_out = self.dim_in = n

    def _apply_block(self, block):
        out = np.empty_like(block)
        out[self.mapping] = block
        return out

    def adjoint(self):
        inverse = np.empty_like(self.mapping)
        inverse[self.mapping] = np.arange(self.dim_in)
        return Permutation(inverse)

    def __repr__(self):
        return f"Permutation(dim={self.dim_in})"


class Diagonal(StructuredOperator):
    def __init__(self, entries):
        entries = np.asarray(entries, dtype=np.complex128).reshape(-1)
        if entries.size == 0:
            raise ValueError("diagonal needs at least one entry")
        self.entries = entries
        self.dim_out = self.dim_in = entries.size

    def _apply_block(self, block):
        return self.entries[:, None] * block

    def adjoint(self):
        return Diagonal(np.conj(self.entries))

    def __repr__(self):
        return f"Diagonal(dim={self.dim_in})"


class Dense(StructuredOperator):
    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.ndim != 2:
            raise ValueError(f"dense block must be 2-d, got shape {matrix.shape}")
        self.matrix = matrix
        self.dim_out, self.dim_in = matrix.shape

    def _apply_block(self, block):
        return self.matrix @ block

    def adjoint(self):
        return Dense(self.matrix.conj().T)

    def __repr__(self):
        return f"Dense({self.dim_out}x{self.dim_in})"


class Tensor(StructuredOperator):
    def __init__(self, left: StructuredOperator, right: StructuredOperator):
        # collapse nested identity padding so operator trees stay shallow
        if isinstance(left, Identity) and isinstance(right, Tensor) \
                and isinstance(right.left, Identity):
            left = Identity(left.dim_in * right.left.dim_in)
            right = right.right
        if isinstance(right, Identity) and isinstance(left, Tensor) \
                and isinstance(left.right, Identity):
            right = Identity(right.dim_in * left.right.dim_in)
            left = left.left
        self.left = left
        self.right = right
        self.dim_out = left.dim_out * right.dim_out
        self.dim_in = left.dim_in * right.dim_in

    def _apply_block(self, block):
        l, r = self.left, self.right
        k = block.shape[1]
        if isinstance(r, Identity):
            # (L (x) I): the trailing index rides along as extra columns
            w = block.reshape(l.dim_in, r.dim_in * k)
            w = l._apply_block(w)
            return w.reshape(self.dim_out, k)
        w = block.reshape(l.dim_in, r.dim_in, k)
        # right factor acts on the middle axis
        w = np.moveaxis(w, 1, 0).reshape(r.dim_in, l.dim_in * k)
        w = r._apply_block(w)
        w = np.moveaxis(w.reshape(r.dim_out, l.dim_in, k), 0, 1)
        if isinstance(l, Identity):
            return np.ascontiguousarray(w).reshape(self.dim_out, k)
        # left factor acts on the leading axis
        w = np.ascontiguousarray(w).reshape(l.dim_in, r.dim_out * k)
        w = l._apply_block(w)
        return w.reshape(self.dim_out, k)

    def adjoint(self):
        return Tensor(self.left.adjoint(), self.right.adjoint())

    def __repr__(self):
        return f"Tensor({self.left!r}, {self.right!r})"


class DiagonalRotation(StructuredOperator):
    """2x2 block matrix of diagonals [[d00, d01], [d10, d11]].

    The single-ancilla rotation pattern behind diagonal encodings; fusing it
    avoids materializing four embedded terms per application.
    """

    def __init__(self, d00, d01, d10, d11):
        blocks = [np.asarray(d, dtype=np.complex128).reshape(-1)
                  for d in (d00, d01, d10, d11)]
        n = blocks[0].size
        if any(b.size != n for b in blocks):
            raise ValueError("all four diagonals must have the same length")
        self.d00, self.d01, self.d10, self.d11 = blocks
        self.dim_out = self.dim_in = 2 * n

    def _apply_block(self, block):
        n = self.dim_in // 2
        x0, x1 = block[:n], block[n:]
        out = np.empty_like(block)
        out[:n] = self.d00[:, None] * x0 + self.d01[:, None] * x1
        out[n:] = self.d10[:, None] * x0 + self.d11[:, None] * x1
        return out

    def adjoint(self):
        return DiagonalRotation(np.conj(self.d00), np.conj(self.d10),
                                np.conj(self.d01), np.conj(self.d11))

    def __repr__(self):
        return f"DiagonalRotation(dim={self.dim_in})"


class KernelLift(StructuredOperator):
    """I_left (x) core (x) I_right applied with a single reshape sandwich.

    Equivalent to nested tensor products with identities, but flat: applying
    it costs one core application plus at most two strided copies, however
    many identity paddings were merged into it.
    """

    def __init__(self, core: StructuredOperator, left_dim: int = 1, right_dim: int = 1):
        if left_dim < 1 or right_dim < 1:
            raise ValueError("padding dimensions must be at least 1")
        if isinstance(core, KernelLift):
            left_dim *= core.left_dim
            right_dim *= core.right_dim
            core = core.core
        self.core = core
        self.left_dim = left_dim
        self.right_dim = right_dim
        self.dim_out = left_dim * core.dim_out * right_dim
        self.dim_in = left_dim * core.dim_in * right_dim

    def _apply_block(self, block):
        l, r = self.left_dim, self.right_dim
        core = self.core
        k = block.shape[1]
        if l == 1 and r == 1:
            return core._apply_block(block)
        if l == 1:
            w = block.reshape(core.dim_in, r * k)
            return core._apply_block(w).reshape(self.dim_out, k)
        if isinstance(core, Dense) and core.dim_in <= 64 and core.dim_out <= 64:
            # small dense core: batched matmul over the left padding
            w = block.reshape(l, core.dim_in, r * k)
            return np.matmul(core.matrix, w).reshape(self.dim_out, k)
        if isinstance(core, DiagonalRotation):
            n = core.dim_in // 2
            w = block.reshape(l, 2, n, r * k)
            x0, x1 = w[:, 0], w[:, 1]
            out = np.empty_like(w)
            d = core.d00[None, :, None], core.d01[None, :, None], \
                core.d10[None, :, None], core.d11[None, :, None]
            out[:, 0] = d[0] * x0 + d[1] * x1
            out[:, 1] = d[2] * x0 + d[3] * x1
            return out.reshape(self.dim_out, k)
        w = block.reshape(l, core.dim_in, r * k)
        w = np.ascontiguousarray(np.moveaxis(w, 1, 0)).reshape(core.dim_in, l * r * k)
        w = core._apply_block(w)
        w = np.moveaxis(w.reshape(core.dim_out, l, r * k), 0, 1)
        return np.ascontiguousarray(w).reshape(self.dim_out, k)

    def adjoint(self):
        return KernelLift(self.core.adjoint(), self.left_dim, self.right_dim)

    def __repr__(self):
        return (f"KernelLift({self.left_dim} (x) {self.core!r} (x) {self.right_dim})")


class Product(StructuredOperator):
    """factors[0] @ factors[1] @ ...: the last factor is applied first.

    Nested products are flattened and adjacent permutation (or diagonal)
    factors are composed eagerly; deep circuit compositions stay cheap to
    apply without changing the represented operator.
    """

    def __init__(self, factors):
        flat: list[StructuredOperator] = []
        for f in factors:
            if isinstance(f, Product):
                flat.extend(f.factors)
            else:
                flat.append(f)
        if not flat:
            raise ValueError("product needs at least one factor")
        for a, b in zip(flat, flat[1:]):
            if a.dim_in != b.dim_out:
                raise ValueError(
                    f"product dimension mismatch: {a.dim_out}x{a.dim_in} "
                    f"cannot follow {b.dim_out}x{b.dim_in}"
                )
        merged: list[StructuredOperator] = []
        for f in flat:
            if isinstance(f, Identity):
                continue
            prev = merged[-1] if merged else None
            if isinstance(prev, Permutation) and isinstance(f, Permutation):
                merged[-1] = Permutation(prev.mapping[f.mapping])
            elif isinstance(prev, Diagonal) and isinstance(f, Diagonal):
                merged[-1] = Diagonal(prev.entries * f.entries)
            else:
                merged.append(f)
        if not merged:
            merged = [Identity(flat[0].dim_out)]
        self.factors = merged
        self.dim_out = flat[0].dim_out
        self.dim_in = flat[-1].dim_in

    def _apply_block(self, block):
        for f in reversed(self.factors):
            block = f._apply_block(block)
        return block

    def adjoint(self):
        return Product([f.adjoint() for f in reversed(self.factors)])

    def __repr__(self):
        return f"Product({len(self.factors)} factors, {self.dim_out}x{self.dim_in})"


class Sum(StructuredOperator):
    def __init__(self, terms, coefficients=None):
        terms = list(terms)
        if not terms:
            raise ValueError("sum needs at least one term")
        dims = {(t.dim_out, t.dim_in) for t in terms}
        if len(dims) != 1:
            raise ValueError(f"sum terms have inconsistent dimensions: {sorted(dims)}")
        if coefficients is None:
            coefficients = np.ones(len(terms), dtype=np.complex128)
        else:
            coefficients = np.asarray(coefficients, dtype=np.complex128).reshape(-1)
            if coefficients.size != len(terms):
                raise ValueError(
                    f"{len(terms)} terms but {coefficients.size} coefficients"
                )
        self.terms = terms
        self.coefficients = coefficients
        self.dim_out, self.dim_in = terms[0].dim_out, terms[0].dim_in

    def _apply_block(self, block):
        out = self.coefficients[0] * self.terms[0]._apply_block(block)
        for c, t in zip(self.coefficients[1:], self.terms[1:]):
            out += c * t._apply_block(block)
        return out

    def adjoint(self):
        return Sum([t.adjoint() for t in self.terms], np.conj(self.coefficients))

    def __repr__(self):
        return f"Sum({len(self.terms)} terms, {self.dim_out}x{self.dim_in})"


class DirectSum(StructuredOperator):
    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise ValueError("direct sum needs at least one block")
        self.blocks = blocks
        self.dim_out = sum(b.dim_out for b in blocks)
        self.dim_in = sum(b.dim_in for b in blocks)
        self._in_offsets = np.cumsum([0] + [b.dim_in for b in blocks])
        self._out_offsets = np.cumsum([0] + [b.dim_out for b in blocks])

    def _apply_block(self, block):
        out = np.empty((self.dim_out, block.shape[1]), dtype=np.complex128)
        for b, si, so in zip(self.blocks, self._in_offsets, self._out_offsets):
            out[so : so + b.dim_out] = b._apply_block(block[si : si + b.dim_in])
        return out

    def adjoint(self):
        return DirectSum([b.adjoint() for b in self.blocks])

    def __repr__(self):
        return f"DirectSum({len(self.blocks)} blocks, {self.dim_out}x{self.dim_in})"


class Embedding(StructuredOperator):
    """Places an inner operator as a sub-block of a larger (zero) matrix."""

    def __init__(self, inner: StructuredOperator, dim_out: int, dim_in: int | None = None,
                 row_offset: int = 0, col_offset: int = 0):
        if dim_in is None:
            dim_in = dim_out
        if row_offset < 0 or row_offset + inner.dim_out > dim_out:
            raise ValueError(
                f"row block [{row_offset}, {row_offset + inner.dim_out}) does not fit in {dim_out}"
            )
        if col_offset < 0 or col_offset + inner.dim_in > dim_in:
            raise ValueError(
                f"column block [{col_offset}, {col_offset + inner.dim_in}) does not fit in {dim_in}"
            )
        self.inner = inner
        self.dim_out = dim_out
        self.dim_in = dim_in
        self.row_offset = row_offset
        self.col_offset = col_offset

    def _apply_block(self, block):
        out = np.zeros((self.dim_out, block.shape[1]), dtype=np.complex128)
        sub = block[self.col_offset : self.col_offset + self.inner.dim_in]
        out[self.row_offset : self.row_offset + self.inner.dim_out] = (
            self.inner._apply_block(sub)
        )
        return out

    def adjoint(self):
        return Embedding(self.inner.adjoint(), self.dim_in, self.dim_out,
                         self.col_offset, self.row_offset)

    def __repr__(self):
        return (f"Embedding({self.inner!r} at ({self.row_offset},{self.col_offset}) "
                f"in {self.dim_out}x{self.dim_in})")


def scale(op: StructuredOperator, c: complex) -> StructuredOperator:
    return Sum([op], [c])


def tensor_factor(left: StructuredOperator, right: StructuredOperator) -> StructuredOperator:
    """Tensor product that keeps composite circuits flat.

    Identity factors are distributed over products and absorbed into
    permutations and diagonals, so chains of sub-register operations merge
    into a short sequence of full-width primitives instead of nesting.
    The returned operator equals Tensor(left, right).
    """
    if isinstance(left, Identity) and isinstance(right, Identity):
        return Identity(left.dim_in * right.dim_in)
    if isinstance(left, Identity):
        k = left.dim_in
        if isinstance(right, Product):
            return Product([tensor_factor(left, f) for f in right.factors])
        if isinstance(right, Permutation):
            d = right.dim_in
            full = (np.arange(k)[:, None] * d + right.mapping[None, :]).ravel()
            return Permutation(full)
        if isinstance(right, Diagonal):
            return Diagonal(np.tile(right.entries, k))
        return KernelLift(right, left_dim=k)
    if isinstance(right, Identity):
        k = right.dim_in
        if isinstance(left, Product):
            return Product([tensor_factor(f, right) for f in left.factors])
        if isinstance(left, Permutation):
            full = (left.mapping[:, None] * k + np.arange(k)[None, :]).ravel()
            return Permutation(full)
        if isinstance(left, Diagonal):
            return Diagonal(np.repeat(left.entries, k))
        return KernelLift(left, right_dim=k)
    return Tensor(left, right)


def register_transpose(dims, perm) -> Permutation:
    """Permutation reordering tensor factors: layout `dims` -> layout `dims[perm]`.

    Maps |i_0, ..., i_{k-1}> (row-major in `dims`) to the basis vector whose
    multi-index is (i_perm[0], ..., i_perm[k-1]) in the reordered layout.
    """
    dims = tuple(int(d) for d in dims)
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(len(dims))):
        raise ValueError(f"perm {perm} is not a permutation of the {len(dims)} factors")
    total = int(np.prod(dims))
    source = np.arange(total).reshape(dims).transpose(perm).ravel()
    mapping = np.empty(total, dtype=np.int64)
    mapping[source] = np.arange(total)
    return Permutation(mapping)


@dataclass
class OperatorNormReport:
    spectral_norm_estimate: float
    method: str  # "dense-svd" or "power-iteration"
    iterations: int
    residual: float
    converged: bool


def spectral_norm(op: StructuredOperator, tol: float = 1e-8, max_iterations: int = 10000,
                  seed: int = 0, dense_threshold: int = DENSE_THRESHOLD,
                  warn_on_failure: bool = True) -> OperatorNormReport:
    """Largest singular value: dense SVD when small, else power iteration on op^H op.

    The power-iteration residual is the eigenvalue residual
    ||op^H op x - lambda x|| / lambda for the normalized iterate x, which
    bounds the relative error of the returned estimate.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if max(op.dim_in, op.dim_out) <= dense_threshold:
        sigma = float(np.linalg.svd(op.materialize(), compute_uv=False)[0])
        return OperatorNormReport(sigma, "dense-svd", 0, 0.0, True)

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.dim_in) + 1j * rng.standard_normal(op.dim_in)
    x /= np.linalg.norm(x)
    adj = op.adjoint()
    sigma = 0.0
    residual = np.inf
    for it in range(1, max_iterations + 1):
        y = op.apply(x)
        lam = float(np.linalg.norm(y)) ** 2
        sigma = np.sqrt(lam)
        z = adj.apply(y)
        if lam == 0.0:
            return OperatorNormReport(0.0, "power-iteration", it, 0.0, True)
        residual = float(np.linalg.norm(z - lam * x)) / lam
        if residual <= tol:
            return OperatorNormReport(sigma, "power-iteration", it, residual, True)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return OperatorNormReport(sigma, "power-iteration", it, 0.0, True)
        x = z / nz
    if warn_on_failure:
        warnings.warn(
            f"power iteration did not converge after {max_iterations} iterations "
            f"(residual {residual:.3e})"
        )
    return OperatorNormReport(sigma, "power-iteration", max_iterations, residual, False)


def induced_one_norm(op: StructuredOperator) -> float:
    """Exact induced 1-norm: the largest column sum of absolute entries."""
    best = 0.0
    width = max(1, _BATCH_ENTRIES // max(op.dim_in, op.dim_out))
    for s in range(0, op.dim_in, width):
        w = min(width, op.dim_in - s)
        basis = np.zeros((op.dim_in, w), dtype=np.complex128)
        basis[s + np.arange(w), np.arange(w)] = 1.0
        cols = op._apply_block(basis)
        best = max(best, float(np.max(np.sum(np.abs(cols), axis=0))))
    return best


def unitary_completion(matrix) -> Dense:
    """Dilate a contraction B into the unitary [[B, sqrt(I-BB^H)], [sqrt(I-B^H B), -B^H]]."""
    b = np.atleast_2d(np.asarray(matrix, dtype=np.complex128))
    w, sig, vh = np.linalg.svd(b)
    top = float(sig[0]) if sig.size else 0.0
    if top > 1 + 1e-6:
        raise ValueError(f"operator norm {top} exceeds 1 + 1e-6, cannot dilate")
    if top > 1 + 1e-12:
        warnings.warn(f"operator norm {top} clamped to 1 for dilation")
    sig = np.clip(sig, 0.0, 1.0)
    m, n = b.shape
    cos_m = np.ones(m)
    cos_m[: sig.size] = np.sqrt(1.0 - sig**2)
    cos_n = np.ones(n)
    cos_n[: sig.size] = np.sqrt(1.0 - sig**2)
    upper_right = (w * cos_m) @ w.conj().T
    lower_left = (vh.conj().T * cos_n) @ vh
    u = np.block([[b, upper_right], [lower_left, -b.conj().T]])
    return Dense(u)


def verify_unitary(op: StructuredOperator, tol: float = 1e-10,
                   dense_threshold: int = DENSE_THRESHOLD, probes: int = 64,
                   seed: int = 0) -> tuple[bool, float]:
    """Check op^H op = I; exhaustive over the basis when small, probed when large.

    Returns (is_unitary, defect) with defect = max_v ||op^H op v - v|| over the
    vectors tried.
    """
    if op.dim_in != op.dim_out:
        raise ValueError(f"unitarity needs a square operator, got {op.dim_out}x{op.dim_in}")
    adj = op.adjoint()
    if op.dim_in <= dense_threshold:
        gram = adj.apply_columns(op.materialize())
        gram[np.arange(op.dim_in), np.arange(op.dim_in)] -= 1.0
        defect = float(np.max(np.linalg.norm(gram, axis=0))) if op.dim_in else 0.0
        return defect <= tol, defect
    rng = np.random.default_rng(seed)
    block = rng.standard_normal((op.dim_in, probes)) + 1j * rng.standard_normal((op.dim_in, probes))
    block /= np.linalg.norm(block, axis=0)
    back = adj.apply_columns(op.apply_columns(block))
    defect = float(np.max(np.linalg.norm(back - block, axis=0)))
    return defect <= tol, defect
