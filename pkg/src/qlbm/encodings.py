"""Block encodings of the lattice update, built as exactly composed unitaries.

Conventions
-----------
An encoding is a unitary on (ancilla register) x (system register) with the
ancillas as the leftmost tensor factor, so the projector onto all-zero
ancillas selects the leading target_dim x target_dim corner.  Rescaled by
the normalization alpha, that corner equals the encoded target operator.

The lattice operators are embedded into an 8-slot block register (three
qubits): slots 0-4 hold the five direction populations, slot 5 the scalar
field, slots 6-7 padding.  One-dimensional models reuse the same layout
with zero equilibrium coefficients and identity streaming on the two ghost
directions, which keeps every normalization constant of the construction
unchanged.  The one-step map doubles the system with one extra qubit whose
branches carry the population update and the moment row.

Ancilla layouts (left to right) for the composite constructions:

  collision          = [combine(1), shared(5) = lcu prep(3) + transfer(1) + diag(1)]
  streaming . collision = [streaming flag(1), collision(6)]
  one-step map       = [product(7), branch select(3)]
  scaled one-step    = [output diag(1), input diag(1), one-step(10)]
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .lattice import GridSpec, VelocityField, VelocitySet
from .marching import equilibrium_diagonal
from .ops import (
    DENSE_THRESHOLD,
    Dense,
    Diagonal,
    DiagonalRotation,
    DirectSum,
    Embedding,
    Identity,
    Permutation,
    Product,
    StructuredOperator,
    Sum,
    Tensor,
    register_transpose,
    tensor_factor,
    scale,
    verify_unitary,
)

EMBED_SLOTS = 8   # padded block register holding directions + scalar field
PHI_SLOT = 5      # slot of the scalar field in the embedded layout
_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)


def _qubits_for(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim <= 0 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


# ---------------------------------------------------------------------------
# encoding container

@dataclass(frozen=True, eq=False)
class BlockEncoding:
    """Certified triple (U, alpha, m) with the operator it claims to encode."""

    U: StructuredOperator
    alpha: float
    m: int
    target: StructuredOperator
    label: str = ""
    eps: float = 0.0
    m_bound: int | None = None   # documented ancilla budget, when coarser than m

    def __post_init__(self):
        if self.target.dim_in != self.target.dim_out:
            raise ValueError("encoded target must be square")
        expected = (1 << self.m) * self.target.dim_in
        if self.U.dim_in != self.U.dim_out or self.U.dim_in != expected:
            raise ValueError(
                f"unitary must act on 2^{self.m} * {self.target.dim_in} = {expected} "
                f"dimensions, got {self.U.dim_out}x{self.U.dim_in}"
            )
        if self.alpha < 0 or self.eps < 0:
            raise ValueError("normalization and error bound must be non-negative")

    @property
    def target_dim(self) -> int:
        return self.target.dim_in

    @property
    def ancilla_bound(self) -> int:
        return self.m if self.m_bound is None else self.m_bound

    def apply_block(self, v: np.ndarray) -> np.ndarray:
        """alpha * (<0...| (x) I) U (|0...> (x) v): the encoded action on v."""
        return self.block_columns(np.asarray(v, dtype=np.complex128).reshape(-1, 1))[:, 0]

    def block_columns(self, block: np.ndarray) -> np.ndarray:
        d = self.target_dim
        full = np.zeros((self.U.dim_in, block.shape[1]), dtype=np.complex128)
        full[:d] = block
        return self.alpha * self.U.apply_columns(full)[:d]

    def extract_block(self) -> np.ndarray:
        """Dense alpha-rescaled corner block (the encoded matrix)."""
        d = self.target_dim
        if d * d > 2**26:
            raise ValueError(f"corner block of dimension {d} is too large to extract")
        out = np.empty((d, d), dtype=np.complex128)
        width = max(1, 2**23 // max(1, self.U.dim_in))
        for s in range(0, d, width):
            w = min(width, d - s)
            basis = np.zeros((d, w), dtype=np.complex128)
            basis[s + np.arange(w), np.arange(w)] = 1.0
            out[:, s : s + w] = self.block_columns(basis)
        return out

    def block_operator(self) -> StructuredOperator:
        """Lazy alpha * Pi U Pi^dag as a structured operator."""
        inclusion = Embedding(Identity(self.target_dim), self.U.dim_in,
                              self.target_dim, 0, 0)
        return scale(Product([inclusion.adjoint(), self.U, inclusion]), self.alpha)

    def verify(self, tol: float = 1e-10, probes: int = 64, seed: int = 0,
               exhaustive_limit: int = 2**13) -> "EncodingCheck":
        """Check unitarity of U and the corner-block identity against the target."""
        if self.U.dim_in <= exhaustive_limit:
            defect = _exhaustive_unitary_defect(self.U)
            unitary_exhaustive = True
        else:
            defect = _probed_unitary_defect(self.U, probes, seed)
            unitary_exhaustive = False

        if self.target_dim <= DENSE_THRESHOLD:
            diff = self.extract_block() - self.target.materialize()
            block_error = float(np.linalg.norm(diff))  # Frobenius >= operator norm
            block_exhaustive = True
        else:
            rng = np.random.default_rng(seed)
            block_error = 0.0
            for _ in range(probes):
                v = rng.standard_normal(self.target_dim) + 1j * rng.standard_normal(self.target_dim)
                v /= np.linalg.norm(v)
                block_error = max(block_error, float(np.linalg.norm(
                    self.apply_block(v) - self.target.apply(v))))
            block_exhaustive = False

        budget = self.eps + tol
        return EncodingCheck(
            label=self.label, alpha=self.alpha, m=self.m, m_bound=self.ancilla_bound,
            unitary_defect=defect, block_error=block_error,
            unitary_ok=defect <= tol, block_ok=block_error <= budget,
            ok=(defect <= tol and block_error <= budget),
            exhaustive=(unitary_exhaustive and block_exhaustive),
        )


@dataclass(frozen=True)
class EncodingCheck:
    label: str
    alpha: float
    m: int
    m_bound: int
    unitary_defect: float
    block_error: float
    unitary_ok: bool
    block_ok: bool
    ok: bool
    exhaustive: bool


def _exhaustive_unitary_defect(u: StructuredOperator) -> float:
    adj = u.adjoint()
    dim = u.dim_in
    best = 0.0
    width = max(1, 2**23 // max(1, dim))
    for s in range(0, dim, width):
        w = min(width, dim - s)
        basis = np.zeros((dim, w), dtype=np.complex128)
        basis[s + np.arange(w), np.arange(w)] = 1.0
        back = adj.apply_columns(u.apply_columns(basis)) - basis
        best = max(best, float(np.max(np.linalg.norm(back, axis=0))))
    return best


def _probed_unitary_defect(u: StructuredOperator, probes: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    adj = u.adjoint()
    dim = u.dim_in
    best = 0.0
    chunk = max(1, min(probes, 2**23 // max(1, dim)))
    done = 0
    while done < probes:
        w = min(chunk, probes - done)
        block = rng.standard_normal((dim, w)) + 1j * rng.standard_normal((dim, w))
        block /= np.linalg.norm(block, axis=0)
        back = adj.apply_columns(u.apply_columns(block)) - block
        best = max(best, float(np.max(np.linalg.norm(back, axis=0))))
        done += w
    return best


def be_extract(be: BlockEncoding):
    """Encoded matrix: dense when small, lazy block applicator otherwise."""
    if be.target_dim <= DENSE_THRESHOLD:
        return be.extract_block()
    return be.block_operator()


# ---------------------------------------------------------------------------
# register plumbing

def _on_subregister(u: StructuredOperator, layout: tuple[int, ...],
                    positions: tuple[int, ...]) -> StructuredOperator:
    """Extend u, acting on the given tensor factors (in order), by identities."""
    layout = tuple(int(d) for d in layout)
    own = 1
    for p in positions:
        own *= layout[p]
    if u.dim_in != own or u.dim_out != own:
        raise ValueError(f"operator of dimension {u.dim_in} does not match factors "
                         f"{positions} of layout {layout}")
    rest = [i for i in range(len(layout)) if i not in positions]
    rest_dim = 1
    for i in rest:
        rest_dim *= layout[i]
    positions = list(positions)
    if positions == list(range(positions[0], positions[0] + len(positions))):
        # contiguous ascending factors: plain tensor sandwich, no routing
        prefix = 1
        for i in range(positions[0]):
            prefix *= layout[i]
        suffix = 1
        for i in range(positions[-1] + 1, len(layout)):
            suffix *= layout[i]
        out = u
        if suffix > 1:
            out = tensor_factor(out, Identity(suffix))
        if prefix > 1:
            out = tensor_factor(Identity(prefix), out)
        return out
    inner = u if rest_dim == 1 else tensor_factor(u, Identity(rest_dim))
    perm = positions + rest
    t = register_transpose(layout, perm)
    return Product([t.adjoint(), inner, t])


def _unitary_with_first_column(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"first column must be a unit vector, norm is {norm}")
    n = v.size
    pivot = int(np.argmax(np.abs(v)))
    a = np.zeros((n, n), dtype=np.complex128)
    a[:, 0] = v
    k = 1
    for j in range(n):
        if j != pivot:
            a[j, k] = 1.0
            k += 1
    q, r = np.linalg.qr(a)
    q *= r[0, 0] / abs(r[0, 0])
    q[:, 0] = v
    return q


@dataclass(frozen=True)
class StatePrepPair:
    """Pair of unitaries whose first columns realize a coefficient vector."""

    left: np.ndarray    # P_L
    right: np.ndarray   # P_R
    beta: float
    y: np.ndarray
    width: int          # qubits of the preparation register
    delta: float = 0.0

    def coefficient_defect(self) -> float:
        c = self.left[:, 0]
        d = self.right[:, 0]
        products = self.beta * np.conj(c) * d
        full = np.zeros_like(products)
        full[: self.y.size] = self.y
        return float(np.sum(np.abs(products - full)))


def state_prep_pair(y, beta: float | None = None, width: int | None = None) -> StatePrepPair:
    """Exact preparation pair for coefficients y with 1-norm budget beta."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    l1 = float(np.sum(np.abs(y)))
    if beta is None:
        beta = l1
    if beta < l1 - 1e-12 or beta <= 0:
        raise ValueError(f"budget beta={beta} must cover the 1-norm {l1}")
    if width is None:
        width = max(1, (len(y) - 1).bit_length())
    size = 1 << width
    if size < len(y):
        raise ValueError(f"{width} qubits hold {size} coefficients, need {len(y)}")

    d_col = np.zeros(size, dtype=np.complex128)
    c_col = np.zeros(size, dtype=np.complex128)
    if l1 > 0:
        mags = np.abs(y)
        phases = np.ones_like(y)
        nz = mags > 0
        phases[nz] = y[nz] / mags[nz]
        d_col[: len(y)] = np.sqrt(mags / l1)
        # the pair realizes y_j = beta * conj(c_j) d_j, so c carries conj phases
        c_col[: len(y)] = np.conj(phases) * np.sqrt(mags * l1) / beta
        slack = 1.0 - (l1 / beta) ** 2
        if slack > 1e-30:
            if size < len(y) + 1:
                raise ValueError("beta above the 1-norm needs a spare coefficient slot")
            c_col[len(y)] = np.sqrt(slack)
    else:
        # zero vector: orthogonal slots make every product vanish
        if size < 2:
            raise ValueError("zero coefficients need at least one qubit")
        c_col[0] = 1.0
        d_col[1] = 1.0
    return StatePrepPair(
        left=_unitary_with_first_column(c_col),
        right=_unitary_with_first_column(d_col),
        beta=float(beta), y=y, width=width,
    )


# ---------------------------------------------------------------------------
# elementary encodings

def _flag_permutation(good_mask: np.ndarray) -> Permutation:
    """Flip a fresh leading ancilla exactly on the non-selected system states."""
    good_mask = np.asarray(good_mask, dtype=bool)
    dim = good_mask.size
    idx = np.arange(2 * dim)
    a, j = idx // dim, idx % dim
    flipped = np.where(good_mask[j], a, 1 - a)
    return Permutation(flipped * dim + j)


def encode_identity(alpha: float, m: int, dim: int, label: str = "identity") -> BlockEncoding:
    """Identity target at an imposed normalization, via one ancilla rotation."""
    if m == 0:
        if alpha != 1.0:
            raise ValueError("imposing alpha != 1 needs at least one ancilla")
        return BlockEncoding(Identity(dim), 1.0, 0, Identity(dim), label)
    c = 1.0 / alpha
    if c > 1.0 + 1e-12:
        raise ValueError(f"alpha={alpha} must be at least 1 to encode the identity")
    s = math.sqrt(max(0.0, 1.0 - c * c))
    rot = Dense(np.array([[c, s], [s, -c]]))
    u = tensor_factor(rot, Identity((1 << (m - 1)) * dim))
    return BlockEncoding(u, float(alpha), m, Identity(dim), label)


def encode_sparse_diagonal(entries, alpha: float = 1.0, label: str = "diagonal",
                           m_bound: int | None = None) -> BlockEncoding:
    """One-ancilla rotation encoding of a diagonal matrix with |entries| <= alpha.

    This is the tightened diagonal counterpart of the general sparse-access
    construction; the documented budget for an n-qubit diagonal is n+1
    ancillas, of which this uses one.
    """
    if isinstance(entries, Diagonal):
        entries = entries.entries
    entries = np.asarray(entries, dtype=np.complex128).reshape(-1)
    n = entries.size
    top = float(np.max(np.abs(entries))) if n else 0.0
    if top > alpha * (1.0 + 1e-12):
        raise ValueError(f"largest entry magnitude {top} exceeds normalization {alpha}")
    scaled = entries / alpha
    mags = np.minimum(np.abs(scaled), 1.0)
    phases = np.ones_like(scaled)
    nz = np.abs(scaled) > 0
    phases[nz] = scaled[nz] / np.abs(scaled[nz])
    scaled = phases * mags
    off = np.sqrt(1.0 - mags * mags)
    u = DiagonalRotation(scaled, off, off, -np.conj(scaled))
    if m_bound is None:
        m_bound = max(1, (n - 1).bit_length() + 1)
    return BlockEncoding(u, float(alpha), 1, Diagonal(entries), label, m_bound=m_bound)


def be_sparse(matrix) -> BlockEncoding:
    """Unit-normalization encoding of a diagonal matrix with max entry <= 1.

    General sparse-access inputs are out of scope; every sparse matrix this
    package needs is diagonal.
    """
    if isinstance(matrix, Diagonal):
        entries = matrix.entries
    else:
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.ndim == 1:
            entries = matrix
        elif matrix.ndim == 2 and matrix.shape[0] == matrix.shape[1]:
            if np.any(matrix - np.diag(np.diagonal(matrix))):
                raise ValueError("only diagonal matrices are supported")
            entries = np.diagonal(matrix).copy()
        else:
            raise ValueError(f"expected a diagonal matrix, got shape {matrix.shape}")
    return encode_sparse_diagonal(entries, alpha=1.0, label="sparse diagonal")


def encode_corner_projector() -> BlockEncoding:
    """(1, 1, 0)-encoding of diag(1, 0, 0, 0) on two qubits."""
    good = np.zeros(4, dtype=bool)
    good[0] = True
    return BlockEncoding(_flag_permutation(good), 1.0, 1,
                         Diagonal([1.0, 0.0, 0.0, 0.0]), "corner projector",
                         m_bound=1)


def encode_unit_transfer(i: int, j: int, qubits: int = 3) -> BlockEncoding:
    """(1, 1, 0)-encoding of the unit matrix |i><j| on the given register."""
    dim = 1 << qubits
    if not (0 <= i < dim and 0 <= j < dim):
        raise ValueError(f"indices ({i}, {j}) out of range for {qubits} qubits")
    good = np.zeros(dim, dtype=bool)
    good[j] = True
    flag = _flag_permutation(good)
    idx = np.arange(2 * dim)
    xor = Permutation((idx // dim) * dim + ((idx % dim) ^ (i ^ j)))
    target = np.zeros((dim, dim), dtype=np.complex128)
    target[i, j] = 1.0
    return BlockEncoding(Product([xor, flag]), 1.0, 1, Dense(target),
                         f"unit transfer |{i}><{j}|", m_bound=1)


def encode_qubit_projector() -> BlockEncoding:
    """(1, 1, 0)-encoding of diag(1, 0) on one qubit."""
    return BlockEncoding(_flag_permutation(np.array([True, False])), 1.0, 1,
                         Diagonal([1.0, 0.0]), "qubit projector", m_bound=1)


def encode_qubit_transfer() -> BlockEncoding:
    """(1, 1, 0)-encoding of |0><1| on one qubit."""
    flag = _flag_permutation(np.array([False, True]))
    idx = np.arange(4)
    xor = Permutation((idx // 2) * 2 + ((idx % 2) ^ 1))
    return BlockEncoding(Product([xor, flag]), 1.0, 1,
                         Dense(np.array([[0.0, 1.0], [0.0, 0.0]])),
                         "qubit transfer |0><1|", m_bound=1)


def encode_ones_row() -> BlockEncoding:
    """(2, 1, 0)-encoding of the 4x4 matrix with first row all ones.

    Factors the target as 2 * (corner projector) * (H (x) H): the Hadamard
    pair supplies the uniform row, the projector keeps only its first row.
    """
    corner = encode_corner_projector()
    hh = tensor_factor(Dense(_HADAMARD), Dense(_HADAMARD))
    u = Product([corner.U, tensor_factor(Identity(2), hh)])
    target = np.zeros((4, 4), dtype=np.complex128)
    target[0, :] = 1.0
    return BlockEncoding(u, 2.0, 1, Dense(target), "ones row", m_bound=1)


# ---------------------------------------------------------------------------
# combinators (constants follow the standard encoding arithmetic exactly)

def encoding_product(a: BlockEncoding, b: BlockEncoding,
                     label: str | None = None) -> BlockEncoding:
    """Encoding of (target_a @ target_b) with constants (a.alpha*b.alpha, m_a+m_b)."""
    if a.target_dim != b.target_dim:
        raise ValueError(f"system dimensions differ: {a.target_dim} vs {b.target_dim}")
    layout = (1 << a.m, 1 << b.m, a.target_dim)
    fa = _on_subregister(a.U, layout, (0, 2))
    fb = _on_subregister(b.U, layout, (1, 2))
    return BlockEncoding(
        Product([fa, fb]), a.alpha * b.alpha, a.m + b.m,
        Product([a.target, b.target]),
        label or f"({a.label}) @ ({b.label})",
        eps=a.alpha * b.eps + b.alpha * a.eps,
        m_bound=a.ancilla_bound + b.ancilla_bound,
    )


def encoding_tensor(a: BlockEncoding, b: BlockEncoding,
                    label: str | None = None) -> BlockEncoding:
    """Encoding of (target_a (x) target_b) with multiplied constants."""
    layout = (1 << a.m, 1 << b.m, a.target_dim, b.target_dim)
    fa = _on_subregister(a.U, layout, (0, 2))
    fb = _on_subregister(b.U, layout, (1, 3))
    return BlockEncoding(
        Product([fa, fb]), a.alpha * b.alpha, a.m + b.m,
        tensor_factor(a.target, b.target),
        label or f"({a.label}) (x) ({b.label})",
        eps=a.alpha * b.eps + b.alpha * a.eps,
        m_bound=a.ancilla_bound + b.ancilla_bound,
    )


def _pad_ancillas(be: BlockEncoding, m_new: int) -> StructuredOperator:
    if m_new < be.m:
        raise ValueError(f"cannot shrink ancilla register from {be.m} to {m_new}")
    if m_new == be.m:
        return be.U
    layout = (1 << be.m, 1 << (m_new - be.m), be.target_dim)
    return _on_subregister(be.U, layout, (0, 2))


def encoding_sum(a: BlockEncoding, b: BlockEncoding, y=(1.0, 1.0),
                 label: str | None = None) -> BlockEncoding:
    """Encoding of y0*target_a + y1*target_b.

    Normalization |y0| alpha_a + |y1| alpha_b, one preparation qubit on top
    of the shared (padded) ancilla register.
    """
    if a.target_dim != b.target_dim:
        raise ValueError(f"system dimensions differ: {a.target_dim} vs {b.target_dim}")
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    if y.size != 2:
        raise ValueError("pairwise sum takes exactly two coefficients")
    weights = np.array([y[0] * a.alpha, y[1] * b.alpha])
    beta = float(np.sum(np.abs(weights)))
    if beta == 0:
        raise ValueError("sum of encodings with zero total weight")
    m_shared = max(a.m, b.m)
    w = DirectSum([_pad_ancillas(a, m_shared), _pad_ancillas(b, m_shared)])
    prep = state_prep_pair(weights, beta=beta, width=1)
    tail = Identity((1 << m_shared) * a.target_dim)
    u = Product([
        tensor_factor(Dense(prep.left.conj().T), tail),
        w,
        tensor_factor(Dense(prep.right), tail),
    ])
    return BlockEncoding(
        u, beta, m_shared + 1,
        Sum([a.target, b.target], y),
        label or f"({a.label}) + ({b.label})",
        eps=float(np.abs(y[0])) * a.eps + float(np.abs(y[1])) * b.eps,
        m_bound=max(a.ancilla_bound + b.ancilla_bound, m_shared + 1),
    )


def encoding_lcu(y, encodings: list[BlockEncoding],
                 prep: StatePrepPair | None = None,
                 label: str | None = None) -> BlockEncoding:
    """Select/prepare combination sum_j y_j target_j of same-constant encodings."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    if len(encodings) != y.size:
        raise ValueError(f"{y.size} coefficients but {len(encodings)} encodings")
    alpha = encodings[0].alpha
    m = encodings[0].m
    d = encodings[0].target_dim
    for be in encodings[1:]:
        if be.alpha != alpha or be.m != m or be.target_dim != d:
            raise ValueError(
                "select/prepare combination needs identical (alpha, m, dim) across "
                f"operands; got ({be.alpha}, {be.m}, {be.target_dim}) vs ({alpha}, {m}, {d})"
            )
    if prep is None:
        prep = state_prep_pair(y)
    else:
        full = np.zeros(max(prep.y.size, y.size), dtype=np.complex128)
        full[: y.size] = y
        theirs = np.zeros_like(full)
        theirs[: prep.y.size] = prep.y
        if np.any(np.abs(full - theirs) > 1e-12):
            raise ValueError("preparation pair does not realize the requested coefficients")
    slots = 1 << prep.width
    blocks = [be.U for be in encodings]
    blocks += [Identity((1 << m) * d) for _ in range(slots - len(blocks))]
    w = DirectSum(blocks)
    tail = Identity((1 << m) * d)
    u = Product([
        tensor_factor(Dense(prep.left.conj().T), tail),
        w,
        tensor_factor(Dense(prep.right), tail),
    ])
    eps = alpha * prep.delta + alpha * prep.beta * max(be.eps / be.alpha if be.alpha else 0.0
                                                       for be in encodings)
    return BlockEncoding(
        u, alpha * prep.beta, m + prep.width,
        Sum([be.target for be in encodings], y),
        label or "select/prepare combination",
        eps=eps,
        m_bound=max(be.ancilla_bound for be in encodings) + prep.width,
    )


def encoding_system_select(a: BlockEncoding, b: BlockEncoding,
                           label: str | None = None) -> BlockEncoding:
    """Encoding of |0><0| (x) target_a + |1><1| (x) target_b on a doubled system.

    The selecting qubit belongs to the system register, so the constants
    (alpha, m) are unchanged; the operands must share them.
    """
    if a.alpha != b.alpha or a.m != b.m or a.target_dim != b.target_dim:
        raise ValueError("branch encodings must share (alpha, m, dim)")
    w = DirectSum([a.U, b.U])  # layout (branch qubit, ancilla, system)
    t = register_transpose((1 << a.m, 2, a.target_dim), (1, 0, 2))
    u = Product([t.adjoint(), w, t])
    return BlockEncoding(
        u, a.alpha, a.m, DirectSum([a.target, b.target]),
        label or f"select({a.label}, {b.label})",
        eps=max(a.eps, b.eps),
        m_bound=max(a.ancilla_bound, b.ancilla_bound),
    )


def compose_system_unitary(be: BlockEncoding, v: StructuredOperator, side: str = "left",
                           alpha: float | None = None,
                           target: StructuredOperator | None = None,
                           label: str | None = None) -> BlockEncoding:
    """Compose an exact system unitary into an encoding (no extra ancillas)."""
    if v.dim_in != be.target_dim or v.dim_out != be.target_dim:
        raise ValueError(f"system unitary of dimension {v.dim_in} does not match "
                         f"target dimension {be.target_dim}")
    lifted = tensor_factor(Identity(1 << be.m), v)
    if side == "left":
        u = Product([lifted, be.U])
        default_target = Product([v, be.target])
    elif side == "right":
        u = Product([be.U, lifted])
        default_target = Product([be.target, v])
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return BlockEncoding(
        u, be.alpha if alpha is None else alpha, be.m,
        default_target if target is None else target,
        label or be.label, eps=be.eps, m_bound=be.ancilla_bound,
    )


# ---------------------------------------------------------------------------
# embedded lattice layout

def embedded_indices(vs: VelocitySet, grid: GridSpec) -> np.ndarray:
    """Positions of the compact state [f_0..f_{Q-1}; phi] inside the 8-slot layout."""
    n = grid.N
    blocks = [np.arange(i * n, (i + 1) * n) for i in range(vs.Q)]
    blocks.append(np.arange(PHI_SLOT * n, (PHI_SLOT + 1) * n))
    return np.concatenate(blocks)


def embed_compact(psi: np.ndarray, vs: VelocitySet, grid: GridSpec,
                  doubled: bool = False) -> np.ndarray:
    """Lift a compact (Q+1)N state into the (possibly doubled) embedded space."""
    psi = np.asarray(psi, dtype=np.complex128)
    size = (2 if doubled else 1) * EMBED_SLOTS * grid.N
    out = np.zeros(size, dtype=np.complex128)
    out[embedded_indices(vs, grid)] = psi
    return out


def restrict_compact(vec: np.ndarray, vs: VelocitySet, grid: GridSpec) -> np.ndarray:
    """Project an embedded vector back onto the compact layout."""
    return np.asarray(vec, dtype=np.complex128)[embedded_indices(vs, grid)]


def _slot_diagonal_entries(ufield: VelocityField, step: int, vs: VelocitySet,
                           grid: GridSpec) -> list[np.ndarray]:
    entries = []
    for slot in range(5):
        if slot < vs.Q:
            entries.append(equilibrium_diagonal(ufield, step, vs, grid, slot).entries)
        else:
            entries.append(np.zeros(grid.N, dtype=np.complex128))
    return entries


def check_weight_condition(ufield: VelocityField, step: int, vs: VelocitySet,
                           grid: GridSpec) -> None:
    """Reject velocity fields whose equilibrium coefficients leave the unit disk."""
    for slot, entries in enumerate(_slot_diagonal_entries(ufield, step, vs, grid)):
        worst = int(np.argmax(np.abs(entries)))
        if np.abs(entries[worst]) > 1.0 + 1e-12:
            raise ValueError(
                f"equilibrium coefficient for direction {slot} at node {worst} is "
                f"{np.abs(entries[worst]):.6g} > 1; the velocity violates the "
                "weight condition"
            )


# ---------------------------------------------------------------------------
# the construction tower

def encode_collision_identity_part(grid: GridSpec) -> BlockEncoding:
    """(1, 1, 0)-encoding of the embedded population projector diag(I x5, 0 x3).

    Realized as a controlled corner projector: the top block qubit selects
    between the identity on the low slots and the corner projector.
    """
    n = grid.N
    corner = encode_corner_projector()
    inner = DirectSum([Identity(8), corner.U])  # layout (top, ancilla, low)
    u = _on_subregister(inner, (2, 2, 4, n), (1, 0, 2))
    pattern = np.repeat(np.array([1.0] * 5 + [0.0] * 3), n)
    return BlockEncoding(u, 1.0, 1, Diagonal(pattern),
                         "collision identity part", m_bound=1)


def encode_collision_equilibrium_part(ufield: VelocityField, vs: VelocitySet,
                                      grid: GridSpec, step: int = 0,
                                      coefficient: float = 1.0) -> BlockEncoding:
    """(5, 5, 0)-encoding of coefficient * (equilibrium transfer into the f slots).

    Five-term select/prepare over unit transfers |slot><phi| tensored with the
    per-direction equilibrium diagonals; a scalar coefficient in [0, 1] is
    folded into the preparation pair without changing the normalization 5.
    """
    if not 0.0 <= coefficient <= 1.0:
        raise ValueError(f"folded coefficient must lie in [0, 1], got {coefficient}")
    n = grid.N
    nq = _qubits_for(n)
    terms = []
    for slot, entries in enumerate(_slot_diagonal_entries(ufield, step, vs, grid)):
        diag = encode_sparse_diagonal(entries, label=f"equilibrium diagonal {slot}")
        transfer = encode_unit_transfer(slot, PHI_SLOT)
        terms.append(encoding_tensor(transfer, diag))
    y = np.full(5, coefficient)
    prep = state_prep_pair(y, beta=5.0, width=3)
    be = encoding_lcu(y, terms, prep, label="collision equilibrium part")
    return replace(be, m_bound=nq + 5)


def encode_collision(ufield: VelocityField, tau_star: float, vs: VelocitySet,
                     grid: GridSpec, step: int = 0) -> BlockEncoding:
    """(6, m<=n+6, 0)-encoding of the embedded collision matrix."""
    if tau_star < 1.0:
        raise ValueError(f"the collision encoding needs tau* >= 1, got {tau_star}")
    check_weight_condition(ufield, step, vs, grid)
    n = grid.N
    nq = _qubits_for(n)
    gamma = 1.0 - 1.0 / tau_star
    pattern = np.repeat(np.array([1.0] * 5 + [0.0] * 3), n)
    retained = encode_sparse_diagonal(gamma * pattern, alpha=1.0,
                                      label="retained populations")
    relaxed = encode_collision_equilibrium_part(ufield, vs, grid, step,
                                                coefficient=1.0 / tau_star)
    be = encoding_sum(retained, relaxed, (1.0, 1.0), label="collision")
    assert be.alpha == 6.0
    return replace(be, m_bound=nq + 6)


def encode_streaming(vs: VelocitySet, grid: GridSpec) -> BlockEncoding:
    """(1, 1, 0)-encoding of the embedded streaming select diag(P_0..P_4, 0, 0, 0)."""
    from .lattice import streaming_permutation

    n = grid.N
    blocks = []
    target_terms = []
    for slot in range(5):
        if slot < vs.Q:
            p = streaming_permutation(vs, grid, slot)
        else:
            p = Identity(n)
        blocks.append(p)
        target_terms.append(Embedding(p, EMBED_SLOTS * n, EMBED_SLOTS * n,
                                      slot * n, slot * n))
    blocks += [Identity(n)] * 3
    select = tensor_factor(Identity(2), DirectSum(blocks))
    idx = np.arange(2 * EMBED_SLOTS * n)
    a, r = idx // (EMBED_SLOTS * n), idx % (EMBED_SLOTS * n)
    pad = (r // n) >= 5
    flag = Permutation(np.where(pad, 1 - a, a) * (EMBED_SLOTS * n) + r)
    return BlockEncoding(Product([flag, select]), 1.0, 1, Sum(target_terms),
                         "streaming", m_bound=1)


def encode_moment_sum(grid: GridSpec) -> BlockEncoding:
    """(3, 3, 0)-encoding of the embedded moment row (ones over the five f slots).

    Splits the 8x8 slot matrix over the top block qubit: the |0><0| branch
    carries the ones-row on the low slots, the |0><1| branch the corner
    projector, combined with weights matching their normalizations.
    """
    n = grid.N
    lattice_id = BlockEncoding(Identity(n), 1.0, 0, Identity(n), "lattice identity")
    t0 = encoding_tensor(encoding_tensor(encode_qubit_projector(), encode_ones_row()),
                         lattice_id)
    t1 = encoding_tensor(encoding_tensor(encode_qubit_transfer(), encode_corner_projector()),
                         lattice_id)
    be = encoding_sum(t0, t1, (1.0, 1.0), label="moment sum")
    assert be.alpha == 3.0
    return replace(be, m_bound=3)


def encode_marching(ufield: VelocityField, tau_star: float, vs: VelocitySet,
                    grid: GridSpec, step: int = 0) -> BlockEncoding:
    """(18*sqrt(2), m<=n+10, 0)-encoding of the doubled-register one-step map.

    The extra system qubit duplicates the state through a Hadamard; the
    |0> branch keeps the streamed collision output, the |1> branch applies
    the moment row on top of it.
    """
    n = grid.N
    nq = _qubits_for(n)
    sys = EMBED_SLOTS * n
    pa = encoding_product(encode_streaming(vs, grid),
                          encode_collision(ufield, tau_star, vs, grid, step),
                          label="streamed collision")
    branch_id = BlockEncoding(Identity(2), 1.0, 0, Identity(2), "branch qubit")
    lifted = encoding_tensor(branch_id, pa)
    ctrl = encoding_system_select(encode_identity(3.0, 3, sys, "padded identity"),
                                  encode_moment_sum(grid), label="moment branch")
    assembled = encoding_product(ctrl, lifted, label="one-step map")
    h = tensor_factor(Dense(_HADAMARD), Identity(sys))
    alpha = 18.0 * math.sqrt(2.0)
    target = scale(Product([assembled.target, h]), math.sqrt(2.0))
    be = compose_system_unitary(assembled, h, side="right", alpha=alpha,
                                target=target, label="one-step map")
    assert abs(be.alpha - 18.0 * math.sqrt(2.0)) < 1e-12
    return replace(be, m_bound=nq + 10)


def relabel_permutation(grid: GridSpec) -> Permutation:
    """Swap the doubled-register moment output back into the scalar slot."""
    n = grid.N
    total = 2 * EMBED_SLOTS
    order = np.arange(total)
    order[PHI_SLOT], order[EMBED_SLOTS] = order[EMBED_SLOTS], order[PHI_SLOT]
    idx = np.arange(total * n)
    return Permutation(order[idx // n] * n + idx % n)


def scaled_marching_alpha(omega: float) -> float:
    """Normalization of the scaled one-step encoding."""
    hi = max(omega, 1.0 - omega)
    lo = min(omega, 1.0 - omega)
    return 18.0 * math.sqrt(2.0) * hi / lo


def encode_scaled_marching(ufield: VelocityField, tau_star: float, omega: float,
                           vs: VelocitySet, grid: GridSpec, step: int = 0) -> BlockEncoding:
    """(alpha_M, m<=3n+18, 0)-encoding of the similarity-scaled one-step map.

    alpha_M = 18*sqrt(2) * max(omega, 1-omega) / min(omega, 1-omega).  The
    doubled-register output is relabeled so the leading compact corner of
    the encoded block equals the scaled marching matrix exactly.
    """
    if not 0.0 < omega < 1.0:
        raise ValueError(f"omega must lie in (0, 1), got {omega}")
    n = grid.N
    nq = _qubits_for(n)
    me = encode_marching(ufield, tau_star, vs, grid, step)
    me = compose_system_unitary(me, relabel_permutation(grid), side="left",
                                label="relabeled one-step map")

    out_entries = np.full(2 * EMBED_SLOTS, 1.0 - omega)
    out_entries[:5] = omega
    in_entries = np.full(2 * EMBED_SLOTS, 1.0 / (1.0 - omega))
    in_entries[:5] = 1.0 / omega
    alpha_out = max(omega, 1.0 - omega)
    alpha_in = max(1.0 / omega, 1.0 / (1.0 - omega))
    d_out = encode_sparse_diagonal(np.repeat(out_entries, n), alpha=alpha_out,
                                   label="output scaling")
    d_in = encode_sparse_diagonal(np.repeat(in_entries, n), alpha=alpha_in,
                                  label="input scaling")
    be = encoding_product(d_out, encoding_product(me, d_in),
                          label="scaled one-step map")
    alpha = scaled_marching_alpha(omega)
    assert abs(be.alpha - alpha) <= 1e-12 * alpha
    return replace(be, alpha=alpha, m_bound=3 * nq + 18, label="scaled one-step map")
