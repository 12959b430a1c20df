"""Velocity sets, grids, velocity fields and the physical parameter relations.

Node indexing is row-major with x fastest: node j = iy * nx + ix.  Streaming
along a lattice direction is a modular shift of the matching grid index, so
periodic boundaries are built in.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .ops import Identity, Permutation, StructuredOperator, Tensor


@dataclass(frozen=True)
class VelocitySet:
    """Discrete velocity model: directions e_i (integer vectors) and weights w_i."""

    name: str
    d: int
    e: tuple[tuple[int, ...], ...]
    w: tuple[Fraction, ...]

    @property
    def Q(self) -> int:
        return len(self.e)

    @property
    def directions(self) -> np.ndarray:
        return np.array(self.e, dtype=np.float64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([float(x) for x in self.w])

    def validate(self) -> None:
        if sum(self.w) != 1:
            raise ValueError(f"weights of {self.name} do not sum to 1")
        for k in range(self.d):
            if sum(wi * ei[k] for wi, ei in zip(self.w, self.e)) != 0:
                raise ValueError(f"first moment of {self.name} is not zero")
        third = Fraction(1, 3)
        for a in range(self.d):
            for b in range(self.d):
                m = sum(wi * ei[a] * ei[b] for wi, ei in zip(self.w, self.e))
                if m != (third if a == b else 0):
                    raise ValueError(f"second moment of {self.name} is not I/3")


def d2q5() -> VelocitySet:
    """Five-direction 2-d model: rest, +x, -x, +y, -y with weights (2/6, 1/6 x4)."""
    vs = VelocitySet(
        name="d2q5",
        d=2,
        e=((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)),
        w=(Fraction(2, 6),) + (Fraction(1, 6),) * 4,
    )
    vs.validate()
    return vs


def d1q3() -> VelocitySet:
    """Three-direction 1-d model: rest, +x, -x with weights (4/6, 1/6, 1/6).

    The weights keep the second moment at 1/3 so the sound speed and the
    diffusion relation match the 2-d model unchanged.
    """
    vs = VelocitySet(
        name="d1q3",
        d=1,
        e=((0,), (1,), (-1,)),
        w=(Fraction(4, 6), Fraction(1, 6), Fraction(1, 6)),
    )
    vs.validate()
    return vs


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid with power-of-two node counts; ny = 1 in one dimension."""

    nx: int
    ny: int = 1
    dx: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if not _is_power_of_two(self.nx) or not _is_power_of_two(self.ny):
            raise ValueError(f"grid sizes must be powers of two, got {self.nx}x{self.ny}")
        if self.dx <= 0 or self.dt <= 0:
            raise ValueError("dx and dt must be positive")

    @property
    def N(self) -> int:
        return self.nx * self.ny

    @property
    def c(self) -> float:
        return self.dx / self.dt

    @property
    def cs2(self) -> float:
        return self.c * self.c / 3.0

    @property
    def num_qubits(self) -> int:
        return int(np.log2(self.nx)) + int(np.log2(self.ny))

    def node_index(self, ix: int, iy: int = 0) -> int:
        return iy * self.nx + ix

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """(ix, iy) arrays over all nodes in index order."""
        j = np.arange(self.N)
        return j % self.nx, j // self.nx


class VelocityField:
    """Advection velocity in lattice units (dx/dt), evaluable at any node and step."""

    def __init__(self, tables: np.ndarray, time_indexed: bool):
        # tables shape: (T, N, d); a single table has T = 1
        self._tables = np.asarray(tables, dtype=np.float64)
        self._time_indexed = time_indexed
        if not np.all(np.isfinite(self._tables)):
            raise ValueError("velocity field contains non-finite entries")

    @classmethod
    def uniform(cls, u, grid: GridSpec, d: int) -> "VelocityField":
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if u.shape != (d,):
            raise ValueError(f"uniform velocity must have {d} components, got {u.shape}")
        table = np.broadcast_to(u, (grid.N, d)).copy()
        return cls(table[None], time_indexed=False)

    @classmethod
    def from_table(cls, table, grid: GridSpec) -> "VelocityField":
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] != grid.N:
            raise ValueError(f"per-node table must be (N, d) with N={grid.N}, got {table.shape}")
        return cls(table[None], time_indexed=False)

    @classmethod
    def time_indexed(cls, tables, grid: GridSpec) -> "VelocityField":
        tables = np.asarray(tables, dtype=np.float64)
        if tables.ndim != 3 or tables.shape[1] != grid.N:
            raise ValueError(f"time-indexed tables must be (T, N, d), got {tables.shape}")
        return cls(tables, time_indexed=True)

    @property
    def is_static(self) -> bool:
        return not self._time_indexed

    @property
    def d(self) -> int:
        return self._tables.shape[2]

    def at(self, step: int) -> np.ndarray:
        """Velocity table (N, d) at a time step; time-indexed fields clamp past the end."""
        if self.is_static:
            return self._tables[0]
        t = min(int(step), self._tables.shape[0] - 1)
        return self._tables[t]

    def max_abs_components(self) -> np.ndarray:
        return np.max(np.abs(self._tables), axis=(0, 1))


def load_velocity_table(path, grid: GridSpec, d: int = 2) -> VelocityField:
    """Read a per-node velocity table from CSV with columns ix, iy, ux, uy."""
    table = np.full((grid.N, d), np.nan)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ix, iy = int(row["ix"]), int(row["iy"])
            if not (0 <= ix < grid.nx and 0 <= iy < grid.ny):
                raise ValueError(f"node ({ix}, {iy}) outside {grid.nx}x{grid.ny} grid")
            comps = [float(row["ux"]), float(row["uy"])][:d]
            table[grid.node_index(ix, iy)] = comps
    if np.any(np.isnan(table)):
        missing = int(np.count_nonzero(np.isnan(table[:, 0])))
        raise ValueError(f"velocity table leaves {missing} nodes unset")
    return VelocityField.from_table(table, grid)


def equilibrium(phi: float, u, vs: VelocitySet, grid: GridSpec) -> np.ndarray:
    """Per-direction equilibrium populations w_i * phi * (1 + c_i.u / cs^2)."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    ci_dot_u = grid.c * (vs.directions @ u)
    if np.any(np.abs(ci_dot_u) > grid.cs2 * (1 + 1e-12)):
        warnings.warn(
            "advection velocity gives negative equilibrium populations "
            "(|c_i.u| exceeds cs^2, outside the low-Mach regime)"
        )
    return vs.weights * phi * (1.0 + ci_dot_u / grid.cs2)


def equilibrium_field(phi: np.ndarray, u_table: np.ndarray, vs: VelocitySet,
                      grid: GridSpec) -> np.ndarray:
    """Vectorized equilibrium over all nodes: result is (Q, N)."""
    ci_dot_u = grid.c * (vs.directions @ u_table.T)  # (Q, N)
    return vs.weights[:, None] * phi[None, :] * (1.0 + ci_dot_u / grid.cs2)


def moment_phi(f: np.ndarray) -> np.ndarray | float:
    """Zeroth moment: sum over the direction axis."""
    return np.sum(f, axis=0)


def shift_operator(n: int) -> Permutation:
    """Cyclic increment permutation: S e_i = e_{(i+1) mod n}."""
    if not _is_power_of_two(n):
        raise ValueError(f"shift dimension must be a power of two, got {n}")
    return Permutation((np.arange(n) + 1) % n)


def streaming_permutation(vs: VelocitySet, grid: GridSpec, i: int) -> StructuredOperator:
    """Node permutation streaming direction i one cell, with periodic wraparound."""
    if i >= vs.Q:
        raise ValueError(f"direction index {i} out of range for {vs.name} (Q={vs.Q})")
    e = vs.e[i]
    ex = e[0]
    ey = e[1] if vs.d == 2 else 0

    def axis_shift(n, s):
        if s == 0:
            return Identity(n)
        op = shift_operator(n)
        return op if s > 0 else op.adjoint()

    if grid.ny == 1:
        return axis_shift(grid.nx, ex)
    # node j = iy * nx + ix: y is the slow (left) tensor factor
    return Tensor(axis_shift(grid.ny, ey), axis_shift(grid.nx, ex))


@dataclass(frozen=True)
class LowMachCheck:
    ok: bool
    max_components: tuple[float, ...]
    bound: float


def check_low_mach(ufield: VelocityField, grid: GridSpec) -> LowMachCheck:
    """Componentwise sup |u| <= (1/3) dx/dt, with a 1e-12 slack for roundoff."""
    sup = ufield.max_abs_components()
    bound = grid.c / 3.0
    ok = bool(np.all(sup <= bound + 1e-12))
    return LowMachCheck(ok, tuple(float(s) for s in sup), bound)


def diffusion_coefficient(tau_star: float, grid: GridSpec) -> float:
    """D = (1/3)(tau* - 1/2) dx^2 / dt; non-positive below tau* = 1/2."""
    if tau_star <= 0.5:
        warnings.warn(f"tau* = {tau_star} gives a non-positive diffusion coefficient")
    return (tau_star - 0.5) * grid.dx * grid.dx / (3.0 * grid.dt)


def relaxation_regime(tau_star: float) -> str:
    """Stability bookkeeping: which relaxation regime a run operates in."""
    if tau_star > 1.0:
        return "under-relaxation (tau* > 1, norm bound applies)"
    if tau_star >= 0.5:
        return "0.5 <= tau* <= 1 (stable empirically, no norm bound claimed)"
    return "tau* < 0.5 (outside the stability condition)"
