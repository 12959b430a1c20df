"""Reference collide-and-stream solver, the ground truth for all quantum paths.

Streaming is done with `np.roll` on the 2-d field layout, deliberately a
different code path from the permutation operators used by the marching
representation, so trajectory comparisons between the two are a genuine
cross-check.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .lattice import GridSpec, VelocityField, VelocitySet, equilibrium_field, moment_phi


@dataclass(frozen=True)
class DistributionField:
    """Populations f[i, j] = f_i(x_j) plus the grid/model they live on."""

    f: np.ndarray  # (Q, N)
    grid: GridSpec
    vs: VelocitySet
    step: int = 0

    def __post_init__(self):
        if self.f.shape != (self.vs.Q, self.grid.N):
            raise ValueError(
                f"populations must be ({self.vs.Q}, {self.grid.N}), got {self.f.shape}"
            )
        if not np.all(np.isfinite(self.f)):
            raise ValueError("populations contain non-finite entries")

    @property
    def phi(self) -> np.ndarray:
        return moment_phi(self.f)


def init_equilibrium(phi: np.ndarray, ufield: VelocityField, vs: VelocitySet,
                     grid: GridSpec) -> DistributionField:
    """Start from local equilibrium at the given scalar field and velocity."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (grid.N,):
        raise ValueError(f"scalar field must have shape ({grid.N},), got {phi.shape}")
    f = equilibrium_field(phi, ufield.at(0), vs, grid)
    return DistributionField(f=f, grid=grid, vs=vs, step=0)


def collide(state: DistributionField, ufield: VelocityField,
            tau_star: float) -> DistributionField:
    """BGK relaxation toward equilibrium at rate 1/tau*."""
    if tau_star <= 0:
        raise ValueError(f"tau* must be positive, got {tau_star}")
    phi = state.phi
    feq = equilibrium_field(phi, ufield.at(state.step), state.vs, state.grid)
    f_col = (1.0 - 1.0 / tau_star) * state.f + (1.0 / tau_star) * feq
    return replace(state, f=f_col)


def stream(state: DistributionField) -> DistributionField:
    """Shift each direction's populations one cell along its lattice vector."""
    grid, vs = state.grid, state.vs
    f_new = np.empty_like(state.f)
    for i, e in enumerate(vs.e):
        ex = e[0]
        ey = e[1] if vs.d == 2 else 0
        plane = state.f[i].reshape(grid.ny, grid.nx)
        f_new[i] = np.roll(plane, shift=(ey, ex), axis=(0, 1)).reshape(-1)
    return replace(state, f=f_new, step=state.step + 1)


def run(state: DistributionField, ufield: VelocityField, tau_star: float,
        steps: int) -> list[DistributionField]:
    """Collide-then-stream trajectory; element k is the state after k steps."""
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    trajectory = [state]
    for _ in range(steps):
        state = stream(collide(state, ufield, tau_star))
        trajectory.append(state)
    return trajectory


def trajectory_phi_csv(trajectory: list[DistributionField], path) -> None:
    """Export scalar fields as rows (step, ix, iy, phi)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "ix", "iy", "phi"])
        for state in trajectory:
            ix, iy = state.grid.coordinates()
            for j, value in enumerate(state.phi):
                writer.writerow([state.step, int(ix[j]), int(iy[j]), f"{value:.17g}"])
