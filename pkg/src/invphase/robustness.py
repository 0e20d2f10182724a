"""Decoherence-robustness analysis of geometric and dynamical phases.

The sufficient condition: when the commutator [L(gamma), I(t)] carries no
dependence on the decoherence parameter gamma, the invariant (and hence its
eigenbasis and the geometric phases) can be chosen gamma-independent.  The
module certifies that condition on a sample grid and runs full phase sweeps
that report the spread of each phase across the parameter range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import phase as phase_mod
from .errors import InvPhaseError
from .invariant import InvariantTrajectory, TimeGrid, as_generator, \
    invariant_rhs

__all__ = ["RobustnessReport", "SweepScenario", "commutator_independence",
           "phase_sweep"]

#: Entrywise spread across the parameter grid below which the commutator
#: counts as parameter-independent.  The entries are polynomial (degree two)
#: in the rate, so a handful of sample points certifies independence.
COMMUTATOR_TOL = 1e-12


@dataclass
class RobustnessReport:
    """Outcome of a parameter sweep of the full phase pipeline."""

    channel: str
    parameter_values: np.ndarray
    eval_times: np.ndarray
    block_eigenvalues: np.ndarray
    geometric: np.ndarray        # (n_gamma, n_times, n_blocks) complex
    dynamical: np.ndarray        # same shape
    commutator_independent: bool | None = None
    commutator_spread: float | None = None
    skipped: list = field(default_factory=list)
    invariant_depends_on_parameter: bool = False

    def phase_spread(self):
        """Max |phi(gamma_i) - phi(gamma_j)| per block, NaN entries ignored."""
        return _spread(self.geometric)

    def dynamical_spread(self):
        return _spread(self.dynamical)

    def imag_circular_spread(self):
        """Spread of Im(phi) per block with the 2*pi branch folded out."""
        z = np.exp(1j * np.imag(self.geometric))
        spread = np.zeros(self.geometric.shape[2])
        for b in range(self.geometric.shape[2]):
            for t in range(self.geometric.shape[1]):
                col = z[:, t, b]
                col = col[~np.isnan(col.real)]
                if len(col) < 2:
                    continue
                ref = col[0]
                dev = np.abs(np.angle(col / ref))
                spread[b] = max(spread[b], float(np.max(dev)))
        return spread

    def verdict_geometric(self, tol=1e-8):
        spread = self.phase_spread()
        good = spread[~np.isnan(spread)]
        if len(good) == 0:
            return "undetermined"
        return "robust" if np.max(good) < tol else "non-robust"

    def verdict_dynamical(self, tol=1e-8):
        spread = self.dynamical_spread()
        good = spread[~np.isnan(spread)]
        if len(good) == 0:
            return "undetermined"
        return "robust" if np.max(good) < tol else "non-robust"


def _spread(values):
    nb = values.shape[2]
    out = np.full(nb, np.nan)
    for b in range(nb):
        flat = values[:, :, b]
        for t in range(values.shape[1]):
            col = flat[:, t]
            col = col[~np.isnan(col.real)]
            if len(col) < 2:
                continue
            diff = np.max(np.abs(col[:, None] - col[None, :]))
            out[b] = diff if np.isnan(out[b]) else max(out[b], diff)
    return out


def commutator_independence(L_family, inv_traj, gamma_grid, time_grid=None):
    """Certify that [L(gamma), I(t)] does not depend on gamma.

    Parameters
    ----------
    L_family : callable
        ``gamma -> generator``, where the generator is a matrix or a
        callable ``t -> matrix``.
    inv_traj : InvariantTrajectory
    gamma_grid : sequence of parameter values (three or more recommended;
        the entries are quadratic in the rate for the preset channels).
    time_grid : TimeGrid, defaults to the trajectory's own grid.

    Returns
    -------
    (bool, float)
        Whether the entrywise spread across gamma stays below 1e-12 at
        every sampled time, and the largest spread found.
    """
    time_grid = time_grid or inv_traj.grid
    gammas = list(gamma_grid)
    worst = 0.0
    for t in time_grid.times:
        It = inv_traj.value(t)
        comms = np.array([invariant_rhs(as_generator(L_family(g))(t), It)
                          for g in gammas])
        spread = float(np.max(np.abs(comms - comms[0])))
        worst = max(worst, spread)
    return worst < COMMUTATOR_TOL, worst


@dataclass
class SweepScenario:
    """Inputs of a phase sweep over one decoherence parameter.

    ``generator(gamma)`` returns the generator; ``invariant(gamma)``
    returns the invariant trajectory.  When the invariant ignores its
    argument, set ``invariant_depends_on_parameter = False`` and the report
    carries a robustness verdict; otherwise the sweep only emits data.
    """

    channel: str
    generator: Callable
    invariant: Callable[[float], InvariantTrajectory]
    grid: TimeGrid
    phase_kind: str = "cyclic"            # cyclic | noncyclic
    eval_times: np.ndarray | None = None  # noncyclic only; grid nodes
    invariant_depends_on_parameter: bool = False
    richardson: bool = True


def phase_sweep(scenario, gamma_grid):
    """Run the invariant -> spectral -> phase pipeline per parameter value.

    Numerical refusals at individual sweep points (singular family
    parameters, numerically non-diagonalizable bases) are recorded in
    ``skipped`` and leave NaN rows rather than aborting the sweep.
    """
    gammas = np.asarray(list(gamma_grid), dtype=float)
    grid = scenario.grid
    if scenario.phase_kind == "cyclic":
        eval_times = np.array([grid.stop])
        eval_nodes = [grid.steps]
    else:
        eval_times = np.asarray(scenario.eval_times
                                if scenario.eval_times is not None
                                else [grid.stop], dtype=float)
        nodes = np.round((eval_times - grid.start) / grid.step).astype(int)
        if np.max(np.abs(grid.start + nodes * grid.step - eval_times)) \
                > 1e-9 * max(1.0, grid.stop):
            raise ValueError("evaluation times must lie on the grid")
        eval_nodes = list(nodes)

    probe = scenario.invariant(gammas[0])
    probe_basis = phase_mod.align_basis_path(
        probe, TimeGrid(grid.start, grid.stop, 8))
    nb = len(probe_basis.blocks)
    block_eigs = np.array([probe_basis.eigenvalues[g[0]]
                           for g in probe_basis.blocks])

    geometric = np.full((len(gammas), len(eval_times), nb), np.nan + 0j)
    dynamical = np.full_like(geometric, np.nan + 0j)
    skipped = []

    for gi, gamma in enumerate(gammas):
        try:
            traj = scenario.invariant(gamma)
            L = scenario.generator(gamma)
            if scenario.phase_kind == "cyclic":
                path = phase_mod.align_basis_path(traj, grid)
                dec = phase_mod.cyclic_geometric_phase(
                    traj, grid, path=path, richardson=scenario.richardson)
                dyn = phase_mod.dynamical_phase(
                    traj, L, grid, path=path,
                    richardson=scenario.richardson)
                for b in range(nb):
                    if dec.blocks[b].total_geometric is not None:
                        geometric[gi, 0, b] = dec.blocks[b].total_geometric
                        dynamical[gi, 0, b] = dyn.blocks[b].dynamical
            else:
                geo, W, dyn = phase_mod.noncyclic_at_nodes(
                    traj, grid, eval_nodes, L=L,
                    richardson=scenario.richardson)
                for ti in range(len(eval_nodes)):
                    for b, g in enumerate(probe_basis.blocks):
                        if len(g) == 1:
                            j = g[0]
                            if np.abs(W[ti, j]) < phase_mod.OVERLAP_FLOOR:
                                continue
                            geometric[gi, ti, b] = np.log(W[ti, j]) \
                                + geo[ti, j]
                            dynamical[gi, ti, b] = dyn[ti, j]
        except InvPhaseError as exc:
            skipped.append((float(gamma), type(exc).__name__, str(exc)))

    report = RobustnessReport(
        channel=scenario.channel,
        parameter_values=gammas,
        eval_times=eval_times,
        block_eigenvalues=block_eigs,
        geometric=geometric,
        dynamical=dynamical,
        skipped=skipped,
        invariant_depends_on_parameter=
        scenario.invariant_depends_on_parameter,
    )
    if not scenario.invariant_depends_on_parameter:
        ok, spread = commutator_independence(
            scenario.generator, scenario.invariant(gammas[0]), gammas,
            TimeGrid(grid.start, grid.stop, 16))
        report.commutator_independent = ok
        report.commutator_spread = spread
    return report
