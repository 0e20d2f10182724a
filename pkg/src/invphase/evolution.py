"""Direct master-equation integration and invariant-basis expansion.

This module is the ground truth against which the phase machinery is held:
it never touches the phase quadratures.  States are integrated with plain
fixed-step RK4 and expanded by projecting onto the instantaneous left
covectors of the invariant, so agreement between the projected coefficients
and the exponential-of-quadrature prediction is evidence, not tautology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, StepTooLarge
from .invariant import as_generator
from .phase import align_basis_path

__all__ = ["StateTrajectory", "CoefficientHistory", "integrate_master",
           "expand_in_invariant_basis", "oracle_compare"]


@dataclass
class StateTrajectory:
    """Hilbert-Schmidt vectors along a time grid."""

    times: np.ndarray
    states: np.ndarray          # (K+1, dim)

    @property
    def dim(self):
        return self.states.shape[1]


@dataclass
class CoefficientHistory:
    """Expansion coefficients of a state trajectory in an invariant basis."""

    times: np.ndarray
    coefficients: np.ndarray    # (K+1, dim), one column per basis member
    eigenvalues: np.ndarray
    blocks: list
    path: object                # BasisPath used for the projection

    def reconstruction_residual(self, states):
        """Largest norm of state - sum_j c_j D_j over the grid."""
        worst = 0.0
        for k in range(len(self.times)):
            rebuilt = self.path.rights(k) @ self.coefficients[k]
            worst = max(worst, float(np.linalg.norm(rebuilt - states[k])))
        return worst


def _rk4_vector(L, y0, times):
    out = np.empty((len(times), y0.shape[0]), dtype=complex)
    out[0] = y0
    y = y0
    for k in range(len(times) - 1):
        t = times[k]
        h = times[k + 1] - t
        k1 = L(t) @ y
        k2 = L(t + h / 2) @ (y + h / 2 * k1)
        k3 = L(t + h / 2) @ (y + h / 2 * k2)
        k4 = L(t + h) @ (y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return out


def integrate_master(L, rho0, grid, check_step=True, tol=1e-9):
    """RK4 trajectory of d(rho)/dt = L(t) rho on the grid.

    Raises
    ------
    StepTooLarge
        If the endpoint moves by more than ten times ``tol`` per unit time
        under step halving.
    """
    Lf = as_generator(L)
    y0 = np.asarray(rho0, dtype=complex)
    states = _rk4_vector(Lf, y0, grid.times)
    if check_step:
        fine = _rk4_vector(Lf, y0, grid.halved().times)
        err = float(np.max(np.abs(fine[-1] - states[-1])))
        if err > 10 * tol * (grid.stop - grid.start):
            raise StepTooLarge(
                f"state endpoint moved by {err:.2e} under step halving")
    return StateTrajectory(grid.times, states)


def expand_in_invariant_basis(state_traj, inv_traj, *, path=None,
                              tol_deg=1e-8):
    """Project a state trajectory onto the invariant's left covectors.

    The invariant basis is continuity-aligned over the same grid; the
    coefficient of member ``j`` at node ``k`` is
    ``<<E_j(t_k) | rho(t_k)>>``.
    """
    if path is None:
        path = align_basis_path(inv_traj, _grid_of(state_traj), tol_deg)
    if path.dim != state_traj.dim:
        raise DimensionMismatch(
            f"invariant acts on dimension {path.dim}, states have "
            f"dimension {state_traj.dim}")
    if len(path.times) != len(state_traj.times):
        raise DimensionMismatch("state and basis grids differ in length")
    K = len(state_traj.times)
    coeffs = np.empty((K, path.dim), dtype=complex)
    for k in range(K):
        coeffs[k] = path.lefts(k) @ state_traj.states[k]
    return CoefficientHistory(state_traj.times, coeffs,
                              path.eigenvalues.copy(),
                              [list(g) for g in path.blocks], path)


def _grid_of(state_traj):
    from .invariant import TimeGrid
    t = state_traj.times
    return TimeGrid(float(t[0]), float(t[-1]), len(t) - 1)


def oracle_compare(direct, predicted, floor=1e-12):
    """Largest relative deviation between two coefficient histories.

    Per sample and member: ``|direct - predicted| / max(|direct|, floor)``;
    the floor keeps coefficients that decay through zero comparable.
    """
    direct = np.asarray(direct)
    predicted = np.asarray(predicted)
    if direct.shape != predicted.shape:
        raise DimensionMismatch(
            f"histories have shapes {direct.shape} and {predicted.shape}")
    denom = np.maximum(np.abs(direct), floor)
    return float(np.max(np.abs(direct - predicted) / denom))
