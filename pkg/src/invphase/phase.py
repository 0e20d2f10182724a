"""Geometric and dynamical phases from the spectral flow of an invariant.

Expanding a state in the biorthogonal eigenbasis of a dynamical invariant
decouples the master equation block by block: each coefficient picks up a
geometric factor ``exp(-int <<E| d/dt |D>> dt)`` and a dynamical factor
``exp(int <<E| L |D>> dt)``.  The gauge-invariant open-path phase adds the
principal-branch logarithm of the overlap ``<<E(0)|D(t)>>``; for a cyclic
basis path the overlap closes and the quadrature alone is the phase.

The eigenbasis is transported along the trajectory with norm-preserving
phase alignment (:func:`invphase.spectral.align_continuity`), and all phase
quadratures are Richardson-extrapolated from one step-halving, which also
serves as the convergence check.

Degenerate blocks get the non-Abelian treatment: matrices ``H`` (generator
sandwich), ``A`` (connection) and ``M = H + A`` per block, a time-ordered
propagator for the coefficient flow, and the factored phase
``exp(Phi) = W(t) Texp(int A dt)`` whose validity requires
``[int A, int H] = 0`` and is therefore always reported together with that
commutator norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import cumulative_simpson, simpson

from .errors import NotCyclic, StepTooLarge, VanishingOverlap
from .invariant import TimeGrid, as_generator
from .spectral import align_continuity, decompose

__all__ = [
    "BasisPath", "BlockPhase", "PhaseDecomposition", "NonAbelianPhase",
    "align_basis_path", "check_block_decoupling", "cyclic_geometric_phase",
    "noncyclic_geometric_phase", "noncyclic_at_nodes",
    "noncyclic_phase_series", "dynamical_phase",
    "coefficient_evolution", "coefficient_history", "nonabelian_matrices",
    "time_ordered_propagator", "nonabelian_gp", "closed_form_dephasing_gp",
    "cyclic_reference_dephasing", "dynamical_reference_dephasing",
    "fold_phase",
]

#: Overlaps smaller than this make the open-path logarithm undefined.
OVERLAP_FLOOR = 1e-12


def _cumulative_simpson_c(y, dx, axis=0):
    """Complex-safe cumulative Simpson with a leading zero sample."""
    y = np.asarray(y)
    re = cumulative_simpson(y.real, dx=dx, axis=axis, initial=0.0)
    im = cumulative_simpson(y.imag, dx=dx, axis=axis, initial=0.0)
    return re + 1j * im


@dataclass
class BasisPath:
    """Continuity-aligned eigenbasis samples of an invariant trajectory.

    Attributes
    ----------
    times : (K+1,) array
    bases : list of SpectralBasis, aligned head to tail
    derivs : (K+1, dim, dim) array
        Column ``j`` of ``derivs[k]`` is the time derivative of right
        vector ``j`` at ``times[k]`` in the transported gauge.
    geo_integrand : (K+1, dim) array
        ``<<E_j | d/dt D_j>>`` per member.
    eigenvalues : (dim,) array, constant along the path
    blocks : list of member-index groups
    """

    times: np.ndarray
    bases: list
    derivs: np.ndarray
    geo_integrand: np.ndarray
    eigenvalues: np.ndarray
    blocks: list
    grid: TimeGrid

    @property
    def dim(self):
        return len(self.eigenvalues)

    @property
    def step(self):
        return self.grid.step

    def nondegenerate_blocks(self):
        return [b for b, g in enumerate(self.blocks) if len(g) == 1]

    def degenerate_blocks(self):
        return [b for b, g in enumerate(self.blocks) if len(g) > 1]

    def rights(self, k):
        return self.bases[k].rights

    def lefts(self, k):
        return self.bases[k].lefts

    def overlap_series(self):
        """W[k, j] = <<E_j(0) | D_j(t_k)>> for every member."""
        E0 = self.bases[0].lefts
        K = len(self.times)
        W = np.empty((K, self.dim), dtype=complex)
        for k in range(K):
            W[k] = np.einsum("jd,dj->j", E0, self.bases[k].rights)
        return W

    def block_overlap(self, b, k):
        """Overlap matrix of block ``b`` between time 0 and node ``k``."""
        g = self.blocks[b]
        return self.bases[0].lefts[g] @ self.bases[k].rights[:, g]

    def ray_closed(self, tol=1e-8):
        """Per-block test that initial and final subspaces coincide."""
        out = []
        for g in self.blocks:
            U0 = np.linalg.qr(self.bases[0].rights[:, g])[0]
            U1 = np.linalg.qr(self.bases[-1].rights[:, g])[0]
            s = np.linalg.svd(U0.conj().T @ U1, compute_uv=False)
            out.append(bool(np.min(s) > 1.0 - tol))
        return out


def _stencil_columns(traj, t, basis, delta, tol_deg):
    """Aligned basis samples at t +- delta and t +- 2*delta."""
    cols = {}
    for s in (-2 * delta, -delta, delta, 2 * delta):
        cols[s] = align_continuity(basis, decompose(traj.value(t + s),
                                                    tol_deg)).rights
    return (-cols[2 * delta] + 8 * cols[delta]
            - 8 * cols[-delta] + cols[-2 * delta]) / (12 * delta)


def _perturbative_columns(Idot, basis, members, coupling_tol):
    """Eigenvector derivatives from first-order perturbation of d/dt I.

    The vector of member ``j`` mixes into other blocks proportionally to
    the sandwich of d/dt I divided by the eigenvalue gap; the gauge
    component along the vector itself is fixed by the norm-and-phase
    preserving transport, i.e. the conjugate projection of the derivative
    onto the vector is removed.  Members of a degenerate block are handled
    the same way provided d/dt I does not mix the block internally; the
    caller receives ``None`` when it does and must fall back to a stencil.
    """
    lam = basis.eigenvalues
    R, E = basis.rights, basis.lefts
    sandwich = E @ Idot @ R
    scale = max(1.0, float(np.max(np.abs(sandwich))))
    block_of = np.empty(basis.dim, dtype=int)
    for b, group in enumerate(basis.blocks):
        block_of[group] = b
    out = np.zeros((basis.dim, len(members)), dtype=complex)
    for col, j in enumerate(members):
        same = block_of == block_of[j]
        peers = same.copy()
        peers[j] = False
        if np.any(peers):
            # internal mixing of a degenerate block is not resolvable here
            mixing = float(np.max(np.abs(sandwich[peers, j])))
            if mixing > coupling_tol * scale:
                return None
        gaps = np.where(same, 1.0, lam[j] - lam)
        mix = np.where(same, 0.0, sandwich[:, j] / gaps)
        Q = R @ mix
        mu = -np.vdot(R[:, j], Q) / np.vdot(R[:, j], R[:, j])
        out[:, col] = Q + mu * R[:, j]
    return out


def align_basis_path(traj, grid=None, tol_deg=1e-8, deriv="auto",
                     stencil_delta=0.1, coupling_tol=1e-10):
    """Sample, align and differentiate the eigenbasis of an invariant.

    Parameters
    ----------
    deriv : {"auto", "analytic", "stencil"}
        ``analytic`` differentiates the eigenvectors through first-order
        perturbation theory fed by ``traj.derivative``, which has no
        discretization error of its own; ``stencil`` uses a fourth-order
        central difference of aligned decompositions at ``stencil_delta``
        fractions of the grid step.  ``auto`` prefers the analytic route
        and falls back to the stencil at nodes where d/dt I internally
        mixes a degenerate block, the one case perturbation theory cannot
        resolve.
    """
    grid = grid or traj.grid
    times = grid.times
    bases = [decompose(traj.value(times[0]), tol_deg)]
    for t in times[1:]:
        bases.append(align_continuity(bases[-1],
                                      decompose(traj.value(t), tol_deg),
                                      tol_deg))

    blocks = bases[0].blocks
    dim = bases[0].dim
    all_members = list(range(dim))
    delta = grid.step * stencil_delta

    K = len(times)
    derivs = np.zeros((K, dim, dim), dtype=complex)
    for k, t in enumerate(times):
        basis = bases[k]
        cols = None
        if deriv != "stencil":
            cols = _perturbative_columns(traj.derivative(t), basis,
                                         all_members, coupling_tol)
            if cols is None and deriv == "analytic":
                raise ValueError(
                    "analytic derivative cannot resolve the internal "
                    "mixing of a degenerate block; use deriv='auto'")
        if cols is None:
            cols = _stencil_columns(traj, t, basis, delta, tol_deg)
        derivs[k] = cols

    geo = np.empty((K, dim), dtype=complex)
    for k in range(K):
        geo[k] = np.einsum("jd,dj->j", bases[k].lefts, derivs[k])

    return BasisPath(times, bases, derivs, geo, bases[0].eigenvalues.copy(),
                     blocks, grid)


@dataclass
class BlockPhase:
    """Phase data of one eigenvalue block."""

    eigenvalue: complex
    members: list
    geometric_integral: complex | None = None
    ln_correction: complex | None = None
    total_geometric: complex | None = None
    dynamical: complex | None = None
    overlap: complex | None = None

    @property
    def degeneracy(self):
        return len(self.members)


@dataclass
class PhaseDecomposition:
    """Per-block phase report at a fixed evaluation time."""

    time: float
    blocks: list = field(default_factory=list)

    def block_by_eigenvalue(self, lam):
        return min(self.blocks, key=lambda b: abs(b.eigenvalue - lam))


def _require_quadrature_grid(grid, richardson):
    if grid.steps % 2:
        raise ValueError("phase quadrature needs an even number of steps")
    if richardson and grid.steps % 4:
        raise ValueError("step-halving check needs steps divisible by 4")


def check_block_decoupling(traj, L, grid=None, path=None, tol_deg=1e-8):
    """Largest cross-block element of (L - d/dt) in the invariant basis.

    For a true invariant this vanishes between blocks of distinct
    eigenvalue; it is the condition that decouples the coefficient flow
    and makes the per-block phases well defined.
    """
    Lf = as_generator(L)
    path = path or align_basis_path(traj, grid, tol_deg)
    lam = path.eigenvalues
    worst = 0.0
    for k, t in enumerate(path.times):
        R, E = path.rights(k), path.lefts(k)
        op_cols = Lf(t) @ R - path.derivs[k]
        gram = E @ op_cols
        for a in range(path.dim):
            for b in range(path.dim):
                if abs(lam[a] - lam[b]) > tol_deg * max(1.0, abs(lam[a])):
                    worst = max(worst, abs(gram[b, a]))
    return worst


def _cyclic_values(path, tol_cyclic):
    """(quadrature term, closure factor) per member of a closed path."""
    closed = path.ray_closed(tol_cyclic)
    geo = np.full(path.dim, np.nan + 0j)
    kappa = np.full(path.dim, np.nan + 0j)
    h = path.step
    E0 = path.bases[0].lefts
    for b in path.nondegenerate_blocks():
        j = path.blocks[b][0]
        if not closed[b]:
            d0 = path.bases[0].rights[:, j]
            d1 = path.bases[-1].rights[:, j]
            miss = 1.0 - abs(np.vdot(d0, d1)) / (
                np.linalg.norm(d0) * np.linalg.norm(d1))
            raise NotCyclic(
                f"basis ray of block {b} does not close "
                f"(mismatch {miss:.2e} > {tol_cyclic:.1e})")
        geo[j] = -simpson(path.geo_integrand[:, j], dx=h)
        kappa[j] = E0[j] @ path.bases[-1].rights[:, j]
    return geo, kappa


def cyclic_geometric_phase(traj, grid=None, *, path=None, richardson=True,
                           tol_cyclic=1e-8, conv_tol=1e-6, tol_deg=1e-8):
    """Cyclic geometric phase of every non-degenerate block.

    The basis rays must return to themselves at the final time.  The value
    is the quadrature of ``-<<E| d/dt |D>>`` along a gauge that closes:
    the transported basis comes back to the initial one times a closure
    factor, whose principal logarithm is redistributed into the quadrature.
    A cyclic phase is thereby defined modulo 2*pi*i and reported with the
    closure branch nearest zero.

    Returns
    -------
    PhaseDecomposition
        ``total_geometric == geometric_integral`` and ``ln_correction == 0``
        for every non-degenerate block (closed gauge); degenerate blocks
        carry ``None`` and are handled by :func:`nonabelian_gp`.

    Raises
    ------
    NotCyclic
        If any non-degenerate basis ray fails to close at tolerance
        ``tol_cyclic``.
    StepTooLarge
        If the step-halving check moves any phase by more than ten times
        ``conv_tol``.
    """
    grid = grid or (path.grid if path is not None else traj.grid)
    _require_quadrature_grid(grid, richardson)
    path = path or align_basis_path(traj, grid, tol_deg)
    geo, kappa = _cyclic_values(path, tol_cyclic)
    if richardson:
        coarse_path = align_basis_path(traj, grid.coarsened(), tol_deg)
        geo_c, kappa_c = _cyclic_values(coarse_path, tol_cyclic)
        drift = np.nanmax(np.abs(np.concatenate([geo - geo_c,
                                                 kappa - kappa_c])))
        if drift > 10 * conv_tol:
            raise StepTooLarge(
                f"cyclic phase moved by {drift:.2e} under step halving; "
                "refine the grid")
        geo = (4.0 * geo - geo_c) / 3.0
        kappa = (4.0 * kappa - kappa_c) / 3.0

    dec = PhaseDecomposition(time=float(path.times[-1]))
    for b, g in enumerate(path.blocks):
        bp = BlockPhase(path.eigenvalues[g[0]], list(g))
        if len(g) == 1:
            j = g[0]
            v = complex(geo[j] + np.log(kappa[j]))
            bp.geometric_integral = v
            bp.ln_correction = 0.0 + 0.0j
            bp.total_geometric = v
        dec.blocks.append(bp)
    return dec


def _node_values(path, nodes, Lf=None):
    """(cumulative geometric, overlap, cumulative dynamical) at nodes."""
    h = path.step
    cum = _cumulative_simpson_c(-path.geo_integrand, dx=h, axis=0)
    W = path.overlap_series()
    dyn = None
    if Lf is not None:
        g = np.empty_like(cum)
        for k, t in enumerate(path.times):
            g[k] = np.einsum("jd,dj->j", path.lefts(k),
                             Lf(t) @ path.rights(k))
        dyn = _cumulative_simpson_c(g, dx=h, axis=0)
    idx = np.asarray(nodes, dtype=int)
    return cum[idx], W[idx], (None if dyn is None else dyn[idx])


def noncyclic_at_nodes(traj, grid, nodes, *, L=None, path=None,
                       richardson=True, conv_tol=1e-6, tol_deg=1e-8):
    """Extrapolated open-path phase ingredients at several grid nodes.

    Returns ``(geo, W, dyn)`` arrays of shape ``(len(nodes), dim)``:
    the cumulative quadrature term, the overlap with the initial left
    covectors, and (if ``L`` is given) the cumulative dynamical phase.
    With ``richardson`` the quantities are extrapolated from one step
    halving, which requires every node index to be even.
    """
    _require_quadrature_grid(grid, richardson)
    Lf = None if L is None else as_generator(L)
    path = path or align_basis_path(traj, grid, tol_deg)
    geo, W, dyn = _node_values(path, nodes, Lf)
    if richardson:
        if any(int(k) % 2 for k in nodes):
            raise ValueError("evaluation nodes must survive step halving")
        cpath = align_basis_path(traj, grid.coarsened(), tol_deg)
        cnodes = [int(k) // 2 for k in nodes]
        geo_c, W_c, dyn_c = _node_values(cpath, cnodes, Lf)
        drift = np.nanmax(np.abs(geo - geo_c))
        if drift > 10 * conv_tol:
            raise StepTooLarge(
                f"open-path quadrature moved by {drift:.2e} under step "
                "halving; refine the grid")
        geo = (4.0 * geo - geo_c) / 3.0
        W = (4.0 * W - W_c) / 3.0
        if dyn is not None:
            dyn = (4.0 * dyn - dyn_c) / 3.0
    return geo, W, dyn


def noncyclic_geometric_phase(traj, grid=None, *, at=None, path=None,
                              richardson=True, conv_tol=1e-6, tol_deg=1e-8,
                              L=None):
    """Gauge-invariant open-path geometric phase at time ``at``.

    The phase is ``ln <<E(0)|D(t)>> + quadrature`` with the logarithm on
    the principal branch evaluated pointwise, so its imaginary part jumps
    by 2*pi whenever the overlap crosses the negative real axis; the
    quadrature term is accumulated continuously.  ``at`` must be a grid
    node (defaults to the final time).

    Raises
    ------
    VanishingOverlap
        If the overlap modulus at ``at`` is below 1e-12.
    """
    grid = grid or (path.grid if path is not None else traj.grid)
    path_times = grid.times
    t_eval = float(path_times[-1]) if at is None else float(at)
    k = int(np.argmin(np.abs(path_times - t_eval)))
    if abs(path_times[k] - t_eval) > 1e-9 * max(1.0, abs(t_eval)):
        raise ValueError("evaluation time must lie on the grid")

    path = path or align_basis_path(traj, grid, tol_deg)
    geo_all, W_all, dyn_all = noncyclic_at_nodes(
        traj, grid, [k], L=L, path=path, richardson=richardson,
        conv_tol=conv_tol, tol_deg=tol_deg)
    geo, W = geo_all[0], W_all[0]
    dyn = None if dyn_all is None else dyn_all[0]
    dec = PhaseDecomposition(time=t_eval)
    for b, g in enumerate(path.blocks):
        bp = BlockPhase(path.eigenvalues[g[0]], list(g))
        if len(g) == 1:
            j = g[0]
            if abs(W[j]) < OVERLAP_FLOOR:
                raise VanishingOverlap(
                    f"overlap of block {b} has modulus {abs(W[j]):.2e} at "
                    f"t = {t_eval:.6g}; phase undefined there")
            bp.geometric_integral = complex(geo[j])
            bp.overlap = complex(W[j])
            bp.ln_correction = complex(np.log(W[j]))
            bp.total_geometric = bp.ln_correction + bp.geometric_integral
            if dyn is not None:
                bp.dynamical = complex(dyn[j])
        dec.blocks.append(bp)
    return dec


@dataclass
class PhaseSeries:
    """Open-path phase as a function of time for every simple member."""

    times: np.ndarray
    eigenvalues: np.ndarray
    blocks: list
    geometric: np.ndarray      # cumulative quadrature term, (K+1, dim)
    overlap: np.ndarray        # <<E(0)|D(t)>>, (K+1, dim)
    phase: np.ndarray          # principal-branch total, (K+1, dim)
    dynamical: np.ndarray | None = None

    def member_of_eigenvalue(self, lam):
        simple = [g[0] for g in self.blocks if len(g) == 1]
        return min(simple, key=lambda j: abs(self.eigenvalues[j] - lam))


def noncyclic_phase_series(traj, grid=None, *, path=None, L=None,
                           tol_deg=1e-8):
    """Time series of the open-path phase (no extrapolation).

    Members of degenerate blocks and instants of vanishing overlap are
    reported as NaN rather than raising, so the series is usable for
    figure emission across its whole span.
    """
    grid = grid or (path.grid if path is not None else traj.grid)
    path = path or align_basis_path(traj, grid, tol_deg)
    h = path.step
    cum = _cumulative_simpson_c(-path.geo_integrand, dx=h, axis=0)
    W = path.overlap_series()
    phase = np.full_like(cum, np.nan + 0j)
    simple = [g[0] for g in path.blocks if len(g) == 1]
    for j in simple:
        good = np.abs(W[:, j]) >= OVERLAP_FLOOR
        phase[good, j] = np.log(W[good, j]) + cum[good, j]

    dyn = None
    if L is not None:
        Lf = as_generator(L)
        g = np.empty_like(cum)
        for k, t in enumerate(path.times):
            g[k] = np.einsum("jd,dj->j", path.lefts(k),
                             Lf(t) @ path.rights(k))
        dyn = _cumulative_simpson_c(g, dx=h, axis=0)

    return PhaseSeries(path.times, path.eigenvalues.copy(),
                       [list(g) for g in path.blocks], cum, W, phase, dyn)


def _dynamical_values(path, L, upto=None):
    Lf = as_generator(L)
    K = len(path.times) if upto is None else upto + 1
    g = np.empty((K, path.dim), dtype=complex)
    for k in range(K):
        g[k] = np.einsum("jd,dj->j", path.lefts(k),
                         Lf(path.times[k]) @ path.rights(k))
    return np.asarray(simpson(g, dx=path.step, axis=0))


def dynamical_phase(traj, L, grid=None, *, path=None, richardson=True,
                    conv_tol=1e-6, tol_deg=1e-8, upto=None):
    """Quadrature of ``<<E| L |D>>`` per non-degenerate block.

    This is the rate-carrying part of the coefficient evolution; unlike the
    geometric part it changes with the decoherence strength because the
    generator itself does.
    """
    grid = grid or (path.grid if path is not None else traj.grid)
    _require_quadrature_grid(grid, richardson)
    path = path or align_basis_path(traj, grid, tol_deg)
    fine = _dynamical_values(path, L, upto)
    values = fine
    if richardson:
        cpath = align_basis_path(traj, grid.coarsened(), tol_deg)
        coarse = _dynamical_values(cpath, L,
                                   None if upto is None else upto // 2)
        drift = np.nanmax(np.abs(fine - coarse))
        if drift > 10 * conv_tol:
            raise StepTooLarge(
                f"dynamical quadrature moved by {drift:.2e} under halving")
        values = (4.0 * fine - coarse) / 3.0

    t_eval = path.times[-1 if upto is None else upto]
    dec = PhaseDecomposition(time=float(t_eval))
    for b, g in enumerate(path.blocks):
        bp = BlockPhase(path.eigenvalues[g[0]], list(g))
        if len(g) == 1:
            bp.dynamical = complex(values[g[0]])
        dec.blocks.append(bp)
    return dec


def coefficient_history(traj, L, grid=None, c0=None, *, path=None,
                        tol_deg=1e-8):
    """Coefficients of the invariant-basis expansion predicted by the
    decoupled flow.

    Simple members evolve as ``c(0) * exp(geometric + dynamical)`` in the
    transported gauge; members of a degenerate block evolve jointly under
    the time-ordered propagator of ``M = H + A``.

    Returns
    -------
    (K+1, dim) complex array, one column per member.
    """
    grid = grid or (path.grid if path is not None else traj.grid)
    path = path or align_basis_path(traj, grid, tol_deg)
    Lf = as_generator(L)
    K = len(path.times)
    c0 = np.ones(path.dim, dtype=complex) if c0 is None \
        else np.asarray(c0, dtype=complex)
    h = path.step

    g = np.empty((K, path.dim), dtype=complex)
    for k in range(K):
        g[k] = np.einsum("jd,dj->j", path.lefts(k),
                         Lf(path.times[k]) @ path.rights(k))
    cum_dyn = _cumulative_simpson_c(g, dx=h, axis=0)
    cum_geo = _cumulative_simpson_c(-path.geo_integrand, dx=h, axis=0)

    out = np.empty((K, path.dim), dtype=complex)
    for blk in path.nondegenerate_blocks():
        j = path.blocks[blk][0]
        out[:, j] = c0[j] * np.exp(cum_geo[:, j] + cum_dyn[:, j])
    for blk in path.degenerate_blocks():
        members = path.blocks[blk]
        c = c0[members].copy()
        out[0, members] = c
        for k in range(K - 1):
            M0 = _block_M(path, Lf, k, members)
            M1 = _block_M(path, Lf, k + 1, members)
            c = scipy.linalg.expm(0.5 * h * (M0 + M1)) @ c
            out[k + 1, members] = c
    return out


def coefficient_evolution(traj, L, grid=None, c0=None, *, path=None,
                          tol_deg=1e-8):
    """Final-time coefficients; see :func:`coefficient_history`."""
    return coefficient_history(traj, L, grid, c0, path=path,
                               tol_deg=tol_deg)[-1]


def _block_M(path, Lf, k, members):
    E = path.lefts(k)[members]
    R = path.rights(k)[:, members]
    H = E @ Lf(path.times[k]) @ R
    A = -(E @ path.derivs[k][:, members])
    return H + A


def nonabelian_matrices(traj, L, t, grid=None, *, path=None, tol_deg=1e-8):
    """H, A and M = H + A of every block at the grid node nearest ``t``.

    ``H`` sandwiches the generator, ``A`` is minus the connection; for a
    singleton block they reduce to the scalar integrands of the Abelian
    phases.
    """
    grid = grid or (path.grid if path is not None else traj.grid)
    path = path or align_basis_path(traj, grid, tol_deg)
    Lf = as_generator(L)
    k = int(np.argmin(np.abs(path.times - t)))
    out = {}
    for b, members in enumerate(path.blocks):
        E = path.lefts(k)[members]
        R = path.rights(k)[:, members]
        H = E @ Lf(path.times[k]) @ R
        A = -(E @ path.derivs[k][:, members])
        out[b] = (H, A, H + A)
    return out


_GAUSS_OFFSETS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


def _ordered_product(M, times):
    """Product of fourth-order Magnus factors, latest factor leftmost."""
    dim = M(times[0]).shape[0]
    U = np.eye(dim, dtype=complex)
    for k in range(len(times) - 1):
        t, h = times[k], times[k + 1] - times[k]
        A1 = M(t + _GAUSS_OFFSETS[0] * h)
        A2 = M(t + _GAUSS_OFFSETS[1] * h)
        omega = 0.5 * h * (A1 + A2) \
            + (np.sqrt(3.0) / 12.0) * h * h * (A2 @ A1 - A1 @ A2)
        U = scipy.linalg.expm(omega) @ U
    return U


def time_ordered_propagator(M, grid, *, check=True, tol=1e-8):
    """Time-ordered exponential Texp(int M dt) over the grid.

    ``M`` is a callable returning a square matrix.  Each step uses the
    two-point Gauss Magnus rule (fourth order); ``check`` reruns at half
    step and raises :class:`StepTooLarge` when the result moves by more
    than ten times ``tol``.
    """
    U = _ordered_product(M, grid.times)
    if check:
        U2 = _ordered_product(M, grid.halved().times)
        if float(np.max(np.abs(U2 - U))) > 10 * tol:
            raise StepTooLarge(
                "time-ordered product changed under step halving; "
                "refine the grid")
        U = U2
    return U


@dataclass
class NonAbelianPhase:
    """Factored open-path phase of one degenerate block."""

    eigenvalue: complex
    members: list
    overlap_matrix: np.ndarray
    connection_propagator: np.ndarray
    phase_factor: np.ndarray          # exp(Phi) = overlap @ Texp(int A)
    commutator_norm: float
    factorization_advisory: bool      # True when [int A, int H] is large
    cyclic: bool


def nonabelian_gp(traj, L, grid=None, *, path=None, tol_deg=1e-8,
                  tol_cyclic=1e-8, advisory_tol=1e-8):
    """Non-Abelian geometric phase data for every block.

    The factored form ``exp(Phi) = W(t) Texp(int A dt)`` is justified only
    when the integrated connection and the integrated generator sandwich
    commute; the commutator norm is always reported and
    ``factorization_advisory`` flags results beyond ``advisory_tol``.

    For blocks whose subspace closes, the connection samples are gauge
    transformed so the transported frame itself closes, after which the
    overlap matrix is the identity.
    """
    grid = grid or (path.grid if path is not None else traj.grid)
    path = path or align_basis_path(traj, grid, tol_deg)
    Lf = as_generator(L)
    K = len(path.times)
    h = path.step
    T = path.times[-1] - path.times[0]
    closed = path.ray_closed(tol_cyclic)

    out = {}
    for b, members in enumerate(path.blocks):
        n = len(members)
        A = np.empty((K, n, n), dtype=complex)
        H = np.empty((K, n, n), dtype=complex)
        for k in range(K):
            E = path.lefts(k)[members]
            R = path.rights(k)[:, members]
            H[k] = E @ Lf(path.times[k]) @ R
            A[k] = -(E @ path.derivs[k][:, members])

        W_end = path.block_overlap(b, K - 1)
        if closed[b]:
            # close the frame: distribute the holonomy along the path
            log_hol = scipy.linalg.logm(W_end)
            frac = (path.times - path.times[0]) / T
            for k in range(K):
                G = scipy.linalg.expm(-frac[k] * log_hol)
                Ginv = scipy.linalg.expm(frac[k] * log_hol)
                A[k] = Ginv @ A[k] @ G + log_hol / T
            W_report = W_end @ scipy.linalg.expm(-log_hol)
        else:
            W_report = W_end

        int_A = np.asarray(simpson(A, dx=h, axis=0))
        int_H = np.asarray(simpson(H, dx=h, axis=0))
        comm = float(np.linalg.norm(int_A @ int_H - int_H @ int_A))

        U = np.eye(n, dtype=complex)
        for k in range(K - 1):
            U = scipy.linalg.expm(0.5 * h * (A[k] + A[k + 1])) @ U
        out[b] = NonAbelianPhase(
            eigenvalue=path.eigenvalues[members[0]],
            members=list(members),
            overlap_matrix=W_report,
            connection_propagator=U,
            phase_factor=W_report @ U,
            commutator_norm=comm,
            factorization_advisory=comm > advisory_tol,
            cyclic=closed[b],
        )
    return out


def fold_phase(phi):
    """Map the imaginary part of a phase into (-pi, pi]."""
    phi = complex(phi)
    return phi.real + 1j * float(np.angle(np.exp(1j * phi.imag)))


def closed_form_dephasing_gp(cos_amp, sin_amp, skew, branch=+1):
    """Literal closed-form candidate for the cyclic dephasing phases.

    Evaluates ``-2*pi*(skew*u + 2*(cos_amp**2 + sin_amp**2)*
    sqrt(-(u/v)**2)) / (u*v)`` with ``u = 2*sin_amp + skew`` and
    ``v = sqrt(4*(cos_amp**2 + sin_amp**2) - skew**2)``; ``branch``
    selects the sign of the inner square root.  Returned as
    ``(phi_minus_block, phi_plus_block)`` with the second the negative of
    the first.

    The square-root term is a gauge artifact: no choice of ``branch``
    reproduces the gauge-invariant quadrature, which instead equals the
    ``skew`` term alone (see :func:`cyclic_reference_dephasing`).  The
    function is kept for comparison studies.
    """
    u = 2.0 * sin_amp + skew
    if abs(u) < 1e-12:
        from .errors import VanishingDenominator
        raise VanishingDenominator(
            "closed form undefined at 2*sin_amp + skew == 0")
    v2 = cos_amp ** 2 + sin_amp ** 2
    v3 = np.sqrt(complex(4.0 * v2 - skew ** 2))
    root = branch * np.sqrt(-(u / v3) ** 2 + 0j)
    phi1 = -2.0 * np.pi * (skew * u + 2.0 * v2 * root) / (u * v3)
    return complex(phi1), complex(-phi1)


def cyclic_reference_dephasing(cos_amp, sin_amp, skew):
    """Verified closed form of the cyclic dephasing phases.

    ``(phi_minus_block, phi_plus_block)`` where the minus block belongs to
    eigenvalue ``trace/2 - v/2`` with ``v = sqrt(4*(cos_amp**2 +
    sin_amp**2) - skew**2)``:

    ``phi_minus = -2*pi*skew / v``, folded so its imaginary part lies in
    (-pi, pi], and ``phi_plus = -phi_minus`` with the same fold.  The
    value is real when the invariant spectrum is real and purely imaginary
    otherwise; it matches both the gauge-invariant quadrature and direct
    master-equation integration.
    """
    v2 = cos_amp ** 2 + sin_amp ** 2
    v3 = np.sqrt(complex(4.0 * v2 - skew ** 2))
    if abs(v3) < 1e-12:
        from .errors import DegenerateFamily
        raise DegenerateFamily(
            "reference undefined at 4*(cos_amp**2 + sin_amp**2) == skew**2")
    phi_minus = fold_phase(-2.0 * np.pi * skew / v3)
    return phi_minus, fold_phase(-phi_minus)


def dynamical_reference_dephasing(rate, cos_amp, sin_amp, skew, omega=1.0):
    """Closed-form cyclic dynamical phases of the dephasing family.

    ``(-4*pi*rate**2/omega + 2*pi*skew/v, -4*pi*rate**2/omega -
    2*pi*skew/v)`` for the (minus, plus) eigenvalue blocks.  Both carry
    the rate explicitly, which is why the dynamical phase cannot be made
    robust.
    """
    v2 = cos_amp ** 2 + sin_amp ** 2
    v3 = np.sqrt(complex(4.0 * v2 - skew ** 2))
    damp = -4.0 * np.pi * rate ** 2 / omega
    split = 2.0 * np.pi * skew / v3
    return complex(damp + split), complex(damp - split)
