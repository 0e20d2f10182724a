"""Dynamical invariants for the three preset channels.

An invariant of a generator L(t) is a matrix trajectory I(t) obeying
dI/dt = [L, I]; its eigenvalues are then constants of motion.  The module
provides closed-form families for dephasing, spontaneous emission and
bit-flip, a generic fixed-step solver for arbitrary initial conditions, and
a verifier that measures how well a candidate satisfies the defining
equation and keeps its spectrum frozen.

Family parameters are arbitrary constants; different choices give different
invariants and hence different phase decompositions downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (DegenerateFamily, DimensionMismatch, SingularExponent,
                     StepTooLarge)

__all__ = ["TimeGrid", "InvariantTrajectory", "period", "invariant_rhs",
           "solve_invariant", "dephasing_family",
           "spontaneous_emission_family", "bitflip_family",
           "verify_invariant", "as_generator"]


def period(omega=1.0):
    """Duration 2*pi/omega of one cyclic run of the basis vectors."""
    return 2.0 * np.pi / omega


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with ``steps`` intervals from start to stop."""

    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("a grid needs at least two steps")
        if not self.stop > self.start:
            raise ValueError("stop must exceed start")

    @property
    def step(self):
        return (self.stop - self.start) / self.steps

    @property
    def times(self):
        return np.linspace(self.start, self.stop, self.steps + 1)

    def halved(self):
        """Grid with twice as many intervals over the same span."""
        return TimeGrid(self.start, self.stop, 2 * self.steps)

    def coarsened(self):
        """Grid with half as many intervals; requires even ``steps``."""
        if self.steps % 2:
            raise ValueError("cannot coarsen a grid with odd step count")
        return TimeGrid(self.start, self.stop, self.steps // 2)


@dataclass(frozen=True)
class InvariantTrajectory:
    """Matrix-valued trajectory with value and time-derivative samplers.

    ``value(t)`` and ``derivative(t)`` return dim x dim complex arrays.
    Closed-form families carry analytic derivatives; numerically integrated
    trajectories evaluate the derivative through the defining commutator
    with their generator, which is exact on the solution.
    """

    dim: int
    value: Callable[[float], np.ndarray]
    derivative: Callable[[float], np.ndarray]
    grid: TimeGrid
    label: str = "custom"
    params: dict = field(default_factory=dict)


def as_generator(L):
    """Normalize a constant matrix or a callable t -> matrix to a callable."""
    if callable(L):
        return L
    mat = np.asarray(L, dtype=complex)
    return lambda t: mat


def invariant_rhs(L, I):
    """Commutator L @ I - I @ L, the time derivative a true invariant has."""
    L = np.asarray(L, dtype=complex)
    I = np.asarray(I, dtype=complex)
    if L.shape != I.shape or L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(
            f"cannot commute shapes {L.shape} and {I.shape}")
    return L @ I - I @ L


def _rk4_matrix(L, I0, times):
    """Classical RK4 for dI/dt = [L(t), I] on a fixed grid."""
    out = np.empty((len(times),) + I0.shape, dtype=complex)
    out[0] = I0
    cur = I0
    for k in range(len(times) - 1):
        t = times[k]
        h = times[k + 1] - t
        k1 = invariant_rhs(L(t), cur)
        k2 = invariant_rhs(L(t + h / 2), cur + h / 2 * k1)
        k3 = invariant_rhs(L(t + h / 2), cur + h / 2 * k2)
        k4 = invariant_rhs(L(t + h), cur + h * k3)
        cur = cur + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = cur
    return out


def solve_invariant(L, I0, grid, check_step=True, tol=1e-8):
    """Integrate dI/dt = [L, I] from I0 over the grid.

    Between nodes the trajectory is evaluated by cubic Hermite interpolation
    using the exact nodal derivatives [L, I]; the derivative sampler applies
    the defining commutator to the interpolated value.

    Raises
    ------
    StepTooLarge
        If halving the step moves the endpoint by more than ten times the
        target accuracy ``tol * ||I0|| * duration``.
    """
    Lf = as_generator(L)
    I0 = np.asarray(I0, dtype=complex)
    if not np.all(np.isfinite(I0)):
        raise ValueError("initial matrix must be finite")
    times = grid.times
    samples = _rk4_matrix(Lf, I0, times)

    if check_step:
        fine = _rk4_matrix(Lf, I0, grid.halved().times)
        err = float(np.max(np.abs(fine[-1] - samples[-1])))
        budget = tol * max(1.0, float(np.linalg.norm(I0))) \
            * (grid.stop - grid.start)
        if err > 10 * budget:
            raise StepTooLarge(
                f"endpoint moved by {err:.2e} under step halving "
                f"(budget {budget:.2e}); reduce the grid step")

    h = grid.step
    t0 = grid.start
    n = grid.steps
    derivs = np.array([invariant_rhs(Lf(t), s)
                       for t, s in zip(times, samples)])

    def value(t):
        x = (t - t0) / h
        k = min(max(int(np.floor(x)), 0), n - 1)
        s = x - k
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * samples[k] + h10 * h * derivs[k]
                + h01 * samples[k + 1] + h11 * h * derivs[k + 1])

    def derivative(t):
        return invariant_rhs(Lf(t), value(t))

    return InvariantTrajectory(I0.shape[0], value, derivative, grid,
                               label="integrated", params={"I0": I0})


def _check_family_condition(cos_amp, sin_amp, skew):
    gap = 4.0 * (cos_amp ** 2 + sin_amp ** 2) - skew ** 2
    scale = max(1.0, 4.0 * (cos_amp ** 2 + sin_amp ** 2) + skew ** 2)
    if abs(gap) <= 1e-12 * scale:
        raise DegenerateFamily(
            "eigenbasis requires 4*(cos_amp**2 + sin_amp**2) != skew**2")


def dephasing_family(cos_amp, sin_amp, trace=0.0, skew=0.0, omega=1.0,
                     steps=1000):
    """Invariant family of the dephasing generator on the coherence plane.

    The 2x2 trajectory
    ``[[a(t), b(t)], [b(t) + skew, trace - a(t)]]`` with
    ``a = cos_amp*cos(2wt) + sin_amp*sin(2wt) + trace/2`` and
    ``b = cos_amp*sin(2wt) - sin_amp*cos(2wt) - skew/2``
    commutes correctly with the dephasing generator for every decoherence
    rate, which is the robustness mechanism: its eigenvectors never see the
    rate.  Eigenvalues are ``trace/2 +- sqrt(4*(cos_amp**2 + sin_amp**2)
    - skew**2)/2``, constant in time.

    Raises
    ------
    DegenerateFamily
        If ``4*(cos_amp**2 + sin_amp**2) == skew**2`` (no eigenbasis).
    """
    _check_family_condition(cos_amp, sin_amp, skew)
    w = float(omega)

    def value(t):
        c, s = np.cos(2 * w * t), np.sin(2 * w * t)
        a = cos_amp * c + sin_amp * s + trace / 2.0
        b = cos_amp * s - sin_amp * c - skew / 2.0
        return np.array([[a, b], [b + skew, trace - a]], dtype=complex)

    def derivative(t):
        c, s = np.cos(2 * w * t), np.sin(2 * w * t)
        da = 2 * w * (-cos_amp * s + sin_amp * c)
        db = 2 * w * (cos_amp * c + sin_amp * s)
        return np.array([[da, db], [db, -da]], dtype=complex)

    grid = TimeGrid(0.0, period(w), steps)
    return InvariantTrajectory(
        2, value, derivative, grid, label="dephasing",
        params=dict(cos_amp=cos_amp, sin_amp=sin_amp, trace=trace,
                    skew=skew, omega=w))


def spontaneous_emission_family(cos_amp, sin_amp, trace=0.0, skew=0.0,
                                outer_diag=1.0, outer_coupling=0.0,
                                omega=1.0, steps=1000):
    """4x4 invariant of the spontaneous-emission generator.

    Embeds the dephasing family as the inner (sigma_x, sigma_y) block and
    fills the outer (I, sigma_z) block with the constant lower-triangular
    matrix ``[[outer_diag, 0], [outer_coupling, outer_diag +
    outer_coupling]]``.  The zero upper-right entry and the diagonal
    constraint are exactly what removes the emission rate from the
    commutator with the generator, so the phases produced by this invariant
    are rate-independent and coincide with the dephasing ones.
    """
    inner = dephasing_family(cos_amp, sin_amp, trace, skew, omega, steps)

    q = float(outer_diag)
    x = float(outer_coupling)
    y = q + x

    def value(t):
        M = np.zeros((4, 4), dtype=complex)
        M[1:3, 1:3] = inner.value(t)
        M[0, 0] = q
        M[3, 0] = x
        M[3, 3] = y
        return M

    def derivative(t):
        M = np.zeros((4, 4), dtype=complex)
        M[1:3, 1:3] = inner.derivative(t)
        return M

    return InvariantTrajectory(
        4, value, derivative, inner.grid, label="spontaneous_emission",
        params=dict(cos_amp=cos_amp, sin_amp=sin_amp, trace=trace, skew=skew,
                    outer_diag=q, outer_coupling=x, omega=float(omega)))


def bitflip_family(diag_offset, amp_plus, amp_minus, gamma_b, omega=1.0,
                   steps=1000):
    """4x4 invariant of the bit-flip generator (rate-dependent).

    The inner block solves the coupled equations the commutator imposes,
    with exponentials exp(+-2*xi*t) where ``xi = sqrt(gamma_b**4 -
    omega**2)`` is purely imaginary for weak flipping; ``amp_plus`` and
    ``amp_minus`` weight the two exponentials and ``diag_offset`` shifts
    the diagonal, fixing the trace at ``2*diag_offset``.  The outer block
    is zero.  Unlike the other two families this invariant depends on the
    decoherence rate, so no rate-independent phase can come out of it.

    Constant eigenvalues: 0 (twice, outer block) and
    ``diag_offset +- sqrt(amp_plus * amp_minus)``.

    Raises
    ------
    SingularExponent
        If ``gamma_b**4 == omega**2``, where this parameterization of the
        solution degenerates.
    """
    w = float(omega)
    g2 = float(gamma_b) ** 2
    disc = g2 ** 2 - w ** 2
    if abs(disc) <= 1e-12 * max(1.0, g2 ** 2 + w ** 2):
        raise SingularExponent(
            "bit-flip family needs gamma_b**4 != omega**2")
    xi = np.sqrt(complex(disc))
    e1, e2, a1 = complex(amp_plus), complex(amp_minus), complex(diag_offset)

    def inner(t):
        ep = e1 * np.exp(2 * xi * t)
        em = e2 * np.exp(-2 * xi * t)
        a = w * (-ep + em) / (2 * xi) + a1
        eps = ep + em
        sig = g2 * (ep - em) / xi
        return np.array([[a, (eps + sig) / 2],
                         [(eps - sig) / 2, 2 * a1 - a]], dtype=complex)

    def inner_dot(t):
        ep = e1 * np.exp(2 * xi * t)
        em = e2 * np.exp(-2 * xi * t)
        da = -w * (ep + em)
        deps = 2 * xi * (ep - em)
        dsig = 2 * g2 * (ep + em)
        return np.array([[da, (deps + dsig) / 2],
                         [(deps - dsig) / 2, -da]], dtype=complex)

    def value(t):
        M = np.zeros((4, 4), dtype=complex)
        M[1:3, 1:3] = inner(t)
        return M

    def derivative(t):
        M = np.zeros((4, 4), dtype=complex)
        M[1:3, 1:3] = inner_dot(t)
        return M

    grid = TimeGrid(0.0, period(w), steps)
    return InvariantTrajectory(
        4, value, derivative, grid, label="bit_flip",
        params=dict(diag_offset=diag_offset, amp_plus=amp_plus,
                    amp_minus=amp_minus, gamma_b=float(gamma_b), omega=w))


def _match_to_reference(ref, vals):
    """Order ``vals`` to minimize distance to the reference eigenvalues."""
    out = np.empty_like(ref)
    used = set()
    for i, lam in enumerate(ref):
        dist = np.abs(vals - lam).astype(float)
        dist[list(used)] = np.inf
        j = int(np.argmin(dist))
        used.add(j)
        out[i] = vals[j]
    return out


def verify_invariant(traj, L, grid=None):
    """Residual of the defining equation and the eigenvalue drift.

    Returns
    -------
    (float, float)
        ``max_residual``: largest Frobenius norm of dI/dt - [L, I] over the
        grid.  ``max_eigen_drift``: largest distance of any eigenvalue from
        its value at the initial time, after continuity matching.
    """
    Lf = as_generator(L)
    grid = grid or traj.grid
    max_residual = 0.0
    max_drift = 0.0
    ref = None
    for t in grid.times:
        It = traj.value(t)
        res = traj.derivative(t) - invariant_rhs(Lf(t), It)
        max_residual = max(max_residual, float(np.linalg.norm(res)))
        vals = np.linalg.eigvals(It)
        if ref is None:
            ref = np.sort_complex(vals)
        else:
            matched = _match_to_reference(ref, vals)
            max_drift = max(max_drift, float(np.max(np.abs(matched - ref))))
    return max_residual, max_drift
