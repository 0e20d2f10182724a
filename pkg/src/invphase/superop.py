"""Hilbert-Schmidt representation of a decohering two-level system.

A density operator rho = (c0*I + c1*sigma_x + c2*sigma_y + c3*sigma_z)/2 is
stored as the 4-vector (c0, c1, c2, c3) in the basis (I, sigma_x, sigma_y,
sigma_z); a physical state has c0 = 1 and a real coherence vector inside the
Bloch ball.  The generator of a master equation with free Hamiltonian
H = (omega/2) sigma_z and a single decoherence operator
Gamma = a1*sigma_x + a2*sigma_y + a3*sigma_z becomes a 4x4 matrix acting on
these vectors.

Two independent routes build that matrix: :func:`build_lindblad` writes the
closed-form entries directly, while :func:`build_lindblad_from_action`
assembles it column by column from explicit 2x2 operator algebra.  They must
agree; tests hold them against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotBlockDecoupled

__all__ = [
    "SIGMA_X", "SIGMA_Y", "SIGMA_Z", "IDENTITY2", "PAULI_BASIS",
    "DecoherenceChannel", "dephasing", "spontaneous_emission", "bit_flip",
    "custom_channel", "build_lindblad", "dissipator_action",
    "build_lindblad_from_action", "apply_generator", "extract_internal_block",
    "state_vector", "density_matrix", "coherence_vector", "is_physical",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

#: Basis ordering used for every 4-component Hilbert-Schmidt vector and for
#: the rows/columns of every 4x4 super-operator in this package.
PAULI_BASIS = (IDENTITY2, SIGMA_X, SIGMA_Y, SIGMA_Z)


@dataclass(frozen=True)
class DecoherenceChannel:
    """Free precession frequency plus one decoherence operator.

    Parameters
    ----------
    omega : float
        Angular frequency of the free Hamiltonian (omega/2) sigma_z.
    alpha : tuple of three complex numbers
        Coefficients of Gamma = alpha[0] sigma_x + alpha[1] sigma_y
        + alpha[2] sigma_z, in units of time**(-1/2).
    label : str
        One of ``dephasing``, ``spontaneous_emission``, ``bit_flip`` or
        ``custom``.
    """

    omega: float
    alpha: tuple[complex, complex, complex]
    label: str = "custom"

    def __post_init__(self):
        if len(self.alpha) != 3:
            raise ValueError("alpha must have exactly three components")
        if not all(np.isfinite(a) for a in np.asarray(self.alpha, complex)):
            raise ValueError("channel coefficients must be finite")


def dephasing(rate, omega=1.0):
    """Channel with Gamma = rate * sigma_z, rate >= 0."""
    if rate < 0:
        raise ValueError("dephasing rate must be non-negative")
    return DecoherenceChannel(omega, (0.0, 0.0, complex(rate)), "dephasing")


def spontaneous_emission(rate, omega=1.0):
    """Channel with Gamma = rate * (sigma_x - i sigma_y), rate >= 0."""
    if rate < 0:
        raise ValueError("emission rate must be non-negative")
    return DecoherenceChannel(
        omega, (complex(rate), -1.0j * rate, 0.0), "spontaneous_emission")


def bit_flip(rate, omega=1.0):
    """Channel with Gamma = rate * sigma_x, rate >= 0."""
    if rate < 0:
        raise ValueError("bit-flip rate must be non-negative")
    return DecoherenceChannel(omega, (complex(rate), 0.0, 0.0), "bit_flip")


def custom_channel(alpha, omega=1.0):
    """Channel with arbitrary complex coefficients for Gamma."""
    a = tuple(complex(x) for x in alpha)
    return DecoherenceChannel(omega, a, "custom")


def build_lindblad(channel):
    """Closed-form 4x4 generator of the channel in the Pauli basis.

    Row and column order follows :data:`PAULI_BASIS`.  The first row is
    always zero (trace preservation); the first column vanishes whenever
    all channel coefficients are real.

    Returns
    -------
    numpy.ndarray
        Complex 4x4 matrix ``L`` with d(rho_vec)/dt = L @ rho_vec.
    """
    w = channel.omega
    a1, a2, a3 = (complex(a) for a in channel.alpha)
    d1, d2, d3 = np.conj(a1), np.conj(a2), np.conj(a3)

    s12 = d1 * a2 + a1 * d2          # symmetric cross terms
    s13 = d1 * a3 + a1 * d3
    s23 = d2 * a3 + a2 * d3
    p12 = d1 * a2 - a1 * d2          # antisymmetric (pump) terms
    p13 = d1 * a3 - a1 * d3
    p23 = d2 * a3 - a2 * d3
    n1, n2, n3 = abs(a1) ** 2, abs(a2) ** 2, abs(a3) ** 2

    return np.array([
        [0.0, 0.0, 0.0, 0.0],
        [2j * p23, -2 * (n2 + n3), -w + s12, s13],
        [-2j * p13, w + s12, -2 * (n1 + n3), s23],
        [2j * p12, s13, s23, -2 * (n1 + n2)],
    ], dtype=complex)


def dissipator_action(channel, rho):
    """Right-hand side of the master equation on a 2x2 operator.

    Computes -i[H, rho] - (G'G rho + rho G'G - 2 G rho G')/2 with
    H = (omega/2) sigma_z and G the channel operator, by plain matrix
    algebra.  Serves as the independent oracle for :func:`build_lindblad`.
    """
    rho = np.asarray(rho, dtype=complex)
    H = 0.5 * channel.omega * SIGMA_Z
    G = sum(a * s for a, s in zip(channel.alpha, PAULI_BASIS[1:]))
    GdG = G.conj().T @ G
    out = -1j * (H @ rho - rho @ H)
    out -= 0.5 * (GdG @ rho + rho @ GdG - 2.0 * G @ rho @ G.conj().T)
    return out


def build_lindblad_from_action(channel):
    """Assemble the 4x4 generator column-wise from :func:`dissipator_action`.

    Column k holds the Pauli components of the dissipator applied to the
    k-th basis operator; entry (j, k) is tr(sigma_j ...)/2.
    """
    L = np.zeros((4, 4), dtype=complex)
    for k, basis_op in enumerate(PAULI_BASIS):
        image = dissipator_action(channel, basis_op)
        for j, probe in enumerate(PAULI_BASIS):
            L[j, k] = 0.5 * np.trace(probe @ image)
    return L


def apply_generator(L, rho_vec):
    """Matrix-vector action of a super-operator on an HS vector."""
    L = np.asarray(L, dtype=complex)
    rho_vec = np.asarray(rho_vec, dtype=complex)
    if L.shape != (L.shape[0], L.shape[0]) or L.shape[0] != rho_vec.shape[0]:
        raise DimensionMismatch(
            f"generator {L.shape} does not act on vector of length "
            f"{rho_vec.shape[0]}")
    return L @ rho_vec


def extract_internal_block(L, tol=1e-12):
    """Return the 2x2 sub-generator on the (sigma_x, sigma_y) plane.

    Valid only when the plane is dynamically decoupled from the (I, sigma_z)
    pair, i.e. all eight coupling entries vanish.  For the three preset
    channels those entries are exact algebraic zeros.

    Raises
    ------
    NotBlockDecoupled
        If any coupling entry exceeds ``tol`` in modulus.
    """
    L = np.asarray(L, dtype=complex)
    if L.shape != (4, 4):
        raise DimensionMismatch("internal block extraction needs a 4x4 matrix")
    inner, outer = [1, 2], [0, 3]
    coupling = max(np.max(np.abs(L[np.ix_(inner, outer)])),
                   np.max(np.abs(L[np.ix_(outer, inner)])))
    if coupling > tol:
        raise NotBlockDecoupled(
            f"(sigma_x, sigma_y) plane couples to (I, sigma_z): "
            f"max coupling entry {coupling:.3e} > {tol:.1e}")
    return L[np.ix_(inner, inner)].copy()


def state_vector(v1, v2, v3):
    """HS vector (1, v1, v2, v3) of a state with coherence vector v."""
    return np.array([1.0, v1, v2, v3], dtype=complex)


def density_matrix(rho_vec):
    """2x2 density operator of an HS vector."""
    rho_vec = np.asarray(rho_vec, dtype=complex)
    return 0.5 * sum(c * s for c, s in zip(rho_vec, PAULI_BASIS))


def coherence_vector(rho):
    """HS vector (tr rho, tr sigma_x rho, tr sigma_y rho, tr sigma_z rho)."""
    rho = np.asarray(rho, dtype=complex)
    return np.array([np.trace(s @ rho) for s in PAULI_BASIS])


def is_physical(rho_vec, tol=1e-9):
    """True if the vector describes a valid density operator.

    Requires c0 = 1, real coherences, and Bloch-ball containment
    c1**2 + c2**2 + c3**2 <= 1, all up to ``tol``.
    """
    v = np.asarray(rho_vec, dtype=complex)
    if v.shape != (4,):
        return False
    if abs(v[0] - 1.0) > tol or np.max(np.abs(v[1:].imag)) > tol:
        return False
    return float(np.sum(v[1:].real ** 2)) <= 1.0 + tol
