"""Biorthogonal spectral decomposition of non-Hermitian super-operators.

A diagonalizable matrix M is split into eigenvalue blocks; each block carries
right vectors (columns) and left covectors (rows) normalized so that the left
matrix is exactly the inverse of the right matrix.  The pairing used
throughout is the bilinear one, ``left @ right``, with no conjugation, which
is the natural dual pairing for non-Hermitian spectra.

:func:`align_continuity` rephases and reorders a decomposition so that it
continues a previous one smoothly; chaining it along a time trajectory gives
eigenvector paths whose finite differences converge to a derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AmbiguousMatching, NonDiagonalizable

__all__ = ["SpectralBasis", "decompose", "check_biorthonormality",
           "align_continuity"]

#: Condition number of the right eigenvector matrix beyond which the input
#: is treated as having a nontrivial Jordan structure.
_COND_LIMIT = 1e12


@dataclass
class SpectralBasis:
    """Eigenvalue blocks with biorthonormal right/left bases.

    Attributes
    ----------
    eigenvalues : (dim,) complex array
        One entry per basis member, repeated inside degenerate blocks.
    rights : (dim, dim) complex array
        Column ``j`` is the right vector of member ``j``.
    lefts : (dim, dim) complex array
        Row ``j`` is the left covector of member ``j``; equals the matrix
        inverse of ``rights``, so ``lefts @ rights == I`` by construction.
    blocks : list of lists of int
        Member indices grouped by shared eigenvalue.
    """

    eigenvalues: np.ndarray
    rights: np.ndarray
    lefts: np.ndarray
    blocks: list = field(default_factory=list)

    @property
    def dim(self):
        return self.rights.shape[0]

    def block_eigenvalue(self, b):
        return complex(self.eigenvalues[self.blocks[b][0]])

    def degeneracy(self, b):
        return len(self.blocks[b])

    def reconstruct(self):
        """Sum of eigenvalue * |right><left| over all members."""
        return (self.rights * self.eigenvalues) @ self.lefts


def _cluster(eigenvalues, tol_abs):
    """Group indices whose eigenvalues lie within tol_abs of each other."""
    n = len(eigenvalues)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(eigenvalues[i] - eigenvalues[j]) <= tol_abs:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: min(g))


def decompose(M, tol_deg=1e-8):
    """Spectral decomposition with enforced biorthonormality.

    Eigenvalues closer than ``tol_deg * max(1, ||M||)`` are clustered into
    one degenerate block.  Right vectors are normalized to unit length with
    their largest-modulus component rotated to the positive real axis, which
    makes the output deterministic; left covectors come from inverting the
    right matrix, so the biorthonormality ``lefts @ rights = I`` holds to
    machine precision even inside degenerate blocks.

    Raises
    ------
    NonDiagonalizable
        If the right eigenvector matrix has condition number above 1e12.
    """
    M = np.asarray(M, dtype=complex)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    vals, R = scipy.linalg.eig(M)

    order = np.lexsort((vals.imag, vals.real))
    vals, R = vals[order], R[:, order]
    for j in range(R.shape[1]):
        v = R[:, j] / np.linalg.norm(R[:, j])
        k = int(np.argmax(np.abs(v)))
        R[:, j] = v * (abs(v[k]) / v[k])

    try:
        lefts = np.linalg.inv(R)
    except np.linalg.LinAlgError:
        raise NonDiagonalizable(
            "right eigenvector matrix is singular") from None
    # 1-norm condition estimate; the inverse is needed anyway
    cond = float(np.linalg.norm(R, 1) * np.linalg.norm(lefts, 1))
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NonDiagonalizable(
            f"right eigenvector matrix has condition number {cond:.2e}")

    scale = max(1.0, float(np.linalg.norm(M)))
    blocks = _cluster(vals, tol_deg * scale)
    return SpectralBasis(vals, R, lefts, blocks)


def check_biorthonormality(basis):
    """Largest deviation of <<left_i | right_j>> from delta_ij."""
    gram = basis.lefts @ basis.rights
    return float(np.max(np.abs(gram - np.eye(basis.dim))))


def _match_members(vals_ref, vals, tol_abs, blocks_of):
    """Assign each reference member the nearest current eigenvalue.

    Raises AmbiguousMatching when the best and second-best candidates from
    *different* blocks are closer than ``tol_abs`` apart, which is the
    signature of a level crossing between the two time samples.
    """
    used = set()
    perm = []
    for lam in vals_ref:
        dist = np.abs(vals - lam).astype(float)
        dist[list(used)] = np.inf
        j = int(np.argmin(dist))
        others = [k for k in range(len(vals))
                  if k != j and blocks_of[k] != blocks_of[j] and k not in used]
        if others:
            runner = min(np.abs(vals[others] - lam))
            if runner - dist[j] <= tol_abs:
                raise AmbiguousMatching(
                    f"eigenvalue {lam:.6g} matches two blocks within "
                    f"{tol_abs:.1e}; refine the grid near this instant")
        used.add(j)
        perm.append(j)
    return perm


def align_continuity(prev, cur, tol_deg=1e-8):
    """Reorder and rephase ``cur`` so it continues ``prev`` smoothly.

    Blocks of ``cur`` are permuted to match ``prev`` by eigenvalue
    proximity.  Each right vector is then rescaled by the unit-modulus
    phase that maximizes its overlap with the predecessor and by the ratio
    of norms, so the aligned path is norm-preserving; left covectors are
    rebuilt by inversion, which keeps biorthonormality exact.

    Raises
    ------
    AmbiguousMatching
        If the eigenvalue pairing is not unique at tolerance ``tol_deg``
        (level crossing), or if a matched vector is numerically orthogonal
        to its predecessor (grid too coarse).
    """
    if prev.dim != cur.dim:
        raise ValueError("bases act on different dimensions")
    scale = max(1.0, float(np.max(np.abs(prev.eigenvalues))))
    blocks_of = np.empty(cur.dim, dtype=int)
    for b, members in enumerate(cur.blocks):
        blocks_of[members] = b
    perm = _match_members(prev.eigenvalues, cur.eigenvalues,
                          tol_deg * scale, blocks_of)

    vals = cur.eigenvalues[perm]
    R = cur.rights[:, perm].copy()

    # Inside a degenerate block the member-to-member assignment is fixed by
    # maximal overlap with the predecessors before the per-member rescale.
    for members in prev.blocks:
        if len(members) < 2:
            continue
        overlap = np.abs(R[:, members].conj().T @ prev.rights[:, members])
        choice = _greedy_assignment(overlap)
        R[:, members] = R[:, [members[j] for j in choice]]

    for j in range(cur.dim):
        u = R[:, j]
        ov = np.vdot(u, prev.rights[:, j])
        if abs(ov) < 1e-12 * np.linalg.norm(u) * np.linalg.norm(prev.rights[:, j]):
            raise AmbiguousMatching(
                f"vector {j} is orthogonal to its predecessor; "
                "the trajectory step is too coarse")
        R[:, j] = u * (np.linalg.norm(prev.rights[:, j]) / np.linalg.norm(u)
                       ) * (ov / abs(ov))

    return SpectralBasis(vals, R, np.linalg.inv(R),
                         [list(m) for m in prev.blocks])


def _greedy_assignment(score):
    """Row choice per column maximizing entries of a small score matrix.

    ``score[j, i]`` rates candidate ``j`` against reference slot ``i``;
    returns one candidate index per slot, each used once.
    """
    n = score.shape[0]
    remaining = set(range(n))
    choice = []
    for i in range(n):
        j = max(remaining, key=lambda c: score[c, i])
        remaining.discard(j)
        choice.append(j)
    return choice
