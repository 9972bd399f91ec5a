"""Common neighbor analysis: per-atom local-structure classification.

For every bonded pair, the signature (ncn, nb, lcb) counts the common
neighbors of the pair, the bonds among them, and the longest continuous
bond chain among them.  An atom with 12 neighbors, all of whose bonds are
(4,2,1), sits in FCC order; 6 x (4,2,1) + 6 x (4,2,2) is HCP (a stacking
fault inside an FCC crystal); everything else is UNK, which covers
surfaces, dislocation cores and atom-vacancy perturbations.

Labels use distances only, so they are invariant under rigid rotation and
translation (on non-periodic data) by construction.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .errors import ParameterError

FCC = 0
HCP = 1
UNK = 2

LABEL_NAMES = {FCC: "FCC", HCP: "HCP", UNK: "UNK"}

_FCC_SIG = (4, 2, 1)
_HCP_SIG = (4, 2, 2)


def neighbor_table(positions: np.ndarray, box, periodic, cutoff: float) -> np.ndarray:
    """Boolean adjacency matrix of atoms within cutoff (min-image on periodic axes)."""
    positions = np.asarray(positions, dtype=float)
    box = np.asarray(box, dtype=float)
    delta = positions[:, None, :] - positions[None, :, :]
    for ax in range(3):
        if periodic[ax]:
            delta[:, :, ax] -= box[ax] * np.rint(delta[:, :, ax] / box[ax])
    r2 = np.einsum("ijk,ijk->ij", delta, delta)
    np.fill_diagonal(r2, np.inf)
    return r2 < cutoff * cutoff


def _longest_chain(nodes: list[int], adj: np.ndarray) -> int:
    """Longest path (in bonds) in the common-neighbor subgraph; brute force,
    fine for the handful of common neighbors a bond ever has."""
    index = {a: i for i, a in enumerate(nodes)}
    edges = [[] for _ in nodes]
    n_edges = 0
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if adj[a, b]:
                edges[i].append(index[b])
                edges[index[b]].append(i)
                n_edges += 1
    if n_edges == 0:
        return 0
    best = 1

    def dfs(v, visited_edges, length):
        nonlocal best
        best = max(best, length)
        for w in edges[v]:
            key = (min(v, w), max(v, w))
            if key not in visited_edges:
                visited_edges.add(key)
                dfs(w, visited_edges, length + 1)
                visited_edges.remove(key)

    for start in range(len(nodes)):
        if edges[start]:
            dfs(start, set(), 0)
    return best


def bond_signature(i: int, j: int, adj: np.ndarray, neighbors: list[np.ndarray]) -> tuple:
    """(ncn, nb, lcb) signature of the bond i-j."""
    common = [a for a in neighbors[i] if adj[j, a]]
    nb = 0
    for x in range(len(common)):
        for y in range(x + 1, len(common)):
            if adj[common[x], common[y]]:
                nb += 1
    return (len(common), nb, _longest_chain(common, adj))


def cna_labels(positions, box, periodic, cutoff: float) -> np.ndarray:
    """Per-atom labels FCC/HCP/UNK via bond signatures within the cutoff."""
    if cutoff <= 0:
        raise ParameterError("cutoff must be > 0")
    adj = neighbor_table(positions, box, periodic, cutoff)
    n = adj.shape[0]
    neighbors = [np.flatnonzero(adj[i]) for i in range(n)]
    labels = np.full(n, UNK, dtype=int)
    sig_cache: dict[tuple[int, int], tuple] = {}
    for i in range(n):
        if len(neighbors[i]) != 12:
            continue
        n_fcc = 0
        n_hcp = 0
        ok = True
        for j in neighbors[i]:
            key = (i, int(j)) if i < j else (int(j), i)
            sig = sig_cache.get(key)
            if sig is None:
                sig = bond_signature(i, int(j), adj, neighbors)
                sig_cache[key] = sig
            if sig == _FCC_SIG:
                n_fcc += 1
            elif sig == _HCP_SIG:
                n_hcp += 1
            else:
                ok = False
                break
        if not ok:
            continue
        if n_fcc == 12:
            labels[i] = FCC
        elif n_fcc == 6 and n_hcp == 6:
            labels[i] = HCP
    return labels


def label_crystal(crystal, cutoff: float | None = None) -> np.ndarray:
    """CNA labels for a Crystal; default cutoff is 0.854 lattice constants."""
    if cutoff is None:
        cutoff = 0.854 * crystal.lattice_constant
    return cna_labels(crystal.positions, crystal.box, crystal.periodic, cutoff)


def defect_counts(labels, grip_mask=None) -> tuple[int, int, int]:
    """(n_fcc, n_hcp, n_unk) over non-grip atoms."""
    labels = np.asarray(labels)
    if grip_mask is None:
        grip_mask = np.zeros(labels.shape, dtype=bool)
    grip_mask = np.asarray(grip_mask, dtype=bool)
    if labels.shape != grip_mask.shape:
        raise ParameterError("labels and grip mask must have the same length")
    counted = labels[~grip_mask]
    if counted.size == 0:
        raise ParameterError("all atoms are gripped; nothing to count")
    return (int(np.sum(counted == FCC)), int(np.sum(counted == HCP)),
            int(np.sum(counted == UNK)))


def defect_concentrations(labels, grip_mask=None) -> tuple[float, float, float]:
    """(c_fcc, c_hcp, c_unk) fractions over non-grip atoms; counts sum exactly
    to the total, so the Fractions behind these floats sum exactly to 1."""
    n_fcc, n_hcp, n_unk = defect_counts(labels, grip_mask)
    total = n_fcc + n_hcp + n_unk
    return (float(Fraction(n_fcc, total)), float(Fraction(n_hcp, total)),
            float(Fraction(n_unk, total)))


def hcp_positions(nx: int, ny: int, nz: int, a: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Ideal HCP block (c/a = sqrt(8/3)) in an orthorhombic cell; returns
    (positions, box) suitable for a fully periodic CNA check."""
    if min(nx, ny, nz) < 2:
        raise ParameterError("nx, ny, nz must all be >= 2")
    c = a * math.sqrt(8.0 / 3.0)
    cell = np.array([a, a * math.sqrt(3.0), c])
    basis = np.array([
        [0.0, 0.0, 0.0],
        [0.5, 0.5, 0.0],
        [0.5, 5.0 / 6.0, 0.5],
        [0.0, 1.0 / 3.0, 0.5],
    ])
    cells = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                                 indexing="ij"), axis=-1).reshape(-1, 3)
    pos = (cells[:, None, :] + basis[None, :, :]).reshape(-1, 3) * cell
    box = cell * np.array([nx, ny, nz])
    return pos, box
