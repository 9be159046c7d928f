"""Finite-difference grid operators for the W x H surface lattice.

Nodes are indexed (i, j) with i along the first array axis (width W) and
j along the second (height H). Flattening is row-major: flat = i * H + j.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

NEUMANN = "neumann"
DIRICHLET0 = "dirichlet0"


@lru_cache(maxsize=64)
def laplacian(W: int, H: int, h: float, bc: str = NEUMANN) -> sp.csr_matrix:
    """5-point Laplacian (1/m^2 units) with the given edge boundary condition.

    Neumann mirrors the missing neighbor (zero flux); dirichlet0 pins the
    ghost neighbor to zero.
    """
    if bc not in (NEUMANN, DIRICHLET0):
        raise ValueError(f"unknown boundary condition {bc!r}")
    N = W * H
    rows, cols, vals = [], [], []
    inv_h2 = 1.0 / (h * h)
    for i in range(W):
        for j in range(H):
            k = i * H + j
            diag = 0.0
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < W and 0 <= jj < H:
                    rows.append(k)
                    cols.append(ii * H + jj)
                    vals.append(inv_h2)
                    diag -= inv_h2
                elif bc == DIRICHLET0:
                    diag -= inv_h2
            rows.append(k)
            cols.append(k)
            vals.append(diag)
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def apply_laplacian(field: np.ndarray, h: float, bc: str = NEUMANN) -> np.ndarray:
    """Dense convenience wrapper: Laplacian of a (W, H) field."""
    W, H = field.shape
    L = laplacian(W, H, h, bc)
    return (L @ field.reshape(-1)).reshape(W, H)


def apply_masked_laplacian(field: np.ndarray, mask: np.ndarray,
                           h: float) -> np.ndarray:
    """Laplacian restricted to a node subset, Neumann at the subset edge.

    Off-mask neighbors are mirrored (zero flux) so the operator never
    couples across the contact-patch boundary.
    """
    out = np.zeros_like(field)
    inv_h2 = 1.0 / (h * h)
    W, H = field.shape
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.zeros_like(field)
        nb_mask = np.zeros_like(mask)
        src_i = slice(max(di, 0), W + min(di, 0))
        dst_i = slice(max(-di, 0), W + min(-di, 0))
        src_j = slice(max(dj, 0), H + min(dj, 0))
        dst_j = slice(max(-dj, 0), H + min(-dj, 0))
        nb[dst_i, dst_j] = field[src_i, src_j]
        nb_mask[dst_i, dst_j] = mask[src_i, src_j]
        valid = mask & nb_mask
        out += np.where(valid, (nb - field) * inv_h2, 0.0)
    return np.where(mask, out, 0.0)
