"""Sparse-grid change of basis between point values and prewavelet coefficients.

:func:`decompose` turns point values sampled on every block into prewavelet
coefficients such that the coefficient expansion interpolates the samples at
every sparse grid point; :func:`reconstruct` is its exact inverse.

Both run the same recursion over directions, outermost direction first.  For
one direction the sweep is the classic two-scale pyramid: solve the banded
change-of-basis system on the finest level, keep the prewavelet part, pass
the coarse part down.  On a sparse grid the surplus of a fine level must
also be subtracted from (or added back to) every coarser block in that
direction.  Blocks on the diagonal of the index set have no direct finer
neighbor, so their surplus values are interpolated with the inclusion-
exclusion combination of the already filled neighbors in the lower
directions; the signs are ``(-1)**(|alpha|+1)`` over the nonzero binary
offsets ``alpha``.

The sweep order (levels descending while decomposing, ascending while
reconstructing, recursion after resp. before the per-direction work) is what
makes the two routines exact inverses of each other.
"""

import itertools

import numpy as np

from . import basis1d
from .grid import (
    SparseGridArray, ValueFormat, block_shape, iterate_levels, level_size,
    partial_norm, shifted_level,
)


def _slice_levels(n, d, dbar, t_u, m, fixed):
    """Levels of the current slice with component ``dbar - 1`` equal ``fixed``."""
    ax = dbar - 1
    budget = m - fixed
    out = []
    for low in itertools.product(range(budget + 1), repeat=ax):
        if sum(low) <= budget:
            out.append(low + (fixed,) + t_u)
    out.sort()
    return out


def _diag_levels(dbar, t_u, m, fixed):
    """Slice levels with ``|t|_dbar == m`` and component ``dbar - 1 == fixed``."""
    ax = dbar - 1
    rest = m - fixed
    out = []
    for low in itertools.product(range(rest + 1), repeat=ax):
        if sum(low) == rest:
            out.append(low + (fixed,) + t_u)
    out.sort()
    return out


def _combine_neighbors(W, t, dbar):
    """Inclusion-exclusion interpolation of surplus values onto block ``t``.

    Combines the surplus blocks one step coarser in the directions before
    ``dbar``, prolongating each to the grid of ``t``.  Directions already at
    level zero have no coarser neighbor and are skipped.
    """
    axes = [s for s in range(dbar - 1) if t[s] >= 1]
    total = np.zeros(block_shape(t))
    for r in range(1, len(axes) + 1):
        sign = 1.0 if r % 2 == 1 else -1.0
        for alpha in itertools.combinations(axes, r):
            src = t
            for s in alpha:
                src = shifted_level(src, s, -1)
            arr = W[src]
            for s in alpha:
                arr = basis1d.prolong_axis(arr, s)
            total += sign * arr
    return total


def _decompose_rec(U, m, dbar, t_u):
    ax = dbar - 1
    d = dbar + len(t_u)
    n = m + sum(t_u)
    for tbar in range(m, -1, -1):
        W = {}
        for t in _slice_levels(n, d, dbar, t_u, m, tbar):
            if tbar > 0:
                mixed = basis1d.solve_basis_axis(U[t], tbar, ax)
                U[t] = basis1d.zero_off_complement_axis(mixed, ax)
                W[t] = basis1d.expand_axis(U[t], tbar, ax)
        for tp in range(tbar, 0, -1):
            for t in _slice_levels(n, d, dbar, t_u, m, tp):
                down = shifted_level(t, ax, -1)
                wd = basis1d.subsample_axis(W[t], ax)
                U[down] = U[down] - wd
                W[down] = wd
            if dbar > 1:
                for t in _diag_levels(dbar, t_u, m, tp - 1):
                    wd = _combine_neighbors(W, t, dbar)
                    U[t] = U[t] - wd
                    W[t] = wd
        if dbar > 1 and m - tbar > 0:
            _decompose_rec(U, m - tbar, dbar - 1, (tbar,) + t_u)


def _reconstruct_rec(U, m, dbar, t_u):
    ax = dbar - 1
    d = dbar + len(t_u)
    n = m + sum(t_u)
    for tbar in range(0, m + 1):
        if dbar > 1 and m - tbar > 0:
            _reconstruct_rec(U, m - tbar, dbar - 1, (tbar,) + t_u)
        W = {}
        if tbar > 0:
            for t in _slice_levels(n, d, dbar, t_u, m, tbar):
                w = basis1d.expand_axis(U[t], tbar, ax)
                W[t] = w
                down = shifted_level(t, ax, -1)
                U[t] = w + basis1d.prolong_axis(U[down], ax)
        for tp in range(tbar, 0, -1):
            for t in _slice_levels(n, d, dbar, t_u, m, tp):
                down = shifted_level(t, ax, -1)
                wd = basis1d.subsample_axis(W[t], ax)
                U[down] = U[down] + wd
                W[down] = wd
            if dbar > 1:
                for t in _diag_levels(dbar, t_u, m, tp - 1):
                    wd = _combine_neighbors(W, t, dbar)
                    U[t] = U[t] + wd
                    W[t] = wd


def decompose_arrays(arrays, n, d):
    """Point-value arrays keyed by level -> prewavelet coefficient arrays."""
    U = {t: np.array(arrays[t], dtype=float) for t in iterate_levels(n, d)}
    _decompose_rec(U, n, d, ())
    return U


def reconstruct_arrays(arrays, n, d):
    """Prewavelet coefficient arrays keyed by level -> point-value arrays."""
    U = {t: np.array(arrays[t], dtype=float) for t in iterate_levels(n, d)}
    _reconstruct_rec(U, n, d, ())
    return U


def decompose(sg):
    """Point values on every block -> prewavelet coefficients.

    The result satisfies the interpolation identity: summing
    ``c[t, i] * phi[t, i]`` over all stored coefficients reproduces the input
    values at every sparse grid point.
    """
    if sg.fmt is not ValueFormat.NODAL:
        raise ValueError("decompose expects blocks in nodal format")
    out = decompose_arrays(sg.arrays(), sg.n, sg.d)
    return SparseGridArray.from_arrays(out, sg.n, sg.d, ValueFormat.PREWAVELET)


def reconstruct(sg):
    """Prewavelet coefficients -> point values at every sparse grid point."""
    if sg.fmt is not ValueFormat.PREWAVELET:
        raise ValueError("reconstruct expects blocks in prewavelet format")
    out = reconstruct_arrays(sg.arrays(), sg.n, sg.d)
    return SparseGridArray.from_arrays(out, sg.n, sg.d, ValueFormat.NODAL)


def evaluate_at(sg, x):
    """Evaluate a prewavelet expansion at one point of the closed unit cube."""
    if sg.fmt is not ValueFormat.PREWAVELET:
        raise ValueError("evaluate_at expects prewavelet coefficients")
    x = np.asarray(x, dtype=float)
    if x.shape != (sg.d,):
        raise ValueError(f"point must have shape ({sg.d},)")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("point outside the closed unit cube")
    total = 0.0
    for t, blk in sg.blocks.items():
        arr = blk.values
        for s in range(sg.d - 1, -1, -1):
            vec = basis1d.prewavelet_values_on_axis(t[s], x[s])
            arr = arr @ vec
        total += arr
    return float(total)
