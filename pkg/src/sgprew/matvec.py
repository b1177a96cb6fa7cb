"""Matrix-free application of the semi-orthogonal stiffness operator.

The operator couples prewavelet pairs only while the componentwise maximum
of their levels stays inside the sparse grid; entries beyond that cutoff are
zero by definition (and vanish anyway for constant diagonal coefficients).
The multiply splits into ``2**d`` passes, one per subset R of directions:
pass R collects the pairs whose source level is strictly finer in every
direction of R and at most as fine elsewhere.  One pass runs

1. prolongation sweeps in the directions outside R, accumulating all
   coarser-or-equal source content on each block,
2. one application of the operator-dependent stencil per block, at the
   componentwise maximum level of the pair, and
3. telescoping restriction sweeps down the directions in R, followed by the
   dual 5-point projection onto the prewavelet test functions.

Blocks never leave the sparse grid, which is exactly what realizes the
cutoff; pass R touches only blocks whose R-components are at least 1, so
passes with many restriction directions cost almost nothing.

Pass results are reduced in canonical subset order (binary counter over
direction bits), which keeps the output bit-deterministic for a fixed
thread count.
"""

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import basis1d
from .grid import (
    block_shape, complement_size, complement_view, iterate_levels, level_max,
    pack, shifted_level, sparse_dof, unpack,
)
from .operator import assemble_stencil, assemble_stencils


@dataclass(frozen=True)
class PassPlan:
    """One of the ``2**d`` direction splits of the multiply."""

    d: int
    restricted: tuple   # 0-based directions with strictly finer sources

    @property
    def prolongated(self):
        return tuple(s for s in range(self.d) if s not in self.restricted)

    @staticmethod
    def all_passes(d):
        """Canonical enumeration: subset bits count up from 0 to 2**d - 1."""
        plans = []
        for mask in range(2 ** d):
            rdirs = tuple(s for s in range(d) if mask >> s & 1)
            plans.append(PassPlan(d, rdirs))
        return plans


def _pass_contribution(U, n, d, stencils, plan):
    """Functional blocks contributed by one pass, keyed by test level."""
    rdirs = plan.restricted
    sub = [t for t in iterate_levels(n, d) if all(t[s] >= 1 for s in rdirs)]
    if not sub:
        return {}
    H = {t: U[t] for t in sub}

    for s in sorted(plan.prolongated, reverse=True):
        for t in sorted(sub, key=lambda lv: (lv[s],) + lv):
            if t[s] == 0:
                continue
            own = basis1d.expand_axis(H[t], t[s], s)
            below = H[shifted_level(t, s, -1)]
            H[t] = own + basis1d.prolong_axis(below, s)

    G = {}
    for t in sub:
        arr = H[t]
        for s in rdirs:
            arr = basis1d.expand_axis(arr, t[s], s)
        G[t] = stencils[t].apply(arr)

    for s in sorted(rdirs, reverse=True):
        nxt = {}
        for t in sorted(iterate_levels(n, d), key=lambda lv: (-lv[s],) + lv):
            src = shifted_level(t, s, 1)
            parts = [g for g in (G.get(src), nxt.get(src)) if g is not None]
            if not parts:
                continue
            nxt[t] = basis1d.restrict_axis(sum(parts), s)
        G = nxt
    return G


def semiortho_matvec(blocks, n, d, stencils, threads=1):
    """Apply the semi-orthogonal operator to prewavelet coefficient blocks.

    ``blocks`` maps each level to its coefficient array (zero off the
    complement); the result holds the functional values on the prewavelet
    test functions in the same storage layout.
    """
    plans = PassPlan.all_passes(d)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda p: _pass_contribution(blocks, n, d, stencils, p), plans
            ))
    else:
        results = [_pass_contribution(blocks, n, d, stencils, p) for p in plans]

    out = {t: np.zeros(block_shape(t)) for t in iterate_levels(n, d)}
    for contrib in results:
        for t, g in contrib.items():
            for s in range(d):
                g = basis1d.dual_axis(g, t[s], s)
            out[t] += g
    return out


def semiortho_diagonal(n, d, stencils):
    """Packed vector of the operator diagonal ``a(phi_ti, phi_ti)``."""
    parts = []
    for t in iterate_levels(n, d):
        parts.append(
            stencils[t].prewavelet_diagonal().reshape(-1, order="F")
        )
    return np.concatenate(parts)


class SemiOrthogonalOperator:
    """Stencils plus matvec behind a flat DOF-vector interface."""

    def __init__(self, n, d, coeff, q=2, path="auto", threads=1):
        self.n = n
        self.d = d
        self.threads = threads
        self.stencils = assemble_stencils(n, d, coeff, q=q, path=path)
        self.matvec_seconds = 0.0
        self.matvec_count = 0

    @property
    def dof(self):
        return sparse_dof(self.n, self.d)

    def apply_blocks(self, blocks):
        t0 = time.perf_counter()
        out = semiortho_matvec(blocks, self.n, self.d, self.stencils,
                               threads=self.threads)
        self.matvec_seconds += time.perf_counter() - t0
        self.matvec_count += 1
        return out

    def apply(self, x):
        blocks = unpack(np.asarray(x, dtype=float), self.n, self.d)
        return pack(self.apply_blocks(blocks), self.n, self.d)

    def diagonal(self):
        return semiortho_diagonal(self.n, self.d, self.stencils)


# -- dense oracles -------------------------------------------------------------

_CAP_DEFAULT = 20000


def _gamma_columns(level):
    """Dense (size, n_xi) matrix of prewavelet hat expansions on one level."""
    tab = basis1d.pattern_table(level)
    size = tab.shape[0]
    nxi = complement_size(level)
    out = np.zeros((size, nxi))
    for col, pos in enumerate(range(0, size, 2)):
        for k in range(-2, 3):
            row = pos + k
            if 0 <= row < size:
                out[row, col] = tab[pos, k + 2]
    return out


def _prolong_matrix(level):
    """Dense nodal embedding from ``level`` into ``level + 1``."""
    nc = 2 ** (level + 1) - 1
    eye = np.eye(nc)
    return np.array([basis1d.prolong_1d(col) for col in eye.T]).T


def _expansion_matrix(level, target, cache):
    """Prewavelets of ``level`` written in the nodal basis of ``target``."""
    key = (level, target)
    mat = cache.get(key)
    if mat is None:
        mat = _gamma_columns(level)
        for lev in range(level, target):
            mat = _prolong_matrix(lev) @ mat
        cache[key] = mat
    return mat


def assemble_dense(n, d, coeff, q=2, enforce_cutoff=True, cap=_CAP_DEFAULT,
                   path="auto"):
    """Dense matrix of the semi-orthogonal bilinear form (test oracle).

    Every entry expands both prewavelets into the nodal basis of the
    componentwise maximum level and applies that level's stencil; with
    ``enforce_cutoff`` entries beyond the sparse grid are forced to zero.
    Intended for small problems only (``cap`` guards the size).
    """
    ndof = sparse_dof(n, d)
    if ndof > cap:
        raise ValueError(f"dense oracle capped at {cap} DOF, need {ndof}")
    levels = iterate_levels(n, d)
    offsets = {}
    pos = 0
    for t in levels:
        offsets[t] = pos
        pos += int(np.prod([complement_size(k) for k in t]))

    expansion_cache = {}
    stencil_cache = {}
    out = np.zeros((ndof, ndof))
    for a_idx, t in enumerate(levels):
        for t2 in levels[a_idx:]:
            mx = level_max(t, t2)
            if enforce_cutoff and sum(mx) > n:
                continue
            stencil = stencil_cache.get(mx)
            if stencil is None:
                stencil = assemble_stencil(mx, coeff, q=q, path=path)
                stencil_cache[mx] = stencil
            etest = [
                _expansion_matrix(t[r], mx[r], expansion_cache)
                for r in range(d)
            ]
            esrc = [
                _expansion_matrix(t2[r], mx[r], expansion_cache)
                for r in range(d)
            ]
            ntest = int(np.prod([complement_size(k) for k in t]))
            nsrc = int(np.prod([complement_size(k) for k in t2]))
            block = np.zeros((ntest, nsrc))
            src_shape = tuple(complement_size(k) for k in t2)
            for col in range(nsrc):
                cidx = np.unravel_index(col, src_shape, order="F")
                arr = 1.0
                for r in range(d):
                    shp = [1] * d
                    shp[r] = -1
                    arr = arr * esrc[r][:, cidx[r]].reshape(shp)
                z = stencil.apply(arr)
                for r in range(d):
                    z = np.tensordot(z, etest[r], axes=(0, 0))
                block[:, col] = z.reshape(-1, order="F")
            i0, j0 = offsets[t], offsets[t2]
            out[i0:i0 + ntest, j0:j0 + nsrc] = block
            if t != t2:
                out[j0:j0 + nsrc, i0:i0 + ntest] = block.T
    return out


def dense_constant_exact(n, d, alphas, kappa, enforce_cutoff=False,
                         cap=_CAP_DEFAULT):
    """Exact dense Galerkin matrix for constant diagonal coefficients.

    Entries are tensor products of closed-form 1-D integrals, so this is an
    oracle independent of quadrature and of the pass structure.  Without the
    cutoff it is the true Galerkin matrix; entries beyond the sparse grid
    then vanish identically (the semi-orthogonality property).
    """
    ndof = sparse_dof(n, d)
    if ndof > cap:
        raise ValueError(f"dense oracle capped at {cap} DOF, need {ndof}")
    if np.isscalar(alphas):
        alphas = (float(alphas),) * d
    dofs1 = []
    for lev in range(n + 1):
        for i in (range(1, 2 ** (lev + 1), 2) if lev else (1,)):
            dofs1.append((lev, i))
    nd1 = len(dofs1)
    mass1 = np.zeros((nd1, nd1))
    stiff1 = np.zeros((nd1, nd1))
    for a, (la, ia) in enumerate(dofs1):
        for b in range(a, nd1):
            lb, ib = dofs1[b]
            mass1[a, b] = mass1[b, a] = float(
                basis1d.exact_1d_integral(la, ia, lb, ib, "mass")
            )
            stiff1[a, b] = stiff1[b, a] = float(
                basis1d.exact_1d_integral(la, ia, lb, ib, "stiffness")
            )
    slices1 = {}
    pos = 0
    for lev in range(n + 1):
        cnt = complement_size(lev)
        slices1[lev] = slice(pos, pos + cnt)
        pos += cnt

    levels = iterate_levels(n, d)
    offsets = {}
    pos = 0
    for t in levels:
        offsets[t] = pos
        pos += int(np.prod([complement_size(k) for k in t]))

    out = np.zeros((ndof, ndof))
    for ai, t in enumerate(levels):
        for t2 in levels[ai:]:
            if enforce_cutoff and sum(level_max(t, t2)) > n:
                continue
            ntest = int(np.prod([complement_size(k) for k in t]))
            nsrc = int(np.prod([complement_size(k) for k in t2]))
            block = np.zeros((ntest, nsrc))
            for s in range(d):
                term = np.ones((1, 1))
                for r in range(d - 1, -1, -1):
                    m1 = stiff1 if r == s else mass1
                    term = np.kron(term, m1[slices1[t[r]], slices1[t2[r]]])
                block += alphas[s] * term
            if kappa:
                term = np.ones((1, 1))
                for r in range(d - 1, -1, -1):
                    term = np.kron(term, mass1[slices1[t[r]], slices1[t2[r]]])
                block += kappa * term
            i0, j0 = offsets[t], offsets[t2]
            out[i0:i0 + ntest, j0:j0 + nsrc] = block
            if t != t2:
                out[j0:j0 + nsrc, i0:i0 + ntest] = block.T
    return out
