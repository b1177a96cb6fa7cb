"""Sparse grid index arithmetic and dense block storage.

Conventions shared by the whole package:

* A *level* is a tuple ``t = (t_1, ..., t_d)`` of non-negative integers;
  direction ``s`` (1-based in formulas) maps to array axis ``s - 1``.
* The 1-D grid of level ``k`` has mesh size ``2**-(k+1)`` and holds the
  interior points ``i * 2**-(k+1)`` for ``i = 1, ..., 2**(k+1) - 1``.
  Boundary points are never stored.
* A 1-based grid index ``i`` lives at 0-based array position ``i - 1``.  The
  hierarchical complement of a level (its single point for ``k = 0``, the odd
  indices for ``k >= 1``) therefore occupies the positions ``0::2``; the
  points inherited from the next coarser grid occupy ``1::2``.
* A block of level ``t`` stores values as a dense d-dimensional array of
  shape ``(2**(t_1+1) - 1, ..., 2**(t_d+1) - 1)``.  Flattening always uses
  Fortran order, so direction 1 varies fastest.
* Degrees of freedom of a whole sparse grid are ordered by lexicographically
  ascending level, then by the complement positions of each block flattened
  in Fortran order.
"""

import enum
import functools
import itertools
from dataclasses import dataclass, field

import numpy as np


class ValueFormat(enum.Enum):
    """What the numbers stored in a block mean."""

    NODAL = "nodal"            # point values / nodal basis coefficients
    PREWAVELET = "prewavelet"  # prewavelet coefficients, zero off the complement
    FUNCTIONAL = "functional"  # values of a functional on basis functions


def level_size(k):
    """Number of interior points of the 1-D grid of level ``k``."""
    if k < 0:
        raise ValueError(f"level must be >= 0, got {k}")
    return 2 ** (k + 1) - 1


def mesh_size(k):
    """Mesh width ``2**-(k+1)`` of the 1-D grid of level ``k``."""
    return 0.5 ** (k + 1)


def level_indices(k):
    """1-based interior indices ``1 .. 2**(k+1)-1`` of level ``k``."""
    return np.arange(1, 2 ** (k + 1))


def complement_indices(k):
    """1-based indices of the hierarchical complement of level ``k``."""
    if k == 0:
        return np.array([1])
    return np.arange(1, 2 ** (k + 1), 2)


def complement_size(k):
    """Size of the hierarchical complement: 1 for level 0, else ``2**k``."""
    return 1 if k == 0 else 2 ** k


def axis_coords(k):
    """Coordinates of the level-``k`` 1-D grid points in (0, 1)."""
    return level_indices(k) * mesh_size(k)


@dataclass(frozen=True)
class Grid1D:
    """One-dimensional dyadic grid of a given level."""

    level: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be >= 0")

    @property
    def size(self):
        return level_size(self.level)

    @property
    def h(self):
        return mesh_size(self.level)

    @property
    def indices(self):
        return level_indices(self.level)

    @property
    def complement(self):
        return complement_indices(self.level)

    def coords(self):
        return axis_coords(self.level)

    def point(self, i):
        if not 1 <= i <= self.size:
            raise IndexError(f"index {i} out of range for level {self.level}")
        return i * self.h


# -- multi-index helpers ----------------------------------------------------

def level_norm(t):
    """|t|, the sum of the level components."""
    return sum(t)


def partial_norm(t, dbar):
    """Sum of the first ``dbar`` components of ``t``."""
    return sum(t[:dbar])


def level_max(t, u):
    """Componentwise maximum of two levels."""
    return tuple(max(a, b) for a, b in zip(t, u))


def level_le(t, u):
    """Componentwise partial order ``t <= u``."""
    return all(a <= b for a, b in zip(t, u))


def upper_part(t, dbar):
    """The components of ``t`` behind direction ``dbar`` (1-based)."""
    return tuple(t[dbar:])


def shifted_level(t, axis, delta):
    """Level ``t`` with component ``axis`` changed by ``delta``."""
    return t[:axis] + (t[axis] + delta,) + t[axis + 1:]


def block_shape(t):
    """Dense array shape of the block of level ``t``."""
    return tuple(level_size(k) for k in t)


def block_size(t):
    """Number of points of the semi-coarsened full grid of level ``t``."""
    n = 1
    for k in t:
        n *= level_size(k)
    return n


def block_axis_coords(t):
    """Per-direction coordinate arrays of the block of level ``t``."""
    return [axis_coords(k) for k in t]


def block_points(t):
    """All grid points of the block as an array of shape ``shape + (d,)``."""
    axes = np.meshgrid(*block_axis_coords(t), indexing="ij")
    return np.stack(axes, axis=-1)


def point_coords(t, i):
    """Coordinates of the point with 1-based index vector ``i`` on level ``t``."""
    if len(i) != len(t):
        raise ValueError("index and level dimension mismatch")
    out = []
    for k, idx in zip(t, i):
        if not 1 <= idx <= level_size(k):
            raise IndexError(f"index {idx} out of range on level {k}")
        out.append(idx * mesh_size(k))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _levels(n, d):
    return tuple(
        t for t in itertools.product(range(n + 1), repeat=d) if sum(t) <= n
    )


def iterate_levels(n, d, predicate=None):
    """All levels ``t`` with ``|t| <= n`` in ascending lexicographic order.

    ``predicate`` optionally filters the sequence.  The order is
    deterministic and identical across runs.
    """
    levels = _levels(n, d)
    if predicate is None:
        return list(levels)
    return [t for t in levels if predicate(t)]


def sparse_dof(n, d):
    """Dimension of the sparse grid space of depth ``n`` in ``d`` dimensions."""
    total = 0
    for t in _levels(n, d):
        m = 1
        for k in t:
            m *= complement_size(k)
        total += m
    return total


# -- blocks and global arrays -----------------------------------------------

@dataclass
class LevelBlock:
    """Dense value array over one semi-coarsened full grid."""

    level: tuple
    values: np.ndarray
    fmt: ValueFormat = ValueFormat.NODAL

    def __post_init__(self):
        self.level = tuple(self.level)
        shape = block_shape(self.level)
        if tuple(self.values.shape) != shape:
            raise ValueError(
                f"block of level {self.level} must have shape {shape}, "
                f"got {self.values.shape}"
            )

    @classmethod
    def zeros(cls, level, fmt=ValueFormat.NODAL):
        return cls(level, np.zeros(block_shape(level)), fmt)

    @property
    def size(self):
        return self.values.size

    def copy(self):
        return LevelBlock(self.level, self.values.copy(), self.fmt)

    def flat(self):
        """Values flattened with direction 1 fastest."""
        return self.values.reshape(-1, order="F")


def complement_view(values):
    """View of a block array restricted to the hierarchical complement."""
    d = values.ndim
    return values[tuple([slice(0, None, 2)] * d)]


class SparseGridArray:
    """One block per level ``t`` with ``|t| <= n`` (the global array)."""

    def __init__(self, n, d, blocks=None, fmt=ValueFormat.NODAL):
        self.n = n
        self.d = d
        if blocks is None:
            blocks = {
                t: LevelBlock.zeros(t, fmt) for t in iterate_levels(n, d)
            }
        self.blocks = blocks
        expected = set(iterate_levels(n, d))
        if set(blocks) != expected:
            raise ValueError("stored levels must be exactly {t : |t| <= n}")

    @classmethod
    def zeros(cls, n, d, fmt=ValueFormat.NODAL):
        return cls(n, d, fmt=fmt)

    @classmethod
    def from_samples(cls, f, n, d):
        """Sample a callable taking ``(..., d)`` arrays on every block."""
        blocks = {}
        for t in iterate_levels(n, d):
            vals = np.asarray(f(block_points(t)), dtype=float)
            blocks[t] = LevelBlock(t, vals.reshape(block_shape(t)))
        return cls(n, d, blocks)

    @classmethod
    def from_arrays(cls, arrays, n, d, fmt):
        blocks = {
            t: LevelBlock(t, arrays[t], fmt) for t in iterate_levels(n, d)
        }
        return cls(n, d, blocks)

    def arrays(self):
        """Plain dict of the value arrays, shared memory."""
        return {t: blk.values for t, blk in self.blocks.items()}

    @property
    def fmt(self):
        fmts = {blk.fmt for blk in self.blocks.values()}
        if len(fmts) != 1:
            raise ValueError("blocks carry mixed value formats")
        return fmts.pop()

    @property
    def dof(self):
        return sparse_dof(self.n, self.d)

    def copy(self):
        return SparseGridArray(
            self.n, self.d, {t: blk.copy() for t, blk in self.blocks.items()}
        )


def pack(blocks, n, d):
    """Stack the complement entries of all blocks into one DOF vector."""
    parts = []
    for t in iterate_levels(n, d):
        arr = blocks[t] if isinstance(blocks[t], np.ndarray) else blocks[t].values
        parts.append(complement_view(arr).reshape(-1, order="F"))
    return np.concatenate(parts)


def unpack(vec, n, d):
    """Inverse of :func:`pack`; off-complement entries are set to zero."""
    blocks = {}
    pos = 0
    for t in iterate_levels(n, d):
        shape = tuple(complement_size(k) for k in t)
        m = int(np.prod(shape))
        arr = np.zeros(block_shape(t))
        complement_view(arr)[...] = vec[pos:pos + m].reshape(shape, order="F")
        blocks[t] = arr
        pos += m
    if pos != len(vec):
        raise ValueError("vector length does not match the sparse grid")
    return blocks


def distinct_points(n, d):
    """Set of all distinct sparse grid points (test utility)."""
    pts = set()
    for t in iterate_levels(n, d):
        coords = block_axis_coords(t)
        for idx in itertools.product(*[range(len(c)) for c in coords]):
            pts.add(tuple(coords[s][idx[s]] for s in range(d)))
    return pts
