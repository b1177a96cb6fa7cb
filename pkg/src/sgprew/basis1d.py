"""One-dimensional building blocks: hats, prewavelets, grid transfer.

The prewavelet of level ``t >= 1`` at an odd index ``i`` is the 5-point
combination of nodal hats

    (1/10) v[i-2] - (3/5) v[i-1] + v[i] - (3/5) v[i+1] + (1/10) v[i+2]

truncated at the boundary to ``(9/10, -3/5, 1/10)`` for ``i = 1`` and the
mirror image for ``i = 2**(t+1) - 1``.  On level 0 the prewavelet is the hat
itself.  Prewavelets of different levels are L2-orthogonal.

The change of basis between nodal values on level ``t`` and the pair
(prewavelet coefficients, coarse nodal coefficients) is the pentadiagonal
matrix ``M`` whose odd columns hold the prewavelet combinations and whose
even columns hold the coarse hats ``(1/2, 1, 1/2)``.  Solving ``M x = u``
splits a nodal vector into its level-``t`` prewavelet part (odd entries of
``x``) and its next-coarser nodal part (even entries).

All stencil constants are kept as exact :class:`~fractions.Fraction` values
and converted to floats once; the exact forms also drive the closed-form
integral routines used as test oracles.

Axis variants of every kernel (suffix ``_axis``) apply the 1-D operation
along one axis of a d-dimensional block, treating the remaining axes as a
batch.
"""

from fractions import Fraction

import numpy as np

from .grid import level_size, mesh_size

# Interior prewavelet coefficients over nodal offsets -2 .. 2.
INTERIOR_PATTERN = (
    Fraction(1, 10),
    Fraction(-3, 5),
    Fraction(1, 1),
    Fraction(-3, 5),
    Fraction(1, 10),
)
# Left-boundary coefficients over offsets 0 .. 2 (right boundary mirrors).
BOUNDARY_PATTERN = (Fraction(9, 10), Fraction(-3, 5), Fraction(1, 10))

_matrix_cache = {}
_pattern_cache = {}
_mass_diag_cache = {}


def prewavelet_pattern(level, i, interior=None, boundary=None):
    """Nodal-index -> coefficient map of one prewavelet, as Fractions.

    ``interior`` and ``boundary`` override the stencil constants; the
    override exists for fault-injection in the self test.
    """
    interior = INTERIOR_PATTERN if interior is None else interior
    boundary = BOUNDARY_PATTERN if boundary is None else boundary
    if level == 0:
        if i != 1:
            raise IndexError("level 0 has the single index 1")
        return {1: Fraction(1)}
    size = level_size(level)
    if not (1 <= i <= size and i % 2 == 1):
        raise IndexError(f"index {i} not in the complement of level {level}")
    if i == 1:
        return {1 + k: c for k, c in enumerate(boundary)}
    if i == size:
        return {size - k: c for k, c in enumerate(boundary)}
    return {i + k: c for k, c in zip(range(-2, 3), interior)}


def pattern_table(level):
    """Float array (size, 5) of prewavelet coefficients.

    Row ``i - 1`` holds the coefficients of the prewavelet at 1-based index
    ``i`` over nodal offsets ``-2 .. 2``; rows at even indices (not in the
    complement) are zero.
    """
    tab = _pattern_cache.get(level)
    if tab is None:
        size = level_size(level)
        tab = np.zeros((size, 5))
        for i in range(1, size + 1, 2):
            for j, c in prewavelet_pattern(level, i).items():
                tab[i - 1, j - i + 2] = float(c)
        tab.setflags(write=False)
        _pattern_cache[level] = tab
    return tab


def hat_value(level, i, x):
    """Nodal hat of ``level`` at index ``i`` evaluated at ``x`` (scalar/array)."""
    h = mesh_size(level)
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float) / h - i))


def prewavelet_value(level, i, x):
    """Prewavelet evaluated pointwise, straight from its hat combination."""
    out = 0.0
    for j, c in prewavelet_pattern(level, i).items():
        out = out + float(c) * hat_value(level, j, x)
    return out


def prewavelet_values_on_axis(level, x):
    """Vector over all 1-based indices of phi_{level,i}(x), zero off-complement."""
    size = level_size(level)
    out = np.zeros(size)
    for i in range(1, size + 1, 2):
        out[i - 1] = prewavelet_value(level, i, x)
    return out


class BandedBasisMatrix:
    """Pentadiagonal change-of-basis matrix of one level with cached LU.

    The no-pivot factorization is computed once; diagonal pivots are checked
    at factorization time and a ``RuntimeError`` signals a corrupted matrix.
    """

    def __init__(self, level):
        self.level = level
        self.size = level_size(level)
        self.diags = self._build_diagonals()
        self._factor()

    def _build_diagonals(self):
        n = self.size
        diags = {o: np.zeros(n) for o in range(-2, 3)}

        def put(row, col, val):
            if 1 <= row <= n:
                diags[col - row][row - 1] = float(val)

        for col in range(1, n + 1):
            if col % 2 == 0:
                put(col - 1, col, Fraction(1, 2))
                put(col, col, 1)
                put(col + 1, col, Fraction(1, 2))
            else:
                for j, c in prewavelet_pattern(self.level, col).items():
                    put(j, col, c)
        return diags

    def _factor(self):
        n = self.size
        u0 = self.diags[0].copy()
        u1 = self.diags[1].copy()
        u2 = self.diags[2].copy()
        a1 = self.diags[-1].copy()
        a2 = self.diags[-2].copy()
        l1 = np.zeros(n)
        l2 = np.zeros(n)
        for k in range(n - 1):
            piv = u0[k]
            if abs(piv) < 1e-10:
                raise RuntimeError(
                    f"singular factorization at level {self.level}, row {k}"
                )
            m1 = a1[k + 1] / piv
            l1[k + 1] = m1
            u0[k + 1] -= m1 * u1[k]
            if k + 2 < n:
                u1[k + 1] -= m1 * u2[k]
                m2 = a2[k + 2] / piv
                l2[k + 2] = m2
                a1[k + 2] -= m2 * u1[k]
                u0[k + 2] -= m2 * u2[k]
        if abs(u0[n - 1]) < 1e-10:
            raise RuntimeError(f"singular factorization at level {self.level}")
        self._lu = (l1, l2, u0, u1, u2)

    def dense(self):
        """Dense matrix, for tests and small sizes."""
        n = self.size
        out = np.zeros((n, n))
        for o, diag in self.diags.items():
            for i in range(n):
                j = i + o
                if 0 <= j < n:
                    out[i, j] = diag[i]
        return out

    def matvec(self, x):
        """``M @ x`` for ``x`` of shape (size, ...)."""
        d = self.diags
        out = d[0].reshape(-1, *([1] * (x.ndim - 1))) * x
        shp = [1] * (x.ndim - 1)
        if self.size > 1:
            out[1:] += d[-1][1:].reshape(-1, *shp) * x[:-1]
            out[:-1] += d[1][:-1].reshape(-1, *shp) * x[1:]
        if self.size > 2:
            out[2:] += d[-2][2:].reshape(-1, *shp) * x[:-2]
            out[:-2] += d[2][:-2].reshape(-1, *shp) * x[2:]
        return out

    def rmatvec(self, x):
        """``M.T @ x`` for ``x`` of shape (size, ...)."""
        d = self.diags
        out = d[0].reshape(-1, *([1] * (x.ndim - 1))) * x
        shp = [1] * (x.ndim - 1)
        if self.size > 1:
            out[:-1] += d[-1][1:].reshape(-1, *shp) * x[1:]
            out[1:] += d[1][:-1].reshape(-1, *shp) * x[:-1]
        if self.size > 2:
            out[:-2] += d[-2][2:].reshape(-1, *shp) * x[2:]
            out[2:] += d[2][:-2].reshape(-1, *shp) * x[:-2]
        return out

    def solve(self, b):
        """Solve ``M x = b`` for ``b`` of shape (size, ...)."""
        l1, l2, u0, u1, u2 = self._lu
        n = self.size
        x = np.array(b, dtype=float, copy=True)
        for i in range(1, n):
            x[i] -= l1[i] * x[i - 1]
            if i >= 2:
                x[i] -= l2[i] * x[i - 2]
        x[n - 1] /= u0[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] -= u1[i] * x[i + 1]
            if i + 2 < n:
                x[i] -= u2[i] * x[i + 2]
            x[i] /= u0[i]
        return x


def basis_matrix(level):
    """Cached :class:`BandedBasisMatrix` of the given level."""
    m = _matrix_cache.get(level)
    if m is None:
        m = BandedBasisMatrix(level)
        _matrix_cache[level] = m
    return m


# -- flat 1-D kernels ---------------------------------------------------------

def prolong_1d(coarse):
    """Nodal coefficients of level ``t-1`` -> nodal coefficients of level ``t``.

    Even fine indices copy the coarse value, odd fine indices average their
    neighbors (half of the single neighbor next to the boundary).
    """
    coarse = np.asarray(coarse, dtype=float)
    nc = coarse.shape[0]
    nf = 2 * nc + 1
    out = np.zeros((nf,) + coarse.shape[1:])
    out[1::2] = coarse
    out[0::2][:-1] += 0.5 * coarse
    out[0::2][1:] += 0.5 * coarse
    return out


def restrict_1d(fine):
    """Functional values of level ``t`` -> level ``t-1``; transpose of prolong."""
    fine = np.asarray(fine, dtype=float)
    nf = fine.shape[0]
    if nf < 3 or nf % 2 == 0:
        raise ValueError("fine vector must have length 2**(t+1) - 1, t >= 1")
    even = fine[0::2]
    return fine[1::2] + 0.5 * (even[:-1] + even[1:])


def subsample_1d(fine):
    """Point values of level ``t`` at the points of level ``t-1``."""
    return np.asarray(fine)[1::2]


def prewavelet_transform_1d(values):
    """Split nodal values of one level into prewavelet and coarse parts.

    Returns ``(coeffs, coarse)`` where ``coeffs`` holds the prewavelet
    coefficients on the complement (length ``2**t``) and ``coarse`` the nodal
    coefficients on level ``t-1``.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 3:
        raise ValueError("transform needs level >= 1")
    level = int(np.log2(n + 1)) - 1
    if level_size(level) != n:
        raise ValueError(f"length {n} is not of the form 2**(t+1) - 1")
    x = basis_matrix(level).solve(values)
    return x[0::2], x[1::2]


def prewavelet_dual_stencil_1d(values):
    """Apply the 5-point dual stencil: F(v_i) values -> F(phi_i) values.

    Input is a vector of functional values on the nodal basis of one level;
    the output has one entry per complement index.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 1:
        return values.copy()
    level = int(np.log2(n + 1)) - 1
    if level_size(level) != n:
        raise ValueError(f"length {n} is not of the form 2**(t+1) - 1")
    return basis_matrix(level).rmatvec(values)[0::2]


# -- axis kernels -------------------------------------------------------------

def _along_axis(fn, arr, axis):
    moved = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    out = fn(moved)
    return np.moveaxis(out, 0, axis)


def solve_basis_axis(arr, level, axis):
    """Solve the change-of-basis system along one axis (mixed coefficients)."""
    if level == 0:
        return np.array(arr, dtype=float, copy=True)
    return _along_axis(basis_matrix(level).solve, arr, axis)


def expand_axis(arr, level, axis):
    """Multiply by the basis matrix along one axis.

    For prewavelet-format data (zeros on even positions) this evaluates the
    prewavelet combination in the nodal basis; for mixed coefficients it adds
    the coarse part as well.
    """
    if level == 0:
        return np.array(arr, dtype=float, copy=True)
    return _along_axis(basis_matrix(level).matvec, arr, axis)


def dual_axis(arr, level, axis):
    """Dual 5-point projection along one axis, zero off the complement."""
    out = _along_axis(basis_matrix(level).rmatvec, arr, axis) if level > 0 \
        else np.array(arr, dtype=float, copy=True)
    if level > 0:
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(1, None, 2)
        out[tuple(sl)] = 0.0
    return out


def zero_off_complement_axis(arr, axis):
    """Zero the entries inherited from the coarser grid along one axis."""
    out = np.array(arr, dtype=float, copy=True)
    sl = [slice(None)] * out.ndim
    sl[axis] = slice(1, None, 2)
    out[tuple(sl)] = 0.0
    return out


def subsample_axis(arr, axis):
    """Point values restricted to the next coarser grid along one axis."""
    sl = [slice(None)] * np.ndim(arr)
    sl[axis] = slice(1, None, 2)
    return np.array(np.asarray(arr)[tuple(sl)], dtype=float)


def prolong_axis(arr, axis):
    """Nodal prolongation one level up along one axis."""
    return _along_axis(prolong_1d, arr, axis)


def restrict_axis(arr, axis):
    """Functional restriction one level down along one axis."""
    return _along_axis(restrict_1d, arr, axis)


# -- exact integrals ----------------------------------------------------------

def _refine_once(coeffs):
    """Exact nodal coefficients one level finer (hats embed as 1/2, 1, 1/2)."""
    out = {}
    for i, c in coeffs.items():
        out[2 * i] = out.get(2 * i, Fraction(0)) + c
        half = c / 2
        out[2 * i - 1] = out.get(2 * i - 1, Fraction(0)) + half
        out[2 * i + 1] = out.get(2 * i + 1, Fraction(0)) + half
    return out


def refine_to_level(coeffs, level, target):
    """Exact hat coefficients of the same function on a finer level."""
    if target < level:
        raise ValueError("target level must not be coarser")
    for _ in range(target - level):
        coeffs = _refine_once(coeffs)
    return coeffs


def _pair_form(ca, cb, level, kind):
    """Exact bilinear form of two same-level hat expansions."""
    h = Fraction(1, 2 ** (level + 1))
    if kind == "mass":
        diag, off = 2 * h / 3, h / 6
    elif kind == "stiffness":
        diag, off = 2 / h, -1 / h
    else:
        raise ValueError(f"unknown integral kind {kind!r}")
    total = Fraction(0)
    for i, a in ca.items():
        b = cb.get(i)
        if b is not None:
            total += a * b * diag
        for j in (i - 1, i + 1):
            b = cb.get(j)
            if b is not None:
                total += a * b * off
    return total


def exact_1d_integral(t, i, t2, i2, kind="mass", basis="prewavelet",
                      patterns=None):
    """Closed-form integral of two 1-D basis functions over (0, 1).

    ``kind`` selects mass (``phi * phi``) or stiffness (``phi' * phi'``);
    ``basis`` is ``"prewavelet"`` or ``"hat"``.  ``patterns`` optionally maps
    ``(level, index)`` to a coefficient dict, overriding the prewavelet
    definition (used for fault injection in the self test).  Returns a
    Fraction.
    """
    def expansion(level, idx):
        if basis == "hat":
            return {idx: Fraction(1)}
        if patterns is not None and (level, idx) in patterns:
            return dict(patterns[(level, idx)])
        return prewavelet_pattern(level, idx)

    top = max(t, t2)
    ca = refine_to_level(expansion(t, i), t, top)
    cb = refine_to_level(expansion(t2, i2), t2, top)
    return _pair_form(ca, cb, top, kind)


def prewavelet_mass_diag(level):
    """Float vector of ||phi_{level,i}||_{L2}^2 over the complement indices."""
    vec = _mass_diag_cache.get(level)
    if vec is None:
        idx = range(1, level_size(level) + 1, 2) if level > 0 else (1,)
        vec = np.array([
            float(exact_1d_integral(level, i, level, i, "mass")) for i in idx
        ])
        vec.setflags(write=False)
        _mass_diag_cache[level] = vec
    return vec
