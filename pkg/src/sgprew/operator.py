"""The bilinear form a(u, v) = int (grad u)^T A grad v + kappa u v on blocks.

Stencil assembly computes, for one semi-coarsened block, the couplings
``a(v_j, v_i)`` between multilinear nodal basis functions; the neighbors of
a point form a ``3**d`` stencil.  Two representations exist:

* :class:`DenseStencil` stores all ``3**d`` weights per grid point.  It is
  assembled cell by cell with tensor Gauss-Legendre quadrature and works for
  arbitrary coefficient callbacks.
* :class:`SeparableStencil` keeps one 3-point band per direction and term
  and is exact for coefficients whose entries factor per direction (this
  includes all constant coefficients).  Assembly and application cost drop
  from ``O(3**d)`` to ``O(d)`` per term, which is what makes the
  6-dimensional runs cheap.

Cells are anisotropic: every integral is parameterized by the per-direction
mesh widths of the block.  Quadrature with ``q >= 2`` points per direction
is exact for constant coefficients because the integrands are polynomials of
degree at most two in each variable.

Coefficient callbacks receive arrays of shape ``(..., d)`` and must be safe
for concurrent invocation.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import block_shape, level_size, mesh_size
from .basis1d import pattern_table

_gauss_cache = {}


def gauss_rule(q):
    """Gauss-Legendre nodes and weights on the unit interval."""
    if q < 1:
        raise ValueError("quadrature order must be >= 1")
    rule = _gauss_cache.get(q)
    if rule is None:
        x, w = np.polynomial.legendre.leggauss(q)
        rule = ((x + 1.0) / 2.0, w / 2.0)
        _gauss_cache[q] = rule
    return rule


def _as_factor_tuple(factors, d):
    if factors is None:
        factors = (None,) * d
    factors = tuple(factors)
    if len(factors) != d:
        raise ValueError("need one factor per direction")
    return factors


class CoefficientField:
    """Diffusion matrix A(x) and reaction coefficient kappa(x).

    Either *separable*: A diagonal with every entry a product of 1-D factors
    and kappa a sum of such products, or *general*: arbitrary callbacks
    returning the matrix ``(..., d, d)`` and the scalar ``(...)``.  Factors
    given as ``None`` are the constant 1.  Symmetry of A and nonnegativity
    of kappa are spot-checked on random sample points at construction.
    """

    def __init__(self, d, diag_terms=None, kappa_terms=None,
                 a_fn=None, kappa_fn=None, validate=True):
        self.d = d
        self.diag_terms = diag_terms
        self.kappa_terms = kappa_terms
        self.a_fn = a_fn
        self.kappa_fn = kappa_fn
        if (diag_terms is None) == (a_fn is None):
            raise ValueError("give either separable terms or a general callback")
        if validate:
            self._spot_check()

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, d, diag=1.0, kappa=0.0):
        diag = (diag,) * d if np.isscalar(diag) else tuple(diag)
        terms = tuple((float(a), (None,) * d) for a in diag)
        kterms = [] if kappa == 0.0 else [(float(kappa), (None,) * d)]
        return cls(d, diag_terms=terms, kappa_terms=kterms)

    @classmethod
    def separable(cls, d, diag_terms, kappa_terms=()):
        diag = tuple(
            (float(c), _as_factor_tuple(f, d)) for c, f in diag_terms
        )
        if len(diag) != d:
            raise ValueError("need one diagonal term per direction")
        kappa = [(float(c), _as_factor_tuple(f, d)) for c, f in kappa_terms]
        return cls(d, diag_terms=diag, kappa_terms=kappa)

    @classmethod
    def general(cls, d, a_fn, kappa_fn=None):
        return cls(d, a_fn=a_fn, kappa_fn=kappa_fn)

    # -- queries ----------------------------------------------------------

    @property
    def is_separable(self):
        return self.diag_terms is not None

    @property
    def is_constant(self):
        if not self.is_separable:
            return False
        terms = list(self.diag_terms) + list(self.kappa_terms)
        return all(all(f is None for f in fac) for _, fac in terms)

    @property
    def has_kappa(self):
        if self.is_separable:
            return len(self.kappa_terms) > 0
        return self.kappa_fn is not None

    def a_eval(self, x):
        """Matrix A at points ``x`` of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        if not self.is_separable:
            return np.asarray(self.a_fn(x), dtype=float)
        out = np.zeros(x.shape[:-1] + (self.d, self.d))
        for s, (coef, factors) in enumerate(self.diag_terms):
            entry = np.full(x.shape[:-1], coef)
            for r, f in enumerate(factors):
                if f is not None:
                    entry = entry * f(x[..., r])
            out[..., s, s] = entry
        return out

    def kappa_eval(self, x):
        """Reaction coefficient at ``x``; None when kappa is absent."""
        if not self.has_kappa:
            return None
        x = np.asarray(x, dtype=float)
        if not self.is_separable:
            return np.asarray(self.kappa_fn(x), dtype=float)
        out = np.zeros(x.shape[:-1])
        for coef, factors in self.kappa_terms:
            term = np.full(x.shape[:-1], coef)
            for r, f in enumerate(factors):
                if f is not None:
                    term = term * f(x[..., r])
            out += term
        return out

    def _spot_check(self):
        rng = np.random.default_rng(913)
        pts = rng.uniform(0.0, 1.0, size=(32, self.d))
        a = self.a_eval(pts)
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-10):
            raise ValueError("A(x) must be symmetric")
        k = self.kappa_eval(pts)
        if k is not None and np.any(k < -1e-12):
            raise ValueError("kappa(x) must be nonnegative")


# -- 1-D weighted bands -------------------------------------------------------

def band_1d(level, weight, kind, q):
    """3-point band of 1-D couplings on one level.

    Returns an array ``(size, 3)``; column 1 is the diagonal and columns
    0 / 2 couple to the left / right neighbor.  ``kind`` is ``"mass"`` for
    ``int w v_j v_i`` or ``"stiffness"`` for ``int w v_j' v_i'``.
    """
    n = level_size(level)
    h = mesh_size(level)
    g, w = gauss_rule(q)
    cells = np.arange(n + 1)
    xg = (cells[:, None] + g[None, :]) * h
    wf = weight(xg) * w[None, :] if weight is not None \
        else np.broadcast_to(w, xg.shape)
    if kind == "mass":
        bl, br = (1.0 - g), g
        scale = h
    elif kind == "stiffness":
        bl, br = -np.ones_like(g), np.ones_like(g)
        scale = 1.0 / h
    else:
        raise ValueError(f"unknown band kind {kind!r}")
    ll = scale * wf @ (bl * bl)
    lr = scale * wf @ (bl * br)
    rr = scale * wf @ (br * br)
    band = np.zeros((n, 3))
    band[:, 1] = rr[:-1] + ll[1:]          # node i: right corner of cell i-1, left of cell i
    band[:-1, 2] = lr[1:-1]                # couple to i+1 through the shared cell
    band[1:, 0] = lr[1:-1]
    return band


def band_apply_axis(arr, band, axis):
    """Apply a 3-point band along one axis of a block."""
    a = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    shp = (-1,) + (1,) * (a.ndim - 1)
    out = band[:, 1].reshape(shp) * a
    if a.shape[0] > 1:
        out[1:] += band[1:, 0].reshape((-1,) + (1,) * (a.ndim - 1)) * a[:-1]
        out[:-1] += band[:-1, 2].reshape((-1,) + (1,) * (a.ndim - 1)) * a[1:]
    return np.moveaxis(out, 0, axis)


def _band_prew_quadratic(band, level):
    """Vector of gamma^T B gamma over the complement of a level.

    gamma is the 5-point prewavelet expansion; B the 3-point band.  Entry j
    of the result is ``a(phi_j, phi_j)`` for the 1-D form behind ``band``.
    """
    gp = pattern_table(level)
    n = gp.shape[0]
    out = np.zeros(n)
    for k in range(-2, 3):
        for dk in (-1, 0, 1):
            k2 = k + dk
            if not -2 <= k2 <= 2:
                continue
            rows = np.arange(n) + k
            valid = (rows >= 0) & (rows < n)
            contrib = np.zeros(n)
            contrib[valid] = (
                gp[valid, k + 2] * gp[valid, k2 + 2] * band[rows[valid], dk + 1]
            )
            out += contrib
    return out[0::2]


# -- stencil fields -----------------------------------------------------------

class SeparableStencil:
    """Operator stencil stored as per-direction 3-point bands per term."""

    def __init__(self, level, terms):
        self.level = tuple(level)
        self.terms = terms   # list of tuples of (size_r, 3) bands

    def apply(self, u):
        """Functional values ``a(B(u), v_i)`` from nodal coefficients ``u``."""
        out = np.zeros(block_shape(self.level))
        for bands in self.terms:
            part = u
            for r, band in enumerate(bands):
                part = band_apply_axis(part, band, r)
            out += part
        return out

    def materialize(self):
        """Dense ``3**d`` weight table, shape ``block + (3,)*d`` (tests only)."""
        d = len(self.level)
        shape = block_shape(self.level)
        out = np.zeros(shape + (3,) * d)
        for bands in self.terms:
            term = 1.0
            for r, band in enumerate(bands):
                shp = [1] * (2 * d)
                shp[r] = shape[r]
                shp[d + r] = 3
                term = term * band.reshape(shp)
            out += term
        return out

    def prewavelet_diagonal(self):
        """Array over the complement lattice of ``a(phi_i, phi_i)``."""
        d = len(self.level)
        shape = tuple(
            1 if k == 0 else 2 ** k for k in self.level
        )
        out = np.zeros(shape)
        for bands in self.terms:
            term = 1.0
            for r, band in enumerate(bands):
                q = _band_prew_quadratic(band, self.level[r])
                shp = [1] * d
                shp[r] = -1
                term = term * q.reshape(shp)
            out = out + term
        return out


class DenseStencil:
    """Operator stencil stored as dense ``3**d`` weights per grid point."""

    def __init__(self, level, weights):
        self.level = tuple(level)
        self.weights = weights   # shape block + (3,)*d

    def apply(self, u):
        d = len(self.level)
        out = np.zeros(block_shape(self.level))
        for off in itertools.product((-1, 0, 1), repeat=d):
            rows = []
            src = []
            for o in off:
                if o < 0:
                    rows.append(slice(1, None))
                    src.append(slice(None, -1))
                elif o > 0:
                    rows.append(slice(None, -1))
                    src.append(slice(1, None))
                else:
                    rows.append(slice(None))
                    src.append(slice(None))
            widx = tuple(rows) + tuple(o + 1 for o in off)
            out[tuple(rows)] += self.weights[widx] * u[tuple(src)]
        return out

    def materialize(self):
        return self.weights

    def prewavelet_diagonal(self):
        d = len(self.level)
        gpads = []
        for k in self.level:
            gp = pattern_table(k)
            pad = np.zeros((gp.shape[0], 7))    # offsets -3 .. 3
            pad[:, 1:6] = gp
            gpads.append(pad)
        total = np.zeros(block_shape(self.level))
        for u in itertools.product((-1, 0, 1), repeat=d):
            part = self.weights[(Ellipsis,) + tuple(o + 1 for o in u)].copy()
            for r in range(d):
                part = self._contract_sandwich(part, gpads[r], u[r], r)
            total += part
        return total[tuple([slice(0, None, 2)] * d)]

    @staticmethod
    def _contract_sandwich(arr, gpad, u, axis):
        a = np.moveaxis(arr, axis, 0)
        n = a.shape[0]
        out = np.zeros_like(a)
        shp = (-1,) + (1,) * (a.ndim - 1)
        for op in range(-2, 3):
            g = gpad[:, op + 3] * gpad[:, op + u + 3]
            lo, hi = max(0, -op), min(n, n - op)
            if lo >= hi:
                continue
            out[lo:hi] += g[lo:hi].reshape((hi - lo,) + shp[1:]) * a[lo + op:hi + op]
        return np.moveaxis(out, 0, axis)


def _contract_quad(lattice, mats):
    """Contract the quadrature axes of an interleaved cell/quad lattice.

    ``lattice`` has axes ``(c_1, g_1, ..., c_d, g_d)``; ``mats[r]`` has shape
    ``(m_r, q)``.  The result has axes ``(c_1, ..., c_d, m_1, ..., m_d)``.
    """
    out = lattice
    for j, mat in enumerate(mats):
        out = np.tensordot(out, mat, axes=(j + 1, 1))
    return out


def _quad_lattice(t, q):
    """Cell/quad point lattice of a block: coordinates, weights, basis rows."""
    d = len(t)
    coords = []
    shapes = []
    wfull = np.ones(())
    g, w = gauss_rule(q)
    for r, k in enumerate(t):
        n = level_size(k)
        h = mesh_size(k)
        xg = (np.arange(n + 1)[:, None] + g[None, :]) * h
        coords.append(xg)
        shapes.append((n + 1, q))
        shp = [1] * (2 * d)
        shp[2 * r] = n + 1
        shp[2 * r + 1] = q
        wfull = wfull * (np.broadcast_to(w * h, (n + 1, q))).reshape(shp)
    full_shape = tuple(s for pair in shapes for s in pair)
    pts = np.empty(full_shape + (d,))
    for r in range(d):
        shp = [1] * (2 * d)
        shp[2 * r] = shapes[r][0]
        shp[2 * r + 1] = q
        pts[..., r] = np.broadcast_to(coords[r].reshape(shp), full_shape)
    return pts, np.broadcast_to(wfull, full_shape)


def _basis_rows(q):
    """Reference values of the two corner functions at the quad points."""
    g, _ = gauss_rule(q)
    val = np.stack([1.0 - g, g])     # (2, q)
    der = np.stack([-np.ones_like(g), np.ones_like(g)])
    return val, der


def assemble_stencil(t, coeff, q=2, path="auto"):
    """Operator stencil of one block.

    ``path="auto"`` picks the separable fast path whenever the coefficient
    field is separable; ``path="dense"`` forces cell-by-cell quadrature
    (used to cross-check the fast path).
    """
    if path == "auto" and coeff.is_separable:
        return _assemble_separable(t, coeff, q)
    return _assemble_dense_stencil(t, coeff, q)


def _assemble_separable(t, coeff, q, band_cache=None):
    d = len(t)
    terms = []
    for s, (coefv, factors) in enumerate(coeff.diag_terms):
        bands = []
        for r in range(d):
            kind = "stiffness" if r == s else "mass"
            bands.append(_cached_band(band_cache, t[r], factors[r], kind, q,
                                      ("A", s, r)))
        bands[0] = bands[0] * coefv
        terms.append(tuple(bands))
    for j, (coefv, factors) in enumerate(coeff.kappa_terms):
        bands = [
            _cached_band(band_cache, t[r], factors[r], "mass", q, ("k", j, r))
            for r in range(d)
        ]
        bands[0] = bands[0] * coefv
        terms.append(tuple(bands))
    return SeparableStencil(t, terms)


def _cached_band(cache, level, factor, kind, q, key):
    if cache is None:
        return band_1d(level, factor, kind, q)
    full = key + (level, kind)
    band = cache.get(full)
    if band is None:
        band = band_1d(level, factor, kind, q)
        cache[full] = band
    return band


def _assemble_dense_stencil(t, coeff, q):
    d = len(t)
    shape = block_shape(t)
    pts, wfull = _quad_lattice(t, q)
    val, der = _basis_rows(q)
    hs = [mesh_size(k) for k in t]

    # pair matrices (4, q) per direction and derivative pattern
    def pair_rows(du, dv, r):
        fu = der / hs[r] if du else val
        fv = der / hs[r] if dv else val
        return (fu[:, None, :] * fv[None, :, :]).reshape(4, q)

    amat = coeff.a_eval(pts)
    kval = coeff.kappa_eval(pts)

    acc = None
    for ru in range(d):
        for rv in range(d):
            entry = amat[..., ru, rv]
            if not np.any(entry):
                continue
            mats = [pair_rows(r == ru, r == rv, r) for r in range(d)]
            contrib = _contract_quad(entry * wfull, mats)
            acc = contrib if acc is None else acc + contrib
    if kval is not None:
        mats = [pair_rows(False, False, r) for r in range(d)]
        contrib = _contract_quad(kval * wfull, mats)
        acc = contrib if acc is None else acc + contrib
    if acc is None:
        acc = np.zeros(tuple(s + 1 for s in shape) + (4,) * d)

    weights = np.zeros(shape + (3,) * d)
    for cu in itertools.product((0, 1), repeat=d):
        for cv in itertools.product((0, 1), repeat=d):
            # keep cells where both the trial corner cu and the test corner
            # cv land on interior points
            cell_sl, row_sl = [], []
            for r in range(d):
                klo = max(1 - cu[r], 1 - cv[r])
                khi = min(shape[r] - cu[r], shape[r] - cv[r])
                cell_sl.append(slice(klo, khi + 1))
                row_sl.append(slice(klo + cv[r] - 1, khi + cv[r]))
            kidx = tuple(2 * cu[r] + cv[r] for r in range(d))
            oidx = tuple(cu[r] - cv[r] + 1 for r in range(d))
            weights[tuple(row_sl) + oidx] += acc[tuple(cell_sl) + kidx]
    return DenseStencil(t, weights)


def assemble_stencils(n, d, coeff, q=2, path="auto"):
    """Stencils for every level of the sparse grid, with a shared band cache."""
    from .grid import iterate_levels
    cache = {}
    out = {}
    for t in iterate_levels(n, d):
        if path == "auto" and coeff.is_separable:
            out[t] = _assemble_separable(t, coeff, q, band_cache=cache)
        else:
            out[t] = _assemble_dense_stencil(t, coeff, q)
    return out


# -- right-hand side and lifting ----------------------------------------------

def load_band_1d(level, factor, q):
    """1-D load vector ``int f v_i`` on one level."""
    n = level_size(level)
    h = mesh_size(level)
    g, w = gauss_rule(q)
    xg = (np.arange(n + 1)[:, None] + g[None, :]) * h
    fv = factor(xg) if factor is not None else np.ones_like(xg)
    wl = h * (fv * w[None, :]) @ (1.0 - g)
    wr = h * (fv * w[None, :]) @ g
    out = np.zeros(n)
    out += wr[:-1]
    out += wl[1:]
    return out


def assemble_load(t, f, q=3, separable_terms=None):
    """Load vector ``int f v_i`` over one block.

    ``separable_terms`` is an optional list of ``(coef, factors)`` products
    describing ``f``; when given, the load is assembled from 1-D integrals.
    """
    d = len(t)
    shape = block_shape(t)
    if separable_terms is not None:
        out = np.zeros(shape)
        for coef, factors in separable_terms:
            vecs = [load_band_1d(t[r], factors[r], q) for r in range(d)]
            term = np.full((), coef)
            for r, v in enumerate(vecs):
                shp = [1] * d
                shp[r] = -1
                term = term * v.reshape(shp)
            out += term
        return out
    pts, wfull = _quad_lattice(t, q)
    val, _ = _basis_rows(q)
    fv = np.asarray(f(pts), dtype=float)
    acc = _contract_quad(fv * wfull, [val] * d)
    out = np.zeros(shape)
    for c in itertools.product((0, 1), repeat=d):
        cell_sl = tuple(slice(1 - c[r], shape[r] - c[r] + 1) for r in range(d))
        out += acc[cell_sl + c]
    return out


@dataclass
class Lifting:
    """Interior extension of Dirichlet data with an analytic gradient."""

    value: callable     # (..., d) -> (...)
    gradient: callable  # (..., d) -> (..., d)


def lifting_contribution(t, lifting, coeff, q=3):
    """Functional values ``a(u_g, v_i)`` over one block."""
    d = len(t)
    shape = block_shape(t)
    pts, wfull = _quad_lattice(t, q)
    val, der = _basis_rows(q)
    hs = [mesh_size(k) for k in t]
    amat = coeff.a_eval(pts)
    grad = np.asarray(lifting.gradient(pts), dtype=float)
    flux = np.einsum("...rc,...c->...r", amat, grad)
    kval = coeff.kappa_eval(pts)
    acc = None
    for r in range(d):
        mats = [der / hs[rho] if rho == r else val for rho in range(d)]
        contrib = _contract_quad(flux[..., r] * wfull, mats)
        acc = contrib if acc is None else acc + contrib
    if kval is not None:
        ug = np.asarray(lifting.value(pts), dtype=float)
        acc = acc + _contract_quad(kval * ug * wfull, [val] * d)
    out = np.zeros(shape)
    for c in itertools.product((0, 1), repeat=d):
        cell_sl = tuple(slice(1 - c[r], shape[r] - c[r] + 1) for r in range(d))
        out += acc[cell_sl + c]
    return out


# -- curvilinear pullback -----------------------------------------------------

class CoordinateMap:
    """Diffeomorphism of the closed unit cube with a user-supplied Jacobian."""

    def __init__(self, forward, jacobian):
        self.forward = forward
        self._jacobian = jacobian

    def __call__(self, x):
        return np.asarray(self.forward(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x):
        return np.asarray(self._jacobian(np.asarray(x, dtype=float)), dtype=float)


def pullback(cmap, d, kappa=None):
    """Coefficient field of the problem transported to the unit cube.

    For a map with Jacobian J this is ``A = J^-1 J^-T |det J|`` together
    with ``kappa~ = kappa(map(x)) |det J|``.  A singular Jacobian at any
    evaluation point raises.
    """
    def a_fn(x):
        jac = cmap.jacobian(x)
        det = np.linalg.det(jac)
        if np.any(np.abs(det) < 1e-12):
            raise ValueError("singular Jacobian in coordinate map")
        inv = np.linalg.inv(jac)
        return np.abs(det)[..., None, None] * np.einsum(
            "...ij,...kj->...ik", inv, inv
        )

    kappa_fn = None
    if kappa is not None:
        def kappa_fn(x):
            jac = cmap.jacobian(x)
            det = np.abs(np.linalg.det(jac))
            return kappa(cmap(x)) * det

    return CoefficientField.general(d, a_fn, kappa_fn)


def pullback_rhs(cmap, f):
    """Right-hand side transported to the unit cube: ``f(map(x)) |det J|``."""
    def rhs(x):
        jac = cmap.jacobian(x)
        det = np.abs(np.linalg.det(jac))
        return np.asarray(f(cmap(x)), dtype=float) * det
    return rhs
