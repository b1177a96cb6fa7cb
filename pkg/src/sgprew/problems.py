"""Built-in experiment definitions, Dirichlet lifting, and error norms.

Every problem lives on the unit cube.  The curved-domain variant is posed
on a sheared image of the cube and transported back by the coordinate
pullback, which turns the Laplacian into a variable full-matrix diffusion
coefficient and makes the Dirichlet data inhomogeneous; the inhomogeneity
is handled by solving for the homogeneous part against a transfinite
blending lifting of the boundary data.

Problem callbacks are vectorized over point arrays of shape ``(..., d)``
and must be safe for concurrent invocation.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import transform
from .grid import block_points, complement_view, iterate_levels, unpack
from .operator import (
    CoefficientField, CoordinateMap, Lifting, pullback, pullback_rhs,
)

PI = np.pi


@dataclass
class ProblemSpec:
    """A fully specified elliptic model problem."""

    name: str
    d: int
    coeff: CoefficientField
    f: callable
    f_terms: list = None         # optional separable representation of f
    lifting: Lifting = None      # None means homogeneous boundary data
    u_exact: callable = None
    boundary: callable = None    # trace data g (for reference/testing)
    quad_order: int = 2          # operator quadrature needed for full accuracy


# -- lifting by transfinite blending -------------------------------------------

def _detect_faces(g, d, tol=1e-12, samples=200):
    rng = np.random.default_rng(4127)
    faces = []
    for axis in range(d):
        for side in (0.0, 1.0):
            pts = rng.uniform(0.0, 1.0, size=(samples, d))
            pts[:, axis] = side
            if np.max(np.abs(g(pts))) > tol:
                faces.append((axis, side))
    return faces


def make_lifting(g, grad_g, d, faces=None):
    """Interior extension of boundary data by multilinear blending.

    ``g`` and ``grad_g`` evaluate the data (and its gradient) on the closed
    cube; only the face traces enter.  ``faces`` lists the ``(axis, side)``
    pairs carrying nonzero data and is detected by sampling when omitted.
    The blending is the inclusion-exclusion sum over face subsets, which
    reproduces multilinear functions exactly and has trace ``g`` for
    consistent data.
    """
    if faces is None:
        faces = _detect_faces(g, d)
    if not faces:
        return None
    sides_of = {}
    for axis, side in faces:
        sides_of.setdefault(axis, []).append(side)
    axes = sorted(sides_of)

    def _terms():
        for r in range(1, len(axes) + 1):
            sign = 1.0 if r % 2 == 1 else -1.0
            for subset in itertools.combinations(axes, r):
                for sides in itertools.product(
                    *[sides_of[ax] for ax in subset]
                ):
                    yield sign, subset, sides

    def value(x):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for sign, subset, sides in _terms():
            w = np.ones(x.shape[:-1])
            pinned = np.array(x, copy=True)
            for ax, side in zip(subset, sides):
                w = w * (x[..., ax] if side else 1.0 - x[..., ax])
                pinned[..., ax] = side
            total += sign * w * np.asarray(g(pinned), dtype=float)
        return total

    def gradient(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for sign, subset, sides in _terms():
            pinned = np.array(x, copy=True)
            for ax, side in zip(subset, sides):
                pinned[..., ax] = side
            base = np.asarray(g(pinned), dtype=float)
            gg = np.asarray(grad_g(pinned), dtype=float)
            w = np.ones(x.shape[:-1])
            for ax, side in zip(subset, sides):
                w = w * (x[..., ax] if side else 1.0 - x[..., ax])
            for r in range(x.shape[-1]):
                if r in subset:
                    dw = np.ones(x.shape[:-1])
                    for ax, side in zip(subset, sides):
                        if ax == r:
                            dw = dw * (1.0 if side else -1.0)
                        else:
                            dw = dw * (x[..., ax] if side else 1.0 - x[..., ax])
                    out[..., r] += sign * dw * base
                else:
                    out[..., r] += sign * w * gg[..., r]
        return out

    return Lifting(value, gradient)


# -- error norms ---------------------------------------------------------------

def error_norms(coeffs, problem, n):
    """Max and RMS error against the exact solution at the sparse grid points.

    ``coeffs`` is the packed prewavelet solution of the homogeneous part (or
    a block dict); the lifting is added before comparing.  Every distinct
    grid point enters the RMS once, with uniform weight, so a constant error
    ``e`` yields exactly ``|e|`` in both norms.
    """
    if problem.u_exact is None:
        raise ValueError("problem has no exact solution")
    d = problem.d
    blocks = coeffs if isinstance(coeffs, dict) else unpack(coeffs, n, d)
    values = transform.reconstruct_arrays(blocks, n, d)
    e_inf = 0.0
    sq = 0.0
    count = 0
    for t in iterate_levels(n, d):
        pts = block_points(t)
        approx = values[t]
        if problem.lifting is not None:
            approx = approx + problem.lifting.value(pts)
        diff = complement_view(approx - problem.u_exact(pts))
        e_inf = max(e_inf, float(np.max(np.abs(diff))))
        sq += float(np.sum(diff * diff))
        count += diff.size
    return e_inf, float(np.sqrt(sq / count))


# -- built-in problems ----------------------------------------------------------

def _sin_pi(x):
    return np.sin(PI * x)


def _sine_product(x):
    return np.prod(np.sin(PI * np.asarray(x, dtype=float)), axis=-1)


def _weight_1d(x):
    return 1.0 - x * x


def _weighted_sine_1d(x):
    return (1.0 - x * x) * np.sin(PI * x)


def debug_poisson(d=2):
    """Poisson problem with the product-of-sines solution in ``d`` dims."""
    coeff = CoefficientField.constant(d, diag=1.0, kappa=0.0)
    scale = d * PI * PI

    def f(x):
        return scale * _sine_product(x)

    return ProblemSpec(
        name=f"debug{d}d",
        d=d,
        coeff=coeff,
        f=f,
        f_terms=[(scale, (_sin_pi,) * d)],
        u_exact=_sine_product,
    )


def poisson3d_cube():
    """Poisson on the unit cube, exact solution sin(pi x)sin(pi y)sin(pi z)."""
    coeff = CoefficientField.constant(3, diag=1.0, kappa=0.0)
    scale = 3 * PI * PI

    def f(x):
        return scale * _sine_product(x)

    return ProblemSpec(
        name="poisson3d_cube",
        d=3,
        coeff=coeff,
        f=f,
        f_terms=[(scale, (_sin_pi,) * 3)],
        u_exact=_sine_product,
    )


def _shear_map():
    def forward(x):
        x = np.asarray(x, dtype=float)
        out = np.array(x, copy=True)
        out[..., 0] = x[..., 0] + np.sin(PI * x[..., 1]) - 0.5
        return out

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        jac = np.zeros(x.shape[:-1] + (3, 3))
        jac[..., 0, 0] = 1.0
        jac[..., 1, 1] = 1.0
        jac[..., 2, 2] = 1.0
        jac[..., 0, 1] = PI * np.cos(PI * x[..., 1])
        return jac

    return CoordinateMap(forward, jacobian)


def _curved_exact(x):
    x = np.asarray(x, dtype=float)
    xt = x[..., 0] + np.sin(PI * x[..., 1]) - 0.5
    return np.sin(PI * xt) * np.sin(PI * x[..., 1]) * np.sin(PI * x[..., 2])


def _curved_exact_grad(x):
    x = np.asarray(x, dtype=float)
    xt = x[..., 0] + np.sin(PI * x[..., 1]) - 0.5
    sy = np.sin(PI * x[..., 1])
    cy = np.cos(PI * x[..., 1])
    sz = np.sin(PI * x[..., 2])
    cz = np.cos(PI * x[..., 2])
    sxt = np.sin(PI * xt)
    cxt = np.cos(PI * xt)
    out = np.zeros(x.shape)
    out[..., 0] = PI * cxt * sy * sz
    out[..., 1] = PI * cxt * PI * cy * sy * sz + sxt * PI * cy * sz
    out[..., 2] = sxt * sy * PI * cz
    return out


def poisson3d_curved():
    """Poisson on a sheared cube image, pulled back to the unit cube.

    The physical domain shifts the first coordinate by ``sin(pi y) - 1/2``;
    on the reference cube this becomes a variable full-matrix diffusion
    coefficient with inhomogeneous Dirichlet data on the two x-faces.
    """
    cmap = _shear_map()
    coeff = pullback(cmap, 3)
    scale = 3 * PI * PI

    def f_physical(xt):
        return scale * np.prod(np.sin(PI * xt), axis=-1)

    f = pullback_rhs(cmap, f_physical)
    lifting = make_lifting(
        _curved_exact, _curved_exact_grad, 3,
        faces=[(0, 0.0), (0, 1.0)],
    )
    return ProblemSpec(
        name="poisson3d_curved",
        d=3,
        coeff=coeff,
        f=f,
        lifting=lifting,
        u_exact=_curved_exact,
        boundary=_curved_exact,
        quad_order=3,     # trigonometric coefficients need the extra point
    )


def helmholtz6d(variable=True):
    """6-D Helmholtz problem with constant or separable variable reaction."""
    d = 6
    if variable:
        kappa_terms = [(1.0, (_weight_1d,) * d)]
        f_terms = [(6 * PI * PI, (_sin_pi,) * d),
                   (1.0, (_weighted_sine_1d,) * d)]

        def f(x):
            x = np.asarray(x, dtype=float)
            return (6 * PI * PI) * _sine_product(x) + \
                np.prod((1.0 - x * x) * np.sin(PI * x), axis=-1)

        name = "helmholtz6d_var"
    else:
        kappa_terms = [(1.0, (None,) * d)]
        f_terms = [(6 * PI * PI + 1.0, (_sin_pi,) * d)]

        def f(x):
            return (6 * PI * PI + 1.0) * _sine_product(x)

        name = "helmholtz6d_const"
    coeff = CoefficientField.separable(
        d,
        diag_terms=[(1.0, (None,) * d)] * d,
        kappa_terms=kappa_terms,
    )
    return ProblemSpec(
        name=name,
        d=d,
        coeff=coeff,
        f=f,
        f_terms=f_terms,
        u_exact=_sine_product,
    )


_BUILTINS = {
    "debug2d": lambda: debug_poisson(2),
    "poisson3d_cube": poisson3d_cube,
    "poisson3d_curved": poisson3d_curved,
    "helmholtz6d_const": lambda: helmholtz6d(variable=False),
    "helmholtz6d_var": lambda: helmholtz6d(variable=True),
}


def builtin_names():
    return sorted(_BUILTINS)


def builtin(name, dim=None):
    """Look up a built-in problem; ``dim`` switches the debug family."""
    if name == "debug2d" and dim is not None and dim != 2:
        return debug_poisson(dim)
    factory = _BUILTINS.get(name)
    if factory is None:
        raise KeyError(
            f"unknown problem {name!r}; known: {', '.join(builtin_names())}"
        )
    spec = factory()
    if dim is not None and spec.d != dim:
        raise ValueError(f"problem {name} is {spec.d}-dimensional")
    return spec
