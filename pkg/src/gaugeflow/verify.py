"""Residual certificates for the conservation law and the existence bounds.

The conserved current J = star(A du) + (-1)^(n-1) (star B) ^ du is assembled
spectrally; the L2 norm of dJ is the scalar certificate (its grid mean
vanishes identically on the torus, so no flux-box quadrature is involved).
An independent coordinate-space assembly of the same divergence must agree
to rounding, which pins the sign tables end to end.  Refinement studies fit
the measured order of the residual against the mesh width.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import connection, forms, gauge, lorentz, solver
from .forms import MatrixForm, VectorForm
from .maps import MapField

__all__ = [
    "ResidualReport",
    "BoundTable",
    "conservation_current",
    "conservation_residual",
    "sphere_divergence_residual",
    "bound_ratios",
    "convergence_study",
]

TWO_PATH_TOL = 1e-8
FLOOR = 1e-9


@dataclass(frozen=True)
class ResidualReport:
    """Norms of a residual density plus the defect budget that explains it."""

    l2: float
    sup: float
    budget: float = 0.0
    order: float | str | None = None
    components: tuple = ()  # (name, value) budget and diagnostic pairs
    coordinate_gap: float | None = None
    ladder: tuple = ()  # (resolution, l2) pairs when a study ran

    def __post_init__(self):
        for name, value in self.components:
            if value < 0:
                raise ValueError(f"budget component {name} is negative")


@dataclass(frozen=True)
class BoundTable:
    """Measured sizes entering the existence estimate, and their ratio."""

    rotation_distance_sup: float
    negdet_points: int
    da_n1: float
    db_n2: float
    omega_n2: float
    ratio: float  # nan when the connection vanishes (undefined at 0/0)


def _check_pair_against_map(A: MatrixForm, B: MatrixForm, u: MapField):
    if A.k != 0 or B.k != 2:
        raise ValueError("need a 0-form A and a 2-form B")
    if A.grid != u.grid or B.grid != u.grid:
        raise ValueError("pair and map live on different grids")
    if A.m != u.m or B.m != u.m:
        raise ValueError("pair values do not match the map dimension")


def conservation_current(A: MatrixForm, B: MatrixForm, u: MapField) -> VectorForm:
    """The conserved current J, a vector-valued form of degree n-1."""
    _check_pair_against_map(A, B, u)
    du = forms.exterior_derivative(u.as_form())
    weight = solver.current_weight(u.grid.n)
    return (forms.hodge_star(forms.wedge(A, du))
            + weight * forms.wedge(forms.hodge_star(B), du))


def _coordinate_divergence(A: MatrixForm, B: MatrixForm, u: MapField) -> np.ndarray:
    """Independent assembly: componentwise fluxes, then a plain divergence."""
    grid = A.grid
    n, m = grid.n, A.m
    partials = [forms._spectral_axis_derivative(u.values, axis, grid.res)
                for axis in range(n)]
    btil = np.zeros((n, n) + grid.shape + (m, m))
    for idx, (al, be) in enumerate(forms.components(n, 2)):
        btil[al, be] = B.coeffs[idx]
        btil[be, al] = -B.coeffs[idx]
    divergence = np.zeros(grid.shape + (m,))
    for gamma in range(n):
        flux = np.einsum("...ij,...j->...i", A.coeffs[0], partials[gamma])
        flux += solver.COORDINATE_FLUX_SIGN * np.einsum(
            "b...ij,b...j->...i", btil[gamma], np.stack(partials))
        divergence += forms._spectral_axis_derivative(flux, gamma, grid.res)
    return divergence


def conservation_residual(A: MatrixForm, B: MatrixForm, u: MapField,
                          budget_components: tuple = (),
                          interior: float | None = None) -> ResidualReport:
    """Norms of dJ, cross-checked against the coordinate-space divergence.

    budget_components are (name, value) defect pairs the caller accounts for
    (tension of the map, gauge harmonic part, fixed-point tolerance, ...);
    their sum is the budget the residual is judged against.  With `interior`
    set, norms restricted to the central subbox [margin, 1-margin]^n are
    appended for cutoff-supported data.
    """
    grid = u.grid
    current = conservation_current(A, B, u)
    residual = forms.exterior_derivative(current)
    density = residual.coeffs[0]

    divergence = _coordinate_divergence(A, B, u)
    gap = float(np.abs(density - divergence).max())
    # Rounding in the two paths grows with the flux size and the largest
    # spectral symbol; a sign error shows up at the size of dJ itself.
    scale = max(1.0, float(forms.pointwise_norm(current).max()) * np.pi * grid.res)
    if gap > TWO_PATH_TOL * scale:
        raise RuntimeError(
            f"conservation current paths disagree: gap {gap:.3e} "
            f"exceeds {TWO_PATH_TOL:.1e} x {scale:.3e}")

    components = tuple(budget_components)
    if interior is not None:
        if not 0.0 < interior < 0.5:
            raise ValueError("interior margin must lie in (0, 0.5)")
        axes = np.arange(grid.res) / grid.res
        inside = (axes >= interior) & (axes < 1.0 - interior)
        mask = np.ones(grid.shape, dtype=bool)
        for axis in range(grid.n):
            shape = [1] * grid.n
            shape[axis] = grid.res
            mask &= inside.reshape(shape)
        pointwise = np.sqrt(np.sum(density ** 2, axis=-1))
        interior_l2 = float(np.sqrt(np.sum(pointwise[mask] ** 2) * grid.cell))
        interior_sup = float(pointwise[mask].max(initial=0.0))
        components += (("interior_l2", interior_l2), ("interior_sup", interior_sup))

    return ResidualReport(
        l2=forms.l2_norm(residual),
        sup=float(forms.pointwise_norm(residual).max()),
        budget=float(sum(value for _, value in budget_components)),
        components=components,
        coordinate_gap=gap,
    )


def sphere_divergence_residual(u: MapField) -> ResidualReport:
    """Divergence defect of the antisymmetric sphere currents u^i du^j - u^j du^i.

    The matrix holding all m(m-1)/2 currents (and their negates) is exactly
    the sphere connection, so the certificate is its coclosedness defect;
    the Frobenius aggregation counts both orientations of each pair, so the
    norms are rescaled to count every unordered pair once.
    """
    current = connection.omega_sphere(u)
    residual = forms.codifferential(current)
    pair_once = 1.0 / np.sqrt(2.0)
    return ResidualReport(
        l2=pair_once * forms.l2_norm(residual),
        sup=pair_once * float(forms.pointwise_norm(residual).max()),
    )


def bound_ratios(A: MatrixForm, B: MatrixForm, omega: MatrixForm) -> BoundTable:
    """Sizes in the existence estimate; the ratio measures its constant.

    Points with nonpositive determinant make the rotation distance ill
    posed; they are counted separately and excluded from the sup.
    """
    if A.k != 0 or B.k != 2 or omega.k != 1:
        raise ValueError("need a 0-form, a 2-form and a 1-form connection")
    n = float(A.grid.n)
    dist, negdet = gauge.rotation_distance(A.coeffs[0])
    valid = ~negdet
    rotation_sup = float(dist[valid].max()) if valid.any() else float("nan")
    da_n1 = lorentz.lorentz_norm(forms.exterior_derivative(A), n, 1.0)
    db_n2 = solver.gradient_norm(B, 2.0)
    omega_n2 = lorentz.lorentz_norm(omega, n, 2.0)
    numerator = rotation_sup + da_n1 + db_n2
    ratio = numerator / omega_n2 if omega_n2 > 0 else float("nan")
    return BoundTable(rotation_sup, int(negdet.sum()), da_n1, db_n2,
                      omega_n2, ratio)


def convergence_study(evaluate, resolutions, mapper=map) -> ResidualReport:
    """Measured order of a residual across a doubling resolution ladder.

    evaluate(res) must return a ResidualReport computed on the same
    underlying data prolonged to the given resolution.  The slope of
    log2(l2) against log2(h) is the reported order; ladders entirely at
    the rounding floor report "floor" instead of a meaningless fit.
    """
    resolutions = tuple(int(r) for r in resolutions)
    if len(resolutions) < 3:
        raise ValueError("need at least 3 resolutions to report an order")
    for coarse, fine in zip(resolutions, resolutions[1:]):
        if fine != 2 * coarse:
            raise ValueError(
                f"resolution ladder must double: got {coarse} -> {fine}")
    reports = list(mapper(evaluate, resolutions))
    l2s = [report.l2 for report in reports]
    if max(l2s) <= FLOOR:
        order: float | str = "floor"
    else:
        log_h = -np.log2(np.array(resolutions, dtype=float))
        log_r = np.log2(np.maximum(l2s, FLOOR * 1e-3))
        order = float(np.polyfit(log_h, log_r, 1)[0])
    return dataclasses.replace(
        reports[-1], order=order, ladder=tuple(zip(resolutions, l2s)))
