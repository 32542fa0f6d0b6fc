"""Coulomb gauge fixing by energy minimization over pointwise rotations.

Given an antisymmetric connection 1-form Omega, find a rotation field P
minimizing the squared L2 size of the gauged connection

    Omega_P = P^T dP + P^T Omega P.

A minimizer satisfies the criticality condition d*(Omega_P) = 0, making
Omega_P co-closed and hence representable as d*(xi) for an antisymmetric
2-form potential xi (up to the constant part, which a torus cannot absorb
and which is reported separately).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import forms
from .forms import Grid, MatrixForm

__all__ = [
    "GaugeDiagnostics",
    "GaugePair",
    "GaugeConvergenceError",
    "so_exp",
    "rotation_distance",
    "gauge_energy",
    "minimize_gauge",
    "extract_xi",
    "coulomb_gauge",
]

_log = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-10
REPROJECT_TOL = 1e-12


class GaugeConvergenceError(RuntimeError):
    """Descent hit the iteration cap; carries the (energy, residual) trace."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = tuple(trace)


@dataclass(frozen=True)
class GaugeDiagnostics:
    energy: float          # squared L2 size of the gauged connection
    criticality: float     # L2 size of d*(Omega_P)
    iterations: int
    harmonic: float | None = None        # L2 size of the constant part of Omega_P
    representation: float | None = None  # L2 size of d*(xi) - Omega_P


@dataclass(frozen=True)
class GaugePair:
    """Rotation field P, potential xi (once extracted), and run diagnostics."""

    P: MatrixForm
    xi: MatrixForm | None
    diagnostics: GaugeDiagnostics

    def __post_init__(self):
        pointwise = self.P.coeffs[0]
        if _orthogonality_defect(pointwise) > ORTHOGONALITY_TOL:
            raise ValueError("rotation field is not orthogonal")
        if np.linalg.det(pointwise).min() <= 0:
            raise ValueError("rotation field has non-positive determinant")
        if self.xi is not None and self.xi.antisymmetry_defect() > 1e-10:
            raise ValueError("potential is not antisymmetric-valued")


def so_exp(skew: np.ndarray) -> np.ndarray:
    """Pointwise matrix exponential of skew-symmetric matrices.

    Diagonalizes 1j * S, which is Hermitian, so the exponential is exactly
    orthogonal up to rounding for every input.
    """
    w, v = np.linalg.eigh(1j * np.asarray(skew))
    phase = np.exp(-1j * w)
    out = np.einsum("...ij,...j,...kj->...ik", v, phase, v.conj())
    return np.ascontiguousarray(out.real)


def _orthogonality_defect(pointwise: np.ndarray) -> float:
    m = pointwise.shape[-1]
    gram = np.einsum("...ji,...jk->...ik", pointwise, pointwise)
    return float(np.abs(gram - np.eye(m)).max())


def _polar_project(pointwise: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(pointwise)
    return u @ vh


def rotation_distance(pointwise: np.ndarray):
    """Pointwise Frobenius distance to the rotation group via polar projection.

    Returns (distances, negdet); negdet marks points with non-positive
    determinant, where the nearest rotation is ill-defined.
    """
    nearest = _polar_project(pointwise)
    dist = np.sqrt(((pointwise - nearest) ** 2).sum(axis=(-1, -2)))
    return dist, np.linalg.det(pointwise) <= 0


def _gauged_connection(pointwise: np.ndarray, omega: MatrixForm) -> np.ndarray:
    """Coefficients of P^T dP + P^T Omega P for a pointwise rotation array."""
    dp = forms.exterior_derivative(MatrixForm(omega.grid, 0, pointwise[None])).coeffs
    pulled = np.einsum("...ji,a...jk->a...ik", pointwise, dp)
    pulled += np.einsum("...ji,a...jk,...kl->a...il", pointwise, omega.coeffs, pointwise)
    return pulled


def gauge_energy(P: MatrixForm, omega: MatrixForm) -> float:
    """Squared L2 norm of the gauged connection."""
    if P.k != 0 or omega.k != 1:
        raise ValueError("need a rotation 0-form and a connection 1-form")
    if P.grid != omega.grid or P.m != omega.m:
        raise ValueError("rotation and connection are incompatible")
    if _orthogonality_defect(P.coeffs[0]) > ORTHOGONALITY_TOL:
        raise ValueError("rotation field is not orthogonal")
    gauged = _gauged_connection(P.coeffs[0], omega)
    return float((gauged ** 2).sum()) * omega.grid.cell


def minimize_gauge(omega: MatrixForm, tol: float | None = None,
                   max_iter: int = 5000, preconditioned: bool = True) -> GaugePair:
    """Riemannian gradient descent for the Coulomb gauge rotation.

    Updates P <- P exp(tau * eta) along the skew-valued direction eta, with
    Armijo backtracking on tau; eta is the negative pointwise gradient
    2 d*(Omega_P), optionally preconditioned by the inverse Laplacian (the
    gradient has zero mean, so the preconditioner loses nothing).  Stops
    when the criticality residual drops below tol.  The default tol is
    relative to the L2 size of omega, so omega = 0 converges immediately.
    """
    if omega.k != 1:
        raise ValueError("connection must be a 1-form")
    grid = omega.grid
    if tol is None:
        tol = 1e-6 * forms.l2_norm(omega)
    tau = 0.1 / (1.0 + forms.sup_norm(omega))
    pointwise = np.broadcast_to(np.eye(omega.m), grid.shape + (omega.m, omega.m)).copy()
    trace = []
    for iteration in range(max_iter + 1):
        gauged = _gauged_connection(pointwise, omega)
        energy = float((gauged ** 2).sum()) * grid.cell
        crit = forms.codifferential(MatrixForm(grid, 1, gauged))
        residual = forms.l2_norm(crit)
        trace.append((energy, residual))
        if residual <= tol:
            return GaugePair(MatrixForm(grid, 0, pointwise[None]), None,
                             GaugeDiagnostics(energy, residual, iteration))
        if iteration == max_iter:
            raise GaugeConvergenceError(
                f"gauge descent reached {max_iter} iterations with criticality "
                f"{residual:.3e} > tol {tol:.3e}; trace attached", trace)
        raw = crit.coeffs[0]
        grad = raw - np.swapaxes(raw, -1, -2)  # enforce skew (2x the gradient scale)
        if preconditioned:
            eta = -forms.solve_poisson(MatrixForm(grid, 0, grad[None])).coeffs[0]
        else:
            eta = -grad
        slope = float((grad * eta).sum()) * grid.cell
        while True:
            step = so_exp(tau * eta)
            candidate = np.einsum("...ij,...jk->...ik", pointwise, step)
            if _orthogonality_defect(candidate) > REPROJECT_TOL:
                candidate = _polar_project(candidate)
            trial = _gauged_connection(candidate, omega)
            trial_energy = float((trial ** 2).sum()) * grid.cell
            if trial_energy <= energy + 1e-4 * tau * slope:
                break
            tau *= 0.5
            if tau < 1e-30:
                raise GaugeConvergenceError(
                    f"gauge descent stalled at energy {energy:.6e} with criticality "
                    f"{residual:.3e} > tol {tol:.3e}; trace attached", trace)
        pointwise = np.ascontiguousarray(candidate)
        tau *= 1.5
    raise AssertionError("unreachable")


def extract_xi(P: MatrixForm, omega: MatrixForm, iterations: int = 0) -> GaugePair:
    """Complete a gauge pair: represent the gauged connection as d*(xi).

    xi = d (-lap)^{-1} Omega_P, so d*(xi) recovers exactly the co-exact part
    of Omega_P.  The constant part (not representable on the torus) and the
    total representation residual are reported in the diagnostics.
    """
    grid = omega.grid
    gauged = MatrixForm(grid, 1, _gauged_connection(P.coeffs[0], omega))
    energy = float((gauged.coeffs ** 2).sum()) * grid.cell
    criticality = forms.l2_norm(forms.codifferential(gauged))
    harmonic = forms.l2_norm(forms.harmonic_part(gauged))
    xi_raw = forms.exterior_derivative(forms.solve_poisson(gauged))
    defect = xi_raw.antisymmetry_defect()
    _log.debug("potential antisymmetry defect %.3e removed", defect)
    coeffs = 0.5 * (xi_raw.coeffs - np.swapaxes(xi_raw.coeffs, -1, -2))
    xi = MatrixForm(grid, 2, coeffs)
    representation = forms.l2_norm(forms.codifferential(xi) - gauged)
    return GaugePair(P, xi, GaugeDiagnostics(
        energy, criticality, iterations, harmonic, representation))


def coulomb_gauge(omega: MatrixForm, tol: float | None = None,
                  max_iter: int = 5000, preconditioned: bool = True) -> GaugePair:
    """Minimize and extract in one call."""
    partial = minimize_gauge(omega, tol, max_iter, preconditioned)
    return extract_xi(partial.P, omega, partial.diagnostics.iterations)
