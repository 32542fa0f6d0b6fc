"""Matrix- and vector-valued differential forms on the flat periodic torus.

Fields live on a uniform grid over [0, 1)^n with 2 <= n <= 4.  All calculus
(exterior derivative, codifferential, Hodge star, Poisson solves) is spectral:
derivatives act on the trigonometric interpolant, so the structural identities
d(d(omega)) = 0, <d a, b> = <a, d* b>, and the Hodge projections hold to
rounding instead of to a discretization order.  The Nyquist wavenumber is
dropped from the derivative symbol, which keeps derivatives of real fields
real and the derivative matrix exactly skew-adjoint on the grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Grid",
    "MatrixForm",
    "VectorForm",
    "components",
    "partial_derivative",
    "exterior_derivative",
    "codifferential",
    "hodge_star",
    "wedge",
    "laplacian",
    "solve_poisson",
    "project_closed",
    "harmonic_part",
    "inner",
    "l2_norm",
    "pointwise_norm",
    "sup_norm",
    "value_transpose",
]


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the unit torus [0, 1)^n."""

    n: int
    res: int

    def __post_init__(self):
        if not 2 <= self.n <= 4:
            raise ValueError(f"dimension must be between 2 and 4, got {self.n}")
        if self.res < 8 or self.res % 2:
            raise ValueError(f"resolution must be even and >= 8, got {self.res}")
        if self.res ** self.n > 2 ** 31:
            raise ValueError(f"{self.res}^{self.n} points exceed the address budget")

    @property
    def h(self) -> float:
        return 1.0 / self.res

    @property
    def shape(self) -> tuple:
        return (self.res,) * self.n

    @property
    def cell(self) -> float:
        """Measure of a single grid cell."""
        return float(self.res) ** -self.n

    def coords(self) -> np.ndarray:
        """Coordinates of shape (n, res, ..., res) with values in [0, 1)."""
        axes = [np.arange(self.res) / self.res] * self.n
        return np.stack(np.meshgrid(*axes, indexing="ij"))


@lru_cache(maxsize=None)
def _wavenumbers(res: int) -> np.ndarray:
    # Integer wavenumbers with the Nyquist bin zeroed: the +-res/2 pair is
    # stored once by the FFT, so its derivative cannot stay real and the
    # symbol drops it.
    k = np.fft.fftfreq(res, d=1.0 / res)
    k[res // 2] = 0.0
    k.setflags(write=False)
    return k


@lru_cache(maxsize=None)
def components(n: int, k: int) -> tuple:
    """Increasing multi-indices of length k over axes 0..n-1, lexicographic."""
    return tuple(itertools.combinations(range(n), k))


@lru_cache(maxsize=None)
def _component_index(n: int, k: int) -> dict:
    return {c: i for i, c in enumerate(components(n, k))}


class _Algebra:
    """Pointwise linear algebra shared by both coefficient layouts."""

    __slots__ = ()

    def _like(self, coeffs, k=None):
        return type(self)(self.grid, self.k if k is None else k, coeffs)

    def _check_compatible(self, other):
        if (
            type(other) is not type(self)
            or other.grid != self.grid
            or other.k != self.k
            or other.coeffs.shape != self.coeffs.shape
        ):
            raise ValueError("incompatible forms")

    def __add__(self, other):
        self._check_compatible(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, c):
        return self._like(self.coeffs * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.coeffs)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @property
    def m(self) -> int:
        return self.coeffs.shape[-1]


def _validate(form, value_ndim):
    grid, k = form.grid, form.k
    if not 0 <= k <= grid.n:
        raise ValueError(f"form degree {k} out of range for n={grid.n}")
    arr = np.ascontiguousarray(form.coeffs, dtype=np.float64)
    lead = (len(components(grid.n, k)),) + grid.shape
    if arr.ndim != grid.n + 1 + value_ndim or arr.shape[: grid.n + 1] != lead:
        raise ValueError(
            f"coefficients have shape {arr.shape}, expected {lead} plus value axes"
        )
    if value_ndim == 2 and arr.shape[-2] != arr.shape[-1]:
        raise ValueError("matrix values must be square")
    arr.setflags(write=False)
    object.__setattr__(form, "coeffs", arr)


@dataclass(frozen=True, eq=False)
class MatrixForm(_Algebra):
    """Degree-k form whose coefficients are m x m matrices at every grid point.

    The coefficient array has shape (C(n,k), res, ..., res, m, m) with the
    component axis ordered by increasing multi-index.  The constructor takes
    ownership of the array and freezes it.
    """

    grid: Grid
    k: int
    coeffs: np.ndarray

    _value_ndim = 2

    def __post_init__(self):
        _validate(self, 2)

    @classmethod
    def zeros(cls, grid: Grid, k: int, m: int) -> "MatrixForm":
        shape = (len(components(grid.n, k)),) + grid.shape + (m, m)
        return cls(grid, k, np.zeros(shape))

    @classmethod
    def identity(cls, grid: Grid, m: int) -> "MatrixForm":
        """The identity-matrix 0-form."""
        coeffs = np.zeros((1,) + grid.shape + (m, m))
        coeffs[..., range(m), range(m)] = 1.0
        return cls(grid, 0, coeffs)

    def antisymmetry_defect(self) -> float:
        """Largest pointwise entry of coeffs + coeffs^T."""
        return float(np.abs(self.coeffs + np.swapaxes(self.coeffs, -1, -2)).max())


@dataclass(frozen=True, eq=False)
class VectorForm(_Algebra):
    """Degree-k form whose coefficients are m-vectors at every grid point."""

    grid: Grid
    k: int
    coeffs: np.ndarray

    _value_ndim = 1

    def __post_init__(self):
        _validate(self, 1)

    @classmethod
    def zeros(cls, grid: Grid, k: int, m: int) -> "VectorForm":
        shape = (len(components(grid.n, k)),) + grid.shape + (m,)
        return cls(grid, k, np.zeros(shape))


def _spectral_axis_derivative(arr: np.ndarray, axis: int, res: int) -> np.ndarray:
    shape = [1] * arr.ndim
    shape[axis] = res
    sym = (2j * np.pi * _wavenumbers(res)).reshape(shape)
    return np.fft.ifft(np.fft.fft(arr, axis=axis) * sym, axis=axis).real


def partial_derivative(form, axis: int):
    """Spectral d/dx_axis applied to every coefficient."""
    out = _spectral_axis_derivative(form.coeffs, 1 + axis, form.grid.res)
    return form._like(out)


@lru_cache(maxsize=None)
def _deriv_table(n: int, k: int) -> tuple:
    # Entries (comp_in, axis, comp_out, sign): inserting dx_axis into the
    # sorted multi-index at position p contributes sign (-1)^p.
    out_index = _component_index(n, k + 1)
    table = []
    for ia, comp in enumerate(components(n, k)):
        for axis in range(n):
            if axis in comp:
                continue
            merged = tuple(sorted(comp + (axis,)))
            sign = -1.0 if merged.index(axis) % 2 else 1.0
            table.append((ia, axis, out_index[merged], sign))
    return tuple(table)


def exterior_derivative(form):
    if form.k >= form.grid.n:
        raise ValueError("top-degree form")
    n, res = form.grid.n, form.grid.res
    derivs = [_spectral_axis_derivative(form.coeffs, 1 + ax, res) for ax in range(n)]
    nout = len(components(n, form.k + 1))
    out = np.zeros((nout,) + form.coeffs.shape[1:])
    for ia, axis, io, sign in _deriv_table(n, form.k):
        out[io] += sign * derivs[axis][ia]
    return form._like(out, form.k + 1)


@lru_cache(maxsize=None)
def _star_table(n: int, k: int) -> tuple:
    # *(dx_A) = sign(A, A^c) dx_{A^c}; the sign is the parity of inversions
    # between the block A and its complement.
    out_index = _component_index(n, n - k)
    table = []
    for ia, comp in enumerate(components(n, k)):
        rest = tuple(ax for ax in range(n) if ax not in comp)
        inv = sum(1 for a in comp for b in rest if a > b)
        table.append((ia, out_index[rest], -1.0 if inv % 2 else 1.0))
    return tuple(table)


def hodge_star(form):
    n, k = form.grid.n, form.k
    nout = len(components(n, n - k))
    out = np.empty((nout,) + form.coeffs.shape[1:])
    for ia, io, sign in _star_table(n, k):
        out[io] = sign * form.coeffs[ia]
    return form._like(out, n - k)


def codifferential(form):
    """Codifferential d* = (-1)^(n(k+1)+1) * d *; on 1-forms, minus divergence."""
    if form.k == 0:
        raise ValueError("codifferential of 0-form")
    n, k = form.grid.n, form.k
    sign = -1.0 if (n * (k + 1) + 1) % 2 else 1.0
    return sign * hodge_star(exterior_derivative(hodge_star(form)))


@lru_cache(maxsize=None)
def _wedge_table(n: int, p: int, q: int) -> tuple:
    # Entries (comp_a, comp_b, comp_out, sign); blocks sharing an axis drop.
    out_index = _component_index(n, p + q)
    table = []
    for ia, ca in enumerate(components(n, p)):
        for ib, cb in enumerate(components(n, q)):
            if set(ca) & set(cb):
                continue
            inv = sum(1 for a in ca for b in cb if a > b)
            sign = -1.0 if inv % 2 else 1.0
            table.append((ia, ib, out_index[tuple(sorted(ca + cb))], sign))
    return tuple(table)


def wedge(a: MatrixForm, b):
    """Wedge product with values multiplied in the written order.

    Matrix times matrix when b is matrix-valued, matrix times vector when b
    is vector-valued; the form indices combine with the alternating sign.
    """
    if not isinstance(a, MatrixForm):
        raise ValueError("left wedge factor must be matrix-valued")
    if a.grid != b.grid:
        raise ValueError("wedge factors live on different grids")
    if a.k + b.k > a.grid.n:
        raise ValueError("degree overflow")
    if a.m != b.m:
        raise ValueError("value size mismatch")
    matvec = isinstance(b, VectorForm)
    nout = len(components(a.grid.n, a.k + b.k))
    out = np.zeros((nout,) + b.coeffs.shape[1:])
    for ia, ib, io, sign in _wedge_table(a.grid.n, a.k, b.k):
        left, right = a.coeffs[ia], b.coeffs[ib]
        if matvec:
            prod = (left @ right[..., None])[..., 0]
        else:
            prod = left @ right
        out[io] += sign * prod
    return b._like(out, a.k + b.k)


@lru_cache(maxsize=None)
def _laplace_symbol(n: int, res: int) -> np.ndarray:
    # 4 pi^2 |k|^2 on the FFT grid, zero on the kernel bins (mean + Nyquist).
    k2 = (2.0 * np.pi * _wavenumbers(res)) ** 2
    sym = np.zeros((res,) * n)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = res
        sym = sym + k2.reshape(shape)
    sym.setflags(write=False)
    return sym


@lru_cache(maxsize=None)
def _poisson_inverse(n: int, res: int) -> np.ndarray:
    sym = _laplace_symbol(n, res)
    inv = np.zeros_like(sym)
    np.divide(1.0, sym, out=inv, where=sym > 0)
    inv.setflags(write=False)
    return inv


def _spatial_axes(form) -> tuple:
    return tuple(range(1, form.grid.n + 1))


def _broadcast_symbol(sym: np.ndarray, form) -> np.ndarray:
    return sym.reshape((1,) + sym.shape + (1,) * form._value_ndim)


def laplacian(form):
    """Componentwise sum of second derivatives (negative semidefinite)."""
    sym = _broadcast_symbol(_laplace_symbol(form.grid.n, form.grid.res), form)
    spec = np.fft.fftn(form.coeffs, axes=_spatial_axes(form))
    return form._like(np.fft.ifftn(-sym * spec, axes=_spatial_axes(form)).real)


def solve_poisson(form, zero_mean: bool = False):
    """Solve -laplacian(phi) = form componentwise with mean(phi) = 0.

    Kernel content of the input (componentwise means plus any energy in the
    dropped Nyquist bins) is discarded.  Passing zero_mean asserts that the
    input means vanish, turning silent kernel loss into an error.
    """
    axes = _spatial_axes(form)
    if zero_mean:
        worst = float(np.abs(form.coeffs.mean(axis=axes)).max())
        if worst > 1e-10:
            raise ValueError(f"right-hand side has nonzero mean {worst:.3e}")
    inv = _broadcast_symbol(_poisson_inverse(form.grid.n, form.grid.res), form)
    spec = np.fft.fftn(form.coeffs, axes=axes)
    return form._like(np.fft.ifftn(inv * spec, axes=axes).real)


def project_closed(form):
    """Hodge projection onto closed forms: identity minus d* (-lap)^-1 d."""
    if not 1 <= form.k <= form.grid.n - 1:
        raise ValueError("projection needs 1 <= k <= n-1")
    return form - codifferential(solve_poisson(exterior_derivative(form)))


def harmonic_part(form):
    """Projection onto the kernel of the spectral Laplacian.

    On the torus this is the constant part of each component, plus whatever
    energy sits in the dropped Nyquist bins.
    """
    axes = _spatial_axes(form)
    sym = _broadcast_symbol(_laplace_symbol(form.grid.n, form.grid.res), form)
    spec = np.where(sym == 0, np.fft.fftn(form.coeffs, axes=axes), 0.0)
    return form._like(np.fft.ifftn(spec, axes=axes).real)


def inner(a, b) -> float:
    """L2 inner product: cell measure times the summed Frobenius pairing."""
    a._check_compatible(b)
    return float(np.vdot(a.coeffs, b.coeffs)) * a.grid.cell


def l2_norm(form) -> float:
    return float(np.sqrt(np.sum(form.coeffs ** 2) * form.grid.cell))


def pointwise_norm(form) -> np.ndarray:
    """Pointwise magnitude: l2 over components, Frobenius over values."""
    axes = (0,) + tuple(range(form.grid.n + 1, form.coeffs.ndim))
    return np.sqrt(np.sum(form.coeffs ** 2, axis=axes))


def sup_norm(form) -> float:
    return float(pointwise_norm(form).max())


def value_transpose(form: MatrixForm) -> MatrixForm:
    """Transpose the matrix values pointwise."""
    return form._like(np.swapaxes(form.coeffs, -1, -2))
