"""Mean-zero periodic scalar fields on T^d (d = 1, 2) and their spectral calculus.

Conventions, fixed once and referenced by every norm formula in the package:

* Grid: ``n`` points per dimension on ``[-pi, pi)^d`` with spacing ``2*pi/n``,
  ``x_j = -pi + 2*pi*j/n``.
* Coefficients: ``c_k = DFT(values) / n^d``, indexed by the integer wavenumber
  lattice in standard FFT ordering, so ``values = sum_k c_k exp(i k . u)``
  where ``u`` is the grid chart.  With this normalization the transform is
  unitary in L^2 up to a factor ``(2*pi)^{d/2}``:

      ||phi||_{L^2}^2 = (2*pi)^d * sum_k |c_k|^2      (discrete Parseval, exact)

* The ``k = 0`` coefficient is identically zero (all fields are mean-free) and
  the Nyquist row/column (``k_i = n/2``) is zeroed on construction: it breaks
  Hermitian-symmetry bookkeeping for odd derivatives and sits above the
  dealiasing cutoff anyway.
* ``|k|`` is always the Euclidean norm of the integer wavevector.

Fields are immutable values (their coefficient arrays are frozen); every
operation in this module is pure and returns a new field.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TorusGrid",
    "SpectralField",
    "NormReport",
    "HolderMax",
    "MeanZeroError",
    "fractional_laplacian",
    "riesz_perp",
    "gradient",
    "shift",
    "dealias",
    "resample",
    "sobolev_norm",
    "lp_norm",
    "holder_seminorm",
    "inner_l2",
    "inner_h1",
    "norm_report",
]

TWO_PI = 2.0 * np.pi


class MeanZeroError(ValueError):
    """Raised when an operation requires a mean-free field and gets one that is not."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform collocation grid on ``[-pi, pi)^dim``.

    ``n`` must be even and at least 8; powers of two are the intended (fast)
    case.  The wavenumber set is exactly the standard FFT ordering for
    resolution ``n``, an integer lattice with ``|k_i| <= n/2``.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 8, got {self.n}")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @staticmethod
    def _frozen(a: np.ndarray) -> np.ndarray:
        a.setflags(write=False)
        return a

    @cached_property
    def coords(self) -> np.ndarray:
        """1D coordinate array, shared by every axis."""
        return self._frozen(-np.pi + TWO_PI * np.arange(self.n) / self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """1D integer wavenumbers in FFT ordering."""
        return self._frozen((np.fft.fftfreq(self.n) * self.n).astype(np.int64))

    @cached_property
    def kvecs(self) -> tuple:
        """Meshgrid of wavenumber components, one array per dimension."""
        k = self.wavenumbers.astype(np.float64)
        if self.dim == 1:
            return (self._frozen(k),)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return (self._frozen(kx), self._frozen(ky))

    @cached_property
    def kmag(self) -> np.ndarray:
        """``|k|`` (Euclidean) on the full wavenumber grid."""
        return self._frozen(np.sqrt(sum(c * c for c in self.kvecs)))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """Boolean mask of modes with any component equal to n/2."""
        k = self.wavenumbers
        ny = k == -self.n // 2  # fftfreq stores the Nyquist mode as -n/2
        if self.dim == 1:
            return self._frozen(ny)
        mx, my = np.meshgrid(ny, ny, indexing="ij")
        return self._frozen(mx | my)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule mask: True on modes kept for quadratic products.

        The cutoff ``kc = floor((n - 1) / 3)`` guarantees ``3*kc < n`` so that
        collocation quadrature of cubic expressions of dealiased fields is
        alias-free.
        """
        kc = (self.n - 1) // 3
        k = np.abs(self.wavenumbers)
        keep = k <= kc
        if self.dim == 1:
            return self._frozen(keep)
        mx, my = np.meshgrid(keep, keep, indexing="ij")
        return self._frozen(mx & my)


def _sanitize(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Project onto the representable class: zero mean, zero Nyquist, Hermitian."""
    c = np.asarray(coeffs, dtype=np.complex128).copy()
    if c.shape != grid.shape:
        raise ValueError(f"coefficient shape {c.shape} does not match grid {grid.shape}")
    # exact Hermitian symmetry: average with the reflected conjugate
    rev = tuple(slice(None, None, -1) for _ in range(grid.dim))
    c = 0.5 * (c + np.conj(np.roll(c[rev], 1, axis=tuple(range(grid.dim)))))
    c[(0,) * grid.dim] = 0.0
    c[grid.nyquist_mask] = 0.0
    c.setflags(write=False)
    return c


@dataclass(frozen=True)
class SpectralField:
    """Real scalar field on the torus stored as Fourier coefficients.

    Invariants (enforced on construction): the ``k = 0`` coefficient is exactly
    zero, coefficients are Hermitian-symmetric (the field is real valued), and
    Nyquist modes are zero.
    """

    grid: TorusGrid
    coeffs: np.ndarray = dc_field(repr=False)

    @staticmethod
    def from_coeffs(grid: TorusGrid, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(grid, _sanitize(grid, coeffs))

    @staticmethod
    def _trusted(grid: TorusGrid, coeffs: np.ndarray) -> "SpectralField":
        """Wrap coefficients that already satisfy the invariants.

        Internal fast path for operations that provably preserve mean-zero,
        Hermitian symmetry, and the Nyquist zero (diagonal multipliers with
        even real / odd imaginary symbols, linear combinations); skips the
        symmetrization pass of :meth:`from_coeffs`.
        """
        coeffs.setflags(write=False)
        return SpectralField(grid, coeffs)

    @staticmethod
    def _from_product(grid: TorusGrid, values: np.ndarray) -> "SpectralField":
        """Transform real collocation values, projecting out mean and Nyquist.

        Internal fast path for pointwise products inside time steppers: real
        input guarantees Hermitian symmetry to roundoff, so only the cheap
        mean/Nyquist projections are applied.
        """
        c = np.fft.fftn(values) / grid.n**grid.dim
        c[(0,) * grid.dim] = 0.0
        c[grid.nyquist_mask] = 0.0
        c.setflags(write=False)
        return SpectralField(grid, c)

    @staticmethod
    def from_values(grid: TorusGrid, values: np.ndarray, demean: bool = False) -> "SpectralField":
        """Build a field from collocation values.

        Raises :class:`MeanZeroError` when the sample mean is not (numerically)
        zero, unless ``demean`` is set, in which case the mean is removed.
        """
        v = np.asarray(values, dtype=np.float64)
        if v.shape != grid.shape:
            raise ValueError(f"value shape {v.shape} does not match grid {grid.shape}")
        mean = float(v.mean())
        scale = float(np.abs(v).max())
        if not demean and scale > 0 and abs(mean) > 1e-10 * max(scale, 1.0):
            raise MeanZeroError(f"field mean {mean:.3e} is not zero (pass demean=True to project)")
        c = np.fft.fftn(v) / grid.n**grid.dim
        return SpectralField.from_coeffs(grid, c)

    @staticmethod
    def zeros(grid: TorusGrid) -> "SpectralField":
        return SpectralField.from_coeffs(grid, np.zeros(grid.shape, dtype=np.complex128))

    def values(self) -> np.ndarray:
        """Collocation values on the grid (real array)."""
        return np.real(np.fft.ifftn(self.coeffs * self.grid.n**self.grid.dim))

    def band(self) -> int:
        """Largest ``|k_i|`` carrying a (numerically) nonzero coefficient."""
        mag = np.abs(self.coeffs)
        top = mag.max()
        if top == 0.0:
            return 0
        active = mag > 1e-14 * top
        k = np.abs(self.grid.wavenumbers)
        if self.grid.dim == 1:
            return int(k[active].max())
        return int(max(k[active.any(axis=1)].max(), k[active.any(axis=0)].max()))

    def is_zero(self) -> bool:
        return bool(np.all(self.coeffs == 0.0))

    # small arithmetic surface so solver/tangent code reads naturally;
    # linear combinations preserve every invariant, so the fast path applies
    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_same_grid(other)
        return SpectralField._trusted(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_same_grid(other)
        return SpectralField._trusted(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField._trusted(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def _check_same_grid(self, other: "SpectralField") -> None:
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")


@dataclass(frozen=True)
class HolderMax:
    """Result of a discrete Hoelder-quotient maximization."""

    value: float
    argmax_x: tuple
    argmax_h: tuple


@dataclass
class NormReport:
    """Bundle of norms of one field; every entry is a nonnegative real."""

    l2: float
    linf: float
    lp: dict
    hs: dict
    holder: dict


def _multiplier(field: SpectralField, symbol: np.ndarray) -> SpectralField:
    # symbols used in this module are even-real or odd-imaginary in k and
    # vanish at k = 0 where required, so invariants survive without re-projection
    return SpectralField._trusted(field.grid, field.coeffs * symbol)


def fractional_laplacian(field: SpectralField, s: float) -> SpectralField:
    """Fourier multiplier ``|k|^s`` acting on a mean-free field.

    For ``s < 0`` the operator is only defined away from constants; the
    mean-free invariant of :class:`SpectralField` guarantees that, and the
    zero mode stays exactly zero.
    """
    if not -2.0 <= s <= 3.0:
        raise ValueError(f"s must lie in [-2, 3], got {s}")
    if s < 0 and abs(field.coeffs[(0,) * field.grid.dim]) > 0:
        raise MeanZeroError("negative fractional powers are undefined on constants")
    kmag = field.grid.kmag
    sym = np.zeros_like(kmag)
    nz = kmag > 0
    sym[nz] = kmag[nz] ** s
    return _multiplier(field, sym)


def riesz_perp(field: SpectralField) -> tuple:
    """Divergence-free velocity ``(-R_2 theta, R_1 theta)`` from the scalar.

    Only defined on T^2 (the 1D testbed transports with the scalar itself).
    """
    if field.grid.dim != 2:
        raise ValueError("riesz_perp requires dim=2")
    kx, ky = field.grid.kvecs
    kmag = field.grid.kmag
    inv = np.zeros_like(kmag)
    nz = kmag > 0
    inv[nz] = 1.0 / kmag[nz]
    u1 = _multiplier(field, -1j * ky * inv)
    u2 = _multiplier(field, 1j * kx * inv)
    return u1, u2


def gradient(field: SpectralField) -> tuple:
    """Spectral gradient, one field per dimension."""
    kv = field.grid.kvecs
    return tuple(_multiplier(field, 1j * k) for k in kv)


def shift(field: SpectralField, h: Sequence[float]) -> SpectralField:
    """Exact spectral translation ``x -> x + h``."""
    h = np.atleast_1d(np.asarray(h, dtype=np.float64))
    if h.shape != (field.grid.dim,):
        raise ValueError("shift vector dimension mismatch")
    kv = field.grid.kvecs
    phase = np.exp(1j * sum(k * hi for k, hi in zip(kv, h)))
    return _multiplier(field, phase)


def dealias(field: SpectralField) -> SpectralField:
    """Zero every mode outside the two-thirds cutoff."""
    return SpectralField._trusted(field.grid, field.coeffs * field.grid.dealias_mask)


def resample(field: SpectralField, m: int) -> SpectralField:
    """Exact spectral resampling onto an m-point grid (m above twice the band)."""
    grid = field.grid
    if m == grid.n:
        return field
    if m < 2 * field.band() + 2:
        raise ValueError(f"target resolution {m} cannot represent band {field.band()}")
    target = TorusGrid(grid.dim, m)
    c = np.zeros(target.shape, dtype=np.complex128)
    k = grid.wavenumbers
    keep = np.abs(k) < min(grid.n, m) // 2  # Nyquist is zero by invariant
    if grid.dim == 1:
        c[k[keep]] = field.coeffs[keep]
    else:
        kx = k[keep][:, None].repeat(int(keep.sum()), axis=1)
        ky = k[keep][None, :].repeat(int(keep.sum()), axis=0)
        c[kx, ky] = field.coeffs[np.ix_(keep, keep)]
    return SpectralField.from_coeffs(target, c)


def sobolev_norm(field: SpectralField, s: float) -> float:
    """``(sum_k |k|^{2s} |c_k|^2 * (2pi)^d)^{1/2}``, the H^s norm.

    With the package transform convention this equals ``||Lambda^s phi||_{L^2}``
    exactly; homogeneous and inhomogeneous norms coincide on mean-free fields.
    """
    kmag = field.grid.kmag
    nz = kmag > 0
    w = kmag[nz] ** (2.0 * s)
    return float(np.sqrt(TWO_PI**field.grid.dim * np.sum(w * np.abs(field.coeffs[nz]) ** 2)))


def lp_norm(field: SpectralField, p) -> float:
    """Collocation L^p norm: trapezoidal quadrature for even p, max for p=inf.

    Trapezoidal quadrature on the periodic grid is exact for trig polynomials
    below the aliasing limit ``p * band < n``.
    """
    v = field.values()
    if p == np.inf or p == "inf":
        return float(np.abs(v).max())
    p = int(p)
    if p < 2 or p % 2 != 0:
        raise ValueError(f"p must be an even integer >= 2 or inf, got {p}")
    cell = field.grid.spacing ** field.grid.dim
    return float((np.sum(v**p) * cell) ** (1.0 / p))


def inner_l2(f: SpectralField, g: SpectralField) -> float:
    f._check_same_grid(g)
    return float(np.real(np.sum(np.conj(f.coeffs) * g.coeffs)) * TWO_PI**f.grid.dim)


def inner_h1(f: SpectralField, g: SpectralField) -> float:
    """Homogeneous H^1 inner product ``sum |k|^2 conj(f_k) g_k * (2pi)^d``."""
    f._check_same_grid(g)
    k2 = f.grid.kmag ** 2
    return float(np.real(np.sum(k2 * np.conj(f.coeffs) * g.coeffs)) * TWO_PI**f.grid.dim)


def _all_shift_indices(grid: TorusGrid) -> Iterable[tuple]:
    if grid.dim == 1:
        return [(j,) for j in range(1, grid.n)]
    return [(i, j) for i in range(grid.n) for j in range(grid.n) if (i, j) != (0, 0)]


def _canonical(delta: np.ndarray) -> np.ndarray:
    """Canonical torus representative of a displacement, in [-pi, pi)."""
    return (delta + np.pi) % TWO_PI - np.pi


def holder_seminorm(field: SpectralField, alpha: float, shifts=None) -> HolderMax:
    """Discrete Hoelder quotient ``max_{x,h} |theta(x+h) - theta(x)| / |h|^alpha``.

    ``shifts`` is an iterable of grid index offsets; by default every nonzero
    grid shift is scanned, whose canonical torus representatives satisfy
    ``|h| <= pi*sqrt(dim)``.  Returns the maximum together with the maximizing
    collocation point and shift (canonical coordinates).

    The reduction is performed in a fixed serial order, so results are
    reproducible bit-for-bit.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    grid = field.grid
    if shifts is None:
        shifts = _all_shift_indices(grid)
    else:
        shifts = [tuple(int(c) for c in s) for s in shifts]
        if any(all(c % grid.n == 0 for c in s) for s in shifts):
            raise ValueError("shift set must not contain the zero shift")
    if not shifts:
        raise ValueError("shift set is empty")

    v = field.values()
    spacing = grid.spacing
    best = (-1.0, None, None)
    for idx in shifts:
        h = _canonical(np.asarray(idx, dtype=np.float64) * spacing)
        hnorm = float(np.linalg.norm(h))
        rolled = np.roll(v, tuple(-c for c in idx), axis=tuple(range(grid.dim)))
        diff = np.abs(rolled - v)
        ratio = float(diff.max()) / hnorm**alpha
        if ratio > best[0]:
            flat = int(np.argmax(diff))
            xi = np.unravel_index(flat, v.shape)
            x = tuple(float(c) for c in (-np.pi + spacing * np.asarray(xi)))
            best = (ratio, x, tuple(float(c) for c in h))
    return HolderMax(value=max(best[0], 0.0), argmax_x=best[1], argmax_h=best[2])


def norm_report(field: SpectralField, ps=(2, 4), ss=(0.0, 0.5, 1.0, 1.5, 2.0), alphas=()) -> NormReport:
    """Compute the standard norm bundle for one field."""
    lp = {int(p): lp_norm(field, p) for p in ps}
    hs = {float(s): sobolev_norm(field, s) for s in ss}
    holder = {float(a): holder_seminorm(field, a).value for a in alphas}
    return NormReport(
        l2=lp_norm(field, 2),
        linf=lp_norm(field, np.inf),
        lp=lp,
        hs=hs,
        holder=holder,
    )
