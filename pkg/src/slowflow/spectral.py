"""
Spectral machinery on periodic boxes.

Conventions
-----------
Coefficients follow the ``norm="forward"`` convention: ``coeffs[k]`` is the
amplitude of ``exp(i k.x)``, so ``sin(x1)`` has ``-i/2`` at ``k1 = +1`` and
``+i/2`` at ``k1 = -1``.  Plancherel then reads

    ||f||_{L^2}^2 = volume * sum_k |coeffs[k]|^2.

Three-dimensional spectra are stored as real-to-complex transforms along the
vertical axis, shape ``(n1, n2, n3 // 2 + 1)``.  A 2D grid is encoded by
``n3 == 1``; its spectra are full complex ``(n1, n2, 1)`` arrays and every 2D
kernel also accepts a trailing batch axis in place of that 1 (this is how
stacks of horizontal slices are handled).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "make_grid",
    "transform",
    "derivative",
    "heat_propagate",
    "weighted_leray_project",
    "multiply_dealiased",
    "to_physical",
    "to_spectral",
    "stack_to_volume",
    "volume_to_stack",
]

TWO_PI = 2.0 * math.pi


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Periodic box ``[0, L1) x [0, L2) x [0, L3)`` with ``n_j`` modes per axis.

    ``n3 == 1`` encodes a 2D grid; ``L3`` is then ignored.
    """

    n1: int
    n2: int
    n3: int
    L1: float = TWO_PI
    L2: float = TWO_PI
    L3: float = TWO_PI

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            n = getattr(self, name)
            if int(n) != n or not _is_pow2(int(n)):
                raise ValueError(f"{name}={n} is not a power of two")
        if self.n1 < 8 or self.n2 < 8 or (self.n3 != 1 and self.n3 < 8):
            raise ValueError("active axes need at least 8 modes")
        lengths = (self.L1, self.L2) if self.n3 == 1 else (self.L1, self.L2, self.L3)
        if any(not (L > 0 and math.isfinite(L)) for L in lengths):
            raise ValueError(f"box lengths must be positive, got {lengths}")

    # -- geometry -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return 2 if self.n3 == 1 else 3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3 // 2 + 1)

    @property
    def volume(self) -> float:
        v = self.L1 * self.L2
        return v if self.n3 == 1 else v * self.L3

    @property
    def cell_volume(self) -> float:
        return self.volume / (self.n1 * self.n2 * self.n3)

    def coords(self, axis: int) -> np.ndarray:
        n, L = self.shape[axis - 1], (self.L1, self.L2, self.L3)[axis - 1]
        return L * np.arange(n) / n

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.coords(1), self.coords(2), self.coords(3), indexing="ij")

    # -- wavenumber tables ----------------------------------------------------
    def _table(self, n: int, L: float) -> np.ndarray:
        return TWO_PI / L * sfft.fftfreq(n, 1.0 / n)

    @cached_property
    def k1(self) -> np.ndarray:
        return self._table(self.n1, self.L1)

    @cached_property
    def k2(self) -> np.ndarray:
        return self._table(self.n2, self.L2)

    @cached_property
    def k3(self) -> np.ndarray:
        """Full vertical table (``[0.]`` on 2D grids)."""
        if self.n3 == 1:
            return np.zeros(1)
        return self._table(self.n3, self.L3)

    @cached_property
    def k3r(self) -> np.ndarray:
        """Vertical table of the stored half spectrum."""
        if self.n3 == 1:
            return np.zeros(1)
        return TWO_PI / self.L3 * np.arange(self.n3 // 2 + 1)

    @cached_property
    def K(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable wavenumber arrays over the stored spectrum."""
        return (
            self.k1[:, None, None],
            self.k2[None, :, None],
            self.k3r[None, None, :],
        )

    @cached_property
    def Kd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers for odd derivatives: Nyquist entries set to zero."""
        out = []
        for k, n in zip(self.K, self.shape):
            k = k.copy()
            if n > 1:
                k.reshape(-1)[n // 2] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def kh_sq(self) -> np.ndarray:
        K1, K2, _ = self.K
        return K1**2 + K2**2

    @cached_property
    def k_sq(self) -> np.ndarray:
        return self.kh_sq + self.K[2] ** 2

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """How many full-spectrum modes each stored coefficient represents."""
        w = np.full(self.spectral_shape[2], 2.0)
        w[0] = 1.0
        if self.n3 > 1:
            w[-1] = 1.0
        else:
            w[:] = 1.0
        return np.broadcast_to(w[None, None, :], self.spectral_shape)

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Signed integer mode numbers, broadcastable like :attr:`K`."""
        m1 = sfft.fftfreq(self.n1, 1.0 / self.n1)[:, None, None]
        m2 = sfft.fftfreq(self.n2, 1.0 / self.n2)[None, :, None]
        m3 = np.arange(self.spectral_shape[2], dtype=float)[None, None, :]
        return m1, m2, m3

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep ``|m_j| < n_j / 3`` on every active axis."""
        m1, m2, m3 = self.mode_index
        keep = (np.abs(m1) < self.n1 / 3.0) & (np.abs(m2) < self.n2 / 3.0)
        if self.n3 > 1:
            keep = keep & (m3 < self.n3 / 3.0)
        return np.broadcast_to(keep, self.spectral_shape).astype(float)

    def horizontal(self) -> "Grid":
        """The 2D grid of one horizontal plane."""
        return Grid(self.n1, self.n2, 1, self.L1, self.L2, self.L3)

    def with_vertical(self, n3: int, L3: float) -> "Grid":
        return Grid(self.n1, self.n2, n3, self.L1, self.L2, L3)


def make_grid(n1, n2, n3, L1=TWO_PI, L2=TWO_PI, L3=TWO_PI) -> Grid:
    """Build a :class:`Grid`; raises ``ValueError`` on invalid counts or lengths."""
    return Grid(int(n1), int(n2), int(n3), float(L1), float(L2), float(L3))


# ---------------------------------------------------------------------------
# raw array transforms
# ---------------------------------------------------------------------------
def _hermitian_fill(half: np.ndarray, n2: int) -> np.ndarray:
    """Rebuild the full horizontal spectrum of a real field from its rfft half."""
    out = np.empty(half.shape[:-2] + (n2, half.shape[-1]), dtype=complex)
    out[..., : n2 // 2 + 1, :] = half
    m = np.arange(n2 // 2 + 1, n2)
    mirror = np.roll(np.flip(half[..., n2 - m, :], axis=-3), 1, axis=-3)
    out[..., m, :] = np.conj(mirror)
    return out


def to_spectral(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Physical values (``..., n1, n2, n3``) to stored coefficients."""
    values = np.asarray(values, dtype=float)
    if grid.n3 == 1:
        if values.shape[-3:-1] != (grid.n1, grid.n2):
            raise ValueError(f"shape {values.shape} does not match {grid}")
        return _hermitian_fill(sfft.rfftn(values, axes=(-3, -2), norm="forward"), grid.n2)
    if values.shape[-3:] != grid.shape:
        raise ValueError(f"shape {values.shape} does not match {grid}")
    return sfft.rfftn(values, axes=(-3, -2, -1), norm="forward")


def to_physical(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Stored coefficients to real physical values."""
    if grid.n3 == 1:
        if coeffs.shape[-3:-1] != (grid.n1, grid.n2):
            raise ValueError(f"shape {coeffs.shape} does not match {grid}")
        half = coeffs[..., : grid.n2 // 2 + 1, :]
        return sfft.irfftn(half, s=(grid.n1, grid.n2), axes=(-3, -2), norm="forward")
    if coeffs.shape[-3:] != grid.spectral_shape:
        raise ValueError(f"shape {coeffs.shape} does not match {grid}")
    return sfft.irfftn(coeffs, s=grid.shape, axes=(-3, -2, -1), norm="forward")


def inner(grid: Grid, a: np.ndarray, b: np.ndarray, multiplier=None) -> float:
    """Plancherel inner product ``(a|b)``, optionally with a real Fourier multiplier.

    Leading axes (components) are summed.  For 2D grids a trailing batch axis
    is summed as well.
    """
    prod = (np.conj(a) * b).real
    if multiplier is not None:
        prod = prod * multiplier
    if grid.n3 > 1:
        prod = prod * grid.multiplicity
    return float(grid.volume * prod.sum())


def leray(grid: Grid, u: np.ndarray, m: float = 1.0) -> np.ndarray:
    """Weighted projection ``u - (d1 p, d2 p, m d3 p)``, ``p = (lap_h + m d3^2)^-1 div u``."""
    K1, K2, K3 = grid.Kd
    if u.shape[0] == 2:
        kdot = K1 * u[0] + K2 * u[1]
        denom = K1**2 + K2**2
        denom = np.where(denom == 0.0, 1.0, denom)
        f = kdot / denom
        return np.stack([u[0] - K1 * f, u[1] - K2 * f])
    kdot = K1 * u[0] + K2 * u[1] + K3 * u[2]
    denom = K1**2 + K2**2 + m * K3**2
    denom = np.where(denom == 0.0, 1.0, denom)
    f = kdot / denom
    return np.stack([u[0] - K1 * f, u[1] - K2 * f, u[2] - m * K3 * f])


def divergence(grid: Grid, u: np.ndarray) -> np.ndarray:
    K1, K2, K3 = grid.Kd
    out = 1j * (K1 * u[0] + K2 * u[1])
    if u.shape[0] == 3:
        out = out + 1j * K3 * u[2]
    return out


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------
def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=complex, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real scalar field held by its spectral coefficients."""

    grid: Grid
    coeffs: np.ndarray
    zero_mean: bool = False

    def __post_init__(self):
        c = _frozen(self.coeffs)
        if c.shape != self.grid.spectral_shape:
            raise ValueError(f"coeffs shape {c.shape} != {self.grid.spectral_shape}")
        if self.zero_mean and c[0, 0, 0] != 0:
            raise ValueError("zero_mean field with nonzero mean coefficient")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_physical(cls, grid: Grid, values, zero_mean: bool = False) -> "ScalarField":
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        c = to_spectral(grid, values)
        if zero_mean:
            c[0, 0, 0] = 0.0
        return cls(grid, c, zero_mean)

    def physical(self) -> np.ndarray:
        return to_physical(self.grid, self.coeffs)

    def l2(self) -> float:
        return math.sqrt(inner(self.grid, self.coeffs, self.coeffs))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two or three real components sharing one grid."""

    grid: Grid
    coeffs: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        c = _frozen(self.coeffs)
        if c.ndim != 4 or c.shape[0] not in (2, 3) or c.shape[1:] != self.grid.spectral_shape:
            raise ValueError(f"bad vector coeffs shape {c.shape} for {self.grid}")
        object.__setattr__(self, "coeffs", c)
        if self.solenoidal:
            div = np.abs(divergence(self.grid, c)).max()
            scale = max(np.abs(c).max(), 1e-300)
            if div >= 1e-10 * scale:
                raise ValueError(f"field flagged solenoidal has divergence {div:.3e}")

    @classmethod
    def from_physical(cls, grid: Grid, values, solenoidal: bool = False) -> "VectorField":
        values = np.asarray(values, dtype=float)
        values = values.reshape((values.shape[0],) + grid.shape)
        return cls(grid, to_spectral(grid, values), solenoidal)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.coeffs[i])

    def physical(self) -> np.ndarray:
        return to_physical(self.grid, self.coeffs)

    def divergence(self) -> ScalarField:
        return ScalarField(self.grid, divergence(self.grid, self.coeffs))

    def l2(self) -> float:
        return math.sqrt(inner(self.grid, self.coeffs, self.coeffs))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------
def transform(grid: Grid, data: np.ndarray, direction: str = "forward") -> np.ndarray:
    """Forward (physical -> spectral) or backward (spectral -> physical) transform."""
    if direction == "forward":
        return to_spectral(grid, data)
    if direction == "backward":
        return to_physical(grid, np.asarray(data, dtype=complex))
    raise ValueError(f"unknown direction {direction!r}")


def derivative(field: ScalarField, axis: int) -> ScalarField:
    """Spectral derivative along ``axis`` (1, 2 or 3)."""
    grid = field.grid
    if axis not in (1, 2, 3) or (axis == 3 and grid.n3 == 1):
        raise ValueError(f"axis {axis} is not active on {grid}")
    k = grid.Kd[axis - 1]
    c = 1j * k * field.coeffs
    c[0, 0, 0] = 0.0
    return ScalarField(grid, c, zero_mean=True)


def heat_factor(grid: Grid, t: float, weights=(1.0, 1.0, 1.0)) -> np.ndarray:
    K1, K2, K3 = grid.K
    w1, w2, w3 = weights
    return np.exp(-t * (w1 * K1**2 + w2 * K2**2 + w3 * K3**2))


def heat_propagate(field, t: float, weights=(1.0, 1.0, 1.0)):
    """Apply ``exp(t (w1 d1^2 + w2 d2^2 + w3 d3^2))`` mode-wise."""
    if t < 0:
        raise ValueError("negative time")
    if any(w < 0 for w in weights):
        raise ValueError("negative diffusion weight")
    E = heat_factor(field.grid, t, weights)
    if isinstance(field, VectorField):
        return VectorField(field.grid, field.coeffs * E, field.solenoidal)
    return ScalarField(field.grid, field.coeffs * E, field.zero_mean)


def weighted_leray_project(vec: VectorField, m: float = 1.0) -> VectorField:
    """Remove ``(d1 p, d2 p, m d3 p)`` so that the result is divergence free.

    With ``m = 1`` this is the usual Leray projector; ``m = eps^2`` produces
    the pressure gradient shape of the anisotropic transport system.  The
    mean mode is left untouched.
    """
    if not m > 0:
        raise ValueError("metric weight m must be positive")
    out = VectorField(vec.grid, leray(vec.grid, vec.coeffs, m))
    # solenoidal by construction; a relative check would misfire when the
    # projection leaves only round-off (pure gradients)
    object.__setattr__(out, "solenoidal", True)
    return out


def dealias(grid: Grid, c: np.ndarray) -> np.ndarray:
    return c * grid.dealias_mask


def multiply_dealiased(a: ScalarField, b: ScalarField) -> ScalarField:
    """Pointwise product of the 2/3-truncated inputs, truncated again."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    grid = a.grid
    pa = to_physical(grid, dealias(grid, a.coeffs))
    pb = to_physical(grid, dealias(grid, b.coeffs))
    return ScalarField(grid, dealias(grid, to_spectral(grid, pa * pb)))


# ---------------------------------------------------------------------------
# slice stacks <-> volumes
# ---------------------------------------------------------------------------
def stack_to_volume(grid: Grid, stack: np.ndarray) -> np.ndarray:
    """Horizontal spectra sampled at the vertical collocation points -> 3D coefficients.

    ``stack`` has shape ``(..., n1, n2, n3)`` (vertical axis physical); the
    result has ``grid.spectral_shape`` trailing axes.
    """
    if stack.shape[-3:] != grid.shape:
        raise ValueError(f"stack shape {stack.shape} does not match {grid}")
    return sfft.fft(stack, axis=-1, norm="forward")[..., : grid.n3 // 2 + 1]


def volume_to_stack(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`stack_to_volume` for real fields."""
    if coeffs.shape[-3:] != grid.spectral_shape:
        raise ValueError(f"coeffs shape {coeffs.shape} does not match {grid}")
    return to_spectral(grid.horizontal(), to_physical(grid, coeffs))
