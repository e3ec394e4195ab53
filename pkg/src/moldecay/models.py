"""1D nuclear grid, fibered electronic models, bands, gauges, dipoles.

A model molecule is a periodic grid ``x in [0, L)`` together with a smooth
family of d x d Hermitian matrices ``H_el(x)`` (the electronic fiber) and a
Hermitian dipole matrix ``mu(x)``.  Bands are eigenvalue families ``E_j(x)``
with parallel-transport gauge-fixed eigenvector fields; the residual holonomy
phase over the periodic loop is recorded, never silently absorbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBand,
    DimensionMismatch,
    GapViolation,
    NonHermitianFiber,
    RoughFiber,
    ValidationError,
)

HERMITICITY_TOL = 1e-13
DEFAULT_DEGENERACY_THRESHOLD = 1e-6  # relative to the spectral range


@dataclass(frozen=True)
class Grid1D:
    """Periodic 1D grid with a power-of-two number of points."""

    n_points: int
    length: float

    def __post_init__(self):
        n = self.n_points
        if n < 2 or (n & (n - 1)) != 0:
            raise ValidationError(f"n_points must be a power of two, got {n}")
        if not self.length > 0:
            raise ValidationError(f"length must be positive, got {self.length}")

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n_points) * self.spacing

    @property
    def wavenumbers(self) -> np.ndarray:
        """FFT-ordered wavenumbers (integer multiples of 2*pi/length)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)


def spectral_derivative(grid: Grid1D, values: np.ndarray, order: int = 1) -> np.ndarray:
    """Fourier derivative along axis 0 of a periodic sampled field."""
    k = grid.wavenumbers
    shape = (len(k),) + (1,) * (values.ndim - 1)
    mult = (1j * k.reshape(shape)) ** order
    return np.fft.ifft(np.fft.fft(values, axis=0) * mult, axis=0)


@dataclass
class FiberField:
    """Grid-indexed family of d x d matrices, one per grid point."""

    grid: Grid1D
    matrices: np.ndarray  # (n, d, d) complex

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=complex)
        if mats.ndim != 3 or mats.shape[0] != self.grid.n_points or mats.shape[1] != mats.shape[2]:
            raise DimensionMismatch(f"expected (n, d, d) matrices, got {mats.shape}")
        self.matrices = mats

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def check_hermitian(self, tol: float = HERMITICITY_TOL) -> None:
        scale = max(1.0, float(np.abs(self.matrices).max()))
        dev = np.abs(self.matrices - np.conj(np.swapaxes(self.matrices, 1, 2))).max()
        if dev > tol * scale:
            raise NonHermitianFiber(f"Hermiticity deviation {dev:.3e} exceeds {tol:.1e}")

    def derivative(self, order: int = 1) -> "FiberField":
        return FiberField(self.grid, spectral_derivative(self.grid, self.matrices, order))

    def fourier_tail(self, fraction: float = 0.25) -> float:
        """Relative spectral weight in the top ``fraction`` of wavenumbers."""
        coeffs = np.fft.fft(self.matrices, axis=0)
        power = np.sum(np.abs(coeffs) ** 2, axis=(1, 2))
        k = np.abs(self.grid.wavenumbers)
        cutoff = (1.0 - fraction) * k.max()
        tail = power[k > cutoff].sum()
        total = power.sum()
        return float(tail / total) if total > 0 else 0.0

    def require_smooth(self, tol: float = 1e-10) -> None:
        tail = self.fourier_tail()
        if tail > tol:
            raise RoughFiber(f"Fourier tail fraction {tail:.3e} exceeds {tol:.1e}")

    def __matmul__(self, other: "FiberField") -> "FiberField":
        if other.grid.n_points != self.grid.n_points:
            raise DimensionMismatch("fields on different grids")
        return FiberField(self.grid, np.einsum("xab,xbc->xac", self.matrices, other.matrices))

    def dagger(self) -> "FiberField":
        return FiberField(self.grid, np.conj(np.swapaxes(self.matrices, 1, 2)))


@dataclass
class ModelSpec:
    """Complete model: grid, electronic fiber, dipole, UV cutoff, band pair."""

    grid: Grid1D
    fiber: FiberField
    dipole: FiberField
    uv_cutoff: float
    band_lower: int = 0
    band_upper: int = 1
    name: str = "model"

    def __post_init__(self):
        if self.fiber.dim < 2:
            raise ValidationError("electronic dimension must be >= 2")
        if self.dipole.dim != self.fiber.dim:
            raise DimensionMismatch("dipole and fiber dimensions differ")
        if not self.uv_cutoff > 0:
            raise ValidationError("uv_cutoff must be positive")
        if not (0 <= self.band_lower < self.band_upper < self.fiber.dim):
            raise ValidationError(
                f"band pair ({self.band_lower}, {self.band_upper}) invalid for d={self.fiber.dim}"
            )
        self.fiber.check_hermitian()
        self.dipole.check_hermitian()

    @property
    def electronic_dim(self) -> int:
        return self.fiber.dim

    def validate_cutoff(self) -> None:
        """UV cutoff must exceed the band-pair energy difference everywhere."""
        lower = diagonalize_band(self.fiber, self.band_lower)
        upper = diagonalize_band(self.fiber, self.band_upper)
        max_gap = float(np.max(upper.energies - lower.energies))
        if self.uv_cutoff <= max_gap:
            raise ValidationError(
                f"uv_cutoff {self.uv_cutoff} must exceed max band difference {max_gap:.6g}"
            )


@dataclass
class BandData:
    """Eigenvalue band with a gauge-fixed eigenvector field.

    ``eigenvectors`` are in the discrete parallel-transport gauge: successive
    overlaps are real and positive except at the wrap-around seam, where the
    accumulated loop phase (``holonomy``) remains.  Consumers that need to
    differentiate the field use :meth:`smooth_eigenvectors`, which spreads the
    holonomy uniformly to obtain a smooth periodic field.
    """

    index: int
    energies: np.ndarray  # (n,)
    eigenvectors: np.ndarray  # (n, d)
    projector: FiberField
    gap: float
    holonomy: float
    source: FiberField
    gap_profile: np.ndarray = field(repr=False, default=None)

    @property
    def grid(self) -> Grid1D:
        return self.source.grid

    def smooth_eigenvectors(self) -> np.ndarray:
        """Eigenvector field with the holonomy twist distributed evenly."""
        n = self.grid.n_points
        twist = np.exp(-1j * self.holonomy * np.arange(n) / n)
        return self.eigenvectors * twist[:, None]


def _fix_reference_phase(vec: np.ndarray) -> np.ndarray:
    pivot = int(np.argmax(np.abs(vec)))
    phase = vec[pivot] / abs(vec[pivot])
    return vec / phase


def diagonalize_band(
    fiber: FiberField,
    band_index: int,
    degeneracy_threshold: float = DEFAULT_DEGENERACY_THRESHOLD,
) -> BandData:
    """Diagonalize the fiber pointwise and gauge-fix the requested band.

    Raises :class:`DegenerateBand` if the band's spectral distance to the rest
    of the spectrum falls below ``degeneracy_threshold`` (relative to the full
    spectral range) anywhere on the grid.
    """
    fiber.check_hermitian()
    n = fiber.grid.n_points
    d = fiber.dim
    if not 0 <= band_index < d:
        raise ValidationError(f"band index {band_index} out of range for d={d}")

    energies = np.empty((n, d))
    vectors = np.empty((n, d, d), dtype=complex)
    for x in range(n):
        w, v = np.linalg.eigh(fiber.matrices[x])
        energies[x] = w
        vectors[x] = v

    band_e = energies[:, band_index]
    others = np.delete(energies, band_index, axis=1)
    gap_profile = np.min(np.abs(others - band_e[:, None]), axis=1)
    spectral_range = max(float(energies.max() - energies.min()), 1e-300)
    gap = float(gap_profile.min())
    if gap < degeneracy_threshold * spectral_range:
        worst = int(np.argmin(gap_profile))
        raise DegenerateBand(
            f"band {band_index} gap {gap:.3e} below threshold "
            f"{degeneracy_threshold:.1e} x range at grid point {worst}"
        )

    phi = vectors[:, :, band_index].copy()
    phi[0] = _fix_reference_phase(phi[0])
    for x in range(1, n):
        overlap = np.vdot(phi[x - 1], phi[x])
        if abs(overlap) < 1e-12:
            raise DegenerateBand(
                f"eigenvector field discontinuous near grid point {x}; "
                "grid too coarse or band nearly crossing"
            )
        phi[x] *= np.conj(overlap) / abs(overlap)
    holonomy = float(np.angle(np.vdot(phi[-1], phi[0])))

    projector = FiberField(fiber.grid, np.einsum("xa,xb->xab", phi, np.conj(phi)))
    return BandData(
        index=band_index,
        energies=band_e,
        eigenvectors=phi,
        projector=projector,
        gap=gap,
        holonomy=holonomy,
        source=fiber,
        gap_profile=gap_profile,
    )


def verify_gap(band: BandData, threshold: float) -> float:
    """Return the uniform gap; raise :class:`GapViolation` if below threshold."""
    if band.gap < threshold:
        worst = int(np.argmin(band.gap_profile))
        raise GapViolation(
            f"gap {band.gap:.6g} below threshold {threshold:.6g} at grid point {worst}",
            grid_point=worst,
            gap=band.gap,
        )
    return band.gap


def berry_connection(band: BandData, eigenvectors: np.ndarray | None = None) -> np.ndarray:
    """Connection coefficient ``A(x) = i <phi(x), phi'(x)>`` of the band.

    Differentiation is spectral, so it acts on the holonomy-distributed smooth
    periodic field; the loop integral of the result reproduces the recorded
    holonomy modulo 2*pi.  Pass ``eigenvectors`` to evaluate the connection of
    a rephased field instead.
    """
    phi = band.smooth_eigenvectors() if eigenvectors is None else eigenvectors
    dphi = spectral_derivative(band.grid, phi)
    raw = 1j * np.einsum("xa,xa->x", np.conj(phi), dphi)
    residue = float(np.abs(raw.imag).max())
    if residue > 1e-10:
        raise ValidationError(
            f"Berry connection imaginary residue {residue:.3e} exceeds 1e-10; "
            "eigenvector field not normalized or not smooth"
        )
    return raw.real


def dipole_elements(band_i: BandData, band_j: BandData, dipole: FiberField) -> np.ndarray:
    """Pointwise matrix element ``D_ij(x) = <phi_i(x), mu(x) phi_j(x)>``."""
    if band_i.grid.n_points != band_j.grid.n_points:
        raise DimensionMismatch("bands on different grids")
    if dipole.dim != band_i.eigenvectors.shape[1]:
        raise DimensionMismatch("dipole dimension does not match eigenvectors")
    if band_i.index == band_j.index:
        raise ValidationError("dipole element requires two distinct bands")
    mu_phi = np.einsum("xab,xb->xa", dipole.matrices, band_j.eigenvectors)
    return np.einsum("xa,xa->x", np.conj(band_i.eigenvectors), mu_phi)


def commutator_dipole_identity(
    band_i: BandData, band_j: BandData, fiber: FiberField, dipole: FiberField
) -> float:
    """Max residual of ``<phi_i,[H_el,mu] phi_j> = (E_i - E_j) D_ij`` on the grid."""
    comm = np.einsum("xab,xbc->xac", fiber.matrices, dipole.matrices)
    comm -= np.einsum("xab,xbc->xac", dipole.matrices, fiber.matrices)
    lhs = np.einsum(
        "xa,xab,xb->x", np.conj(band_i.eigenvectors), comm, band_j.eigenvectors
    )
    rhs = (band_i.energies - band_j.energies) * dipole_elements(band_i, band_j, dipole)
    return float(np.abs(lhs - rhs).max())


def band_table(
    band_i: BandData, band_j: BandData, dipole: FiberField
) -> list[tuple[float, float, float, float, float]]:
    """Rows ``(x, E_j, gap(x), |D_ij|, A_j)`` for CSV export of the upper band."""
    x = band_j.grid.points
    dij = np.abs(dipole_elements(band_i, band_j, dipole))
    aj = berry_connection(band_j)
    return [
        (float(x[k]), float(band_j.energies[k]), float(band_j.gap_profile[k]), float(dij[k]), float(aj[k]))
        for k in range(band_j.grid.n_points)
    ]


# ---------------------------------------------------------------------------
# expression-based model construction (config files and builtin models)
# ---------------------------------------------------------------------------

_EXPR_NAMES = {
    "pi": np.pi,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "tanh": np.tanh,
    "log": np.log,
}


def evaluate_entry(entry, grid: Grid1D) -> np.ndarray:
    """Evaluate a matrix entry (number, expression in x, or tabulated list)."""
    if isinstance(entry, (int, float, complex)):
        return np.full(grid.n_points, complex(entry))
    if isinstance(entry, str):
        namespace = dict(_EXPR_NAMES)
        namespace["x"] = grid.points
        namespace["L"] = grid.length
        try:
            value = eval(entry, {"__builtins__": {}}, namespace)  # noqa: S307
        except Exception as exc:
            raise ValidationError(f"cannot evaluate entry {entry!r}: {exc}") from exc
        return np.broadcast_to(np.asarray(value, dtype=complex), (grid.n_points,)).copy()
    if isinstance(entry, (list, tuple, np.ndarray)):
        arr = np.asarray(entry, dtype=complex)
        if arr.shape != (grid.n_points,):
            raise ValidationError(
                f"tabulated entry has length {arr.shape}, expected ({grid.n_points},)"
            )
        return arr
    raise ValidationError(f"unsupported matrix entry type {type(entry).__name__}")


def field_from_entries(entries, grid: Grid1D) -> FiberField:
    """Build a FiberField from a d x d nested list of entries."""
    d = len(entries)
    mats = np.zeros((grid.n_points, d, d), dtype=complex)
    for a, row in enumerate(entries):
        if len(row) != d:
            raise ValidationError("fiber matrix must be square")
        for b, entry in enumerate(row):
            mats[:, a, b] = evaluate_entry(entry, grid)
    return FiberField(grid, mats)


def model_from_dict(data: dict) -> ModelSpec:
    """Construct a ModelSpec from a parsed configuration mapping."""
    try:
        gdata = data["grid"]
        grid = Grid1D(int(gdata["n_points"]), float(gdata["length"]))
        fiber = field_from_entries(data["fiber_hamiltonian"], grid)
        dipole = field_from_entries(data["dipole_operator"], grid)
        pair = data.get("band_pair", [0, 1])
        return ModelSpec(
            grid=grid,
            fiber=fiber,
            dipole=dipole,
            uv_cutoff=float(data["uv_cutoff"]),
            band_lower=int(pair[0]),
            band_upper=int(pair[1]),
            name=str(data.get("name", "model")),
        )
    except KeyError as exc:
        raise ValidationError(f"model configuration missing key: {exc}") from exc


# ---------------------------------------------------------------------------
# builtin model library
# ---------------------------------------------------------------------------


def constant_two_level(
    n_points: int = 64,
    length: float = 2.0 * math.pi,
    e_lower: float = 0.0,
    e_upper: float = 1.0,
    uv_cutoff: float = 3.0,
    dipole_strength: float = 1.0,
) -> ModelSpec:
    """x-independent diagonal two-level model with an off-diagonal dipole."""
    grid = Grid1D(n_points, length)
    n = grid.n_points
    fiber = FiberField(grid, np.broadcast_to(np.diag([e_lower, e_upper]).astype(complex), (n, 2, 2)).copy())
    dip = dipole_strength * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    dipole = FiberField(grid, np.broadcast_to(dip, (n, 2, 2)).copy())
    return ModelSpec(grid, fiber, dipole, uv_cutoff, 0, 1, name="constant-two-level")


def rotation_two_level(
    n_points: int = 128,
    length: float = 2.0 * math.pi,
    winding: int = 1,
    uv_cutoff: float = 6.0,
) -> ModelSpec:
    """Two-level model whose eigenvectors rotate with angle ``theta = winding * 2 pi x / L``."""
    grid = Grid1D(n_points, length)
    theta = winding * 2.0 * np.pi * grid.points / grid.length
    mats = np.zeros((grid.n_points, 2, 2), dtype=complex)
    mats[:, 0, 0] = -np.cos(theta)
    mats[:, 0, 1] = np.sin(theta)
    mats[:, 1, 0] = np.sin(theta)
    mats[:, 1, 1] = np.cos(theta)
    fiber = FiberField(grid, mats)
    dip = np.broadcast_to(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex), (grid.n_points, 2, 2)).copy()
    return ModelSpec(grid, fiber, FiberField(grid, dip), uv_cutoff, 0, 1, name="rotation-two-level")


def modulated_two_level(
    n_points: int = 256,
    length: float = 2.0 * math.pi,
    gap_modulation: float = 0.15,
    mixing_amplitude: float = 0.7,
    uv_cutoff: float = 6.0,
) -> ModelSpec:
    """Smooth two-band model with x-dependent gap and dipole element.

    ``H_el(x) = e(x) (sin theta(x) sigma_x - cos theta(x) sigma_z)`` with
    ``e(x) = 1 + gap_modulation cos(2 pi x / L)`` and
    ``theta(x) = mixing_amplitude sin(2 pi x / L)``; the band difference is
    ``2 e(x)`` and, for a sigma_x dipole, ``|D_01(x)| = |cos theta(x)|``.
    """
    grid = Grid1D(n_points, length)
    xi = 2.0 * np.pi * grid.points / grid.length
    e = 1.0 + gap_modulation * np.cos(xi)
    theta = mixing_amplitude * np.sin(xi)
    mats = np.zeros((grid.n_points, 2, 2), dtype=complex)
    mats[:, 0, 0] = -e * np.cos(theta)
    mats[:, 0, 1] = e * np.sin(theta)
    mats[:, 1, 0] = e * np.sin(theta)
    mats[:, 1, 1] = e * np.cos(theta)
    fiber = FiberField(grid, mats)
    dip = np.broadcast_to(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex), (grid.n_points, 2, 2)).copy()
    return ModelSpec(grid, fiber, FiberField(grid, dip), uv_cutoff, 0, 1, name="modulated-two-level")


BUILTIN_MODELS = {
    "constant-two-level": constant_two_level,
    "rotation-two-level": rotation_two_level,
    "modulated-two-level": modulated_two_level,
}
