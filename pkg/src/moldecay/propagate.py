"""Time evolution of molecular states.

Three generators are covered: the full operator ``eps^2 p^2 + H_el(x)``
(Strang-split spectral stepping), its band-diagonal part (Krylov stepping,
exactly block-preserving), and the effective nuclear operator
``eps^2 (-i d/dx + A)^2 + E_j(x)`` obtained from a single band.  All
evolutions are evaluated at microscopic time ``t / eps`` for macroscopic t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    BudgetExceeded,
    KrylovBreakdown,
    ProjectorMismatch,
    StepSizeTooLarge,
    ValidationError,
)
from .fitting import ScalingReport, fit_scaling_floored
from .models import BandData, FiberField, Grid1D, ModelSpec, berry_connection, diagonalize_band
from .util import rng_for


DEFAULT_STEP_DENOMINATOR = 4096  # default macroscopic step: t * eps / 4096


@dataclass
class MolecularState:
    """Complex amplitude array over (nuclear grid x electronic level)."""

    grid: Grid1D
    amplitudes: np.ndarray  # (n, d)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 2 or amps.shape[0] != self.grid.n_points:
            raise ValidationError(f"expected (n_points, d) amplitudes, got {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise ValidationError("state contains non-finite amplitudes")
        self.amplitudes = amps

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "MolecularState":
        return MolecularState(self.grid, self.amplitudes / self.norm)

    def copy(self) -> "MolecularState":
        return MolecularState(self.grid, self.amplitudes.copy())


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.vdot(a, b))


class MolecularOperator:
    """Discretized ``eps^2 p^2 + H_el(x)`` with spectral kinetic action."""

    def __init__(self, fiber: FiberField, eps: float):
        if not 0.0 < eps < 1.0:
            raise ValidationError(f"eps must lie in (0, 1), got {eps}")
        self.fiber = fiber
        self.eps = eps
        self.grid = fiber.grid
        self.kinetic_symbol = (eps * fiber.grid.wavenumbers) ** 2
        self._eig = None

    @property
    def dim(self) -> int:
        return self.fiber.dim

    def apply(self, psi: np.ndarray) -> np.ndarray:
        kin = np.fft.ifft(self.kinetic_symbol[:, None] * np.fft.fft(psi, axis=0), axis=0)
        return kin + kernels.apply_fiber(self.fiber.matrices, psi)

    def fiber_eigensystem(self):
        if self._eig is None:
            w, v = np.linalg.eigh(self.fiber.matrices)
            self._eig = (w, v)
        return self._eig

    def potential_propagator(self, dtau: float) -> np.ndarray:
        """Per-point unitary ``exp(-i dtau H_el(x))`` as an (n, d, d) field."""
        w, v = self.fiber_eigensystem()
        phase = np.exp(-1j * dtau * w)
        return np.einsum("xab,xb,xcb->xac", v, phase, np.conj(v))

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, self.apply(psi))))


def build_molecular_hamiltonian(spec: ModelSpec, eps: float) -> MolecularOperator:
    return MolecularOperator(spec.fiber, eps)


class DiagonalMolecularOperator:
    """Band-diagonal part ``P H P + (1-P) H (1-P)`` of a molecular operator."""

    def __init__(self, base: MolecularOperator, projector: FiberField):
        if projector.grid.n_points != base.grid.n_points or projector.dim != base.dim:
            raise ProjectorMismatch("projector grid/dimension does not match operator")
        idem = np.abs(
            np.einsum("xab,xbc->xac", projector.matrices, projector.matrices) - projector.matrices
        ).max()
        if idem > 1e-10:
            raise ProjectorMismatch(f"projector idempotency defect {idem:.3e} exceeds 1e-10")
        comm = np.einsum("xab,xbc->xac", base.fiber.matrices, projector.matrices)
        comm -= np.einsum("xab,xbc->xac", projector.matrices, base.fiber.matrices)
        scale = max(1.0, float(np.abs(base.fiber.matrices).max()))
        if np.abs(comm).max() > 1e-10 * scale:
            raise ProjectorMismatch("projector does not commute with the fiber Hamiltonian")
        self.base = base
        self.projector = projector
        self.grid = base.grid
        self.eps = base.eps
        self.dim = base.dim

    def _project(self, psi: np.ndarray) -> np.ndarray:
        return kernels.apply_fiber(self.projector.matrices, psi)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        p_psi = self._project(psi)
        q_psi = psi - p_psi
        h_p = self.base.apply(p_psi)
        h_q = self.base.apply(q_psi)
        return self._project(h_p) + (h_q - self._project(h_q))


def build_diagonal_hamiltonian(
    base: MolecularOperator, projector: FiberField
) -> DiagonalMolecularOperator:
    return DiagonalMolecularOperator(base, projector)


class NuclearOperator:
    """Effective nuclear operator ``eps^2 (-i d/dx + A(x))^2 + E(x)``."""

    def __init__(self, grid: Grid1D, eps: float, connection: np.ndarray, potential: np.ndarray):
        self.grid = grid
        self.eps = eps
        self.connection = np.asarray(connection, dtype=float)
        self.potential = np.asarray(potential, dtype=float)
        self.dim = 1

    def _covariant(self, phi: np.ndarray) -> np.ndarray:
        # With A = i<phi, phi'> in the conjugate-linear-first inner product,
        # the gauge-covariant derivative on the nuclear factor is (-i d/dx - A).
        k = self.grid.wavenumbers
        dphi = np.fft.ifft((1j * k) * np.fft.fft(phi))
        return -1j * dphi - self.connection * phi

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return self.eps**2 * self._covariant(self._covariant(phi)) + self.potential * phi

    def lowest_eigenvalues(self, k: int = 10) -> np.ndarray:
        from scipy.sparse.linalg import LinearOperator, eigsh

        n = self.grid.n_points
        op = LinearOperator(
            (n, n), matvec=lambda v: self.apply(v.astype(complex)), dtype=complex
        )
        vals = eigsh(op, k=k, which="SA", return_eigenvectors=False, tol=1e-12)
        return np.sort(vals)


def build_bo_effective(
    band: BandData, eps: float, eigenvectors: np.ndarray | None = None
) -> NuclearOperator:
    """Effective Born-Oppenheimer operator for one band.

    The connection is computed in the holonomy-distributed smooth gauge (or
    from an explicitly supplied eigenvector field); the spectrum is invariant
    under smooth rephasings of the band.
    """
    conn = berry_connection(band, eigenvectors=eigenvectors)
    return NuclearOperator(band.grid, eps, conn, band.energies)


# ---------------------------------------------------------------------------
# Strang-split propagation for the full molecular operator
# ---------------------------------------------------------------------------


def _strang_run(op: MolecularOperator, psi: np.ndarray, tau: float, n_steps: int) -> np.ndarray:
    dtau = tau / n_steps
    half_v = op.potential_propagator(dtau / 2.0)
    kin_phase = np.exp(-1j * dtau * op.kinetic_symbol)[:, None]
    out = psi.copy()
    for _ in range(n_steps):
        out = kernels.apply_fiber(half_v, out)
        out = np.fft.ifft(kin_phase * np.fft.fft(out, axis=0), axis=0)
        out = kernels.apply_fiber(half_v, out)
    return out


def propagate_full(
    op: MolecularOperator,
    state: MolecularState,
    t: float,
    dt: float | None = None,
    tol: float = 1e-8,
    self_check: bool = True,
    max_halvings: int = 6,
) -> MolecularState:
    """Evolve by ``exp(-i (t/eps) H)`` with second-order Strang splitting.

    ``dt`` is the macroscopic step (default ``t * eps / 4096``); with
    ``self_check`` the step is halved until the final state moves by less
    than ``tol``, raising :class:`StepSizeTooLarge` if that never happens.
    """
    if t == 0.0:
        return state.copy()
    tau = t / op.eps
    if dt is None:
        dt = abs(t) * op.eps / DEFAULT_STEP_DENOMINATOR
    n_steps = max(1, int(round(abs(t) / dt)))
    current = _strang_run(op, state.amplitudes, tau, n_steps)
    if not self_check:
        return MolecularState(op.grid, current)
    for _ in range(max_halvings):
        n_steps *= 2
        finer = _strang_run(op, state.amplitudes, tau, n_steps)
        if np.linalg.norm(finer - current) < tol:
            return MolecularState(op.grid, finer)
        current = finer
    raise StepSizeTooLarge(
        f"Strang self-check did not reach {tol:g} after {max_halvings} halvings"
    )


# ---------------------------------------------------------------------------
# Krylov (Lanczos) propagation for generic Hermitian operators
# ---------------------------------------------------------------------------


def lanczos_expm_step(matvec, v: np.ndarray, dtau: float, m: int = 30):
    """One Krylov step of ``exp(-i dtau H) v``; returns (w, error_estimate).

    Uses full reorthogonalization; a happy breakdown (invariant subspace)
    yields an exact result and zero error estimate.
    """
    from scipy.linalg import expm

    norm_v = np.linalg.norm(v.ravel())
    if norm_v == 0.0:
        return v.copy(), 0.0
    shape = v.shape
    basis = [v.ravel() / norm_v]
    alphas: list[float] = []
    betas: list[float] = []
    breakdown = False
    for j in range(m):
        w = matvec(basis[j].reshape(shape)).ravel()
        alphas.append(float(np.real(np.vdot(basis[j], w))))
        w = w - alphas[j] * basis[j]
        if j > 0:
            w = w - betas[j - 1] * basis[j - 1]
        for q in basis:  # full reorthogonalization
            w = w - np.vdot(q, w) * q
        beta = float(np.linalg.norm(w))
        if beta < 1e-14 * max(1.0, abs(alphas[j])):
            breakdown = True
            break
        betas.append(beta)
        basis.append(w / beta)
    k = len(alphas)
    tmat = np.diag(alphas).astype(complex)
    for j in range(k - 1):
        tmat[j, j + 1] = betas[j]
        tmat[j + 1, j] = betas[j]
    phi = expm(-1j * dtau * tmat)[:, 0]
    out = np.zeros_like(basis[0])
    for j in range(k):
        out += phi[j] * basis[j]
    err = 0.0 if breakdown or k < len(betas) + 1 else float(abs(betas[-1] * phi[-1]) * abs(dtau))
    if not breakdown and k == m:
        err = float(abs(betas[-1]) * abs(phi[-1]))
    return (norm_v * out).reshape(shape), err


def propagate_krylov(
    matvec,
    v: np.ndarray,
    tau: float,
    tol: float = 1e-8,
    m: int = 30,
    max_halvings: int = 40,
) -> np.ndarray:
    """Evolve ``exp(-i tau H) v`` with adaptive Lanczos substeps."""
    if tau == 0.0:
        return v.copy()
    remaining = tau
    step = tau
    out = v.copy()
    halvings = 0
    while abs(remaining) > 1e-15 * abs(tau):
        step = remaining if abs(step) > abs(remaining) else step
        candidate, err = lanczos_expm_step(matvec, out, step, m=m)
        budget = tol * abs(step) / abs(tau)
        if err > budget:
            step /= 2.0
            halvings += 1
            if halvings > max_halvings:
                raise KrylovBreakdown(
                    f"Krylov step error {err:.2e} above budget after {max_halvings} halvings"
                )
            continue
        out = candidate
        remaining -= step
        if err < 0.1 * budget:
            step *= 1.5
    return out


def propagate_diagonal(
    op: DiagonalMolecularOperator, state: MolecularState, t: float, tol: float = 1e-9
) -> MolecularState:
    tau = t / op.eps
    return MolecularState(op.grid, propagate_krylov(op.apply, state.amplitudes, tau, tol=tol))


def propagate_bo(op: NuclearOperator, phi: np.ndarray, t: float, tol: float = 1e-9) -> np.ndarray:
    tau = t / op.eps
    return propagate_krylov(op.apply, phi, tau, tol=tol)


# ---------------------------------------------------------------------------
# state preparation
# ---------------------------------------------------------------------------


def gaussian_wavepacket(
    grid: Grid1D, center: float, sigma: float, momentum: float
) -> np.ndarray:
    """Normalized periodic Gaussian packet with grid-commensurate momentum."""
    x = grid.points
    delta = x - center
    delta -= grid.length * np.round(delta / grid.length)
    k_unit = 2.0 * np.pi / grid.length
    k0 = k_unit * round(momentum / k_unit)
    packet = np.exp(-(delta**2) / (4.0 * sigma**2)) * np.exp(1j * k0 * x)
    return packet / np.linalg.norm(packet)


def band_wavepacket(
    band: BandData, center: float, sigma: float, momentum: float
) -> MolecularState:
    """Product state ``phi(x) phi_band(x)`` in the smooth periodic gauge."""
    phi = gaussian_wavepacket(band.grid, center, sigma, momentum)
    amps = phi[:, None] * band.smooth_eigenvectors()
    state = MolecularState(band.grid, amps)
    return state.normalized()


def random_band_limited_batch(
    grid: Grid1D, d: int, k_max: float, size: int, rng, band: BandData | None = None
) -> list[np.ndarray]:
    """Random normalized states supported on wavenumbers ``|k| <= k_max``."""
    k = grid.wavenumbers
    mask = np.abs(k) <= k_max
    batch = []
    for _ in range(size):
        coeffs = np.zeros((grid.n_points, d), dtype=complex)
        live = int(mask.sum())
        coeffs[mask, :] = rng.standard_normal((live, d)) + 1j * rng.standard_normal((live, d))
        psi = np.fft.ifft(coeffs, axis=0)
        if band is not None:
            psi = kernels.apply_fiber(band.projector.matrices, psi)
        nrm = np.linalg.norm(psi)
        if nrm == 0.0:
            continue
        batch.append(psi / nrm)
    return batch


def random_momentum_shell_batch(
    grid: Grid1D, d: int, k_center: float, k_width: float, size: int, rng
) -> list[np.ndarray]:
    """Random states concentrated on ``|k| in [k_center - w, k_center + w]``."""
    k = grid.wavenumbers
    mask = (np.abs(k) >= k_center - k_width) & (np.abs(k) <= k_center + k_width)
    if not mask.any():
        raise ValidationError("momentum shell contains no grid wavenumbers")
    batch = []
    for _ in range(size):
        coeffs = np.zeros((grid.n_points, d), dtype=complex)
        live = int(mask.sum())
        coeffs[mask, :] = rng.standard_normal((live, d)) + 1j * rng.standard_normal((live, d))
        psi = np.fft.ifft(coeffs, axis=0)
        batch.append(psi / np.linalg.norm(psi))
    return batch


def batch_sup_norm(apply, batch) -> float:
    """Lower bound for an operator norm: sup of ||A psi|| over a state batch."""
    best = 0.0
    for psi in batch:
        best = max(best, float(np.linalg.norm(apply(psi))))
    return best


# ---------------------------------------------------------------------------
# dense cross-checks
# ---------------------------------------------------------------------------

DENSE_DIM_LIMIT = 4096


def dense_matrix(apply, shape_dim: int, template: np.ndarray) -> np.ndarray:
    """Materialize a linear operator by applying it to identity columns."""
    if shape_dim > DENSE_DIM_LIMIT:
        raise BudgetExceeded(f"dense materialization of dimension {shape_dim} refused")
    cols = np.eye(shape_dim, dtype=complex)
    out = np.empty((shape_dim, shape_dim), dtype=complex)
    for idx in range(shape_dim):
        out[:, idx] = apply(cols[:, idx].reshape(template.shape)).ravel()
    return out


def dense_molecular_matrix(op: MolecularOperator | DiagonalMolecularOperator) -> np.ndarray:
    n, d = op.grid.n_points, op.dim
    template = np.zeros((n, d), dtype=complex)
    return dense_matrix(op.apply, n * d, template)


def low_energy_filter(op: MolecularOperator, energy: float) -> np.ndarray:
    """Dense spectral projector onto ``H <= energy`` (small grids only)."""
    h = dense_molecular_matrix(op)
    w, v = np.linalg.eigh(h)
    keep = w <= energy
    return (v[:, keep] @ np.conj(v[:, keep].T)).astype(complex)


def graph_weighted_deviation(op: MolecularOperator, a: np.ndarray, b: np.ndarray):
    """Plain and first-graph-norm deviations between two states.

    Experimental: the graph-weighted variant mimics measuring errors in the
    domain norm of the generator; it is provided for exploration and is not
    validated against any acceptance target.
    """
    diff = a - b
    plain = float(np.linalg.norm(diff))
    graph = plain + float(np.linalg.norm(op.apply(diff)))
    return plain, graph


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def band_shell_batch(
    band: BandData, k_center: float, k_width: float, size: int, rng
) -> list[MolecularState]:
    """Random band states with nuclear momentum in a one-sided shell."""
    grid = band.grid
    k = grid.wavenumbers
    mask = (k >= k_center - k_width) & (k <= k_center + k_width)
    if not mask.any():
        raise ValidationError("momentum shell contains no grid wavenumbers")
    smooth = band.smooth_eigenvectors()
    batch = []
    for _ in range(size):
        coeffs = np.zeros(grid.n_points, dtype=complex)
        live = int(mask.sum())
        coeffs[mask] = rng.standard_normal(live) + 1j * rng.standard_normal(live)
        envelope = np.fft.ifft(coeffs)
        amps = envelope[:, None] * smooth
        batch.append(MolecularState(grid, amps).normalized())
    return batch


def adiabatic_error_scan(
    spec: ModelSpec,
    t: float,
    eps_ladder,
    velocity: float = 1.0,
    band_index: int | None = None,
    seed: int = 0,
    batch_size: int = 16,
    step_denominator: int = 2048,
    self_check_first: bool = True,
) -> ScalingReport:
    """Ladder of ``sup_batch ||(U_full - U_diag) psi||`` against eps.

    The batch momentum shell is centered at ``velocity / eps`` so the nuclear
    kinetic energy stays of order one along the ladder; the sup over a fixed
    randomized batch washes out the oscillatory phase of the band-tilt terms.
    """
    band_index = spec.band_upper if band_index is None else band_index
    band = diagonalize_band(spec.fiber, band_index)
    rng = rng_for(seed, "adiabatic-error-scan")
    points = []
    first = True
    for eps in sorted(eps_ladder, reverse=True):
        op = MolecularOperator(spec.fiber, eps)
        diag = DiagonalMolecularOperator(op, band.projector)
        k_center = velocity / eps
        if k_center + 4.0 > np.abs(spec.grid.wavenumbers).max():
            raise ValidationError(
                f"grid too coarse for momentum {k_center:g} at eps={eps:g}"
            )
        batch = band_shell_batch(band, k_center, 4.0, batch_size, rng)
        dt = t * eps / step_denominator
        worst = 0.0
        for psi0 in batch:
            full = propagate_full(op, psi0, t, dt=dt, self_check=self_check_first and first)
            first = False
            diag_final = propagate_diagonal(diag, psi0, t)
            worst = max(worst, float(np.linalg.norm(full.amplitudes - diag_final.amplitudes)))
        points.append((eps, worst))
    return fit_scaling_floored(points)


def bo_vs_diagonal_check(
    band: BandData,
    t: float,
    eps: float,
    sigma: float | None = None,
    velocity: float = 1.0,
) -> float:
    """Deviation between band-diagonal evolution and the effective nuclear one."""
    grid = band.grid
    sigma = grid.length / 16.0 if sigma is None else sigma
    phi0 = gaussian_wavepacket(grid, grid.length / 2.0, sigma, velocity / eps)
    smooth = band.smooth_eigenvectors()
    psi0 = MolecularState(grid, phi0[:, None] * smooth).normalized()
    phi0 = phi0 / np.linalg.norm(phi0)

    op = MolecularOperator(band.source, eps)
    diag = DiagonalMolecularOperator(op, band.projector)
    evolved = propagate_diagonal(diag, psi0, t)

    h_eff = build_bo_effective(band, eps)
    phi_t = propagate_bo(h_eff, phi0, t)
    reconstructed = phi_t[:, None] * smooth
    return float(np.linalg.norm(evolved.amplitudes - reconstructed))
