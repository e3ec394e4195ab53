"""Hot per-grid-point contractions with a numba and a pure-numpy backend.

Everything here acts on arrays of shape ``(n, d)`` (molecular states),
``(n, d, d)`` (fiber matrix fields) or ``(n, d, s)`` (dressed blocks; column 0
is the vacuum, columns 1..M the one-photon modes).  The numba path is used by
default when numba imports cleanly; set ``MOLDECAY_NUMBA=0`` to force the
numpy fallback.  Both paths are bit-for-bit interchangeable up to floating
point associativity and are cross-checked in the test suite;
``python -m moldecay.bench`` compares their throughput.
"""

from __future__ import annotations

import os

import numpy as np

_FORCED = os.environ.get("MOLDECAY_NUMBA", "").strip()

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_USE_NUMBA = _HAVE_NUMBA and _FORCED not in ("0", "false", "no", "off")


def backend() -> str:
    """Name of the active kernel backend, 'numba' or 'numpy'."""
    return "numba" if _USE_NUMBA else "numpy"


def set_backend(name: str) -> None:
    """Switch backend at runtime ('numba' or 'numpy'); used by tests/bench."""
    global _USE_NUMBA
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    _USE_NUMBA = name == "numba"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------


def _apply_fiber_np(mats, psi):
    return np.einsum("xab,xb->xa", mats, psi)


def _apply_fiber_block_np(mats, block):
    return np.einsum("xab,xbs->xas", mats, block)


def _couple_up_np(cmat, g, vac):
    cv = np.einsum("xab,xb->xa", cmat, vac)
    return cv[:, :, None] * g[None, None, :]


def _couple_down_np(cmat, g, photons):
    weighted = photons @ g
    return np.einsum("xba,xb->xa", np.conj(cmat), weighted)


# ---------------------------------------------------------------------------
# numba implementations (identical contractions, explicit loops)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _apply_fiber_nb(mats, psi):
    n, d = psi.shape
    out = np.zeros((n, d), dtype=np.complex128)
    for x in range(n):
        for a in range(d):
            acc = 0.0 + 0.0j
            for b in range(d):
                acc += mats[x, a, b] * psi[x, b]
            out[x, a] = acc
    return out


@njit(cache=True)
def _apply_fiber_block_nb(mats, block):
    n, d, s = block.shape
    out = np.zeros((n, d, s), dtype=np.complex128)
    for x in range(n):
        for a in range(d):
            for b in range(d):
                m = mats[x, a, b]
                if m != 0.0:
                    for c in range(s):
                        out[x, a, c] += m * block[x, b, c]
    return out


@njit(cache=True)
def _couple_up_nb(cmat, g, vac):
    n, d = vac.shape
    nm = g.shape[0]
    out = np.zeros((n, d, nm), dtype=np.complex128)
    for x in range(n):
        for a in range(d):
            acc = 0.0 + 0.0j
            for b in range(d):
                acc += cmat[x, a, b] * vac[x, b]
            for m in range(nm):
                out[x, a, m] = g[m] * acc
    return out


@njit(cache=True)
def _couple_down_nb(cmat, g, photons):
    n, d, nm = photons.shape
    out = np.zeros((n, d), dtype=np.complex128)
    for x in range(n):
        for b in range(d):
            acc = 0.0 + 0.0j
            for m in range(nm):
                acc += g[m] * photons[x, b, m]
            for a in range(d):
                out[x, a] += np.conj(cmat[x, b, a]) * acc
    return out


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------


def apply_fiber(mats: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Pointwise matrix action ``out[x] = mats[x] @ psi[x]``."""
    if _USE_NUMBA:
        return _apply_fiber_nb(mats, np.ascontiguousarray(psi))
    return _apply_fiber_np(mats, psi)


def apply_fiber_block(mats: np.ndarray, block: np.ndarray) -> np.ndarray:
    """Pointwise matrix action on a dressed block ``(n, d, s)``."""
    if _USE_NUMBA:
        return _apply_fiber_block_nb(mats, np.ascontiguousarray(block))
    return _apply_fiber_block_np(mats, block)


def couple_up(cmat: np.ndarray, g: np.ndarray, vac: np.ndarray) -> np.ndarray:
    """Photon creation: mode m receives ``g[m] * cmat[x] @ vac[x]``."""
    if _USE_NUMBA:
        return _couple_up_nb(cmat, g, np.ascontiguousarray(vac))
    return _couple_up_np(cmat, g, vac)


def couple_down(cmat: np.ndarray, g: np.ndarray, photons: np.ndarray) -> np.ndarray:
    """Photon annihilation: vacuum receives ``sum_m g[m] * cmat[x]^H @ photons[x,:,m]``."""
    if _USE_NUMBA:
        return _couple_down_nb(cmat, g, np.ascontiguousarray(photons))
    return _couple_down_np(cmat, g, photons)
