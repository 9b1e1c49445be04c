"""Truncated Fock-space linear algebra for a single motional mode.

States are plain complex numpy vectors of length ``dim`` and operators are
dense ``dim x dim`` complex arrays. Quadratures follow the convention

    X = (a + a^dag) / 2,    P = i (a^dag - a) / 2,    [X, P] = i/2,

so that ``P @ P + X @ X`` equals ``a^dag a + 1/2`` away from the top level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

DEFAULT_LEAKAGE_TOL = 1e-6


class TruncationWarning(UserWarning):
    """Emitted when a state has non-negligible weight outside the basis."""


@dataclass(frozen=True)
class FockSpace:
    """Basis |0>, ..., |dim-1> of one harmonic mode."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"Fock dimension must be an integer >= 2, got {self.dim!r}")

    @cached_property
    def a(self) -> np.ndarray:
        return np.diag(np.sqrt(np.arange(1, self.dim, dtype=float)), 1).astype(complex)

    @cached_property
    def adag(self) -> np.ndarray:
        return self.a.conj().T.copy()

    @cached_property
    def number(self) -> np.ndarray:
        return np.diag(np.arange(self.dim, dtype=float)).astype(complex)

    @cached_property
    def X(self) -> np.ndarray:
        return 0.5 * (self.a + self.adag)

    @cached_property
    def P(self) -> np.ndarray:
        return 0.5j * (self.adag - self.a)

    @cached_property
    def X2(self) -> np.ndarray:
        # product of truncated matrices, used consistently by every engine
        return self.X @ self.X

    def basis(self, n: int) -> np.ndarray:
        if not 0 <= n < self.dim:
            raise ValueError(f"level {n} outside basis of size {self.dim}")
        v = np.zeros(self.dim, dtype=complex)
        v[n] = 1.0
        return v


def ladder(space: FockSpace) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(a, a_dagger)`` with <n-1|a|n> = sqrt(n)."""
    return space.a.copy(), space.adag.copy()


def quadratures(space: FockSpace) -> tuple[np.ndarray, np.ndarray]:
    """Return the Hermitian quadratures ``(X, P)``."""
    return space.X.copy(), space.P.copy()


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    # c_n = c_{n-1} * alpha / sqrt(n): no factorials, so no overflow past n = 170
    alpha = complex(alpha)
    c = np.empty(dim, dtype=complex)
    c[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    return c


def coherent_state(alpha: complex, space: FockSpace, leakage_tol: float = DEFAULT_LEAKAGE_TOL) -> np.ndarray:
    """Truncated coherent state |alpha>.

    The amplitudes are not renormalised. When the probability lost to the
    cutoff exceeds ``leakage_tol`` a :class:`TruncationWarning` is issued.
    """
    psi = coherent_amplitudes(alpha, space.dim)
    lost = missing_norm(psi)
    if lost > leakage_tol:
        warnings.warn(
            f"coherent state alpha={alpha} loses {lost:.3g} of its norm at dim={space.dim}",
            TruncationWarning,
            stacklevel=2,
        )
    return psi


def overlap(psi: np.ndarray, phi: np.ndarray) -> complex:
    """<psi|phi>."""
    psi = np.asarray(psi)
    phi = np.asarray(phi)
    if psi.shape != phi.shape:
        raise ValueError(f"states live in different spaces: {psi.shape} vs {phi.shape}")
    return complex(np.vdot(psi, phi))


def coherent_overlap(alpha, beta):
    """Closed form <alpha|beta> = exp(-|alpha|^2/2 - |beta|^2/2 + conj(alpha) beta).

    Broadcasts over numpy arrays.
    """
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    ar, ai, br, bi = alpha.real, alpha.imag, beta.real, beta.imag
    # conj(alpha) beta and the exponential spelled out in real arithmetic so
    # that <alpha|beta> = conj(<beta|alpha>) holds bit for bit
    re = ar * br + ai * bi
    im = ar * bi - ai * br
    mod = np.exp(-0.5 * ((ar * ar + ai * ai) + (br * br + bi * bi)) + re)
    out = mod * np.cos(im) + 1j * (mod * np.sin(im))
    return complex(out) if out.ndim == 0 else out


def truncation_leakage(psi: np.ndarray, tail: int) -> float:
    """Probability held by the top ``tail`` levels of the basis."""
    psi = np.asarray(psi)
    if not 0 < tail < psi.shape[-1]:
        raise ValueError(f"tail must lie in 1..{psi.shape[-1] - 1}, got {tail}")
    return float(np.sum(np.abs(psi[..., -tail:]) ** 2))


def missing_norm(psi: np.ndarray) -> float:
    """1 - <psi|psi>, the weight that fell outside the basis."""
    return float(max(0.0, 1.0 - np.vdot(psi, psi).real))


def expectation(op: np.ndarray, psi: np.ndarray) -> complex:
    return complex(np.vdot(psi, op @ psi))
