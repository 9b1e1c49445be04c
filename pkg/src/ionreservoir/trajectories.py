"""Pure-state realizations of the fluctuating trap and their ensemble average.

A realization evolves c_g|g>|phi_g> + c_e|e>|phi_e> under

    H = H_0 + sqrt(2 kappa) X^2 dW/dt,    dW ~ Normal(0, dt),

where H_0 is block diagonal with the level-conditioned Hamiltonians of
:func:`model.effective_hamiltonian`. With the ``ito-noise`` preset the noise
amplitude sqrt(2 kappa) equals sqrt(gamma) * omega. One step is the
Strang splitting

    exp(-i H_0 dt/2) exp(-i sqrt(2 kappa) X^2 dW) exp(-i H_0 dt/2),

each factor exact (the noise factor is diagonal in the eigenbasis of
X^2), so every realization is unitary and the ensemble mean of a step
equals the second-order splitting of the averaged dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .analytic import rabi_amplitudes
from .fock import FockSpace, coherent_state
from .master import IntegrationError
from .model import SystemParams, dissipator_strength, effective_hamiltonian

NORM_TOL = 1e-8
CHUNK = 250


@dataclass(frozen=True)
class NoiseRealization:
    seed: int
    dt: float
    increments: np.ndarray

    def coarsen(self, factor: int) -> NoiseRealization:
        """Sum consecutive groups of ``factor`` increments (same Brownian path)."""
        if factor < 1 or len(self.increments) % factor:
            raise ValueError(f"cannot coarsen {len(self.increments)} increments by {factor}")
        inc = self.increments.reshape(-1, factor).sum(axis=1)
        return NoiseRealization(self.seed, self.dt * factor, inc)

    def path(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def wiener(seed: int, dt: float, steps: int) -> NoiseRealization:
    """``steps`` independent Normal(0, dt) increments from a Philox stream."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return NoiseRealization(int(seed), float(dt), rng.normal(0.0, math.sqrt(dt), int(steps)))


class SplitStepper:
    """Precomputed Strang factors for one (params, dt) pair.

    States are held in the eigenbasis of X^2 with shape ``(2, dim, ...)``;
    index 0 is the |g> component, 1 the |e> component.
    """

    def __init__(self, params: SystemParams, dt: float, space: FockSpace | None = None):
        space = space or params.space
        self.space = space
        self.dt = float(dt)
        self.kappa = dissipator_strength(params)
        self.amplitude = math.sqrt(2.0 * self.kappa)
        self.lam, self.V = np.linalg.eigh(space.X2)
        self.V = self.V.astype(complex)
        h_g, h_e = effective_hamiltonian(params, space)
        vh = self.V.conj().T
        self.half = np.stack([vh @ expm(-0.5j * h * self.dt) @ self.V for h in (h_g, h_e)])

    def to_eigen(self, psi: np.ndarray) -> np.ndarray:
        return np.einsum("ij,sj...->si...", self.V.conj().T, psi)

    def to_fock(self, phi: np.ndarray) -> np.ndarray:
        return np.einsum("ij,sj...->si...", self.V, phi)

    def noise_phase(self, dW) -> np.ndarray:
        dW = np.asarray(dW, dtype=float)
        return np.exp(-1j * self.amplitude * np.multiply.outer(self.lam, dW))

    def step(self, phi: np.ndarray, dW) -> np.ndarray:
        # phi: (2, dim) or (2, dim, m); dW: scalar or (m,)
        phase = self.noise_phase(dW)
        out = np.empty_like(phi)
        for s in (0, 1):
            out[s] = self.half[s] @ (phase * (self.half[s] @ phi[s]))
        return out


def step_trajectory(state: np.ndarray, dW: float, dt: float, params: SystemParams, stepper: SplitStepper | None = None) -> np.ndarray:
    """Advance one realization by ``dt`` given its Wiener increment.

    ``state`` has shape ``(2, dim)`` in the Fock basis. Raises
    :class:`IntegrationError` if the norm moves by more than 1e-8.
    """
    state = np.asarray(state, dtype=complex)
    if stepper is None or stepper.dt != dt:
        stepper = SplitStepper(params, dt, FockSpace(state.shape[1]))
    before = np.linalg.norm(state)
    new = stepper.to_fock(stepper.step(stepper.to_eigen(state), dW))
    drift = abs(np.linalg.norm(new) - before)
    if drift > NORM_TOL:
        raise IntegrationError(f"norm drift {drift:.3g} in one step")
    return new


def initial_state(params: SystemParams, space: FockSpace | None = None) -> np.ndarray:
    space = space or params.space
    return np.stack(
        [params.c_g * coherent_state(params.alpha_g, space), params.c_e * coherent_state(params.alpha_e, space)]
    )


@dataclass
class EnsembleResult:
    times: np.ndarray
    coherence: np.ndarray  # mean Tr_motion <g|rho|e>, complex
    R: np.ndarray
    R_stderr: np.ndarray
    traces: np.ndarray  # mean traces of gg, ge, eg, ee, shape (T, 4)
    traces_stderr: np.ndarray
    samples: np.ndarray  # per-trajectory coherence, shape (n_traj, T)
    mean_blocks: np.ndarray | None
    n_traj: int
    base_seed: int
    dt: float
    max_norm_drift: float
    meta: dict = field(default_factory=dict)


def _uniform_step(times):
    diffs = np.diff(times)
    if diffs.size == 0 or np.any(diffs <= 0):
        raise ValueError("t_grid must be strictly increasing with at least two points")
    if np.max(np.abs(diffs - diffs[0])) > 1e-9 * max(1.0, abs(diffs[0])):
        raise ValueError("run_ensemble needs a uniform time grid")
    return float(diffs[0])


def _tree_sum(parts):
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _projected_stderr(samples, mean):
    # delta method for |mean|: spread of the samples along the mean's phase
    n = samples.shape[0]
    if n < 2:
        return np.full(mean.shape, np.nan)
    phase = np.where(np.abs(mean) > 0, np.conj(mean) / np.where(np.abs(mean) > 0, np.abs(mean), 1.0), 1.0)
    proj = np.real(samples * phase)
    return np.std(proj, axis=0, ddof=1) / math.sqrt(n)


def run_ensemble(
    params: SystemParams,
    n_traj: int,
    t_grid,
    base_seed: int = 0,
    substeps: int | None = None,
    noise_substeps: int | None = None,
    keep_blocks: bool = False,
    max_dt: float = 0.02,
) -> EnsembleResult:
    """Average ``n_traj`` realizations; trajectory i uses seed base_seed + i.

    Each grid interval is split into ``substeps`` steps (default: enough
    to keep dt <= ``max_dt``). The Brownian path is sampled with
    ``noise_substeps`` increments per interval and summed down, so runs
    that differ only in ``substeps`` see the same noise.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    times = np.asarray(t_grid, dtype=float)
    interval = _uniform_step(times)
    if substeps is None:
        substeps = max(1, math.ceil(interval / max_dt - 1e-9))
    noise_substeps = noise_substeps or substeps
    if noise_substeps % substeps:
        raise ValueError("noise_substeps must be a multiple of substeps")
    factor = noise_substeps // substeps
    dt = interval / substeps
    n_int = times.size - 1
    space = params.space
    stepper = SplitStepper(params, dt, space)
    psi0 = stepper.to_eigen(initial_state(params, space))
    norm0 = np.linalg.norm(psi0)
    rab = rabi_amplitudes(params, times)
    a1, a2 = np.asarray(rab.alpha1), np.asarray(rab.alpha2)
    weights = np.stack([np.conj(a1) * np.conj(a2), np.conj(a1) ** 2, np.abs(a2) ** 2, np.conj(a1) * a2], axis=-1)

    traces_all = np.empty((n_traj, times.size, 4), complex)
    block_parts = []
    drift = 0.0
    for start in range(0, n_traj, CHUNK):
        seeds = range(base_seed + start, base_seed + min(n_traj, start + CHUNK))
        m = len(seeds)
        if stepper.amplitude:
            inc = np.stack([wiener(s, interval / noise_substeps, n_int * noise_substeps).increments for s in seeds])
            inc = inc.reshape(m, n_int * substeps, factor).sum(axis=2)
        else:
            inc = np.zeros((m, n_int * substeps))
        phi = np.repeat(psi0[:, :, None], m, axis=2)
        blocks = np.zeros((times.size, 4, space.dim, space.dim), complex) if keep_blocks else None
        for i in range(times.size):
            if i:
                for k in range((i - 1) * substeps, i * substeps):
                    phi = stepper.step(phi, inc[:, k])
            norms = np.sqrt(np.sum(np.abs(phi) ** 2, axis=(0, 1)))
            drift = max(drift, float(np.max(np.abs(norms - norm0))))
            if drift > NORM_TOL * max(1, i * substeps):
                raise IntegrationError(f"trajectory norm drift {drift:.3g} at t={times[i]:.6g}")
            g, e = phi[0], phi[1]
            traces_all[start : start + m, i, 0] = np.sum(np.abs(g) ** 2, axis=0)
            traces_all[start : start + m, i, 1] = np.sum(np.conj(e) * g, axis=0)
            traces_all[start : start + m, i, 2] = np.sum(np.conj(g) * e, axis=0)
            traces_all[start : start + m, i, 3] = np.sum(np.abs(e) ** 2, axis=0)
            if keep_blocks:
                fg, fe = stepper.V @ g, stepper.V @ e
                blocks[i, 0] = fg @ fg.conj().T
                blocks[i, 1] = fg @ fe.conj().T
                blocks[i, 2] = fe @ fg.conj().T
                blocks[i, 3] = fe @ fe.conj().T
        if keep_blocks:
            block_parts.append(blocks)

    samples = np.einsum("ntb,tb->nt", traces_all, weights)
    # reduce over trajectories along the contiguous axis (pairwise summation)
    coh = np.ascontiguousarray(samples.T).sum(axis=1) / n_traj
    tr = np.ascontiguousarray(traces_all.transpose(1, 2, 0)).sum(axis=2) / n_traj
    tr_err = (
        np.std(traces_all, axis=0, ddof=1) / math.sqrt(n_traj) if n_traj > 1 else np.full(tr.shape, np.nan)
    )
    mean_blocks = _tree_sum(block_parts) / n_traj if keep_blocks else None
    return EnsembleResult(
        times=times,
        coherence=coh,
        R=np.abs(coh),
        R_stderr=_projected_stderr(samples, coh),
        traces=tr,
        traces_stderr=tr_err,
        samples=samples,
        mean_blocks=mean_blocks,
        n_traj=n_traj,
        base_seed=base_seed,
        dt=dt,
        max_norm_drift=drift,
        meta={"kappa": stepper.kappa, "noise_amplitude": stepper.amplitude, "substeps": substeps, "noise_substeps": noise_substeps},
    )
