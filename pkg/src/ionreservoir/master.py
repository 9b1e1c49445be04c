"""Noise-averaged dynamics of the ion as four motional blocks.

The averaged density operator is split by internal level,
rho_ij = <i|rho^a|j> for i, j in {g, e}, and every block obeys

    d rho_ij / dt = -i (H_i rho_ij - rho_ij H_j) - kappa [X^2, [X^2, rho_ij]]

with H_g, H_e from :func:`model.effective_hamiltonian`. ``mode="one-sided"``
swaps the coherent part for the one-sided form +-2 i g P rho (no free
rotation, no coherent part on the diagonal blocks) for comparison runs.

Integration is classical fixed-step RK4. The step is the largest value
with ``dt * max(omega * dim, kappa * dim**2 / 4) <= courant`` that divides
each grid interval evenly. The oscillatory scale sets the accuracy: at
the default courant of 0.25 a noiseless run at dim=64 keeps its purity
to about 2e-9 over twenty trap periods. The dissipative scale only has
to respect RK4 stability, which holds up to roughly ten times the
default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import least_squares

from .analytic import rabi_amplitudes
from .fock import FockSpace, coherent_state
from .model import SystemParams, coupling_g, dissipator_strength, effective_hamiltonian

MODES = ("structured", "one-sided")
RATE_CONVENTIONS = ("derived", "gamma-omega-squared")
DEFAULT_COURANT = 0.25
TRACE_DRIFT_TOL = 1e-6


class IntegrationError(RuntimeError):
    """The fixed-step integration lost trace or produced non-finite values."""


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values)
        if self.times.ndim != 1 or len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


@dataclass
class InternalBlocks:
    gg: np.ndarray
    ge: np.ndarray
    eg: np.ndarray
    ee: np.ndarray
    t: float = 0.0

    def stack(self) -> np.ndarray:
        return np.stack([self.gg, self.ge, self.eg, self.ee])

    @classmethod
    def from_stack(cls, arr: np.ndarray, t: float = 0.0) -> InternalBlocks:
        return cls(arr[0], arr[1], arr[2], arr[3], t)

    def traces(self) -> np.ndarray:
        return np.array([np.trace(b) for b in (self.gg, self.ge, self.eg, self.ee)])

    def full(self) -> np.ndarray:
        """The 2 dim x 2 dim density matrix ordered (g, e)."""
        return np.block([[self.gg, self.ge], [self.eg, self.ee]])

    def purity(self) -> float:
        rho = self.full()
        return float(np.vdot(rho.conj().T, rho).real)

    def invariant_deviations(self) -> dict:
        def herm(m):
            return float(np.max(np.abs(m - m.conj().T)))

        return {
            "trace": abs(complex(np.trace(self.gg) + np.trace(self.ee)) - 1.0),
            "hermiticity": max(herm(self.gg), herm(self.ee)),
            "adjoint": float(np.max(np.abs(self.eg - self.ge.conj().T))),
        }


@dataclass
class BlockSeries:
    """Output of :func:`integrate`: block traces on the grid, blocks optional."""

    times: np.ndarray
    traces: np.ndarray
    blocks: np.ndarray | None
    dt: float
    substeps: np.ndarray
    max_trace_drift: float
    max_top_population: float
    meta: dict = field(default_factory=dict)

    def at(self, i: int) -> InternalBlocks:
        if self.blocks is None:
            raise ValueError("blocks were not kept; integrate with keep_blocks=True")
        return InternalBlocks.from_stack(self.blocks[i], self.times[i])


def initial_blocks(params: SystemParams, space: FockSpace | None = None) -> InternalBlocks:
    """Blocks of c_g|g>|alpha_g> + c_e|e>|alpha_e>."""
    space = space or params.space
    vg = params.c_g * coherent_state(params.alpha_g, space, leakage_tol=1e-6)
    ve = params.c_e * coherent_state(params.alpha_e, space, leakage_tol=1e-6)
    return InternalBlocks(np.outer(vg, vg.conj()), np.outer(vg, ve.conj()), np.outer(ve, vg.conj()), np.outer(ve, ve.conj()))


def fock_blocks(params: SystemParams, n: int, space: FockSpace | None = None) -> InternalBlocks:
    """Blocks of (c_g|g> + c_e|e>) (x) |n>."""
    space = space or params.space
    v = space.basis(n)
    dyad = np.outer(v, v)
    cg, ce = params.c_g, params.c_e
    return InternalBlocks(abs(cg) ** 2 * dyad, cg * np.conj(ce) * dyad, ce * np.conj(cg) * dyad, abs(ce) ** 2 * dyad)


class Liouvillian:
    """Precomputed left/right generators for the stacked blocks [gg, ge, eg, ee]."""

    def __init__(self, params: SystemParams, space: FockSpace | None = None, mode: str = "structured", kappa: float | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        space = space or params.space
        self.space = space
        self.mode = mode
        self.kappa = dissipator_strength(params) if kappa is None else float(kappa)
        L = space.X2
        self.L = L
        damp = self.kappa * (L @ L)
        g = coupling_g(params)
        if mode == "structured":
            free = params.omega * space.number
            drive = 1j * g * (space.adag - space.a)
            h = {"g": free - drive, "e": free + drive}
            k = {s: -1j * h[s] - damp for s in h}
            kh = {s: k[s].conj().T for s in k}
            self.left = np.stack([k["g"], k["g"], k["e"], k["e"]])
            self.right = np.stack([kh["g"], kh["e"], kh["g"], kh["e"]])
        else:
            push = 2j * g * space.P
            self.left = np.stack([-damp, push - damp, -push - damp, -damp])
            self.right = np.stack([-damp] * 4)
        self.scale = {"omega_dim": params.omega * space.dim, "kappa_dim2": 0.25 * self.kappa * space.dim**2}

    def __call__(self, r: np.ndarray) -> np.ndarray:
        out = self.left @ r + r @ self.right
        if self.kappa:
            out += 2.0 * self.kappa * (self.L @ r @ self.L)
        return out

    def stiffness(self) -> float:
        return max(self.scale.values())

    def superoperator(self) -> np.ndarray:
        """Dense generator on column-stacked blocks, shape (4 d^2, 4 d^2)."""
        d = self.space.dim
        eye = np.eye(d)
        blocks = []
        for b in range(4):
            s = np.kron(eye, self.left[b]) + np.kron(self.right[b].T, eye)
            if self.kappa:
                s = s + 2.0 * self.kappa * np.kron(self.L.T, self.L)
            blocks.append(s)
        out = np.zeros((4 * d * d, 4 * d * d), complex)
        for b, s in enumerate(blocks):
            out[b * d * d : (b + 1) * d * d, b * d * d : (b + 1) * d * d] = s
        return out


def rhs(blocks: InternalBlocks, params: SystemParams, mode: str = "structured") -> InternalBlocks:
    """Time derivative of the blocks, written out commutator by commutator.

    This is the readable reference form; :class:`Liouvillian` evaluates the
    same generator in a fused layout for integration.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    space = FockSpace(blocks.gg.shape[0])
    kappa = dissipator_strength(params)
    L = space.X2

    def dissipate(r):
        inner = L @ r - r @ L
        return -kappa * (L @ inner - inner @ L)

    if mode == "structured":
        h_g, h_e = effective_hamiltonian(params, space)
        h = {"g": h_g, "e": h_e}
        out = {}
        for name in ("gg", "ge", "eg", "ee"):
            r = getattr(blocks, name)
            out[name] = -1j * (h[name[0]] @ r - r @ h[name[1]]) + dissipate(r)
    else:
        push = 2j * coupling_g(params) * space.P
        out = {
            "gg": dissipate(blocks.gg),
            "ge": push @ blocks.ge + dissipate(blocks.ge),
            "eg": -push @ blocks.eg + dissipate(blocks.eg),
            "ee": dissipate(blocks.ee),
        }
    return InternalBlocks(out["gg"], out["ge"], out["eg"], out["ee"], blocks.t)


def max_step(params: SystemParams, courant: float = DEFAULT_COURANT, space: FockSpace | None = None) -> float:
    """Largest RK4 step allowed by the courant rule."""
    space = space or params.space
    scale = max(params.omega * space.dim, 0.25 * dissipator_strength(params) * space.dim**2)
    return courant / scale


def _rk4(gen, r, dt, n):
    for _ in range(n):
        k1 = gen(r)
        k2 = gen(r + 0.5 * dt * k1)
        k3 = gen(r + 0.5 * dt * k2)
        k4 = gen(r + dt * k3)
        r = r + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return r


def integrate(
    initial: InternalBlocks,
    t_grid,
    params: SystemParams,
    mode: str = "structured",
    courant: float = DEFAULT_COURANT,
    keep_blocks: bool = True,
    top_levels: int = 4,
) -> BlockSeries:
    """Propagate the blocks from ``t_grid[0]`` through every grid time.

    Invariants are checked after each grid interval; nothing is
    renormalised. Trace drift above 1e-6 raises :class:`IntegrationError`.
    """
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D array")
    space = FockSpace(initial.gg.shape[0])
    gen = Liouvillian(params, space, mode)
    dt_max = courant / gen.stiffness()
    r = initial.stack().astype(complex)
    tr0 = complex(np.trace(r[0]) + np.trace(r[3]))
    traces = np.empty((times.size, 4), complex)
    kept = np.empty((times.size,) + r.shape, complex) if keep_blocks else None
    substeps = np.zeros(times.size, int)
    drift = 0.0
    top = 0.0

    def record(i):
        nonlocal drift, top
        tr = np.trace(r, axis1=1, axis2=2)
        traces[i] = tr
        if kept is not None:
            kept[i] = r
        if not np.all(np.isfinite(tr)):
            raise IntegrationError(f"non-finite blocks at t={times[i]:.6g}")
        drift = max(drift, abs(complex(tr[0] + tr[3]) - tr0))
        if drift > TRACE_DRIFT_TOL:
            raise IntegrationError(f"trace drift {drift:.3g} at t={times[i]:.6g}; reduce courant (now {courant})")
        pops = (np.diagonal(r[0]) + np.diagonal(r[3])).real
        top = max(top, float(np.sum(pops[-top_levels:])))

    record(0)
    dt_used = 0.0
    for i in range(1, times.size):
        span = times[i] - times[i - 1]
        n = max(1, math.ceil(span / dt_max - 1e-9))
        dt = span / n
        dt_used = max(dt_used, dt)
        r = _rk4(gen, r, dt, n)
        substeps[i] = n
        record(i)
    meta = {"mode": mode, "kappa": gen.kappa, "dissipator_preset": params.dissipator_preset, "courant": courant}
    return BlockSeries(times, traces, kept, dt_used, substeps, drift, top, meta)


def liouvillian_oracle(initial: InternalBlocks, t: float, params: SystemParams, mode: str = "structured") -> InternalBlocks:
    """Blocks at time ``t`` from the exponential of the dense superoperator."""
    space = FockSpace(initial.gg.shape[0])
    gen = Liouvillian(params, space, mode)
    d = space.dim
    vec = np.concatenate([b.flatten(order="F") for b in initial.stack()])
    out = expm(gen.superoperator() * t) @ vec
    arr = np.stack([out[b * d * d : (b + 1) * d * d].reshape((d, d), order="F") for b in range(4)])
    return InternalBlocks.from_stack(arr, t)


def _weights(params, t):
    r = rabi_amplitudes(params, t)
    a1, a2 = np.asarray(r.alpha1), np.asarray(r.alpha2)
    return np.stack([np.conj(a1) * np.conj(a2), np.conj(a1) ** 2, np.abs(a2) ** 2, np.conj(a1) * a2], axis=-1)


def lab_coherence(series: BlockSeries, params: SystemParams, operator_valued: bool = False):
    """<g|rho|e> after undoing the rotating frame.

    Returns a complex :class:`TimeSeries` of Tr_motion <g|rho|e>; with
    ``operator_valued=True`` also the motional operator itself, shape
    ``(n_times, dim, dim)``.
    """
    w = _weights(params, series.times)
    values = np.sum(w * series.traces, axis=-1)
    ts = TimeSeries(series.times, values, dict(series.meta))
    if not operator_valued:
        return ts
    if series.blocks is None:
        raise ValueError("operator-valued coherence needs blocks; integrate with keep_blocks=True")
    op = np.einsum("tb,tbij->tij", w, series.blocks)
    return ts, op


def decay_rate_constant(params: SystemParams, convention: str = "derived") -> float:
    """Prefactor r in the Fock-state rate r (n^2 + n + 1)."""
    if convention == "derived":
        return dissipator_strength(params) / 4.0
    if convention == "gamma-omega-squared":
        return params.gamma * params.omega**2
    raise ValueError(f"unknown rate convention {convention!r}; expected one of {RATE_CONVENTIONS}")


def closed_form_R(params: SystemParams, t, convention: str = "derived", initial: InternalBlocks | None = None):
    """Diagonal approximation: each Fock level decays at r (n^2 + n + 1).

    ``initial`` defaults to :func:`initial_blocks`; only its Fock-basis
    diagonals enter.
    """
    initial = initial or initial_blocks(params)
    diag = np.stack([np.diagonal(b) for b in initial.stack()])  # (4, dim)
    n = np.arange(diag.shape[1])
    rate = decay_rate_constant(params, convention) * (n**2 + n + 1)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    decay = np.exp(-np.outer(times, rate))  # (T, dim)
    per_block = decay @ diag.T  # (T, 4)
    R = np.abs(np.sum(_weights(params, times) * per_block, axis=-1))
    return float(R[0]) if np.ndim(t) == 0 else R


@dataclass(frozen=True)
class RateRow:
    n: int
    fitted_rate: float
    model_rate: float
    rel_error: float
    window: float


def _fit_rate(times, y):
    # least squares on log amplitude, exp(c - r t + q t^2); the quadratic
    # absorbs the slow return of weight from neighbouring levels
    mask = y > 0
    t, ly = times[mask], np.log(y[mask])

    def resid(p):
        return p[0] - p[1] * t + p[2] * t**2 - ly

    sol = least_squares(resid, x0=[0.0, max(-(ly[-1] - ly[0]) / (t[-1] - t[0]), 0.0), 0.0], method="lm")
    return float(sol.x[1])


def fit_decay_rates(
    params: SystemParams,
    n_list,
    window: float = 0.2,
    n_samples: int = 21,
    courant: float = DEFAULT_COURANT,
    convention: str = "derived",
) -> list[RateRow]:
    """Fitted dephasing rate of |<n|rho_ge(t)|n>| for each Fock level n.

    The coupling g is set to zero so only the noise acts, and each fit
    spans ``window / omega``. The window must stay well inside one trap
    period: the counter-rotating part of the dissipator pulls the local
    rate down by O(kappa/omega) within the first period. Data that do not
    decay give rate 0.
    """
    quiet = params.with_(g_coupling=0.0, g_scale=None, c_g=1 / math.sqrt(2), c_e=1 / math.sqrt(2))
    unit = decay_rate_constant(quiet, convention)
    span = window / quiet.omega
    times = np.linspace(0.0, span, n_samples)
    rows = []
    for n in n_list:
        model = unit * (n * n + n + 1)
        series = integrate(fock_blocks(quiet, n), times, quiet, courant=courant)
        ge = series.blocks[:, 1, n, n]
        y = np.abs(ge) / abs(ge[0])
        if np.max(np.abs(y - 1.0)) < 1e-14:
            fitted = 0.0
        else:
            fitted = _fit_rate(times, y)
        rel = abs(fitted - model) / model if model else abs(fitted)
        rows.append(RateRow(n, fitted, model, rel, span))
    return rows
