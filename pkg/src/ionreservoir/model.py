"""Physical parameters of the driven ion and the quantities derived from them.

Every frequency-like field shares one unit (``time_unit`` names it; the
default is rad/us). The laser carrier phase and the recoil shift are not
modelled. The effective coupling ``g`` multiplies ``i (a^dag - a)`` in

    H_I = omega a^dag a + i g sigma_z (a^dag - a),

with sigma_z = +1 on |e> and -1 on |g>.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .fock import FockSpace

DISSIPATOR_PRESETS = ("custom", "ito-noise", "gamma", "gamma-squared")


class ParameterError(ValueError):
    """Raised for physically or numerically invalid parameter sets."""


@dataclass(frozen=True)
class SystemParams:
    """All model constants plus the Fock truncation.

    ``dissipator_preset`` decides how the noise strength ``gamma`` maps to
    the double-commutator strength ``kappa`` used by the averaged dynamics:

    * ``custom``: kappa = ``kappa_custom``
    * ``ito-noise``: kappa = gamma * omega**2 / 2, the value implied by the noise
      term sqrt(gamma) * omega * X^2 dW of the fluctuating Hamiltonian
    * ``gamma``: kappa = gamma
    * ``gamma-squared``: kappa = gamma**2 * omega**2 / 2
    """

    omega: float = 1.0
    delta: float = 20.0
    omega_L_rabi: float = 1.0
    gamma: float = 0.0
    g_coupling: float | None = 0.1
    g_scale: float | None = None
    eta_recoil: float = 0.0
    c_g: complex = 1 / math.sqrt(2)
    c_e: complex = 1 / math.sqrt(2)
    alpha_g: complex = 2.0
    alpha_e: complex = 2.0
    dim: int = 64
    dissipator_preset: str = "custom"
    kappa_custom: float = 0.05
    time_unit: str = "rad/us"

    def __post_init__(self):
        for name in ("c_g", "c_e", "alpha_g", "alpha_e"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        validate(self)

    def with_(self, **changes) -> SystemParams:
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def space(self) -> FockSpace:
        return FockSpace(self.dim)


@dataclass(frozen=True)
class DerivedParams:
    omega_e: float
    g: float
    alpha_bar: tuple[float, float, float]
    kappa: float
    g_source: str = field(default="configured")
    neglected_sigma_x: float = 0.0


def validate(params: SystemParams) -> None:
    finite = ("omega", "delta", "omega_L_rabi", "gamma", "eta_recoil", "kappa_custom")
    for name in finite:
        if not math.isfinite(getattr(params, name)):
            raise ParameterError(f"{name} must be finite")
    if params.omega <= 0:
        raise ParameterError(f"omega must be positive, got {params.omega}")
    if params.gamma < 0:
        raise ParameterError(f"gamma must be non-negative, got {params.gamma}")
    if params.kappa_custom < 0:
        raise ParameterError(f"kappa_custom must be non-negative, got {params.kappa_custom}")
    if int(params.dim) != params.dim or params.dim < 2:
        raise ParameterError(f"dim must be an integer >= 2, got {params.dim}")
    norm = abs(params.c_g) ** 2 + abs(params.c_e) ** 2
    if abs(norm - 1.0) > 1e-12:
        raise ParameterError(f"|c_g|^2 + |c_e|^2 must equal 1, got {norm!r}")
    if params.dissipator_preset not in DISSIPATOR_PRESETS:
        raise ParameterError(
            f"unknown dissipator preset {params.dissipator_preset!r}; expected one of {DISSIPATOR_PRESETS}"
        )


def rabi_frequency(params: SystemParams) -> float:
    """Generalised Rabi frequency sqrt(Omega_L^2 + delta^2)."""
    return math.hypot(params.omega_L_rabi, params.delta)


def coarse_grained_alphas(params: SystemParams) -> tuple[float, float, float]:
    omega_e = rabi_frequency(params)
    if omega_e == 0:
        raise ParameterError("Omega_e vanishes: both delta and Omega_L are zero")
    oe2 = omega_e**2
    return (params.delta * params.omega_L_rabi / oe2, 0.0, params.delta**2 / oe2)


def alpha_coefficients(params: SystemParams, t):
    """Rotating-frame coupling direction (alpha_x, alpha_y, alpha_z) at time t."""
    omega_e = rabi_frequency(params)
    if omega_e == 0:
        raise ParameterError("Omega_e vanishes: both delta and Omega_L are zero")
    t = np.asarray(t, dtype=float)
    d, w = params.delta, params.omega_L_rabi
    ax = w * d / omega_e**2 * (1.0 - np.cos(omega_e * t))
    ay = w / omega_e * np.sin(omega_e * t)
    az = d**2 / omega_e**2 + w**2 / omega_e**2 * np.cos(omega_e * t)
    if ax.ndim == 0:
        return float(ax), float(ay), float(az)
    return ax, ay, az


def coupling_g(params: SystemParams) -> float:
    """Effective sigma_z coupling.

    An explicit ``g_coupling`` wins. Otherwise ``g_scale`` stands in for
    sqrt(m omega / 2) k_Lx and is multiplied by delta^2 / Omega_e^2.
    """
    if params.g_coupling is not None:
        return float(params.g_coupling)
    if params.g_scale is None:
        raise ParameterError("neither g_coupling nor g_scale is configured")
    return float(params.g_scale) * coarse_grained_alphas(params)[2]


def dissipator_strength(params: SystemParams) -> float:
    """kappa in d(rho)/dt = ... - kappa [X^2, [X^2, rho]]."""
    preset = params.dissipator_preset
    if preset == "custom":
        return float(params.kappa_custom)
    if preset == "ito-noise":
        return 0.5 * params.gamma * params.omega**2
    if preset == "gamma":
        return float(params.gamma)
    if preset == "gamma-squared":
        return 0.5 * params.gamma**2 * params.omega**2
    raise ParameterError(f"unknown dissipator preset {preset!r}")


def derive(params: SystemParams) -> DerivedParams:
    omega_e = rabi_frequency(params)
    alpha_bar = coarse_grained_alphas(params)
    return DerivedParams(
        omega_e=omega_e,
        g=coupling_g(params),
        alpha_bar=alpha_bar,
        kappa=dissipator_strength(params),
        g_source="g_coupling" if params.g_coupling is not None else "g_scale",
        neglected_sigma_x=alpha_bar[0],
    )


def effective_hamiltonian(params: SystemParams, space: FockSpace | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Motional Hamiltonians conditioned on the internal level, ``(H_g, H_e)``.

    H_e = omega a^dag a + i g (a^dag - a) and H_g has the opposite sign of g.
    """
    space = space or params.space
    g = coupling_g(params)
    free = params.omega * space.number
    drive = 1j * g * (space.adag - space.a)
    return free - drive, free + drive


def lab_scale_params(**overrides) -> SystemParams:
    """Laboratory-scale constants converted to rad/us.

    Frequencies are read as cyclic (x 2 pi) and the 1 kHz noise
    strength as a rate of 1e-3 per us. No coupling is set because the mass
    and wave number are not given; supply ``g_coupling`` or ``g_scale``.
    """
    two_pi = 2 * math.pi
    base = dict(
        omega=two_pi * 11.3,
        delta=two_pi * 4.0e3,
        omega_L_rabi=two_pi * 10.0e-3,
        gamma=1.0e-3,
        g_coupling=None,
        alpha_g=3.0,
        alpha_e=3.0,
        dissipator_preset="gamma",
    )
    base.update(overrides)
    return SystemParams(**base)
