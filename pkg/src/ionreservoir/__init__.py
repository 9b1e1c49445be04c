"""Decoherence of a laser-driven trapped ion coupled to a fluctuating trap.

Three engines compute the same internal coherence |<g|rho|e>|(t):

* :mod:`ionreservoir.analytic`: closed-form noiseless evolution,
* :mod:`ionreservoir.master`: the noise-averaged master equation,
* :mod:`ionreservoir.trajectories`: pure-state noise realizations and
  their ensemble mean.

:mod:`ionreservoir.cli` drives them from a config file.
"""

__version__ = "0.1.0"

from .fock import FockSpace, coherent_overlap, coherent_state, overlap  # noqa: E402
from .model import ParameterError, SystemParams, lab_scale_params  # noqa: E402

__all__ = [
    "FockSpace",
    "ParameterError",
    "SystemParams",
    "coherent_overlap",
    "coherent_state",
    "overlap",
    "lab_scale_params",
]
