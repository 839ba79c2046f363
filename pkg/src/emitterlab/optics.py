"""Collection-chain arithmetic: NA half-angle, efficiency budget, enhancement."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .kinetics import SaturationParams

__all__ = [
    "EfficiencyBudget",
    "collection_half_angle",
    "quantum_efficiency",
    "total_rate_from_lifetime",
    "enhancement_ratio",
]


@dataclass(frozen=True)
class EfficiencyBudget:
    """Multiplicative collection/detection chain.

    eta_c: photon extraction/collection efficiency (fraction of emitted
    photons entering the objective), eta_f: fiber coupling, eta_o: objective
    transmission, eta_d: detector efficiency.  All in (0, 1].
    """

    eta_c: float
    eta_f: float
    eta_o: float
    eta_d: float

    def __post_init__(self):
        for name in ("eta_c", "eta_f", "eta_o", "eta_d"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")

    @property
    def chain(self) -> float:
        """End-to-end detection probability eta_c*eta_f*eta_o*eta_d."""
        return self.eta_c * self.eta_f * self.eta_o * self.eta_d


def collection_half_angle(na: float, n_medium: float) -> float:
    """Maximum collected half-angle in degrees, asin(NA/n) in the medium.

    Raises ValueError for NA > n_medium (evanescent regime).
    """
    if na < 0 or n_medium <= 0:
        raise ValueError("require na >= 0 and n_medium > 0")
    if na > n_medium:
        raise ValueError(
            f"NA = {na} exceeds medium index {n_medium}: no propagating cone"
        )
    return math.degrees(math.asin(na / n_medium))


def total_rate_from_lifetime(tau_ps: float) -> float:
    """Total emission rate 1/tau in photons/s, for tau in ps.

    One documented convention for the I_total input of
    :func:`quantum_efficiency`: at full saturation the emitter cycles once
    per excited-state lifetime.
    """
    if tau_ps <= 0:
        raise ValueError("lifetime must be positive")
    return 1e12 / tau_ps


def quantum_efficiency(i_inf: float, i_total: float, budget: EfficiencyBudget):
    """Quantum efficiency eta_q = i_inf / (i_total * eta_c*eta_f*eta_o*eta_d).

    `i_inf` is the saturated detected count rate (counts/s) and `i_total`
    the total emission rate the emitter would sustain (photons/s) -- an
    explicit input, see :func:`total_rate_from_lifetime` for one convention.

    Returns (eta_q, chain) where chain is the end-to-end detection
    probability.  Warns if eta_q > 1 (inconsistent inputs).
    """
    if i_inf <= 0 or i_total <= 0:
        raise ValueError("i_inf and i_total must be positive")
    chain = budget.chain
    eta_q = i_inf / (i_total * chain)
    if eta_q > 1.0:
        warnings.warn(
            f"quantum efficiency {eta_q:.3f} > 1: inputs are inconsistent",
            stacklevel=2,
        )
    return eta_q, chain


def enhancement_ratio(
    sat_a: SaturationParams,
    sat_b: SaturationParams,
    sigma_a: float = 0.0,
    sigma_b: float = 0.0,
):
    """Saturated-count enhancement i_inf_b / i_inf_a with propagated uncertainty.

    Returns (ratio, sigma_ratio); sigma_ratio is 0 when no input
    uncertainties are given.
    """
    ratio = sat_b.i_inf / sat_a.i_inf
    rel = math.hypot(sigma_a / sat_a.i_inf, sigma_b / sat_b.i_inf)
    return ratio, ratio * rel
