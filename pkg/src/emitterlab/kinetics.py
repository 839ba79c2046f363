"""Closed-form photophysics of a three-level emitter.

Level scheme: ground |1>, excited |2>, metastable (shelving) |3>.
Transitions: |1>->|2> at k12 (excitation, power dependent under cw drive,
k12 = eta*P), |2>->|1> at k21 (radiative, emits a photon), |2>->|3> at k23
(shelving), |3>->|1> at k31 (deshelving).

Unit conventions used throughout the package: rates in 1/ns, times in ns,
optical powers in mW.  Timestamp-level code (photostream, correlator) works
in integer picoseconds; 1 ns = 1000 ps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "RateSet",
    "G2Params",
    "SteadyState",
    "SaturationParams",
    "DegenerateRootsError",
    "g2_params_from_rates",
    "g2_eval",
    "k31_from_g2_params",
    "steady_state",
    "saturation_from_rates",
    "background_degraded_g2",
]

# Relative tolerance below which the two decay roots are considered
# numerically indistinguishable.
DEGENERATE_ROOT_RTOL = 1e-12


class DegenerateRootsError(ValueError):
    """The two correlation timescales coalesce (A^2 - 4B <= tol)."""


@dataclass(frozen=True)
class RateSet:
    """Transition rates of the three-level emitter, all in 1/ns."""

    k12: float
    k21: float
    k23: float
    k31: float

    def __post_init__(self):
        for name in ("k12", "k21", "k23", "k31"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.k12 <= 0 or self.k21 <= 0 or self.k31 <= 0:
            raise ValueError("k12, k21 and k31 must be strictly positive")
        if self.k23 < 0:
            raise ValueError("k23 must be nonnegative")

    def at_power(self, eta: float, power_mw: float) -> "RateSet":
        """Return a copy with k12 = eta * P (cw drive), eta in 1/(ns*mW)."""
        return replace(self, k12=eta * power_mw)


@dataclass(frozen=True)
class G2Params:
    """Parameters of g2(tau) = 1 - alpha*exp(-|tau|/tau1) + beta*exp(-|tau|/tau2).

    For a background-free three-level emitter alpha = 1 + beta, so g2(0) = 0.
    alpha is kept independent of beta so that background-degraded data can be
    represented; timescales are in ns with tau1 <= tau2.
    """

    alpha: float
    beta: float
    tau1: float
    tau2: float

    def __post_init__(self):
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ValueError("timescales must be strictly positive")
        if self.tau2 < self.tau1:
            raise ValueError("require tau2 >= tau1")

    @property
    def g2_zero(self) -> float:
        """Zero-delay value 1 - alpha + beta."""
        return 1.0 - self.alpha + self.beta


@dataclass(frozen=True)
class SteadyState:
    """Stationary occupation probabilities of the three levels."""

    p1: float
    p2: float
    p3: float


@dataclass(frozen=True)
class SaturationParams:
    """Saturation curve I(P) = i_inf * P / (P + p_sat)."""

    p_sat: float  # mW
    i_inf: float  # counts/s (or photons/ns, depending on the xi convention)

    def __post_init__(self):
        if self.p_sat <= 0 or self.i_inf <= 0:
            raise ValueError("p_sat and i_inf must be strictly positive")

    def eval(self, power_mw):
        return self.i_inf * power_mw / (power_mw + self.p_sat)


def _quadratic_coeffs(rates: RateSet):
    """Coefficients (A, B) of the characteristic quadratic l^2 - A*l + B = 0."""
    a = rates.k12 + rates.k21 + rates.k23 + rates.k31
    b = rates.k12 * (rates.k23 + rates.k31) + rates.k31 * (rates.k21 + rates.k23)
    return a, b


def g2_params_from_rates(rates: RateSet) -> G2Params:
    """Map transition rates to the correlation parameters (alpha, beta, tau1, tau2).

    The two timescales are tau_{1,2} = 2 / (A +- sqrt(A^2 - 4B)) with
    A = k12 + k21 + k23 + k31 and B = k12(k23 + k31) + k31(k21 + k23);
    beta = (1 - tau2*k31) / (k31*(tau2 - tau1)) and alpha = 1 + beta, so
    g2(0) = 0 exactly.

    Raises
    ------
    DegenerateRootsError
        If A^2 - 4B <= 1e-12 * A^2, i.e. the two timescales coalesce.
    """
    a, b = _quadratic_coeffs(rates)
    disc = a * a - 4.0 * b
    if disc <= DEGENERATE_ROOT_RTOL * a * a:
        raise DegenerateRootsError(
            f"coalescing correlation timescales: A^2-4B = {disc:.3e} with A = {a:.3e}"
        )
    root = math.sqrt(disc)
    tau1 = 2.0 / (a + root)
    tau2 = 2.0 / (a - root)
    beta = (1.0 - tau2 * rates.k31) / (rates.k31 * (tau2 - tau1))
    return G2Params(alpha=1.0 + beta, beta=beta, tau1=tau1, tau2=tau2)


def g2_eval(params: G2Params, tau):
    """Evaluate g2(tau) = 1 - alpha*exp(-|tau|/tau1) + beta*exp(-|tau|/tau2).

    `tau` (ns) may be a scalar or a numpy array; the function is even in tau
    and tends to 1 as |tau| -> infinity.
    """
    import numpy as np

    at = np.abs(tau)
    out = (
        1.0
        - params.alpha * np.exp(-at / params.tau1)
        + params.beta * np.exp(-at / params.tau2)
    )
    if np.ndim(tau) == 0:
        return float(out)
    return out


def k31_from_g2_params(params: G2Params) -> float:
    """Deshelving rate from fitted correlation parameters.

    Exact algebraic inverse of the beta relation used in
    :func:`g2_params_from_rates`: k31 = 1 / (beta*(tau2 - tau1) + tau2).

    Raises
    ------
    ValueError
        If the denominator beta*(tau2 - tau1) + tau2 is not positive, which
        signals an inconsistent set of fitted parameters.
    """
    denom = params.beta * (params.tau2 - params.tau1) + params.tau2
    if denom <= 0:
        raise ValueError(
            f"nonpositive k31 denominator {denom:.3e}; fitted g2 parameters "
            "are inconsistent with a three-level emitter"
        )
    return 1.0 / denom


def steady_state(rates: RateSet) -> SteadyState:
    """Stationary occupations under cw drive.

    Detailed balance of the scheme gives p2 = k12*p1/(k21+k23) and
    p3 = (k23/k31)*p2; the triple is normalized to 1.
    """
    r2 = rates.k12 / (rates.k21 + rates.k23)  # p2/p1
    r3 = (rates.k23 / rates.k31) * r2  # p3/p1
    p1 = 1.0 / (1.0 + r2 + r3)
    return SteadyState(p1=p1, p2=r2 * p1, p3=r3 * p1)


def emission_rate(rates: RateSet) -> float:
    """Photon emission rate k21 * p2 in photons/ns."""
    return rates.k21 * steady_state(rates).p2


def saturation_from_rates(
    rates_at_unit_power: RateSet, eta: float, xi: float
) -> SaturationParams:
    """Saturation parameters implied by the three-level scheme.

    With k12 = eta*P, the detected rate R(P) = xi * k21 * p2(P) reduces
    identically to i_inf * P / (P + p_sat) with

        i_inf = xi * k21 / (1 + k23/k31)
        p_sat = (k21 + k23) / (eta * (1 + k23/k31))

    `eta` is the excitation efficiency in 1/(ns*mW) and `xi` the overall
    detection probability per emitted photon (dimensionless, or carrying a
    photons/ns -> counts/s conversion).  Only k21, k23, k31 of
    `rates_at_unit_power` enter; k12 is irrelevant here.
    """
    if eta <= 0 or xi <= 0:
        raise ValueError("eta and xi must be strictly positive")
    r = rates_at_unit_power
    shelving_factor = 1.0 + r.k23 / r.k31
    i_inf = xi * r.k21 / shelving_factor
    p_sat = (r.k21 + r.k23) / (eta * shelving_factor)
    return SaturationParams(p_sat=p_sat, i_inf=i_inf)


def background_degraded_g2(params: G2Params, signal_fraction: float) -> G2Params:
    """Mix the emitter correlation with Poissonian background.

    For a signal fraction rho in (0, 1] of the total detected rate the
    measured correlation is g2_meas = 1 + rho^2 * (g2_true - 1), i.e. both
    amplitudes scale by rho^2 while the timescales are preserved.  With
    g2_true(0) = 0 this yields the familiar g2_meas(0) = 1 - rho^2.
    """
    rho = signal_fraction
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"signal_fraction must be in (0, 1], got {rho}")
    return G2Params(
        alpha=rho * rho * params.alpha,
        beta=rho * rho * params.beta,
        tau1=params.tau1,
        tau2=params.tau2,
    )
