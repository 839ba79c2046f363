"""emitterlab: simulation and analysis toolkit for room-temperature telecom
single-photon emitters modeled as three-level systems."""

from . import correlator, exciton, fitlab, kinetics, optics, photostream, ptsfile
from .kinetics import (
    G2Params,
    RateSet,
    SaturationParams,
    background_degraded_g2,
    g2_eval,
    g2_params_from_rates,
    k31_from_g2_params,
    saturation_from_rates,
    steady_state,
)
from .photostream import (
    BackgroundModel,
    DetectorModel,
    PulseTrain,
    TimestampChannel,
    detect_hbt,
    simulate_cw,
    simulate_pulsed,
)
from .correlator import correlate, intensity_trace, pulsed_g2

__version__ = "0.1.0"
