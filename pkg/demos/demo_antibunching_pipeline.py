"""End-to-end antibunching pipeline on synthetic data.

Simulates a three-level emitter under cw excitation, splits the photon
stream onto two detectors, builds the g2(tau) histogram, fits the
two-exponential model, and recovers the transition rates from a series of
excitation powers.

Run:  python3 demos/demo_antibunching_pipeline.py
"""

import numpy as np

from emitterlab import correlator, fitlab, kinetics, photostream
from emitterlab.kinetics import RateSet
from emitterlab.photostream import DetectorModel


def main():
    # -- ground truth -------------------------------------------------------
    rates = RateSet(k12=0.3, k21=1.073, k23=0.216, k31=0.5)  # 1/ns
    params = kinetics.g2_params_from_rates(rates)
    print("true parameters:")
    print(f"  tau1 = {params.tau1:.4f} ns, tau2 = {params.tau2:.4f} ns, "
          f"beta = {params.beta:.4f}")
    print(f"  excited-state lifetime 1/(k21+k23) = "
          f"{1000.0 / (rates.k21 + rates.k23):.1f} ps")

    # -- simulate an HBT measurement ----------------------------------------
    duration = 5_000_000_000  # ps (5 ms)
    photons = photostream.simulate_cw(rates, duration, seed=0)
    ch_a, ch_b = photostream.detect_hbt(
        photons, 0.5, DetectorModel.ideal(), DetectorModel.ideal(),
        seed=1, duration_ps=duration)
    print(f"\nsimulated {len(photons)} photons "
          f"({len(ch_a)} / {len(ch_b)} per arm)")

    # -- correlate and fit ---------------------------------------------------
    hist = correlator.correlate(ch_a, ch_b, bin_width=100, tau_max=50_050)
    res = fitlab.fit_g2_cw(hist, mode="constrained")
    print("\nfitted g2 parameters:")
    for name in ("beta", "tau1", "tau2"):
        print(f"  {name} = {res[name]:.4f} +- {res.sigma(name):.4f}")
    print(f"  reduced chi2 = {res.chi2_red:.2f}")

    # -- power series -> transition rates ------------------------------------
    # In a real experiment each point comes from a g2 fit at one power; here
    # the series is forward-generated from the model to keep the demo fast.
    eta = 0.12  # pump efficiency, 1/(ns mW)
    points = []
    for power in np.linspace(0.5, 12.0, 11):
        k31 = 0.3 * np.exp(-0.2 * power) + power / (power + 2.0)
        p = kinetics.g2_params_from_rates(
            RateSet(k12=eta * power, k21=1.073, k23=0.216, k31=k31))
        points.append(fitlab.PowerSeriesPoint(
            power=power, tau1=p.tau1, tau2=p.tau2, beta=p.beta))
    ext = fitlab.extract_rates(points)
    print("\nrates extracted from the 11-power series:")
    print(f"  k21 = {ext.k21:.4f} +- {ext.k21_err:.4f} 1/ns")
    print(f"  k23 = {ext.k23:.4f} +- {ext.k23_err:.4f} 1/ns")
    print(f"  eta = {ext.eta:.4f} +- {ext.eta_err:.4f} 1/(ns mW)")
    print(f"  implied lifetime = {ext.lifetime_ns * 1000:.1f} ps")
    k31_fit = fitlab.fit_k31_power(ext.k31_per_power)
    print(f"  deshelving fit k31(P): a={k31_fit['a']:.3f} b={k31_fit['b']:.3f} "
          f"c={k31_fit['c']:.3f} d={k31_fit['d']:.3f}")


if __name__ == "__main__":
    main()
