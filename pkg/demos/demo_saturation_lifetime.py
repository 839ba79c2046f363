"""Saturation curve, IRF-convolved lifetime, and the efficiency budget.

Run:  python3 demos/demo_saturation_lifetime.py
"""

import numpy as np
from scipy.special import erfc

from emitterlab import fitlab, optics
from emitterlab.kinetics import SaturationParams


def main():
    rng = np.random.default_rng(0)

    # -- saturation ----------------------------------------------------------
    truth = SaturationParams(p_sat=2.32, i_inf=0.69e6)
    powers = np.geomspace(0.1, 40.0, 12)
    y = truth.eval(powers) * (1.0 + 0.03 * rng.standard_normal(powers.size))
    res = fitlab.fit_saturation(list(zip(powers, y)),
                                sigma=0.03 * truth.eval(powers))
    print("saturation fit:")
    print(f"  P_s   = {res['p_sat']:.3f} +- {res.sigma('p_sat'):.3f} mW "
          f"(truth {truth.p_sat})")
    print(f"  I_inf = {res['i_inf']:.3e} +- {res.sigma('i_inf'):.2e} cps "
          f"(truth {truth.i_inf:.2e})")

    # -- lifetime through a 30 ps Gaussian IRF --------------------------------
    tau, sigma_irf, t0 = 736.0, 30.0, 500.0
    t = np.arange(0.0, 6000.0, 16.0)
    arg = t - t0
    curve = 0.5 * np.exp(sigma_irf**2 / (2 * tau**2) - arg / tau) * erfc(
        (sigma_irf**2 / tau - arg) / (np.sqrt(2.0) * sigma_irf))
    counts = rng.poisson(1e5 * curve / curve.sum() + 2.0).astype(float)
    life = fitlab.fit_lifetime((t, counts), fitlab.IRFModel.gaussian(30.0))
    print("\nlifetime fit:")
    print(f"  tau = {life['tau']:.1f} +- {life.sigma('tau'):.1f} ps "
          f"(truth {tau})")

    # -- efficiency budget ----------------------------------------------------
    budget = optics.EfficiencyBudget(eta_c=0.13, eta_f=0.4, eta_o=0.3,
                                     eta_d=0.3)
    i_total = optics.total_rate_from_lifetime(life["tau"])
    eta_q, chain = optics.quantum_efficiency(res["i_inf"], i_total, budget)
    angle = optics.collection_half_angle(1.35, 1.52)
    print("\nefficiency budget:")
    print(f"  end-to-end chain = {chain:.4e}")
    print(f"  quantum efficiency = {eta_q:.4f}")
    print(f"  collection half angle (NA 1.35 in n = 1.52) = {angle:.2f} deg")


if __name__ == "__main__":
    main()
