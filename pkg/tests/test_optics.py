"""Collection-chain arithmetic."""

import math

import pytest

from emitterlab.kinetics import SaturationParams
from emitterlab.optics import (
    EfficiencyBudget,
    collection_half_angle,
    enhancement_ratio,
    quantum_efficiency,
    total_rate_from_lifetime,
)


class TestHalfAngle:
    def test_reference_pair(self):
        # asin(1.35/1.52) in degrees
        assert collection_half_angle(1.35, 1.52) == pytest.approx(
            math.degrees(math.asin(1.35 / 1.52)), rel=1e-12
        )
        assert collection_half_angle(1.35, 1.52) == pytest.approx(62.64, abs=0.01)

    def test_limits(self):
        assert collection_half_angle(1.52, 1.52) == pytest.approx(90.0)
        assert collection_half_angle(0.0, 1.52) == 0.0

    def test_evanescent_raises(self):
        with pytest.raises(ValueError):
            collection_half_angle(1.6, 1.52)

    def test_monotonicity(self):
        nas = [0.2, 0.5, 0.9, 1.2, 1.4]
        angles = [collection_half_angle(na, 1.52) for na in nas]
        assert angles == sorted(angles)
        media = [1.45, 1.52, 1.7, 2.4]
        angles = [collection_half_angle(1.35, n) for n in media]
        assert angles == sorted(angles, reverse=True)


class TestQuantumEfficiency:
    BUDGET = EfficiencyBudget(eta_c=0.13, eta_f=0.4, eta_o=0.3, eta_d=0.3)

    def test_chain_product(self):
        assert self.BUDGET.chain == pytest.approx(4.68e-3, rel=1e-12)

    def test_reference_value(self):
        i_total = total_rate_from_lifetime(736.0)
        assert i_total == pytest.approx(1e12 / 736.0, rel=1e-12)
        eta_q, chain = quantum_efficiency(0.69e6, i_total, self.BUDGET)
        assert chain == pytest.approx(4.68e-3, rel=1e-12)
        assert eta_q == pytest.approx(0.1085, abs=5e-4)

    def test_unity_case(self):
        full = EfficiencyBudget(1.0, 1.0, 1.0, 1.0)
        eta_q, chain = quantum_efficiency(1e6, 1e6, full)
        assert eta_q == 1.0 and chain == 1.0

    def test_homogeneity(self):
        a, _ = quantum_efficiency(0.69e6, 1.36e9, self.BUDGET)
        b, _ = quantum_efficiency(0.69e9, 1.36e12, self.BUDGET)
        assert a == pytest.approx(b, rel=1e-12)

    def test_inconsistent_inputs_warn(self):
        with pytest.warns(UserWarning, match="inconsistent"):
            quantum_efficiency(1e9, 1e6, self.BUDGET)

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            EfficiencyBudget(0.0, 0.4, 0.3, 0.3)
        with pytest.raises(ValueError):
            EfficiencyBudget(0.13, 1.4, 0.3, 0.3)

    def test_lifetime_validation(self):
        with pytest.raises(ValueError):
            total_rate_from_lifetime(0.0)


class TestEnhancement:
    def test_reference_pair(self):
        r, s = enhancement_ratio(
            SaturationParams(p_sat=1.0, i_inf=1.13e6),
            SaturationParams(p_sat=1.0, i_inf=2.33e6),
        )
        assert r == pytest.approx(2.06, abs=0.01)
        assert s == 0.0

    def test_identity(self):
        sat = SaturationParams(p_sat=2.0, i_inf=1e6)
        assert enhancement_ratio(sat, sat)[0] == 1.0

    def test_group_means(self):
        pss = [1.4, 1.17, 2.13, 2.33, 2.45]
        flat = [0.89, 1.13, 1.67, 0.89, 1.19]
        r, _ = enhancement_ratio(
            SaturationParams(p_sat=1.0, i_inf=sum(flat) / 5 * 1e6),
            SaturationParams(p_sat=1.0, i_inf=sum(pss) / 5 * 1e6),
        )
        assert r == pytest.approx(1.643, abs=0.005)

    def test_error_propagation(self):
        a = SaturationParams(p_sat=1.0, i_inf=1e6)
        b = SaturationParams(p_sat=1.0, i_inf=2e6)
        r, s = enhancement_ratio(a, b, sigma_a=1e4, sigma_b=4e4)
        assert r == pytest.approx(2.0)
        assert s == pytest.approx(2.0 * math.hypot(0.01, 0.02), rel=1e-12)
