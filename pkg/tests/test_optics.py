"""Tests for the AOM and interferometer optics"""

import cmath
import math

import numpy as np
import pytest

from abisim.services.errors import ConfigError
from abisim.services.optics import (
    UNITARITY_TOL, AbiConfig, AomConfig, FrequencyLabel, Port, PortField, _coefficients,
    abi_intensities, abi_transfer, aom_scatter, cascade_transfer, effective_coeffs,
    fringe_parameters, ideal_intensity, observed_intensity, overall_phase, splitting_phase,
    switch_efficiency, vacuum,
)

RF = 2 * math.pi * 80e6


def inputs(a=0j, b=1 + 0j):
    base = FrequencyLabel(0, RF)
    return PortField(Port.A, base.shifted(1), a), PortField(Port.B, base, b)


class TestAomScatter:
    def test_power_conserved(self):
        cfg = AomConfig(r=0.6, theta=0.3)
        in_a, in_b = inputs(0.3 - 0.4j, 0.8 + 0.1j)
        c, d = aom_scatter(in_a, in_b, cfg)
        assert c.intensity + d.intensity == pytest.approx(in_a.intensity + in_b.intensity, abs=1e-14)

    def test_power_conserved_random_draws(self):
        rng = np.random.default_rng(2024)
        amps = rng.normal(size=(10_000, 4))
        rs = rng.uniform(0.0, 1.0, 10_000)
        thetas = rng.uniform(-math.pi, math.pi, 10_000)
        for (ar, ai, br, bi), r, theta in zip(amps, rs, thetas):
            in_a, in_b = inputs(complex(ar, ai), complex(br, bi))
            c, d = aom_scatter(in_a, in_b, AomConfig(r=float(r), theta=float(theta)))
            total = in_a.intensity + in_b.intensity
            assert abs(c.intensity + d.intensity - total) <= 1e-12 * max(total, 1.0)

    def test_balanced_single_input(self):
        c, d = aom_scatter(*inputs(0j, 1 + 0j), AomConfig(r=math.sqrt(0.5), theta=0.0))
        assert c.intensity == pytest.approx(0.5, abs=1e-15)
        assert d.intensity == pytest.approx(0.5, abs=1e-15)
        assert d.amplitude == pytest.approx(-1 / math.sqrt(2), abs=1e-15)
        assert d.frequency.offset_index == 1
        assert c.frequency.offset_index == 0

    def test_frequency_labels(self):
        c, d = aom_scatter(*inputs(), AomConfig())
        assert c.frequency.offset_index == 0
        assert d.frequency.offset_index == 1
        assert (c.port, d.port) == (Port.C, Port.D)

    def test_rf_off_passes_leakage_only(self):
        cfg = AomConfig(rf_on=False, off_leakage_power=1e-4)
        c, d = aom_scatter(*inputs(), cfg)
        assert d.intensity == pytest.approx(1e-4)
        assert c.intensity == pytest.approx(1 - 1e-4)

    def test_wrong_ports_rejected(self):
        in_a, in_b = inputs()
        with pytest.raises(ConfigError):
            aom_scatter(in_b, in_a, AomConfig())

    def test_label_mismatch_rejected(self):
        stray = PortField(Port.A, FrequencyLabel(1, 2 * math.pi * 70e6), 1 + 0j)
        with pytest.raises(ConfigError):
            aom_scatter(stray, vacuum(Port.B, FrequencyLabel(0, RF)), AomConfig())

    def test_non_adjacent_labels_rejected(self):
        base = FrequencyLabel(0, RF)
        with pytest.raises(ConfigError):
            aom_scatter(PortField(Port.A, base.shifted(2), 1 + 0j), PortField(Port.B, base, 1 + 0j), AomConfig())

    def test_r_out_of_range(self):
        with pytest.raises(ConfigError):
            AomConfig(r=1.2)


class TestEffectiveCoefficients:
    def test_unitarity_random_draws(self):
        rng = np.random.default_rng(0)
        n = 100_000
        r1, r2 = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        th1, th2, phi = rng.uniform(-np.pi, np.pi, (3, n))
        t1, t2 = np.sqrt(1 - r1 ** 2), np.sqrt(1 - r2 ** 2)
        t1p, r1p, t2p, r2p = _coefficients(t1, r1, t2, r2, th1, th2, phi)
        assert np.max(np.abs(np.abs(t1p) ** 2 + np.abs(r1p) ** 2 - 1)) < UNITARITY_TOL
        assert np.max(np.abs(np.abs(t2p) ** 2 + np.abs(r2p) ** 2 - 1)) < UNITARITY_TOL
        assert np.max(np.abs(t1p * np.conj(r2p) - r1p * np.conj(t2p))) < UNITARITY_TOL

    @pytest.mark.parametrize('r1,r2,th1,th2,phi', [
        (0.7, 0.7, 0.0, 0.0, 0.0),
        (0.3, 0.9, 0.4, -1.1, 2.5),
        (0.99, 0.1, 3.0, 1.0, -0.7),
    ])
    def test_cascade_matches_closed_form(self, r1, r2, th1, th2, phi):
        cfg = AbiConfig(AomConfig(r1, th1), AomConfig(r2, th2), path_phase=phi)
        in_a, in_b = inputs(0.2 + 0.5j, 0.6 - 0.3j)
        e1, f1 = abi_transfer(in_a, in_b, cfg)
        e2, f2 = cascade_transfer(in_a, in_b, cfg)
        assert cmath.isclose(e1.amplitude, e2.amplitude, abs_tol=1e-12)
        assert cmath.isclose(f1.amplitude, f2.amplitude, abs_tol=1e-12)

    def test_output_frequencies(self, balanced_abi):
        e, f = abi_transfer(*inputs(), balanced_abi)
        assert e.frequency.offset_index == 1
        assert f.frequency.offset_index == 0


class TestInterferometer:
    @pytest.mark.parametrize('phi', np.linspace(-np.pi, np.pi, 13))
    def test_ideal_fringe(self, phi):
        cfg = AbiConfig(path_phase=phi)
        e, f = abi_transfer(*inputs(), cfg)
        assert e.intensity == pytest.approx(ideal_intensity(phi, 1.0), abs=1e-12)
        assert e.intensity + f.intensity == pytest.approx(1.0, abs=1e-12)

    def test_phase_zero_routes_to_shifted_port(self):
        e, f = abi_transfer(*inputs(), AbiConfig(path_phase=0.0))
        assert e.intensity == pytest.approx(1.0, abs=1e-12)
        assert f.intensity == pytest.approx(0.0, abs=1e-12)

    def test_phase_pi_routes_to_unshifted_port(self):
        e, f = abi_transfer(*inputs(), AbiConfig(path_phase=math.pi))
        assert f.intensity == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize('path,th1,th2', [(0.3, 0.2, -0.4), (2.0, -1.0, 0.5), (-1.2, 3.0, 3.0)])
    def test_overall_phase_equivalence(self, path, th1, th2):
        split = AbiConfig(AomConfig(theta=th1), AomConfig(theta=th2), path_phase=path, visibility=0.9,
                          efficiency=0.8)
        lumped = AbiConfig(path_phase=overall_phase(path, th1, th2), visibility=0.9, efficiency=0.8)
        e1, f1 = abi_transfer(*inputs(), split)
        e2, f2 = abi_transfer(*inputs(), lumped)
        assert e1.intensity == pytest.approx(e2.intensity, abs=1e-12)
        assert f1.intensity == pytest.approx(f2.intensity, abs=1e-12)

    @pytest.mark.parametrize('v,eta,phi', [(0.995, 0.95, 1.08), (0.5, 0.7, -2.0), (1.0, 1.0, 0.4)])
    def test_observed_intensity_matches_transfer(self, v, eta, phi):
        cfg = AbiConfig(path_phase=phi, visibility=v, efficiency=eta)
        e, f = abi_transfer(*inputs(), cfg)
        assert e.intensity == pytest.approx(observed_intensity(eta, v, 0.0, 0.0, phi, 1.0), abs=1e-12)
        assert e.intensity + f.intensity == pytest.approx(eta, abs=1e-12)

    def test_degenerates_to_ideal(self):
        phi = np.linspace(0, 2 * np.pi, 50)
        t = np.linspace(0, 1e-5, 50)
        np.testing.assert_allclose(observed_intensity(1.0, 1.0, 0.0, t, phi, 2.0),
                                   ideal_intensity(phi, 2.0), atol=1e-12)

    def test_incoherent_input_rejected(self, balanced_abi):
        base = FrequencyLabel(0, RF)
        with pytest.raises(ConfigError):
            abi_transfer(vacuum(Port.A, base.shifted(1)), PortField(Port.B, base, 1 + 0j, 0.1), balanced_abi)

    def test_mismatched_rf_labels_rejected(self):
        with pytest.raises(ConfigError):
            AbiConfig(AomConfig(rf_frequency=RF), AomConfig(rf_frequency=2 * math.pi * 79e6))


class TestVectorizedIntensities:
    def test_matches_transfer(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            r1, r2 = rng.uniform(0.1, 0.95, 2)
            th1, th2, path = rng.uniform(-3, 3, 3)
            v, eta = rng.uniform(0.5, 1.0, 2)
            cfg = AbiConfig(AomConfig(r1, th1), AomConfig(r2, th2), path, v, eta)
            e, f = abi_transfer(*inputs(0.3 + 0.1j, 0.7 - 0.2j), cfg)
            i_e, i_f = abi_intensities(0.3 + 0.1j, 0.7 - 0.2j, r1, r2, th1, th2, path, v, eta)
            assert float(i_e) == pytest.approx(e.intensity, abs=1e-12)
            assert float(i_f) == pytest.approx(f.intensity, abs=1e-12)

    def test_energy_audit(self):
        phi = np.linspace(0, 2 * np.pi, 1000)
        i_e, i_f = abi_intensities(0.0, 1.0, 0.6, 0.8, 0.0, 0.0, phi, 0.93, 0.9)
        np.testing.assert_allclose((i_e + i_f) / 0.9, 1.0, atol=1e-12)


class TestFringeParameters:
    def test_balanced(self):
        eta, v = fringe_parameters(AbiConfig(visibility=0.995, efficiency=0.95))
        assert eta == pytest.approx(0.95, abs=1e-12)
        assert v == pytest.approx(0.995, abs=1e-12)

    def test_unbalanced_fringe_contrast(self):
        cfg = AbiConfig(AomConfig(r=0.4), AomConfig(r=0.9), visibility=1.0, efficiency=1.0)
        eta, v = fringe_parameters(cfg)
        hi = abi_transfer(*inputs(), cfg)[0].intensity
        lo = abi_transfer(*inputs(), AbiConfig(cfg.aom1, cfg.aom2, math.pi))[0].intensity
        assert (hi - lo) / (hi + lo) == pytest.approx(v, abs=1e-12)
        assert hi + lo == pytest.approx(eta, abs=1e-12)


class TestHelpers:
    def test_switch_efficiency(self):
        assert switch_efficiency(0.95, 0.937) == pytest.approx(0.920, abs=5e-4)

    @pytest.mark.parametrize('ratio', [0.0, 0.1, 0.5, 0.9, 1.0])
    def test_splitting_phase(self, ratio):
        phi = splitting_phase(ratio)
        coeffs = effective_coeffs(AbiConfig(path_phase=phi))
        assert abs(coeffs.t1p) ** 2 == pytest.approx(ratio, abs=1e-12)

    def test_splitting_phase_range(self):
        with pytest.raises(ConfigError):
            splitting_phase(1.5)
