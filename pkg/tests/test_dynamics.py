"""Trajectory and transport tests.

Velocity claims are checked by finite differences of the packet-center
motion; transported densities are checked against translated analytic
densities by KS statistics computed from first principles.
"""

import math

import numpy as np
import pytest
from scipy.stats import norm

from retrobell.dynamics import (
    COUPLING,
    FREE,
    DensityHistogram,
    IntegrationError,
    Trajectory,
    VelocityField,
    advect_positions,
    guidance_velocity,
    histogram_on_grid,
    histogram_values,
    integrate_trajectory,
    transport_density,
)
from retrobell.packet import GaussianPacket, translate_under_coupling
from retrobell.stats import ks_critical_value, ks_statistic_to_cdf


class TestGuidanceVelocity:
    @pytest.mark.parametrize("eigenvalue,expected", [(1, 2.0), (-1, -2.0)])
    def test_coupling_velocity_matches_center_motion(self, eigenvalue, expected):
        # Oracle: finite difference of the branch packet center.
        packet = GaussianPacket()
        g, t, h = 2.0, 1.3, 1e-4
        c_plus = translate_under_coupling(packet, eigenvalue, g, t + h).center
        c_minus = translate_under_coupling(packet, eigenvalue, g, t - h).center
        fd = (c_plus - c_minus) / (2 * h)
        field = VelocityField(eigenvalue, g, COUPLING)
        rng = np.random.default_rng(0)
        for point in rng.standard_normal((5, 3)):
            v = guidance_velocity(field, point, t)
            assert v == pytest.approx(fd, abs=1e-9)
            assert v == pytest.approx([expected, 0.0, 0.0])

    def test_coupling_velocity_uniform_in_space_and_time(self):
        field = VelocityField(1, 0.7, COUPLING)
        a = guidance_velocity(field, np.array([0.0, 0.0, 0.0]), 0.0)
        b = guidance_velocity(field, np.array([5.0, -3.0, 2.0]), 9.0)
        assert np.array_equal(a, b)

    def test_free_velocity_zero_at_resting_center(self):
        packet = GaussianPacket(center=(1.0, 2.0, 3.0))
        field = VelocityField(1, 1.0, FREE, packet=packet)
        v = guidance_velocity(field, packet.center, 2.0)
        assert v == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)

    def test_free_velocity_vanishes_at_zero_time(self):
        packet = GaussianPacket()
        field = VelocityField(1, 1.0, FREE, packet=packet)
        v = guidance_velocity(field, np.array([2.0, -1.0, 0.5]), 0.0)
        assert v == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)

    def test_free_regime_requires_packet(self):
        with pytest.raises(ValueError):
            VelocityField(1, 1.0, FREE)

    def test_batch_shape(self):
        field = VelocityField(-1, 1.5, COUPLING)
        pts = np.zeros((7, 3))
        assert guidance_velocity(field, pts, 0.0).shape == (7, 3)


class TestIntegrateTrajectory:
    def test_uniform_field_closed_form(self):
        field = VelocityField(1, 1.0, COUPLING)
        traj = integrate_trajectory(np.zeros(3), field, 0.0, 3.0, step=0.01)
        assert traj.endpoint == pytest.approx([3.0, 0.0, 0.0], rel=1e-12,
                                              abs=1e-12)
        assert traj.times[0] == 0.0
        assert traj.times[-1] == pytest.approx(3.0)

    def test_zero_interval_single_sample(self):
        field = VelocityField(1, 1.0, COUPLING)
        start = np.array([0.4, 0.5, 0.6])
        traj = integrate_trajectory(start, field, 2.0, 2.0)
        assert traj.times.size == 1
        assert np.array_equal(traj.positions[0], start)

    def test_translation_equivariance_uniform(self):
        field = VelocityField(-1, 2.0, COUPLING)
        delta = np.array([0.3, -0.7, 1.1])
        end_a = integrate_trajectory(np.zeros(3), field, 0.0, 1.7).endpoint
        end_b = integrate_trajectory(delta, field, 0.0, 1.7).endpoint
        assert end_b - end_a == pytest.approx(delta, abs=1e-12)

    def test_free_regime_matches_scaling_law(self):
        # Trajectories of a resting spreading packet scale with its width:
        # x(t) = mu + (x0 - mu) * s(t)/s(0).
        sigma = 0.8
        packet = GaussianPacket(width=sigma)
        field = VelocityField(1, 1.0, FREE, packet=packet)
        x0 = 1.3
        traj = integrate_trajectory(np.array([x0, 0.0, 0.0]), field, 0.0, 2.0,
                                    step=1e-3)
        scale = math.sqrt(sigma**2 + (2.0 / (2 * sigma)) ** 2) / sigma
        assert traj.endpoint[0] == pytest.approx(x0 * scale, abs=1e-8)

    def test_bad_arguments(self):
        field = VelocityField(1, 1.0, COUPLING)
        with pytest.raises(ValueError):
            integrate_trajectory(np.zeros(3), field, 1.0, 0.0)
        with pytest.raises(ValueError):
            integrate_trajectory(np.zeros(3), field, 0.0, 1.0, step=0.0)

    def test_nonfinite_velocity_raises(self):
        field = VelocityField(1, math.inf, COUPLING)
        with pytest.raises(IntegrationError):
            integrate_trajectory(np.zeros(3), field, 0.0, 1.0)

    def test_times_strictly_increasing_enforced(self):
        with pytest.raises(ValueError):
            Trajectory(np.array([0.0, 0.0]), np.zeros((2, 3)))


class TestAdvectPositions:
    def test_matches_trajectory_integrator(self):
        field = VelocityField(-1, 1.3, COUPLING)
        rng = np.random.default_rng(1)
        starts = rng.standard_normal((20, 3))
        batch = advect_positions(starts, field, 0.0, 2.4)
        for k in range(20):
            single = integrate_trajectory(starts[k], field, 0.0, 2.4).endpoint
            assert batch[k] == pytest.approx(single, abs=1e-10)

    def test_free_field_batch_rk4(self):
        packet = GaussianPacket()
        field = VelocityField(1, 1.0, FREE, packet=packet)
        rng = np.random.default_rng(2)
        starts = rng.standard_normal((10, 3))
        batch = advect_positions(starts, field, 0.0, 1.0, step=1e-3)
        for k in range(10):
            single = integrate_trajectory(starts[k], field, 0.0, 1.0,
                                          step=1e-3).endpoint
            assert batch[k] == pytest.approx(single, abs=1e-10)

    def test_input_not_mutated(self):
        starts = np.ones((3, 3))
        kept = starts.copy()
        advect_positions(starts, VelocityField(1, 1.0), 0.0, 1.0)
        assert np.array_equal(starts, kept)


class TestDensityHistogram:
    def test_invariants(self):
        hist = DensityHistogram(0.0, 0.5, np.array([1.0, 2.0, 1.0]))
        assert hist.total == pytest.approx(hist.weights.sum(), abs=1e-12)
        assert np.sum(hist.density() * hist.bin_width) == pytest.approx(1.0)
        assert hist.edges == pytest.approx([0.0, 0.5, 1.0, 1.5])

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            DensityHistogram(0.0, 0.5, np.array([1.0, -0.1]))

    def test_window_violation_raises(self):
        with pytest.raises(ValueError):
            histogram_on_grid(np.array([5.0]), 0.0, 1.0, 3)

    def test_edge_sample_kept(self):
        hist = histogram_on_grid(np.array([3.0]), 0.0, 1.0, 3)
        assert hist.weights[-1] == 1.0


class TestTransportDensity:
    def test_identity_at_zero_time(self):
        rng = np.random.default_rng(3)
        samples = rng.standard_normal((5000, 3))
        field = VelocityField(1, 1.0, COUPLING)
        hist = transport_density([(1.0, samples, field)], t=0.0, bin_width=0.2)
        direct = histogram_values(samples[:, 0], 0.2, total_weight=1.0)
        assert hist.origin == direct.origin
        assert hist.weights == pytest.approx(direct.weights)

    def test_point_mass_characteristic(self):
        r0 = np.array([0.5, 1.0, -1.0])
        samples = np.tile(r0, (100, 1))
        field = VelocityField(1, 1.0, COUPLING)
        hist = transport_density([(1.0, samples, field)], t=2.0, bin_width=0.25)
        peak_bin = int(np.argmax(hist.weights))
        center = hist.centers[peak_bin]
        assert abs(center - (r0[0] + 2.0)) <= hist.bin_width
        assert hist.weights[peak_bin] == pytest.approx(hist.total)

    def test_weight_conservation(self):
        rng = np.random.default_rng(4)
        branches = [
            (0.3, rng.standard_normal((4000, 3)), VelocityField(1, 1.0)),
            (0.7, rng.standard_normal((6000, 3)), VelocityField(-1, 1.0)),
        ]
        hist = transport_density(branches, t=5.0, bin_width=0.5)
        assert hist.total == pytest.approx(1.0, abs=1e-12)

    def test_equilibrium_branch_lands_on_translated_density(self):
        # Mixture over all four joint labels on one wing: each branch's
        # transported samples must match the packet translated by i*g*t.
        rng = np.random.default_rng(5)
        g, t, n = 1.0, 4.0, 40_000
        for eigenvalue in (1, -1):
            samples = rng.standard_normal((n, 3))
            field = VelocityField(eigenvalue, g, COUPLING)
            moved = advect_positions(samples, field, 0.0, t)
            stat = ks_statistic_to_cdf(moved[:, 0],
                                       lambda x: norm.cdf(x - eigenvalue * g * t))
            assert stat < ks_critical_value(n, 0.01)

    def test_separation_of_bounded_supports(self):
        # Bounded initial support: once g*t exceeds the support radius the
        # two branch clouds cannot share any x value.
        rng = np.random.default_rng(6)
        width = 2.0
        samples = np.column_stack([
            rng.uniform(-width / 2, width / 2, 3000),
            rng.standard_normal(3000),
            rng.standard_normal(3000),
        ])
        g, t = 1.0, 2.0
        assert g * t > width / 2
        plus = advect_positions(samples.copy(), VelocityField(1, g), 0.0, t)
        minus = advect_positions(samples.copy(), VelocityField(-1, g), 0.0, t)
        assert plus[:, 0].min() > minus[:, 0].max()


class TestEquivarianceProperty:
    def test_advected_equilibrium_matches_translated_packet(self):
        n = 100_000
        rng = np.random.default_rng(7)
        packet = GaussianPacket()
        samples = packet.center + packet.width * rng.standard_normal((n, 3))
        g, t = 1.0, 10.0
        moved = advect_positions(samples, VelocityField(1, g), 0.0, t)
        stat = ks_statistic_to_cdf(moved[:, 0], lambda x: norm.cdf(x - g * t))
        assert stat < ks_critical_value(n, 0.01)
