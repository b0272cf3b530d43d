import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ggmc import (
    ContractViolation,
    MassMatrix,
    NumericalInstability,
    PhaseState,
    SamplerConfig,
    kinetic_energy,
    log_boltzmann,
    make_gaussian,
    negate_momentum,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-2, 1e2, allow_nan=False, allow_infinity=False)


def vectors(d, elements=finite):
    return arrays(np.float64, d, elements=elements)


class TestKineticEnergy:
    def test_zero_momentum(self):
        assert kinetic_energy(np.zeros(3), MassMatrix.identity(3)) == 0.0

    def test_hand_computed(self):
        assert kinetic_energy(np.array([2.0]), MassMatrix([4.0])) == 0.5

    def test_matches_dense_quadratic_form(self, rng):
        for _ in range(20):
            m = rng.normal(size=5)
            diag = rng.uniform(0.1, 10.0, size=5)
            dense = np.diag(diag)
            expected = 0.5 * m @ np.linalg.inv(dense) @ m
            got = kinetic_energy(m, MassMatrix(diag))
            assert got == pytest.approx(expected, rel=1e-14, abs=0)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            kinetic_energy(np.ones(3), MassMatrix.identity(2))

    def test_batched(self, rng):
        m = rng.normal(size=(7, 3))
        mass = MassMatrix([1.0, 2.0, 3.0])
        batched = kinetic_energy(m, mass)
        assert batched.shape == (7,)
        for row, k in zip(m, batched):
            assert k == pytest.approx(kinetic_energy(row, mass), rel=1e-15)

    @given(vectors(4), vectors(4, positive))
    def test_positive_semidefinite(self, m, diag):
        k = kinetic_energy(m, MassMatrix(diag))
        assert k >= 0.0
        assert (k == 0.0) == bool(np.all(m == 0.0)) or k < 1e-300


class TestMassMatrix:
    @given(vectors(3, positive), vectors(3))
    def test_sqrt_consistency(self, diag, v):
        mass = MassMatrix(diag)
        np.testing.assert_allclose(mass.sqrt_apply(mass.sqrt_apply(v)), mass.apply(v), rtol=1e-12)
        np.testing.assert_allclose(
            mass.inverse_sqrt_apply(mass.inverse_sqrt_apply(v)), mass.inverse_apply(v), rtol=1e-12
        )
        np.testing.assert_allclose(mass.inverse_apply(mass.apply(v)), v, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("diag", [[1.0, 0.0], [-1.0], [np.inf], []])
    def test_rejects_non_positive(self, diag):
        with pytest.raises(ContractViolation):
            MassMatrix(diag)

    def test_immutable(self):
        mass = MassMatrix([1.0, 2.0])
        with pytest.raises(ValueError):
            mass.diag[0] = 5.0


class TestPhaseState:
    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            PhaseState([1.0, 2.0], [1.0])

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(NumericalInstability):
            PhaseState([0.0, bad], [0.0, 0.0])

    def test_scalar_promoted(self):
        s = PhaseState(1.0, 2.0)
        assert s.dim == 1

    def test_does_not_alias_input(self):
        theta = np.array([1.0, 2.0])
        s = PhaseState(theta, np.zeros(2))
        theta[0] = 99.0
        assert s.theta[0] == 1.0


class TestSamplerConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(step_size=0.0),
            dict(step_size=-1.0),
            dict(step_size=0.1, friction=-0.1),
            dict(step_size=0.1, friction=math.inf),
            dict(step_size=0.1, temperature=0.0),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ContractViolation):
            SamplerConfig(**kwargs)

    def test_momentum_permanence_is_exact_exponential(self):
        cfg = SamplerConfig(0.5, 0.2)
        assert cfg.momentum_permanence == math.exp(-0.1)
        assert SamplerConfig(0.5, 0.0).momentum_permanence == 1.0

    def test_default_mass_is_identity(self):
        assert SamplerConfig(0.1).mass_for(3) == MassMatrix.identity(3)
        with pytest.raises(ContractViolation):
            SamplerConfig(0.1, mass=MassMatrix([1.0])).mass_for(2)


class TestLogBoltzmann:
    def test_zero(self):
        flat = make_gaussian([0.0], [1.0])
        assert log_boltzmann(PhaseState([0.0], [0.0]), flat, SamplerConfig(0.1)) == 0.0

    def test_standard_gaussian(self, std_normal):
        assert log_boltzmann(PhaseState([1.0], [1.0]), std_normal, SamplerConfig(0.1)) == -1.0

    @given(finite, finite)
    def test_temperature_scaling(self, theta, m):
        target = make_gaussian([0.3], [2.0])
        s = PhaseState([theta], [m])
        one = log_boltzmann(s, target, SamplerConfig(0.1, temperature=1.0))
        two = log_boltzmann(s, target, SamplerConfig(0.1, temperature=2.0))
        assert two == pytest.approx(one / 2, rel=1e-15, abs=0)

    def test_differences_are_energy_differences(self, rng, gauss2d):
        cfg = SamplerConfig(0.1)
        for _ in range(10):
            a = PhaseState(rng.normal(size=2), rng.normal(size=2))
            b = PhaseState(rng.normal(size=2), rng.normal(size=2))
            h_a = gauss2d.potential(a.theta) + kinetic_energy(a.momentum, cfg.mass_for(2))
            h_b = gauss2d.potential(b.theta) + kinetic_energy(b.momentum, cfg.mass_for(2))
            diff = log_boltzmann(b, gauss2d, cfg) - log_boltzmann(a, gauss2d, cfg)
            assert diff == -(h_b - h_a)

    def test_non_finite_potential(self):
        from ggmc import TargetModel

        bad = TargetModel(1, lambda t: math.inf, lambda t: np.zeros(1))
        with pytest.raises(NumericalInstability):
            log_boltzmann(PhaseState([0.0], [0.0]), bad, SamplerConfig(0.1))


class TestNegateMomentum:
    @given(vectors(3), vectors(3))
    def test_involution(self, theta, m):
        s = PhaseState(theta, m)
        once = negate_momentum(s)
        np.testing.assert_array_equal(once.theta, s.theta)
        np.testing.assert_array_equal(once.momentum, -s.momentum)
        assert negate_momentum(once) == s

    @settings(max_examples=50)
    @given(vectors(3), vectors(3), vectors(3, positive))
    def test_energy_invariant(self, theta, m, diag):
        mass = MassMatrix(diag)
        s = PhaseState(theta, m)
        assert kinetic_energy(negate_momentum(s).momentum, mass) == kinetic_energy(m, mass)
        target = make_gaussian(np.zeros(3), np.ones(3))
        cfg = SamplerConfig(0.1, mass=mass)
        assert log_boltzmann(negate_momentum(s), target, cfg) == log_boltzmann(s, target, cfg)
