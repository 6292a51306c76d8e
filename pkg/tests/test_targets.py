import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nutslab import (
    PhasePoint,
    diag_gaussian,
    hamiltonian,
    perturbed_gaussian,
    potential_eval,
    potential_grad,
    power_law,
    std_gaussian,
)
from conftest import random_orthogonal


def test_potential_values():
    assert potential_eval(std_gaussian(1), [0.0]) == 0.0
    assert potential_eval(power_law(1.0, 4.0, 1), [2.0]) == pytest.approx(16.0)
    assert potential_eval(std_gaussian(2), [3.0, 4.0]) == pytest.approx(12.5)


def test_gradient_values():
    np.testing.assert_allclose(potential_grad(std_gaussian(2), [3.0, 4.0]), [3.0, 4.0])
    np.testing.assert_allclose(potential_grad(power_law(1.0, 4.0, 1), [2.0]), [32.0])
    np.testing.assert_allclose(
        potential_grad(diag_gaussian([1.0, 2.0]), [1.0, 1.0]), [1.0, 0.25])


def test_hamiltonian_values():
    assert hamiltonian(std_gaussian(1), PhasePoint([0.0], [0.0])) == 0.0
    assert hamiltonian(std_gaussian(1), PhasePoint([1.0], [0.0])) == pytest.approx(0.5)
    assert hamiltonian(power_law(1.0, 4.0, 1), PhasePoint([1.0], [2.0])) == pytest.approx(3.0)


def test_dimension_and_finiteness_errors():
    t = std_gaussian(3)
    with pytest.raises(ValueError):
        potential_eval(t, [1.0, 2.0])
    with pytest.raises(ValueError):
        potential_grad(t, [1.0, np.inf, 0.0])
    with pytest.raises(ValueError):
        hamiltonian(t, PhasePoint([1.0], [1.0]))
    with pytest.raises(ValueError):
        PhasePoint([1.0, 2.0], [1.0])


def test_power_law_requires_positive_parameters():
    with pytest.raises(ValueError):
        power_law(-1.0, 2.0)
    with pytest.raises(ValueError):
        power_law(1.0, 0.0)


def test_power_law_gradient_at_origin():
    np.testing.assert_allclose(potential_grad(power_law(1.0, 2.5, 2), [0.0, 0.0]), 0.0)
    with pytest.raises(ValueError):
        potential_grad(power_law(1.0, 1.5, 2), [0.0, 0.0])


def _targets_for_fd():
    return [
        (std_gaussian(3), 1.0),
        (diag_gaussian([0.5, 1.0, 2.0]), 1.0),
        (power_law(0.7, 4.0, 3), 1.0),
        (power_law(1.3, 1.5, 3), 2.0),  # offset keeps q away from the origin
    ]


def test_gradient_matches_finite_differences(rng):
    step = 1e-5
    for target, offset in _targets_for_fd():
        for _ in range(100):
            q = rng.standard_normal(target.d) + offset
            g = potential_grad(target, q)
            fd = np.empty_like(g)
            for i in range(target.d):
                e = np.zeros(target.d)
                e[i] = step
                fd[i] = (potential_eval(target, q + e) - potential_eval(target, q - e)) / (2 * step)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)


def test_rotation_invariance(rng):
    for target in (std_gaussian(4), power_law(0.9, 3.0, 4)):
        for _ in range(20):
            q = rng.standard_normal(4)
            R = random_orthogonal(4, rng)
            assert abs(potential_eval(target, R @ q) - potential_eval(target, q)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(min_value=0.1, max_value=6.0,
                      allow_nan=False, allow_infinity=False))
def test_power_law_tag_classification(beta):
    tags = power_law(1.0, beta).profile.satisfies
    if beta <= 1.0:
        assert "H2i" in tags
    elif beta < 2.0:
        assert "H3" in tags and "H2ii" not in tags
    elif beta == 2.0:
        assert {"H1", "H3", "H4"} <= tags
    else:
        assert "H2ii" in tags and "H1" not in tags


def test_growth_exponent_recorded():
    t = power_law(1.0, 1.5)
    assert t.profile.growth_m == pytest.approx(1.5)
    assert t.profile.tail_beta == pytest.approx(1.5)


def test_std_gaussian_is_unit_diag():
    t = std_gaussian(3)
    assert t.label == "StdGaussian"
    np.testing.assert_allclose(t.aux, 1.0)
    assert {"H1", "H3", "H4"} <= t.profile.satisfies


def test_perturbed_gaussian_callbacks():
    t = perturbed_gaussian([1.0, 1.0],
                           u_tilde=lambda q: 0.1 * np.sin(q[0]),
                           grad_u_tilde=lambda q: np.array([0.1 * np.cos(q[0]), 0.0]))
    q = np.array([0.3, -0.7])
    assert potential_eval(t, q) == pytest.approx(0.5 * q @ q + 0.1 * np.sin(0.3))
    np.testing.assert_allclose(potential_grad(t, q), q + [0.1 * np.cos(0.3), 0.0])
    assert "H4" in t.profile.satisfies
    assert not t.jit_compatible
