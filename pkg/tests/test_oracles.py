import numpy as np
import pytest

from dsdm import model, verification as v
from dsdm.model import HybridState, Mode
from dsdm.params import ActuatorParams


def test_lagrangian_matrices_match_printed_forms():
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = v.random_params(rng)
        H, D, B = v.lagrangian_matrices(p)
        np.testing.assert_allclose(H, p.mass_matrix(), rtol=1e-12)
        np.testing.assert_allclose(D, p.damping_matrix(), rtol=1e-12)
        np.testing.assert_allclose(B, p.input_matrix(), rtol=1e-12)


def test_constrained_impact_by_hand():
    # H = diag(2, 3), locked w_1: only w_o responds to the impulse
    H = np.diag([2.0, 3.0])
    w = v.constrained_impact(H, np.array([1.0, 4.0]), np.array([1.0, 0.0]), lock_w1=True)
    np.testing.assert_allclose(w, [1.5, 0.0])
    w = v.constrained_impact(H, np.array([1.0, 4.0]), np.array([1.0, 0.0]), lock_w1=False)
    np.testing.assert_allclose(w, [1.5, 4.0])


def test_oracle_downshift_fitted(fitted):
    w = v.oracle_downshift(fitted, [1.0, 23.37])
    assert w[0] == pytest.approx(3.449e-5, abs=1e-7)
    assert w[1] == pytest.approx(0.0, abs=1e-12)


def test_oracle_hf_impact_dead_stop(fitted):
    w = v.oracle_impact_hf(fitted, [2.0, 0.0], -0.44)
    assert w == pytest.approx([0.0, 0.0], abs=1e-10)


def test_momentum_identity_check():
    r = v.check_momentum_identity(seed=0, cases=1000)
    assert r.passed, r.failure
    assert r.worst <= 1e-9


def test_oracle_equivalence_check():
    r = v.check_oracle_equivalence(seed=0, cases=1000)
    assert r.passed, r.failure


def test_dissipation_check():
    r = v.check_downshift_dissipation(seed=0, cases=1000)
    assert r.passed, r.failure
    assert r.worst < 0


def test_simplified_bound_check():
    r = v.check_simplified_bound(seed=0, cases=1000)
    assert r.passed, r.failure
    # bounded by 3 (R1^2 I_1)/(R2^2 I_2)
    assert r.worst <= 3 / 425


def test_b_matrix_sign_flip_is_caught(monkeypatch):
    good = ActuatorParams.input_matrix

    def flipped(self):
        B = good(self)
        B[1, 1] = -B[1, 1]
        return B

    monkeypatch.setattr(ActuatorParams, "input_matrix", flipped)
    r = v.check_oracle_equivalence(seed=0, cases=20)
    assert not r.passed
    assert r.failure["map"] == "dynamics_hs"


def test_mass_coupling_sign_flip_is_caught(monkeypatch):
    good = ActuatorParams.mass_matrix

    def flipped(self):
        H = good(self)
        H[0, 1] = H[1, 0] = -H[0, 1]
        return H

    monkeypatch.setattr(ActuatorParams, "mass_matrix", flipped)
    assert not v.check_oracle_equivalence(seed=0, cases=20).passed


def test_downshift_denominator_mutation_is_caught(monkeypatch):
    monkeypatch.setattr(model, "downshift_denominator", lambda p: p.R1)
    r = v.check_oracle_equivalence(seed=0, cases=20)
    assert not r.passed and r.failure["map"] == "downshift"


def test_seed_reproduces_instances():
    a, b = np.random.default_rng(7), np.random.default_rng(7)
    for _ in range(20):
        assert v.random_params(a) == v.random_params(b)
        assert v.random_hs_state(a) == v.random_hs_state(b)
        assert v.random_impulse(a) == v.random_impulse(b)
    r1 = v.check_oracle_equivalence(seed=5, cases=50)
    r2 = v.check_oracle_equivalence(seed=5, cases=50)
    assert r1.worst == r2.worst


def test_nullspace_invariance_check():
    r = v.check_nullspace_invariance(seed=0, cases=1, duration=0.2)
    assert r.passed, r.failure


def test_check_line_format():
    r = v.CheckResult("x", 3, 1e-12, 1e-9)
    assert r.line().startswith("[PASS] x: 3 cases")
    r.failure = {}
    assert r.line().startswith("[FAIL]")
