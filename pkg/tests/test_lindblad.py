import math

import numpy as np
import pytest

from cascadeq.hilbert import HilbertSpec, basis_state
from cascadeq.lindblad import OracleError, compare_with_oracle, lindblad_oracle, scaled_channels
from cascadeq.mcwf import EffectiveModel
from cascadeq.models import M2OParams, O2MParams, angular, build_m2o, build_o2m, build_two_level, level_observables


def test_decay_population_is_exponential():
    model, psi0 = build_two_level(100.0)
    times = np.linspace(0, 8, 33)
    _, rhos = lindblad_oracle(model, psi0.density_matrix(), 8.0, 0.002, sample_times=times)
    np.testing.assert_allclose(rhos[:, 1, 1].real, np.exp(-angular(100.0) * times), atol=1e-6)


def test_trace_preserved_on_full_o2m_model():
    p = O2MParams(g_c=150.0, eta=0.8)
    model, psi0 = build_o2m(p)
    times = np.linspace(0, 20, 41)
    _, rhos = lindblad_oracle(model, psi0.density_matrix(), 20.0, sample_times=times)
    tr = np.trace(rhos, axis1=1, axis2=2)
    np.testing.assert_allclose(tr.real, 1.0, atol=1e-8)
    np.testing.assert_allclose(rhos, np.conj(np.transpose(rhos, (0, 2, 1))), atol=1e-10)


def _liouvillian(model: EffectiveModel) -> np.ndarray:
    # row-major vec: vec(A rho B) = (A kron B^T) vec(rho)
    h = model.heff(0.0).entries
    d = h.shape[0]
    eye = np.eye(d)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.conj()))
    for c in model.channels:
        j = c.op.entries
        gen += np.kron(j, j.conj())
    return gen


def test_m2o_oracle_matches_eigendecomposition():
    model, psi0 = build_m2o(M2OParams(gamma_eg_t=120.0, kappa_c=20.0))
    gen = _liouvillian(model)
    vals, vecs = np.linalg.eig(gen)
    rho0 = psi0.density_matrix().reshape(-1)
    coef = np.linalg.solve(vecs, rho0)
    times = np.linspace(0, 10, 11)
    _, rhos = lindblad_oracle(model, psi0.density_matrix(), 10.0, 0.001, sample_times=times)
    for t, rho in zip(times, rhos):
        exact = (vecs @ (np.exp(vals * t) * coef)).reshape(rho.shape)
        np.testing.assert_allclose(rho, exact, atol=1e-7)


def test_oracle_rejects_bad_input():
    model, psi0 = build_two_level(10.0)
    with pytest.raises(OracleError):
        lindblad_oracle(model, np.eye(2), 1.0)  # trace 2
    with pytest.raises(OracleError):
        lindblad_oracle(model, np.eye(3) / 3, 1.0)
    big = HilbertSpec([("x", 200)])
    with pytest.raises(OracleError):
        lindblad_oracle(EffectiveModel(big), basis_state(big).density_matrix(), 1.0)


def test_compare_with_oracle_passes_and_detects_perturbation():
    model, psi0 = build_two_level(20.0, 50.0, excited=False)
    obs = level_observables(model.space)
    good = compare_with_oracle(model, psi0, 20.0, obs, n_traj=2000, seed=1)
    assert good.passed
    assert good.times.size == 50
    bad = compare_with_oracle(model, psi0, 20.0, obs, n_traj=2000, seed=1,
                              oracle_model=scaled_channels(model, 1.5))
    assert not bad.passed
    name, t = bad.worst()
    assert name in obs and 0 <= t <= 20.0


def test_scaled_channels_scales_rates():
    model, _ = build_two_level(10.0)
    scaled = scaled_channels(model, 4.0)
    ratio = np.abs(scaled.channels[0].op.entries).max() / np.abs(model.channels[0].op.entries).max()
    assert ratio == pytest.approx(math.sqrt(4.0))
