import io
import math
import warnings

import numpy as np
import pytest

from cascadeq.models import (
    M2OParams, O2MParams, ParameterError, build_m2o, build_o2m, expected_heralds, m2o_efficiency, m2o_t_final,
    o2m_efficiency, o2m_t_final,
)
from cascadeq.mcwf import run_ensemble
from cascadeq.lindblad import lindblad_oracle

TWO_PI = 2 * math.pi


def w(nu):
    return TWO_PI * nu * 1e-3


def hand_heff_o2m(p: O2MParams) -> np.ndarray:
    """H_eff written out on the 18 basis states |s, t, n> (s: G F E, t: G E F)."""
    def idx(s, t, n):
        return s * 6 + t * 2 + n

    sG, sF, sE = 0, 1, 2
    tG, tE, tF = 0, 1, 2
    omega = w(p.drive)  # envelope equals the amplitude at t = t_0
    g, gfe, gfg, geg, kappa = w(p.g_c), w(p.gamma_fe_s), w(p.gamma_fg_t), w(p.gamma_eg_t), w(p.kappa_c)
    h = np.zeros((18, 18), dtype=complex)
    for t in range(3):
        for n in range(2):
            h[idx(sG, t, n), idx(sF, t, n)] += omega
            h[idx(sF, t, n), idx(sG, t, n)] += omega
    for s in range(3):
        h[idx(s, tF, 0), idx(s, tE, 1)] += g
        h[idx(s, tE, 1), idx(s, tF, 0)] += g
        for t in range(3):
            for n in range(2):
                i = idx(s, t, n)
                loss = gfe * (s == sF) + gfg * (t == tF) + geg * (t == tE) + kappa * n
                h[i, i] += -0.5j * loss
    for n in range(2):
        # one-way feed: source F -> E while target G -> F
        h[idx(sE, tF, n), idx(sF, tG, n)] += -1j * math.sqrt(gfe * gfg * p.eta)
    return h


@pytest.mark.parametrize("eta", [1.0, 0.7])
def test_o2m_heff_matches_hand_assembly(eta):
    p = O2MParams(g_c=150.0, gamma_eg_t=210.0, kappa_c=7.0, eta=eta)
    model, psi0 = build_o2m(p)
    got = model.heff(p.center).entries
    np.testing.assert_allclose(got, hand_heff_o2m(p), rtol=0, atol=1e-12)
    assert psi0.amplitudes[0] == 1.0


def test_reverse_cascade_term_absent():
    p = O2MParams()
    model, _ = build_o2m(p)
    h = model.heff(0.0).entries
    # <F_s G_t| H |E_s F_t> would be the reverse feed
    assert abs(h[1 * 6 + 0 * 2, 2 * 6 + 2 * 2]) < 1e-12


def test_channel_layout():
    model, _ = build_o2m(O2MParams(eta=1.0))
    assert model.channel_labels == ("C1", "C2", "C3", "C4")
    heralds = [c.label for c in model.channels if c.herald]
    assert heralds == ["C3"]
    c2 = dict(zip(model.channel_labels, model.channels))["C2"]
    assert np.count_nonzero(c2.op.entries) == 0


def test_o2m_defaults():
    p = O2MParams()
    assert p.drive == pytest.approx(p.gamma_fe_s / 3)
    assert 1e3 / (TWO_PI * p.width) == pytest.approx(p.gamma_fg_t / 3)
    assert p.center == pytest.approx(5 * p.width)
    assert p.check() == []


def test_o2m_warns_on_wide_pulse():
    p = O2MParams(sigma=0.1)
    assert any("bandwidth" in m for m in p.check())
    with pytest.warns(UserWarning):
        build_o2m(p)


@pytest.mark.parametrize("kw", [{"g_c": -1.0}, {"eta": 1.5}, {"cavity_dim": 1}, {"sigma": 0.0}])
def test_o2m_param_validation(kw):
    with pytest.raises(ParameterError):
        O2MParams(**kw)


def test_m2o_structure_and_defaults():
    p = M2OParams()
    assert p.drive == pytest.approx(p.gamma_fg_t / 3)
    model, psi0 = build_m2o(p)
    assert model.space.dim == 6
    assert [c.label for c in model.channels if c.herald] == ["C1'"]
    # |G, 1_c>: target G, cavity 1
    assert psi0.amplitudes[1] == 1.0
    with pytest.raises(ParameterError):
        M2OParams(kappa_c=-3.0)


def test_no_excitation_without_drive():
    p = O2MParams(gamma_fe_s=0.0, omega_0=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, psi0 = build_o2m(p)
        res = run_ensemble(model, psi0, 20.0, n_traj=20, sample_times=[0.0, 20.0],
                           observables=[model.heff(0.0) * 0 + _projector(model, 0)])
    assert res.efficiency == 0.0
    np.testing.assert_allclose(res.observable_mean[-1], [1.0])


def _projector(model, i):
    from cascadeq.hilbert import OperatorMatrix

    m = np.zeros((model.space.dim,) * 2)
    m[i, i] = 1.0
    return OperatorMatrix(model.space, m)


def test_zero_coupling_gives_zero_efficiency():
    assert o2m_efficiency(O2MParams(g_c=0.0), 100).efficiency == 0.0
    assert m2o_efficiency(M2OParams(g_c=0.0, t_final=30.0), 100).efficiency == 0.0
    assert m2o_efficiency(M2OParams(omega_0=0.0, t_final=30.0), 100).efficiency == 0.0


@pytest.mark.slow
def test_at_most_one_herald_per_trajectory_o2m():
    p = O2MParams(g_c=200.0, gamma_eg_t=450.0, kappa_c=0.0, eta=1.0)
    model, psi0 = build_o2m(p)
    buf = io.StringIO()
    run_ensemble(model, psi0, o2m_t_final(p), n_traj=10_000, base_seed=3, jump_log=buf)
    counts = {}
    for line in buf.getvalue().splitlines():
        i, _, label = line.split(", ")
        if label == "C3":
            counts[i] = counts.get(i, 0) + 1
    assert counts
    assert max(counts.values()) == 1


def test_at_most_one_herald_per_trajectory_m2o():
    p = M2OParams(gamma_eg_t=300.0)
    model, psi0 = build_m2o(p)
    buf = io.StringIO()
    run_ensemble(model, psi0, m2o_t_final(p), n_traj=2000, base_seed=9, jump_log=buf)
    counts = {}
    for line in buf.getvalue().splitlines():
        i, _, label = line.split(", ")
        if label == "C1'":
            counts[i] = counts.get(i, 0) + 1
    assert counts and max(counts.values()) == 1


def test_efficiency_invariant_under_time_translation():
    p = O2MParams(g_c=150.0)
    shift = 7.5
    q = p.with_(t_0=p.center + shift, t_final=o2m_t_final(p) + shift)
    m1, s1 = build_o2m(p)
    m2, s2 = build_o2m(q)
    dt = 0.004
    e1 = expected_heralds(m1, s1, o2m_t_final(p), dt)
    e2 = expected_heralds(m2, s2, o2m_t_final(q), dt)
    assert e2 == pytest.approx(e1, abs=2e-3)
    r1 = o2m_efficiency(p, 400, 1)
    r2 = o2m_efficiency(q, 400, 1)
    assert abs(r1.efficiency - r2.efficiency) < 3 * math.hypot(r1.efficiency_stderr, r2.efficiency_stderr) + 1e-9


def test_cavity_loss_suppresses_m2o_efficiency():
    effs = []
    for kappa in (3.0, 100.0, 1000.0, 5000.0):
        p = M2OParams(kappa_c=kappa)
        model, psi0 = build_m2o(p)
        effs.append(expected_heralds(model, psi0, m2o_t_final(p)))
    assert all(b < a for a, b in zip(effs, effs[1:]))
    assert effs[-1] < 0.15


def test_single_excitation_never_reaches_fock_two():
    p = M2OParams(cavity_dim=3, t_final=20.0)
    model, psi0 = build_m2o(p)
    _, rhos = lindblad_oracle(model, psi0.density_matrix(), 20.0, sample_times=np.linspace(0, 20, 21))
    n2 = [i for i in range(model.space.dim) if i % 3 == 2]
    assert np.abs(rhos[:, n2, n2]).max() < 1e-6


def test_t_final_rules():
    assert o2m_t_final(O2MParams(t_final=12.0)) == 12.0
    assert o2m_t_final(O2MParams(g_c=1.0, gamma_eg_t=0.5)) == 200.0
    assert 0 < m2o_t_final(M2OParams()) <= 200.0


def test_o2m_near_optimum_is_efficient():
    res = o2m_efficiency(O2MParams(g_c=200.0, gamma_eg_t=450.0), 1000, 0)
    assert res.efficiency >= 0.9


def test_strict_counting_and_rate_reference():
    p = O2MParams(g_c=100.0, gamma_eg_t=170.0, kappa_c=30.0)
    loose = o2m_efficiency(p, 200, 2)
    strict = o2m_efficiency(p, 200, 2, strict=True)
    assert strict.herald_count <= loose.herald_count
    peak = o2m_efficiency(p, 200, 2, rate_reference="peak")
    assert peak.rate_MHz > loose.rate_MHz
    with pytest.raises(ValueError):
        o2m_efficiency(p, 10, rate_reference="middle")


def test_efficiency_curve_is_unimodal():
    points = []
    for r in (0.15, 0.35, 0.55, 0.9, 1.5, 2.5):
        res = o2m_efficiency(O2MParams(g_c=100.0, gamma_eg_t=r * 300.0), 300, 4)
        points.append((res.efficiency, res.efficiency_stderr))
    _assert_unimodal(points)
    k = int(np.argmax([e for e, _ in points]))
    assert 0 < k < len(points) - 1


def _assert_unimodal(points):
    effs = [e for e, _ in points]
    k = int(np.argmax(effs))
    for (a, sa), (b, sb) in zip(points[:k], points[1:k + 1]):
        assert b >= a - 2 * math.hypot(sa, sb)
    for (a, sa), (b, sb) in zip(points[k:], points[k + 1:]):
        assert b <= a + 2 * math.hypot(sa, sb)
