"""Acceptance criteria, one test per criterion, each recording a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the summary lines appear at the
end of the report. Expected failures are marked ``xfail(strict=True)``: the
check still runs at its stated tolerance and prints FAIL, and an unexpected
pass turns the run red. The reasoning for each is in the decisions ledger.
"""

import math
import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from cascadeq.analytic import AnalyticParams, DeviceParams, coupling_report, efficiency, optimal_gamma_eg
from cascadeq.cli import SEED_ENV, main
from cascadeq.lindblad import compare_with_oracle
from cascadeq.models import (
    M2OParams, O2MParams, build_m2o, build_o2m, build_two_level, level_observables, m2o_efficiency,
    m2o_t_final, o2m_efficiency, o2m_t_final,
)
from cascadeq.transfer import ProtocolParams, TimeBinQubit, erasure_herald, run_transfer

pytestmark = pytest.mark.slow

GAMMA_FG = 300.0
KAPPA = 3.0


# 1. oracle equivalence ---------------------------------------------------------

def _oracle_case(name):
    if name == "two-level":
        model, psi0 = build_two_level(100.0)
        return model, psi0, 8.0
    if name == "rabi":
        model, psi0 = build_two_level(20.0, 50.0, excited=False)
        return model, psi0, 20.0
    if name == "o2m":
        p = O2MParams(g_c=100.0)
        model, psi0 = build_o2m(p)
        return model, psi0, o2m_t_final(p)
    p = M2OParams()
    model, psi0 = build_m2o(p)
    return model, psi0, m2o_t_final(p)


@pytest.mark.parametrize("name,cid", [("two-level", "1a"), ("rabi", "1b"), ("o2m", "1c"), ("m2o", "1d")])
def test_c1_oracle_equivalence(name, cid, acceptance):
    model, psi0, t_final = _oracle_case(name)
    start = time.perf_counter()
    rep = compare_with_oracle(model, psi0, t_final, level_observables(model.space), n_traj=5000, seed=0,
                              n_points=50)
    took = time.perf_counter() - start
    worst, at = rep.worst()
    ok = acceptance(cid, rep.passed and rep.times.size == 50,
                    f"{name} (dim {model.space.dim}) N=5000, 50 points: max |MC-oracle|/stderr = "
                    f"{rep.max_deviation:.2f} (limit 3, worst {worst} at {at:.3g} ns), {took:.1f} s")
    assert ok


# 2. analytic identities --------------------------------------------------------

def test_c2_analytic_identities(acceptance):
    exact_zero = efficiency(AnalyticParams(GAMMA_FG, 0.0, 100.0)) == 0.0 and \
        efficiency(AnalyticParams(GAMMA_FG, 250.0, 0.0)) == 0.0
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        gfg = rng.uniform(10.0, 2000.0)
        g = rng.uniform(1.0, 800.0)
        g_opt = optimal_gamma_eg(gfg, g)
        grid = np.linspace(0.0, 4 * g_opt, 4001)
        step = grid[1] - grid[0]
        zs = [efficiency(AnalyticParams(gfg, x, g)) for x in grid]
        worst = max(worst, abs(grid[int(np.argmax(zs))] - g_opt) / step)
    ok = acceptance("2", exact_zero and worst <= 1.0,
                    f"zeta(Gamma_EG=0)=zeta(g_c=0)=0 exactly: {exact_zero}; "
                    f"grid argmax vs sqrt(A^2+g^2) over 100 draws: worst {worst:.2f} grid steps (limit 1)")
    assert ok


# 3. efficiency band ------------------------------------------------------------

@lru_cache(maxsize=None)
def _o2m_point(g_c: float, gamma_eg: float, n_traj: int = 1000):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = o2m_efficiency(O2MParams(gamma_fg_t=GAMMA_FG, gamma_eg_t=gamma_eg, g_c=g_c, kappa_c=KAPPA),
                             n_traj, seed=0)
    return res.efficiency, res.efficiency_stderr, res.rate_MHz


@pytest.mark.xfail(strict=True, reason="closed form carries a -i g_c term absent from the resonant model; "
                                       "see decisions ledger")
def test_c3a_mc_matches_closed_form(acceptance):
    ratios = np.linspace(0.1, 2.5, 7)
    worst = (0.0, None)
    failures = 0
    for g in (50.0, 100.0):
        for r in ratios:
            e, se, _ = _o2m_point(g, float(r) * GAMMA_FG)
            z = efficiency(AnalyticParams(GAMMA_FG, float(r) * GAMMA_FG, g))
            tol = max(0.05, 3 * se)
            if abs(e - z) > tol:
                failures += 1
            if abs(e - z) - tol > worst[0]:
                worst = (abs(e - z) - tol, (g, float(r), e, z))
    detail = f"{failures}/14 grid points outside max(0.05, 3 stderr)"
    if worst[1]:
        g, r, e, z = worst[1]
        detail += f"; worst g_c={g:g} MHz ratio={r:.2f}: MC {e:.3f} vs zeta {z:.3f}"
    ok = acceptance("3a", failures == 0, detail)
    assert ok


def _peak(g: float):
    g_opt = optimal_gamma_eg(GAMMA_FG, g)
    pts = [(_o2m_point(g, f * g_opt), f * g_opt) for f in (0.8, 1.0, 1.25)]
    (e, se, _), x = max(pts, key=lambda p: p[0][0])
    return e, se, x


@pytest.mark.xfail(strict=True, reason="finite pulse bandwidth costs more at g_c=400 than at 200; "
                                       "see decisions ledger")
def test_c3b_peak_non_decreasing(acceptance):
    peaks = {g: _peak(g) for g in (50.0, 100.0, 200.0, 400.0)}
    vals = [peaks[g][0] for g in sorted(peaks)]
    ok = all(b >= a for a, b in zip(vals, vals[1:]))
    desc = ", ".join(f"{g:g}: {e:.3f}+/-{se:.3f}" for g, (e, se, _) in sorted(peaks.items()))
    ok = acceptance("3b", ok, f"peak MC efficiency near Gamma* by g_c [MHz]: {desc}")
    assert ok


def test_c3c_peak_above_ninety_percent(acceptance):
    e, se, x = _peak(200.0)
    ok = acceptance("3c", e > 0.9, f"g_c=200 MHz peak {e:.3f}+/-{se:.3f} at Gamma_EG={x:.0f} MHz (need > 0.9)")
    assert ok


# 4. m2o efficiency point -------------------------------------------------------

def test_c4_m2o_efficiency(acceptance):
    res = m2o_efficiency(M2OParams(gamma_fg_t=GAMMA_FG, gamma_eg_t=0.1 * GAMMA_FG, g_c=200.0, kappa_c=KAPPA),
                         10_000, seed=0)
    ok = acceptance("4", res.efficiency > 0.9 and res.efficiency_stderr < 0.01,
                    f"m2o g_c=200 MHz ratio 0.1 N=10^4: {res.efficiency:.4f}+/-{res.efficiency_stderr:.4f}")
    assert ok


# 5. rates ----------------------------------------------------------------------

@lru_cache(maxsize=None)
def _m2o_rate(g: float):
    n = 1000 if g in (50.0, 600.0) else 2000
    res = m2o_efficiency(M2OParams(gamma_fg_t=GAMMA_FG, gamma_eg_t=GAMMA_FG, g_c=g, kappa_c=KAPPA), n, seed=0)
    return res.rate_MHz


def test_c5a_o2m_rate_band(acceptance):
    rates = {g: _o2m_point(g, GAMMA_FG)[2] for g in (100.0, 150.0, 200.0)}
    ok = all(r is not None and 55 <= r <= 220 for r in rates.values())
    desc = ", ".join(f"g_c={g:g}: {r:.1f}" for g, r in rates.items())
    ok = acceptance("5a", ok, f"o2m rate [MHz] at ratio 1 ({desc}); band [55, 220]")
    assert ok


def test_c5b_m2o_rate_band(acceptance):
    r = _m2o_rate(200.0)
    ok = acceptance("5b", r is not None and 85 <= r <= 340, f"m2o rate at g_c=200 MHz, ratio 1: {r:.1f} MHz; "
                                                              "band [85, 340]")
    assert ok


def test_c5c_m2o_rate_falls_above_gamma_fg(acceptance):
    above = [(g, _m2o_rate(g)) for g in (300.0, 400.0, 600.0)]
    ok = all(b < a for (_, a), (_, b) in zip(above, above[1:]))
    desc = ", ".join(f"{g:g}: {r:.1f}" for g, r in above)
    ok = acceptance("5c", ok, f"m2o rate [MHz] for g_c >= Gamma_FG ({desc}) strictly decreasing")
    assert ok


@pytest.mark.xfail(strict=True, reason="rate turns over near g_c = 2 Gamma_FG / 3, not at Gamma_FG; "
                                       "see decisions ledger")
def test_c5d_m2o_rate_rises_below_gamma_fg(acceptance):
    below = [(g, _m2o_rate(g)) for g in (50.0, 100.0, 150.0, 200.0, 250.0)]
    ok = all(b > a for (_, a), (_, b) in zip(below, below[1:]))
    desc = ", ".join(f"{g:g}: {r:.1f}" for g, r in below)
    ok = acceptance("5d", ok, f"m2o rate [MHz] for g_c < Gamma_FG ({desc}) strictly increasing")
    assert ok


# 6. device calculator ----------------------------------------------------------

def test_c6_device_calculator(acceptance):
    rep = coupling_report(DeviceParams())
    ok = 2.3 <= rep.e_rms <= 3.3 and abs(rep.p / 8e-28 - 1) <= 0.05 and 100 <= rep.g_c_mhz <= 300
    ok = acceptance("6", ok, f"E_rms={rep.e_rms:.3f} V/m, p={rep.p:.3e} C m, g_c={rep.g_c_mhz:.1f} MHz")
    assert ok


# 7. transfer protocol ----------------------------------------------------------

def test_c7a_ideal_transfer(acceptance):
    rng = np.random.default_rng(7)
    params = ProtocolParams(conversion=O2MParams(g_c=200.0, kappa_c=0.0), injection="ideal")
    fids = []
    for _ in range(20):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        fids.append(run_transfer(TimeBinQubit(complex(v[0]), complex(v[1])), params, n_traj=1).fidelity)
    ok = acceptance("7a", min(fids) >= 0.99, f"ideal limit, 20 random qubits: min fidelity {min(fids):.6f}")
    assert ok


def test_c7b_syndrome_consistency(acceptance):
    q = TimeBinQubit(1 / math.sqrt(2), 1 / math.sqrt(2))
    out = run_transfer(q, ProtocolParams(conversion=O2MParams(g_c=200.0, kappa_c=KAPPA), g_t=50.0), 300, seed=0)
    diff = abs(out.syndrome - (1 - out.success_prob))
    tol = 3 * math.hypot(out.syndrome_stderr, out.success_stderr)
    ok = acceptance("7b", out.fidelity < 1 and diff <= tol,
                    f"realistic: fidelity {out.fidelity:.3f}, syndrome {out.syndrome:.4f}, "
                    f"1-success {1 - out.success_prob:.4f}, |diff| {diff:.2e} <= {tol:.2e}")
    assert ok


def test_c7c_single_detector_erasure(acceptance):
    p = erasure_herald(1 / math.sqrt(2), 1 / math.sqrt(2), 1.0).herald_prob
    ok = acceptance("7c", p == 0.5, f"single detector, unit efficiency: herald probability {p!r}")
    assert ok


# 8. determinism ----------------------------------------------------------------

SWEEPS = [
    ["--model", "o2m", "--param", "g_c", "--min", "100MHz", "--max", "200MHz", "--points", "2", "--n-traj", "60"],
    ["--model", "m2o", "--param", "ratio", "--min", "0.1", "--max", "1", "--points", "2", "--n-traj", "60"],
    ["--model", "transfer", "--param", "g_t", "--min", "40MHz", "--max", "60MHz", "--points", "2", "--n-traj", "8"],
    ["--model", "analytic", "--param", "g_c", "--min", "50MHz", "--max", "400MHz", "--points", "8"],
]


def test_c8_determinism(acceptance, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV, "20240601")
    same = []
    for k, argv in enumerate(SWEEPS):
        outs = []
        for threads in (1, 8, 1):
            path = tmp_path / f"s{k}_{threads}_{len(outs)}.csv"
            assert main(["sweep", *argv, "--out", str(path), "--threads", str(threads)]) == 0
            outs.append(path.read_bytes())
        same.append(outs[0] == outs[1] == outs[2])
    capsys.readouterr()
    ok = acceptance("8", all(same), f"sweep CSV byte-identical at 1, 8, 1 threads for o2m/m2o/transfer/analytic: "
                                    f"{same}")
    assert ok
