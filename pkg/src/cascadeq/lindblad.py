"""Dense master-equation oracle for checking trajectory ensembles.

The generator is rebuilt from the same ``EffectiveModel``:

    d rho/dt = -i (H_eff rho - rho H_eff^dag) + sum_c C_c rho C_c^dag

which is the usual Lindblad form when the extra (cascade) terms are
Hermitian, and the cascaded-systems master equation for the models here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import OperatorMatrix, StateVector
from .mcwf import CollapseChannel, EffectiveModel, run_ensemble

MAX_ORACLE_DIM = 128


class OracleError(ValueError):
    pass


def _check_density(rho: np.ndarray, tol: float = 1e-10) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise OracleError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise OracleError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise OracleError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise OracleError("density matrix is not positive semidefinite")


def lindblad_oracle(
    model: EffectiveModel,
    rho0: np.ndarray,
    t_final: float,
    dt: float | None = None,
    *,
    t_start: float = 0.0,
    sample_times=None,
) -> tuple[np.ndarray, np.ndarray]:
    """RK4-integrate the master equation; returns ``(times, rhos)``.

    Without ``sample_times`` every integration step is recorded.
    """
    d = model.space.dim
    if d > MAX_ORACLE_DIM:
        raise OracleError(f"oracle dimension {d} exceeds cap {MAX_ORACLE_DIM}")
    rho = np.array(rho0, dtype=np.complex128)
    if rho.shape != (d, d):
        raise OracleError(f"rho0 has shape {rho.shape}, expected {(d, d)}")
    _check_density(rho)
    dt = dt or model.default_dt()
    static, hs, env = model.split()
    chans = [c.op.entries for c in model.channels]
    from ._kernel import envelope_value

    def heff(t):
        m = static.copy()
        for h, row in zip(hs, env):
            m += envelope_value(row, t) * h
        return m

    def rhs(t, r):
        h = heff(t)
        out = -1j * (h @ r - r @ h.conj().T)
        for c in chans:
            out += c @ r @ c.conj().T
        return out

    if sample_times is None:
        n = max(1, int(np.ceil((t_final - t_start) / dt - 1e-9)))
        grid = np.linspace(t_start, t_final, n + 1)
        sample_times = grid
    sample_times = np.asarray(sample_times, dtype=float)
    out = np.empty((sample_times.size, d, d), dtype=np.complex128)
    t = t_start
    k = 0
    while k < sample_times.size and sample_times[k] <= t:
        out[k] = rho
        k += 1
    while k < sample_times.size:
        target = sample_times[k]
        while t < target:
            h = min(dt, target - t)
            k1 = rhs(t, rho)
            k2 = rhs(t + h / 2, rho + h / 2 * k1)
            k3 = rhs(t + h / 2, rho + h / 2 * k2)
            k4 = rhs(t + h, rho + h * k3)
            rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = target if target - (t + h) < 1e-12 else t + h
        out[k] = rho
        k += 1
    return sample_times, out


def expectation_series(rhos: np.ndarray, op: np.ndarray) -> np.ndarray:
    return np.einsum("ij,tji->t", op, rhos).real


@dataclass
class OracleReport:
    """Trajectory ensemble against the master equation on a time grid."""

    names: list[str]
    times: np.ndarray
    mc_mean: np.ndarray
    mc_stderr: np.ndarray
    oracle: np.ndarray
    deviation: np.ndarray  # |mc - oracle| / max(stderr, 1 / n_traj)
    n_traj: int
    threshold: float = 3.0

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max()) if self.deviation.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.threshold

    def worst(self) -> tuple[str, float]:
        t_idx, o_idx = np.unravel_index(int(np.argmax(self.deviation)), self.deviation.shape)
        return self.names[o_idx], float(self.times[t_idx])


def scaled_channels(model: EffectiveModel, factor: float) -> EffectiveModel:
    """Copy of ``model`` with every channel rate multiplied by ``factor``."""
    s = float(np.sqrt(factor))
    chans = tuple(CollapseChannel(c.label, s * c.op, c.herald) for c in model.channels)
    return EffectiveModel(model.space, model.hermitian_terms, chans, model.extra_terms)


def compare_with_oracle(
    model: EffectiveModel,
    psi0: StateVector,
    t_final: float,
    observables: dict[str, OperatorMatrix],
    n_traj: int = 5000,
    seed: int = 0,
    *,
    n_points: int = 50,
    dt: float | None = None,
    threads: int = 1,
    oracle_model: EffectiveModel | None = None,
    threshold: float = 3.0,
) -> OracleReport:
    """Ensemble means of ``observables`` against the master equation.

    The standard error is floored at ``1 / n_traj``, the resolution of an
    ensemble of that size, so points where every trajectory agrees are not
    judged against a zero error bar.
    """
    times = np.linspace(0.0, t_final, n_points)
    names = list(observables)
    ops = [observables[k] for k in names]
    res = run_ensemble(model, psi0, t_final, dt, n_traj, seed, threads=threads,
                       sample_times=times, observables=ops)
    _, rhos = lindblad_oracle(oracle_model or model, psi0.density_matrix(), t_final, dt, sample_times=times)
    ref = np.einsum("oij,tji->to", np.array([o.entries for o in ops]), rhos).real
    floor = 1.0 / res.n_traj
    dev = np.abs(res.observable_mean - ref) / np.maximum(res.observable_stderr, floor)
    return OracleReport(names, times, res.observable_mean, res.observable_stderr, ref, dev, res.n_traj, threshold)
