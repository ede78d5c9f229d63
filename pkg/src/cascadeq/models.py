"""Optical-to-microwave and microwave-to-optical conversion models.

All rates are entered as nu = omega / 2 pi in MHz and converted to rad/ns.
Level orderings: source (G, F, E), target CQD (G, E, F), cavity Fock 0..n.
Everything is on resonance, so the Hamiltonians are written in the rotating
frame without detunings.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .hilbert import (
    HilbertSpec, OperatorMatrix, StateVector, annihilation_op, basis_state, transition_op,
)
from .mcwf import CollapseChannel, DriveEnvelope, EffectiveModel, EnsembleResult, run_ensemble

SOURCE = "source"
TARGET = "target"
CAVITY = "cavity"

SOURCE_LEVELS = {"G": 0, "F": 1, "E": 2}
TARGET_LEVELS = {"G": 0, "E": 1, "F": 2}

T_FINAL_CAP = 200.0


class ParameterError(ValueError):
    pass


def angular(nu_mhz: float) -> float:
    """MHz (cycles per microsecond) to rad/ns."""
    return 2 * math.pi * nu_mhz * 1e-3


@dataclass(frozen=True)
class O2MParams:
    """Optical-to-microwave parameters; rates are rate/2pi in MHz, times in ns.

    ``omega_0`` defaults to ``gamma_fe_s / 3``. ``sigma`` defaults to the
    width whose spectral bandwidth 1/(2 pi sigma) equals ``gamma_fg_t / 3``;
    ``t_0`` defaults to ``5 sigma``.
    """

    gamma_fe_s: float = 900.0
    gamma_fg_t: float = 300.0
    gamma_eg_t: float = 300.0
    g_c: float = 100.0
    kappa_c: float = 3.0
    eta: float = 1.0
    omega_0: float | None = None
    sigma: float | None = None
    t_0: float | None = None
    cavity_dim: int = 2
    t_final: float | None = None
    dt: float | None = None

    def __post_init__(self):
        for name in ("gamma_fe_s", "gamma_fg_t", "gamma_eg_t", "g_c", "kappa_c"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError("eta must lie in [0, 1]")
        if self.omega_0 is not None and self.omega_0 < 0:
            raise ParameterError("omega_0 must be non-negative")
        if self.sigma is not None and not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if self.cavity_dim < 2:
            raise ParameterError("cavity_dim must be at least 2")

    @property
    def drive(self) -> float:
        return self.gamma_fe_s / 3 if self.omega_0 is None else self.omega_0

    @property
    def width(self) -> float:
        if self.sigma is not None:
            return self.sigma
        if self.gamma_fg_t <= 0:
            raise ParameterError("gamma_fg_t must be positive to derive the default pulse width")
        # 1/(2 pi sigma) [GHz] = gamma_fg_t/3 [MHz] * 1e-3
        return 3.0 / (2 * math.pi * self.gamma_fg_t * 1e-3)

    @property
    def center(self) -> float:
        return 5 * self.width if self.t_0 is None else self.t_0

    def check(self) -> list[str]:
        """Soft physical constraints; returns warning messages."""
        msgs = []
        bandwidth = 1e3 / (2 * math.pi * self.width)
        if self.gamma_fg_t > 0 and bandwidth >= self.gamma_fg_t:
            msgs.append(f"pulse bandwidth {bandwidth:.3g} MHz is not below gamma_fg_t {self.gamma_fg_t:g} MHz")
        if self.gamma_fe_s > 0 and self.drive / self.gamma_fe_s > 1 / 3 + 1e-12:
            msgs.append(f"omega_0/gamma_fe_s = {self.drive / self.gamma_fe_s:.3g} exceeds 1/3; emitted pulse will not be Gaussian")
        return msgs

    def with_(self, **kw) -> O2MParams:
        return replace(self, **kw)


@dataclass(frozen=True)
class M2OParams:
    """Microwave-to-optical parameters; ``omega_0`` defaults to ``gamma_fg_t / 3``."""

    gamma_fg_t: float = 300.0
    gamma_eg_t: float = 30.0
    g_c: float = 200.0
    kappa_c: float = 3.0
    omega_0: float | None = None
    cavity_dim: int = 2
    t_final: float | None = None
    dt: float | None = None

    def __post_init__(self):
        for name in ("gamma_fg_t", "gamma_eg_t", "g_c", "kappa_c"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.omega_0 is not None and self.omega_0 < 0:
            raise ParameterError("omega_0 must be non-negative")
        if self.cavity_dim < 2:
            raise ParameterError("cavity_dim must be at least 2")

    @property
    def drive(self) -> float:
        return self.gamma_fg_t / 3 if self.omega_0 is None else self.omega_0

    def check(self) -> list[str]:
        return []

    def with_(self, **kw) -> M2OParams:
        return replace(self, **kw)


def param_names(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def params_dict(p) -> dict:
    return asdict(p)


def o2m_space(cavity_dim: int = 2) -> HilbertSpec:
    return HilbertSpec([(SOURCE, 3), (TARGET, 3), (CAVITY, cavity_dim)])


def m2o_space(cavity_dim: int = 2) -> HilbertSpec:
    return HilbertSpec([(TARGET, 3), (CAVITY, cavity_dim)])


def _s(space, i: str, j: str) -> OperatorMatrix:
    return transition_op(space, SOURCE, SOURCE_LEVELS[i], SOURCE_LEVELS[j])


def _t(space, i: str, j: str) -> OperatorMatrix:
    return transition_op(space, TARGET, TARGET_LEVELS[i], TARGET_LEVELS[j])


def cavity_coupling(space: HilbertSpec) -> OperatorMatrix:
    """a sigma_FE + a^dag sigma_EF on the target CQD."""
    a = annihilation_op(space, CAVITY)
    return a @ _t(space, "F", "E") + a.dag() @ _t(space, "E", "F")


def build_o2m(params: O2MParams) -> tuple[EffectiveModel, StateVector]:
    for msg in params.check():
        warnings.warn(msg, stacklevel=2)
    sp = o2m_space(params.cavity_dim)
    g_fe = angular(params.gamma_fe_s)
    g_fg = angular(params.gamma_fg_t)
    g_eg = angular(params.gamma_eg_t)
    g_c = angular(params.g_c)
    kappa = angular(params.kappa_c)
    eta = params.eta

    drive_op = _s(sp, "G", "F") + _s(sp, "F", "G")
    envelope = DriveEnvelope.gaussian(angular(params.drive), params.center, params.width)
    a = annihilation_op(sp, CAVITY)
    source_lower = _s(sp, "E", "F")
    target_lower = _t(sp, "G", "F")
    channels = (
        CollapseChannel("C1", math.sqrt(g_fe) * source_lower + math.sqrt(g_fg * eta) * target_lower),
        CollapseChannel("C2", math.sqrt(g_fg * (1 - eta)) * target_lower),
        CollapseChannel("C3", math.sqrt(g_eg) * _t(sp, "G", "E"), herald=True),
        CollapseChannel("C4", math.sqrt(kappa) * a),
    )
    # one-way cascade: combined with the cross terms of C1^dag C1 this leaves
    # only -i sqrt(...) sigma_EF^(s) sigma_FG^(t) in H_eff
    coupling = math.sqrt(g_fg * g_fe * eta)
    x = source_lower.dag() @ target_lower  # sigma_FE^(s) sigma_GF^(t)
    cascade = (0.5j * coupling) * (x - x.dag())
    model = EffectiveModel(
        space=sp,
        hermitian_terms=((drive_op, envelope), (g_c * cavity_coupling(sp), None)),
        channels=channels,
        extra_terms=(cascade,),
    )
    return model, basis_state(sp)


def build_m2o(params: M2OParams) -> tuple[EffectiveModel, StateVector]:
    sp = m2o_space(params.cavity_dim)
    a = annihilation_op(sp, CAVITY)
    drive_op = _t(sp, "G", "E") + _t(sp, "E", "G")
    model = EffectiveModel(
        space=sp,
        hermitian_terms=(
            (angular(params.drive) * drive_op, None),
            (angular(params.g_c) * cavity_coupling(sp), None),
        ),
        channels=(
            CollapseChannel("C1'", math.sqrt(angular(params.gamma_fg_t)) * _t(sp, "G", "F"), herald=True),
            CollapseChannel("C2'", math.sqrt(angular(params.gamma_eg_t)) * _t(sp, "G", "E")),
            CollapseChannel("C3'", math.sqrt(angular(params.kappa_c)) * a),
        ),
    )
    return model, basis_state(sp, {CAVITY: 1})


def o2m_t_final(params: O2MParams) -> float:
    if params.t_final is not None:
        return params.t_final
    rates = [angular(params.gamma_fg_t), angular(params.gamma_eg_t),
             angular(4 * params.g_c**2 / params.gamma_fg_t) if params.gamma_fg_t > 0 else 0.0]
    rates = [r for r in rates if r > 0]
    slow = 10 / min(rates) if rates else 0.0
    return min(T_FINAL_CAP, params.center + 4 * params.width + slow)


def slowest_decay(model: EffectiveModel, block: list[int]) -> float:
    """Slowest population decay rate (1/ns) out of a block of basis states.

    Builds the master-equation generator restricted to ``block`` (jumps that
    stay inside the block are kept, jumps that leave it count as loss) and
    returns the smallest decay rate among its eigenvalues.
    """
    idx = np.asarray(block)
    h = model.heff(0.0).entries[np.ix_(idx, idx)]
    n = idx.size
    eye = np.eye(n)
    # column-stacking: vec(A rho B) = (B^T kron A) vec(rho)
    gen = -1j * (np.kron(eye, h) - np.kron(h.conj(), eye))
    for c in model.channels:
        j = c.op.entries[np.ix_(idx, idx)]
        gen += np.kron(j.conj(), j)
    rates = -np.linalg.eigvals(gen).real
    return float(rates.min())


def m2o_t_final(params: M2OParams) -> float:
    """Ten slowest-decay times of the unconverted block {G1, E1, F0}, capped at 200 ns."""
    if params.t_final is not None:
        return params.t_final
    model, _ = build_m2o(params)
    sp = model.space
    block = [sp.index({TARGET: TARGET_LEVELS["G"], CAVITY: 1}),
             sp.index({TARGET: TARGET_LEVELS["E"], CAVITY: 1}),
             sp.index({TARGET: TARGET_LEVELS["F"], CAVITY: 0})]
    rate = slowest_decay(model, block)
    if not rate > 0:
        return T_FINAL_CAP
    return min(T_FINAL_CAP, 10 / rate)


def o2m_efficiency(params: O2MParams, n_traj: int = 1000, seed: int = 0, *,
                   threads: int = 1, strict: bool = False, rate_reference: str = "start",
                   **kw) -> EnsembleResult:
    """Herald (C3) fraction of an ensemble.

    The rate is referenced to the start of the drive (t = 0) or, with
    ``rate_reference="peak"``, to the pulse centre. ``strict`` only counts a
    herald that precedes every cavity-loss (C4) jump.
    """
    if rate_reference not in ("start", "peak"):
        raise ValueError("rate_reference must be 'start' or 'peak'")
    model, psi0 = build_o2m(params)
    return run_ensemble(
        model, psi0, o2m_t_final(params), params.dt, n_traj, seed, threads=threads,
        t_reference=params.center if rate_reference == "peak" else 0.0,
        veto_channels=("C4",) if strict else (), **kw,
    )


def m2o_efficiency(params: M2OParams, n_traj: int = 1000, seed: int = 0, *,
                   threads: int = 1, **kw) -> EnsembleResult:
    """Herald (C1') fraction of an ensemble; rate referenced to t = 0."""
    model, psi0 = build_m2o(params)
    return run_ensemble(
        model, psi0, m2o_t_final(params), params.dt, n_traj, seed, threads=threads,
        t_reference=0.0, **kw,
    )


def level_observables(space: HilbertSpec) -> dict[str, OperatorMatrix]:
    """Level projectors of every matter subsystem plus the cavity photon number."""
    out = {}
    names = {SOURCE: SOURCE_LEVELS, TARGET: TARGET_LEVELS}
    for label, dim in space.subsystems:
        if label == CAVITY:
            a = annihilation_op(space, CAVITY)
            out["n_cavity"] = a.dag() @ a
            continue
        levels = names.get(label) or {str(i): i for i in range(dim)}
        for name, idx in levels.items():
            out[f"P_{label}_{name}"] = transition_op(space, label, idx, idx)
    return out


def expected_heralds(model: EffectiveModel, psi0: StateVector, t_final: float, dt: float | None = None,
                     n_points: int = 400) -> float:
    """Mean number of herald-channel jumps from the master equation (trapezoid in time)."""
    from .lindblad import lindblad_oracle

    times = np.linspace(0.0, t_final, n_points)
    _, rhos = lindblad_oracle(model, psi0.density_matrix(), t_final, dt, sample_times=times)
    rate = np.zeros(times.size)
    for c in model.channels:
        if c.herald:
            cc = c.op.entries.conj().T @ c.op.entries
            rate += np.einsum("ij,tji->t", cc, rhos).real
    return float(np.trapezoid(rate, times))


ATOM = "atom"


def build_two_level(gamma: float, omega: float = 0.0, excited: bool = True) -> tuple[EffectiveModel, StateVector]:
    """Two-level atom (G=0, E=1) with decay rate/2pi ``gamma`` and constant drive/2pi ``omega`` in MHz.

    The drive term is omega (sigma_GE + sigma_EG), so the undamped excited
    population is sin^2(omega t) with omega in rad/ns.
    """
    if gamma < 0 or omega < 0:
        raise ParameterError("rates must be non-negative")
    sp = HilbertSpec([(ATOM, 2)])
    terms = []
    if omega > 0:
        terms.append((angular(omega) * (transition_op(sp, ATOM, 0, 1) + transition_op(sp, ATOM, 1, 0)), None))
    channels = []
    if gamma > 0:
        channels.append(CollapseChannel("decay", math.sqrt(angular(gamma)) * transition_op(sp, ATOM, 0, 1),
                                        herald=True))
    model = EffectiveModel(sp, tuple(terms), tuple(channels))
    return model, basis_state(sp, {ATOM: 1 if excited else 0})
