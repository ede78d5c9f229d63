"""Time-bin photon to transmon state transfer and herald erasure.

The input photon alpha |t1> + beta |t2> is tracked as a two-branch register:
branch 1 holds the early-bin history and branch 2 the late-bin one. Both
branches are integrated in a frame shifted by t2 - t1, so the conversion
stages run side by side. This is what the erasure optics does to the herald
photons too (the early one is delayed by t2 - t1), so a herald click acts on
both branches with operator C3 (P1 +/- P2) / sqrt(2), one per beam-splitter
port. Every other emission (reflected photon, cavity loss, lossy CQD decay)
carries which-bin information and acts on a single branch.

Per branch, in the shifted frame:

    convert        source pulse, cascaded absorption, herald (g_t gated off)
    swap 1         cavity-transmon exchange for pi / (2 g_t)
    pulse A        e <-> f on both branches
    pulse B        f <-> h on branch 1 (branch 2 has finished)
    wait, swap 2   branch 1 idles through the late bin
    pulse C        e <-> f on branch 1

At the end the branches are merged into one physical state. Branch-1 and
branch-2 source ground states stay distinct (the undriven time-bin level)
while emitted-source and matter levels add coherently. The merge neglects the
overlap of the two branch histories before the final time, which is exact
whenever the successful branch states end orthogonal (|h> vs |f>).

Transmon levels g, e, f, h are 0..3. Pi pulses are the real rotation
|e> -> |f>, |f> -> -|e> on the named pair (no leakage).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .hilbert import HilbertSpec, OperatorMatrix, annihilation_op, embed, transition_op, zero_op
from .mcwf import (
    MAX_FAILURE_FRACTION, SEED_MASK, CollapseChannel, DriveEnvelope, EffectiveModel, EnsembleError,
    TrajectoryError, _Compiled, _evolve, make_rng,
)
from .models import (
    CAVITY, SOURCE, SOURCE_LEVELS, TARGET, O2MParams, _s, _t, angular, cavity_coupling,
)

BRANCH = "branch"
TRANSMON = "transmon"
TRANSMON_LEVELS = {"g": 0, "e": 1, "f": 2, "h": 3}
RESIDUAL_WARN = 0.01
AMPLITUDE_TOL = 1e-10


@dataclass(frozen=True)
class TimeBinQubit:
    """alpha |t1> + beta |t2>; times in ns."""

    alpha: complex
    beta: complex
    t1: float = 0.0
    t2: float = 40.0

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1) > AMPLITUDE_TOL:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {norm:.12g}, expected 1")
        if not self.t2 > self.t1:
            raise ValueError("t2 must be later than t1")

    @property
    def separation(self) -> float:
        return self.t2 - self.t1

    def target_state(self) -> np.ndarray:
        """alpha |h> + beta |f> on the transmon."""
        v = np.zeros(4, dtype=np.complex128)
        v[TRANSMON_LEVELS["h"]] = self.alpha
        v[TRANSMON_LEVELS["f"]] = self.beta
        return v


@dataclass(frozen=True)
class ProtocolParams:
    """Transfer settings.

    ``g_t`` is the cavity-transmon coupling rate/2pi in MHz. ``pi_pulse``
    is the pi-pulse duration in ns (0 for instantaneous unitaries).
    ``injection="ideal"`` replaces the CQD conversion by a lossless
    photon-into-cavity injection at the bin time; ``"cqd"`` runs the full
    cascaded optical-to-microwave model. ``detectors`` is 1 or 2 herald
    detectors of efficiency ``detector_efficiency``. ``swap_delay`` is the
    time in ns from the bin arrival to opening the cavity-transmon exchange
    (``None`` derives it from the conversion rates).
    """

    g_t: float = 50.0
    conversion: O2MParams = field(default_factory=lambda: O2MParams(g_c=200.0))
    pi_pulse: float = 0.0
    injection: str = "cqd"
    detectors: int = 2
    detector_efficiency: float = 1.0
    swap_delay: float | None = None
    dt: float | None = None

    def __post_init__(self):
        if not self.g_t > 0:
            raise ValueError("g_t must be positive")
        if self.pi_pulse < 0:
            raise ValueError("pi_pulse must be non-negative")
        if self.injection not in ("cqd", "ideal"):
            raise ValueError("injection must be 'cqd' or 'ideal'")
        if self.detectors not in (1, 2):
            raise ValueError("detectors must be 1 or 2")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must lie in [0, 1]")
        if self.swap_delay is not None and self.swap_delay < 0:
            raise ValueError("swap_delay must be non-negative")

    def check(self) -> list[str]:
        msgs = []
        c = self.conversion
        if not c.kappa_c < self.g_t / 10:
            msgs.append(f"kappa_c {c.kappa_c:g} MHz is not much smaller than g_t {self.g_t:g} MHz")
        if self.injection == "cqd" and not self.g_t < c.g_c:
            msgs.append(f"g_t {self.g_t:g} MHz is not below g_c {c.g_c:g} MHz")
        return msgs

    @property
    def swap_time(self) -> float:
        """pi / (2 g_t) in ns: half a vacuum Rabi period."""
        return math.pi / (2 * angular(self.g_t))

    def conversion_delay(self) -> float:
        """Bin arrival to swap start, in ns."""
        if self.swap_delay is not None:
            return self.swap_delay
        if self.injection == "ideal":
            return 0.0
        c = self.conversion
        rates = [angular(c.gamma_eg_t)]
        if c.gamma_fg_t > 0:
            rates.append(angular(4 * c.g_c**2 / c.gamma_fg_t))
        rates = [r for r in rates if r > 0]
        tail = 5 / min(rates) if rates else 0.0
        return 3 * c.width + tail


@dataclass
class TransferOutcome:
    """Ensemble-averaged result of the transfer sequence.

    ``rho`` is the 4x4 transmon state averaged over every trajectory.
    ``syndrome`` is its |g> population. A trajectory counts as a success
    when it holds a herald emission (none is needed for ideal injection) and
    no cavity-loss jump.
    """

    rho: np.ndarray
    fidelity: float
    fidelity_stderr: float
    syndrome: float
    syndrome_stderr: float
    success_prob: float
    success_stderr: float
    herald_prob: float
    heralded_fidelity: float | None
    residual_cavity: float
    n_traj: int
    n_failed: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def populations(self) -> dict[str, float]:
        return {k: float(self.rho[i, i].real) for k, i in TRANSMON_LEVELS.items()}


class HeraldResult(NamedTuple):
    herald_prob: float
    phase_correction: str


def erasure_herald(early: complex, late: complex, detector_efficiency: float,
                   two_detectors: bool = False, port: str = "+") -> HeraldResult:
    """Herald probability and qubit correction of the time-bin erasure optics.

    The early herald component is delayed by t2 - t1 and both components meet
    on a 50/50 beam splitter. Each component is tied to an orthogonal qubit
    state, so each output port fires with probability
    ``detector_efficiency / 2`` whatever the amplitudes, and leaves the qubit
    as ``early |h> +/- late |f>``. A click on port ``-`` needs a pi phase
    on the late-bin component.
    """
    weight = abs(early) ** 2 + abs(late) ** 2
    if abs(weight - 1) > AMPLITUDE_TOL:
        raise ValueError("herald amplitudes must be normalized")
    if not 0.0 <= detector_efficiency <= 1.0:
        raise ValueError("detector_efficiency must lie in [0, 1]")
    if port not in ("+", "-"):
        raise ValueError("port must be '+' or '-'")
    if port == "-" and not two_detectors:
        raise ValueError("a single detector only watches port '+'")
    # weight is one up to rounding; keep the result exact
    prob = detector_efficiency if two_detectors else detector_efficiency / 2
    return HeraldResult(prob, "pi" if port == "-" else "none")


def pi_pulse_unitary(i: int, j: int, dim: int = 4) -> np.ndarray:
    """Real pi rotation |i> -> |j>, |j> -> -|i>; identity elsewhere."""
    u = np.eye(dim, dtype=np.complex128)
    u[i, i] = u[j, j] = 0.0
    u[j, i] = 1.0
    u[i, j] = -1.0
    return u


def _pulse_generator(space: HilbertSpec, i: int, j: int) -> OperatorMatrix:
    # exp(-i theta G) with theta = pi/2 reproduces pi_pulse_unitary(i, j)
    up = transition_op(space, TRANSMON, j, i)
    return (-1j) * (up.dag() - up)


def _transmon_gate(space: HilbertSpec, local: np.ndarray, branch: int | None) -> np.ndarray:
    u = embed(space, TRANSMON, local).entries
    if branch is None:
        return u
    p = _branch_projector(space, branch).entries
    return u @ p + (np.eye(space.dim) - p)


def _branch_projector(space: HilbertSpec, b: int) -> OperatorMatrix:
    return transition_op(space, BRANCH, b, b)


class _Protocol:
    """Segment models and gates of one protocol configuration."""

    def __init__(self, qubit: TimeBinQubit, params: ProtocolParams):
        self.qubit = qubit
        self.params = params
        self.ideal = params.injection == "ideal"
        conv = params.conversion
        dims = [(BRANCH, 2)]
        if not self.ideal:
            dims += [(SOURCE, 3), (TARGET, 3)]
        dims += [(CAVITY, conv.cavity_dim), (TRANSMON, 4)]
        self.space = sp = HilbertSpec(dims)

        self.width = conv.width
        min_sep = math.pi / angular(params.g_t) + 6 * self.width
        tau = params.swap_time
        tau_pi = params.pi_pulse
        if qubit.separation < max(min_sep, tau + 2 * tau_pi):
            raise ValueError(f"time bins {qubit.separation:g} ns apart; need at least "
                             f"{max(min_sep, tau + 2 * tau_pi):.4g} ns for the early stage to finish")

        # shifted-frame schedule; s = 0 is the start of each bin's window
        self.arrival = 0.0 if self.ideal else conv.center
        s_j = self.arrival + params.conversion_delay()
        s_p = s_j + tau
        delta = qubit.separation
        self.delta = delta
        self.t_end = delta + s_p + tau_pi

        p1 = _branch_projector(sp, 0)
        p2 = _branch_projector(sp, 1)
        a = annihilation_op(sp, CAVITY)
        g, e, f, h = (TRANSMON_LEVELS[k] for k in "gefh")
        jc = angular(params.g_t) * (a @ transition_op(sp, TRANSMON, e, g)
                                    + a.dag() @ transition_op(sp, TRANSMON, g, e))

        def conversion_terms(active):
            """Hermitian terms, channels and extras of the CQD stage on ``active`` branches."""
            labels = [b for b, on in enumerate(active) if on]
            proj = sum((_branch_projector(sp, b) for b in labels), zero_op(sp))
            chans = []
            kappa = angular(conv.kappa_c)
            for b in labels:
                if kappa > 0:
                    chans.append(CollapseChannel(f"C4[{b + 1}]", math.sqrt(kappa) * (a @ _branch_projector(sp, b))))
            if self.ideal:
                return [], chans, []
            g_fe = angular(conv.gamma_fe_s)
            g_fg = angular(conv.gamma_fg_t)
            g_eg = angular(conv.gamma_eg_t)
            eta = conv.eta
            src_lower = _s(sp, "E", "F")
            tgt_lower = _t(sp, "G", "F")
            herald = math.sqrt(g_eg) * _t(sp, "G", "E")
            for b in labels:
                pb = _branch_projector(sp, b)
                chans.append(CollapseChannel(
                    f"C1[{b + 1}]", (math.sqrt(g_fe) * src_lower + math.sqrt(g_fg * eta) * tgt_lower) @ pb))
                if eta < 1:
                    chans.append(CollapseChannel(f"C2[{b + 1}]", math.sqrt(g_fg * (1 - eta)) * tgt_lower @ pb))
            if g_eg > 0:
                if all(active):
                    chans.append(CollapseChannel("H+", herald @ (p1 + p2) * (1 / math.sqrt(2)), herald=True))
                    chans.append(CollapseChannel("H-", herald @ (p1 - p2) * (1 / math.sqrt(2)), herald=True))
                else:
                    for b in labels:
                        chans.append(CollapseChannel(f"H[{b + 1}]", herald @ _branch_projector(sp, b), herald=True))
            x = src_lower.dag() @ tgt_lower
            cascade = (0.5j * math.sqrt(g_fg * g_fe * eta)) * (x - x.dag()) @ proj
            drive = (_s(sp, "G", "F") + _s(sp, "F", "G")) @ proj
            env = DriveEnvelope.gaussian(angular(conv.drive), conv.center, conv.width)
            ham = [(drive, env), (angular(conv.g_c) * cavity_coupling(sp) @ proj, None)]
            return ham, chans, [cascade]

        def model(active, swap=False, pulse=None):
            ham, chans, extra = conversion_terms(active)
            proj = sum((_branch_projector(sp, b) for b, on in enumerate(active) if on), zero_op(sp))
            if swap:
                ham.append((jc @ proj, None))
            if pulse is not None:
                i, j, branches = pulse
                pp = sum((_branch_projector(sp, b) for b in branches), zero_op(sp))
                ham.append(((math.pi / (2 * tau_pi)) * _pulse_generator(sp, i, j) @ pp, None))
            return EffectiveModel(sp, tuple(ham), tuple(chans), tuple(extra))

        both_on = (True, True)
        early_only = (True, False)
        self.segments: list[tuple[str, float, float, object]] = []

        def seg(name, start, stop, mdl):
            if stop > start:
                self.segments.append((name, start, stop, _Compiled(mdl)))

        def gate(name, at, local, branch):
            self.segments.append((name, at, at, _transmon_gate(sp, local, branch)))

        if self.ideal:
            self.segments.append(("inject", 0.0, 0.0, embed(sp, CAVITY, _fock_swap(conv.cavity_dim)).entries))
        seg("convert", 0.0, s_j, model(both_on))
        seg("swap1", s_j, s_p, model(both_on, swap=True))
        if tau_pi == 0:
            gate("pulseA", s_p, pi_pulse_unitary(e, f), None)
            gate("pulseB", s_p, pi_pulse_unitary(f, h), 0)
        else:
            seg("pulseA", s_p, s_p + tau_pi, model(both_on, pulse=(e, f, (0, 1))))
            seg("pulseB", s_p + tau_pi, s_p + 2 * tau_pi, model(early_only, pulse=(f, h, (0,))))
        self.residual_at = delta + s_j
        seg("wait", s_p + 2 * tau_pi, delta + s_j, model(early_only))
        self.segments.append(("residual", delta + s_j, delta + s_j, None))
        seg("swap2", delta + s_j, delta + s_p, model(early_only, swap=True))
        if tau_pi == 0:
            gate("pulseC", delta + s_p, pi_pulse_unitary(e, f), 0)
        else:
            seg("pulseC", delta + s_p, delta + s_p + tau_pi, model(early_only, pulse=(e, f, (0,))))

        self.dt = params.dt or min(c.model.default_dt() for _, _, _, c in self.segments
                                   if isinstance(c, _Compiled))
        self.n_cav_branch1 = (a.dag() @ a @ p1).entries.diagonal().real
        self.psi0 = self._initial_state()
        self.phase_fix = np.diag([1, 1, -1, 1]).astype(np.complex128)

    def _initial_state(self) -> np.ndarray:
        sp = self.space
        psi = np.zeros(sp.dim, dtype=np.complex128)
        for b, amp in enumerate((self.qubit.alpha, self.qubit.beta)):
            psi[sp.index({BRANCH: b})] = amp
        return psi

    def merge(self, psi: np.ndarray) -> np.ndarray:
        """Physical (unnormalized) state with the branch register removed.

        Returns an array whose last axis is the transmon.
        """
        dims = self.space.dims
        x = psi.reshape(dims)
        if self.ideal:
            return x[0] + x[1]
        # source levels G, F, E -> G_early, G_late, F, E
        gs, fs, es = SOURCE_LEVELS["G"], SOURCE_LEVELS["F"], SOURCE_LEVELS["E"]
        out = np.stack([x[0, gs], x[1, gs], x[0, fs] + x[1, fs], x[0, es] + x[1, es]])
        return out


def _fock_swap(dim: int) -> np.ndarray:
    """Unitary exchanging Fock |0> and |1>, identity above."""
    u = np.eye(dim, dtype=np.complex128)
    u[0, 0] = u[1, 1] = 0.0
    u[0, 1] = u[1, 0] = 1.0
    return u


def _run_protocol_trajectory(proto: _Protocol, seed: int):
    rng = make_rng(seed)
    coin = np.random.Generator(np.random.Philox(key=seed & SEED_MASK).jumped())
    psi = proto.psi0.copy()
    jumps: list[tuple[float, str]] = []
    empty_t = np.empty(0)
    empty_s = np.empty((0, psi.size), dtype=np.complex128)
    residual = 0.0
    for name, start, stop, obj in proto.segments:
        psi /= np.linalg.norm(psi)
        if name == "residual":
            residual = float(np.dot(proto.n_cav_branch1, np.abs(psi) ** 2))
        elif isinstance(obj, _Compiled):
            _evolve(obj, psi, start, stop, proto.dt, rng, empty_t, empty_s, jumps)
        else:
            psi[:] = obj @ psi
    psi /= np.linalg.norm(psi)

    labels = [lab for _, lab in jumps]
    heralds = [lab for lab in labels if lab.startswith("H")]
    lost = any(lab.startswith("C4") for lab in labels)
    # ideal injection emits no herald photon
    success = (bool(heralds) or proto.ideal) and not lost
    detected = False
    port_minus = False
    if heralds:
        lab = heralds[0]
        if lab == "H+" or lab.startswith("H["):
            detected = coin.random() < proto.params.detector_efficiency
        elif lab == "H-":
            port_minus = True
            detected = proto.params.detectors == 2 and coin.random() < proto.params.detector_efficiency

    phys = proto.merge(psi)
    if port_minus and detected:
        phys = phys @ proto.phase_fix.T
    flat = phys.reshape(-1, 4)
    rho = flat.T @ flat.conj()
    rho /= np.trace(rho).real
    return rho, success, detected, residual


def run_transfer(qubit: TimeBinQubit, params: ProtocolParams, n_traj: int = 200, seed: int = 0,
                 *, threads: int = 1) -> TransferOutcome:
    """Simulate the six-step transfer sequence over ``n_traj`` trajectories."""
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    msgs = params.check()
    for msg in msgs:
        warnings.warn(msg, stacklevel=2)
    proto = _Protocol(qubit, params)
    target = qubit.target_state()

    def work(i):
        s = (seed + i) & SEED_MASK
        try:
            return i, _run_protocol_trajectory(proto, s), None
        except TrajectoryError as exc:
            return i, None, str(exc)

    if threads <= 1:
        results = [work(i) for i in range(n_traj)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_traj)))
    results.sort(key=lambda x: x[0])
    failures = [(i, m) for i, r, m in results if r is None]
    if len(failures) > MAX_FAILURE_FRACTION * n_traj:
        raise EnsembleError(f"{len(failures)} of {n_traj} transfer trajectories failed; first: {failures[0][1]}")
    ok = [r for _, r, _ in results if r is not None]
    n = len(ok)

    rhos = np.array([r[0] for r in ok])
    fids = np.einsum("i,nij,j->n", target.conj(), rhos, target).real
    pg = rhos[:, 0, 0].real
    succ = np.array([r[1] for r in ok], dtype=float)
    det = np.array([r[2] for r in ok], dtype=bool)
    resid = np.array([r[3] for r in ok])

    def se(x):
        return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0

    rho = rhos.mean(axis=0)
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(resid.mean())
    notes = list(msgs)
    if residual > RESIDUAL_WARN:
        note = f"early-bin residual cavity population {residual:.3g} at the late-bin swap exceeds {RESIDUAL_WARN}"
        warnings.warn(note, stacklevel=2)
        notes.append(note)
    return TransferOutcome(
        rho=rho,
        fidelity=float(np.clip(fids.mean(), 0.0, 1.0)),
        fidelity_stderr=se(fids),
        syndrome=float(pg.mean()),
        syndrome_stderr=se(pg),
        success_prob=float(succ.mean()),
        success_stderr=se(succ),
        herald_prob=float(det.mean()),
        heralded_fidelity=float(fids[det].mean()) if det.any() else None,
        residual_cavity=residual,
        n_traj=n,
        n_failed=len(failures),
        warnings=notes,
    )
