"""Monte Carlo wave-function (quantum jump) integrator.

Each trajectory evolves under the non-Hermitian effective Hamiltonian

    H_eff(t) = sum_k f_k(t) H_k - (i/2) sum_c C_c^dag C_c + sum_x X_x

with fixed-step RK4. A uniform number ``r`` is drawn; when the squared norm
of the unnormalized state falls to ``r`` the crossing time is bisected inside
the step, a channel is picked with probability proportional to
``||C_c psi||^2`` and the state is replaced by the normalized ``C_c psi``.

Random numbers come from numpy's Philox4x64-10 counter-based generator keyed
by ``base_seed + trajectory_index``. Draw order per trajectory: the first
threshold, then for each jump one channel-selection uniform followed by the
next threshold.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from . import _kernel
from .hilbert import HilbertError, HilbertSpec, OperatorMatrix, StateVector

log = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1
NORM_SLACK = 1e-10
JUMP_RTOL = 1e-6
MAX_FAILURE_FRACTION = 0.01
MIN_HERALDS_FOR_RATE = 20
RATE_STATISTICS = ("p50", "p90", "mean")
RATE_CONVENTIONS = ("reciprocal", "angular")


class TrajectoryError(RuntimeError):
    """A single trajectory could not be integrated."""


class EnsembleError(RuntimeError):
    """Too many trajectories in an ensemble failed."""


class InsufficientStatistics(ValueError):
    pass


@dataclass(frozen=True)
class DriveEnvelope:
    """Time profile multiplying a Hermitian term; amplitude in rad/ns, times in ns."""

    kind: str = "constant"
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError("gaussian envelope needs a positive width")

    @classmethod
    def constant(cls, amplitude: float) -> DriveEnvelope:
        return cls("constant", amplitude)

    @classmethod
    def gaussian(cls, amplitude: float, center: float, width: float) -> DriveEnvelope:
        return cls("gaussian", amplitude, center, width)

    def __call__(self, t: float) -> float:
        if self.kind == "gaussian":
            return self.amplitude * math.exp(-((t - self.center) ** 2) / (2 * self.width**2))
        return self.amplitude

    def as_row(self) -> np.ndarray:
        code = _kernel.ENV_GAUSSIAN if self.kind == "gaussian" else _kernel.ENV_CONSTANT
        return np.array([code, self.amplitude, self.center, self.width], dtype=np.float64)


@dataclass(frozen=True)
class CollapseChannel:
    label: str
    op: OperatorMatrix
    herald: bool = False


@dataclass(frozen=True)
class EffectiveModel:
    """Hermitian terms, jump channels and extra cascade terms on one space.

    ``hermitian_terms`` pairs an operator with an envelope; ``None`` means a
    constant coefficient of one. The ``-(i/2) sum C^dag C`` part is always
    regenerated from ``channels``.
    """

    space: HilbertSpec
    hermitian_terms: tuple[tuple[OperatorMatrix, DriveEnvelope | None], ...] = ()
    channels: tuple[CollapseChannel, ...] = ()
    extra_terms: tuple[OperatorMatrix, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hermitian_terms", tuple(self.hermitian_terms))
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "extra_terms", tuple(self.extra_terms))
        for op, _ in self.hermitian_terms:
            if op.space != self.space:
                raise HilbertError("Hamiltonian term lives on a different space")
            if not op.is_hermitian():
                raise HilbertError("hermitian_terms must hold Hermitian operators")
        labels = [c.label for c in self.channels]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate channel labels {labels}")
        for c in self.channels:
            if c.op.space != self.space:
                raise HilbertError(f"channel {c.label} lives on a different space")
        for x in self.extra_terms:
            if x.space != self.space:
                raise HilbertError("extra term lives on a different space")

    @property
    def channel_labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.channels)

    def damping(self) -> np.ndarray:
        d = self.space.dim
        out = np.zeros((d, d), dtype=np.complex128)
        for c in self.channels:
            out += c.op.entries.conj().T @ c.op.entries
        return -0.5j * out

    def split(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Static matrix, stacked time-dependent matrices and their envelope rows."""
        static = self.damping()
        driven, rows = [], []
        for op, env in self.hermitian_terms:
            if env is None:
                static = static + op.entries
            elif env.kind == "constant":
                static = static + env.amplitude * op.entries
            else:
                driven.append(op.entries)
                rows.append(env.as_row())
        for x in self.extra_terms:
            static = static + x.entries
        d = self.space.dim
        hs = np.array(driven, dtype=np.complex128).reshape(len(driven), d, d)
        env = np.array(rows, dtype=np.float64).reshape(len(rows), 4)
        return np.ascontiguousarray(static), np.ascontiguousarray(hs), env

    def heff(self, t: float) -> OperatorMatrix:
        static, hs, env = self.split()
        m = static.copy()
        for h, row in zip(hs, env):
            m += _kernel.envelope_value(row, t) * h
        return OperatorMatrix(self.space, m)

    def hermitian_part(self, t: float) -> OperatorMatrix:
        m = np.zeros((self.space.dim,) * 2, dtype=np.complex128)
        for op, env in self.hermitian_terms:
            m += (1.0 if env is None else env(t)) * op.entries
        return OperatorMatrix(self.space, m)

    def max_rate(self) -> float:
        """Largest frequency scale in rad/ns, used for the default step size."""
        scales = [0.0]
        for op, env in self.hermitian_terms:
            amp = 1.0 if env is None else abs(env.amplitude)
            scales.append(amp * np.abs(op.entries).max(initial=0.0))
        for c in self.channels:
            scales.append(float(np.abs(c.op.entries).max(initial=0.0) ** 2))
        for x in self.extra_terms:
            scales.append(float(np.abs(x.entries).max(initial=0.0)))
        return max(scales)

    def gaussian_widths(self) -> list[float]:
        return [env.width for _, env in self.hermitian_terms if env is not None and env.kind == "gaussian"]

    def default_dt(self) -> float:
        """min(0.05 / fastest rate, narrowest pulse width / 50)."""
        candidates = [w / 50 for w in self.gaussian_widths()]
        rate = self.max_rate()
        if rate > 0:
            candidates.append(0.05 / rate)
        return min(candidates) if candidates else 0.01


@dataclass
class TrajectoryRecord:
    seed: int
    jumps: list[tuple[float, str]]
    final_state: StateVector
    samples: np.ndarray | None = None

    def first_jump(self, labels: Iterable[str]) -> float | None:
        wanted = set(labels)
        for t, lab in self.jumps:
            if lab in wanted:
                return t
        return None


@dataclass
class EnsembleResult:
    n_traj: int
    herald_count: int
    efficiency: float
    efficiency_stderr: float
    herald_times: list[float]
    rate_MHz: float | None
    n_failed: int = 0
    rate_statistic: str = "mean"
    rate_convention: str = "reciprocal"
    t_reference: float = 0.0
    observable_mean: np.ndarray | None = None
    observable_stderr: np.ndarray | None = None
    sample_times: np.ndarray | None = None
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_heralds(self) -> int:
        return self.herald_count


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & SEED_MASK))


def _prepare_samples(sample_times, t0: float, t_final: float) -> np.ndarray:
    if sample_times is None:
        return np.empty(0, dtype=np.float64)
    st = np.asarray(sample_times, dtype=np.float64)
    if st.ndim != 1 or np.any(np.diff(st) < 0):
        raise ValueError("sample_times must be a non-decreasing 1-d sequence")
    if st.size and (st[0] < t0 or st[-1] > t_final):
        raise ValueError("sample_times must lie inside [t_start, t_final]")
    return np.ascontiguousarray(st)


class _Compiled:
    """Model matrices laid out for the kernel; shared read-only across workers."""

    def __init__(self, model: EffectiveModel):
        self.model = model
        static, driven, self.env = model.split()
        self.rowptr, self.cols, self.vals, self.blk = _kernel.nonzero_blocks(static, driven)
        self.channel_ops = [np.ascontiguousarray(c.op.entries) for c in model.channels]
        self.labels = model.channel_labels


def _evolve(
    comp: _Compiled,
    psi: np.ndarray,
    t_start: float,
    t_final: float,
    dt: float,
    rng: np.random.Generator,
    sample_t: np.ndarray,
    samples: np.ndarray,
    jumps: list[tuple[float, str]],
) -> np.ndarray:
    """Integrate one trajectory segment in place; appends to ``jumps``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k = 0
    while k < sample_t.size and sample_t[k] <= t_start:
        samples[k] = psi / np.linalg.norm(psi)
        k += 1
    t = t_start
    r = rng.random()
    while True:
        status, t, k, n2 = _kernel.propagate(
            psi, t, t_final, dt, r, comp.rowptr, comp.cols, comp.vals, comp.blk, comp.env,
            sample_t, samples, k, NORM_SLACK, JUMP_RTOL,
        )
        if status == _kernel.STATUS_DONE:
            break
        if status == _kernel.STATUS_NONFINITE:
            raise TrajectoryError(f"non-finite state at t={t:.6g} ns; step {dt:g} ns too large?")
        if status == _kernel.STATUS_NORM_GROWTH:
            raise TrajectoryError(f"norm increased during a step at t={t:.6g} ns; step {dt:g} ns too large?")
        # quantum jump
        if not comp.channel_ops:
            raise TrajectoryError("norm decayed but the model has no jump channels")
        candidates = [c @ psi for c in comp.channel_ops]
        weights = np.array([np.vdot(v, v).real for v in candidates])
        total = weights.sum()
        if not total > 0 or not np.isfinite(total):
            raise TrajectoryError(f"all jump weights vanish at t={t:.6g} ns")
        probs = weights / total
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        idx = min(idx, len(probs) - 1)
        while probs[idx] == 0.0:
            idx -= 1
        new = candidates[idx]
        psi[:] = new / math.sqrt(weights[idx])
        jumps.append((float(t), comp.labels[idx]))
        if jumps[-1][0] >= t_final:
            break
        r = rng.random()
    return psi


def run_trajectory(
    model: EffectiveModel,
    psi0: StateVector,
    t_final: float,
    dt: float | None = None,
    seed: int = 0,
    *,
    t_start: float = 0.0,
    sample_times: Sequence[float] | None = None,
) -> TrajectoryRecord:
    """Integrate a single quantum trajectory from ``t_start`` to ``t_final`` (ns)."""
    return _run_one(_Compiled(model), psi0, t_start, t_final, dt or model.default_dt(), seed,
                    _prepare_samples(sample_times, t_start, t_final))


def _run_one(comp: _Compiled, psi0: StateVector, t_start, t_final, dt, seed, sample_t) -> TrajectoryRecord:
    if psi0.space != comp.model.space:
        raise HilbertError("initial state lives on a different space than the model")
    if not psi0.is_normalized(1e-10):
        raise ValueError("initial state must be normalized")
    if t_final < t_start:
        raise ValueError("t_final precedes t_start")
    psi = np.array(psi0.amplitudes, dtype=np.complex128)
    samples = np.zeros((sample_t.size, psi.size), dtype=np.complex128)
    jumps: list[tuple[float, str]] = []
    rng = make_rng(seed)
    _evolve(comp, psi, t_start, t_final, dt, rng, sample_t, samples, jumps)
    final = StateVector(psi0.space, psi / np.linalg.norm(psi))
    return TrajectoryRecord(seed=seed, jumps=jumps, final_state=final,
                            samples=samples if sample_t.size else None)


def estimate_rate(herald_times: Sequence[float], t_reference: float, statistic: str = "mean",
                  convention: str = "reciprocal") -> float:
    """Conversion rate in MHz from herald times in ns.

    With ``tau = t_stat - t_reference`` (``t_stat`` the mean, median or 90th
    percentile herald time) the ``reciprocal`` convention returns
    ``1000 / tau``, the inverse completion time, and ``angular`` returns
    ``1000 / (2 pi tau)``.
    """
    times = np.asarray(herald_times, dtype=float)
    if times.size < MIN_HERALDS_FOR_RATE:
        raise InsufficientStatistics(
            f"insufficient statistics: {times.size} heralds, need at least {MIN_HERALDS_FOR_RATE}")
    if statistic == "p90":
        t_stat = float(np.percentile(times, 90))
    elif statistic == "p50":
        t_stat = float(np.percentile(times, 50))
    elif statistic == "mean":
        t_stat = float(times.mean())
    else:
        raise ValueError(f"unknown rate statistic {statistic!r}; choose from {RATE_STATISTICS}")
    if convention not in RATE_CONVENTIONS:
        raise ValueError(f"unknown rate convention {convention!r}; choose from {RATE_CONVENTIONS}")
    span = t_stat - t_reference
    if not span > 0:
        raise InsufficientStatistics(f"herald statistic {t_stat:g} ns does not follow the reference {t_reference:g} ns")
    rate = 1000.0 / span
    return rate / (2 * math.pi) if convention == "angular" else rate


def _observable_values(samples: np.ndarray, obs: np.ndarray, diagonal: bool) -> np.ndarray:
    # returns (n_samples, n_obs) real expectation values
    if diagonal:
        return (np.abs(samples) ** 2) @ obs.T
    return np.einsum("si,oij,sj->so", samples.conj(), obs, samples).real


def run_ensemble(
    model: EffectiveModel,
    psi0: StateVector,
    t_final: float,
    dt: float | None = None,
    n_traj: int = 100,
    base_seed: int = 0,
    *,
    t_start: float = 0.0,
    threads: int = 1,
    t_reference: float = 0.0,
    rate_statistic: str = "mean",
    rate_convention: str = "reciprocal",
    veto_channels: Sequence[str] = (),
    sample_times: Sequence[float] | None = None,
    observables: Sequence[OperatorMatrix] | None = None,
    jump_log: TextIO | None = None,
    progress: Callable[[int], None] | None = None,
) -> EnsembleResult:
    """Run ``n_traj`` trajectories; trajectory ``i`` is seeded with ``base_seed + i``.

    A trajectory is heralded when it contains a jump on a herald channel. If
    ``veto_channels`` is given (strict counting), the first herald must also
    precede every jump on those channels. Results are reduced in trajectory
    order, so they do not depend on ``threads``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    if rate_statistic not in RATE_STATISTICS:
        raise ValueError(f"unknown rate statistic {rate_statistic!r}")
    if rate_convention not in RATE_CONVENTIONS:
        raise ValueError(f"unknown rate convention {rate_convention!r}")
    comp = _Compiled(model)
    dt = dt or model.default_dt()
    sample_t = _prepare_samples(sample_times, t_start, t_final)
    herald_labels = {c.label for c in model.channels if c.herald}
    vetoes = set(veto_channels)
    unknown = vetoes - set(comp.labels)
    if unknown:
        raise ValueError(f"unknown veto channels {sorted(unknown)}")

    obs = None
    diagonal = True
    if observables:
        obs = np.array([o.entries for o in observables])
        diagonal = all(np.count_nonzero(o - np.diag(np.diag(o))) == 0 for o in obs)
        if diagonal:
            obs = np.array([np.diag(o).real for o in obs])
        if sample_t.size == 0:
            raise ValueError("observables need sample_times")

    def work(i: int):
        seed = (base_seed + i) & SEED_MASK
        try:
            rec = _run_one(comp, psi0, t_start, t_final, dt, seed, sample_t)
        except TrajectoryError as exc:
            return i, None, str(exc)
        vals = _observable_values(rec.samples, obs, diagonal) if obs is not None else None
        return i, (rec.jumps, vals), None

    if threads <= 1:
        results = [work(i) for i in range(n_traj)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_traj), chunksize=max(1, n_traj // (8 * threads))))
    results.sort(key=lambda x: x[0])

    failures = [(i, msg) for i, payload, msg in results if payload is None]
    if len(failures) > MAX_FAILURE_FRACTION * n_traj:
        raise EnsembleError(f"{len(failures)} of {n_traj} trajectories failed; first: {failures[0][1]}")
    for i, msg in failures:
        log.warning("trajectory %d aborted: %s", i, msg)

    herald_times: list[float] = []
    obs_sum = obs_sq = None
    n_ok = 0
    for i, payload, _ in results:
        if payload is None:
            continue
        jumps, vals = payload
        n_ok += 1
        if jump_log is not None:
            for t, lab in jumps:
                jump_log.write(f"{i}, {t:.9g}, {lab}\n")
        t_herald = _first_herald(jumps, herald_labels, vetoes)
        if t_herald is not None:
            herald_times.append(t_herald)
        if vals is not None:
            if obs_sum is None:
                obs_sum = np.zeros_like(vals)
                obs_sq = np.zeros_like(vals)
            obs_sum += vals
            obs_sq += vals * vals

    count = len(herald_times)
    p = count / n_ok
    stderr = math.sqrt(p * (1 - p) / n_ok)
    try:
        rate = estimate_rate(herald_times, t_reference, rate_statistic, rate_convention)
    except InsufficientStatistics:
        rate = None

    mean = se = None
    if obs_sum is not None:
        mean = obs_sum / n_ok
        var = np.maximum(obs_sq / n_ok - mean * mean, 0.0) * n_ok / max(n_ok - 1, 1)
        se = np.sqrt(var / n_ok)
    return EnsembleResult(
        n_traj=n_ok, herald_count=count, efficiency=p, efficiency_stderr=stderr,
        herald_times=herald_times, rate_MHz=rate, n_failed=len(failures),
        rate_statistic=rate_statistic, rate_convention=rate_convention, t_reference=t_reference,
        observable_mean=mean, observable_stderr=se,
        sample_times=sample_t if sample_t.size else None, failures=failures,
    )


def _first_herald(jumps, herald_labels, vetoes) -> float | None:
    for t, lab in jumps:
        if lab in vetoes:
            return None
        if lab in herald_labels:
            return t
    return None
