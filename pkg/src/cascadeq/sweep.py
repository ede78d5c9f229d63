"""Parameter sweeps with a fixed CSV layout and a minimal SVG chart."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import analytic
from .mcwf import EnsembleError, TrajectoryError
from .models import M2OParams, O2MParams, m2o_efficiency, o2m_efficiency

log = logging.getLogger(__name__)

CSV_HEADER = ("swept_param", "value", "efficiency", "eff_stderr", "rate_MHz", "n_heralds", "analytic_zeta")
MODELS = ("o2m", "m2o", "analytic", "transfer")
RATIO = "ratio"  # gamma_eg_t / gamma_fg_t, the figure axis


@dataclass(frozen=True)
class SweepSpec:
    model: str
    param: str
    start: float
    stop: float
    n_points: int
    spacing: str = "linear"
    fixed: dict = field(default_factory=dict)
    n_traj: int = 1000
    base_seed: int = 0
    rate_statistic: str = "mean"
    rate_convention: str = "reciprocal"
    threads: int = 1
    run_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.n_points < 2:
            raise ValueError("a sweep needs at least 2 grid points")
        if self.spacing not in ("linear", "log"):
            raise ValueError("spacing must be 'linear' or 'log'")
        if self.spacing == "log" and not (self.start > 0 and self.stop > 0):
            raise ValueError("log spacing needs positive bounds")
        if self.param not in sweepable(self.model):
            raise ValueError(f"{self.param!r} is not a parameter of the {self.model} model; "
                             f"choose from {', '.join(sweepable(self.model))}")

    def grid(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.start, self.stop, self.n_points)
        return np.linspace(self.start, self.stop, self.n_points)


@dataclass
class SweepRow:
    value: float
    efficiency: float | None
    eff_stderr: float | None
    rate_MHz: float | None = None
    n_heralds: int | None = None
    analytic_zeta: float | None = None
    error: str | None = None

    def __post_init__(self):
        if self.efficiency is not None and not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency outside [0, 1]")
        if self.eff_stderr is not None and self.eff_stderr < 0:
            raise ValueError("negative stderr")


def sweepable(model: str) -> tuple[str, ...]:
    from .config import SCHEMAS

    if model == "transfer":
        names = [f.name for f in SCHEMAS["transfer"] if f.kind != "str"]
        names += [f"o2m.{f.name}" for f in SCHEMAS["o2m"] if f.kind != "int"]
        return tuple(names)
    names = [f.name for f in SCHEMAS[model] if f.kind not in ("str", "int")]
    return tuple(names) + (RATIO,)


def _apply(values: dict, param: str, x: float) -> dict:
    v = dict(values)
    if param == RATIO:
        v["gamma_eg_t"] = x * v.get("gamma_fg_t", 300.0)
    else:
        v[param] = x
    return v


def _zeta(values: dict) -> float:
    p = analytic.AnalyticParams(values.get("gamma_fg_t", 300.0), values["gamma_eg_t"], values["g_c"])
    return analytic.efficiency(p)


def run_point(spec: SweepSpec, x: float) -> SweepRow:
    opts = dict(spec.run_options)
    if spec.model == "analytic":
        from .config import ANALYTIC_DEFAULTS

        values = _apply({**ANALYTIC_DEFAULTS, **spec.fixed}, spec.param, x)
        z = _zeta(values)
        return SweepRow(x, z, 0.0, analytic_zeta=z)
    if spec.model == "transfer":
        return _transfer_point(spec, x)
    if spec.model == "o2m":
        defaults = {f: getattr(O2MParams(), f) for f in ("gamma_fg_t", "gamma_eg_t", "g_c")}
        values = _apply({**defaults, **spec.fixed}, spec.param, x)
        params = O2MParams(**values)
        res = o2m_efficiency(params, spec.n_traj, spec.base_seed, threads=spec.threads,
                             rate_statistic=spec.rate_statistic, rate_convention=spec.rate_convention, **opts)
        zeta = _zeta(values) if params.gamma_fg_t > 0 else None
    else:
        defaults = {f: getattr(M2OParams(), f) for f in ("gamma_fg_t",)}
        values = _apply({**defaults, **spec.fixed}, spec.param, x)
        params = M2OParams(**values)
        res = m2o_efficiency(params, spec.n_traj, spec.base_seed, threads=spec.threads,
                             rate_statistic=spec.rate_statistic, rate_convention=spec.rate_convention)
        zeta = None
    return SweepRow(x, res.efficiency, res.efficiency_stderr, res.rate_MHz, res.herald_count, zeta)


def _transfer_point(spec: SweepSpec, x: float) -> SweepRow:
    from .config import TRANSFER_DEFAULTS
    from .transfer import run_transfer

    fixed = dict(spec.fixed)
    conv = dict(fixed.pop("o2m", {}))
    values = {**TRANSFER_DEFAULTS, **fixed}
    if spec.param.startswith("o2m."):
        conv = _apply(conv, spec.param[4:], x)
    else:
        values[spec.param] = x
    qubit = qubit_from(values)
    protocol = protocol_from(values, O2MParams(**{"g_c": 200.0, **conv}))
    out = run_transfer(qubit, protocol, spec.n_traj, spec.base_seed, threads=spec.threads)
    return SweepRow(x, out.fidelity, out.fidelity_stderr, None, int(round(out.herald_prob * out.n_traj)), None)


def qubit_from(values: dict):
    from .transfer import TimeBinQubit

    alpha = complex(values["alpha_re"], values["alpha_im"])
    beta = complex(values["beta_re"], values["beta_im"])
    norm = math.hypot(abs(alpha), abs(beta))
    if norm == 0:
        raise ValueError("alpha and beta cannot both vanish")
    return TimeBinQubit(alpha / norm, beta / norm, values["t1"], values["t2"])


def protocol_from(values: dict, conversion: O2MParams):
    from .transfer import ProtocolParams

    keys = ("g_t", "pi_pulse", "injection", "detectors", "detector_efficiency", "swap_delay", "dt")
    return ProtocolParams(conversion=conversion, **{k: values[k] for k in keys})


def run_sweep(spec: SweepSpec, progress: Callable[[int, float], None] | None = None) -> list[SweepRow]:
    """One row per grid point; a failing point yields an empty row with ``error`` set."""
    rows = []
    for i, x in enumerate(spec.grid()):
        x = float(x)
        try:
            row = run_point(spec, x)
        except (EnsembleError, TrajectoryError, ValueError) as exc:
            log.error("sweep point %s=%g failed: %s", spec.param, x, exc)
            row = SweepRow(x, None, None, error=str(exc))
        rows.append(row)
        if progress:
            progress(i, x)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.10g}"


def rows_to_csv(param: str, rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([param, _fmt(r.value), _fmt(r.efficiency), _fmt(r.eff_stderr), _fmt(r.rate_MHz),
                    _fmt(r.n_heralds), _fmt(r.analytic_zeta)])
    return buf.getvalue()


def rows_to_svg(param: str, rows: list[SweepRow], y_label: str = "efficiency",
                width: int = 480, height: int = 320) -> str:
    """Single-series polyline chart of ``efficiency`` against the swept value."""
    pts = [(r.value, r.efficiency) for r in rows if r.efficiency is not None]
    margin = 50
    xs = [p[0] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    y0, y1 = 0.0, 1.0

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{poly}"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle">{param}</text>',
        f'<text x="14" y="{height / 2:.0f}" transform="rotate(-90 14 {height / 2:.0f})" '
        f'text-anchor="middle">{y_label}</text>',
        f'<text x="{margin}" y="{height - margin + 16}" text-anchor="middle">{x0:.4g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" text-anchor="middle">{x1:.4g}</text>',
        f'<text x="{margin - 6}" y="{height - margin}" text-anchor="end">0</text>',
        f'<text x="{margin - 6}" y="{margin + 4}" text-anchor="end">1</text>',
        "</svg>",
    ]
    return "\n".join(lines) + "\n"
