"""Flat ``key = value`` configuration with unit-tagged quantities.

Keys are ``namespace.name`` (``o2m.g_c = 200 MHz``). Dimensioned values must
carry a unit; a bare number for a rate, time, length or impedance is
rejected rather than guessed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .analytic import DeviceParams
from .models import M2OParams, O2MParams


class ConfigError(ValueError):
    pass


# kind -> (canonical unit, {suffix: factor to canonical})
UNITS = {
    "MHz": ("MHz", {"Hz": 1e-6, "kHz": 1e-3, "MHz": 1.0, "GHz": 1e3}),
    "GHz": ("GHz", {"Hz": 1e-9, "kHz": 1e-6, "MHz": 1e-3, "GHz": 1.0}),
    "ns": ("ns", {"ps": 1e-3, "ns": 1.0, "us": 1e3, "µs": 1e3, "ms": 1e6, "s": 1e9}),
    "m": ("m", {"nm": 1e-9, "um": 1e-6, "µm": 1e-6, "mm": 1e-3, "cm": 1e-2, "m": 1.0}),
    "ohm": ("ohm", {"ohm": 1.0, "Ohm": 1.0, "Ω": 1.0, "kohm": 1e3, "kOhm": 1e3, "kΩ": 1e3}),
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµΩ]*)\s*$")


@dataclass(frozen=True)
class Field:
    name: str
    kind: str  # a key of UNITS, or "float", "int", "str", "bool"
    optional: bool = False
    help: str = ""

    @property
    def unit(self) -> str | None:
        return self.kind if self.kind in UNITS else None


def parse_value(text: str, f: Field):
    """Parse one value according to its field kind."""
    s = text.strip()
    if f.optional and s.lower() in ("none", "auto", ""):
        return None
    if f.kind == "str":
        return s
    if f.kind == "bool":
        low = s.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: expected a boolean, got {text!r}")
    if f.kind == "int":
        try:
            return int(s)
        except ValueError:
            raise ConfigError(f"{f.name}: expected an integer, got {text!r}") from None
    m = _QUANTITY.match(s)
    if not m:
        raise ConfigError(f"{f.name}: cannot parse {text!r} as a number")
    number, suffix = float(m.group(1)), m.group(2)
    if f.kind == "float":
        if suffix:
            raise ConfigError(f"{f.name} is dimensionless; drop the unit {suffix!r}")
        return number
    canonical, table = UNITS[f.kind]
    if not suffix:
        raise ConfigError(f"{f.name} needs a unit, e.g. {number:g}{canonical}")
    if suffix not in table:
        raise ConfigError(f"{f.name}: unit {suffix!r} not allowed; use one of {', '.join(table)}")
    return number * table[suffix]


def format_value(value, f: Field) -> str:
    if value is None:
        return "none"
    if f.unit:
        return f"{value:g} {f.unit}"
    return str(value)


O2M_FIELDS = (
    Field("gamma_fe_s", "MHz", help="source F->E decay rate/2pi"),
    Field("gamma_fg_t", "MHz", help="target F->G decay rate/2pi"),
    Field("gamma_eg_t", "MHz", help="target E->G (herald) decay rate/2pi"),
    Field("g_c", "MHz", help="CQD-cavity coupling/2pi"),
    Field("kappa_c", "MHz", help="cavity decay rate/2pi"),
    Field("eta", "float", help="fraction of target F->G emission into the input mode"),
    Field("omega_0", "MHz", optional=True, help="peak source drive/2pi (default gamma_fe_s/3)"),
    Field("sigma", "ns", optional=True, help="Gaussian drive width (default from gamma_fg_t/3 bandwidth)"),
    Field("t_0", "ns", optional=True, help="drive centre (default 5 sigma)"),
    Field("cavity_dim", "int", help="cavity Fock truncation"),
    Field("t_final", "ns", optional=True, help="end of integration (default automatic)"),
    Field("dt", "ns", optional=True, help="RK4 step (default automatic)"),
)

M2O_FIELDS = (
    Field("gamma_fg_t", "MHz", help="target F->G (herald) decay rate/2pi"),
    Field("gamma_eg_t", "MHz", help="target E->G decay rate/2pi"),
    Field("g_c", "MHz", help="CQD-cavity coupling/2pi"),
    Field("kappa_c", "MHz", help="cavity decay rate/2pi"),
    Field("omega_0", "MHz", optional=True, help="constant G-E drive/2pi (default gamma_fg_t/3)"),
    Field("cavity_dim", "int", help="cavity Fock truncation"),
    Field("t_final", "ns", optional=True, help="end of integration (default automatic)"),
    Field("dt", "ns", optional=True, help="RK4 step (default automatic)"),
)

ANALYTIC_FIELDS = (
    Field("gamma_fg_t", "MHz", help="target F->G decay rate/2pi"),
    Field("gamma_eg_t", "MHz", help="target E->G decay rate/2pi"),
    Field("g_c", "MHz", help="CQD-cavity coupling/2pi"),
)

DEVICE_FIELDS = (
    Field("z_cav", "ohm", help="resonator impedance"),
    Field("d", "m", help="resonator gap"),
    Field("d_prime", "m", help="enhanced gap at the CQD"),
    Field("length", "m", help="resonator length"),
    Field("freq", "GHz", help="resonance omega_c/2pi"),
    Field("a", "m", help="dot separation"),
    Field("eps_gaas", "float", help="GaAs relative permittivity"),
)

TRANSFER_FIELDS = (
    Field("g_t", "MHz", help="cavity-transmon coupling/2pi"),
    Field("pi_pulse", "ns", help="pi-pulse duration (0 = instantaneous)"),
    Field("injection", "str", help="'cqd' (full conversion) or 'ideal' (lossless injection)"),
    Field("detectors", "int", help="herald detectors after the erasure beam splitter (1 or 2)"),
    Field("detector_efficiency", "float", help="herald detector efficiency"),
    Field("swap_delay", "ns", optional=True, help="bin arrival to swap start (default automatic)"),
    Field("dt", "ns", optional=True, help="RK4 step (default automatic)"),
    Field("alpha_re", "float", help="early-bin amplitude, real part"),
    Field("alpha_im", "float", help="early-bin amplitude, imaginary part"),
    Field("beta_re", "float", help="late-bin amplitude, real part"),
    Field("beta_im", "float", help="late-bin amplitude, imaginary part"),
    Field("t1", "ns", help="early bin arrival"),
    Field("t2", "ns", help="late bin arrival"),
)

RUN_FIELDS = (
    Field("n_traj", "int", help="number of trajectories"),
    Field("seed", "int", help="base seed (trajectory i uses seed + i)"),
    Field("rate_statistic", "str", help="herald-time statistic for the rate: p50, p90 or mean"),
    Field("rate_convention", "str", help="'reciprocal' (1/tau) or 'angular' (1/(2 pi tau))"),
    Field("rate_reference", "str", help="o2m rate origin: 'start' of the drive or pulse 'peak'"),
    Field("strict", "bool", help="o2m: only count heralds preceding any cavity loss"),
)

SCHEMAS = {
    "o2m": O2M_FIELDS,
    "m2o": M2O_FIELDS,
    "analytic": ANALYTIC_FIELDS,
    "device": DEVICE_FIELDS,
    "transfer": TRANSFER_FIELDS,
    "run": RUN_FIELDS,
}

RUN_DEFAULTS = {
    "n_traj": 1000, "seed": None, "rate_statistic": "mean", "rate_convention": "reciprocal",
    "rate_reference": "start", "strict": False,
}

TRANSFER_DEFAULTS = {
    "g_t": 50.0, "pi_pulse": 0.0, "injection": "cqd", "detectors": 2, "detector_efficiency": 1.0,
    "swap_delay": None, "dt": None, "alpha_re": 1.0, "alpha_im": 0.0, "beta_re": 0.0, "beta_im": 0.0,
    "t1": 0.0, "t2": 40.0,
}

ANALYTIC_DEFAULTS = {"gamma_fg_t": 300.0, "gamma_eg_t": 300.0, "g_c": 100.0}


def field_map(namespace: str) -> dict[str, Field]:
    return {f.name: f for f in SCHEMAS[namespace]}


def parse_config(text: str, source: str = "<config>") -> dict[str, dict[str, object]]:
    """Parse config text into ``{namespace: {name: value}}``."""
    out: dict[str, dict[str, object]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} needs a namespace ({', '.join(SCHEMAS)})")
        ns, name = key.split(".", 1)
        if ns not in SCHEMAS:
            raise ConfigError(f"{source}:{lineno}: unknown namespace {ns!r}")
        fields = field_map(ns)
        if name not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        section = out.setdefault(ns, {})
        if name in section:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            section[name] = parse_value(value, fields[name])
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def load_config(path: str) -> dict[str, dict[str, object]]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def o2m_params(values: dict) -> O2MParams:
    return O2MParams(**values)


def m2o_params(values: dict) -> M2OParams:
    return M2OParams(**values)


def device_params(values: dict) -> DeviceParams:
    v = dict(values)
    if "freq" in v:
        v["freq_ghz"] = v.pop("freq")
    return DeviceParams(**v)
