"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 simulation failure,
4 failed oracle check.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import platform
import sys
import warnings

import numpy as np

from . import __version__, analytic
from .config import (
    ANALYTIC_DEFAULTS, RUN_DEFAULTS, SCHEMAS, TRANSFER_DEFAULTS, ConfigError, Field, field_map, format_value,
    load_config, parse_value,
)
from .lindblad import OracleError, compare_with_oracle, scaled_channels
from .mcwf import EnsembleError, TrajectoryError
from .models import (
    M2OParams, O2MParams, ParameterError, build_m2o, build_o2m, build_two_level, level_observables,
    m2o_efficiency, m2o_t_final, o2m_efficiency, o2m_t_final,
)
from .sweep import RATIO, SweepSpec, protocol_from, qubit_from, rows_to_csv, rows_to_svg, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_ORACLE = 4
SEED_ENV = "CASCADEQ_SEED"

log = logging.getLogger("cascadeq")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_fields(parser: argparse.ArgumentParser, namespace: str, prefix: str = "") -> None:
    group = parser.add_argument_group(f"{namespace} parameters")
    for f in SCHEMAS[namespace]:
        unit = f" [{f.unit}]" if f.unit else ""
        metavar = "VALUE" + (f"[{f.unit}]" if f.unit else "")
        group.add_argument(_flag(prefix + f.name), dest=f"{namespace}__{f.name}", metavar=metavar,
                           default=None, help=f"{f.help}{unit}")


def _collect(args, namespace: str, config: dict, defaults: dict | None = None) -> dict:
    """defaults < config file < flags."""
    values = dict(defaults or {})
    values.update(config.get(namespace, {}))
    fields = field_map(namespace)
    for name, f in fields.items():
        raw = getattr(args, f"{namespace}__{name}", None)
        if raw is not None:
            values[name] = parse_value(raw, f)
    return values


def _run_options(args, config: dict) -> dict:
    values = _collect(args, "run", config, RUN_DEFAULTS)
    if values["seed"] is None:
        env = os.environ.get(SEED_ENV)
        if env is None or env.strip() == "":
            values["seed"] = 0
        else:
            try:
                values["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    if values["n_traj"] < 1:
        raise ConfigError("n_traj must be at least 1")
    return values


def _fmt(x, spec: str = ".6f") -> str:
    if x is None:
        return "nan"
    if isinstance(x, (bool, str)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), spec)


def _emit(pairs) -> None:
    for k, v in pairs:
        print(f"{k}={v}")


def _echo_params(namespace: str, values: dict) -> list[tuple[str, str]]:
    fields = field_map(namespace)
    return [(name, format_value(values[name], fields[name])) for name in fields if name in values]


def _load(args) -> dict:
    return load_config(args.config) if args.config else {}


# commands ------------------------------------------------------------------

def cmd_convert(args) -> int:
    config = _load(args)
    run = _run_options(args, config)
    model = args.model
    if model == "o2m":
        values = _collect(args, "o2m", config)
        params = O2MParams(**values)
        for msg in params.check():
            log.warning(msg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = o2m_efficiency(params, run["n_traj"], run["seed"], threads=args.threads,
                                 strict=run["strict"], rate_reference=run["rate_reference"],
                                 rate_statistic=run["rate_statistic"], rate_convention=run["rate_convention"])
            model_obj, _ = build_o2m(params)
        t_final = o2m_t_final(params)
        zeta = analytic.efficiency(analytic.AnalyticParams(params.gamma_fg_t, params.gamma_eg_t, params.g_c)) \
            if params.gamma_fg_t > 0 else None
    else:
        values = _collect(args, "m2o", config)
        params = M2OParams(**values)
        res = m2o_efficiency(params, run["n_traj"], run["seed"], threads=args.threads,
                             rate_statistic=run["rate_statistic"], rate_convention=run["rate_convention"])
        model_obj, _ = build_m2o(params)
        t_final = m2o_t_final(params)
        zeta = None
    full = {f: getattr(params, f) for f in field_map(model)}
    out = [("model", model)] + _echo_params(model, full)
    out.append(("omega_0_used", f"{params.drive:.6g} MHz"))
    if model == "o2m":
        out += [("sigma_used", f"{params.width:.6g} ns"), ("t_0_used", f"{params.center:.6g} ns")]
    out += [
        ("t_final_used", f"{t_final:.6g} ns"),
        ("dt_used", f"{params.dt or model_obj.default_dt():.6g} ns"),
        ("n_traj", str(res.n_traj)),
        ("n_failed", str(res.n_failed)),
        ("seed", str(run["seed"])),
        ("herald_count", str(res.herald_count)),
        ("efficiency", _fmt(res.efficiency)),
        ("efficiency_stderr", _fmt(res.efficiency_stderr)),
        ("rate_MHz", _fmt(res.rate_MHz, ".4f")),
        ("rate_statistic", res.rate_statistic),
        ("rate_convention", res.rate_convention),
    ]
    if model == "o2m":
        out += [("rate_reference", run["rate_reference"]), ("strict", str(run["strict"])),
                ("analytic_zeta", _fmt(zeta))]
    _emit(out)
    return EXIT_OK


def cmd_analytic(args) -> int:
    values = _collect(args, "analytic", _load(args), ANALYTIC_DEFAULTS)
    p = analytic.AnalyticParams(values["gamma_fg_t"], values["gamma_eg_t"], values["g_c"])
    b = analytic.mean_output_field(p)
    out = _echo_params("analytic", values)
    out += [("b_re", f"{b.real:.6f}"), ("b_im", f"{b.imag:.6f}"), ("zeta", f"{analytic.efficiency(p):.6f}")]
    if p.g_c > 0:
        g_opt = analytic.optimal_gamma_eg(p.gamma_fg_t, p.g_c)
        z_opt = analytic.efficiency(analytic.AnalyticParams(p.gamma_fg_t, g_opt, p.g_c))
        out += [("gamma_eg_opt", f"{g_opt:.4f} MHz"), ("ratio_opt", f"{g_opt / p.gamma_fg_t:.6f}"),
                ("zeta_opt", f"{z_opt:.6f}")]
    _emit(out)
    return EXIT_OK


def cmd_gc_calc(args) -> int:
    values = _collect(args, "device", _load(args),
                      {"z_cav": 2000.0, "d": 7e-6, "d_prime": 200e-9, "length": 3e-3, "freq": 11.0,
                       "a": 10e-9, "eps_gaas": 13.0})
    from .config import device_params

    dev = device_params(values)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = analytic.coupling_report(dev)
    for w in caught:
        log.warning(str(w.message))
    out = _echo_params("device", values)
    out += [
        ("p", f"{rep.p:.6g} C m"),
        ("eps_eff", f"{rep.eps_eff:.6g}"),
        ("enhancement", f"{rep.enhancement:.6g}"),
        ("E_rms", f"{rep.e_rms:.6g} V/m"),
        ("g_c", f"{rep.g_c_mhz:.6g} MHz"),
    ]
    _emit(out)
    return EXIT_OK


ORACLE_MODELS = ("two-level", "rabi", "o2m", "m2o")


def cmd_oracle_check(args) -> int:
    config = _load(args)
    run = _run_options(args, config)
    if args.model == "two-level":
        model, psi0 = build_two_level(100.0)
        t_final = 8.0
    elif args.model == "rabi":
        model, psi0 = build_two_level(20.0, 50.0, excited=False)
        t_final = 20.0
    elif args.model == "o2m":
        params = O2MParams(**_collect(args, "o2m", config))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model, psi0 = build_o2m(params)
        t_final = o2m_t_final(params)
    else:
        params = M2OParams(**_collect(args, "m2o", config))
        model, psi0 = build_m2o(params)
        t_final = m2o_t_final(params)
    oracle_model = scaled_channels(model, args.perturb_oracle) if args.perturb_oracle != 1.0 else None
    report = compare_with_oracle(model, psi0, t_final, level_observables(model.space), run["n_traj"], run["seed"],
                                 n_points=args.points, threads=args.threads, oracle_model=oracle_model)
    name, t = report.worst()
    _emit([
        ("model", args.model),
        ("dim", str(model.space.dim)),
        ("n_traj", str(report.n_traj)),
        ("seed", str(run["seed"])),
        ("time_points", str(report.times.size)),
        ("observables", ",".join(report.names)),
        ("oracle_rate_factor", f"{args.perturb_oracle:g}"),
        ("max_normalized_deviation", f"{report.max_deviation:.4f}"),
        ("worst", f"{name} at {t:.4g} ns"),
        ("threshold", f"{report.threshold:g}"),
        ("result", "pass" if report.passed else "fail"),
    ])
    return EXIT_OK if report.passed else EXIT_ORACLE


def cmd_transfer(args) -> int:
    config = _load(args)
    run = _run_options(args, config)
    values = _collect(args, "transfer", config, TRANSFER_DEFAULTS)
    conv = O2MParams(**{"g_c": 200.0, **_collect(args, "o2m", config)})
    qubit = qubit_from(values)
    protocol = protocol_from(values, conv)
    from .transfer import run_transfer

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = run_transfer(qubit, protocol, run["n_traj"], run["seed"], threads=args.threads)
    for w in caught:
        log.warning(str(w.message))
    pops = out.populations
    _emit([
        ("alpha", f"{qubit.alpha.real:.6f}{qubit.alpha.imag:+.6f}j"),
        ("beta", f"{qubit.beta.real:.6f}{qubit.beta.imag:+.6f}j"),
        ("t1", f"{qubit.t1:g} ns"),
        ("t2", f"{qubit.t2:g} ns"),
        ("injection", protocol.injection),
        ("g_t", f"{protocol.g_t:g} MHz"),
        ("pi_pulse", f"{protocol.pi_pulse:g} ns"),
        ("detectors", str(protocol.detectors)),
        ("n_traj", str(out.n_traj)),
        ("n_failed", str(out.n_failed)),
        ("seed", str(run["seed"])),
        ("fidelity", _fmt(out.fidelity)),
        ("fidelity_stderr", _fmt(out.fidelity_stderr)),
        ("syndrome", _fmt(out.syndrome)),
        ("syndrome_stderr", _fmt(out.syndrome_stderr)),
        ("success_prob", _fmt(out.success_prob)),
        ("success_stderr", _fmt(out.success_stderr)),
        ("herald_prob", _fmt(out.herald_prob)),
        ("heralded_fidelity", _fmt(out.heralded_fidelity)),
        ("residual_cavity", _fmt(out.residual_cavity, ".3g")),
    ] + [(f"P_{k}", _fmt(v)) for k, v in pops.items()])
    return EXIT_OK


def _parse_set(items, model: str) -> dict:
    """``--set key=value`` pairs for the sweep's fixed parameters."""
    fixed: dict = {}
    ns = model
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (x.strip() for x in item.split("=", 1))
        target_ns, name = ns, key
        if "." in key:
            target_ns, name = key.split(".", 1)
        if target_ns not in SCHEMAS:
            raise ConfigError(f"unknown namespace in {key!r}")
        fields = field_map(target_ns)
        if name not in fields:
            raise ConfigError(f"unknown key {key!r}")
        parsed = parse_value(value, fields[name])
        if target_ns == ns:
            fixed[name] = parsed
        elif model == "transfer" and target_ns == "o2m":
            fixed.setdefault("o2m", {})[name] = parsed
        else:
            raise ConfigError(f"key {key!r} does not belong to the {model} model")
    return fixed


def _sweep_field(model: str, param: str) -> Field:
    if param == RATIO:
        return Field(RATIO, "float")
    if param.startswith("o2m."):
        return field_map("o2m")[param[4:]]
    return field_map(model)[param]


def cmd_sweep(args) -> int:
    config = _load(args)
    run = _run_options(args, config)
    model = args.model
    fixed = {}
    if model in ("o2m", "m2o", "analytic", "transfer"):
        fixed.update(config.get(model, {}))
    if model == "transfer" and "o2m" in config:
        fixed["o2m"] = dict(config["o2m"])
    for k, v in _parse_set(args.set, model).items():
        if k == "o2m":
            fixed.setdefault("o2m", {}).update(v)
        else:
            fixed[k] = v
    try:
        f = _sweep_field(model, args.param)
    except KeyError:
        raise ConfigError(f"{args.param!r} is not a parameter of the {model} model") from None
    lo = parse_value(args.min, f)
    hi = parse_value(args.max, f)
    opts = {}
    if model == "o2m":
        opts = {"strict": run["strict"], "rate_reference": run["rate_reference"]}
    spec = SweepSpec(model, args.param, lo, hi, args.points, args.spacing, fixed, run["n_traj"], run["seed"],
                     run["rate_statistic"], run["rate_convention"], args.threads, opts)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = run_sweep(spec, progress=lambda i, x: log.info("point %d: %s=%g", i, args.param, x))
    csv_text = rows_to_csv(args.param, rows)
    try:
        if args.out == "-":
            sys.stdout.write(csv_text)
        else:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(csv_text)
            with open(args.out + ".meta", "w", encoding="utf-8") as fh:
                fh.write(_meta(args))
        if args.svg:
            label = "fidelity" if model == "transfer" else "efficiency"
            with open(args.svg, "w", encoding="utf-8") as fh:
                fh.write(rows_to_svg(args.param, rows, label))
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_SIMULATION
    failed = [r for r in rows if r.error]
    return EXIT_SIMULATION if failed else EXIT_OK


def _meta(args) -> str:
    lines = [
        f"command = {' '.join(sys.argv)}",
        f"created = {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}",
        f"cascadeq = {__version__}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"threads = {args.threads}",
        f"{SEED_ENV} = {os.environ.get(SEED_ENV, '')}",
    ]
    return "\n".join(lines) + "\n"


# parser ---------------------------------------------------------------------

def _add_run(parser: argparse.ArgumentParser, *, rate: bool = True) -> None:
    g = parser.add_argument_group("run options")
    g.add_argument("--n-traj", dest="run__n_traj", metavar="N", help="number of trajectories")
    g.add_argument("--seed", dest="run__seed", metavar="N",
                   help=f"base seed; trajectory i uses seed + i (default ${SEED_ENV} or 0)")
    if rate:
        g.add_argument("--rate-statistic", dest="run__rate_statistic", choices=("p50", "p90", "mean"),
                       help="herald-time statistic for the rate (default mean)")
        g.add_argument("--rate-convention", dest="run__rate_convention", choices=("reciprocal", "angular"),
                       help="rate = 1/tau or 1/(2 pi tau) (default reciprocal)")
        g.add_argument("--rate-reference", dest="run__rate_reference", choices=("start", "peak"),
                       help="o2m rate origin: drive start or pulse peak (default start)")
        g.add_argument("--strict", dest="run__strict", action="store_const", const="true",
                       help="o2m: count a herald only if it precedes every cavity loss")


def _add_common(parser: argparse.ArgumentParser, top: bool) -> None:
    # accepted before or after the subcommand; the subcommand copy only
    # overrides when given
    kw = {} if top else {"default": argparse.SUPPRESS}
    parser.add_argument("--threads", type=int, metavar="N", help="worker threads; results do not depend on it",
                        **({"default": 1} if top else kw))
    parser.add_argument("--config", metavar="FILE", help="flat 'namespace.key = value' file; flags override it",
                        **({"default": None} if top else kw))
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadeq",
        description="Quantum-trajectory simulator for cascaded microwave-optical photon conversion.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_common(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, top=False)

    p = sub.add_parser("convert-o2m", parents=[common], help="optical-to-microwave conversion at one parameter point")
    _add_fields(p, "o2m")
    _add_run(p)
    p.set_defaults(func=cmd_convert, model="o2m")

    p = sub.add_parser("convert-m2o", parents=[common], help="microwave-to-optical conversion at one parameter point")
    _add_fields(p, "m2o")
    _add_run(p)
    p.set_defaults(func=cmd_convert, model="m2o")

    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter and write CSV (optionally SVG)")
    p.add_argument("--model", required=True, choices=("o2m", "m2o", "analytic", "transfer"))
    p.add_argument("--param", required=True,
                   help="swept parameter; 'ratio' is gamma_eg_t/gamma_fg_t; transfer sweeps accept o2m.<key>")
    p.add_argument("--min", required=True, metavar="VALUE[unit]", help="grid start, with the parameter's unit")
    p.add_argument("--max", required=True, metavar="VALUE[unit]", help="grid end, with the parameter's unit")
    p.add_argument("--points", type=int, default=11, metavar="N", help="grid points (at least 2)")
    p.add_argument("--spacing", choices=("linear", "log"), default="linear")
    p.add_argument("--set", action="append", metavar="KEY=VALUE[unit]", help="fixed parameter (repeatable)")
    p.add_argument("--out", required=True, metavar="FILE", help="CSV output path ('-' for stdout)")
    p.add_argument("--svg", metavar="FILE", help="also write a single-series SVG chart")
    _add_run(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analytic", parents=[common], help="closed-form efficiency and optimal herald decay rate")
    _add_fields(p, "analytic")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("gc-calc", parents=[common], help="vacuum field and CQD-cavity coupling from device geometry")
    _add_fields(p, "device")
    p.set_defaults(func=cmd_gc_calc)

    p = sub.add_parser("oracle-check", parents=[common], help="compare a trajectory ensemble with the master equation")
    p.add_argument("--model", required=True, choices=ORACLE_MODELS)
    p.add_argument("--points", type=int, default=50, metavar="N", help="time points on the comparison grid")
    p.add_argument("--perturb-oracle", type=float, default=1.0, metavar="FACTOR",
                   help="scale every decay rate in the oracle only (sensitivity check; expect failure)")
    _add_fields(p, "o2m", prefix="o2m_")
    _add_fields(p, "m2o", prefix="m2o_")
    _add_run(p, rate=False)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("transfer", parents=[common], help="time-bin photon to transmon state transfer")
    _add_fields(p, "transfer")
    _add_fields(p, "o2m", prefix="o2m_")
    _add_run(p, rate=False)
    p.set_defaults(func=cmd_transfer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    # run options default to None so config files can supply them
    for name, f in field_map("run").items():
        if not hasattr(args, f"run__{name}"):
            setattr(args, f"run__{name}", None)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, OracleError) as exc:
        print(f"cascadeq: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnsembleError, TrajectoryError) as exc:
        print(f"cascadeq: simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except ValueError as exc:
        print(f"cascadeq: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
