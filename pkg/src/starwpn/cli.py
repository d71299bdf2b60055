"""Experiment runner: config-driven sweeps and GA optimization to CSV.

Configuration is INI-style with one section per module.  Every value can be
overridden on the command line with --set section.key=value; bundled presets
reproduce the reference operating points (see presets/*.ini).  Output is one
CSV per command plus a JSON manifest embedding the fully resolved config, so
any run can be reproduced byte-for-byte from its manifest.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 I/O error.
"""

import argparse
import configparser
import hashlib
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analytics, montecarlo, optimizer, system
from .channel import NakagamiParams, gauss_hermite_rule


class ConfigError(Exception):
    """Invalid or inconsistent configuration."""


# every key the config accepts, with units in the comment column of presets
DEFAULTS = {
    "system": {
        "p_ap_watts": "1.0",
        "snr_db": "40.0",
        "d0_m": "30.0",
        "d_t_m": "2.0",
        "d_r_m": "4.0",
        "exp0": "2.0",
        "exp_t": "2.0",
        "exp_r": "2.0",
        "n_elements": "30",
        "rate_bps_hz": "1.0",
        "m_ris": "2.0",
        "omega_ris": "1.0",
        "m_t": "2.0",
        "omega_t": "1.0",
        "m_r": "2.0",
        "omega_r": "1.0",
    },
    "policy": {
        "tep_alpha_t": "0.25",
        "tep_alpha_r": "0.25",
        "tep_alpha_ap": "0.5",
        "tep_beta_t": "0.6",
        "tep_beta_r": "0.4",
        "eep_alpha_et": "0.5",
        "eep_alpha_it": "0.5",
        "eep_beta_t": "0.6",
        "eep_beta_r": "0.4",
        "tdma_alpha_t": "0.25",
        "tdma_alpha_r": "0.25",
        "tdma_alpha_ap_t": "0.25",
        "tdma_alpha_ap_r": "0.25",
    },
    "quadrature": {"gh_order": "30"},
    "mc": {
        "trials": "1000000",
        "seed": "20240811",
        "gain_mode": "independent_gains",
    },
    "ga": {
        "population": "50",
        "generations": "100",
        "bits_per_var": "16",
        "selection_q": "0.8",
        "crossover_p": "0.8",
        "mutation_p": "0.01",
        "penalty_coef": "1000.0",
        "seed": "20240811",
        "elitism": "1",
        "problems": "p1,p2",
        "n_grid": "10,20,30,40,50",
    },
    "experiment": {
        "name": "sweep",
        "schemes": "tep,eep,tdma",
        "sweep": "snr_db",
        "grid": "20:50:5",
        "metrics": "outage_t,outage_r,sum_throughput,phi,aoi",
        "engine": "analytic",
        "threads": "1",
        "out_dir": "results",
    },
}

# keys that are legal but have no default (must be set where needed)
EXTRA_KEYS = {"ga": {"delta_th"}}

SWEEP_VARS = ("snr_db", "n_elements", "rate", "alpha", "beta_r")
METRICS = ("outage_t", "outage_r", "throughput_t", "throughput_r", "sum_throughput", "phi", "aoi")
ENGINES = ("analytic", "montecarlo", "both")
# metrics whose Monte Carlo estimate carries a standard-error column
SE_METRICS = METRICS


def _known_presets():
    root = resources.files("starwpn") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_config(path: str = None, preset: str = None, sets=()) -> dict:
    """Resolve defaults, optional preset, optional file, and overrides."""
    if path and preset:
        raise ConfigError("pass either a config file or --preset, not both")
    cfg = {section: dict(keys) for section, keys in DEFAULTS.items()}
    parser = configparser.ConfigParser(interpolation=None)
    if preset:
        try:
            text = (resources.files("starwpn") / "presets" / f"{preset}.ini").read_text()
        except FileNotFoundError:
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(_known_presets())}")
        parser.read_string(text)
    elif path:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
    for section in parser.sections():
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            _check_key(section, key)
            cfg[section][key] = value
    for item in sets:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}]")
        _check_key(section, key)
        cfg[section][key] = value
    return cfg


def _check_key(section: str, key: str) -> None:
    if key not in DEFAULTS[section] and key not in EXTRA_KEYS.get(section, ()):
        raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _get(cfg, section, key, conv, desc):
    raw = cfg[section].get(key)
    if raw is None:
        raise ConfigError(f"missing required key {section}.{key} ({desc})")
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be {desc}, got {raw!r}")


def _get_float(cfg, section, key):
    return _get(cfg, section, key, float, "a number")


def _get_int(cfg, section, key):
    return _get(cfg, section, key, int, "an integer")


def build_system(cfg: dict) -> system.SystemConfig:
    p_ap = _get_float(cfg, "system", "p_ap_watts")
    snr_db = _get_float(cfg, "system", "snr_db")
    try:
        return system.SystemConfig(
            p_ap=p_ap,
            n0=p_ap / 10.0 ** (snr_db / 10.0),
            d0=_get_float(cfg, "system", "d0_m"),
            d_t=_get_float(cfg, "system", "d_t_m"),
            d_r=_get_float(cfg, "system", "d_r_m"),
            exp0=_get_float(cfg, "system", "exp0"),
            exp_t=_get_float(cfg, "system", "exp_t"),
            exp_r=_get_float(cfg, "system", "exp_r"),
            n_elements=_get_int(cfg, "system", "n_elements"),
            fading_ris=NakagamiParams(_get_float(cfg, "system", "m_ris"), _get_float(cfg, "system", "omega_ris")),
            fading_t=NakagamiParams(_get_float(cfg, "system", "m_t"), _get_float(cfg, "system", "omega_t")),
            fading_r=NakagamiParams(_get_float(cfg, "system", "m_r"), _get_float(cfg, "system", "omega_r")),
            rate=_get_float(cfg, "system", "rate_bps_hz"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def build_policy(cfg: dict, scheme: str):
    p = cfg["policy"]
    try:
        if scheme == "tep":
            return system.TepPolicy(
                alpha_t=float(p["tep_alpha_t"]),
                alpha_r=float(p["tep_alpha_r"]),
                alpha_ap=float(p["tep_alpha_ap"]),
                beta_t=float(p["tep_beta_t"]),
                beta_r=float(p["tep_beta_r"]),
            )
        if scheme == "eep":
            return system.EepPolicy(
                alpha_et=float(p["eep_alpha_et"]),
                alpha_it=float(p["eep_alpha_it"]),
                beta_t=float(p["eep_beta_t"]),
                beta_r=float(p["eep_beta_r"]),
            )
        if scheme == "tdma":
            return system.TdmaPolicy(
                alpha_t=float(p["tdma_alpha_t"]),
                alpha_r=float(p["tdma_alpha_r"]),
                alpha_ap_t=float(p["tdma_alpha_ap_t"]),
                alpha_ap_r=float(p["tdma_alpha_ap_r"]),
            )
    except ValueError as exc:
        raise ConfigError(f"invalid {scheme} policy: {exc}")
    raise ConfigError(f"unknown scheme {scheme!r}")


def parse_grid(text: str, as_int: bool = False):
    """Grid syntax: 'a,b,c' explicit list or 'start:stop:step' inclusive."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range grid must be start:stop:step, got {text!r}")
        start, stop, step = (float(x) for x in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"bad grid range {text!r}")
        count = int(round((stop - start) / step))
        values = [start + i * step for i in range(count + 1) if start + i * step <= stop + 1e-9]
    else:
        try:
            values = [float(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"grid values must be numbers, got {text!r}")
    if not values:
        raise ConfigError("sweep grid is empty")
    if as_int:
        for v in values:
            if abs(v - round(v)) > 1e-9:
                raise ConfigError(f"grid for an integer sweep contains non-integer {v}")
        return [int(round(v)) for v in values]
    return values


def _apply_sweep(cfg: dict, var: str, value, schemes) -> dict:
    out = {section: dict(keys) for section, keys in cfg.items()}
    if var == "snr_db":
        out["system"]["snr_db"] = repr(float(value))
    elif var == "n_elements":
        out["system"]["n_elements"] = str(int(value))
    elif var == "rate":
        out["system"]["rate_bps_hz"] = repr(float(value))
    elif var == "alpha":
        if "tdma" in schemes:
            raise ConfigError("the alpha sweep applies to tep/eep only")
        v = float(value)
        remainder = (1.0 - v) / 2.0
        out["policy"]["tep_alpha_ap"] = repr(v)
        out["policy"]["tep_alpha_t"] = repr(remainder)
        out["policy"]["tep_alpha_r"] = repr(remainder)
        out["policy"]["eep_alpha_it"] = repr(v)
        out["policy"]["eep_alpha_et"] = repr(1.0 - v)
    elif var == "beta_r":
        if "tdma" in schemes:
            raise ConfigError("the beta_r sweep applies to tep/eep only")
        v = float(value)
        for scheme in ("tep", "eep"):
            out["policy"][f"{scheme}_beta_r"] = repr(v)
            out["policy"][f"{scheme}_beta_t"] = repr(1.0 - v)
    else:
        raise ConfigError(f"unknown sweep variable {var!r}; choose from {SWEEP_VARS}")
    return out


def _csv_num(value) -> str:
    return format(float(value), ".17g")


def _analytic_metrics(scheme, config, policy, quad) -> dict:
    if scheme == "tdma":
        pair = analytics.outage_tdma(config, policy)
        phi = analytics.success_prob("tdma", config, policy)
    else:
        rep = analytics.perf_report(scheme, config, policy, quad)
        pair, phi = (rep.p_out_t, rep.p_out_r), rep.success_prob
    return {
        "outage_t": pair[0],
        "outage_r": pair[1],
        "throughput_t": analytics.user_throughput(scheme, "t", pair[0], config.rate, policy),
        "throughput_r": analytics.user_throughput(scheme, "r", pair[1], config.rate, policy),
        "sum_throughput": analytics.sum_throughput(scheme, pair, config.rate, policy),
        "phi": phi,
        "aoi": analytics.average_aoi(phi),
    }


def _mc_metrics(scheme, config, policy, mc_cfg, gains) -> dict:
    p_t, p_r, se_t, se_r = montecarlo.mc_outage(scheme, config, policy, mc_cfg, gains=gains)
    phi, se_phi = montecarlo.mc_success(scheme, config, policy, mc_cfg, gains=gains)
    tput_t = analytics.user_throughput(scheme, "t", p_t, config.rate, policy)
    tput_r = analytics.user_throughput(scheme, "r", p_r, config.rate, policy)
    scale_t = analytics.user_throughput(scheme, "t", 0.0, config.rate, policy)
    scale_r = analytics.user_throughput(scheme, "r", 0.0, config.rate, policy)
    aoi = analytics.average_aoi(phi)
    aoi_se = se_phi / phi**2 if phi > 0 else float("inf")
    return {
        "outage_t": (p_t, se_t),
        "outage_r": (p_r, se_r),
        "throughput_t": (tput_t, scale_t * se_t),
        "throughput_r": (tput_r, scale_r * se_r),
        "sum_throughput": (
            analytics.sum_throughput(scheme, (p_t, p_r), config.rate, policy),
            float(np.hypot(scale_t * se_t, scale_r * se_r)),
        ),
        "phi": (phi, se_phi),
        "aoi": (aoi, aoi_se),
    }


def _gains_key(config: system.SystemConfig, mc_cfg: montecarlo.McConfig):
    return (
        config.n_elements,
        config.fading_ris,
        config.fading_t,
        config.fading_r,
        mc_cfg.trials,
        mc_cfg.seed,
        mc_cfg.gain_mode,
    )


def cmd_run(cfg: dict) -> dict:
    exp = cfg["experiment"]
    schemes = [s.strip() for s in exp["schemes"].split(",") if s.strip()]
    if not schemes or any(s not in system.SCHEMES for s in schemes):
        raise ConfigError(f"schemes must be a non-empty subset of {system.SCHEMES}")
    metrics = [m.strip() for m in exp["metrics"].split(",") if m.strip()]
    if not metrics:
        raise ConfigError("metrics list is empty")
    for m in metrics:
        if m not in METRICS:
            raise ConfigError(f"unknown metric {m!r}; choose from {METRICS}")
    engine = exp["engine"]
    if engine not in ENGINES:
        raise ConfigError(f"engine must be one of {ENGINES}")
    sweep = exp["sweep"]
    if sweep not in SWEEP_VARS:
        raise ConfigError(f"unknown sweep variable {sweep!r}; choose from {SWEEP_VARS}")
    grid = parse_grid(exp["grid"], as_int=sweep == "n_elements")
    threads = _get_int(cfg, "experiment", "threads")
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    quad = gauss_hermite_rule(_get_int(cfg, "quadrature", "gh_order"))

    mc_cfg = None
    gains_cache = {}
    if engine in ("montecarlo", "both"):
        try:
            mc_cfg = montecarlo.McConfig(
                trials=_get_int(cfg, "mc", "trials"),
                seed=_get_int(cfg, "mc", "seed"),
                gain_mode=cfg["mc"]["gain_mode"],
            )
        except ValueError as exc:
            raise ConfigError(f"invalid mc configuration: {exc}")
        # draw each distinct channel ensemble once, before dispatching points
        for value in grid:
            config = build_system(_apply_sweep(cfg, sweep, value, schemes))
            key = _gains_key(config, mc_cfg)
            if key not in gains_cache:
                gains_cache[key] = montecarlo.mc_gains(config, mc_cfg)

    def point_rows(value):
        swept = _apply_sweep(cfg, sweep, value, schemes)
        config = build_system(swept)
        rows = []
        for scheme in schemes:
            policy = build_policy(swept, scheme)
            if engine in ("analytic", "both"):
                vals = _analytic_metrics(scheme, config, policy, quad)
                rows.append((value, scheme, "analytic", {m: (vals[m], None) for m in metrics}))
            if engine in ("montecarlo", "both"):
                gains = gains_cache[_gains_key(config, mc_cfg)]
                vals = _mc_metrics(scheme, config, policy, mc_cfg, gains)
                rows.append((value, scheme, "montecarlo", {m: vals[m] for m in metrics}))
        return rows

    if threads == 1:
        collected = [row for value in grid for row in point_rows(value)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            collected = [row for rows in pool.map(point_rows, grid) for row in rows]
    collected.sort(key=lambda r: (r[0], r[1], r[2]))

    header = [sweep, "scheme", "engine"]
    for m in metrics:
        header.append(m)
        header.append(f"{m}_se")
    lines = [",".join(header)]
    for value, scheme, eng, vals in collected:
        cells = [_csv_num(value) if sweep != "n_elements" else str(value), scheme, eng]
        for m in metrics:
            v, se = vals[m]
            cells.append(_csv_num(v))
            cells.append("" if se is None else _csv_num(se))
        lines.append(",".join(cells))
    name = exp["name"].strip() or "sweep"
    return {f"{name}.csv": "\n".join(lines) + "\n"}


def cmd_optimize(cfg: dict) -> dict:
    ga_sec = cfg["ga"]
    if "delta_th" not in ga_sec:
        raise ConfigError("ga.delta_th is required for optimize (age threshold, slots)")
    delta_th = _get_float(cfg, "ga", "delta_th")
    problems = [p.strip().lower() for p in ga_sec["problems"].split(",") if p.strip()]
    if not problems:
        raise ConfigError("ga.problems is empty")
    for p in problems:
        if p not in optimizer.PROBLEM_SCHEME:
            raise ConfigError(f"unknown problem {p!r}; choose from p1,p2")
    n_grid = parse_grid(ga_sec["n_grid"], as_int=True)
    try:
        ga = optimizer.GaConfig(
            population=_get_int(cfg, "ga", "population"),
            generations=_get_int(cfg, "ga", "generations"),
            bits_per_var=_get_int(cfg, "ga", "bits_per_var"),
            selection_q=_get_float(cfg, "ga", "selection_q"),
            crossover_p=_get_float(cfg, "ga", "crossover_p"),
            mutation_p=_get_float(cfg, "ga", "mutation_p"),
            penalty_coef=_get_float(cfg, "ga", "penalty_coef"),
            seed=_get_int(cfg, "ga", "seed"),
            elitism=_get_int(cfg, "ga", "elitism"),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid GA configuration: {exc}")
    quad = gauss_hermite_rule(_get_int(cfg, "quadrature", "gh_order"))

    header = [
        "n_elements",
        "problem",
        "scheme",
        "alpha",
        "beta_r",
        "sum_throughput",
        "aoi",
        "feasible",
        "generations_to_best",
        "best_fitness",
    ]
    lines = [",".join(header)]
    for n in n_grid:
        swept = _apply_sweep(cfg, "n_elements", n, schemes=())
        config = build_system(swept)
        for problem in problems:
            result = optimizer.ga_run(problem, config, delta_th, ga, quad=quad)
            lines.append(
                ",".join(
                    [
                        str(n),
                        problem,
                        result.best.scheme,
                        _csv_num(result.best.alpha),
                        _csv_num(result.best.beta_r),
                        _csv_num(result.best_throughput),
                        _csv_num(result.aoi_at_best),
                        "true" if result.feasible else "false",
                        str(result.generations_to_best),
                        _csv_num(result.best_fitness),
                    ]
                )
            )
    name = cfg["experiment"]["name"].strip() or "optimize"
    return {f"{name}_optimize.csv": "\n".join(lines) + "\n"}


def _resolved_ini(cfg: dict) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in cfg.items():
        parser[section] = dict(sorted(keys.items()))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _write_outputs(files: dict, cfg: dict, command: str, out_dir: Path, elapsed: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in files.items():
        data = text.encode("utf-8")
        (out_dir / name).write_bytes(data)
        digests[name] = {"sha256": hashlib.sha256(data).hexdigest(), "rows": text.count("\n") - 1}
    manifest = {
        "tool": "starwpn",
        "version": __version__,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "wall_clock_s": round(elapsed, 3),
        "seeds": {"mc": cfg["mc"]["seed"], "ga": cfg["ga"]["seed"]},
        "outputs": digests,
        "config_ini": _resolved_ini(cfg),
    }
    (out_dir / f"{command}_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starwpn",
        description="Closed-form and Monte Carlo performance sweeps for a "
        "surface-assisted wireless-powered two-user uplink.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, helptext in (
        ("run", "evaluate metric sweeps and write CSV"),
        ("optimize", "run the GA allocator over an element-count grid"),
    ):
        p = sub.add_parser(command, help=helptext)
        p.add_argument("config", nargs="?", help="INI config file (or use --preset)")
        p.add_argument("--preset", help="bundled preset name, e.g. fig4")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any config value")
        p.add_argument("--out", help="output directory (default: experiment.out_dir)")
        p.add_argument("--seed", type=int, help="override mc.seed and ga.seed")
        p.add_argument("--trials", type=int, help="override mc.trials")
        p.add_argument("--threads", type=int, help="override experiment.threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset, args.set)
        if args.seed is not None:
            cfg["mc"]["seed"] = str(args.seed)
            cfg["ga"]["seed"] = str(args.seed)
        if args.trials is not None:
            cfg["mc"]["trials"] = str(args.trials)
        if args.threads is not None:
            cfg["experiment"]["threads"] = str(args.threads)
        out_dir = Path(args.out) if args.out else Path(cfg["experiment"]["out_dir"])
        start = time.perf_counter()
        if args.command == "run":
            files = cmd_run(cfg)
        else:
            files = cmd_optimize(cfg)
        _write_outputs(files, cfg, args.command, out_dir, time.perf_counter() - start)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except analytics.QuadratureError as exc:
        print(f"numerical convergence failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    for name in files:
        print(out_dir / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
