"""Command-line front end.

Every subcommand resolves its settings from three layers: built-in
defaults, then a flat ``key = value`` config file (``--config``), then
command-line flags.  Outputs go to ``--out-dir``; ``manifest.json`` is
written last and lists a sha256 digest for every file of the run.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 64 usage.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .clt import (
    CltConfig,
    clear_cache,
    lipschitz_probe,
    modulus_experiment,
    modulus_spread,
    resolve_threads,
    run_direct_clt,
    run_surrogate_clt,
    sample_parameters,
    variance_scaling,
)
from .errors import NumericalError
from .maps import critical_orbit, make_family
from .quantities import QuantityConfig, dyn_quantities, get_observable, transversality_J
from .symbolic import n_of, param_partition, phase_partition
from .transfer import build_ulam, invariant_density, lasota_yorke_probe, saltus_weights
from .wild import birkhoff_surrogate, n3_estimate, wild_integral

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64
MIN_EXPERIMENT_SAMPLES = 100


class UsageError(Exception):
    pass


# -- value parsing -----------------------------------------------------------

def _floats(text):
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _ints(text):
    return tuple(int(round(v)) for v in _floats(text))


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


REQUIRED = object()

FAMILY_KEYS = {"family": (str, "tent"), "param_min": (float, 1.2), "param_max": (float, 2.0)}


def _clt_keys():
    parsers = {int: _int, float: float, str: str, bool: _bool}
    keys = {}
    for f in dataclasses.fields(CltConfig):
        if f.name in ("tier", "threads"):
            continue
        if f.name == "neg_log_h":
            keys[f.name] = (_floats, f.default)
        elif f.name == "N_schedule":
            keys[f.name] = (_ints, f.default)
        elif f.name == "psi_override":
            keys[f.name] = (_optional_float, None)
        else:
            keys[f.name] = (parsers[type(f.default)], f.default)
    keys["cdf"] = (_bool, False)
    return keys


COMMAND_KEYS = {
    "density": {**FAMILY_KEYS, "t": (float, REQUIRED), "n": (_int, 2**12)},
    "quantities": {
        **FAMILY_KEYS,
        "t": (_floats, REQUIRED),
        "phi": (str, "identity"),
        "n": (_int, 2**14),
        "j_tol": (float, 1e-12),
        "sigma_mode": (str, "green_kubo"),
        "sigma_quadrature": (str, "ulam"),
    },
    "orbit": {**FAMILY_KEYS, "t": (float, REQUIRED), "length": (_int, 100), "precision": (str, "double")},
    "partition": {
        **FAMILY_KEYS,
        "j": (_int, REQUIRED),
        "t": (_optional_float, None),
        "J": (_floats, None),
        "scan": (_int, 10_000),
    },
    "wild-check": {
        **FAMILY_KEYS,
        "h": (float, 1e-8),
        "t": (_floats, None),
        "samples": (_int, 10),
        "window_min": (float, 1.5),
        "window_max": (float, 1.9),
        "phi": (str, "identity"),
        "n": (_int, 2**14),
        "seed": (_int, 0),
    },
    "ly-check": {**FAMILY_KEYS, "t": (float, REQUIRED), "n": (_int, 2**12), "trials": (_int, 20), "k_max": (_int, 40), "seed": (_int, 0)},
    "modulus": {
        **FAMILY_KEYS,
        "t": (float, 1.9),
        "hs": (_floats, (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)),
        "n": (_int, 2**16),
    },
}
for _name in ("clt-surrogate", "clt-direct", "variance-scaling", "lipschitz-probe"):
    COMMAND_KEYS[_name] = _clt_keys()

ALIASES = {"observable": "phi", "phi": "observable"}

HELP = {
    "density": "invariant density on an Ulam grid (CSV)",
    "quantities": "L, ell, S, J, sigma, psi, response per parameter (JSON lines)",
    "orbit": "critical orbit f_t^j(c), j = 1..length (CSV)",
    "partition": "phase (--t) or parameter (--J a,b) monotonicity partitions (CSV)",
    "wild-check": "wild integral against the critical-orbit surrogate (CSV)",
    "clt-surrogate": "surrogate-tier CLT experiment",
    "clt-direct": "direct Newton-quotient CLT experiment",
    "variance-scaling": "variance of Psi-normalised quotients against -log h",
    "modulus": "L1 modulus of continuity of t -> rho_t",
    "lipschitz-probe": "growth of max |quotient| along an orbit-length schedule",
    "ly-check": "Lasota-Yorke probe of the Ulam matrix",
}


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        values[key] = value
    return values


def resolve_settings(command, file_values, flag_values):
    """Merge defaults, file and flags; coerce types; name missing keys."""
    spec = COMMAND_KEYS[command]
    raw = {}
    for source in (file_values, flag_values):
        for key, value in source.items():
            if key not in spec:
                key = key.replace("-", "_")
            if key not in spec:
                key = ALIASES.get(key, key)
            if key not in spec:
                raise UsageError(f"unknown key {key!r} for {command}")
            raw[key] = value
    out = {}
    for key, (parse, default) in spec.items():
        if key in raw:
            try:
                out[key] = parse(raw[key])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for key {key!r}: {exc}") from None
        elif default is REQUIRED:
            raise UsageError(f"missing required key: {key}")
        else:
            out[key] = default
    return out


# -- output helpers ----------------------------------------------------------

def fmt(x):
    """17 significant digits, round-trip safe."""
    return format(float(x), ".17g")


def fmt_exp(log_value):
    """exp(log_value) in decimal, also when it underflows a double."""
    if log_value > -700.0:
        return fmt(math.exp(log_value))
    l10 = log_value / math.log(10.0)
    e = math.floor(l10)
    m = 10.0 ** (l10 - e)
    if m >= 10.0:
        m, e = m / 10.0, e + 1
    return f"{m:.16f}e{e:+d}"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dumps(obj, **kw):
    return json.dumps(obj, default=_json_default, sort_keys=True, **kw)


def run_id(command, settings):
    blob = dumps({"command": command, "config": settings}).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


class RunWriter:
    """Collects output files for one run and writes the manifest last."""

    def __init__(self, out_dir, command, settings):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.settings = settings
        self.files = []
        self.started = datetime.now(timezone.utc).isoformat()
        manifest = self.out / "manifest.json"
        if manifest.exists():
            manifest.unlink()

    def write(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.files.append(name)
        return path

    def finish(self):
        digests = {name: hashlib.sha256((self.out / name).read_bytes()).hexdigest() for name in self.files}
        manifest = {
            "command": self.command,
            "config": self.settings,
            "seed": self.settings.get("seed"),
            "run_id": run_id(self.command, self.settings),
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "version": __version__,
            "files": digests,
        }
        (self.out / "manifest.json").write_text(dumps(manifest, indent=2) + "\n")
        return manifest


def samples_csv(samples):
    buf = io.StringIO()
    buf.write("t,h_eff,raw,normalized\n")
    for s in samples:
        buf.write(f"{fmt(s.t)},{fmt_exp(s.log_h)},{fmt(s.raw)},{fmt(s.normalized)}\n")
    return buf.getvalue()


def cdf_dat(xs, ys):
    return "".join(f"{fmt(x)} {fmt(y)}\n" for x, y in zip(xs, ys))


def _family(settings):
    return make_family(settings["family"], settings["param_min"], settings["param_max"])


# -- subcommands ---------------------------------------------------------------

def cmd_density(s, writer, threads):
    family = _family(s)
    density = invariant_density(build_ulam(family, s["t"], s["n"]))
    text = density.to_csv()
    writer.write("density.csv", text)
    return text


def cmd_quantities(s, writer, threads):
    family = _family(s)
    config = QuantityConfig(
        n=s["n"], j_tol=s["j_tol"], sigma_mode=s["sigma_mode"], sigma_quadrature=s["sigma_quadrature"]
    )
    phi = get_observable(s["phi"])
    lines = [dumps(dyn_quantities(family, t, phi, config).to_json_dict()) for t in s["t"]]
    text = "\n".join(lines) + "\n"
    writer.write("quantities.jsonl", text)
    return text


def cmd_orbit(s, writer, threads):
    family = _family(s)
    orbit = critical_orbit(family, s["t"], s["length"], precision=s["precision"])
    text = "index,x\n" + "".join(f"{j},{fmt(x)}\n" for j, x in enumerate(orbit, start=1))
    writer.write("orbit.csv", text)
    return text


def cmd_partition(s, writer, threads):
    family = _family(s)
    rows = ["level,left,right"]
    if s["t"] is not None:
        for level in range(1, s["j"] + 1):
            part = phase_partition(family, s["t"], level)
            rows.extend(f"{level},{fmt(a)},{fmt(b)}" for a, b in part.intervals)
    elif s["J"] is not None:
        if len(s["J"]) != 2:
            raise UsageError("key J needs two values a,b")
        for level in range(1, s["j"] + 1):
            part = param_partition(family, s["J"], level, scan=s["scan"])
            rows.extend(f"{level},{fmt(a)},{fmt(b)}" for a, b in part.cylinders)
    else:
        raise UsageError("missing required key: t (phase partition) or J (parameter partition)")
    text = "\n".join(rows) + "\n"
    writer.write("partition.csv", text)
    return text


def cmd_wild_check(s, writer, threads):
    family = _family(s)
    phi = get_observable(s["phi"])
    h = s["h"]
    if s["t"] is not None:
        ts = s["t"]
    else:
        lo, hi = s["window_min"], s["window_max"]
        ts = sample_parameters(s["seed"], s["samples"], lo, hi - h if h > 0 else hi)
    rows = ["t,h,n_of,n3,wild_integral,surrogate,s1,J,residual"]
    for t in ts:
        t = float(t)
        density = invariant_density(build_ulam(family, t, s["n"]))
        saltus = saltus_weights(family, t, density)
        J = transversality_J(family, t)
        N = n_of(family, t, h)
        n3 = n3_estimate(family, t, h)
        wild = wild_integral(family, t, h, phi, density, saltus=saltus)
        sur = birkhoff_surrogate(family, t, n3, phi, density) if n3 >= 1 else 0.0
        resid = wild / (saltus.s1 * J) - sur
        rows.append(",".join([fmt(t), fmt(h), str(N), str(n3), fmt(wild), fmt(sur), fmt(saltus.s1), fmt(J), fmt(resid)]))
    text = "\n".join(rows) + "\n"
    writer.write("wild.csv", text)
    return text


def cmd_ly_check(s, writer, threads):
    family = _family(s)
    report = lasota_yorke_probe(build_ulam(family, s["t"], s["n"]), s["trials"], s["k_max"], s["seed"])
    text = dumps(dataclasses.asdict(report), indent=2) + "\n"
    writer.write("ly.json", text)
    return text


def cmd_modulus(s, writer, threads):
    family = _family(s)
    rows = modulus_experiment(family, s["t"], s["hs"], s["n"])
    writer.write("modulus.csv", "h,l1,ratio\n" + "".join(f"{fmt(r['h'])},{fmt(r['l1'])},{fmt(r['ratio'])}\n" for r in rows))
    summary = {"rows": rows, "spread": modulus_spread(rows), "config": s, "run_id": run_id("modulus", s)}
    text = dumps(summary, indent=2) + "\n"
    writer.write("summary.json", text)
    return text


def _clt_config(s, tier, threads):
    if s["samples"] < MIN_EXPERIMENT_SAMPLES:
        raise UsageError(f"key samples must be >= {MIN_EXPERIMENT_SAMPLES} for experiments")
    fields = {f.name for f in dataclasses.fields(CltConfig)}
    kwargs = {k: v for k, v in s.items() if k in fields}
    return CltConfig(tier=tier, threads=threads, **kwargs)


def _experiment_outputs(command, s, writer, samples, summary_dict, cdf=None):
    writer.write("samples.csv", samples_csv(samples))
    summary_dict = dict(summary_dict)
    summary_dict["config"] = s
    summary_dict["run_id"] = run_id(command, s)
    text = dumps(summary_dict, indent=2) + "\n"
    writer.write("summary.json", text)
    if s.get("cdf") and cdf is not None:
        writer.write("cdf.dat", cdf_dat(*cdf))
    return text


def _clt_runner(func, tier):
    def run(s, writer, threads, command=None):
        config = _clt_config(s, tier, threads)
        samples, stats = func(config)
        summary = stats.to_json_dict(with_cdf=True)
        summary["extra"] = {k: v for k, v in summary["extra"].items() if k != "surrogate"}
        return _experiment_outputs(command, s, writer, samples, summary, (stats.cdf_x, stats.cdf_y))

    return run


def cmd_variance_scaling(s, writer, threads, command=None):
    config = _clt_config(s, "surrogate", threads)
    samples, stats = variance_scaling(config)
    return _experiment_outputs(command, s, writer, samples, stats.to_json_dict())


def cmd_lipschitz(s, writer, threads, command=None):
    config = _clt_config(s, "surrogate", threads)
    samples, report = lipschitz_probe(config)
    return _experiment_outputs(command, s, writer, samples, report)


COMMANDS = {
    "density": cmd_density,
    "quantities": cmd_quantities,
    "orbit": cmd_orbit,
    "partition": cmd_partition,
    "wild-check": cmd_wild_check,
    "ly-check": cmd_ly_check,
    "modulus": cmd_modulus,
    "clt-surrogate": _clt_runner(run_surrogate_clt, "surrogate"),
    "clt-direct": _clt_runner(run_direct_clt, "direct"),
    "variance-scaling": cmd_variance_scaling,
    "lipschitz-probe": cmd_lipschitz,
}
EXPERIMENTS = {"clt-surrogate", "clt-direct", "variance-scaling", "lipschitz-probe"}


# -- argument parsing ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="flat key=value config file")
    parser.add_argument("--seed", type=int, metavar="U64", default=default)
    parser.add_argument("--out-dir", metavar="PATH", default=default, help="output directory (default: out/<command>)")
    parser.add_argument("--threads", type=int, metavar="N", default=default, help="worker processes")


def build_parser():
    parser = _Parser(prog="unimodal-clt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=HELP[name])
        _global_flags(p, suppress=True)
        for key in keys:
            if key == "seed":
                continue
            flags = [f"--{key.replace('_', '-')}"]
            if key == "observable":
                flags.append("--phi")
            nargs = "+" if key in ("t", "J", "hs", "neg_log_h", "N_schedule") else None
            p.add_argument(*flags, dest=f"key_{key}", metavar=key.upper(), nargs=nargs, default=argparse.SUPPRESS)
    return parser


def _flag_values(ns):
    out = {}
    for name, value in vars(ns).items():
        if name.startswith("key_"):
            if isinstance(value, list):
                value = ",".join(value)
            out[name[4:]] = value
    return out


def run_command(argv=None):
    """Parse ``argv``, run the subcommand and return the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = build_parser().parse_args(argv)
        if ns.command is None:
            raise UsageError(f"no command given; choose from {', '.join(COMMANDS)}")
        command = ns.command
        file_values = read_config_file(ns.config) if ns.config else {}
        flags = _flag_values(ns)
        if ns.seed is not None:
            if "seed" not in COMMAND_KEYS[command]:
                raise UsageError(f"{command} takes no seed")
            flags["seed"] = ns.seed
        settings = resolve_settings(command, file_values, flags)
        threads = resolve_threads(ns.threads)
        out_dir = ns.out_dir or os.path.join("out", command)
        writer = RunWriter(out_dir, command, settings)
        func = COMMANDS[command]
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if command in EXPERIMENTS:
                text = func(settings, writer, threads, command=command)
            else:
                text = func(settings, writer, threads)
        writer.finish()
        sys.stdout.write(text)
        print(f"# {command} finished in {time.perf_counter() - t0:.2f}s -> {out_dir}", file=sys.stderr)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    finally:
        clear_cache()


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
