"""Command-line interface: ``eitcool <command> [--config F] [--out D] [--set k=v] [--threads N]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, workflows
from .config import ConfigError, RunConfig, apply_overrides, load_config, provenance, serialize_config
from .scheme import TWO_PI

COMMANDS = ("spectrum", "cool", "steady", "scan", "tune", "ldtheory")
log = logging.getLogger("eitcool")


# -- writers -----------------------------------------------------------------

def _fmt(x) -> str:
    return "%.12g" % x


def _clean(obj):
    """JSON-ready copy with floats at 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(_fmt(x)) if np.isfinite(x) else None
    return obj


def write_csv(path: Path, columns: dict[str, np.ndarray], prov: dict, command: str) -> Path:
    """Comment lines with provenance, then a header row of ``name [unit]`` labels."""
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    lines = [
        f"# {prov['package']} {prov['version']}",
        f"# config_sha256 {prov['config_sha256']}",
        f"# command {command}",
        ",".join(names),
    ]
    for row in zip(*data):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path: Path, payload: dict, prov: dict, command: str, units: dict) -> Path:
    doc = {"provenance": {**prov, "command": command}, "units": units, **payload}
    path.write_text(json.dumps(_clean(doc), indent=2) + "\n")
    return path


# -- commands ----------------------------------------------------------------

def _spectrum(cfg, out, prov, threads):
    res = workflows.run_spectrum(cfg)
    files = [write_csv(out / "spectrum.csv", {
        "offset [Hz]": res.scan.detunings / TWO_PI,
        "scattering_rate [1/s]": res.scan.rates,
        "weak_probe_rate [1/s]": res.weak.rates,
    }, prov, "spectrum")]
    files.append(write_json(out / "spectrum.json", {
        "dark_point_ratio": res.dark_ratio,
        "bright_peaks": [x / TWO_PI for x in res.peaks],
        "failed_points": len(res.scan.failures),
        "rabi": workflows._rabi_summary(res.scheme),
    }, prov, "spectrum", {"bright_peaks": "Hz", "rabi": "Hz", "dark_point_ratio": "1"}))
    return files


def _cool(cfg, out, prov, threads):
    res = workflows.run_cool(cfg)
    tr = res.trajectory
    cols = {"time [s]": tr.times, "nbar [1]": tr.nbar, "scatter_rate [1/s]": tr.scatter_rate}
    for lab, col in zip(workflows.LEVEL_LABELS, tr.populations.T):
        cols[f"pop_{lab} [1]"] = col
    cols.update({
        "trace_error [1]": tr.trace_error,
        "hermiticity_error [1]": tr.hermiticity_error,
        "min_eigenvalue [1]": tr.min_eigenvalue,
    })
    files = [write_csv(out / "trajectory.csv", cols, prov, "cool")]
    fit = res.fit
    files.append(write_json(out / "fit.json", {
        "mode": res.mode,
        "R": fit.R, "n_ss": fit.n_ss, "n0": fit.n0, "residual": fit.residual,
        "degenerate": fit.degenerate,
        "rate_at_nbar_1": res.rate_at_nbar1,
        "nbar_final": tr.nbar[-1],
        "trace_drift_per_gamma_t": tr.trace_drift_per_gamma_t(res.gamma),
        "max_hermiticity_error": tr.hermiticity_error.max(),
        "min_eigenvalue": tr.min_eigenvalue.min(),
        "max_population_sum_error": tr.population_sum_error.max(),
        "steps": tr.steps,
        "rabi": workflows._rabi_summary(res.scheme),
    }, prov, "cool", {"R": "1/s", "rate_at_nbar_1": "1/s", "rabi": "Hz", "n_ss": "1", "n0": "1"}))
    return files


def _steady(cfg, out, prov, threads):
    res = workflows.run_steady(cfg)
    return [write_json(out / "steady.json", res, prov, "steady",
                       {"n_ss": "1", "populations": "1", "rabi": "Hz"})]


def _scan(cfg, out, prov, threads):
    rows = workflows.run_scan(cfg, threads)
    units = {"value": cfg.scan.parameter, "probe_hz": "Hz", "pump_hz": "Hz", "pump_866_hz": "Hz",
             "repump_hz": "Hz"}
    cols = {}
    for key in rows[0]:
        if key == "value":
            label = f"{cfg.scan.parameter} [{'gamma' if cfg.scan.parameter == 'scheme.delta' else 'config units'}]"
        elif key.endswith("_hz"):
            label = f"{key[:-3]}_rabi [Hz]"
        elif key.startswith("rate_"):
            label = f"{key} [1/s]"
        else:
            label = f"{key} [1]"
        cols[label] = [r[key] for r in rows]
    files = [write_csv(out / "scan.csv", cols, prov, "scan")]
    files.append(write_json(out / "scan.json", {"parameter": cfg.scan.parameter, "rows": rows}, prov, "scan",
                            {**units, "rate_*": "1/s", "n_ss_*": "1", "nbar_final_*": "1"}))
    return files


def _tune(cfg, out, prov, threads):
    res = workflows.run_tune(cfg)
    return [write_json(out / "tune.json", res, prov, "tune", {k: "Hz" for k in res})]


def _ldtheory(cfg, out, prov, threads):
    res = workflows.run_ldtheory(cfg)
    return [write_json(out / "ldtheory.json", res, prov, "ldtheory",
                       {"rate_per_s": "1/s", "frequency_hz": "Hz", "eta": "1", "n_ss": "1",
                        "validity_ratio": "1", "gamma_symbol_hz": "Hz"})]


HANDLERS = {"spectrum": _spectrum, "cool": _cool, "steady": _steady, "scan": _scan,
            "tune": _tune, "ldtheory": _ldtheory}


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eitcool", description="EIT and D-EIT cooling simulations of 40Ca+.")
    ap.add_argument("--version", action="version", version=f"eitcool {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML run configuration (default: bundled config)")
    ap.add_argument("--out", help="output directory (default: output.directory)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a setting by dotted path, e.g. scheme.delta=3 or beams.0.rabi=5e6")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for scans")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _fail(out: Path | None, command: str, exc: BaseException, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "command": command, "exit_code": code}
    if isinstance(exc, ConfigError):
        err["details"] = [{"path": p, "message": m} for p, m in exc.errors]
    text = json.dumps(err, indent=2)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else None
    try:
        if args.threads < 1:
            raise ConfigError([("--threads", "must be >= 1")])
        cfg: RunConfig = apply_overrides(load_config(args.config), args.overrides)
    except ConfigError as exc:
        return _fail(out, args.command, exc, 2)
    except OSError as exc:
        return _fail(out, args.command, exc, 2)
    out = out or Path(cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        prov = provenance(cfg)
        (out / "config.yaml").write_text(
            f"# {prov['package']} {prov['version']} config_sha256 {prov['config_sha256']}\n"
            + serialize_config(cfg))
        files = HANDLERS[args.command](cfg, out, prov, args.threads)
        for f in files:
            if f.suffix.lstrip(".") in cfg.output.formats:
                print(f)
            else:
                f.unlink()
        return 0
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        log.debug("%s", traceback.format_exc())
        return _fail(out, args.command, exc, 1)


if __name__ == "__main__":
    sys.exit(main())
