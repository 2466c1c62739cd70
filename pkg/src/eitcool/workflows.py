"""Computations behind the CLI commands; each returns plain data, no file I/O."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ldtheory
from .analysis import (
    RateFit,
    SpectrumCurve,
    bright_peaks,
    dark_point_ratio,
    dressed_energies,
    electronic_config,
    fit_rate,
    rate_at_nbar,
    scattering_spectrum,
    weak_probe_spectrum,
)
from .atom import N_LEVELS, build_sublevels
from .config import RunConfig, apply_overrides, build_scheme, get_path, modes
from .lindblad import (
    CoolingTrajectory,
    ShiftedSolver,
    build_liouvillian,
    evolve,
    nbar,
    steady_state,
)
from .operators import DensityState, thermal_populations
from .scheme import D_P, PROBE, S_M, S_P, TWO_PI, Scheme, effective_pump, probe_cg

log = logging.getLogger(__name__)

LEVEL_LABELS = tuple(s.label for s in build_sublevels(416e-6))


def _rabi_summary(sch: Scheme) -> dict:
    p = sch.params
    out = {"probe_hz": p.omega_pi / TWO_PI, "pump_hz": p.omega_sigma / TWO_PI}
    if p.kind == "deit":
        out["pump_866_hz"] = p.omega_866 / TWO_PI
    out["repump_hz"] = p.omega_repump / TWO_PI
    return out


def _targets(cfg: RunConfig) -> np.ndarray:
    t = cfg.scheme.tune
    freqs = {"axial": cfg.trap.nu_axial, "radial1": cfg.trap.nu_radial1, "radial2": cfg.trap.nu_radial2}
    out = [freqs[t.pump]] + ([freqs[t.pump_866]] if cfg.scheme.kind == "deit" else [])
    return TWO_PI * np.array(out)


# -- spectrum / tune ---------------------------------------------------------

@dataclass
class SpectrumResult:
    scheme: Scheme
    scan: SpectrumCurve  # probe beam frequency scanned
    weak: SpectrumCurve  # weak probe copy scanned, main beams fixed
    peaks: list[float]  # rad/s, weak-probe bright peaks matched to the tuning targets
    dark_ratio: float


def run_spectrum(cfg: RunConfig, scheme: Scheme | None = None) -> SpectrumResult:
    sch = scheme or build_scheme(cfg)
    sys_cfg = sch.system()
    grid = TWO_PI * np.linspace(cfg.spectrum.start, cfg.spectrum.stop, cfg.spectrum.points)
    scan = scattering_spectrum(sys_cfg, grid, PROBE)
    weak = weak_probe_spectrum(sys_cfg, grid, PROBE)
    try:
        peaks = bright_peaks(sys_cfg, PROBE, _targets(cfg))
    except ValueError as exc:
        log.warning("bright peaks not resolved: %s", exc)
        peaks = []
    return SpectrumResult(sch, scan, weak, peaks, dark_point_ratio(scan))


def run_tune(cfg: RunConfig) -> dict:
    sch = build_scheme(cfg)
    sys_cfg = sch.system()
    targets = _targets(cfg)
    levels = [S_M, D_P][: targets.size]
    dressed = dressed_energies(sys_cfg, S_P, levels)
    try:
        peaks = bright_peaks(sys_cfg, PROBE, targets)
    except ValueError as exc:
        log.warning("bright peaks not resolved: %s", exc)
        peaks = [float("nan")] * targets.size
    return {
        "rabi": _rabi_summary(sch),
        "targets_hz": list(targets / TWO_PI),
        "bright_peaks_hz": [x / TWO_PI for x in peaks],
        "dressed_energy_hz": [e.real / TWO_PI for e in dressed],
        "dressed_halfwidth_hz": [-e.imag / TWO_PI for e in dressed],
    }


# -- single-mode dynamics ----------------------------------------------------

@dataclass
class CoolResult:
    scheme: Scheme
    mode: str
    trajectory: CoolingTrajectory
    fit: RateFit
    rate_at_nbar1: float | None
    gamma: float


def _system(cfg: RunConfig, sch: Scheme, mode: str, fock_dim: int | None = None):
    m = modes(cfg, fock_dim)[mode]
    return sch.system(m, ld_order=cfg.simulation.ld_order, recoil=cfg.simulation.recoil)


def run_cool(cfg: RunConfig, mode: str | None = None, scheme: Scheme | None = None,
             fock_dim: int | None = None, nbar0: float | None = None) -> CoolResult:
    sim = cfg.simulation
    mode = mode or sim.mode
    sch = scheme or build_scheme(cfg)
    sys_cfg = _system(cfg, sch, mode, fock_dim)
    liouv = build_liouvillian(sys_cfg)
    n = liouv.space.factors[1]
    n0 = sim.nbar0[mode] if nbar0 is None else nbar0
    if sim.start == "dressed":
        el = steady_state(build_liouvillian(electronic_config(sys_cfg))).matrix
        rho0 = DensityState.product(el, np.diag(thermal_populations(n0, n)))
    else:
        rho0 = DensityState.thermal(N_LEVELS, S_P, n0, n)
    traj = evolve(liouv, rho0, sim.t_final, sim.sample_dt, tol=sim.tol, fixed_step=sim.fixed_step,
                  solver=ShiftedSolver(liouv))
    fit = fit_rate(traj)
    r1 = None
    if traj.nbar[0] > 1.0 > traj.nbar[-1]:
        r1 = rate_at_nbar(traj, fit.n_ss, 1.0)
    return CoolResult(sch, mode, traj, fit, r1, sch.atom.gamma)


def run_steady(cfg: RunConfig, mode: str | None = None, scheme: Scheme | None = None,
               fock_dim: int | None = None) -> dict:
    mode = mode or cfg.simulation.mode
    sch = scheme or build_scheme(cfg)
    liouv = build_liouvillian(_system(cfg, sch, mode, fock_dim))
    rho = steady_state(liouv, tol=cfg.simulation.steady_tol)
    res = float(np.max(np.abs(liouv.superoperator() @ rho.matrix.ravel())))
    return {
        "mode": mode,
        "fock_dim": liouv.space.factors[1],
        "n_ss": nbar(rho),
        "top_fock_population": float(rho.fock_populations()[-1]),
        "populations": dict(zip(LEVEL_LABELS, map(float, rho.electronic_populations()))),
        "residual": res,
        "min_eigenvalue": rho.min_eigenvalue(),
        "rabi": _rabi_summary(sch),
    }


# -- scans -------------------------------------------------------------------

def _scan_point(args) -> dict:
    cfg, value = args
    sch = build_scheme(cfg)
    row = {"value": value, **_rabi_summary(sch)}
    for mode in cfg.scan.modes:
        row[f"n_ss_{mode}"] = run_steady(cfg, mode, sch)["n_ss"]
        if cfg.scan.rates:
            res = run_cool(cfg, mode, sch)
            row[f"rate_{mode}"] = res.fit.R
            row[f"nbar_final_{mode}"] = float(res.trajectory.nbar[-1])
    return row


def scan_configs(cfg: RunConfig) -> list[RunConfig]:
    """One config per grid value; a delta scan keeps probe Rabi / delta fixed if asked."""
    key = cfg.scan.parameter
    try:
        base = get_path(cfg, key)
    except (KeyError, IndexError, ValueError) as exc:
        raise ValueError(f"scan parameter {key!r} does not name a setting") from exc
    out = []
    for v in cfg.scan.grid:
        sets = [f"{key}={v!r}"]
        if key == "scheme.delta" and cfg.scan.scale_probe:
            i = [b.role for b in cfg.beams].index("probe")
            sets.append(f"beams.{i}.rabi={cfg.beams[i].rabi * v / base!r}")
        out.append(apply_overrides(cfg, sets))
    return out


def run_scan(cfg: RunConfig, threads: int = 1) -> list[dict]:
    jobs = [(c, v) for c, v in zip(scan_configs(cfg), cfg.scan.grid)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_scan_point, jobs))
    return [_scan_point(j) for j in jobs]


# -- Lamb-Dicke theory -------------------------------------------------------

def run_ldtheory(cfg: RunConfig) -> dict:
    """Closed-form predictions per mode for the run's beams (tuned when enabled).

    The linewidth symbol of the formulas is the excited-state coherence
    decay rate ``Gamma / 2``; Rabi frequencies are Clebsch-Gordan weighted.
    Each mode is assigned to the Lambda system whose target frequency is
    nearest; its Lamb-Dicke factor is the probe minus pump projection.
    """
    sch = build_scheme(cfg)
    p, sub = sch.params, sch.sublevels
    gamma = sch.atom.gamma / 2
    om_pi = p.omega_pi * probe_cg(sub)
    targets = _targets(cfg)
    pumps = ["pump", "pump_866"][: targets.size]
    beam_names = {"pump": "pump_397_sigma+", "pump_866": "pump_866_sigma-"}
    _, cg_s = effective_pump(sub, p, "sigma")
    out = {"gamma_symbol_hz": gamma / TWO_PI, "probe_rabi_effective_hz": om_pi / TWO_PI, "modes": {}}
    for label, m in modes(cfg).items():
        k = int(np.argmin(np.abs(targets - m.frequency)))
        eta_tab = sch.system(m).eta
        eta = abs(eta_tab[PROBE] - eta_tab[beam_names[pumps[k]]])
        if p.kind == "eit":
            pred = ldtheory.ld_prediction(eta, om_pi, gamma, p.delta, m.frequency, p.omega_sigma * cg_s)
        else:
            pred = ldtheory.ld_prediction(eta, om_pi, gamma, p.delta, m.frequency)
        out["modes"][label] = {
            "frequency_hz": m.frequency / TWO_PI,
            "lambda": pumps[k],
            "eta": eta,
            "rate_per_s": pred.R,
            "n_ss": pred.n_ss,
            "validity_ratio": pred.validity_ratio,
            "outside_ld_regime": pred.warning,
        }
    analytic = {}
    for name, t in zip(pumps, targets):
        det, cg = effective_pump(sub, p, "sigma" if name == "pump" else "866")
        analytic[name] = ldtheory.tune_pump(det, t) / cg / TWO_PI
    out["analytic_pump_rabi_hz"] = analytic
    out["rabi"] = _rabi_summary(sch)
    return out
