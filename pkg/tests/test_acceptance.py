"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import time
import warnings

import numpy as np
import pytest

from eitcool import ldtheory as ld
from eitcool.analysis import fit_rate, initial_rate, simulated_thermometry
from eitcool.cli import main
from eitcool.config import apply_overrides, build_scheme, load_config
from eitcool.lindblad import ShiftedSolver, build_liouvillian, evolve, nbar
from eitcool.motion import build_modes
from eitcool.operators import DensityState, thermal_populations
from eitcool.scheme import GAMMA_CA, PROBE, S_P, TWO_PI, Scheme, effective_pump, probe_cg
from eitcool.workflows import run_cool, run_ldtheory, run_scan, run_spectrum, run_steady, run_tune

pytestmark = pytest.mark.slow

MODES = ("axial", "radial1")


@pytest.fixture
def report(capsys):
    def _report(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return _report


@pytest.fixture(scope="module")
def default_cfg():
    return load_config()


@pytest.fixture(scope="module")
def deit(default_cfg):
    return build_scheme(default_cfg)


@pytest.fixture(scope="module")
def cooled(default_cfg, deit):
    """Default-config cooling runs at N = 17 with wall times."""
    out = {}
    for mode in MODES:
        t = time.perf_counter()
        res = run_cool(default_cfg, mode=mode, scheme=deit)
        out[mode] = (res, time.perf_counter() - t)
    return out


@pytest.fixture(scope="module")
def steady17(default_cfg, deit):
    return {m: run_steady(default_cfg, m, deit)["n_ss"] for m in MODES}


def test_c1_dark_point(default_cfg, deit, report):
    res = run_spectrum(default_cfg, deit)
    n = res.scan.detunings.size
    ok = res.dark_ratio < 1e-3 and n <= 200
    report("C1", ok, f"dark/bright = {res.dark_ratio:.2e} over {n} points")
    assert ok


def test_c2_tuned_bright_peaks(default_cfg, report):
    res = run_tune(default_cfg)
    peaks, targets = np.array(res["bright_peaks_hz"]), np.array([2.552e6, 904.6e3])
    err = np.abs(peaks / targets - 1)
    ok = default_cfg.scheme.delta == 3.4 and bool(np.all(err < 0.02))
    report("C2", ok, f"peaks {peaks[0]:.0f} Hz, {peaks[1]:.0f} Hz; rel. errors {err[0]:.1e}, {err[1]:.1e}")
    assert ok


def test_c3_lamb_dicke_regime(report):
    # weak probe, probe-only recoil kick, no spontaneous-emission recoil
    nu, delta, eta, n = TWO_PI * 904.6e3, 3.4 * GAMMA_CA, 0.02, 10
    mode = build_modes({"axial": nu}, fock_dim=n)["axial"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sch = Scheme().with_params(kind="eit", delta=delta, omega_pi=0.01 * delta).tuned(nu)
    cfg = sch.system(mode, recoil=0.0)
    cfg = cfg.replace(eta={k: (eta if k == PROBE else 0.0) for k in cfg.eta})
    liouv = build_liouvillian(cfg)
    gamma = GAMMA_CA / 2
    om_pi = probe_cg(sch.sublevels) * sch.params.omega_pi
    _, cg_s = effective_pump(sch.sublevels, sch.params, "sigma")
    r_th = ld.eit_rate(eta, om_pi, gamma)
    n_th = ld.eit_nss(delta, gamma, om_pi, cg_s * sch.params.omega_sigma)
    t_end = float("%.2g" % (4 / r_th))
    traj = evolve(liouv, DensityState.thermal(8, S_P, 1.0, n), t_end, t_end / 40, fixed_step=t_end / 400,
                  solver=ShiftedSolver(liouv))
    fit = fit_rate(traj)
    dr, dn = abs(fit.R / r_th - 1), abs(fit.n_ss / n_th - 1)
    ok = dr < 0.10 and dn < 0.20
    report("C3", ok, f"R = {fit.R:.4g}/s vs {r_th:.4g}/s ({dr:.1%}); n_ss = {fit.n_ss:.4g} vs {n_th:.4g} ({dn:.1%})")
    assert ok


def test_c4_cooling_from_doppler(cooled, steady17, report):
    window = {"axial": 0.11, "radial1": 0.14}
    lines, ok = [], True
    for m in MODES:
        res, wall = cooled[m]
        tr = res.trajectory
        below = tr.times[np.argmax(tr.nbar < 0.3)] if np.any(tr.nbar < 0.3) else np.inf
        reach = below <= 670e-6
        in_window = window[m] / 2 <= steady17[m] <= 2 * window[m]
        ok &= reach and in_window and wall <= 600
        lines.append(f"{m}: n0 {tr.nbar[0]:.2f}, n<0.3 at {below * 1e6:.0f} us, n_ss {steady17[m]:.3g} "
                     f"(window {window[m] / 2:.3g}-{2 * window[m]:.3g}), {wall:.0f} s")
    report("C4", ok, "; ".join(lines))
    assert ok


def test_c5_single_eit_beyond_lamb_dicke(report):
    cfg = load_config("eit")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sch = build_scheme(cfg)
        ld_rate = run_ldtheory(cfg)["modes"]["axial"]["rate_per_s"]
    n_ss = run_steady(cfg, "axial", sch)["n_ss"]
    short = apply_overrides(cfg, ["simulation.start=dressed", "simulation.t_final=1e-5",
                                  "simulation.sample_dt=1e-6", "simulation.fixed_step=2.5e-7"])
    r0 = []
    for n0 in (1.0, 5.0, 11.0):
        tr = run_cool(short, "axial", sch, nbar0=n0).trajectory
        r0.append(initial_rate(tr, n_ss, settle=5e-6))
    full = run_cool(cfg, "axial", sch)
    r1 = full.rate_at_nbar1
    ok = (r1 is not None and r1 < ld_rate) and bool(np.all(np.diff(r0) <= 0))
    report("C5", ok, f"LD rate {ld_rate:.4g}/s; R(nbar=1) {r1:.4g}/s; initial R for n0 1, 5, 11: "
                     + ", ".join(f"{x:.4g}" for x in r0))
    assert ok


def test_c6_detuning_scan(default_cfg, report):
    grid = default_cfg.scan.grid
    rows = run_scan(default_cfg)
    ok = len(grid) >= 6 and min(grid) >= 1 and max(grid) <= 4
    parts = []
    for m in MODES:
        nss = np.array([r[f"n_ss_{m}"] for r in rows])
        rate = np.array([r[f"rate_{m}"] for r in rows])
        ok &= bool(np.all(np.diff(nss) < 0) and np.all(np.diff(rate) > 0))
        parts.append(f"{m} n_ss {nss[0]:.3g}->{nss[-1]:.3g}, R {rate[0]:.4g}->{rate[-1]:.4g}/s")
    report("C6", ok, f"{len(grid)} points in [{min(grid)}, {max(grid)}] gamma; " + "; ".join(parts))
    assert ok


def test_c7_conservation(cooled, report):
    trace = max(r.trajectory.trace_drift_per_gamma_t(r.gamma) for r, _ in cooled.values())
    herm = max(r.trajectory.hermiticity_error.max() for r, _ in cooled.values())
    eig = min(r.trajectory.min_eigenvalue.min() for r, _ in cooled.values())
    pops = max(r.trajectory.population_sum_error.max() for r, _ in cooled.values())
    ok = trace < 1e-9 and herm < 1e-10 and eig > -1e-8 and pops < 1e-8
    report("C7", ok, f"trace drift {trace:.1e}/gamma t, hermiticity {herm:.1e}, min eigenvalue {eig:.1e}, "
                     f"population sum {pops:.1e}")
    assert ok


def test_c8_fock_truncation(default_cfg, deit, cooled, steady17, report):
    n25 = {m: run_steady(default_cfg, m, deit, fock_dim=25)["n_ss"] for m in MODES}
    change = {m: abs(n25[m] / steady17[m] - 1) for m in MODES}
    r17 = cooled["axial"][0].fit.R
    r25 = run_cool(default_cfg, "axial", deit, fock_dim=25).fit.R
    ok = max(change.values()) < 0.05 and r25 < r17 and default_cfg.simulation.nbar0["axial"] == 11.1
    report("C8", ok, "n_ss change " + ", ".join(f"{m} {c:.1e}" for m, c in change.items())
           + f"; axial R {r17:.4g}/s (N=17) vs {r25:.4g}/s (N=25)")
    assert ok


def test_c9_thermometry(report):
    worst, ident = 0.0, 0.0
    for nb in (0.1, 1.0, 5.0):
        _, _, est = simulated_thermometry(thermal_populations(nb, 300), eta=0.05, pulse_area=0.1)
        worst = max(worst, abs(est / nb - 1))
        # weak-limit sideband strengths n and n + 1 on an untruncated thermal state
        x = nb / (1 + nb)
        k = np.arange(4000)
        p = (1 - x) * x**k
        r = np.sum(p * k) / np.sum(p * (k + 1))
        ident = max(ident, abs(r / (1 - r) - nb))
    ok = worst < 0.02 and ident < 1e-12
    report("C9", ok, f"worst recovery error {worst:.1e}; identity error {ident:.1e}")
    assert ok


def test_c10_reproducible_output(tmp_path, report):
    sets = ["simulation.t_final=2e-5", "simulation.sample_dt=2e-6", "simulation.fock_dim=6"]
    blobs = []
    for name in ("a", "b"):
        argv = ["cool", "--out", str(tmp_path / name)]
        for s in sets:
            argv += ["--set", s]
        assert main(argv) == 0
        blobs.append((tmp_path / name / "trajectory.csv").read_bytes())
    ok = blobs[0] == blobs[1] and len(blobs[0]) > 0
    report("C10", ok, f"two runs, {len(blobs[0])} bytes, identical = {blobs[0] == blobs[1]}")
    assert ok
