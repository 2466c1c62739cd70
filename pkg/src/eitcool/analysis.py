"""Observables derived from simulations: spectra, rate fits, time-dependent
rates and sideband thermometry."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit, minimize_scalar

from .atom import beam_couplings
from .lindblad import (
    CoolingTrajectory,
    ShiftedSolver,
    SteadyStateError,
    SystemConfig,
    build_liouvillian,
    scattering_rate,
    steady_state,
)
from .operators import destroy

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


class ThermometryError(ValueError):
    pass


# -- spectra -----------------------------------------------------------------

@dataclass
class SpectrumCurve:
    detunings: np.ndarray  # probe offset from two-photon resonance, rad/s
    rates: np.ndarray  # photons/s
    failures: dict = field(default_factory=dict)  # grid index -> message

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.rates = np.asarray(self.rates, dtype=float)
        if np.any(np.diff(self.detunings) <= 0):
            raise ValueError("spectrum grid must be strictly increasing")
        fin = np.isfinite(self.rates)
        floor = -1e-12 * (np.max(np.abs(self.rates[fin])) if fin.any() else 0.0)
        if np.any(self.rates[fin] < floor):
            raise ValueError("scattering rates must be >= 0")
        self.rates[fin] = np.maximum(self.rates[fin], 0.0)  # solver roundoff

    def peaks(self) -> np.ndarray:
        """Grid indices of interior local maxima."""
        r = self.rates
        idx = np.where((r[1:-1] > r[:-2]) & (r[1:-1] >= r[2:]))[0] + 1
        return idx


def _probe_name(cfg: SystemConfig, probe: str | None) -> str:
    if probe is not None:
        if probe not in {b.name for b in cfg.beams}:
            raise ValueError(f"no beam named {probe!r}")
        return probe
    cands = [b.name for b in cfg.beams if b.transition == "397" and b.polarization == "pi"]
    if len(cands) != 1:
        raise ValueError(f"cannot infer the probe beam; pass probe= (candidates {cands})")
    return cands[0]


def electronic_config(cfg: SystemConfig) -> SystemConfig:
    return cfg.replace(mode=None, eta={}, emission_eta={})


def scattering_rate_at(cfg: SystemConfig, probe: str, offset: float) -> float:
    beams = [b.with_(detuning=b.detuning + offset) if b.name == probe else b for b in cfg.beams]
    liouv = build_liouvillian(cfg.replace(beams=beams))
    # clip rounding-level negatives
    return max(scattering_rate(liouv, steady_state(liouv)), 0.0)


def scattering_spectrum(cfg: SystemConfig, probe_grid, probe: str | None = None) -> SpectrumCurve:
    """Steady-state photon scattering rate versus probe offset.

    The motional factor is dropped, so the spectrum is that of the dressed
    electronic system.  Points whose stationary state is not unique are
    recorded in ``failures`` with a NaN rate.
    """
    ecfg = electronic_config(cfg)
    name = _probe_name(ecfg, probe)
    grid = np.asarray(probe_grid, dtype=float)
    rates = np.empty(grid.size)
    failures = {}
    for i, d in enumerate(grid):
        try:
            rates[i] = scattering_rate_at(ecfg, name, d)
        except SteadyStateError as exc:
            rates[i] = np.nan
            failures[i] = str(exc)
            log.warning("spectrum point %d (offset %.6g rad/s): %s", i, d, exc)
    return SpectrumCurve(grid, rates, failures)


def find_peak(cfg: SystemConfig, lo: float, hi: float, probe: str | None = None, n_grid: int = 41) -> float:
    """Probe offset of the largest scattering maximum in ``[lo, hi]``.

    Grid search followed by a bounded Brent refinement around the best cell.
    """
    ecfg = electronic_config(cfg)
    name = _probe_name(ecfg, probe)
    grid = np.linspace(lo, hi, n_grid)
    r = np.array([scattering_rate_at(ecfg, name, d) for d in grid])
    i = int(np.argmax(r))
    if i in (0, n_grid - 1):
        return float(grid[i])
    res = minimize_scalar(
        lambda d: -scattering_rate_at(ecfg, name, d),
        bounds=(grid[i - 1], grid[i + 1]),
        method="bounded",
        options={"xatol": 1e-7 * (hi - lo)},
    )
    return float(res.x)


class WeakProbe:
    """Scattering added by a weak copy of one beam, to second order in its field.

    The copy is offset by ``x`` from the beam and has the beam's Rabi
    frequency; the main beams are untouched, so the result is the absorption
    spectrum that motional sidebands of that beam see.  Peaks sit near the
    dressed bright-state energies and the dark state gives a zero at ``x = 0``.
    """

    def __init__(self, cfg: SystemConfig, probe: str | None = None):
        ecfg = electronic_config(cfg)
        name = _probe_name(ecfg, probe)
        liouv = build_liouvillian(ecfg)
        self.n = n = liouv.dim
        self.sup = liouv.superoperator().toarray()
        self.rho = steady_state(liouv).matrix
        self.decay = liouv.decay_rates
        v = np.zeros((n, n), dtype=complex)
        beam = next(b for b in ecfg.beams if b.name == name)
        for lo, up, c in beam_couplings(beam, ecfg.sublevels):
            v[up, lo] += 0.5 * c
        self.v = v
        # trace row closes the singular stationary equation
        self._dc = np.vstack([self.sup, np.eye(n).ravel()[None, :]])
        self._src1 = (1j * (v @ self.rho - self.rho @ v)).ravel()

    def __call__(self, x: float) -> float:
        n, v = self.n, self.v
        a = np.linalg.solve(self.sup + 1j * x * np.eye(n * n), self._src1).reshape(n, n)
        ad, vd = a.conj().T, v.conj().T
        src = 1j * (v @ ad - ad @ v + vd @ a - a @ vd)
        rhs = np.concatenate([src.ravel(), [0.0]])
        r2 = np.linalg.lstsq(self._dc, rhs, rcond=None)[0].reshape(n, n)
        return float(np.dot(self.decay, np.real(np.diag(r2))))


def weak_probe_spectrum(cfg: SystemConfig, probe_grid, probe: str | None = None) -> SpectrumCurve:
    """:class:`WeakProbe` response on a grid of offsets."""
    wp = WeakProbe(cfg, probe)
    grid = np.asarray(probe_grid, dtype=float)
    return SpectrumCurve(grid, np.array([wp(x) for x in grid]))


def effective_hamiltonian(cfg: SystemConfig) -> np.ndarray:
    """Electronic ``H - (i/2) sum r c^dag c``; its eigenvalues are the dressed states."""
    liouv = build_liouvillian(electronic_config(cfg))
    return 1j * ShiftedSolver(liouv).A


def dressed_energies(cfg: SystemConfig, dark_level: int, levels) -> list[complex]:
    """Dressed-state energies relative to the dark state, one per entry of ``levels``.

    Each state is the eigenvector of :func:`effective_hamiltonian` with most
    weight on the given sublevel; the dark state is the one dominated by
    ``dark_level``.  Real parts are rad/s, imaginary parts minus half widths.
    """
    lam, vec = np.linalg.eig(effective_hamiltonian(cfg))
    w = np.abs(vec) ** 2
    w /= w.sum(axis=0)
    picks = [int(np.argmax(w[dark_level]))]
    for lev in levels:
        k = int(np.argmax(w[lev]))
        if k in picks or w[lev, k] < 0.5:
            raise ValueError(f"no dressed state is dominated by sublevel {lev}")
        picks.append(k)
    return [complex(lam[k] - lam[picks[0]]) for k in picks[1:]]


def bright_peaks(cfg: SystemConfig, probe: str | None, targets, n_grid: int = 161) -> list[float]:
    """Bright-peak offsets of the weak-probe spectrum, one per target, ordered like ``targets``.

    Targets share one sign.  Local maxima between ``0.02 min|t|`` and
    ``1.8 max|t|`` on that side are ranked by height; the ``len(targets)``
    tallest are matched to the targets in order of position and polished
    with a bounded Brent search.
    """
    wp = WeakProbe(cfg, probe)
    targets = np.asarray(targets, dtype=float)
    sign = np.sign(targets)
    if np.any(sign == 0) or np.any(sign != sign[0]):
        raise ValueError("bright-peak targets must be nonzero and share one sign")
    mag = np.abs(targets)
    grid = sign[0] * np.linspace(0.02 * mag.min(), 1.8 * mag.max(), n_grid)
    r = np.array([wp(d) for d in grid])
    idx = np.where((r[1:-1] > r[:-2]) & (r[1:-1] >= r[2:]))[0] + 1
    if idx.size < targets.size:
        raise ValueError(
            f"found {idx.size} bright peaks between 0 and {grid[-1]:.4g} rad/s, expected {targets.size}"
        )
    idx = np.sort(idx[np.argsort(r[idx])[::-1][: targets.size]])
    out = []
    for i in idx:
        lo, hi = sorted((grid[i - 1], grid[i + 1]))
        res = minimize_scalar(lambda d: -wp(d), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-7 * mag.max()})
        out.append(float(res.x))
    out = sorted(out)
    order = np.argsort(np.argsort(targets))
    return [out[k] for k in order]


def dark_point_ratio(spectrum: SpectrumCurve) -> float:
    """Rate at zero offset over the spectrum maximum."""
    i0 = int(np.argmin(np.abs(spectrum.detunings)))
    if abs(spectrum.detunings[i0]) > 1e-9 * np.ptp(spectrum.detunings):
        raise ValueError("spectrum grid does not contain the two-photon resonance (offset 0)")
    return float(spectrum.rates[i0] / np.nanmax(spectrum.rates))


# -- cooling-rate fits -------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    R: float  # 1/s
    n_ss: float
    n0: float
    residual: float  # rms of nbar - model
    degenerate: bool = False

    def __post_init__(self):
        if self.n_ss < 0:
            raise ValueError("n_ss must be >= 0")


def _exp_model(t, R, n_ss, n0):
    return n_ss + (n0 - n_ss) * np.exp(-R * t)


def fit_rate(traj: CoolingTrajectory | None = None, *, times=None, nbar=None) -> RateFit:
    """Least-squares fit of ``nbar(t) = n_ss + (n0 - n_ss) exp(-R t)``.

    A flat trajectory has no defined rate and is returned with
    ``degenerate=True`` and ``R = 0``.
    """
    t = np.asarray(traj.times if traj is not None else times, dtype=float)
    n = np.asarray(traj.nbar if traj is not None else nbar, dtype=float)
    if t.size < 5:
        raise FitError(f"need at least 5 samples, got {t.size}")
    span = float(np.ptp(n))
    if span <= 1e-9 * max(1.0, abs(float(n[0]))):
        return RateFit(0.0, max(float(n.mean()), 0.0), float(n[0]), float(np.std(n)), degenerate=True)
    # initial guess: endpoints and the 1/e crossing
    n0g, nssg = float(n[0]), max(float(n[-1]), 0.0)
    target = nssg + (n0g - nssg) / np.e
    cross = np.where((n - target) * np.sign(n0g - nssg) <= 0)[0]
    Rg = 1.0 / (t[cross[0]] - t[0]) if cross.size and t[cross[0]] > t[0] else 3.0 / (t[-1] - t[0])
    p0 = [Rg, nssg, n0g]
    try:
        popt, _ = curve_fit(
            _exp_model, t - t[0], n, p0=p0,
            bounds=([0.0, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
            x_scale=[Rg, max(span, 1e-3), max(span, 1e-3)],
            method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000,
        )
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"exponential fit failed from initial guess R={Rg:.4g}, n_ss={nssg:.4g}, "
                       f"n0={n0g:.4g}: {exc}") from exc
    resid = float(np.sqrt(np.mean((_exp_model(t - t[0], *popt) - n) ** 2)))
    return RateFit(float(popt[0]), float(popt[1]), float(popt[2]), resid)


def time_dependent_rate(traj: CoolingTrajectory | None = None, n_ss: float = 0.0, *,
                        times=None, nbar=None, guard: float = 1e-4):
    """``R(t) = -(dnbar/dt) / (nbar - n_ss)`` with second-order differences.

    Returns ``(times, R)``, truncated before the first sample where
    ``nbar - n_ss < guard``.
    """
    t = np.asarray(traj.times if traj is not None else times, dtype=float)
    n = np.asarray(traj.nbar if traj is not None else nbar, dtype=float)
    if t.size < 3:
        raise ValueError("need at least 3 samples")
    excess = n - n_ss
    if excess[0] < guard:
        raise ValueError(f"trajectory starts at nbar={n[0]:.6g}, not above n_ss={n_ss:.6g}")
    dn = np.gradient(n, t, edge_order=2)
    bad = np.where(excess < guard)[0]
    stop = int(bad[0]) if bad.size else t.size
    return t[:stop], -dn[:stop] / excess[:stop]


def rate_at_nbar(traj: CoolingTrajectory | None = None, n_ss: float = 0.0, target: float = 1.0, *,
                 times=None, nbar=None) -> float:
    """Time-dependent rate interpolated to the moment ``nbar(t)`` crosses ``target``."""
    n = np.asarray(traj.nbar if traj is not None else nbar, dtype=float)
    t, R = time_dependent_rate(traj, n_ss, times=times, nbar=nbar)
    n = n[: t.size]
    idx = np.where((n[:-1] - target) * (n[1:] - target) <= 0)[0]
    if idx.size == 0:
        raise ValueError(f"nbar never crosses {target} (range {n.min():.4g} .. {n.max():.4g})")
    i = int(idx[0])
    if n[i] == n[i + 1]:
        return float(R[i])
    w = (n[i] - target) / (n[i] - n[i + 1])
    return float((1 - w) * R[i] + w * R[i + 1])


def initial_rate(traj: CoolingTrajectory | None = None, n_ss: float = 0.0, settle: float = 5e-6, *,
                 times=None, nbar=None) -> float:
    """``R(t -> 0)`` read at ``t = settle``, after the electronic turn-on transient.

    Right after the beams switch on, electron-motion correlations still build
    up over a few inverse bright-state linewidths and the raw ``R(0)`` is
    near zero; ``settle`` should exceed that time but stay well below ``1/R``.
    """
    t, R = time_dependent_rate(traj, n_ss, times=times, nbar=nbar)
    if not t[0] <= settle <= t[-1]:
        raise ValueError(f"settle time {settle:.3g} s outside the sampled range {t[0]:.3g} .. {t[-1]:.3g} s")
    return float(np.interp(settle, t, R))


# -- sideband thermometry ----------------------------------------------------

def thermometry_estimate(p_rsb: float, p_bsb: float) -> float:
    """``nbar = r / (1 - r)`` with ``r = p_rsb / p_bsb`` (thermal assumption)."""
    if not (0 <= p_rsb <= 1 and 0 < p_bsb <= 1):
        raise ThermometryError(f"excitation probabilities out of range: rsb={p_rsb}, bsb={p_bsb}")
    r = p_rsb / p_bsb
    if r >= 1:
        raise ThermometryError(f"sideband ratio r = {r:.4g} >= 1; distribution is not thermal")
    return r / (1 - r)


def sideband_matrix_element(eta: float, n_dim: int, dn: int) -> np.ndarray:
    """``<n + dn| exp(i eta (a + a^dag)) |n>`` for all ``n`` (zero where out of range)."""
    a = destroy(n_dim)
    disp = expm(1j * eta * (a + a.conj().T))
    out = np.zeros(n_dim, dtype=complex)
    for n in range(n_dim):
        if 0 <= n + dn < n_dim:
            out[n] = disp[n + dn, n]
    return out


def sideband_excitation(fock_pops, eta: float, pulse_area: float, side: str) -> float:
    """Excitation probability after a resonant sideband pulse on a two-level logic ion.

    ``pulse_area`` is ``Omega t`` of the bare carrier.  Each Fock state
    undergoes Rabi flopping with its own coupling
    ``Omega |<n -/+ 1| D(eta) |n>|``; the motional state is the incoherent
    mixture ``fock_pops``.
    """
    p = np.asarray(fock_pops, dtype=float)
    dn = {"red": -1, "blue": +1}[side]
    # pad so the blue sideband of the top state is represented
    n_dim = p.size + 1
    m = sideband_matrix_element(eta, n_dim, dn)[: p.size]
    return float(np.sum(p * np.sin(0.5 * pulse_area * np.abs(m)) ** 2))


def simulated_thermometry(fock_pops, eta: float, pulse_area: float) -> tuple[float, float, float]:
    """``(p_rsb, p_bsb, nbar estimate)`` from equal-duration sideband pulses."""
    prsb = sideband_excitation(fock_pops, eta, pulse_area, "red")
    pbsb = sideband_excitation(fock_pops, eta, pulse_area, "blue")
    return prsb, pbsb, thermometry_estimate(prsb, pbsb)
