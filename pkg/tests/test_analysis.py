import numpy as np
import pytest

from eitcool import ldtheory as ld
from eitcool.analysis import (
    FitError,
    SpectrumCurve,
    ThermometryError,
    WeakProbe,
    bright_peaks,
    dark_point_ratio,
    dressed_energies,
    electronic_config,
    fit_rate,
    initial_rate,
    rate_at_nbar,
    scattering_rate_at,
    scattering_spectrum,
    simulated_thermometry,
    thermometry_estimate,
    time_dependent_rate,
    weak_probe_spectrum,
)
from eitcool.lindblad import build_liouvillian, evolve
from eitcool.operators import DensityState, thermal_populations
from eitcool.scheme import (
    D_P,
    GAMMA_CA,
    PROBE,
    S_M,
    S_P,
    TWO_PI,
    AtomParams,
    Scheme,
    SchemeParams,
    effective_pump,
)

NU_A, NU_R = TWO_PI * 904.6e3, TWO_PI * 2.552e6


@pytest.fixture(scope="module")
def eit():
    p = SchemeParams(kind="eit", delta=3 * GAMMA_CA, omega_pi=TWO_PI * 0.2e6)
    return Scheme(params=p).tuned(NU_A, refine=False)


@pytest.fixture(scope="module")
def deit():
    return Scheme().tuned(NU_R, NU_A)


# -- spectra -----------------------------------------------------------------

def test_single_eit_dark_point_and_one_bright_peak(eit):
    grid = TWO_PI * np.linspace(-3e6, 3e6, 61)
    spec = scattering_spectrum(eit.system(), grid)
    assert dark_point_ratio(spec) < 1e-3
    strong = [i for i in spec.peaks() if spec.rates[i] > 0.1 * spec.rates.max()]
    assert len(strong) == 1
    assert spec.detunings[strong[0]] == pytest.approx(NU_A, rel=0.05)


def test_deit_has_two_bright_peaks(deit):
    spec = weak_probe_spectrum(deit.system(), TWO_PI * np.linspace(0.1e6, 4e6, 80))
    strong = [i for i in spec.peaks() if spec.rates[i] > 0.1 * spec.rates.max()]
    assert len(strong) == 2


def test_weak_probe_matches_scan_for_weak_probe(eit):
    cfg = eit.system()
    wp = WeakProbe(cfg, PROBE)
    for x in TWO_PI * np.array([-2e6, -0.5e6, 0.3e6, 0.9e6, 2e6]):
        assert wp(x) == pytest.approx(scattering_rate_at(electronic_config(cfg), PROBE, x), rel=0.02)


def test_weak_probe_dark_zero(deit):
    wp = WeakProbe(deit.system(), PROBE)
    assert wp(0.0) < 1e-9 * wp(NU_A)


@pytest.mark.parametrize("ratio", [0.2, 0.5])
def test_bright_peak_matches_light_shift(ratio):
    p = SchemeParams(kind="eit", delta=3 * GAMMA_CA, omega_pi=0.03 * GAMMA_CA)
    det, cg = effective_pump(Scheme(params=p).sublevels, p, "sigma")
    sch = Scheme(params=p.with_(omega_sigma=ratio * det / cg))
    want = ld.stark_shift(det, ratio * det)
    assert bright_peaks(sch.system(), PROBE, [want])[0] == pytest.approx(want, rel=0.02)


def test_dark_point_does_not_move_with_pump_power(eit):
    grid = TWO_PI * np.linspace(-0.2e6, 0.2e6, 21)
    for scale in (1.0, 2.0):
        sch = eit.with_params(omega_sigma=scale * eit.params.omega_sigma)
        spec = scattering_spectrum(sch.system(), grid)
        assert spec.detunings[np.argmin(spec.rates)] == 0.0


def test_dressed_energies_near_targets(deit):
    e = dressed_energies(deit.system(), S_P, [S_M, D_P])
    assert e[0].real == pytest.approx(NU_R, rel=0.06)
    assert e[1].real == pytest.approx(NU_A, rel=0.06)
    assert all(x.imag < 0 for x in e)


def test_bright_peaks_rejects_mixed_signs(deit):
    with pytest.raises(ValueError, match="sign"):
        bright_peaks(deit.system(), PROBE, [NU_A, -NU_R])


def test_deit_without_866_reduces_to_single_eit():
    # all 866 light off and no S-D branching: D stays empty
    atom = AtomParams(branching_SD=0.0)
    base = SchemeParams(delta=3 * GAMMA_CA, omega_pi=TWO_PI * 1e6, omega_sigma=TWO_PI * 20e6,
                        omega_866=0.0, omega_repump=0.0)
    runs = []
    for p in (base, base.with_(kind="eit")):
        L = build_liouvillian(electronic_config(Scheme(atom, p).system()))
        runs.append(evolve(L, DensityState.thermal(8, S_P, 0.0, 1), 2e-6, 2.5e-7, tol=1e-10))
    assert runs[1].populations[:, 4:].max() == 0.0
    assert np.max(np.abs(runs[0].scatter_rate - runs[1].scatter_rate)) < 1e-6 * runs[1].scatter_rate.max()
    assert np.max(np.abs(runs[0].populations - runs[1].populations)) < 1e-6


def test_spectrum_curve_validation():
    with pytest.raises(ValueError):
        SpectrumCurve([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        SpectrumCurve([0.0, 1.0], [1.0, -1.0])
    c = SpectrumCurve([0.0, 1.0], [1.0, -1e-16])
    assert c.rates[1] == 0.0
    with pytest.raises(ValueError, match="two-photon"):
        dark_point_ratio(SpectrumCurve([1.0, 2.0, 3.0], [1.0, 2.0, 1.0]))


# -- rate fits ---------------------------------------------------------------

def _exp(t, R=1000.0, nss=0.1, n0=10.0):
    return nss + (n0 - nss) * np.exp(-R * t)


def test_fit_recovers_exact_exponential():
    t = np.linspace(0, 5e-3, 200)
    fit = fit_rate(times=t, nbar=_exp(t))
    assert fit.R == pytest.approx(1000.0, rel=1e-6)
    assert fit.n_ss == pytest.approx(0.1, rel=1e-6)
    assert fit.n0 == pytest.approx(10.0, rel=1e-6)
    assert fit.residual < 1e-9


def test_fit_flags_constant_trajectory():
    t = np.linspace(0, 1e-3, 20)
    fit = fit_rate(times=t, nbar=np.full(20, 2.5))
    assert fit.degenerate and fit.R == 0.0


def test_fit_reports_residual_for_non_exponential():
    t = np.linspace(0, 5e-3, 200)
    n = 5.0 / (1 + 2000.0 * t) ** 2  # slower than exponential at late times
    assert fit_rate(times=t, nbar=n).residual > 1e-3


def test_fit_needs_samples():
    with pytest.raises(FitError):
        fit_rate(times=[0, 1, 2], nbar=[3, 2, 1])


def test_time_dependent_rate_constant_for_exponential():
    t = np.linspace(0, 3e-3, 301)
    tt, R = time_dependent_rate(times=t, nbar=_exp(t), n_ss=0.1)
    assert np.max(np.abs(R / 1000.0 - 1)) < 0.01
    assert rate_at_nbar(times=t, nbar=_exp(t), n_ss=0.1, target=1.0) == pytest.approx(1000.0, rel=0.01)
    assert initial_rate(times=t, nbar=_exp(t), n_ss=0.1, settle=1e-4) == pytest.approx(1000.0, rel=0.01)


def test_time_dependent_rate_guards():
    t = np.linspace(0, 3e-2, 301)
    tt, R = time_dependent_rate(times=t, nbar=_exp(t), n_ss=0.1)
    assert tt.size < t.size and np.all(np.isfinite(R))
    with pytest.raises(ValueError):
        time_dependent_rate(times=t, nbar=np.full(t.size, 0.1), n_ss=0.1)
    with pytest.raises(ValueError, match="never crosses"):
        rate_at_nbar(times=t, nbar=_exp(t, n0=0.9), n_ss=0.1, target=1.0)
    with pytest.raises(ValueError, match="settle"):
        initial_rate(times=t[:10], nbar=_exp(t[:10]), n_ss=0.1, settle=1.0)


# -- thermometry -------------------------------------------------------------

def test_thermometry_examples():
    assert thermometry_estimate(0.0, 0.4) == 0.0
    assert thermometry_estimate(0.2, 0.4) == pytest.approx(1.0)
    with pytest.raises(ThermometryError):
        thermometry_estimate(0.5, 0.4)
    with pytest.raises(ThermometryError):
        thermometry_estimate(0.1, 0.0)


@pytest.mark.parametrize("nbar", [0.1, 1.0, 5.0])
def test_thermometry_on_simulated_thermal_state(nbar):
    p = thermal_populations(nbar, 200)
    _, _, est = simulated_thermometry(p, eta=0.05, pulse_area=0.1)
    assert est == pytest.approx(nbar, rel=0.02)


def test_thermometry_weak_limit_returns_mean_of_any_distribution():
    p = np.zeros(30)
    p[[0, 4]] = 0.5
    _, _, est = simulated_thermometry(p, eta=0.01, pulse_area=0.01)
    assert est == pytest.approx(2.0, rel=1e-3)
    # saturated pulses expose the non-thermal shape
    _, _, est = simulated_thermometry(p, eta=0.1, pulse_area=20.0)
    assert abs(est - 2.0) > 0.1
