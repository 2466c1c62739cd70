"""Closed-form Lamb-Dicke predictions and the bright-state tuner.

All frequencies are angular (rad/s).  ``gamma`` is the linewidth symbol in
the formulas; callers comparing against a master-equation model pass the
coherence decay rate of the excited state, ``Gamma / 2``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

log = logging.getLogger(__name__)

VALIDITY_THRESHOLD = 0.1


@dataclass(frozen=True)
class LDPrediction:
    R: float  # 1/s
    n_ss: float
    validity_ratio: float  # R / (nu^2 / 2 gamma)

    def __post_init__(self):
        if self.validity_ratio < 0:
            raise ValueError("validity_ratio must be >= 0")

    @property
    def warning(self) -> bool:
        """True outside the regime where the perturbative rate can be trusted."""
        return self.validity_ratio > VALIDITY_THRESHOLD


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be > 0, got {v}")


def eit_rate(eta: float, omega_pi: float, gamma: float) -> float:
    """Optimal EIT cooling rate ``eta^2 Omega_pi^2 / (2 gamma)``."""
    _positive(gamma=gamma)
    if omega_pi < 0:
        raise ValueError(f"omega_pi must be >= 0, got {omega_pi}")
    return eta**2 * omega_pi**2 / (2 * gamma)


def deit_nss(delta: float, gamma: float) -> float:
    """Steady-state occupation ``gamma^2 / (4 Delta^2 + gamma^2)``."""
    _positive(delta=delta, gamma=gamma)
    return gamma**2 / (4 * delta**2 + gamma**2)


def eit_nss(delta: float, gamma: float, omega_pi: float, omega_sigma: float) -> float:
    """Single-EIT steady state; the probe share of the total power adds heating."""
    if omega_pi == 0 and omega_sigma == 0:
        raise ValueError("eit_nss undefined when both Rabi frequencies are zero")
    share = (omega_pi / np.hypot(omega_pi, omega_sigma)) ** 2  # ratio form avoids underflow
    return deit_nss(delta, gamma) * (1 + 2 * share)


def stark_shift(delta: float, omega_pump: float) -> float:
    """Dressed-state light shift ``(sqrt(Delta^2 + Omega^2) - Delta) / 2`` of the bright resonance."""
    _positive(delta=delta)
    if omega_pump < 0:
        raise ValueError(f"omega_pump must be >= 0, got {omega_pump}")
    # rationalised form keeps full precision for Omega << Delta
    return omega_pump**2 / (2 * (np.sqrt(delta**2 + omega_pump**2) + delta))


def tune_pump(
    delta: float,
    nu_target: float,
    refine: Callable[[float], float] | None = None,
    rel_tol: float = 0.01,
) -> float:
    """Pump Rabi frequency whose light shift equals ``nu_target``.

    The analytic inverse is ``2 sqrt(nu (nu + Delta))``.  With ``refine``,
    a callable mapping a pump Rabi frequency to the simulated bright-peak
    offset, the value is corrected by root-finding on ``refine(Omega) - nu``
    until the peak sits within ``rel_tol * nu``.  If that fails the analytic
    value is returned with a warning.
    """
    _positive(delta=delta)
    if nu_target < 0:
        raise ValueError(f"nu_target must be >= 0, got {nu_target}")
    omega0 = 2 * np.sqrt(nu_target * (nu_target + delta))
    if refine is None or nu_target == 0:
        return float(omega0)

    def mismatch(om):
        return refine(om) - nu_target

    try:
        f0 = mismatch(omega0)
        if abs(f0) <= rel_tol * nu_target:
            return float(omega0)
        # bracket by stepping the pump in the direction that closes the gap
        lo = hi = omega0
        flo = fhi = f0
        step = 1.15 if f0 < 0 else 1 / 1.15
        for _ in range(30):
            om = (hi if f0 < 0 else lo) * step
            fm = mismatch(om)
            if f0 < 0:
                hi, fhi = om, fm
            else:
                lo, flo = om, fm
            if np.sign(fm) != np.sign(f0):
                break
        else:
            raise RuntimeError("could not bracket the bright-peak position")
        return float(brentq(mismatch, lo, hi, xtol=1e-6 * omega0, rtol=1e-10, maxiter=60))
    except (RuntimeError, ValueError) as exc:
        warnings.warn(f"pump refinement failed ({exc}); using the analytic value", RuntimeWarning)
        return float(omega0)


def max_rate_ratio(delta: float, gamma: float, eta: float) -> float:
    """Upper bound ``2 Delta eta^2 / gamma`` on ``R / nu`` attainable with tuned bright states."""
    _positive(delta=delta, gamma=gamma)
    return 2 * delta * eta**2 / gamma


def validity_ratio(R: float, nu: float, gamma: float) -> float:
    """``R / (nu^2 / 2 gamma)``; the perturbative theory needs this well below 1."""
    _positive(nu=nu, gamma=gamma)
    return abs(R) / (nu**2 / (2 * gamma))


def ld_prediction(
    eta: float,
    omega_pi: float,
    gamma: float,
    delta: float,
    nu: float,
    omega_sigma: float | None = None,
) -> LDPrediction:
    """Rate, steady state and validity ratio; single EIT when ``omega_sigma`` is given."""
    R = eit_rate(eta, omega_pi, gamma)
    nss = deit_nss(delta, gamma) if omega_sigma is None else eit_nss(delta, gamma, omega_pi, omega_sigma)
    pred = LDPrediction(R, nss, validity_ratio(R, nu, gamma))
    if pred.warning:
        log.warning("Lamb-Dicke rate %.3g /s is outside the perturbative regime (ratio %.2f)",
                    R, pred.validity_ratio)
    return pred
