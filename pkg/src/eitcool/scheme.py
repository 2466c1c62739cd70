"""Beam sets for single-EIT and double-bright (D-EIT) cooling, and their tuning.

Both schemes share a virtual level blue of the field-free P1/2 term by
``delta``.  The 397 pi probe (from S+1/2) and the 397 sigma+ pump (from
S-1/2) meet on it.  D-EIT adds an 866 sigma- pump from D3/2 m=+1/2 onto the
second virtual level reached by the probe from S-1/2, plus an 866 sigma+
component that empties D3/2 m=-1/2 and m=-3/2.  Single EIT replaces the 866
pump by a resonant sigma+/sigma- repumper.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import ldtheory
from .atom import Beam, Sublevel, build_sublevels, decay_channels, dipole_cg, level_index
from .lindblad import SystemConfig
from .motion import MotionalMode

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
GAMMA_CA = TWO_PI * 20.7e6

PROBE, PUMP, PUMP_866, REPUMP = "probe_397_pi", "pump_397_sigma+", "pump_866_sigma-", "repump_866_sigma+"
REPUMP_MINUS = "repump_866_sigma-"

S_M, S_P = level_index("S1/2", -0.5), level_index("S1/2", 0.5)
P_M, P_P = level_index("P1/2", -0.5), level_index("P1/2", 0.5)
D_P = level_index("D3/2", 0.5)


@dataclass(frozen=True)
class AtomParams:
    B: float = 416e-6  # T
    gamma: float = GAMMA_CA  # total P1/2 decay rate, rad/s
    branching_SD: float = 0.064
    g_factors: dict | None = None

    def sublevels(self) -> list[Sublevel]:
        return build_sublevels(self.B, self.g_factors)

    def channels(self, sublevels=None):
        return decay_channels(self.gamma, self.branching_SD, sublevels or self.sublevels())


@dataclass(frozen=True)
class SchemeParams:
    """Beam settings; Rabi frequencies are beam values before Clebsch-Gordan weighting.

    ``kind='deit'`` uses ``omega_866`` as the second pump; ``kind='eit'``
    drops it and drives a repumper at ``repump_detuning`` from the bare
    D3/2 - P1/2 line with both circular components.
    """

    kind: str = "deit"
    delta: float = 3.4 * GAMMA_CA
    omega_pi: float = TWO_PI * 6e6
    omega_sigma: float = TWO_PI * 30e6
    omega_866: float = TWO_PI * 15e6
    omega_repump: float = TWO_PI * 8e6
    repump_detuning: float = 0.0
    probe_offset: float = 0.0
    probe_direction: tuple = (0.0, 0.0, 1.0)
    pump_direction: tuple = (1.0, 0.0, 0.0)
    ir_direction: tuple = (0.0, 0.0, -1.0)
    repump_direction: tuple | None = None  # None: same as ir_direction

    def __post_init__(self):
        if self.kind not in ("deit", "eit"):
            raise ValueError(f"scheme kind must be 'deit' or 'eit', got {self.kind!r}")
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")

    def with_(self, **changes) -> "SchemeParams":
        return replace(self, **changes)


def _z(sublevels, i) -> float:
    return sublevels[i].zeeman_shift


def build_beams(sublevels, p: SchemeParams) -> list[Beam]:
    """Beams placing every Lambda leg on its virtual level (probe shifted by ``probe_offset``)."""
    z = lambda i: _z(sublevels, i)  # noqa: E731
    rdir = p.repump_direction if p.repump_direction is not None else p.ir_direction
    beams = [
        Beam(PROBE, "397", "pi", p.delta - z(S_P) + p.probe_offset, p.omega_pi, p.probe_direction),
        Beam(PUMP, "397", "sigma+", p.delta - z(S_M), p.omega_sigma, p.pump_direction),
    ]
    if p.kind == "deit":
        # lands on the level reached by the probe from S-1/2
        det = p.delta + z(S_M) - z(S_P) - z(D_P)
        beams.append(Beam(PUMP_866, "866", "sigma-", det, p.omega_866, p.ir_direction))
        beams.append(Beam(REPUMP, "866", "sigma+", det, p.omega_repump, rdir))
    else:
        beams.append(Beam(REPUMP_MINUS, "866", "sigma-", p.repump_detuning, p.omega_repump, rdir))
        beams.append(Beam(REPUMP, "866", "sigma+", p.repump_detuning, p.omega_repump, rdir))
    return beams


def effective_pump(sublevels, p: SchemeParams, which: str) -> tuple[float, float]:
    """(detuning from the real upper sublevel, CG factor) of one pump leg."""
    z = lambda i: _z(sublevels, i)  # noqa: E731
    if which == "sigma":
        return p.delta - z(P_P), abs(dipole_cg(sublevels[S_M], sublevels[P_P], 1))
    if which == "866":
        det = p.delta + z(S_M) - z(S_P) - z(P_M)
        return det, abs(dipole_cg(sublevels[D_P], sublevels[P_M], -1))
    raise ValueError(f"unknown pump {which!r}")


def probe_cg(sublevels) -> float:
    """|CG| of the probe on the S+1/2 -> P+1/2 leg."""
    return abs(dipole_cg(sublevels[S_P], sublevels[P_P], 0))


def bright_shift(sublevels, p: SchemeParams, which: str) -> float:
    """Analytic bright-resonance offset produced by one pump."""
    det, cg = effective_pump(sublevels, p, which)
    om = p.omega_sigma if which == "sigma" else p.omega_866
    return ldtheory.stark_shift(det, om * cg)


def analytic_tuning(sublevels, p: SchemeParams, nu_sigma: float, nu_866: float | None) -> SchemeParams:
    """Pump beam Rabi frequencies from the inverted light-shift formula."""
    det, cg = effective_pump(sublevels, p, "sigma")
    changes = {"omega_sigma": ldtheory.tune_pump(det, nu_sigma) / cg}
    if p.kind == "deit" and nu_866 is not None:
        det, cg = effective_pump(sublevels, p, "866")
        changes["omega_866"] = ldtheory.tune_pump(det, nu_866) / cg
    return p.with_(**changes)


@dataclass
class Scheme:
    """Atom, beam settings and the motional modes they cool."""

    atom: AtomParams = field(default_factory=AtomParams)
    params: SchemeParams = field(default_factory=SchemeParams)

    def __post_init__(self):
        self._sub = self.atom.sublevels()
        self._ch = self.atom.channels(self._sub)

    @property
    def sublevels(self):
        return self._sub

    def beams(self, **changes) -> list[Beam]:
        return build_beams(self._sub, self.params.with_(**changes) if changes else self.params)

    def system(self, mode: MotionalMode | None = None, ld_order=2, recoil=0.4, **changes) -> SystemConfig:
        beams = self.beams(**changes)
        if mode is None:
            return SystemConfig(self._sub, beams, self._ch, ld_order=ld_order, recoil=recoil)
        return SystemConfig.for_mode(self._sub, beams, self._ch, mode, ld_order=ld_order, recoil=recoil)

    def with_params(self, **changes) -> "Scheme":
        return Scheme(self.atom, self.params.with_(**changes))

    def tuned(self, nu_sigma: float, nu_866: float | None = None, refine: bool = True,
              rel_tol: float = 0.005, max_iter: int = 12) -> "Scheme":
        """Scheme whose bright resonances sit at ``nu_sigma`` (397 pump) and ``nu_866``.

        Three stages: the analytic light shift; a root solve placing the
        dressed bright-state energies on the targets; with ``refine``, a
        damped Newton iteration moving the weak-probe spectrum peaks onto the
        targets within ``rel_tol``.  A stage that fails keeps the previous
        result and warns.
        """
        from .analysis import bright_peaks, dressed_energies

        p = analytic_tuning(self._sub, self.params, nu_sigma, nu_866)
        deit = p.kind == "deit" and nu_866 is not None
        targets = np.array([nu_sigma] + ([nu_866] if deit else []))
        keys = ["omega_sigma", "omega_866"][: targets.size]
        levels = [S_M, D_P][: targets.size]

        def at(logx):
            return Scheme(self.atom, p.with_(**dict(zip(keys, np.exp(logx)))))

        def dressed_residual(logx):
            e = np.array(dressed_energies(at(logx).system(), S_P, levels)).real
            if np.any(e <= 0):
                raise ValueError("bright state below the dark state")
            return np.log(e / targets)

        def peak_residual(logx):
            return np.log(np.array(bright_peaks(at(logx).system(), PROBE, targets)) / targets)

        x = np.log([getattr(p, k) for k in keys])
        x = _damped_newton(dressed_residual, x, 1e-9, 30, "dressed-state")
        if refine:
            x = _damped_newton(peak_residual, x, rel_tol, max_iter, "weak-probe peak")
        return at(x)


def _jacobian(residual, x, f, h=1e-4):
    """Forward differences, falling back to backward ones where the residual is undefined."""
    jac = np.empty((f.size, x.size))
    for j in range(x.size):
        dx = np.zeros_like(x)
        dx[j] = h
        try:
            jac[:, j] = (residual(x + dx) - f) / h
        except ValueError:
            jac[:, j] = (f - residual(x - dx)) / h
    return jac


def _damped_newton(residual, x, rel_tol, max_iter, what):
    """Solve ``residual(x) = 0`` (log-ratio residuals) with backtracking; warn on failure."""
    try:
        f = residual(x)
    except ValueError as exc:
        warnings.warn(f"{what} tuning could not start ({exc}); keeping the previous values",
                      RuntimeWarning)
        return x
    for it in range(max_iter):
        if np.max(np.abs(np.expm1(f))) < rel_tol:
            return x
        try:
            jac = _jacobian(residual, x, f)
        except ValueError:
            break
        step = -np.linalg.solve(jac, f)
        step *= min(1.0, 0.4 / np.max(np.abs(step)))
        for _ in range(8):
            try:
                fn = residual(x + step)
                if np.linalg.norm(fn) < np.linalg.norm(f):
                    break
            except ValueError:
                pass
            step /= 2
        else:
            break
        x, f = x + step, fn
        log.debug("%s tuning iteration %d: mismatch %s", what, it, np.expm1(f))
    if np.max(np.abs(np.expm1(f))) >= rel_tol:
        warnings.warn(f"{what} tuning stopped at {np.max(np.abs(np.expm1(f))):.2%} mismatch "
                      f"(tolerance {rel_tol:.2%}); keeping the best iterate", RuntimeWarning)
    return x
