"""40Ca+ electronic structure: S1/2, P1/2 and D3/2 Zeeman sublevels.

Levels are indexed in a fixed order (see :data:`LEVEL_LABELS`).  Frequencies
are angular (rad/s) throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import constants

MU_B = constants.physical_constants["Bohr magneton"][0]
HBAR = constants.hbar

TERM_J = {"S1/2": 0.5, "P1/2": 0.5, "D3/2": 1.5}
DEFAULT_G = {"S1/2": 2.002, "P1/2": 2.0 / 3.0, "D3/2": 4.0 / 5.0}

# (term, mJ) in index order
LEVELS = (
    ("S1/2", -0.5), ("S1/2", 0.5),
    ("P1/2", -0.5), ("P1/2", 0.5),
    ("D3/2", -1.5), ("D3/2", -0.5), ("D3/2", 0.5), ("D3/2", 1.5),
)
LEVEL_LABELS = tuple(f"{t[0]}{'+' if m > 0 else '-'}{abs(m * 2):g}/2" for t, m in LEVELS)
N_LEVELS = len(LEVELS)

WAVELENGTH = {"397": 397e-9, "866": 866e-9}
LOWER_TERM = {"397": "S1/2", "866": "D3/2"}
POLARIZATION_Q = {"sigma+": 1, "sigma-": -1, "pi": 0}


def level_index(term: str, mJ: float) -> int:
    for i, (t, m) in enumerate(LEVELS):
        if t == term and m == mJ:
            return i
    raise KeyError(f"no sublevel {term} mJ={mJ}")


@dataclass(frozen=True)
class Sublevel:
    term: str
    mJ: float
    zeeman_shift: float  # rad/s

    @property
    def J(self) -> float:
        return TERM_J[self.term]

    @property
    def index(self) -> int:
        return level_index(self.term, self.mJ)

    @property
    def label(self) -> str:
        return LEVEL_LABELS[self.index]


@dataclass(frozen=True)
class Beam:
    """One laser coupling.

    ``detuning`` is the laser angular frequency minus the bare (field-free)
    P1/2 - lower-term transition frequency.  ``rabi`` is the beam Rabi
    frequency before Clebsch-Gordan weighting.
    """

    name: str
    transition: str
    polarization: str
    detuning: float
    rabi: float
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.transition not in WAVELENGTH:
            raise ValueError(f"unknown transition {self.transition!r}; use '397' or '866'")
        if self.polarization not in POLARIZATION_Q:
            raise ValueError(
                f"unknown polarization {self.polarization!r}; use one of {sorted(POLARIZATION_Q)}"
            )
        if self.rabi < 0:
            raise ValueError(f"beam {self.name}: rabi must be >= 0, got {self.rabi}")
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1) > 1e-12:
            raise ValueError(f"beam {self.name}: direction must be a unit 3-vector, got {self.direction}")
        object.__setattr__(self, "direction", tuple(float(x) for x in d))

    @property
    def wavelength(self) -> float:
        return WAVELENGTH[self.transition]

    @property
    def q(self) -> int:
        return POLARIZATION_Q[self.polarization]

    def with_(self, **changes) -> "Beam":
        return replace(self, **changes)


@dataclass(frozen=True)
class DecayChannel:
    upper: Sublevel
    lower: Sublevel
    rate: float
    transition: str = field(default="397")


def unit(v) -> tuple[float, float, float]:
    v = np.asarray(v, dtype=float)
    return tuple(float(x) for x in v / np.linalg.norm(v))


@lru_cache(maxsize=None)
def clebsch_gordan(j1: float, m1: float, j2: float, m2: float, j: float, m: float) -> float:
    """``<j1 m1; j2 m2 | j m>`` (Condon-Shortley phase)."""
    if m1 + m2 != m:
        return 0.0
    from sympy import Rational
    from sympy.physics.quantum.cg import CG

    h = lambda x: Rational(int(round(2 * x)), 2)  # noqa: E731
    return float(CG(h(j1), h(m1), h(j2), h(m2), h(j), h(m)).doit())


def dipole_cg(lower: Sublevel, upper: Sublevel, q: int) -> float:
    """Angular factor of an absorption ``lower -> upper`` with photon helicity ``q``."""
    if upper.mJ - lower.mJ != q:
        return 0.0
    return clebsch_gordan(lower.J, lower.mJ, 1, q, upper.J, upper.mJ)


def build_sublevels(B: float, g_factors: dict[str, float] | None = None) -> list[Sublevel]:
    """All 8 sublevels with linear Zeeman shifts ``g mJ muB B / hbar``."""
    if B < 0:
        raise ValueError(f"magnetic field must be >= 0, got {B}")
    g = dict(DEFAULT_G)
    if g_factors:
        g.update(g_factors)
    return [Sublevel(t, m, g[t] * m * MU_B * B / HBAR) for t, m in LEVELS]


def coupling_element(beam: Beam, lower: Sublevel, upper: Sublevel) -> float:
    """Rabi amplitude of ``beam`` between ``lower`` and ``upper``.

    Zero when the polarization selection rule is violated.
    """
    if lower.term != LOWER_TERM[beam.transition] or upper.term != "P1/2":
        raise ValueError(
            f"beam {beam.name} ({beam.transition} nm) cannot couple {lower.label} -> {upper.label}"
        )
    return beam.rabi * dipole_cg(lower, upper, beam.q)


def beam_couplings(beam: Beam, sublevels: list[Sublevel]) -> list[tuple[int, int, float]]:
    """Nonzero ``(lower, upper, amplitude)`` triples of one beam."""
    out = []
    for lo in sublevels:
        if lo.term != LOWER_TERM[beam.transition]:
            continue
        for up in sublevels:
            if up.term != "P1/2":
                continue
            c = coupling_element(beam, lo, up)
            if c != 0.0:
                out.append((lo.index, up.index, c))
    return out


def decay_channels(
    gamma_total: float, branching_SD: float, sublevels: list[Sublevel]
) -> list[DecayChannel]:
    """Spontaneous-decay channels out of each P1/2 sublevel.

    Within each branch the partial rates follow the squared Clebsch-Gordan
    coefficients, which sum to one over the lower sublevels.
    """
    if not 0 <= branching_SD < 1:
        raise ValueError(f"branching_SD must be in [0, 1), got {branching_SD}")
    channels = []
    for up in sublevels:
        if up.term != "P1/2":
            continue
        for lo in sublevels:
            if lo.term == "S1/2":
                frac, tr = 1 - branching_SD, "397"
            elif lo.term == "D3/2":
                frac, tr = branching_SD, "866"
            else:
                continue
            q = up.mJ - lo.mJ
            if abs(q) > 1 or frac == 0:
                continue
            w = dipole_cg(lo, up, int(q)) ** 2
            if w > 0:
                channels.append(DecayChannel(up, lo, gamma_total * frac * w, tr))
    return channels
