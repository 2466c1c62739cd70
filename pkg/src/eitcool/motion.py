"""Motional modes, beam/mode geometry and Lamb-Dicke parameters.

Lab frame: ``z`` is the trap axis, the cooling beams span the ``xz`` plane,
and the two radial modes are rotated about ``z`` by their stated angle from
that plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

from .atom import Beam, WAVELENGTH

AMU = constants.physical_constants["atomic mass constant"][0]
HBAR = constants.hbar
MODE_LABELS = ("axial", "radial1", "radial2")


def _unit(v) -> tuple[float, float, float]:
    v = np.asarray(v, dtype=float)
    return tuple(float(x) for x in v / np.linalg.norm(v))


@dataclass(frozen=True)
class MotionalMode:
    label: str
    frequency: float  # rad/s
    axis: tuple[float, float, float]
    fock_dim: int = 17
    mass: float = 40 * AMU

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError(f"mode {self.label}: frequency must be > 0")
        if self.fock_dim < 2:
            raise ValueError(f"mode {self.label}: fock_dim must be >= 2, got {self.fock_dim}")
        a = np.asarray(self.axis, dtype=float)
        if a.shape != (3,) or abs(np.linalg.norm(a) - 1) > 1e-12:
            raise ValueError(f"mode {self.label}: axis must be a unit 3-vector")
        object.__setattr__(self, "axis", tuple(float(x) for x in a))

    @property
    def ground_state_size(self) -> float:
        """``sqrt(hbar / (2 m nu))`` in metres."""
        return float(np.sqrt(HBAR / (2 * self.mass * self.frequency)))

    def with_(self, **changes) -> "MotionalMode":
        return replace(self, **changes)


@dataclass(frozen=True)
class GeometryConfig:
    """Mode orientation and the logic (729 nm) beam direction.

    Angles in degrees.  ``radial_mode_angles`` rotate the radial axes about
    ``z`` away from the ``xz`` cooling plane.  ``logic_angle`` is the logic
    beam's elevation out of that plane and ``logic_inplane`` the azimuth of
    its in-plane projection measured from ``x`` towards ``z``.
    """

    logic_angle: float = 54.7
    logic_inplane: float = 45.0
    radial_mode_angles: tuple[float, float] = (26.0, -64.0)
    trap_axis: tuple[float, float, float] = field(default=(0.0, 0.0, 1.0))

    def __post_init__(self):
        ax = self.mode_axes()
        for a in ("radial1", "radial2"):
            if abs(np.dot(ax[a], ax["axial"])) > 1e-9:
                raise ValueError(f"{a} axis not orthogonal to the trap axis")
        if abs(np.dot(ax["radial1"], ax["radial2"])) > 1e-9:
            raise ValueError(
                f"radial mode angles {self.radial_mode_angles} do not give orthogonal axes"
            )

    def mode_axes(self) -> dict[str, np.ndarray]:
        z = np.asarray(_unit(self.trap_axis))
        # x: in the cooling plane, perpendicular to z
        x = np.cross([0.0, 1.0, 0.0], z)
        if np.linalg.norm(x) < 1e-12:
            x = np.array([1.0, 0.0, 0.0])
        x = x / np.linalg.norm(x)
        y = np.cross(z, x)
        out = {"axial": z}
        for label, ang in zip(("radial1", "radial2"), self.radial_mode_angles):
            t = np.radians(ang)
            out[label] = np.cos(t) * x + np.sin(t) * y
        return out

    def logic_direction(self) -> np.ndarray:
        a, b = np.radians(self.logic_angle), np.radians(self.logic_inplane)
        return np.array([np.cos(a) * np.cos(b), np.sin(a), np.cos(a) * np.sin(b)])


def build_modes(
    frequencies: dict[str, float],
    geometry: GeometryConfig | None = None,
    fock_dim: int = 17,
    mass: float = 40 * AMU,
) -> dict[str, MotionalMode]:
    """Modes keyed by label; ``frequencies`` in rad/s."""
    geometry = geometry or GeometryConfig()
    axes = geometry.mode_axes()
    return {
        label: MotionalMode(label, float(nu), _unit(axes[label]), fock_dim, mass)
        for label, nu in frequencies.items()
    }


def lamb_dicke_k(wavelength: float, direction, mode: MotionalMode) -> float:
    proj = float(np.dot(np.asarray(direction, dtype=float), np.asarray(mode.axis)))
    return 2 * np.pi / wavelength * proj * mode.ground_state_size


def lamb_dicke(beam: Beam, mode: MotionalMode) -> float:
    """Signed ``k (d . e) sqrt(hbar / 2 m nu)`` of one beam on one mode."""
    return lamb_dicke_k(beam.wavelength, beam.direction, mode)


def emission_lamb_dicke(transition: str, mode: MotionalMode) -> float:
    """Lamb-Dicke parameter of a photon emitted along the mode axis."""
    return 2 * np.pi / WAVELENGTH[transition] * mode.ground_state_size


def effective_mode_eta(mode: MotionalMode, beams) -> dict[str, float]:
    """Per-beam Lamb-Dicke table for one mode, keyed by beam name."""
    return {b.name: lamb_dicke(b, mode) for b in beams}


def eta_table(modes: dict[str, MotionalMode], beams) -> dict[str, dict[str, float]]:
    return {label: effective_mode_eta(m, beams) for label, m in modes.items()}
