"""Continuous dynamics, jump maps and nullspace of the dual-motor actuator.

State is ``w = [w_o, w_1]`` (output and M1 speeds); M2 speed follows from the
differential constraint ``w_1/R1 + w_2/R2 = w_o``.  Two modes:

* ``Mode.HS`` -- brake open, 2 DoF, M1 drives through R1.
* ``Mode.HF`` -- brake closed, M1 locked (``w_1 = 0``), M2 drives through R2.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .params import ActuatorParams


class Mode(str, enum.Enum):
    HS = "HS"
    HF = "HF"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown mode {text!r} (expected HS or HF)") from None


class InvalidTransition(RuntimeError):
    """A jump map was requested from a mode it is not defined for."""


class StateError(ValueError):
    """A state violates the invariant of its mode."""


@dataclass(frozen=True)
class HybridState:
    mode: Mode
    theta_o: float = 0.0
    w_o: float = 0.0
    w_1: float = 0.0

    def __post_init__(self):
        if self.mode is Mode.HF and self.w_1 != 0.0:
            raise StateError(f"HF mode requires w_1 == 0, got {self.w_1}")

    @property
    def w(self) -> np.ndarray:
        return np.array([self.w_o, self.w_1])

    def with_velocities(self, w_o: float, w_1: float) -> "HybridState":
        return replace(self, w_o=float(w_o), w_1=float(w_1))


@dataclass(frozen=True)
class TorqueInput:
    """Motor electromagnetic torques (motor side) and external output torque."""

    tau_1: float = 0.0
    tau_2: float = 0.0
    tau_o: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.tau_1, self.tau_2, self.tau_o])


def w2_from_state(p: ActuatorParams, s: HybridState) -> float:
    """M2 speed from the differential constraint."""
    return p.R2 * (s.w_o - s.w_1 / p.R1)


def static_torque_balance(p: ActuatorParams, tau_o: float) -> tuple[float, float]:
    """Motor torques holding an external output torque: R1 tau_1 = R2 tau_2 = -tau_o."""
    return -tau_o / p.R1, -tau_o / p.R2


def dynamics_hf(p: ActuatorParams, s: HybridState, u: TorqueInput) -> np.ndarray:
    if s.mode is not Mode.HF:
        raise StateError("dynamics_hf called outside HF mode")
    if s.w_1 != 0.0:
        raise StateError(f"HF dynamics require w_1 == 0, got {s.w_1}")
    num = -(p.b_o + p.R2**2 * p.b_2) * s.w_o + p.R2 * u.tau_2 + u.tau_o
    return np.array([num / p.hf_reflected_inertia, 0.0])


def dynamics_hs(p: ActuatorParams, s: HybridState, u: TorqueInput) -> np.ndarray:
    """``H w' = -D w + B tau`` for the brake-open mode."""
    if s.mode is not Mode.HS:
        raise StateError("dynamics_hs called outside HS mode")
    rhs = -p.damping_matrix() @ s.w + p.input_matrix() @ u.vector
    return np.linalg.solve(p.mass_matrix(), rhs)


def dynamics(p: ActuatorParams, s: HybridState, u: TorqueInput) -> np.ndarray:
    """Dispatch to the active mode's vector field."""
    return dynamics_hf(p, s, u) if s.mode is Mode.HF else dynamics_hs(p, s, u)


# --- jump maps ---------------------------------------------------------------


def jump_upshift(s: HybridState) -> HybridState:
    """Brake release: M1 starts from rest, nothing else moves."""
    if s.mode is not Mode.HF:
        raise InvalidTransition("up-shift requires HF mode")
    return replace(s, mode=Mode.HS, w_1=0.0)


def downshift_denominator(p: ActuatorParams) -> float:
    """R1 (I_o/(I_2 R2^2) + 1): w_1 jump is divided by this to give the w_o jump."""
    return p.R1 * (p.I_o / (p.I_2 * p.R2**2) + 1.0)


def jump_downshift(p: ActuatorParams, s: HybridState) -> HybridState:
    """Brake engagement.  Smooth when ``w_1 == 0``, impulsive otherwise."""
    if s.mode is not Mode.HS:
        raise InvalidTransition("down-shift requires HS mode")
    w_o = s.w_o - s.w_1 / downshift_denominator(p) if s.w_1 != 0.0 else s.w_o
    return HybridState(Mode.HF, s.theta_o, w_o, 0.0)


def _inverse_mass_matrix(p: ActuatorParams) -> tuple[float, float, float]:
    # closed-form 2x2 inverse; returns (Hinv_oo, Hinv_o1, Hinv_11)
    H = p.mass_matrix()
    det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    return H[1, 1] / det, -H[0, 1] / det, H[0, 0] / det


def jump_impact_hs(p: ActuatorParams, s: HybridState, p_o: float) -> HybridState:
    """Output impulse ``p_o`` with the brake open: ``w+ = w- + H^-1 [p_o, 0]``."""
    if s.mode is not Mode.HS:
        raise InvalidTransition("HS impact map requires HS mode")
    a, b, _ = _inverse_mass_matrix(p)
    return s.with_velocities(s.w_o + a * p_o, s.w_1 + b * p_o)


def jump_impact_hs_simplified(p: ActuatorParams, s: HybridState, p_o: float) -> HybridState:
    """HS impact map assuming R2^2 I_2 >> R1^2 I_1: M2 speed does not jump."""
    if s.mode is not Mode.HS:
        raise InvalidTransition("HS impact map requires HS mode")
    dw_o = p_o / p.hs_reflected_inertia
    return s.with_velocities(s.w_o + dw_o, s.w_1 + p.R1 * dw_o)


def jump_impact_hf(p: ActuatorParams, s: HybridState, p_o: float) -> HybridState:
    """Output impulse with the brake closed (no slip)."""
    if s.mode is not Mode.HF:
        raise InvalidTransition("HF impact map requires HF mode")
    return s.with_velocities(s.w_o + p_o / p.hf_reflected_inertia, 0.0)


def effective_output_inertia(p: ActuatorParams, mode: Mode) -> float:
    """Inertia seen by an output impulse: ``p_o / dw_o`` of the mode's impact map."""
    if mode is Mode.HF:
        return p.hf_reflected_inertia
    return 1.0 / _inverse_mass_matrix(p)[0]


# --- nullspace and reduced models -------------------------------------------


def nullspace_projection(p: ActuatorParams, u: float) -> tuple[float, float]:
    """Motor torques that accelerate M1 (at rate ``u``) without touching the output."""
    return p.I_1 * u, -(p.R2 / p.R1) * p.I_2 * u


def io_inertia_hs(p: ActuatorParams) -> float:
    """I_T = I_o + R1^2 I_1 + (R1/R2)^2 (I_1/I_2) I_o."""
    return p.I_o + p.R1**2 * p.I_1 + (p.R1 / p.R2) ** 2 * (p.I_1 / p.I_2) * p.I_o


def io_damping_hs(p: ActuatorParams) -> float:
    """b_T = b_o + (R1/R2)^2 (I_1/I_2) b_o.

    Taken as printed: both terms use the output damping.  With motor-side
    damping neglected this is also what eliminating ``w_1`` gives.
    """
    return p.b_o + (p.R1 / p.R2) ** 2 * (p.I_1 / p.I_2) * p.b_o


def reduced_io_dynamics_hs(p: ActuatorParams, w_o: float, tau_1: float, tau_2: float) -> float:
    """Output acceleration in HS mode with ``w_1`` eliminated (b_1 = b_2 = 0)."""
    gain_2 = p.R1 * (p.R1 * p.I_1) / (p.R2 * p.I_2)
    return (p.R1 * tau_1 + gain_2 * tau_2 - io_damping_hs(p) * w_o) / io_inertia_hs(p)


def reduced_io_dynamics_moded(p: ActuatorParams, mode: Mode, w_o: float, tau_d: float) -> float:
    """Single-motor view: ratio R1 in HS, R2 in HF."""
    R, I = (p.R1, p.I_1) if mode is Mode.HS else (p.R2, p.I_2)
    return (R * tau_d - p.b_o * w_o) / (p.I_o + R**2 * I)


def kinetic_energy(p: ActuatorParams, s: HybridState) -> float:
    w = s.w
    return 0.5 * float(w @ p.mass_matrix() @ w)
