"""Output-side loads: contact geometry, external torque and impact impulses.

Contact is unilateral and sits on the positive side of the output:
the load acts only for ``theta_o >= contact_angle`` and only pushes back.
Impacts are perfectly inelastic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

from .model import Mode, effective_output_inertia
from .params import ActuatorParams, ParameterError

# Scenario defaults; no load figures exist for the prototype experiments.
DEFAULT_CONTACT_ANGLE = 0.3
DEFAULT_I_L = 0.5
DEFAULT_RESISTIVE_TORQUE = 8.0
DEFAULT_K_C = 50.0
DEFAULT_B_C = 0.5


def _check(cond: bool, key: str, msg: str):
    if not cond:
        raise ParameterError(f"{key}: {msg}", (key,))


@dataclass(frozen=True)
class Free:
    kind = "free"


@dataclass(frozen=True)
class FixedObstacle:
    contact_angle: float = DEFAULT_CONTACT_ANGLE
    kind = "fixed"

    def __post_init__(self):
        _check(math.isfinite(self.contact_angle), "contact_angle", "must be finite")


@dataclass(frozen=True)
class InertialLoad:
    """Heavy object resting on a surface with Coulomb friction."""

    I_L: float = DEFAULT_I_L
    resistive_torque: float = DEFAULT_RESISTIVE_TORQUE
    contact_angle: float = DEFAULT_CONTACT_ANGLE
    kind = "inertial"

    def __post_init__(self):
        _check(self.I_L > 0 and math.isfinite(self.I_L), "I_L", "must be positive")
        _check(self.resistive_torque >= 0, "resistive_torque", "must be non-negative")
        _check(math.isfinite(self.contact_angle), "contact_angle", "must be finite")


@dataclass(frozen=True)
class CompliantLoad:
    k_c: float = DEFAULT_K_C
    b_c: float = DEFAULT_B_C
    contact_angle: float = DEFAULT_CONTACT_ANGLE
    kind = "compliant"

    def __post_init__(self):
        _check(self.k_c > 0 and math.isfinite(self.k_c), "k_c", "must be positive")
        _check(self.b_c >= 0, "b_c", "must be non-negative")
        _check(math.isfinite(self.contact_angle), "contact_angle", "must be finite")


LoadModel = Union[Free, FixedObstacle, InertialLoad, CompliantLoad]

LOAD_TYPES = {cls.kind: cls for cls in (Free, FixedObstacle, InertialLoad, CompliantLoad)}


class ContactKind(str, enum.Enum):
    IMPACT = "impact"
    ENGAGE = "engage"
    RELEASE = "release"


@dataclass(frozen=True)
class ContactEvent:
    """A logged discrete event.  ``transition`` names the jump that was applied."""

    time: float
    impulse: float
    kind: ContactKind
    transition: str = ""


def in_contact(load: LoadModel, theta_o: float) -> bool:
    return not isinstance(load, Free) and theta_o >= load.contact_angle


def external_torque(load: LoadModel, theta_o: float, w_o: float) -> float:
    """Continuous output-side torque from the load.

    The fixed obstacle contributes nothing here: while it holds the output the
    simulator computes its reaction as a constraint force.  The inertial load's
    inertia is handled by the simulator as well; only its friction shows up.
    """
    if not in_contact(load, theta_o):
        return 0.0
    if isinstance(load, InertialLoad):
        return -load.resistive_torque * math.copysign(1.0, w_o) if w_o != 0.0 else 0.0
    if isinstance(load, CompliantLoad):
        tau = -load.k_c * (theta_o - load.contact_angle) - load.b_c * w_o
        return min(tau, 0.0)  # never pulls
    return 0.0


def detect_crossing(load: LoadModel, theta_before: float, theta_after: float) -> Optional[float]:
    """Fraction of a step at which ``theta`` reaches the contact angle, if it does.

    A step starting exactly on the contact angle owns the crossing (returns 0).
    """
    if isinstance(load, Free):
        return None
    c = load.contact_angle
    a, b = theta_before - c, theta_after - c
    if a == 0.0:
        return 0.0
    if b == 0.0:
        return 1.0
    if (a < 0.0) == (b < 0.0):
        return None
    return a / (a - b)


def impact_impulse(p: ActuatorParams, mode: Mode, load: LoadModel, w_o_minus: float) -> float:
    """Output impulse of a perfectly inelastic contact made at speed ``w_o_minus``."""
    if w_o_minus <= 0.0:
        return 0.0
    if isinstance(load, FixedObstacle):
        return -effective_output_inertia(p, mode) * w_o_minus
    if isinstance(load, InertialLoad):
        I_eff = effective_output_inertia(p, mode)
        w_common = I_eff * w_o_minus / (I_eff + load.I_L)
        return I_eff * (w_common - w_o_minus)
    return 0.0
