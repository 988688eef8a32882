"""Actuator-level controller: torque routing, shift state machine, nullspace speed loops.

The high level supplies a motor torque ``tau_d`` and a desired mode ``k_d``.
In HS the torque goes to M1 while an M1 speed loop runs in the output
nullspace (low gain while cruising, high gain once a down-shift is requested).
The brake is closed only when ``|w_1| < w1_epsilon`` and the controller enters
steady HF once the brake has had ``brake_delay`` to bite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from .model import Mode, nullspace_projection
from .params import ActuatorParams

DEFAULT_C_PREP = 0.5
DEFAULT_C_SYNC = 1000.0
DEFAULT_W1_EPSILON = 0.5
DEFAULT_DECEL_THRESHOLD = 200.0

# Shared by the controller timer and the simulated brake so both fire on the same sample.
TIMER_SLACK = 1e-12


class Phase(str, enum.Enum):
    STEADY_HS = "STEADY_HS"
    SYNCHRONIZING = "SYNCHRONIZING"
    ENGAGING_BRAKE = "ENGAGING_BRAKE"
    STEADY_HF = "STEADY_HF"


# phase -> plant modes it may coexist with
_CONSISTENT = {
    Phase.STEADY_HS: (Mode.HS,),
    Phase.SYNCHRONIZING: (Mode.HS,),
    Phase.ENGAGING_BRAKE: (Mode.HS, Mode.HF),
    Phase.STEADY_HF: (Mode.HF,),
}


class ControllerFault(RuntimeError):
    """Controller phase and plant mode disagree."""


@dataclass(frozen=True)
class ControllerCommand:
    tau_d: float
    k_d: Mode

    def __post_init__(self):
        if not math.isfinite(self.tau_d):
            raise ValueError("tau_d must be finite")


@dataclass(frozen=True)
class ControllerState:
    phase: Phase = Phase.STEADY_HS
    C_prep: float = DEFAULT_C_PREP
    C_sync: float = DEFAULT_C_SYNC
    w1_epsilon: float = DEFAULT_W1_EPSILON
    w1_d: float = 0.0
    p_o_hat: float = 0.0
    brake_delay: float = 0.010
    timer: float = 0.0

    def __post_init__(self):
        if not (self.C_sync > self.C_prep > 0.0):
            raise ValueError("gains must satisfy C_sync > C_prep > 0")
        if not self.w1_epsilon > 0.0:
            raise ValueError("w1_epsilon must be positive")
        if not self.brake_delay >= 0.0:
            raise ValueError("brake_delay must be non-negative")

    @property
    def brake_closed(self) -> bool:
        return self.phase in (Phase.ENGAGING_BRAKE, Phase.STEADY_HF)

    @classmethod
    def initial(cls, mode: Mode, **kw) -> "ControllerState":
        return cls(phase=Phase.STEADY_HF if mode is Mode.HF else Phase.STEADY_HS, **kw)


def torque_routing(cmd: ControllerCommand, mode: Mode) -> tuple[float, float]:
    return (cmd.tau_d, 0.0) if mode is Mode.HS else (0.0, cmd.tau_d)


def nullspace_speed_loop(
    p: ActuatorParams, tau_d: float, w_1: float, w1_d: float, C: float
) -> tuple[float, float]:
    """Main loop on M1 plus a proportional M1 speed loop projected on the output nullspace."""
    n1, n2 = nullspace_projection(p, C * (w1_d - w_1))
    return tau_d + n1, n2


def predicted_w1_setpoint(p: ActuatorParams, p_o_hat: float) -> float:
    """M1 speed that an expected output impulse ``p_o_hat`` would bring to zero."""
    return -p.R1 * p_o_hat / (p.I_o + p.I_1 * p.R1**2)


def detect_contact(samples: Sequence[float], dt: float, decel_threshold: float) -> bool:
    """Finite-difference deceleration test on the last two output-speed samples."""
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    w_prev, w_now = samples[-2], samples[-1]
    if w_prev <= 0.0:
        return False  # not moving toward the load
    return (w_prev - w_now) / dt > decel_threshold


def saturate(p: ActuatorParams, tau_1: float, tau_2: float) -> tuple[float, float]:
    return (
        min(max(tau_1, -p.tau1_max), p.tau1_max),
        min(max(tau_2, -p.tau2_max), p.tau2_max),
    )


def _speed_limited(p: ActuatorParams, mode: Mode, tau_d: float, w_o: float) -> float:
    # zero the drive torque when it would push past the mode's output speed limit
    w_max = p.w_o_max_hs if mode is Mode.HS else p.w_o_max_hf
    if abs(w_o) >= w_max and tau_d * w_o > 0.0:
        return 0.0
    return tau_d


def brake_delay_elapsed(timer: float, delay: float) -> bool:
    return timer >= delay - TIMER_SLACK


def controller_step(
    p: ActuatorParams,
    ctrl: ControllerState,
    cmd: ControllerCommand,
    w_o: float,
    w_1: float,
    mode: Mode,
    dt: float,
) -> tuple[tuple[float, float], bool, ControllerState]:
    """One control sample.

    Returns ``((tau_1, tau_2), brake_closed, new_state)``; torques are saturated.
    ``mode`` is the plant mode (brake mechanically engaged or not).
    """
    if not (math.isfinite(w_o) and math.isfinite(w_1)):
        raise ValueError("non-finite measurement")
    if mode not in _CONSISTENT[ctrl.phase]:
        raise ControllerFault(f"controller in {ctrl.phase.value} but plant in {mode.value}")

    phase, timer = ctrl.phase, ctrl.timer
    if phase is Phase.STEADY_HF and cmd.k_d is Mode.HS:
        # opening the brake is never impulsive: go straight back to HS
        phase = Phase.STEADY_HS
    elif phase is Phase.STEADY_HS and cmd.k_d is Mode.HF:
        phase = Phase.SYNCHRONIZING
    elif phase in (Phase.SYNCHRONIZING, Phase.ENGAGING_BRAKE) and cmd.k_d is Mode.HS:
        phase, timer = Phase.STEADY_HS, 0.0

    if phase is Phase.ENGAGING_BRAKE:
        timer += dt
        if abs(w_1) >= ctrl.w1_epsilon and mode is Mode.HS:
            phase, timer = Phase.SYNCHRONIZING, 0.0
        elif brake_delay_elapsed(timer, ctrl.brake_delay):
            phase, timer = Phase.STEADY_HF, 0.0
    if phase is Phase.SYNCHRONIZING and abs(w_1) < ctrl.w1_epsilon:
        phase, timer = Phase.ENGAGING_BRAKE, 0.0
        if brake_delay_elapsed(timer, ctrl.brake_delay):
            phase = Phase.STEADY_HF

    # torques are computed for the mode the plant will be in over the next step
    plant_mode = Mode.HF if phase is Phase.STEADY_HF else Mode.HS
    tau_d = _speed_limited(p, plant_mode, cmd.tau_d, w_o)
    if phase is Phase.STEADY_HS:
        w1_d = predicted_w1_setpoint(p, ctrl.p_o_hat)
        tau = nullspace_speed_loop(p, tau_d, w_1, w1_d, ctrl.C_prep)
    elif phase is Phase.STEADY_HF:
        w1_d = 0.0
        tau = torque_routing(ControllerCommand(tau_d, Mode.HF), Mode.HF)
    else:
        w1_d = 0.0
        w_1_hs = w_1 if mode is Mode.HS else 0.0
        tau = nullspace_speed_loop(p, tau_d, w_1_hs, w1_d, ctrl.C_sync)

    new = replace(ctrl, phase=phase, timer=timer, w1_d=w1_d)
    return saturate(p, *tau), new.brake_closed, new


# --- high-level mode schedule -------------------------------------------------

AUTO = "auto"


@dataclass(frozen=True)
class ScheduleEntry:
    trigger: Union[float, str]  # a time in seconds or AUTO
    mode: Mode


def parse_schedule(text: str) -> tuple[ScheduleEntry, ...]:
    """Parse ``"0:HS,auto:HF"`` style schedules."""
    entries = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        trig, sep, mode = chunk.partition(":")
        if not sep:
            raise ValueError(f"schedule entry {chunk!r} is not time:mode")
        trig = trig.strip().lower()
        if trig != AUTO:
            try:
                trig = float(trig)
            except ValueError:
                raise ValueError(f"bad schedule time {trig!r}") from None
            if not (math.isfinite(trig) and trig >= 0):
                raise ValueError(f"bad schedule time {trig!r}")
        entries.append(ScheduleEntry(trig, Mode.parse(mode)))
    if not entries:
        raise ValueError("empty schedule")
    return tuple(entries)


def format_schedule(entries: Sequence[ScheduleEntry]) -> str:
    return ",".join(
        f"{e.trigger if e.trigger == AUTO else repr(float(e.trigger))}:{e.mode.value}" for e in entries
    )


def scheduled_mode(
    entries: Sequence[ScheduleEntry], t: float, contact_time: Optional[float], default: Mode = Mode.HS
) -> Mode:
    """Desired mode at ``t``: the most recently fired entry wins.

    ``auto`` entries fire at ``contact_time`` (``None`` until contact is detected).
    """
    fired = []
    for i, e in enumerate(entries):
        at = contact_time if e.trigger == AUTO else e.trigger
        if at is not None and at <= t + TIMER_SLACK:
            fired.append((at, i, e.mode))
    return max(fired)[2] if fired else default


@dataclass(frozen=True)
class ControllerConfig:
    """Everything the [controller] scenario section sets."""

    tau_d: float = 0.08
    k_d_schedule: tuple[ScheduleEntry, ...] = field(
        default_factory=lambda: parse_schedule("0:HS,auto:HF")
    )
    C_prep: float = DEFAULT_C_PREP
    C_sync: float = DEFAULT_C_SYNC
    w1_epsilon: float = DEFAULT_W1_EPSILON
    decel_threshold: float = DEFAULT_DECEL_THRESHOLD
    brake_delay: float = 0.010
    p_o_hat: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.tau_d):
            raise ValueError("tau_d must be finite")
        if not self.decel_threshold > 0:
            raise ValueError("decel_threshold must be positive")
        self.initial_state(Mode.HS)  # runs the gain invariants

    def initial_state(self, mode: Mode) -> ControllerState:
        return ControllerState.initial(
            mode,
            C_prep=self.C_prep,
            C_sync=self.C_sync,
            w1_epsilon=self.w1_epsilon,
            p_o_hat=self.p_o_hat,
            brake_delay=self.brake_delay,
        )
