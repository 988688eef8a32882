"""Actuator parameters, the reflected-inertia fit and the INI parameter file.

The prototype is only characterised by per-mode figures (ratio, maximum output
torque, maximum output speed, reflected inertia at the output) plus the ratio
of M2 to M1 reflected inertia.  :func:`fit_inertias` turns those into the
port inertias the 2-DoF model needs.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

PARAM_KEYS = (
    "R1",
    "R2",
    "I_o",
    "I_1",
    "I_2",
    "b_o",
    "b_1",
    "b_2",
    "tau1_max",
    "tau2_max",
    "w_o_max_hs",
    "w_o_max_hf",
    "brake_delay",
)

RPM = 2.0 * math.pi / 60.0

# Prototype figures: (ratio, max output torque N.m, max output speed RPM,
# reflected inertia kg.m^2) per mode, and R2^2 I2 / (R1^2 I1).
PROTOTYPE_HS = (23.0, 2.0, 220.0, 0.004)
PROTOTYPE_HF = (474.0, 14.0, 10.0, 0.22)
PROTOTYPE_REFLECTED_RATIO = 425.0

DEFAULT_DAMPING = {"b_o": 0.01, "b_1": 1e-6, "b_2": 1e-6}
DEFAULT_BRAKE_DELAY = 0.010


class ParameterError(ValueError):
    """Raised when a parameter set violates a physical invariant.

    ``keys`` names the offending fields so that file parsers can point at them.
    """

    def __init__(self, message: str, keys: tuple[str, ...] = ()):
        super().__init__(message)
        self.keys = keys


@dataclass(frozen=True)
class ActuatorParams:
    """Lumped parameters of the dual-motor actuator (SI units).

    ``R1``/``R2`` are the total reductions of the M1/M2 paths, ``I_*`` and
    ``b_*`` the inertia and viscous damping of the output (o) and rotor (1, 2)
    ports.  Torque limits are motor-side, speed limits output-side.
    """

    R1: float
    R2: float
    I_o: float
    I_1: float
    I_2: float
    b_o: float = DEFAULT_DAMPING["b_o"]
    b_1: float = DEFAULT_DAMPING["b_1"]
    b_2: float = DEFAULT_DAMPING["b_2"]
    tau1_max: float = math.inf
    tau2_max: float = math.inf
    w_o_max_hs: float = math.inf
    w_o_max_hf: float = math.inf
    brake_delay: float = DEFAULT_BRAKE_DELAY

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
                raise ParameterError(f"{f.name} must be a real number, got {v!r}", (f.name,))
        if not self.R2 > self.R1:
            raise ParameterError(
                f"R2 ({self.R2}) must be greater than R1 ({self.R1})", ("R1", "R2")
            )
        if not self.R1 > 1.0:
            raise ParameterError(f"R1 must be > 1, got {self.R1}", ("R1",))
        for name in ("I_o", "I_1", "I_2"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be positive and finite, got {v}", (name,))
        for name in ("b_o", "b_1", "b_2", "brake_delay"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be non-negative and finite, got {v}", (name,))
        for name in ("tau1_max", "tau2_max", "w_o_max_hs", "w_o_max_hf"):
            if not getattr(self, name) > 0.0:
                raise ParameterError(f"{name} must be positive", (name,))
        # H is SPD iff its determinant is positive (diagonal entries are).
        if not np.linalg.det(self.mass_matrix()) > 0.0:
            raise ParameterError("mass matrix is not positive definite", ("I_o", "I_1", "I_2"))

    # Matrices of the brake-open model, w = [w_o, w_1], tau = [tau_1, tau_2, tau_o].

    def mass_matrix(self) -> np.ndarray:
        c = self.R2 / self.R1
        return np.array(
            [
                [self.I_o + self.R2**2 * self.I_2, -(self.R2**2 / self.R1) * self.I_2],
                [-(self.R2**2 / self.R1) * self.I_2, self.I_1 + c**2 * self.I_2],
            ]
        )

    def damping_matrix(self) -> np.ndarray:
        c = self.R2 / self.R1
        return np.array(
            [
                [self.b_o + self.R2**2 * self.b_2, -(self.R2**2 / self.R1) * self.b_2],
                [-(self.R2**2 / self.R1) * self.b_2, self.b_1 + c**2 * self.b_2],
            ]
        )

    def input_matrix(self) -> np.ndarray:
        return np.array([[0.0, self.R2, 1.0], [1.0, -self.R2 / self.R1, 0.0]])

    @property
    def hs_reflected_inertia(self) -> float:
        """I_o + R1^2 I_1."""
        return self.I_o + self.R1**2 * self.I_1

    @property
    def hf_reflected_inertia(self) -> float:
        """I_o + R2^2 I_2."""
        return self.I_o + self.R2**2 * self.I_2

    @property
    def reflected_ratio(self) -> float:
        """R2^2 I_2 / (R1^2 I_1)."""
        return (self.R2**2 * self.I_2) / (self.R1**2 * self.I_1)

    def with_(self, **changes) -> "ActuatorParams":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def default(cls) -> "ActuatorParams":
        """The fitted prototype parameter set shipped with the package."""
        text = resources.files("dsdm").joinpath("data/default_params.ini").read_text("utf-8")
        return loads_params(text)


@dataclass(frozen=True)
class InertiaFit:
    I_o: float
    I_1: float
    I_2: float

    def as_dict(self):
        return asdict(self)


def fit_inertias(
    R1: float = PROTOTYPE_HS[0],
    R2: float = PROTOTYPE_HF[0],
    hs_inertia: float = PROTOTYPE_HS[3],
    hf_inertia: float = PROTOTYPE_HF[3],
    reflected_ratio: float = PROTOTYPE_REFLECTED_RATIO,
) -> InertiaFit:
    """Solve for port inertias from the per-mode reflected inertias.

    Unknowns ``I_o``, ``a = R1^2 I_1``, ``c = R2^2 I_2`` satisfy::

        I_o + c = hf_inertia
        I_o + a = hs_inertia
        c       = reflected_ratio * a
    """
    A = np.array([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, -reflected_ratio, 1.0]])
    I_o, a, c = np.linalg.solve(A, [hf_inertia, hs_inertia, 0.0])
    if I_o <= 0 or a <= 0 or c <= 0:
        raise ParameterError(
            "reflected inertias are incompatible with the requested ratio",
            ("I_o", "I_1", "I_2"),
        )
    return InertiaFit(I_o=float(I_o), I_1=float(a / R1**2), I_2=float(c / R2**2))


def fitted_prototype_params() -> ActuatorParams:
    """Build the default parameter set from the prototype figures."""
    R1, tau_hs, rpm_hs, _ = PROTOTYPE_HS
    R2, tau_hf, rpm_hf, _ = PROTOTYPE_HF
    fit = fit_inertias()
    return ActuatorParams(
        R1=R1,
        R2=R2,
        **fit.as_dict(),
        **DEFAULT_DAMPING,
        # output torque limits pushed through R1 tau_1 = R2 tau_2 = -tau_o
        tau1_max=tau_hs / R1,
        tau2_max=tau_hf / R2,
        w_o_max_hs=rpm_hs * RPM,
        w_o_max_hf=rpm_hf * RPM,
        brake_delay=DEFAULT_BRAKE_DELAY,
    )


# --- INI parameter file ----------------------------------------------------


def params_from_section(section, *, base: ActuatorParams | None = None) -> ActuatorParams:
    """Build parameters from a mapping of ``key -> text``.

    Missing keys are taken from ``base`` (the shipped defaults when omitted);
    unknown keys raise.
    """
    values = (base or ActuatorParams.default()).to_dict()
    for key, raw in section.items():
        if key not in PARAM_KEYS:
            raise ParameterError(f"unknown actuator key {key!r}", (key,))
        try:
            values[key] = float(raw)
        except (TypeError, ValueError):
            raise ParameterError(f"{key}: cannot parse {raw!r} as a number", (key,)) from None
    return ActuatorParams(**values)


def loads_params(text: str) -> ActuatorParams:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    if not cp.has_section("actuator"):
        raise ParameterError("missing [actuator] section")
    section = dict(cp.items("actuator"))
    missing = [k for k in PARAM_KEYS if k not in section]
    if missing:
        raise ParameterError(f"missing actuator keys: {', '.join(missing)}", tuple(missing))
    return ActuatorParams(**{k: float(section[k]) for k in PARAM_KEYS})


def load_params(path: str | Path) -> ActuatorParams:
    return loads_params(Path(path).read_text(encoding="utf-8"))


def dumps_params(p: ActuatorParams) -> str:
    buf = io.StringIO()
    buf.write("[actuator]\n")
    for key in PARAM_KEYS:
        buf.write(f"{key} = {getattr(p, key)!r}\n")
    return buf.getvalue()


def save_params(p: ActuatorParams, path: str | Path) -> None:
    Path(path).write_text(dumps_params(p), encoding="utf-8")
