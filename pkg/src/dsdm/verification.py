"""Independent oracles and seeded property checks for the actuator model.

The oracles never touch :meth:`ActuatorParams.mass_matrix` or the jump-map
code.  They rebuild the brake-open model from the differential constraint
alone (port speeds ``J w``, kinetic energy ``1/2 (Jw)^T M (Jw)``, power
``tau_port . (J w)``) and solve every impact as a constrained minimisation
through its KKT system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import model
from .model import HybridState, Mode, TorqueInput
from .params import ActuatorParams
from .simulator import rk4_step

# --- oracles ----------------------------------------------------------------------


def port_jacobian(p: ActuatorParams) -> np.ndarray:
    """Map ``[w_o, w_1]`` to port speeds ``[w_o, w_1, w_2]``."""
    return np.array([[1.0, 0.0], [0.0, 1.0], [p.R2, -p.R2 / p.R1]])


def lagrangian_matrices(p: ActuatorParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    J = port_jacobian(p)
    H = J.T @ np.diag([p.I_o, p.I_1, p.I_2]) @ J
    D = J.T @ np.diag([p.b_o, p.b_1, p.b_2]) @ J
    # tau = [tau_1, tau_2, tau_o] acts on ports [1, 2, o]
    to_ports = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    B = J.T @ to_ports
    return H, D, B


def oracle_dynamics_hs(p: ActuatorParams, w: np.ndarray, tau: np.ndarray) -> np.ndarray:
    H, D, B = lagrangian_matrices(p)
    return np.linalg.solve(H, B @ tau - D @ w)


def constrained_impact(
    H: np.ndarray, w_minus: np.ndarray, impulse: np.ndarray, lock_w1: bool
) -> np.ndarray:
    """Post-impact velocity minimising ``1/2 dw^T H dw - dw . impulse``.

    With ``lock_w1`` the minimisation is subject to ``w_1+ = 0``.
    """
    if not lock_w1:
        K, rhs = H, impulse
    else:
        G = np.array([[0.0, 1.0]])
        K = np.block([[H, G.T], [G, np.zeros((1, 1))]])
        rhs = np.concatenate([impulse, -G @ w_minus])
    sol = np.linalg.solve(K, rhs)
    return w_minus + sol[:2]


def oracle_downshift(p, w_minus):
    H, _, _ = lagrangian_matrices(p)
    return constrained_impact(H, np.asarray(w_minus, float), np.zeros(2), lock_w1=True)


def oracle_impact_hs(p, w_minus, p_o):
    H, _, _ = lagrangian_matrices(p)
    return constrained_impact(H, np.asarray(w_minus, float), np.array([p_o, 0.0]), lock_w1=False)


def oracle_impact_hf(p, w_minus, p_o):
    H, _, _ = lagrangian_matrices(p)
    return constrained_impact(H, np.asarray(w_minus, float), np.array([p_o, 0.0]), lock_w1=True)


# --- random instances --------------------------------------------------------------


def _log_uniform(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def random_params(rng: np.random.Generator) -> ActuatorParams:
    R1 = rng.uniform(5.0, 50.0)
    return ActuatorParams(
        R1=R1,
        R2=R1 * rng.uniform(3.0, 40.0),
        I_o=_log_uniform(rng, 1e-4, 1e-1),
        I_1=_log_uniform(rng, 1e-7, 1e-5),
        I_2=_log_uniform(rng, 1e-7, 1e-5),
        b_o=rng.uniform(0.0, 0.05),
        b_1=_log_uniform(rng, 1e-8, 1e-5),
        b_2=_log_uniform(rng, 1e-8, 1e-5),
    )


def random_hs_state(rng: np.random.Generator) -> HybridState:
    return HybridState(Mode.HS, rng.uniform(-1, 1), rng.uniform(-20, 20), rng.uniform(-500, 500))


def random_impulse(rng: np.random.Generator) -> float:
    return float(rng.choice([-1.0, 1.0]) * _log_uniform(rng, 1e-3, 1.0))


# --- property checks ---------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    cases: int
    worst: float
    tolerance: float
    failure: Optional[dict] = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failure is None

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.cases} cases, worst {self.worst:.3e} (tol {self.tolerance:.0e})"


def _scale(*vs) -> float:
    return max(1.0, *(float(np.max(np.abs(v))) for v in vs))


def check_momentum_identity(seed=0, cases=1000, tol=1e-9) -> CheckResult:
    """``H (w+ - w-) = [p_o, 0]`` for the brake-open impact map."""
    rng = np.random.default_rng(seed)
    res = CheckResult("momentum identity (HS impact)", cases, 0.0, tol)
    for i in range(cases):
        p, s, p_o = random_params(rng), random_hs_state(rng), random_impulse(rng)
        s2 = model.jump_impact_hs(p, s, p_o)
        r = p.mass_matrix() @ (s2.w - s.w) - np.array([p_o, 0.0])
        err = float(np.max(np.abs(r))) / abs(p_o)
        res.worst = max(res.worst, err)
        if err > tol and res.failure is None:
            res.failure = {"case": i, "params": p.to_dict(), "state": s, "p_o": p_o, "err": err}
    return res


def check_oracle_equivalence(seed=0, cases=1000, tol=1e-9) -> CheckResult:
    """Model matrices, down-shift and both impact maps against the oracles."""
    rng = np.random.default_rng(seed)
    res = CheckResult("oracle equivalence (dynamics, down-shift, impacts)", cases, 0.0, tol)
    for i in range(cases):
        p, s, p_o = random_params(rng), random_hs_state(rng), random_impulse(rng)
        tau = np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.03, 0.03), rng.uniform(-5, 5)])
        sf = HybridState(Mode.HF, s.theta_o, s.w_o, 0.0)
        pairs = {
            "dynamics_hs": (
                model.dynamics_hs(p, s, TorqueInput(*tau)),
                oracle_dynamics_hs(p, s.w, tau),
            ),
            "downshift": (model.jump_downshift(p, s).w, oracle_downshift(p, s.w)),
            "impact_hs": (model.jump_impact_hs(p, s, p_o).w, oracle_impact_hs(p, s.w, p_o)),
            "impact_hf": (model.jump_impact_hf(p, sf, p_o).w, oracle_impact_hf(p, sf.w, p_o)),
        }
        for which, (got, want) in pairs.items():
            err = float(np.max(np.abs(got - want))) / _scale(want, s.w)
            res.worst = max(res.worst, err)
            if err > tol and res.failure is None:
                res.failure = {
                    "case": i,
                    "map": which,
                    "params": p.to_dict(),
                    "state": s,
                    "p_o": p_o,
                    "got": got.tolist(),
                    "oracle": want.tolist(),
                }
    return res


def check_downshift_dissipation(seed=0, cases=1000) -> CheckResult:
    """Kinetic energy strictly drops when the brake bites on a moving M1, and is kept when M1 is still."""
    rng = np.random.default_rng(seed)
    res = CheckResult("down-shift dissipativity", cases, -math.inf, 0.0)
    for i in range(cases):
        p, s = random_params(rng), random_hs_state(rng)
        if s.w_1 == 0.0:
            continue
        before = model.kinetic_energy(p, s)
        after = model.kinetic_energy(p, model.jump_downshift(p, s))
        res.worst = max(res.worst, after - before)
        if not after < before and res.failure is None:
            res.failure = {"case": i, "params": p.to_dict(), "state": s, "dE": after - before}
        still = HybridState(Mode.HS, s.theta_o, s.w_o, 0.0)
        e0 = model.kinetic_energy(p, still)
        e1 = model.kinetic_energy(p, model.jump_downshift(p, still))
        if e0 != e1 and res.failure is None:
            res.failure = {"case": i, "params": p.to_dict(), "state": still, "dE": e1 - e0}
    return res


def check_simplified_bound(seed=0, cases=1000, tol=0.01, params=None) -> CheckResult:
    """Relative gap between the full and simplified HS impact jumps, per component."""
    rng = np.random.default_rng(seed)
    p = params or ActuatorParams.default()
    res = CheckResult("simplified HS impact map deviation", cases, 0.0, tol)
    for i in range(cases):
        s, p_o = random_hs_state(rng), random_impulse(rng)
        full = model.jump_impact_hs(p, s, p_o).w - s.w
        simple = model.jump_impact_hs_simplified(p, s, p_o).w - s.w
        err = float(np.max(np.abs(full - simple) / np.abs(full)))
        res.worst = max(res.worst, err)
        if err > tol and res.failure is None:
            res.failure = {"case": i, "state": s, "p_o": p_o, "full": full, "simplified": simple}
    return res


def simulate_hs_open_loop(
    p: ActuatorParams,
    tau_d: float,
    u: Callable[[float], float],
    duration: float = 1.0,
    dt: float = 1e-4,
) -> np.ndarray:
    """Integrate the HS model from rest with ``tau_d`` on M1 plus nullspace input ``u(t)``.

    Torques are held over each step.  Returns rows ``(t, w_o, w_1)``.
    """
    n = int(round(duration / dt))
    out = np.empty((n + 1, 3))
    w = np.zeros(2)
    out[0] = (0.0, 0.0, 0.0)
    for k in range(n):
        t = k * dt
        n1, n2 = model.nullspace_projection(p, u(t))
        tau = TorqueInput(tau_d + n1, n2, 0.0)

        def f(y):
            return model.dynamics_hs(p, HybridState(Mode.HS, 0.0, y[0], y[1]), tau)

        w = rk4_step(f, w, dt)
        out[k + 1] = (t + dt, w[0], w[1])
    return out


def check_nullspace_invariance(seed=0, cases=2, tol=1e-6, duration=1.0, dt=1e-4) -> CheckResult:
    """Output speed is blind to the nullspace input when motor damping is zero."""
    rng = np.random.default_rng(seed)
    p = ActuatorParams.default().with_(b_1=0.0, b_2=0.0)
    res = CheckResult("nullspace invariance (w_o under nullspace input)", cases, 0.0, tol)
    base = simulate_hs_open_loop(p, 0.02, lambda t: 0.0, duration, dt)
    for i in range(cases):
        amp, freq, bias = rng.uniform(50, 500), rng.uniform(0.5, 10), rng.uniform(-50, 50)
        u = lambda t: bias + amp * math.sin(2 * math.pi * freq * t)
        run = simulate_hs_open_loop(p, 0.02, u, duration, dt)
        dev_o = float(np.max(np.abs(run[:, 1] - base[:, 1])))
        dev_1 = float(np.max(np.abs(run[:, 2] - base[:, 2])))
        res.worst = max(res.worst, dev_o)
        res.notes.append(f"case {i}: max |dw_o| {dev_o:.2e}, max |dw_1| {dev_1:.2e}")
        if (dev_o > tol or dev_1 <= 1.0) and res.failure is None:
            res.failure = {"case": i, "amp": amp, "freq": freq, "bias": bias, "dev_w_o": dev_o, "dev_w_1": dev_1}
    return res


def run_all(seed=0, cases=1000) -> list[CheckResult]:
    return [
        check_momentum_identity(seed, cases),
        check_oracle_equivalence(seed, cases),
        check_downshift_dissipation(seed, cases),
        check_simplified_bound(seed, cases),
        check_nullspace_invariance(seed, min(cases, 2)),
    ]
