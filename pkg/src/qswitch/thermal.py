"""Two-room thermal benchmark: a heater that can be switched on or off.

Room temperatures T1, T2 follow

    dT1/dt = a21 (T2 - T1) + ae1 (Te - T1) + af (Tf - T1) p
    dT2/dt = a12 (T1 - T2) + ae2 (Te - T2)

with external temperature Te = 10 and heater temperature Tf applied to room
1 when the mode p is 1.  Tf is not part of the fixed benchmark parameters;
the default 50 puts the heated equilibrium well above the comfort band so
both modes are genuinely needed.  The squared Euclidean distance is an
incremental Lyapunov function with quadratic sandwich and modulus and decay
rate 0.0084.
"""

from __future__ import annotations

import numpy as np

from .config import ProblemConfig, parse_config
from .system import LyapunovCertificate, ModeDynamics, PowerKInf, SwitchedSystem

A_EXCHANGE = 5e-2  # room <-> room
A_EXT_1 = 5e-3  # room 1 <-> outside
A_EXT_2 = 3.3e-3  # room 2 <-> outside
A_HEATER = 8.3e-3  # room 1 <-> heater
T_EXT = 10.0
T_HEATER_DEFAULT = 50.0
KAPPA = 0.0084


def thermal_matrices(t_heater: float = T_HEATER_DEFAULT):
    """(A, b) pairs for heater-off (mode 0) and heater-on (mode 1)."""
    A0 = np.array(
        [
            [-(A_EXCHANGE + A_EXT_1), A_EXCHANGE],
            [A_EXCHANGE, -(A_EXCHANGE + A_EXT_2)],
        ]
    )
    b0 = np.array([A_EXT_1 * T_EXT, A_EXT_2 * T_EXT])
    A1 = np.array(
        [
            [-(A_EXCHANGE + A_EXT_1 + A_HEATER), A_EXCHANGE],
            [A_EXCHANGE, -(A_EXCHANGE + A_EXT_2)],
        ]
    )
    b1 = np.array([A_EXT_1 * T_EXT + A_HEATER * t_heater, A_EXT_2 * T_EXT])
    return (A0, b0), (A1, b1)


def thermal_system(t_heater: float = T_HEATER_DEFAULT) -> SwitchedSystem:
    (A0, b0), (A1, b1) = thermal_matrices(t_heater)
    return SwitchedSystem((ModeDynamics.affine(A0, b0), ModeDynamics.affine(A1, b1)))


def thermal_certificate() -> LyapunovCertificate:
    square = PowerKInf(c=1.0, e=2.0)
    return LyapunovCertificate(
        M=np.eye(2), alpha_lo=square, alpha_hi=square, gamma=square, kappa=KAPPA
    )


def _config_text(t_heater: float, params: str, spec: str) -> str:
    (A0, b0), (A1, b1) = thermal_matrices(t_heater)

    def mat(M):
        return " ; ".join(" ".join(repr(float(v)) for v in row) for row in M)

    def vec(v):
        return " ".join(repr(float(x)) for x in v)

    return (
        "[system]\n"
        "n = 2\n"
        "modes = 2\n"
        f"A0 = {mat(A0)}\n"
        f"b0 = {vec(b0)}\n"
        f"A1 = {mat(A1)}\n"
        f"b1 = {vec(b1)}\n"
        "\n[certificate]\n"
        "M = 1 0 ; 0 1\n"
        "alpha_lo = 1 2\n"
        "alpha_hi = 1 2\n"
        "gamma = 1 2\n"
        f"kappa = {KAPPA!r}\n"
        f"\n[params]\n{params}"
        f"\n[spec]\n{spec}"
        "\n[runtime]\n"
        "substeps = 64\n"
        "threads = 1\n"
        "seed = 0\n"
        "\n[constants]\n"
        f"Tf = {t_heater!r}\n"
    )


def safety_config_text(t_heater: float = T_HEATER_DEFAULT) -> str:
    """Keep both rooms between 20 and 22 degrees, sampling every 5 time units."""
    return _config_text(
        t_heater,
        "tau = 5\neta = 0.0014\nepsilon = 0.25\n",
        "kind = safety\nys = 20 22 20 22\n",
    )


def reach_config_text(t_heater: float = T_HEATER_DEFAULT) -> str:
    """Drive both rooms into [20, 22] while staying within [17.5, 22.5]."""
    return _config_text(
        t_heater,
        "tau = 5\neta = 0.0035\nepsilon = 0.5\n",
        "kind = reach\nys = 17.5 22.5 17.5 22.5\nyt = 20 22 20 22\n",
    )


def safety_config(t_heater: float = T_HEATER_DEFAULT) -> ProblemConfig:
    return parse_config(safety_config_text(t_heater))


def reach_config(t_heater: float = T_HEATER_DEFAULT) -> ProblemConfig:
    return parse_config(reach_config_text(t_heater))
