"""Problem configuration: parsing, canonical form, and object construction.

Configs are plain INI-style text with named sections and key=value entries.
Matrices use ';'-separated rows of whitespace-separated decimals.  The
source strings of tau, eta, epsilon and the spec boxes are preserved
verbatim so that artifact headers (and the canonical form) reproduce them
exactly; eta may be the literal "auto" to take the largest value passing
the precision condition.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .lattice import Box, Lattice
from .synthesis import ControllerMeta
from .system import (
    LyapunovCertificate,
    ModeDynamics,
    PowerKInf,
    SamplingParams,
    SwitchedSystem,
    max_eta,
)

_DEFAULT_SUBSTEPS = 64


@dataclass(eq=False)
class ProblemConfig:
    system: SwitchedSystem
    certificate: LyapunovCertificate
    tau: float
    eta: float | None  # None = "auto"
    epsilon: float
    kind: str  # "safety" | "reach"
    ys: Box
    yt: Box | None
    substeps: int
    threads: int
    seed: int
    constants: dict = field(default_factory=dict)
    strings: dict = field(default_factory=dict)  # exact source strings

    @property
    def n(self) -> int:
        return self.system.n

    def resolve_eta(self) -> tuple[float, str]:
        """(eta value, exact header string); computes the maximal eta on "auto"."""
        if self.eta is not None:
            return self.eta, self.strings["eta"]
        value = max_eta(self.certificate, self.tau, self.epsilon)
        return value, repr(value)

    def params(self) -> SamplingParams:
        eta, _ = self.resolve_eta()
        return SamplingParams(tau=self.tau, eta=eta, epsilon=self.epsilon)

    def lattice(self) -> Lattice:
        eta, _ = self.resolve_eta()
        return Lattice(self.n, eta)

    def meta(self) -> ControllerMeta:
        _, eta_str = self.resolve_eta()
        return ControllerMeta(
            tau=self.strings["tau"],
            eta=eta_str,
            epsilon=self.strings["epsilon"],
            ys=tuple(self.strings["ys"].split()),
            yt=tuple(self.strings["yt"].split()) if self.yt is not None else None,
        )


def _floats(text: str, what: str) -> list:
    try:
        return [float(tok) for tok in text.split()]
    except ValueError:
        raise ConfigError(f"bad number in {what}: {text!r}") from None


def _matrix(text: str, what: str) -> np.ndarray:
    rows = [_floats(row, what) for row in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"ragged matrix in {what}")
    return np.array(rows)


def _box(text: str, n: int, what: str) -> Box:
    vals = _floats(text, what)
    if len(vals) != 2 * n:
        raise ConfigError(f"{what} needs {2 * n} numbers (lo hi per axis)")
    try:
        return Box(vals[0::2], vals[1::2])
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {exc}") from None


def _kinf(text: str, what: str) -> PowerKInf:
    vals = _floats(text, what)
    if len(vals) != 2:
        raise ConfigError(f"{what} needs two numbers (coefficient exponent)")
    try:
        return PowerKInf(c=vals[0], e=vals[1])
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {exc}") from None


def parse_config(text: str) -> ProblemConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable config: {exc}") from None

    def need(section: str, key: str) -> str:
        try:
            return cp.get(section, key).strip()
        except (configparser.NoSectionError, configparser.NoOptionError):
            raise ConfigError(f"missing [{section}] {key}") from None

    try:
        n = int(need("system", "n"))
        n_modes = int(need("system", "modes"))
    except ValueError as exc:
        raise ConfigError(f"bad [system] counts: {exc}") from None
    if n < 1 or n_modes < 1:
        raise ConfigError("system needs n >= 1 and modes >= 1")

    modes = []
    for p in range(n_modes):
        A = _matrix(need("system", f"A{p}"), f"A{p}")
        b = np.array(_floats(need("system", f"b{p}"), f"b{p}"))
        if A.shape != (n, n) or b.shape != (n,):
            raise ConfigError(f"mode {p} dimensions do not match n={n}")
        modes.append(ModeDynamics.affine(A, b))
    system = SwitchedSystem(tuple(modes))

    M = _matrix(need("certificate", "M"), "M")
    if M.shape != (n, n):
        raise ConfigError("certificate M dimensions do not match n")
    try:
        kappa = float(need("certificate", "kappa"))
    except ValueError:
        raise ConfigError("bad kappa") from None
    try:
        certificate = LyapunovCertificate(
            M=M,
            alpha_lo=_kinf(need("certificate", "alpha_lo"), "alpha_lo"),
            alpha_hi=_kinf(need("certificate", "alpha_hi"), "alpha_hi"),
            gamma=_kinf(need("certificate", "gamma"), "gamma"),
            kappa=kappa,
        )
    except ValueError as exc:
        raise ConfigError(f"bad certificate: {exc}") from None

    tau_s = need("params", "tau")
    eta_s = need("params", "eta")
    eps_s = need("params", "epsilon")
    try:
        tau = float(tau_s)
        epsilon = float(eps_s)
        eta = None if eta_s == "auto" else float(eta_s)
    except ValueError as exc:
        raise ConfigError(f"bad [params]: {exc}") from None
    if tau <= 0 or epsilon <= 0 or (eta is not None and not 0 < eta < epsilon):
        raise ConfigError("need tau > 0 and epsilon > eta > 0")

    kind = need("spec", "kind")
    if kind not in ("safety", "reach"):
        raise ConfigError(f"spec kind must be safety or reach, got {kind!r}")
    ys_s = need("spec", "ys")
    ys = _box(ys_s, n, "ys")
    yt = None
    yt_s = None
    if kind == "reach":
        yt_s = need("spec", "yt")
        yt = _box(yt_s, n, "yt")
        if np.any(yt.lo < ys.lo) or np.any(yt.hi > ys.hi):
            raise ConfigError("target box must lie inside the safe box")

    def opt(section: str, key: str, default: int) -> int:
        if cp.has_option(section, key):
            try:
                return int(cp.get(section, key))
            except ValueError:
                raise ConfigError(f"bad [{section}] {key}") from None
        return default

    substeps = opt("runtime", "substeps", _DEFAULT_SUBSTEPS)
    threads = opt("runtime", "threads", 1)
    seed = opt("runtime", "seed", 0)
    if substeps < 1 or threads < 1:
        raise ConfigError("substeps and threads must be >= 1")

    constants = {}
    if cp.has_section("constants"):
        for key, val in cp.items("constants"):
            try:
                constants[key] = float(val)
            except ValueError:
                raise ConfigError(f"bad constant {key}") from None

    strings = {"tau": tau_s, "eta": eta_s, "epsilon": eps_s, "ys": ys_s}
    if yt_s is not None:
        strings["yt"] = yt_s

    return ProblemConfig(
        system=system,
        certificate=certificate,
        tau=tau,
        eta=eta,
        epsilon=epsilon,
        kind=kind,
        ys=ys,
        yt=yt,
        substeps=substeps,
        threads=threads,
        seed=seed,
        constants=constants,
        strings=strings,
    )


def load_config(path) -> ProblemConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


def _fmt_matrix(M: np.ndarray) -> str:
    return " ; ".join(" ".join(repr(float(v)) for v in row) for row in M)


def canonical_text(cfg: ProblemConfig) -> str:
    """Stable rendering of a config; parse(canonical_text(c)) == c up to floats.

    Source strings of tau/eta/epsilon/boxes are kept verbatim; derived
    entries use repr(float), which round-trips exactly.
    """
    out = io.StringIO()
    out.write("[system]\n")
    out.write(f"n = {cfg.n}\n")
    out.write(f"modes = {cfg.system.n_modes}\n")
    for p, mode in enumerate(cfg.system.modes):
        out.write(f"A{p} = {_fmt_matrix(mode.A)}\n")
        out.write(f"b{p} = " + " ".join(repr(float(v)) for v in mode.b) + "\n")
    cert = cfg.certificate
    out.write("\n[certificate]\n")
    out.write(f"M = {_fmt_matrix(cert.M)}\n")
    for name in ("alpha_lo", "alpha_hi", "gamma"):
        k = getattr(cert, name)
        out.write(f"{name} = {k.c!r} {k.e!r}\n")
    out.write(f"kappa = {cert.kappa!r}\n")
    out.write("\n[params]\n")
    out.write(f"tau = {cfg.strings['tau']}\n")
    out.write(f"eta = {cfg.strings['eta']}\n")
    out.write(f"epsilon = {cfg.strings['epsilon']}\n")
    out.write("\n[spec]\n")
    out.write(f"kind = {cfg.kind}\n")
    out.write(f"ys = {cfg.strings['ys']}\n")
    if cfg.yt is not None:
        out.write(f"yt = {cfg.strings['yt']}\n")
    out.write("\n[runtime]\n")
    out.write(f"substeps = {cfg.substeps}\n")
    out.write(f"threads = {cfg.threads}\n")
    out.write(f"seed = {cfg.seed}\n")
    if cfg.constants:
        out.write("\n[constants]\n")
        for key in sorted(cfg.constants):
            out.write(f"{key} = {cfg.constants[key]!r}\n")
    return out.getvalue()
