"""Switched dynamics, sampled-time flows, and incremental-stability certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm
from scipy.stats import qmc

from .errors import IntegrationOverflowError, NotIncrementallyStableError
from .lattice import Box


@dataclass(frozen=True, eq=False)
class ModeDynamics:
    """One mode of a switched system: dx/dt = A x + b, or a generic field f(x).

    Affine modes admit an exact time-tau step map; generic modes are
    integrated numerically (see flow_rk4).  A generic evaluator must
    broadcast over leading axes: f((..., n)) -> (..., n).
    """

    n: int
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    f: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def affine(cls, A, b) -> "ModeDynamics":
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if b.shape != (A.shape[0],):
            raise ValueError("b must be a vector matching A")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("dynamics entries must be finite")
        return cls(n=A.shape[0], A=A, b=b)

    @classmethod
    def generic(cls, n: int, f: Callable) -> "ModeDynamics":
        if n < 1:
            raise ValueError("dimension must be >= 1")
        return cls(n=n, f=f)

    @property
    def kind(self) -> str:
        return "affine" if self.f is None else "generic"

    def field(self, x) -> np.ndarray:
        """Vector field value(s) at x (shape (..., n))."""
        x = np.asarray(x, dtype=float)
        if self.f is not None:
            return np.asarray(self.f(x), dtype=float)
        return x @ self.A.T + self.b


@dataclass(frozen=True, eq=False)
class SwitchedSystem:
    """Finite list of modes sharing one state dimension; mode ids are list indices."""

    modes: tuple

    def __post_init__(self):
        modes = tuple(self.modes)
        object.__setattr__(self, "modes", modes)
        if not modes:
            raise ValueError("at least one mode required")
        if len({m.n for m in modes}) != 1:
            raise ValueError("all modes must share the state dimension")

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def n_modes(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class PowerKInf:
    """Class K-infinity function r -> c * r**e with closed-form inverse.

    Restricting to the power form keeps the precision condition evaluable
    without numeric root finding; c > 0 and e >= 1 guarantee a strictly
    increasing bijection of [0, inf) with value 0 at 0.
    """

    c: float
    e: float

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError("coefficient must be positive")
        if not (self.e >= 1 and math.isfinite(self.e)):
            raise ValueError("exponent must be >= 1")

    def __call__(self, r):
        return self.c * np.asarray(r, dtype=float) ** self.e

    def inv(self, s):
        return (np.asarray(s, dtype=float) / self.c) ** (1.0 / self.e)


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    """Quadratic incremental-stability certificate.

    V(x, y) = (x-y)^T M (x-y) with M symmetric positive definite, sandwiched
    by alpha_lo(||x-y||) <= V(x, y) <= alpha_hi(||x-y||), decaying at rate
    kappa along every mode, and with modulus gamma bounding
    |V(x1, x2) - V(y1, y2)| by gamma(||x1-y1|| + ||x2-y2||).
    """

    M: np.ndarray
    alpha_lo: PowerKInf
    alpha_hi: PowerKInf
    gamma: PowerKInf
    kappa: float

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        object.__setattr__(self, "M", M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("M must be square")
        if not np.allclose(M, M.T):
            raise ValueError("M must be symmetric")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ValueError("M must be positive definite") from None
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError("kappa must be positive")

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def V(self, x, y) -> np.ndarray:
        """Certificate value(s) at pairs (x, y), broadcasting over leading axes."""
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.einsum("...i,ij,...j->...", d, self.M, d)


@dataclass(frozen=True)
class SamplingParams:
    """Time step tau, lattice radius eta, and abstraction precision epsilon."""

    tau: float
    eta: float
    epsilon: float

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive")
        if not (0 < self.eta < self.epsilon):
            raise ValueError("need epsilon > eta > 0")


def discretize_affine(mode: ModeDynamics, tau: float):
    """Exact step map (Ad, bd) with x(tau) = Ad x(0) + bd for an affine mode.

    Computed from the matrix exponential of the (n+1)x(n+1) augmented block
    [[A, b], [0, 0]] * tau, which integrates the constant term uniformly even
    when A is singular.
    """
    if mode.kind != "affine":
        raise ValueError("exact step map requires an affine mode")
    if not tau > 0:
        raise ValueError("tau must be positive")
    n = mode.n
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = mode.A
    aug[:n, n] = mode.b
    E = expm(aug * tau)
    return E[:n, :n], E[:n, n]


def flow_exact(mode: ModeDynamics, x, tau: float) -> np.ndarray:
    """Exact time-tau successor(s) of x under an affine mode."""
    Ad, bd = discretize_affine(mode, tau)
    out = np.asarray(x, dtype=float) @ Ad.T + bd
    if not np.isfinite(out).all():
        raise IntegrationOverflowError("affine flow produced a non-finite state")
    return out


def flow_rk4(mode: ModeDynamics, x, tau: float, substeps: int) -> np.ndarray:
    """Classical fixed-step 4th-order integration over `substeps` equal steps."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x = np.asarray(x, dtype=float)
    h = tau / substeps
    for _ in range(substeps):
        k1 = mode.field(x)
        k2 = mode.field(x + 0.5 * h * k1)
        k3 = mode.field(x + 0.5 * h * k2)
        k4 = mode.field(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x).all():
            raise IntegrationOverflowError("RK4 step produced a non-finite state")
    return x


def precision_threshold(cert: LyapunovCertificate, tau: float, eta: float) -> float:
    """Smallest admissible precision for (tau, eta):

    eta + alpha_lo^{-1}((gamma(2 eta) + gamma(eta) e^{-kappa tau}) / (1 - e^{-kappa tau})).
    """
    decay = math.exp(-cert.kappa * tau)
    num = float(cert.gamma(2.0 * eta)) + float(cert.gamma(eta)) * decay
    return eta + float(cert.alpha_lo.inv(num / (1.0 - decay)))


def check_precision(cert: LyapunovCertificate, params: SamplingParams) -> bool:
    """True iff epsilon meets the precision threshold for (tau, eta)."""
    return params.epsilon >= precision_threshold(cert, params.tau, params.eta)


def max_eta(cert: LyapunovCertificate, tau: float, epsilon: float, rtol: float = 1e-9) -> float:
    """Largest eta passing check_precision at (tau, epsilon), by bisection.

    The threshold is monotone increasing in eta, so [0, epsilon] brackets the
    crossing (the threshold already exceeds eta itself).  Returns 0 for
    epsilon <= 0.
    """
    if epsilon <= 0:
        return 0.0
    lo, hi = 0.0, epsilon
    for _ in range(200):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if precision_threshold(cert, tau, mid) <= epsilon:
            lo = mid
        else:
            hi = mid
    return lo


def estimate_kappa(sys: SwitchedSystem, cert: Optional[LyapunovCertificate] = None) -> float:
    """Tightest decay rate for V = ||x - y||^2 over all affine modes.

    d/dt ||x-y||^2 = 2 (x-y)^T A_p (x-y) <= 2 lambda_max(sym(A_p)) ||x-y||^2,
    so the sharpest common rate is -2 max_p lambda_max((A_p + A_p^T)/2).
    Intended as a validation aid; synthesis uses the certificate's own kappa.
    """
    if cert is not None and not np.array_equal(cert.M, np.eye(cert.n)):
        raise ValueError("kappa estimate assumes M = I")
    worst = -math.inf
    for mode in sys.modes:
        if mode.kind != "affine":
            raise ValueError("kappa estimate requires affine modes")
        sym = 0.5 * (mode.A + mode.A.T)
        worst = max(worst, float(np.linalg.eigvalsh(sym).max()))
    kappa = -2.0 * worst
    if kappa <= 0:
        raise NotIncrementallyStableError(
            f"largest symmetric-part eigenvalue {worst:.6g} is not negative"
        )
    return kappa


@dataclass(frozen=True)
class CheckResult:
    """One sampled bound check; worst_margin > tol means the bound failed."""

    ok: bool
    worst_margin: float


@dataclass(frozen=True)
class CertificateReport:
    sandwich_lower: CheckResult
    sandwich_upper: CheckResult
    gamma_bound: CheckResult
    samples: int

    @property
    def ok(self) -> bool:
        return self.sandwich_lower.ok and self.sandwich_upper.ok and self.gamma_bound.ok


def validate_certificate(
    sys: SwitchedSystem,
    cert: LyapunovCertificate,
    box: Box,
    samples: int,
    tol: float = 1e-9,
) -> CertificateReport:
    """Sample the box with a deterministic low-discrepancy sequence and check
    the sandwich bounds and the gamma modulus.

    Margins are the worst observed violation (positive) or the closest
    approach (negative); a check passes when its worst margin is <= tol.
    Failures are reported, never raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = sys.n
    u = qmc.Halton(d=4 * n, scramble=False).random(samples)
    pts = box.lo + u.reshape(samples, 4, n) * (box.hi - box.lo)
    x1, x2, y1, y2 = pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]

    r = np.linalg.norm(x1 - x2, axis=-1)
    v = cert.V(x1, x2)
    lower = float((cert.alpha_lo(r) - v).max())
    upper = float((v - cert.alpha_hi(r)).max())

    dv = np.abs(v - cert.V(y1, y2))
    arg = np.linalg.norm(x1 - y1, axis=-1) + np.linalg.norm(x2 - y2, axis=-1)
    gam = float((dv - cert.gamma(arg)).max())

    return CertificateReport(
        sandwich_lower=CheckResult(lower <= tol, lower),
        sandwich_upper=CheckResult(upper <= tol, upper),
        gamma_bound=CheckResult(gam <= tol, gam),
        samples=samples,
    )
