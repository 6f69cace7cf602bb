"""
Closed-form unidirectional channel flows of the homogenized suspension.

With ``H2 = K`` constant across the channel ``0 <= x2 <= 1`` the reduced
equations are

    -dH1/dx2 = Rm mu22 K v1
    (nu_s / 2) v1'' + beta_s K dH1/dx2 = C_p

so that ``v1'' - lam^2 v1 = 2 C_p / nu_s`` with
``lam = K sqrt(2 Rm mu22 beta_s / nu_s)``. Poiseuille flow has
``v1(0) = v1(1) = 0``; Couette flow has ``v1(0) = 0`` and ``v1'(1) = gamma``.
``H1(0) = K1`` in both cases.

Every formula is evaluated in a form free of cancellation: power series
in ``lam^2`` below ``lam = 1`` and exponentials scaled by their largest
term above, so nothing overflows for ``lam <= LAMBDA_MAX``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

LAMBDA_MAX = 700.0
LAMBDA_SMALL = 1e-6
_SERIES_BELOW = 1.0
_SERIES_TERMS = 24


@dataclass(frozen=True)
class FlowConfig:
    """Inputs of the channel solutions.

    Parameters
    ----------
    C_p : float
        Constant streamwise pressure gradient.
    gamma : float
        Shear rate imposed at the top plate (Couette only).
    K : float
        Transverse field ``H2``.
    K1 : float
        Streamwise field ``H1`` at the bottom plate.
    R_m : float
        Magnetic Reynolds number.
    nu_s, beta_s, mu_hs22 : float
        Effective shear viscosity, magnetic shear coefficient and the
        particle permeability component ``mu^HS_22``.
    n_samples : int
        Number of equally spaced samples on ``[0, 1]``.
    """

    C_p: float = -1.0
    gamma: float = 1.0
    K: float = 100.0
    K1: float = 1e-2
    R_m: float = 1e-2
    nu_s: float = 4.0
    beta_s: float = 4.0
    mu_hs22: float = 0.0
    n_samples: int = 201

    def __post_init__(self):
        if not self.nu_s > 0:
            raise ValueError(f"nu_s must be positive, got {self.nu_s!r}")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.K < 0 or self.K1 < 0:
            raise ValueError("K and K1 must be nonnegative")

    @property
    def coupling(self) -> float:
        """``Rm mu22 K``, the factor linking ``v1`` to ``-dH1/dx2``."""
        return self.R_m * self.mu_hs22 * self.K


@dataclass
class Profile:
    """A sampled channel solution."""

    flow: str
    x2: np.ndarray
    v1: np.ndarray
    H1: np.ndarray
    lam: float

    @property
    def max_velocity(self) -> float:
        return float(np.max(np.abs(self.v1)))


def lambda_param(cfg: FlowConfig) -> float:
    """``lam = K sqrt(2 Rm mu22 beta_s / nu_s)``."""
    for name in ("R_m", "mu_hs22", "beta_s"):
        if getattr(cfg, name) < 0:
            raise ValueError(f"negative radicand: {name} = {getattr(cfg, name)!r} < 0")
    return cfg.K * math.sqrt(2.0 * cfg.R_m * cfg.mu_hs22 * cfg.beta_s / cfg.nu_s)


def with_lambda(cfg: FlowConfig, lam: float) -> FlowConfig:
    """Copy of ``cfg`` with ``K`` chosen so that :func:`lambda_param` gives ``lam``."""
    rate = math.sqrt(2.0 * cfg.R_m * cfg.mu_hs22 * cfg.beta_s / cfg.nu_s)
    if rate == 0:
        if lam == 0:
            return cfg
        raise ValueError("lam > 0 needs positive R_m, mu_hs22 and beta_s")
    return replace(cfg, K=lam / rate)


def _check_lambda(lam: float) -> None:
    if lam > LAMBDA_MAX:
        raise OverflowError(f"lam = {lam:g} exceeds {LAMBDA_MAX:g}")


def _grid(cfg: FlowConfig, x2) -> np.ndarray:
    if x2 is None:
        return np.linspace(0.0, 1.0, cfg.n_samples)
    return np.asarray(x2, float)


def _series(lam, coeff):
    """``sum_{k>=1} lam^(2k-2) coeff(k) / (2k)!``."""
    total = 0.0
    for k in range(_SERIES_TERMS, 0, -1):
        total = total + lam ** (2 * k - 2) * coeff(k) / math.factorial(2 * k)
    return total


# ----------------------------------------------------------- Poiseuille

def _poiseuille_shape(x, lam):
    """``(h - 1) / lam^2`` and its integral from 0, ``h = cosh(lam (x - 1/2)) / cosh(lam/2)``."""
    t = x - 0.5
    c = 0.5 * lam
    if lam < LAMBDA_SMALL:
        return 0.5 * (t * t - 0.25), x ** 3 / 6.0 - x ** 2 / 4.0
    if lam < _SERIES_BELOW:
        shape = _series(lam, lambda k: t ** (2 * k) - 0.25 ** k) / math.cosh(c)
        integ = _series(lam, lambda k: (t ** (2 * k + 1) + 0.5 ** (2 * k + 1)) / (2 * k + 1)
                        - x * 0.25 ** k) / math.cosh(c)
        return shape, integ
    d = 1.0 + math.exp(-2.0 * c)
    # cosh(lam t) / cosh(c) and sinh(lam t) / cosh(c) with |lam t| <= c
    ch = (np.exp(lam * t - c) + np.exp(-lam * t - c)) / d
    sh = (np.exp(lam * t - c) - np.exp(-lam * t - c)) / d
    shape = (ch - 1.0) / lam ** 2
    integ = ((sh + math.tanh(c)) / lam - x) / lam ** 2
    return shape, integ


def poiseuille_fields(cfg: FlowConfig, x2) -> tuple[np.ndarray, np.ndarray]:
    """``(v1, H1)`` of pressure-driven flow between fixed plates at ``x2``."""
    lam = lambda_param(cfg)
    _check_lambda(lam)
    x = np.asarray(x2, float)
    q = 2.0 * cfg.C_p / cfg.nu_s
    shape, integ = _poiseuille_shape(x, lam)
    return q * shape, cfg.K1 - cfg.coupling * q * integ


def poiseuille(cfg: FlowConfig, x2=None) -> Profile:
    """Pressure-driven channel flow sampled on ``x2`` (default: ``cfg.n_samples`` points)."""
    x = _grid(cfg, x2)
    v, H = poiseuille_fields(cfg, x)
    v[(x == 0.0) | (x == 1.0)] = 0.0
    return Profile("poiseuille", x, v, H, lambda_param(cfg))


# -------------------------------------------------------------- Couette

def _couette_shapes(x, lam):
    """Unit-shear and unit-pressure velocity shapes and their integrals from 0.

    ``v1 = gamma * s + (2 C_p / nu_s) * p`` with
    ``s = sinh(lam x) / (lam cosh lam)`` and
    ``p = (cosh(lam (1 - x)) - cosh lam) / (lam^2 cosh lam)``.
    """
    if lam < LAMBDA_SMALL:
        return x, 0.5 * x * x, 0.5 * x * x - x, x ** 3 / 6.0 - 0.5 * x * x
    if lam < _SERIES_BELOW:
        ch = math.cosh(lam)
        s = _series(lam, lambda k: 2 * k * x ** (2 * k - 1)) / ch
        s_int = _series(lam, lambda k: x ** (2 * k)) / ch
        p = _series(lam, lambda k: (1.0 - x) ** (2 * k) - 1.0) / ch
        p_int = _series(lam, lambda k: (1.0 - (1.0 - x) ** (2 * k + 1)) / (2 * k + 1) - x) / ch
        return s, s_int, p, p_int
    d = 1.0 + math.exp(-2.0 * lam)
    e_minus = np.exp(lam * (x - 1.0))
    e_plus = np.exp(-lam * (x + 1.0))
    s = (e_minus - e_plus) / d / lam
    s_int = ((e_minus + e_plus) / d - 2.0 * math.exp(-lam) / d) / lam ** 2
    f_minus = np.exp(-lam * x)
    f_plus = np.exp(lam * (x - 2.0))
    p = ((f_minus + f_plus) / d - 1.0) / lam ** 2
    p_int = ((math.tanh(lam) - (f_minus - f_plus) / d) / lam - x) / lam ** 2
    return s, s_int, p, p_int


def couette_fields(cfg: FlowConfig, x2) -> tuple[np.ndarray, np.ndarray]:
    """``(v1, H1)`` of shear-driven flow with the bottom plate fixed."""
    lam = lambda_param(cfg)
    _check_lambda(lam)
    x = np.asarray(x2, float)
    q = 2.0 * cfg.C_p / cfg.nu_s
    s, s_int, p, p_int = _couette_shapes(x, lam)
    v = cfg.gamma * s + q * p
    V = cfg.gamma * s_int + q * p_int
    return v, cfg.K1 - cfg.coupling * V


def couette(cfg: FlowConfig, x2=None) -> Profile:
    """Shear-driven channel flow sampled on ``x2`` (default: ``cfg.n_samples`` points)."""
    x = _grid(cfg, x2)
    v, H = couette_fields(cfg, x)
    v[x == 0.0] = 0.0
    return Profile("couette", x, v, H, lambda_param(cfg))


# --------------------------------------------------------- shear stress

def shear_stress(cfg: FlowConfig, gamma: float) -> float:
    """Shear stress at the top plate of a pure-shear Couette flow.

    ``tau = (nu_s / 2) gamma + beta_s H1(1) K``; the configured ``C_p`` is
    ignored (set to zero).
    """
    c = replace(cfg, C_p=0.0, gamma=float(gamma))
    _, H = couette_fields(c, np.array([1.0]))
    return 0.5 * cfg.nu_s * gamma + cfg.beta_s * float(H[0]) * cfg.K


def shear_curve(cfg: FlowConfig, gammas) -> list[tuple[float, float]]:
    """``(gamma, tau)`` pairs over the given shear rates."""
    return [(float(g), shear_stress(cfg, g)) for g in gammas]


# ------------------------------------------------------------ residuals

@dataclass
class ResidualReport:
    """Max-norm finite-difference residuals of the reduced equations."""

    induction: float
    momentum: float
    n_points: int

    def ok(self, tol: float = 1e-6) -> bool:
        return self.induction <= tol and self.momentum <= tol


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def reduced_system_residual(profile: Profile, cfg: FlowConfig) -> ResidualReport:
    """Residuals of the two reduced equations by central differences.

    Five-point (fourth-order) central stencils are applied at every sample
    with two neighbours on each side; the grid must be uniform.
    """
    x, v, H = profile.x2, profile.v1, profile.H1
    if len(x) < 5:
        raise ValueError("need at least 5 samples")
    h = np.diff(x)
    if np.ptp(h) > 1e-12 * h.mean():
        raise ValueError("grid must be uniform")
    h = float(h.mean())

    def stencil(f, w):
        return sum(w[j] * f[j:len(f) - 4 + j] for j in range(5))

    dH = stencil(H, _D1) / h
    d2v = stencil(v, _D2) / h ** 2
    vi = v[2:-2]
    induction = -dH - cfg.coupling * vi
    momentum = 0.5 * cfg.nu_s * d2v + cfg.beta_s * cfg.K * dH - cfg.C_p
    return ResidualReport(float(np.max(np.abs(induction))),
                          float(np.max(np.abs(momentum))), len(x))
