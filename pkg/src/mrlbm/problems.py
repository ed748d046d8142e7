"""Test problem catalogue: exact solutions, quadratures, scheme builders.

Four scalar problems drive the experiment harness: 1D linear advection
(D1Q2), 1D linear advection-diffusion (D1Q3), 1D viscous Burgers (D1Q3, two
diffusion regimes) and 2D linear advection-diffusion (D2Q9).  Every exact
solution starts from the unit-mass Gaussian bump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import Domain
from .schemes import SchemeSpec, VelocitySet

__all__ = [
    "HermiteRule",
    "QuadratureRule",
    "gauss_hermite",
    "gauss_legendre",
    "advection_exact",
    "advdiff_exact",
    "advdiff_exact_2d",
    "burgers_exact",
    "ProblemSpec",
    "get_problem",
    "d1q2_advection",
    "d1q3_advdiff",
    "d1q3_burgers",
    "d2q9_advdiff",
]


@dataclass(frozen=True)
class HermiteRule:
    """Gauss-Hermite nodes/weights for integrals with weight exp(-eta^2)."""

    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights on the reference interval [-1, 1] (weights sum to 2)."""

    nodes: np.ndarray
    weights: np.ndarray


def gauss_hermite(n: int) -> HermiteRule:
    if n < 1:
        raise ValueError("need n >= 1")
    nodes, weights = np.polynomial.hermite.hermgauss(n)
    return HermiteRule(nodes, weights)


def gauss_legendre(n: int) -> QuadratureRule:
    if n < 1:
        raise ValueError("need n >= 1")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(nodes, weights)


# --- exact solutions ---------------------------------------------------------

def advection_exact(t, x, V=0.5, nu=0.005, t0=1.0):
    """Transported Gaussian of frozen width: (4 pi nu t0)^-1/2 exp(-|x-Vt|^2/(4 nu t0))."""
    x = np.asarray(x, dtype=float)
    return np.exp(-((x - V * t) ** 2) / (4 * nu * t0)) / math.sqrt(4 * math.pi * nu * t0)


def advdiff_exact(t, x, V=0.5, nu=0.005, t0=1.0):
    """Spreading Gaussian: width grows with t0 + t."""
    x = np.asarray(x, dtype=float)
    s = 4 * nu * (t0 + t)
    return np.exp(-((x - V * t) ** 2) / s) / math.sqrt(math.pi * s)


def advdiff_exact_2d(t, x, y, V=(0.5, 0.5), nu=0.005, t0=1.0):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = 4 * nu * (t0 + t)
    r2 = (x - V[0] * t) ** 2 + (y - V[1] * t) ** 2
    return np.exp(-r2 / s) / (math.pi * s)


def burgers_exact(t, x, nu=0.05, t0=1.0, rule: HermiteRule | None = None):
    """Viscous Burgers solution of the Gaussian bump via Gauss-Hermite sums.

    Ratio of two integrals with weight exp(-eta^2); both are evaluated with a
    shared max-exponent subtraction because exp(-erf(..)/(4 nu)) spans many
    decades at small nu.  t = 0 returns the initial Gaussian.
    """
    x = np.asarray(x, dtype=float)
    if t == 0:
        return advection_exact(0.0, x, V=0.0, nu=nu, t0=t0)
    if rule is None:
        rule = gauss_hermite(100)
    eta = rule.nodes[None, :]
    w = rule.weights[None, :]
    from scipy.special import erf

    arg = x[..., None] / math.sqrt(4 * nu * t0) - math.sqrt(t / t0) * eta
    expo = -erf(arg) / (4 * nu)
    expo -= expo.max(axis=-1, keepdims=True)
    ew = w * np.exp(expo)
    num = (eta * ew).sum(axis=-1)
    den = ew.sum(axis=-1)
    return math.sqrt(4 * nu / t) * num / den


# --- scheme builders ---------------------------------------------------------

def d1q2_advection(dx: float, lam=1.0, s=2.0, V=0.5) -> SchemeSpec:
    vel = VelocitySet(1, ((1,), (-1,)))
    M = [[1.0, 1.0], [lam, -lam]]

    def eq(cons):
        u = cons[0]
        return np.stack([u, V * u])

    return SchemeSpec(vel, lam, M, [0.0, s], 1, eq, name="d1q2-advection")


def _d1q3_matrix(lam: float):
    return [[1.0, 1.0, 1.0],
            [0.0, lam, -lam],
            [0.0, lam * lam / 2, lam * lam / 2]]


def d1q3_advdiff(dx: float, lam=1.0, V=0.5, nu=0.005, kappa=0.5, s_w=1.0) -> SchemeSpec:
    vel = VelocitySet(1, ((0,), (1,), (-1,)))
    s_v = 1.0 / (0.5 + lam * nu / (dx * (2 * kappa - V * V)))
    if not 0 < s_v <= 2:
        raise ValueError(f"relaxation rate s_v={s_v} outside (0, 2]")

    def eq(cons):
        u = cons[0]
        return np.stack([u, V * u, kappa * u])

    return SchemeSpec(vel, lam, _d1q3_matrix(lam), [0.0, s_v, s_w], 1, eq,
                      name="d1q3-advdiff")


def d1q3_burgers(dx: float, lam=4.0, nu=0.05, kappa=4.0, s_w=1.0) -> SchemeSpec:
    vel = VelocitySet(1, ((0,), (1,), (-1,)))
    s_v = 1.0 / (0.5 + lam * nu / (dx * kappa))
    if not 0 < s_v <= 2:
        raise ValueError(f"relaxation rate s_v={s_v} outside (0, 2]")

    def eq(cons):
        u = cons[0]
        return np.stack([u, u * u / 2, u ** 3 / 6 + kappa * u / 2])

    return SchemeSpec(vel, lam, _d1q3_matrix(lam), [0.0, s_v, s_w], 1, eq,
                      name="d1q3-burgers")


D2Q9_VELOCITIES = ((0, 0), (1, 0), (0, 1), (-1, 0), (0, -1),
                   (1, 1), (-1, 1), (-1, -1), (1, -1))


def _d2q9_matrix(lam: float):
    l2, l3, l4 = lam ** 2, lam ** 3, lam ** 4
    rows = [[1] * 9,
            [0, lam, 0, -lam, 0, lam, -lam, -lam, lam],
            [0, 0, lam, 0, -lam, lam, lam, -lam, -lam],
            [-4 * l2, -l2, -l2, -l2, -l2, 2 * l2, 2 * l2, 2 * l2, 2 * l2],
            [0, -2 * l3, 0, 2 * l3, 0, l3, -l3, -l3, l3],
            [0, 0, -2 * l3, 0, 2 * l3, l3, l3, -l3, -l3],
            [4 * l4, -2 * l4, -2 * l4, -2 * l4, -2 * l4, l4, l4, l4, l4],
            [0, l2, -l2, l2, -l2, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, l2, -l2, l2, -l2]]
    return rows


def d2q9_advdiff(dx: float, lam=1.0, V=(0.5, 0.5), nu=0.005) -> SchemeSpec:
    vel = VelocitySet(2, D2Q9_VELOCITIES)
    s = 1.0 / (0.5 + 3 * nu / (lam * dx))
    if not 0 < s <= 2:
        raise ValueError(f"relaxation rate s={s} outside (0, 2]")
    vx, vy = V
    v2 = vx * vx + vy * vy
    l2, l4 = lam ** 2, lam ** 4

    def eq(cons):
        u = cons[0]
        return np.stack([u, vx * u, vy * u, (-2 * l2 + 3 * v2) * u,
                         -l2 * vx * u, -l2 * vy * u, (l4 - 3 * l2 * v2) * u,
                         (vx * vx - vy * vy) * u, vx * vy * u])

    return SchemeSpec(vel, lam, _d2q9_matrix(lam), [0.0, s, s, 1, 1, 1, 1, 1, 1],
                      1, eq, name="d2q9-advdiff")


# --- problem registry --------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: Domain
    final_time: float
    lam: float
    exact: object            # exact(t, centers ndarray or (X, Y)) -> u
    build_scheme: object     # build_scheme(dx) -> SchemeSpec

    @property
    def d(self) -> int:
        return self.domain.d


def get_problem(test_id: str, s: float = 2.0) -> ProblemSpec:
    """Problems "1", "2", "3a" (large diffusion), "3b" (small), "4"."""
    box1 = Domain((-3.0,), (3.0,))
    if test_id == "1":
        V, nu, t0 = 0.5, 0.005, 1.0
        return ProblemSpec(
            "advection", box1, 2.0, 1.0,
            lambda t, x: advection_exact(t, x, V=V, nu=nu, t0=t0),
            lambda dx: d1q2_advection(dx, lam=1.0, s=s, V=V))
    if test_id == "2":
        V, nu, t0 = 0.5, 0.005, 1.0
        return ProblemSpec(
            "advdiff", box1, 2.0, 1.0,
            lambda t, x: advdiff_exact(t, x, V=V, nu=nu, t0=t0),
            lambda dx: d1q3_advdiff(dx, lam=1.0, V=V, nu=nu, kappa=0.5))
    if test_id in ("3a", "3b"):
        nu, kappa = (0.05, 4.0) if test_id == "3a" else (0.005, 1.0)
        rule = gauss_hermite(100)
        return ProblemSpec(
            "burgers", box1, 1.0, 4.0,
            lambda t, x: burgers_exact(t, x, nu=nu, t0=1.0, rule=rule),
            lambda dx: d1q3_burgers(dx, lam=4.0, nu=nu, kappa=kappa))
    if test_id == "4":
        V, nu, t0 = (0.5, 0.5), 0.005, 1.0
        box2 = Domain((-0.5, -0.5), (1.0, 1.0))
        return ProblemSpec(
            "advdiff-2d", box2, 0.5, 1.0,
            lambda t, xy: advdiff_exact_2d(t, xy[0], xy[1], V=V, nu=nu, t0=t0),
            lambda dx: d2q9_advdiff(dx, lam=1.0, V=V, nu=nu))
    raise ValueError(f"unknown test id {test_id!r}")
