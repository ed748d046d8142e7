"""Multiple-relaxation-times schemes and the uniform reference algorithm.

A scheme is a set of integer lattice velocities, a lattice velocity lambda
(so dt = dx / lambda), an invertible moment matrix M, a diagonal relaxation
vector S with zeros on the conserved moments, and an equilibrium map from
the conserved moments to the full moment vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "VelocitySet",
    "SchemeSpec",
    "UniformState",
    "to_moments",
    "from_moments",
    "collide_moments",
    "collide",
    "shift",
    "reference_step",
]


@dataclass(frozen=True)
class VelocitySet:
    d: int
    c: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        cs = tuple(tuple(int(x) for x in v) for v in self.c)
        object.__setattr__(self, "c", cs)
        if any(len(v) != self.d for v in cs):
            raise ValueError("velocity dimension mismatch")
        if len(set(cs)) != len(cs):
            raise ValueError("velocities must be pairwise distinct")
        if any(abs(x) > 2 for v in cs for x in v):
            raise ValueError("|c|_inf <= 2 is required by the flattening analysis")

    @property
    def q(self) -> int:
        return len(self.c)


class SchemeSpec:
    """D d Q q scheme: velocities, M, S, equilibrium, lattice velocity."""

    def __init__(self, velocities: VelocitySet, lam: float, M, S, q_c: int, eq,
                 name: str = ""):
        self.velocities = velocities
        self.lam = float(lam)
        self.M = np.asarray(M, dtype=float)
        self.S = np.asarray(S, dtype=float)
        self.q_c = int(q_c)
        self.eq = eq
        self.name = name
        q = velocities.q
        if self.M.shape != (q, q):
            raise ValueError("M must be q x q")
        if np.linalg.cond(self.M) > 1e8:
            raise ValueError("moment matrix is ill conditioned")
        if self.S.shape != (q,):
            raise ValueError("S must hold q diagonal entries")
        if np.any(self.S[:q_c] != 0.0):
            raise ValueError("conserved moments must have zero relaxation rate")
        if np.any((self.S < 0.0) | (self.S > 2.0)):
            raise ValueError("relaxation rates must lie in [0, 2]")
        self.M_inv = np.linalg.inv(self.M)
        # equilibrium must return the conserved values in the conserved slots
        probe = np.linspace(0.7, 1.3, q_c).reshape(q_c, 1)
        meq = np.asarray(self.eq(probe))
        if meq.shape[0] != q or not np.allclose(meq[:q_c], probe, rtol=0, atol=1e-12):
            raise ValueError("equilibrium map must fix the conserved moments")

    @property
    def q(self) -> int:
        return self.velocities.q

    @property
    def d(self) -> int:
        return self.velocities.d


@dataclass
class UniformState:
    """Distributions on the uniform grid of one level: values[alpha, cells...]."""

    level: int
    values: np.ndarray


def to_moments(f: np.ndarray, spec: SchemeSpec) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[0] != spec.q:
        raise ValueError("distribution vector must have q entries")
    return np.tensordot(spec.M, f, axes=(1, 0))


def from_moments(m: np.ndarray, spec: SchemeSpec) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape[0] != spec.q:
        raise ValueError("moment vector must have q entries")
    return np.tensordot(spec.M_inv, m, axes=(1, 0))


def collide_moments(m: np.ndarray, spec: SchemeSpec) -> np.ndarray:
    """m* = (I - S) m + S m_eq(conserved); conserved slots untouched."""
    m = np.asarray(m, dtype=float)
    meq = np.asarray(spec.eq(m[:spec.q_c]))
    s = spec.S.reshape((spec.q,) + (1,) * (m.ndim - 1))
    return m + s * (meq - m)

def collide(f: np.ndarray, spec: SchemeSpec) -> np.ndarray:
    return from_moments(collide_moments(to_moments(f, spec), spec), spec)


def shift(values: np.ndarray, c, policy: str) -> np.ndarray:
    """new[k] = old[k - c] with copy or periodic closure, any dimension."""
    out = values
    for axis, ca in enumerate(c):
        if ca == 0:
            continue
        n = out.shape[axis]
        idx = np.arange(n) - ca
        if policy == "periodic":
            idx %= n
        elif policy == "copy":
            idx = np.clip(idx, 0, n - 1)
        else:
            raise ValueError(f"unknown boundary policy {policy!r}")
        out = np.take(out, idx, axis=axis)
    return out


def reference_step(state: UniformState, spec: SchemeSpec, policy: str = "copy") -> UniformState:
    """One collide-and-stream of the reference scheme at the finest level."""
    fstar = collide(state.values, spec)
    new = np.empty_like(fstar)
    for alpha, c in enumerate(spec.velocities.c):
        new[alpha] = shift(fstar[alpha], c, policy)
    return UniformState(state.level, new)
