"""Collision strategies on hybrid meshes: leaves (LC), reconstructed (RC),
predict-and-quadrate (PQC).

All three relax moments toward an equilibrium target; they differ in how the
target is evaluated on a coarse cell.  LC uses the cell's own averages, RC
averages the equilibrium over all reconstructed finest cells of the block,
PQC integrates the equilibrium of the local reconstruction polynomial with a
small quadrature.  Conserved moments are exactly preserved by all of them.
"""

from __future__ import annotations

import numpy as np

from .mesh import Field
from .multires import (PredictionOperator, ReconstructionCache,
                       reconstruction_matrix)
from .problems import QuadratureRule, gauss_legendre
from .schemes import SchemeSpec, collide, from_moments, to_moments
from .transport import fine_cell_coefficients

__all__ = [
    "default_rule",
    "collide_lc",
    "collide_rc",
    "collide_pqc",
    "collide_lc_uniform",
    "collide_rc_uniform",
    "collide_pqc_uniform",
]


def default_rule() -> QuadratureRule:
    """Gauss-Legendre with 3 points per axis (degree-5 exact)."""
    return gauss_legendre(3)


# --- hybrid-mesh strategies --------------------------------------------------

def collide_lc(mesh, field: Field, spec: SchemeSpec) -> Field:
    """Moment relaxation on each leaf from its own averages."""
    out = Field(mesh, field.q)
    for leaf, f in field.data.items():
        out.data[leaf] = collide(f, spec)
    return out


def collide_rc(mesh, field: Field, spec: SchemeSpec, op: PredictionOperator,
               policy: str = "copy") -> Field:
    """Relax toward the block average of reconstructed equilibria."""
    from itertools import product

    cache = ReconstructionCache(mesh, field, op, policy)
    out = Field(mesh, field.q)
    qc = spec.q_c
    for leaf, f in field.data.items():
        level, k = leaf
        dl = mesh.l_max - level
        fine0 = tuple(ki << dl for ki in k)
        acc = None
        for delta in product(range(1 << dl), repeat=mesh.domain.d):
            fine = tuple(f0 + dd for f0, dd in zip(fine0, delta))
            mfine = spec.M[:qc] @ cache.value(mesh.l_max, fine)
            meq = np.asarray(spec.eq(mfine))
            acc = meq if acc is None else acc + meq
        target = acc / (1 << (mesh.domain.d * dl))
        m = to_moments(f, spec)
        mstar = m + spec.S * (target - m)
        out.data[leaf] = from_moments(mstar, spec)
    return out


def _poly_matrix(gamma: int) -> np.ndarray:
    t = reconstruction_matrix(gamma)
    return np.linalg.inv(np.array([[float(x) for x in row] for row in t]))


def collide_pqc(mesh, field: Field, spec: SchemeSpec, op: PredictionOperator,
                rule: QuadratureRule | None = None, policy: str = "copy") -> Field:
    """Relax toward the quadrature of the equilibrium of the local polynomial."""
    if rule is None:
        rule = default_rule()
    g = op.gamma
    tinv = _poly_matrix(g)
    cache = ReconstructionCache(mesh, field, op, policy)
    d = mesh.domain.d
    qc = spec.q_c
    xi = rule.nodes / 2.0            # cell-local coordinates in [-1/2, 1/2]
    powers = np.vander(xi, 2 * g + 1, increasing=True)   # (N, 2g+1)
    wq = rule.weights / 2.0          # mean over the cell, not the integral
    out = Field(mesh, field.q)
    offs = range(-g, g + 1)
    for leaf, f in field.data.items():
        level, k = leaf
        if d == 1:
            win = np.stack([spec.M[:qc] @ cache.value(level, (k[0] + o,)) for o in offs])
            a = np.tensordot(tinv, win, axes=(1, 0))           # (2g+1, qc)
            vals = powers @ a                                  # (N, qc)
            meq = np.asarray(spec.eq(vals.T))                  # (q, N)
            target = meq @ wq
        else:
            win = np.empty((2 * g + 1, 2 * g + 1, qc))
            for i, ox in enumerate(offs):
                for j, oy in enumerate(offs):
                    win[i, j] = spec.M[:qc] @ cache.value(level, (k[0] + ox, k[1] + oy))
            # A = T^-1 W T^-T per conserved moment, tensor polynomial
            a = np.einsum("mi,ijc,nj->mnc", tinv, win, tinv)
            vals = np.einsum("im,mnc,jn->ijc", powers, a, powers)   # (N, N, qc)
            meq = np.asarray(spec.eq(np.moveaxis(vals, -1, 0).reshape(qc, -1)))
            target = meq @ np.outer(wq, wq).ravel()
        m = to_moments(f, spec)
        mstar = m + spec.S * (target - m)
        out.data[leaf] = from_moments(mstar, spec)
    return out


# --- uniform-level fast paths (1D) -------------------------------------------

_PAD_MODE = {"copy": "edge", "periodic": "wrap"}


def collide_lc_uniform(values: np.ndarray, spec: SchemeSpec) -> np.ndarray:
    return collide(values, spec)


def _recon_matrix_1d(gamma: int, dl: int) -> np.ndarray:
    """(2^dl, 5) map from the +-2 neighbor window to the fine cells of a block."""
    r = np.zeros((1 << dl, 5))
    for j in range(1 << dl):
        for off, w in fine_cell_coefficients(gamma, dl, (j,)):
            r[j, off[0] + 2] = float(w)
    return r


def collide_rc_uniform(values: np.ndarray, spec: SchemeSpec, gamma: int, dl: int,
                       policy: str = "copy") -> np.ndarray:
    """RC on a uniform 1D level: every block reconstructs the same way."""
    if values.ndim != 2:
        raise NotImplementedError("uniform RC fast path is one-dimensional")
    m = to_moments(values, spec)
    u = m[:spec.q_c]
    n = u.shape[1]
    pad = np.pad(u, ((0, 0), (2, 2)), mode=_PAD_MODE[policy])
    window = np.stack([pad[:, 2 + o:2 + o + n] for o in range(-2, 3)])  # (5, qc, n)
    r = _recon_matrix_1d(gamma, dl)
    ufine = np.tensordot(r, window, axes=(1, 0))                         # (2^dl, qc, n)
    meq = np.asarray(spec.eq(np.moveaxis(ufine, 1, 0)))                  # (q, 2^dl, n)
    target = meq.mean(axis=1)
    mstar = m + spec.S[:, None] * (target - m)
    return from_moments(mstar, spec)


def collide_pqc_uniform(values: np.ndarray, spec: SchemeSpec, gamma: int,
                        rule: QuadratureRule | None = None,
                        policy: str = "copy") -> np.ndarray:
    if values.ndim != 2:
        raise NotImplementedError("uniform PQC fast path is one-dimensional")
    if rule is None:
        rule = default_rule()
    m = to_moments(values, spec)
    u = m[:spec.q_c]
    n = u.shape[1]
    g = gamma
    pad = np.pad(u, ((0, 0), (g, g)), mode=_PAD_MODE[policy])
    window = np.stack([pad[:, g + o:g + o + n] for o in range(-g, g + 1)])
    tinv = _poly_matrix(g)
    a = np.tensordot(tinv, window, axes=(1, 0))              # (2g+1, qc, n)
    xi = rule.nodes / 2.0
    powers = np.vander(xi, 2 * g + 1, increasing=True)
    vals = np.tensordot(powers, a, axes=(1, 0))              # (N, qc, n)
    meq = np.asarray(spec.eq(np.moveaxis(vals, 1, 0)))       # (q, N, n)
    target = np.tensordot(meq, rule.weights / 2.0, axes=(1, 0))
    mstar = m + spec.S[:, None] * (target - m)
    return from_moments(mstar, spec)
