"""Stream phase machinery: exact flattened stencils and the two stream paths.

The multiresolution stream reconstructs the finest-level solution on the
incoming/outgoing bands E/A of each leaf and adds the resulting pseudo-flux.
On locally uniform meshes the whole cascade condenses ("flattens") into a
fixed five-point (1D) or 25-point (2D) stencil per velocity and level gap;
those weights are generated here in exact rational arithmetic, three ways:

* closed forms (Haar, gamma=1 recurrence through the matrix P, Lax-Wendroff),
* a brute-force symbolic cascade that serves as the independent oracle,
* Kronecker lifting for d=2.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np

from .multires import PredictionOperator, child_coefficients, child_coefficients_2d

__all__ = [
    "StreamSets",
    "FlattenedStencil",
    "UnsupportedStencilError",
    "stream_sets",
    "stream_pattern",
    "P_GAMMA1",
    "recurrence_matrix",
    "flatten_weights_haar",
    "flatten_weights_gamma1",
    "flatten_weights_bruteforce",
    "flatten_weights_bruteforce_2d",
    "flatten_weights_2d",
    "lw_weights",
    "lw_weights_2d",
    "stencil_for",
    "fine_cell_coefficients",
    "flattened_stream",
    "adaptive_stream",
    "lw_single_polynomial_check",
]

OFFSET_RANGE = range(-2, 3)


class UnsupportedStencilError(ValueError):
    """Raised when a flattening would leave the +-2 offset window."""


@dataclass(frozen=True)
class StreamSets:
    incoming: frozenset   # E: finest-level cells feeding the leaf
    outgoing: frozenset   # A: finest-level cells leaving the leaf


def stream_sets(k, c, dl: int) -> StreamSets:
    """E/A sets of leaf k for velocity c at level gap dl (tuples throughout)."""
    k = _as_tuple(k)
    c = _as_tuple(c)
    base = [range(ki << dl, (ki + 1) << dl) for ki in k]
    b = set(product(*base))
    b_shift = {tuple(x - ci for x, ci in zip(cell, c)) for cell in b}
    return StreamSets(frozenset(b_shift - b), frozenset(b - b_shift))


@lru_cache(maxsize=None)
def stream_pattern(c, dl: int):
    """E/A of the k=0 leaf; other leaves are translates by k*2^dl."""
    sets = stream_sets((0,) * len(_as_tuple(c)), c, dl)
    return tuple(sorted(sets.incoming)), tuple(sorted(sets.outgoing))


def _as_tuple(x):
    return (x,) if np.isscalar(x) else tuple(int(v) for v in x)


# --- stencil container ------------------------------------------------------

@dataclass(frozen=True)
class FlattenedStencil:
    """Exact weights C[m] (1D) or C[(m, n)] (2D) of the flattened stream."""

    tag: str             # "haar" | "gamma1" | "generic" | "lw"
    c: tuple
    dl: int
    weights: tuple       # sorted ((offset, Fraction), ...)

    @property
    def d(self) -> int:
        return len(self.c)

    def weight_map(self) -> dict:
        return dict(self.weights)

    def zero_sum(self) -> Fraction:
        return sum((w for _, w in self.weights), Fraction(0))

    def to_array(self) -> np.ndarray:
        if self.d == 1:
            arr = np.zeros(5)
            for (m,), w in self.weights:
                arr[m + 2] = float(w)
        else:
            arr = np.zeros((5, 5))
            for (m, n), w in self.weights:
                arr[m + 2, n + 2] = float(w)
        return arr

    def format_exact(self) -> str:
        parts = [f"C[{','.join(map(str, off))}]={w}" for off, w in self.weights]
        return f"{self.tag} c={self.c} dl={self.dl}: " + (" ".join(parts) or "0")


def _make_stencil(tag, c, dl, wmap) -> FlattenedStencil:
    c = _as_tuple(c)
    items = tuple(sorted((off, Fraction(w)) for off, w in wmap.items() if w != 0))
    st = FlattenedStencil(tag, c, dl, items)
    if st.zero_sum() != 0:
        raise AssertionError(f"stencil violates zero-sum: {st.format_exact()}")
    for off, _ in items:
        if any(abs(o) > 2 for o in off):
            raise UnsupportedStencilError(f"support outside +-2: {st.format_exact()}")
    return st


def _shift_stencil(tag, c) -> FlattenedStencil:
    c = _as_tuple(c)
    if all(ci == 0 for ci in c):
        return _make_stencil(tag, c, 0, {})
    neg = tuple(-ci for ci in c)
    return _make_stencil(tag, c, 0, {neg: Fraction(1), (0,) * len(c): Fraction(-1)})


# --- closed forms -----------------------------------------------------------

def flatten_weights_haar(c: int, dl: int) -> FlattenedStencil:
    """gamma=0 flattening: two weights at 0 and -sign(c), independent of dl>=1.

    dl=0 is the exact shift (for |c|=2 the generic formula would place the
    weight at the wrong offset there).
    """
    if c == 0:
        return _make_stencil("haar", (0,), dl, {})
    if dl == 0:
        return _shift_stencil("haar", (c,))
    s = 1 if c > 0 else -1
    return _make_stencil("haar", (c,), dl, {(-s,): Fraction(abs(c)), (0,): Fraction(-abs(c))})


P_GAMMA1 = [
    [Fraction(0), Fraction(-1, 8), Fraction(0), Fraction(0), Fraction(0)],
    [Fraction(2), Fraction(9, 8), Fraction(0), Fraction(-1, 8), Fraction(0)],
    [Fraction(0), Fraction(9, 8), Fraction(2), Fraction(9, 8), Fraction(0)],
    [Fraction(0), Fraction(-1, 8), Fraction(0), Fraction(9, 8), Fraction(2)],
    [Fraction(0), Fraction(0), Fraction(0), Fraction(-1, 8), Fraction(0)],
]


def recurrence_matrix(op: PredictionOperator) -> list[list[Fraction]]:
    """One-level flattening recurrence derived from the prediction weights.

    Folding the two children of a leaf and pushing each predicted value back
    to the parent level maps level-gap dl-1 weights to level-gap dl weights.
    Supports gamma <= 1 (larger stencils leave the +-2 window).
    """
    coeffs = {delta: child_coefficients(op, delta) for delta in (0, 1)}
    mat = [[Fraction(0)] * 5 for _ in range(5)]
    for m in OFFSET_RANGE:
        for j in (m, m + 1):
            par, delta = j // 2, j & 1
            for off, w in coeffs[delta].items():
                mp = par + off
                if abs(mp) > 2:
                    raise UnsupportedStencilError(
                        f"gamma={op.gamma} recurrence leaves the +-2 window")
                mat[mp + 2][m + 2] += w
    return mat


def _mat_vec(mat, vec):
    return [sum(mat[i][j] * vec[j] for j in range(5)) for i in range(5)]


def _init_vec(c: int) -> list[Fraction]:
    vec = [Fraction(0)] * 5
    if c != 0:
        vec[-c + 2] += 1
        vec[2] -= 1
    return vec


def flatten_weights_gamma1(c: int, dl: int) -> FlattenedStencil:
    """gamma=1 flattening: C_dl = P^dl C_0 with C_0 the exact shift."""
    vec = _init_vec(c)
    for _ in range(dl):
        vec = _mat_vec(P_GAMMA1, vec)
    return _make_stencil("gamma1", (c,), dl, {(m,): vec[m + 2] for m in OFFSET_RANGE})


# --- brute-force oracle -----------------------------------------------------

def _cascade_coeffs(op: PredictionOperator, dl: int, fine_index) -> dict:
    """Exact level-l coefficients of the reconstruction of one finest cell."""
    d = len(fine_index)
    if d == 1:
        coeffs = {delta: child_coefficients(op, delta) for delta in (0, 1)}
    else:
        coeffs = {delta: child_coefficients_2d(op, delta)
                  for delta in product((0, 1), repeat=d)}
    cur = {tuple(fine_index): Fraction(1)}
    for _ in range(dl):
        nxt: dict = {}
        for idx, coef in cur.items():
            par = tuple(i >> 1 for i in idx)
            delta = tuple(i & 1 for i in idx)
            delta_key = delta[0] if d == 1 else delta
            for off, w in coeffs[delta_key].items():
                off = (off,) if d == 1 else off
                tgt = tuple(p + o for p, o in zip(par, off))
                nxt[tgt] = nxt.get(tgt, Fraction(0)) + coef * w
        cur = {k: v for k, v in nxt.items() if v != 0}
    return cur


def _bruteforce(op: PredictionOperator, c, dl: int, tag: str) -> FlattenedStencil:
    c = _as_tuple(c)
    inc, out = stream_pattern(c, dl)
    acc: dict = {}
    for sign, cells in ((1, inc), (-1, out)):
        for cell in cells:
            for off, w in _cascade_coeffs(op, dl, cell).items():
                acc[off] = acc.get(off, Fraction(0)) + sign * w
    return _make_stencil(tag, c, dl, acc)


def flatten_weights_bruteforce(op: PredictionOperator, c: int, dl: int) -> FlattenedStencil:
    """Independent oracle: push every E/A reconstruction through the cascade."""
    tag = {0: "haar", 1: "gamma1"}.get(op.gamma, "generic")
    return _bruteforce(op, (c,), dl, tag)


def flatten_weights_bruteforce_2d(op: PredictionOperator, c, dl: int) -> FlattenedStencil:
    tag = {0: "haar", 1: "gamma1"}.get(op.gamma, "generic")
    return _bruteforce(op, c, dl, tag)


# --- 2D closed form (Kronecker lift) ----------------------------------------

def _axis_matrix(tag: str):
    if tag == "gamma1":
        return P_GAMMA1
    if tag == "haar":
        return recurrence_matrix(PredictionOperator(0, ()))
    raise ValueError(f"no recurrence matrix for scheme {tag!r}")


def flatten_weights_2d(row_x: FlattenedStencil, row_y: FlattenedStencil) -> FlattenedStencil:
    """25-weight table from two 1D rows of the same scheme and level gap.

    (P (x) P)^dl applied to the 2D shift factorizes axis by axis:
    C = (P^dl e_{-cx}) (x) (P^dl e_{-cy}) - (P^dl e_0) (x) (P^dl e_0).
    """
    if row_x.dl != row_y.dl or row_x.tag != row_y.tag:
        raise ValueError("rows must share level gap and scheme")
    dl, tag = row_x.dl, row_x.tag
    cx, cy = row_x.c[0], row_y.c[0]
    mat = _axis_matrix(tag)

    def propagate(start: int) -> list[Fraction]:
        vec = [Fraction(0)] * 5
        vec[start + 2] = Fraction(1)
        for _ in range(dl):
            vec = _mat_vec(mat, vec)
        return vec

    if cx == 0 and cy == 0:
        return _make_stencil(tag, (0, 0), dl, {})
    a = propagate(-cx)
    b = propagate(-cy)
    z = propagate(0)
    wmap = {}
    for m in OFFSET_RANGE:
        for n in OFFSET_RANGE:
            w = a[m + 2] * b[n + 2] - z[m + 2] * z[n + 2]
            if w != 0:
                wmap[(m, n)] = w
    return _make_stencil(tag, (cx, cy), dl, wmap)


# --- Lax-Wendroff -----------------------------------------------------------

def lw_weights(c: int, dl: int) -> FlattenedStencil:
    """Three-point Lax-Wendroff row on offsets -+sign(c)."""
    if c == 0:
        return _make_stencil("lw", (0,), dl, {})
    s = 1 if c > 0 else -1
    a = Fraction(abs(c))
    two = Fraction(2) ** dl
    return _make_stencil("lw", (c,), dl, {
        (0,): -a * a / two,
        (-s,): a / 2 * (1 + a / two),
        (s,): -a / 2 * (1 - a / two),
    })


def lw_weights_2d(c, dl: int) -> FlattenedStencil:
    """Lax-Wendroff for 2D velocities, offsets along the componentwise sign.

    The published form divides by the Euclidean norm, which is not a lattice
    offset for diagonals; we take the sign vector and the max-norm magnitude
    instead.  Weights carry the 4^dl normalization of the 2D flattened form.
    """
    c = _as_tuple(c)
    if all(ci == 0 for ci in c):
        return _make_stencil("lw", c, dl, {})
    s = tuple((ci > 0) - (ci < 0) for ci in c)
    neg = tuple(-si for si in s)
    a = Fraction(max(abs(ci) for ci in c))
    two = Fraction(2) ** dl
    return _make_stencil("lw", c, dl, {
        (0, 0): -a * a,
        neg: two * a / 2 * (1 + a / two),
        s: -two * a / 2 * (1 - a / two),
    })


# --- dispatch ---------------------------------------------------------------

@lru_cache(maxsize=None)
def stencil_for(scheme: str, c, dl: int) -> FlattenedStencil:
    """Stencil of one velocity for scheme in {"haar", "gamma1", "lw"}."""
    c = _as_tuple(c)
    if len(c) == 1:
        if scheme == "haar":
            return flatten_weights_haar(c[0], dl)
        if scheme == "gamma1":
            return flatten_weights_gamma1(c[0], dl)
        if scheme == "lw":
            return lw_weights(c[0], dl)
    else:
        if scheme in ("haar", "gamma1"):
            if dl == 0:
                return _shift_stencil(scheme, c)
            mat = _axis_matrix(scheme)
            rx = _make_stencil(scheme, (c[0],), dl, {})
            ry = _make_stencil(scheme, (c[1],), dl, {})
            # rows above only carry (c, dl, tag); weights recomputed inside
            return flatten_weights_2d(rx, ry)
        if scheme == "lw":
            return lw_weights_2d(c, dl)
    raise ValueError(f"unknown scheme {scheme!r}")


@lru_cache(maxsize=None)
def fine_cell_coefficients(gamma: int, dl: int, fine_index) -> tuple:
    """Reconstruction coefficients of a finest cell inside the k=0 leaf.

    Used by the reconstructed collision: every cell of B is a fixed linear
    combination of the +-2 level-l neighbors.
    """
    from .multires import derive_prediction_weights

    op = derive_prediction_weights(gamma)
    cur = _cascade_coeffs(op, dl, _as_tuple(fine_index))
    return tuple(sorted((off, w) for off, w in cur.items()))


# --- stream kernels ---------------------------------------------------------

_PAD_MODE = {"copy": "edge", "periodic": "wrap"}


def flattened_stream(values: np.ndarray, stencils, dl: int, policy: str = "copy") -> np.ndarray:
    """Apply the flattened update to a uniform-level array of distributions.

    `values` holds post-collision data, shape (q, n) or (q, nx, ny);
    `stencils` is one FlattenedStencil per velocity.
    """
    d = values.ndim - 1
    q = values.shape[0]
    if len(stencils) != q:
        raise ValueError("need one stencil per velocity")
    out = np.empty_like(values)
    pad = [(2, 2)] * d
    mode = _PAD_MODE[policy]
    inv = 1.0 / (1 << (d * dl))
    for alpha in range(q):
        f = values[alpha]
        padded = np.pad(f, pad, mode=mode)
        acc = f.copy()
        for off, w in stencils[alpha].weights:
            sl = tuple(slice(2 + o, 2 + o + n) for o, n in zip(off, f.shape))
            acc = acc + (inv * float(w)) * padded[sl]
        out[alpha] = acc
    return out


def adaptive_stream(mesh, field_star, velocities, op: PredictionOperator,
                    policy: str = "copy"):
    """Multiresolution stream on a hybrid mesh.

    Reconstructs the finest-level post-collision values on the E/A bands of
    every leaf and applies the pseudo-flux balance.  Returns a new Field.
    """
    from .mesh import Field
    from .multires import ReconstructionCache

    cache = ReconstructionCache(mesh, field_star, op, policy)
    out = Field(mesh, field_star.q)
    d = mesh.domain.d
    for leaf in mesh.iter_leaves():
        level, k = leaf
        dl = mesh.l_max - level
        vals = field_star.data[leaf].copy()
        scale = 1.0 / (1 << (d * dl))
        for alpha, c in enumerate(velocities):
            c = _as_tuple(c)
            if all(ci == 0 for ci in c):
                continue
            inc, outg = stream_pattern(c, dl)
            flux = 0.0
            for cell in inc:
                fine = tuple((ki << dl) + o for ki, o in zip(k, cell))
                flux += cache.value(mesh.l_max, fine)[alpha]
            for cell in outg:
                fine = tuple((ki << dl) + o for ki, o in zip(k, cell))
                flux -= cache.value(mesh.l_max, fine)[alpha]
            vals[alpha] += scale * flux
        out.data[leaf] = vals
    return out


def lw_single_polynomial_check(window, c: int, dl: int) -> Fraction:
    """Pseudo-flux of one non-cascaded gamma=1 polynomial over the E/A cells.

    Integrating the local degree-2 reconstruction polynomial over the finest
    E/A cells reproduces the Lax-Wendroff update; this functional is the test
    oracle for that statement (|c| = 1 only).
    """
    from .multires import polynomial_coefficients

    if abs(c) != 1:
        raise ValueError("single-polynomial check is stated for |c| = 1")
    a = polynomial_coefficients([Fraction(x) for x in window], gamma=1)
    h = Fraction(1, 1 << dl)

    def cell_mean(fine_idx: int) -> Fraction:
        xi_lo = Fraction(fine_idx, 1 << dl) - Fraction(1, 2)
        xi_hi = xi_lo + h
        return sum(am * (xi_hi ** (m + 1) - xi_lo ** (m + 1)) / (m + 1)
                   for m, am in enumerate(a)) / h

    inc, outg = stream_pattern((c,), dl)
    return (sum(cell_mean(i[0]) for i in inc)
            - sum(cell_mean(i[0]) for i in outg))
