"""Volume multiresolution core: prediction, projection, reconstruction, details.

The prediction operator interpolates children cell averages from parent-level
averages.  Its weights come from averaging a local reconstruction polynomial
of degree 2*gamma over the two half cells; they are derived here in exact
rational arithmetic so that the stencil analysis can rely on exact identities.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

__all__ = [
    "PredictionOperator",
    "derive_prediction_weights",
    "predict",
    "predict_2d",
    "project",
    "reconstruction_matrix",
    "polynomial_coefficients",
    "child_coefficients",
    "child_coefficients_2d",
    "reconstruct",
    "detail",
    "ReconstructionCache",
]


@dataclass(frozen=True)
class PredictionOperator:
    """Centered volume prediction with stencil half-width gamma.

    Children of cell k are predicted as
        f_hat[2k + d] = f[k] + (-1)^d * sum_pi w[pi] * (f[k+pi] - f[k-pi]),
    d in {0, 1}.  Weights are exact rationals; ``w_float`` is the image used
    in hot loops.
    """

    gamma: int
    w: tuple[Fraction, ...]

    @property
    def w_float(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.w)


def reconstruction_matrix(gamma: int) -> list[list[Fraction]]:
    """Constraint matrix T of the local reconstruction polynomial.

    Row (delta+gamma), column m holds the mean of xi^m over [delta-1/2,
    delta+1/2], xi being the cell-local coordinate in units of the cell size.
    T a = window of 2*gamma+1 cell averages.
    """
    size = 2 * gamma + 1
    rows = []
    for delta in range(-gamma, gamma + 1):
        lo = Fraction(2 * delta - 1, 2)
        hi = Fraction(2 * delta + 1, 2)
        rows.append([(hi ** (m + 1) - lo ** (m + 1)) / (m + 1) for m in range(size)])
    return rows


def _solve_fraction(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gaussian elimination over the rationals (tiny systems only)."""
    n = len(b)
    m = [row[:] + [rhs] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        inv = 1 / m[col][col]
        m[col] = [x * inv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                factor = m[r][col]
                m[r] = [x - factor * y for x, y in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def polynomial_coefficients(window: list[Fraction], gamma: int) -> list[Fraction]:
    """Coefficients a_m of the local polynomial whose averages match `window`."""
    t = reconstruction_matrix(gamma)
    return _solve_fraction(t, [Fraction(x) for x in window])


def _child_average_functional(gamma: int, delta: int) -> list[Fraction]:
    """Coefficients of the predicted child average on the parent window.

    The child with selector delta occupies [delta/2 - 1/2, delta/2] of the
    parent cell in local coordinates; its average is a linear functional of
    the window, solved column by column through T.
    """
    size = 2 * gamma + 1
    lo = Fraction(delta - 1, 2)
    hi = Fraction(delta, 2)
    moments = [2 * (hi ** (m + 1) - lo ** (m + 1)) / (m + 1) for m in range(size)]
    coeffs = []
    for j in range(size):
        unit = [Fraction(i == j) for i in range(size)]
        a = polynomial_coefficients(unit, gamma)
        coeffs.append(sum(mm * am for mm, am in zip(moments, a)))
    return coeffs


def derive_prediction_weights(gamma: int) -> PredictionOperator:
    """Solve the averaging constraint system and extract the weights.

    The functional of the delta=0 child must have the antisymmetric form
    f[k] + sum w_pi (f[k+pi] - f[k-pi]); this structure is asserted rather
    than assumed.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return PredictionOperator(0, ())
    g0 = _child_average_functional(gamma, 0)
    g1 = _child_average_functional(gamma, 1)
    assert g0[gamma] == 1
    for pi in range(1, gamma + 1):
        assert g0[gamma + pi] == -g0[gamma - pi]
        assert g1[gamma + pi] == -g0[gamma + pi]
    w = tuple(g0[gamma + pi] for pi in range(1, gamma + 1))
    return PredictionOperator(gamma, w)


def predict(window, delta: int, op: PredictionOperator):
    """Predicted child average from a window of 2*gamma+1 parent values."""
    g = op.gamma
    if len(window) != 2 * g + 1:
        raise ValueError("window must have 2*gamma+1 entries")
    center = window[g]
    if g == 0:
        return center
    sign = 1 if delta % 2 == 0 else -1
    q = sum(w * (window[g + pi] - window[g - pi]) for pi, w in enumerate(op.w, start=1))
    return center + sign * q


def predict_2d(window, delta, op: PredictionOperator):
    """Tensor-product prediction: 1D along x (rows), then along y."""
    g = op.gamma
    win = np.asarray(window)
    if win.shape != (2 * g + 1, 2 * g + 1):
        raise ValueError("window must be (2*gamma+1) x (2*gamma+1)")
    dx, dy = delta
    # win[i, j] = value at parent offset (i - g, j - g); axis 0 is x.
    col = [predict(win[:, j], dx, op) for j in range(2 * g + 1)]
    return predict(col, dy, op)


def project(children):
    """Parent average from the 2^d children (plain mean)."""
    vals = list(children)
    return sum(vals) / len(vals)


def child_coefficients(op: PredictionOperator, delta: int) -> dict[int, Fraction]:
    """Parent-offset -> weight map of one prediction stage (1D)."""
    coeffs: dict[int, Fraction] = {0: Fraction(1)}
    sign = 1 if delta % 2 == 0 else -1
    for pi, w in enumerate(op.w, start=1):
        coeffs[pi] = coeffs.get(pi, Fraction(0)) + sign * w
        coeffs[-pi] = coeffs.get(-pi, Fraction(0)) - sign * w
    return {k: v for k, v in coeffs.items() if v != 0}


def child_coefficients_2d(op: PredictionOperator, delta) -> dict[tuple[int, int], Fraction]:
    cx = child_coefficients(op, delta[0])
    cy = child_coefficients(op, delta[1])
    return {(i, j): wi * wj for (i, wi), (j, wj) in product(cx.items(), cy.items())}


class ReconstructionCache:
    """Memoized recursive node values over a hybrid mesh.

    The value of any tree node is defined by the stored leaves: projection
    (mean of children) above the leaves, cascaded prediction below them, and
    the boundary policy outside the domain.  Reconstruction at the finest
    level, halo fill and details are all reads of this map.
    """

    def __init__(self, mesh, field, op: PredictionOperator, policy: str = "copy"):
        self.mesh = mesh
        self.field = field
        self.op = op
        self.policy = policy
        self._values: dict[tuple, np.ndarray] = {}
        d = mesh.domain.d
        self._coeffs = {}
        for delta in product((0, 1), repeat=d):
            if d == 1:
                cc = child_coefficients(op, delta[0])
                self._coeffs[delta] = [((o,), float(w)) for o, w in cc.items()]
            else:
                cc = child_coefficients_2d(op, delta)
                self._coeffs[delta] = [(o, float(w)) for o, w in cc.items()]

    def value(self, level: int, k: tuple) -> np.ndarray:
        key = (level, k)
        cached = self._values.get(key)
        if cached is not None:
            return cached
        mesh = self.mesh
        kk = mesh.wrap_index(level, k, self.policy)
        if kk != k:
            out = self.value(level, kk)
            self._values[key] = out
            return out
        if key in self.field.data:
            out = self.field.data[key]
        elif mesh.is_subdivided(level, k):
            children = [self.value(level + 1, c) for c in _child_indices(k)]
            out = sum(children) / len(children)
        else:
            if level == 0:
                raise ValueError(f"cell {key} not covered by mesh leaves")
            parent = tuple(c >> 1 for c in k)
            delta = tuple(c & 1 for c in k)
            acc = None
            for off, w in self._coeffs[delta]:
                nb = tuple(p + o for p, o in zip(parent, off))
                term = w * self.value(level - 1, nb)
                acc = term if acc is None else acc + term
            out = acc
        self._values[key] = out
        return out


def _child_indices(k: tuple) -> list[tuple]:
    return [tuple(2 * c + d for c, d in zip(k, delta)) for delta in product((0, 1), repeat=len(k))]


def reconstruct(mesh, field, target, op: PredictionOperator, alpha: int | None = None,
                policy: str = "copy", cache: ReconstructionCache | None = None):
    """Finest-level value of `target` = (l_max, k) by cascaded prediction.

    For gamma=0 this is the value on the covering ancestor leaf.  Pass a
    ReconstructionCache to share node values across many targets.
    """
    level, k = target
    if cache is None:
        cache = ReconstructionCache(mesh, field, op, policy)
    val = cache.value(level, k)
    return val if alpha is None else val[alpha]


def detail(mesh, field, leaf, op: PredictionOperator, policy: str = "copy",
           cache: ReconstructionCache | None = None) -> float:
    """max_alpha |predicted - stored| on a leaf, parents taken by projection."""
    level, k = leaf
    if cache is None:
        cache = ReconstructionCache(mesh, field, op, policy)
    parent = tuple(c >> 1 for c in k)
    delta = tuple(c & 1 for c in k)
    acc = None
    for off, w in cache._coeffs[delta]:
        nb = tuple(p + o for p, o in zip(parent, off))
        term = w * cache.value(level - 1, nb)
        acc = term if acc is None else acc + term
    stored = field.data[(level, k)]
    return float(np.max(np.abs(acc - stored)))
