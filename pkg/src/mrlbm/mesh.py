"""Dyadic hierarchical Cartesian meshes over an axis-aligned box.

A mesh is a set of leaf cells (level, k) partitioning the domain, levels
between l_min and l_max, with the graded-tree property: touching leaves
differ by at most one level.  Level 0 tiles the box with n_unit cells per
axis and everything below is dyadic refinement of that tiling.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import product

import numpy as np

__all__ = [
    "Domain",
    "HybridMesh",
    "Field",
    "cell_center",
    "cell_dx",
    "parent_index",
    "children_indices",
    "uniform_mesh",
    "ensure_graded",
    "fill_halos",
    "dump_field",
    "POLICIES",
]

POLICIES = ("copy", "periodic")


@dataclass(frozen=True)
class Domain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n_unit: tuple[int, ...] | None = None

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.n_unit is None:
            object.__setattr__(self, "n_unit", (1,) * len(lo))
        if not all(h > l for l, h in zip(lo, hi)):
            raise ValueError("domain must satisfy hi > lo componentwise")

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def measure(self) -> float:
        return float(np.prod([h - l for l, h in zip(self.lo, self.hi)]))

    def n_cells(self, level: int) -> tuple[int, ...]:
        return tuple(n * (1 << level) for n in self.n_unit)


def cell_dx(level: int, dom: Domain) -> tuple[float, ...]:
    return tuple((h - l) / n for (l, h, n) in zip(dom.lo, dom.hi, dom.n_cells(level)))


def cell_center(c, dom: Domain) -> tuple[float, ...]:
    """Center of cell (level, k): lo + extent * 2^-level * (k + 1/2) per unit cell."""
    level, k = c
    dx = cell_dx(level, dom)
    return tuple(l + h * (ki + 0.5) for l, h, ki in zip(dom.lo, dx, k))


def parent_index(c):
    level, k = c
    if level < 1:
        raise ValueError("level-0 cells have no parent")
    return (level - 1, tuple(ki >> 1 for ki in k))


def children_indices(c):
    level, k = c
    return [(level + 1, tuple(2 * ki + di for ki, di in zip(k, delta)))
            for delta in product((0, 1), repeat=len(k))]


class HybridMesh:
    """Graded dyadic partition: leaves plus the set of internal ancestors."""

    def __init__(self, domain: Domain, l_min: int, l_max: int, leaves, halo_width: int = 3):
        if not 0 <= l_min <= l_max:
            raise ValueError("need 0 <= l_min <= l_max")
        self.domain = domain
        self.l_min = l_min
        self.l_max = l_max
        self.halo_width = halo_width
        self.leaves: dict[int, set] = {}
        for level, k in leaves:
            self.leaves.setdefault(level, set()).add(tuple(k))
        self._internal: set = set()
        for level, ks in self.leaves.items():
            for k in ks:
                node = (level, k)
                while node[0] > 0:
                    node = parent_index(node)
                    self._internal.add(node)

    # --- queries -----------------------------------------------------------

    def is_leaf(self, level: int, k: tuple) -> bool:
        return k in self.leaves.get(level, ())

    def is_subdivided(self, level: int, k: tuple) -> bool:
        return (level, k) in self._internal

    def in_bounds(self, level: int, k: tuple) -> bool:
        return all(0 <= ki < n for ki, n in zip(k, self.domain.n_cells(level)))

    def wrap_index(self, level: int, k: tuple, policy: str) -> tuple:
        if self.in_bounds(level, k):
            return k
        ns = self.domain.n_cells(level)
        if policy == "periodic":
            return tuple(ki % n for ki, n in zip(k, ns))
        if policy == "copy":
            return tuple(min(max(ki, 0), n - 1) for ki, n in zip(k, ns))
        raise ValueError(f"unknown boundary policy {policy!r}")

    def iter_leaves(self):
        for level in sorted(self.leaves):
            for k in sorted(self.leaves[level]):
                yield (level, k)

    def num_leaves(self) -> int:
        return sum(len(ks) for ks in self.leaves.values())

    def covering_leaf(self, level: int, k: tuple):
        """Leaf at (level, k) or on its ancestor chain, else None."""
        node = (level, k)
        while True:
            if self.is_leaf(*node):
                return node
            if node[0] == 0:
                return None
            node = parent_index(node)

    def max_touching_leaf_level(self, level: int, k: tuple, adj: tuple) -> int | None:
        """Finest leaf level inside cell (level, k) touching its face/corner -adj.

        `adj` is the offset from the reference leaf to this cell; only the
        children on the side facing back toward the reference leaf count.
        """
        leaf = self.covering_leaf(level, k)
        if leaf is not None:
            return leaf[0]
        if not self.is_subdivided(level, k):
            return None
        best = None
        for delta in product((0, 1), repeat=len(k)):
            # facing child: for adj=+1 take delta=0 side, for adj=-1 delta=1
            if any((a == 1 and d == 1) or (a == -1 and d == 0) for a, d in zip(adj, delta)):
                continue
            child = tuple(2 * ki + di for ki, di in zip(k, delta))
            sub = self.max_touching_leaf_level(level + 1, child, adj)
            if sub is not None:
                best = sub if best is None else max(best, sub)
        return best

    def is_graded(self) -> bool:
        return not self._grading_violations()

    def _grading_violations(self) -> list:
        bad = []
        d = self.domain.d
        offsets = [o for o in product((-1, 0, 1), repeat=d) if any(o)]
        for level, k in self.iter_leaves():
            for off in offsets:
                nb = tuple(ki + oi for ki, oi in zip(k, off))
                if not self.in_bounds(level, nb):
                    continue
                finest = self.max_touching_leaf_level(level, nb, off)
                if finest is not None and finest - level > 1:
                    bad.append((level, k))
                    break
        return bad

    def partition_measure(self) -> float:
        total = 0.0
        for level, ks in self.leaves.items():
            total += float(np.prod(cell_dx(level, self.domain))) * len(ks)
        return total

    # --- mutation (used by grading and adaptation) -------------------------

    def split_leaf(self, level: int, k: tuple) -> list:
        self.leaves[level].discard(k)
        self._internal.add((level, k))
        kids = children_indices((level, k))
        for lv, kk in kids:
            self.leaves.setdefault(lv, set()).add(kk)
        return kids

    def merge_children(self, level: int, k: tuple) -> None:
        """Replace the 2^d children of (level, k) by their parent."""
        for lv, kk in children_indices((level, k)):
            self.leaves[lv].discard(kk)
        self._internal.discard((level, k))
        self.leaves.setdefault(level, set()).add(k)

    def copy(self) -> "HybridMesh":
        return HybridMesh(self.domain, self.l_min, self.l_max,
                          list(self.iter_leaves()), self.halo_width)


def uniform_mesh(level: int, l_min: int, l_max: int, dom: Domain,
                 halo_width: int = 3) -> HybridMesh:
    if not l_min <= level <= l_max:
        raise ValueError("need l_min <= level <= l_max")
    ns = dom.n_cells(level)
    leaves = [(level, k) for k in product(*(range(n) for n in ns))]
    return HybridMesh(dom, l_min, l_max, leaves, halo_width)


class Field:
    """Per-leaf storage of q distribution values (cell averages)."""

    def __init__(self, mesh: HybridMesh, q: int):
        self.mesh = mesh
        self.q = q
        self.data: dict[tuple, np.ndarray] = {}

    @classmethod
    def from_function(cls, mesh: HybridMesh, q: int, fn) -> "Field":
        """fn(center tuple) -> length-q vector."""
        f = cls(mesh, q)
        for leaf in mesh.iter_leaves():
            f.data[leaf] = np.asarray(fn(cell_center(leaf, mesh.domain)), dtype=float)
        return f

    def copy(self) -> "Field":
        out = Field(self.mesh, self.q)
        out.data = {k: v.copy() for k, v in self.data.items()}
        return out

    def conserved(self, leaf) -> float:
        return float(self.data[leaf].sum())


def ensure_graded(mesh: HybridMesh, field: Field | None = None, op=None,
                  policy: str = "copy") -> HybridMesh:
    """Split coarse leaves until the grading invariant holds (in place).

    When a field is given, children of a split leaf are filled by prediction
    from a snapshot of the pre-split values.
    """
    from . import multires

    while True:
        bad = mesh._grading_violations()
        if not bad:
            return mesh
        cache = None
        if field is not None:
            snapshot = field.copy()
            cache = multires.ReconstructionCache(mesh.copy(), snapshot, op, policy)
        for level, k in sorted(bad):
            if not mesh.is_leaf(level, k):
                continue
            kids = mesh.split_leaf(level, k)
            if field is not None:
                for kid in kids:
                    field.data[kid] = cache.value(*kid).copy()
                del field.data[(level, k)]
    return mesh


def halo_indices(mesh: HybridMesh, level: int, width: int | None = None):
    """Same-level ring of `width` cells around the leaves of one level."""
    if width is None:
        width = mesh.halo_width
    occupied = mesh.leaves.get(level, set())
    d = mesh.domain.d
    ring = set()
    offs = [o for o in product(range(-width, width + 1), repeat=d) if any(o)]
    for k in occupied:
        for off in offs:
            nb = tuple(ki + oi for ki, oi in zip(k, off))
            if nb not in occupied:
                ring.add(nb)
    return ring


def fill_halos(field: Field, op, policy: str = "copy", width: int | None = None):
    """Populate ghost values around each leaf level.

    Interior halo cells get projection/prediction values from the adjacent
    leaves; out-of-domain cells follow the boundary policy.  Returns the
    halo map {(level, k): vector}.
    """
    from . import multires

    mesh = field.mesh
    cache = multires.ReconstructionCache(mesh, field, op, policy)
    halos: dict[tuple, np.ndarray] = {}
    for level in sorted(mesh.leaves):
        if not mesh.leaves[level]:
            continue
        for k in halo_indices(mesh, level, width):
            halos[(level, k)] = cache.value(level, k)
    field.halos = halos
    return halos


def dump_field(field: Field, stream) -> None:
    """One text line per leaf: level, k components, then the q values."""
    for level, k in field.mesh.iter_leaves():
        vals = " ".join(repr(float(v)) for v in field.data[(level, k)])
        stream.write(f"{level} {' '.join(str(ki) for ki in k)} {vals}\n")
