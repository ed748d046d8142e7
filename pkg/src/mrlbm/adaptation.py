"""Detail-threshold mesh adaptation with level-dependent bounds.

Each round flags leaves by the size of their prediction detail: small
details allow coarsening (all siblings must agree), large ones force
refinement.  Refinement wins conflicts; rounds repeat until the mesh stops
changing, then the graded-tree repair runs once more.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .mesh import (Field, HybridMesh, children_indices, ensure_graded,
                   parent_index)
from .multires import PredictionOperator, ReconstructionCache, detail

__all__ = ["AdaptParams", "AdaptationError", "adapt_mesh"]


@dataclass(frozen=True)
class AdaptParams:
    epsilon: float
    mu_bar: int
    l_min: int
    l_max: int

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("threshold must satisfy 0 < epsilon < 1")
        if self.mu_bar < 0 or self.mu_bar != int(self.mu_bar):
            raise ValueError("mu_bar must be a non-negative integer")

    def coarsen_bound(self, d: int, dl: int) -> float:
        return self.epsilon * 2.0 ** (-d * dl)

    def refine_bound(self, d: int, dl: int) -> float:
        return self.epsilon * 2.0 ** (-d * (dl - 1) + self.mu_bar)


class AdaptationError(RuntimeError):
    pass


def adapt_mesh(mesh: HybridMesh, field: Field, params: AdaptParams,
               op: PredictionOperator, policy: str = "copy"):
    """Fixpoint of refine/coarsen/regrade; returns (mesh, field) mutated in place."""
    d = mesh.domain.d
    max_rounds = 2 * (params.l_max - params.l_min) + 2
    for _ in range(max_rounds):
        changed = False
        cache = ReconstructionCache(mesh.copy(), field.copy(), op, policy)
        details = {leaf: detail(mesh, field, leaf, op, policy, cache)
                   for leaf in mesh.iter_leaves() if leaf[0] > 0}

        refine = set()
        for leaf, det in details.items():
            level = leaf[0]
            if level < params.l_max and det >= params.refine_bound(d, mesh.l_max - level):
                refine.add(leaf)
        for leaf in sorted(refine):
            kids = mesh.split_leaf(*leaf)
            for kid in kids:
                field.data[kid] = cache.value(*kid).copy()
            del field.data[leaf]
            changed = True

        before = mesh.num_leaves()
        ensure_graded(mesh, field, op, policy)
        changed = changed or mesh.num_leaves() != before

        # coarsening: all 2^d siblings must be leaves below the bound and not
        # just created; the merged parent must keep the tree graded
        candidates: dict[tuple, list] = {}
        for leaf, det in details.items():
            level, k = leaf
            if (level <= params.l_min or leaf in refine
                    or not mesh.is_leaf(level, k)
                    or det > params.coarsen_bound(d, mesh.l_max - level)):
                continue
            candidates.setdefault(parent_index(leaf), []).append(leaf)
        for parent, group in sorted(candidates.items()):
            if len(group) != 1 << d:
                continue
            if not _merge_keeps_grading(mesh, parent):
                continue
            vals = [field.data[kid] for kid in sorted(group)]
            mesh.merge_children(*parent)
            field.data[parent] = sum(vals) / len(vals)
            for kid in group:
                del field.data[kid]
            changed = True

        if not changed:
            return mesh, field
    raise AdaptationError(f"mesh did not settle within {max_rounds} rounds")


def _merge_keeps_grading(mesh: HybridMesh, parent) -> bool:
    """No leaf finer than level+1 may touch the merged cell."""
    level, k = parent
    offsets = product((-1, 0, 1), repeat=len(k))
    for off in offsets:
        nb = tuple(ki + oi for ki, oi in zip(k, off))
        if not mesh.in_bounds(level, nb):
            continue
        if any(off):
            finest = mesh.max_touching_leaf_level(level, nb, off)
        else:
            finest = _finest_under(mesh, level, nb)
        if finest is not None and finest - level > 1:
            return False
    return True


def _finest_under(mesh: HybridMesh, level: int, k: tuple):
    leaf = mesh.covering_leaf(level, k)
    if leaf is not None:
        return leaf[0]
    if not mesh.is_subdivided(level, k):
        return None
    best = None
    for child in children_indices((level, k)):
        sub = _finest_under(mesh, child[0], child[1])
        if sub is not None:
            best = sub if best is None else max(best, sub)
    return best
