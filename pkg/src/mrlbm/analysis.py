"""Moment sums of flattened stencils against the target expansion.

A stencil matches the reference stream at order s when its discrete moments
reproduce the Taylor coefficients of the exact shift through order s,
uniformly in the level gap.  All comparisons here are exact rational
identities; there are no tolerances.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

from .transport import P_GAMMA1, FlattenedStencil, stencil_for

__all__ = [
    "MatchRow",
    "MatchReport",
    "moment_sum",
    "moment_sum_2d",
    "match_target",
    "match_order",
    "match_order_2d",
    "p_column_lemma_check",
    "report_rows_csv",
    "format_report",
]

MAX_ORDER_1D = 5   # one beyond any claim, to expose the first failure


@dataclass(frozen=True)
class MatchRow:
    order: tuple          # (p,) or (p_x, p_y)
    computed: Fraction
    target: Fraction

    @property
    def passed(self) -> bool:
        return self.computed == self.target


@dataclass(frozen=True)
class MatchReport:
    tag: str
    c: tuple
    dl: int
    zero_sum: Fraction
    rows: tuple

    @property
    def zero_sum_ok(self) -> bool:
        return self.zero_sum == 0

    @property
    def max_order(self) -> int:
        """Largest s with zero-sum and all orders p <= s matched."""
        if not self.zero_sum_ok:
            return -1
        best = 0
        for s in range(1, self._order_bound() + 1):
            if all(row.passed for row in self.rows if max(row.order) <= s):
                best = s
            else:
                break
        return best

    def _order_bound(self) -> int:
        return max(max(row.order) for row in self.rows)

    def first_failure(self) -> MatchRow | None:
        for row in self.rows:
            if not row.passed:
                return row
        return None

    def row(self, order) -> MatchRow:
        order = order if isinstance(order, tuple) else (order,)
        for r in self.rows:
            if r.order == order:
                return r
        raise KeyError(order)


def moment_sum(stencil: FlattenedStencil, p: int) -> Fraction:
    """sum_m m^p C[m], exact."""
    if stencil.d != 1:
        raise ValueError("moment_sum is one-dimensional; use moment_sum_2d")
    return sum((Fraction(off[0]) ** p * w for off, w in stencil.weights), Fraction(0))


def moment_sum_2d(stencil: FlattenedStencil, px: int, py: int) -> Fraction:
    if stencil.d != 2:
        raise ValueError("moment_sum_2d needs a 2D stencil")
    return sum((Fraction(off[0]) ** px * Fraction(off[1]) ** py * w
                for off, w in stencil.weights), Fraction(0))


def match_target(c, dl: int, order) -> Fraction:
    """(-c_x)^px (-c_y)^py / 2^(dl (px + py - d)) for d in {1, 2}."""
    c = (c,) if isinstance(c, int) else tuple(c)
    order = (order,) if isinstance(order, int) else tuple(order)
    num = Fraction(1)
    for ci, p in zip(c, order):
        num *= Fraction(-ci) ** p
    return num / Fraction(2) ** (dl * (sum(order) - len(c)))


def match_order(stencil: FlattenedStencil, c: int, dl: int,
                max_p: int = MAX_ORDER_1D) -> MatchReport:
    """Evaluate p = 1..max_p and report the largest matched order."""
    rows = tuple(MatchRow((p,), moment_sum(stencil, p), match_target(c, dl, p))
                 for p in range(1, max_p + 1))
    return MatchReport(stencil.tag, (c,), dl, stencil.zero_sum(), rows)


def match_order_2d(stencil: FlattenedStencil, c, dl: int,
                   max_p: int = 3) -> MatchReport:
    """All (p_x, p_y) with exponents <= max_p, (0, 0) excluded as zero-sum."""
    rows = []
    for px in range(0, max_p + 1):
        for py in range(0, max_p + 1):
            if px == py == 0:
                continue
            rows.append(MatchRow((px, py), moment_sum_2d(stencil, px, py),
                                 match_target(c, dl, (px, py))))
    return MatchReport(stencil.tag, tuple(c), dl, stencil.zero_sum(), tuple(rows))


def p_column_lemma_check() -> list[tuple]:
    """Column sums of P: sum_m m^s P[m+2, j] = 2^(1-s) (j-2)^s, s,j small."""
    table = []
    for s in range(0, 4):
        for j in range(0, 5):
            got = sum(Fraction(m) ** s * P_GAMMA1[m + 2][j] for m in range(-2, 3))
            want = Fraction(2) ** (1 - s) * Fraction(j - 2) ** s
            table.append((s, j, got, want, got == want))
    return table


# --- reporting --------------------------------------------------------------

def report_rows_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["scheme", "c", "dl", "order", "computed", "target", "pass"])
    for rep in reports:
        c = ",".join(map(str, rep.c))
        writer.writerow([rep.tag, c, rep.dl, "0", str(rep.zero_sum), "0",
                         rep.zero_sum_ok])
        for row in rep.rows:
            writer.writerow([rep.tag, c, rep.dl, ",".join(map(str, row.order)),
                             str(row.computed), str(row.target), row.passed])
    return buf.getvalue()


def format_report(rep: MatchReport) -> str:
    lines = [f"scheme={rep.tag} c={rep.c} dl={rep.dl}  max matched order: {rep.max_order}"]
    mark = "ok" if rep.zero_sum_ok else "FAIL"
    lines.append(f"  sum C = {rep.zero_sum}  [{mark}]")
    for row in rep.rows:
        mark = "ok" if row.passed else "FAIL"
        p = ",".join(map(str, row.order))
        lines.append(f"  p={p}: sum m^p C = {row.computed}  target {row.target}  [{mark}]")
    return "\n".join(lines)


def scheme_report(scheme: str, c, dl_max: int):
    """Match reports of one scheme over all level gaps up to dl_max."""
    c = (c,) if isinstance(c, int) else tuple(c)
    reports = []
    for dl in range(dl_max + 1):
        st = stencil_for(scheme, c if len(c) > 1 else c[0], dl)
        if len(c) == 1:
            reports.append(match_order(st, c[0], dl))
        else:
            reports.append(match_order_2d(st, c, dl))
    return reports
