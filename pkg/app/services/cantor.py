"""{1, ..., B} 上类 Cantor 集的构造与性质检查

Level 0 is the single interval [1, B]. Each level-(k-1) interval of length
n_{k-1} is split into a left part of length n_k, a middle gap of length
d_{k-1} = n_{k-1} - 2 n_k and a right part of length n_k, where
n_k = ceil(B (1-δ)^k / 2^k) and δ = ln 2 / (2 ln B). The number of levels ℓ
is the largest k >= 1 with B δ (1-δ)^{k-1} / 2^k >= 2; when no such k exists
the structure is degenerate (ℓ = 0, K_B = {1, ..., B}).
"""
import logging
import math
from typing import Dict, List, Optional

from app.models.cantor import CantorReport, CantorStructure, Interval
from app.services.errors import InputError

logger = logging.getLogger(__name__)

CEIL_RTOL = 1e-12
PROPERTY_SLACK = 1e-9


def _ceil(value: float) -> int:
    return math.ceil(value - CEIL_RTOL * abs(value))


def _levels(B: int, delta: float) -> int:
    ell = 0
    k = 1
    while B * delta * (1.0 - delta) ** (k - 1) / 2.0 ** k >= 2.0:
        ell = k
        k += 1
    return ell


def build_cantor(B: int) -> CantorStructure:
    if B < 2:
        raise InputError(f"B must be >= 2, got {B}")
    delta = math.log(2.0) / (2.0 * math.log(B))
    ell = _levels(B, delta)
    if ell == 0:
        logger.debug(f"B={B}: no level satisfies the split condition, structure is degenerate")
        return CantorStructure(
            B=B, delta=delta, ell=0, n_levels=[B], d_levels=[], intervals=[[(1, B)]], gaps=[], degenerate=True,
        )

    n_levels = [B] + [_ceil(B * (1.0 - delta) ** j / 2.0 ** j) for j in range(1, ell + 1)]
    d_levels = [n_levels[j - 1] - 2 * n_levels[j] for j in range(1, ell + 1)]
    intervals: List[List[Interval]] = [[(1, B)]]
    gaps: List[List[Interval]] = []
    for k in range(1, ell + 1):
        size, gap = n_levels[k], d_levels[k - 1]
        level, cut = [], []
        for start, end in intervals[-1]:
            level.append((start, start + size - 1))
            cut.append((start + size, start + size + gap - 1))
            level.append((start + size + gap, end))
        intervals.append(level)
        gaps.append(cut)
    return CantorStructure(
        B=B, delta=delta, ell=ell, n_levels=n_levels, d_levels=d_levels, intervals=intervals, gaps=gaps,
    )


def _spacing(left: Interval, right: Interval) -> int:
    return right[0] - left[1] - 1


def verify_cantor_properties(c: CantorStructure) -> CantorReport:
    """逐条检查六个结构性质；退化结构标记为不适用"""
    if c.degenerate or c.ell == 0:
        props: Dict[str, Optional[bool]] = {f"prop{i}": None for i in range(1, 7)}
        return CantorReport(B=c.B, ell=c.ell, card_KB=c.B, degenerate=True, properties=props)

    B, delta, ell = c.B, c.delta, c.ell
    n, d = c.n_levels, c.d_levels
    leaves = c.leaves
    card = c.card_KB

    prop1 = delta <= 0.5 and ell <= math.log(B) / math.log(2.0) + PROPERTY_SLACK

    prop2 = all(d[j] >= B * delta * (1.0 - delta) ** j / 2.0 ** (j + 1) - PROPERTY_SLACK for j in range(ell))
    prop2 = prop2 and n[ell] <= B * (1.0 - delta) ** ell / 2.0 ** (ell - 1) + PROPERTY_SLACK

    prop3 = len(leaves) == 1 << ell
    prop3 = prop3 and all(end - start + 1 == n[ell] for start, end in leaves)
    prop3 = prop3 and all(_spacing(leaves[2 * i], leaves[2 * i + 1]) == d[ell - 1] for i in range(len(leaves) // 2))

    prop4 = card >= B / 2.0

    prop5 = True
    covered = True
    nested = len(c.intervals) == ell + 1
    for k in range(ell + 1):
        blocks = [c.block_intervals(k, j) for j in range(1, (1 << k) + 1)]
        # K_k^j spans exactly I_k^j
        nested = nested and len(c.intervals[k]) == len(blocks) and all(
            blk[0][0] == iv[0] and blk[-1][1] == iv[1] for blk, iv in zip(blocks, c.intervals[k])
        )
        sizes = [sum(e - s + 1 for s, e in blk) for blk in blocks]
        prop5 = prop5 and all(size == (1 << (ell - k)) * n[ell] for size in sizes)
        if k >= 1:
            prop5 = prop5 and all(
                _spacing(blocks[2 * i][-1], blocks[2 * i + 1][0]) == d[k - 1] for i in range(len(blocks) // 2)
            )
        # K_k^j partition K_B
        covered = covered and sum(sizes) == card and [iv for blk in blocks for iv in blk] == leaves

    root = c.block_intervals(0, 1)
    prop6 = covered and nested and root == leaves and c.intervals[0] == [(1, B)]

    report = CantorReport(
        B=B, ell=ell, card_KB=card, degenerate=False,
        properties={"prop1": prop1, "prop2": prop2, "prop3": prop3, "prop4": prop4, "prop5": prop5, "prop6": prop6},
    )
    if not report.all_pass:
        logger.warning(f"B={B}: failed properties {[k for k, v in report.properties.items() if not v]}")
    return report
