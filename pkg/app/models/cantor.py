from pydantic import BaseModel, ConfigDict, Field
from typing import Dict, List, Optional, Tuple

Interval = Tuple[int, int]


def _span(iv: Interval) -> List[int]:
    return list(range(iv[0], iv[1] + 1))


class CantorStructure(BaseModel):
    """{1, ..., B} 上的类 Cantor 集 K_B，区间均为闭区间 (start, end)，下标从 1 开始"""
    model_config = ConfigDict(frozen=True)

    B: int = Field(..., ge=2)
    delta: float = Field(..., description="间隙比例 ln2/(2 ln B)")
    ell: int = Field(..., ge=0, description="层数 ℓ_B")
    n_levels: List[int] = Field(..., description="n_0..n_ℓ")
    d_levels: List[int] = Field(..., description="d_0..d_{ℓ-1}")
    intervals: List[List[Interval]] = Field(..., description="intervals[k] 为第 k 层的 2^k 个区间 I_k^i")
    gaps: List[List[Interval]] = Field(..., description="gaps[k-1] 为第 k 层切出的 2^{k-1} 个间隙 J_k^i")
    degenerate: bool = False

    @property
    def leaves(self) -> List[Interval]:
        return self.intervals[self.ell]

    def block_intervals(self, k: int, j: int) -> List[Interval]:
        """K_k^j 所含的第 ℓ 层区间，j 从 1 开始"""
        if not 0 <= k <= self.ell:
            raise ValueError(f"level must lie in [0, {self.ell}], got {k}")
        width = 1 << (self.ell - k)
        if not 1 <= j <= (1 << k):
            raise ValueError(f"block index must lie in [1, {1 << k}], got {j}")
        return self.leaves[(j - 1) * width: j * width]

    def K_k_j(self, k: int, j: int) -> List[int]:
        return [i for iv in self.block_intervals(k, j) for i in _span(iv)]

    @property
    def K_B(self) -> List[int]:
        return [i for iv in self.leaves for i in _span(iv)]

    @property
    def card_KB(self) -> int:
        return sum(end - start + 1 for start, end in self.leaves)


class CantorReport(BaseModel):
    B: int
    ell: int
    card_KB: int
    degenerate: bool
    properties: Dict[str, Optional[bool]] = Field(..., description="prop1..prop6，退化结构为 None")

    @property
    def applicable(self) -> bool:
        return not self.degenerate

    @property
    def all_pass(self) -> bool:
        return self.applicable and all(self.properties.values())
