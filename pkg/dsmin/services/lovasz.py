"""Lovász extension, greedy base-polytope vertices and chain rounding"""
import numpy as np
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple
from dsmin.core.errors import InputError, UnsupportedError
from dsmin.services.setfn import SetFunctionHandle

BOX_SLACK = 1e-12


@dataclass(frozen=True)
class Permutation:
    """Ordering σ(1), ..., σ(d) of the ground set"""
    order: Tuple[int, ...]
    
    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise InputError(f"{order} is not a permutation of 0..{len(order) - 1}")
        object.__setattr__(self, "order", order)
    
    @property
    def d(self) -> int:
        return len(self.order)
    
    def array(self) -> np.ndarray:
        return np.asarray(self.order, dtype=int)
    
    def prefix(self, k: int) -> FrozenSet[int]:
        """S_k = {σ(1), ..., σ(k)}"""
        if not 0 <= k <= self.d:
            raise InputError(f"prefix length {k} outside 0..{self.d}")
        return frozenset(self.order[:k])
    
    @classmethod
    def identity(cls, d: int) -> "Permutation":
        return cls(tuple(range(d)))
    
    @classmethod
    def with_prefix(cls, X: Iterable[int], d: int) -> "Permutation":
        """Permutation listing X (ascending) before its complement (ascending)"""
        members = sorted(set(int(i) for i in X))
        rest = [i for i in range(d) if i not in set(members)]
        return cls(tuple(members + rest))


@dataclass(frozen=True, eq=False)
class BasePoint:
    """Vertex y of B(F) built by the greedy rule, optionally shifted by ρx"""
    y: np.ndarray
    source: Permutation
    shift: Optional[np.ndarray] = None
    
    @property
    def vertex(self) -> np.ndarray:
        """The B(F) part, without the shift"""
        return self.y if self.shift is None else self.y - self.shift


@dataclass(frozen=True)
class RoundedSet:
    """Best prefix of the sorting chain"""
    set: FrozenSet[int]
    value: float
    chain_index: int
    
    def sorted(self) -> List[int]:
        return sorted(self.set)


def _as_vector(x: Sequence[float], d: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError(f"expected a vector, got shape {x.shape}")
    if d is not None and x.size != d:
        raise InputError(f"vector has length {x.size}, expected {d}")
    if np.isnan(x).any():
        raise InputError("vector contains NaN")
    return x


def sort_decreasing(x: Sequence[float], tie_break: Optional[Sequence[float]] = None) -> Permutation:
    """
    Decreasing order of x
    
    Args:
        x: Real vector
        tie_break: Within equal x-entries, larger tie_break comes first
        
    Returns:
        Permutation; remaining ties go to the smaller index
    """
    x = _as_vector(x)
    tb = np.zeros_like(x) if tie_break is None else _as_vector(tie_break, x.size)
    idx = np.arange(x.size)
    return Permutation(tuple(np.lexsort((idx, -tb, -x)).tolist()))


def greedy_subgradient(F: SetFunctionHandle, sigma: Permutation) -> BasePoint:
    """y_{σ(k)} = F(σ(k) | S_{k-1})"""
    order = sigma.array()
    if order.size != F.d:
        raise InputError(f"permutation of length {order.size} for a function on {F.d} elements")
    y = np.zeros(F.d)
    y[order] = np.diff(F.chain_values(order))
    return BasePoint(y=y, source=sigma)


def lovasz_eval_and_subgradient(
    F: SetFunctionHandle, x: Sequence[float], tie_break: Optional[Sequence[float]] = None
) -> Tuple[float, BasePoint]:
    x = _as_vector(x, F.d)
    point = greedy_subgradient(F, sort_decreasing(x, tie_break))
    return float(x @ point.y), point


def lovasz_eval(F: SetFunctionHandle, x: Sequence[float]) -> float:
    """f_L(x) = Σ_k x_{σ(k)} F(σ(k) | S_{k-1})"""
    return lovasz_eval_and_subgradient(F, x)[0]


def check_box(x: Sequence[float], d: Optional[int] = None) -> np.ndarray:
    x = _as_vector(x, d)
    if np.any(x < -BOX_SLACK) or np.any(x > 1 + BOX_SLACK):
        raise InputError(f"point lies outside [0,1]^d (min {x.min():.3g}, max {x.max():.3g})")
    return x


def round_f(F: SetFunctionHandle, x: Sequence[float], tie_break: Optional[Sequence[float]] = None) -> RoundedSet:
    """
    Round a box point to the best prefix of its sorting chain
    
    Args:
        F: Set function to minimize along the chain
        x: Point in [0,1]^d
        tie_break: Optional tie-break passed to sort_decreasing
        
    Returns:
        RoundedSet with F(set) ≤ f_L(x); the shortest prefix wins ties
    """
    x = check_box(x, F.d)
    sigma = sort_decreasing(x, tie_break)
    values = F.chain_values(sigma.array())
    k = int(np.argmin(values))
    return RoundedSet(set=sigma.prefix(k), value=float(values[k]), chain_index=k)


def lipschitz_bound(F: SetFunctionHandle) -> float:
    """Lipschitz constant of f_L: F(V) when nondecreasing, else 3·value_bound"""
    if F.nondecreasing:
        return float(F.evaluate(range(F.d)))
    if F.value_bound is not None:
        return 3.0 * float(F.value_bound)
    raise UnsupportedError(f"{F.name}: no monotonicity flag or value bound to derive a Lipschitz constant")


def local_tie_breaks(x: Sequence[float]) -> List[np.ndarray]:
    """
    One tie-break vector per element i, moving i to the edge of its block
    
    Elements with x_i ≥ 1/2 are placed last among their equal-valued block and
    the others first, so for x = 1_X the chain of permutation i passes through
    X \\ {i} or X ∪ {i}.
    """
    x = _as_vector(x)
    breaks = []
    for i in range(x.size):
        tb = np.zeros(x.size)
        tb[i] = -1.0 if x[i] >= 0.5 else 1.0
        breaks.append(tb)
    return breaks
