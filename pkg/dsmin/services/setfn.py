"""Ground sets, set-function oracles and the instance families built on them.

Elements are indexed ``0..d-1``. A subset is any iterable of element indices;
internally subsets travel as boolean masks of length ``d``. Every handle is
normalized (value 0 on the empty set) and immutable after construction, so
handles can be evaluated from several threads at once.
"""
import numpy as np
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence, Tuple
from dsmin.core.errors import InputError


Subset = Iterable[int]


class GroundSet:
    """The ground set V = {0, ..., d-1}"""
    
    def __init__(self, d: int):
        if int(d) != d or d < 1:
            raise InputError(f"ground set size must be a positive integer, got {d}")
        self.d = int(d)
    
    def check_element(self, i: int) -> int:
        if isinstance(i, (bool, np.bool_)) or int(i) != i or not 0 <= int(i) < self.d:
            raise InputError(f"element {i} is outside the ground set of size {self.d}")
        return int(i)
    
    def to_mask(self, X: Subset) -> np.ndarray:
        if isinstance(X, np.ndarray) and X.dtype == bool:
            if X.shape != (self.d,):
                raise InputError(f"mask has shape {X.shape}, expected ({self.d},)")
            return X
        mask = np.zeros(self.d, dtype=bool)
        for i in X:
            mask[self.check_element(i)] = True
        return mask
    
    def indicator(self, X: Subset) -> np.ndarray:
        return self.to_mask(X).astype(float)
    
    @staticmethod
    def from_mask(mask: np.ndarray) -> FrozenSet[int]:
        return frozenset(int(i) for i in np.flatnonzero(mask))
    
    def __eq__(self, other) -> bool:
        return isinstance(other, GroundSet) and other.d == self.d
    
    def __hash__(self) -> int:
        return hash(self.d)
    
    def __repr__(self) -> str:
        return f"GroundSet(d={self.d})"


class SetFunctionHandle(ABC):
    """Normalized set-function evaluation oracle"""
    
    def __init__(
        self,
        d: int,
        nondecreasing: Optional[bool] = None,
        value_bound: Optional[float] = None,
        name: str = "F",
    ):
        self.ground = GroundSet(d)
        self.nondecreasing = nondecreasing
        self.value_bound = value_bound
        self.name = name
    
    @property
    def d(self) -> int:
        return self.ground.d
    
    @abstractmethod
    def _value(self, mask: np.ndarray) -> float:
        """Value on a validated boolean mask"""
    
    def evaluate(self, X: Subset) -> float:
        """
        Evaluate the function on a subset
        
        Args:
            X: Iterable of element indices or a boolean mask of length d
            
        Returns:
            F(X) as a float
        """
        return float(self._value(self.ground.to_mask(X)))
    
    def __call__(self, X: Subset) -> float:
        return self.evaluate(X)
    
    def marginal_gain(self, i: int, X: Subset) -> float:
        """F(X ∪ {i}) − F(X); zero when i is already in X"""
        i = self.ground.check_element(i)
        mask = self.ground.to_mask(X).copy()
        if mask[i]:
            return 0.0
        base = self._value(mask)
        mask[i] = True
        return float(self._value(mask) - base)
    
    def chain_values(self, order: Sequence[int]) -> np.ndarray:
        """Values F(S_0), ..., F(S_d) along the prefixes of ``order``"""
        order = np.asarray(order, dtype=int)
        values = np.zeros(len(order) + 1)
        mask = np.zeros(self.d, dtype=bool)
        for k, i in enumerate(order, start=1):
            mask[i] = True
            values[k] = self._value(mask)
        return values
    
    def values_of_masks(self, masks: np.ndarray) -> np.ndarray:
        """Evaluate every row of a boolean matrix of shape (m, d)"""
        return np.array([self._value(row) for row in masks], dtype=float)
    
    def modular_weights(self) -> Optional[np.ndarray]:
        """Weight vector when the function is known to be modular"""
        return None
    
    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, d={self.d})"


class FunctionHandle(SetFunctionHandle):
    """Wraps a callable on frozensets"""
    
    def __init__(
        self,
        d: int,
        fn: Callable[[FrozenSet[int]], float],
        nondecreasing: Optional[bool] = None,
        value_bound: Optional[float] = None,
        name: str = "F",
    ):
        super().__init__(d, nondecreasing, value_bound, name)
        self._fn = fn
        empty = float(fn(frozenset()))
        if empty != 0.0:
            raise InputError(f"set function {name!r} is not normalized: F(∅) = {empty}")
    
    def _value(self, mask: np.ndarray) -> float:
        return float(self._fn(GroundSet.from_mask(mask)))


class ModularFunction(SetFunctionHandle):
    """x(A) = Σ_{i∈A} x_i"""
    
    def __init__(self, weights: Sequence[float], name: str = "m"):
        weights = np.array(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise InputError("modular weights must be a non-empty vector")
        if not np.all(np.isfinite(weights)):
            raise InputError("modular weights must be finite")
        positive = float(weights[weights > 0].sum())
        negative = float(-weights[weights < 0].sum())
        super().__init__(
            weights.size,
            nondecreasing=bool(np.all(weights >= 0)),
            value_bound=max(positive, negative),
            name=name,
        )
        self.weights = weights
        self.weights.setflags(write=False)
    
    def _value(self, mask: np.ndarray) -> float:
        return float(self.weights[mask].sum())
    
    def chain_values(self, order: Sequence[int]) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.weights[np.asarray(order, dtype=int)])))
    
    def values_of_masks(self, masks: np.ndarray) -> np.ndarray:
        return masks.astype(float) @ self.weights
    
    def modular_weights(self) -> Optional[np.ndarray]:
        return self.weights


_TRANSFORMS = {
    "identity": lambda n: np.asarray(n, dtype=float),
    "sqrt": lambda n: np.sqrt(np.asarray(n, dtype=float)),
}


class SetCoverFunction(SetFunctionHandle):
    """alpha · t(|⋃_{i∈X} U_i|) for a concave transform t"""
    
    def __init__(
        self,
        universe_size: int,
        covers: Sequence[Iterable[int]],
        alpha: float = 1.0,
        transform: str = "identity",
        nondecreasing: Optional[bool] = True,
        name: str = "cover",
    ):
        covers = [list(c) for c in covers]
        if not covers:
            raise InputError("set cover needs one cover per ground element, got none")
        if universe_size < 0:
            raise InputError(f"universe size must be nonnegative, got {universe_size}")
        if alpha <= 0:
            raise InputError(f"set cover weight alpha must be positive, got {alpha}")
        if transform not in _TRANSFORMS:
            raise InputError(f"unknown cover transform {transform!r}")
        incidence = np.zeros((len(covers), universe_size), dtype=bool)
        for i, cover in enumerate(covers):
            for u in cover:
                if int(u) != u or not 0 <= u < universe_size:
                    raise InputError(f"cover of element {i} contains {u}, outside universe of size {universe_size}")
                incidence[i, int(u)] = True
        self.alpha = float(alpha)
        self.universe_size = int(universe_size)
        self.transform = transform
        self._t = _TRANSFORMS[transform]
        self.incidence = incidence
        self.incidence.setflags(write=False)
        super().__init__(
            len(covers),
            nondecreasing=nondecreasing,
            value_bound=self.alpha * float(self._t(universe_size)),
            name=name,
        )
    
    def _value(self, mask: np.ndarray) -> float:
        covered = int(np.any(self.incidence[mask], axis=0).sum()) if mask.any() else 0
        return self.alpha * float(self._t(covered))
    
    def chain_values(self, order: Sequence[int]) -> np.ndarray:
        order = np.asarray(order, dtype=int)
        if order.size == 0 or self.universe_size == 0:
            return np.zeros(order.size + 1)
        covered = np.logical_or.accumulate(self.incidence[order], axis=0).sum(axis=1)
        return np.concatenate(([0.0], self.alpha * self._t(covered)))
    
    def values_of_masks(self, masks: np.ndarray) -> np.ndarray:
        counts = ((masks.astype(np.int64) @ self.incidence.astype(np.int64)) > 0).sum(axis=1)
        return self.alpha * self._t(counts)


class ConcaveOfModularFunction(SetFunctionHandle):
    """Σ_g √(m(X ∩ V_g)) over a partition V_1, ..., V_r"""
    
    def __init__(self, groups: Sequence[Iterable[int]], weights: Sequence[float], name: str = "concave"):
        weights = np.array(weights, dtype=float)
        d = weights.size
        if d == 0:
            raise InputError("concave-of-modular needs at least one weight")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InputError("concave-of-modular weights must be finite and nonnegative")
        group_of = np.full(d, -1, dtype=int)
        groups = [list(g) for g in groups]
        for g, members in enumerate(groups):
            for i in members:
                if int(i) != i or not 0 <= i < d:
                    raise InputError(f"group {g} contains {i}, outside the ground set of size {d}")
                if group_of[int(i)] >= 0:
                    raise InputError(f"element {i} appears in more than one group")
                group_of[int(i)] = g
        if np.any(group_of < 0):
            missing = np.flatnonzero(group_of < 0).tolist()
            raise InputError(f"groups do not cover elements {missing}")
        self.weights = weights
        self.groups = groups
        self.group_of = group_of
        self._membership = np.zeros((d, len(groups)))
        self._membership[np.arange(d), group_of] = weights
        super().__init__(d, nondecreasing=True, name=name)
        self.value_bound = self._value(np.ones(d, dtype=bool))
    
    def _value(self, mask: np.ndarray) -> float:
        return float(np.sqrt(self._membership[mask].sum(axis=0)).sum())
    
    def chain_values(self, order: Sequence[int]) -> np.ndarray:
        order = np.asarray(order, dtype=int)
        mass = np.cumsum(self._membership[order], axis=0)
        return np.concatenate(([0.0], np.sqrt(mass).sum(axis=1)))
    
    def values_of_masks(self, masks: np.ndarray) -> np.ndarray:
        return np.sqrt(masks.astype(float) @ self._membership).sum(axis=1)


class EmpiricalEntropyFunction(SetFunctionHandle):
    """Plug-in Shannon entropy (nats) of the empirical joint law of columns X"""
    
    def __init__(self, data: np.ndarray, name: str = "entropy"):
        data = np.asarray(data)
        if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] == 0:
            raise InputError("entropy needs a non-empty n×d data matrix")
        if not np.isin(data, (0, 1)).all():
            raise InputError("entropy data must be binary")
        self.data = data.astype(np.int64)
        self.n = data.shape[0]
        super().__init__(data.shape[1], nondecreasing=True, name=name)
        self.value_bound = self._value(np.ones(self.d, dtype=bool))
    
    def _entropy(self, counts: np.ndarray) -> float:
        p = counts[counts > 0] / self.n
        return float(-(p * np.log(p)).sum())
    
    def _value(self, mask: np.ndarray) -> float:
        if not mask.any():
            return 0.0
        _, counts = np.unique(self.data[:, mask], axis=0, return_counts=True)
        return self._entropy(counts)
    
    def chain_values(self, order: Sequence[int]) -> np.ndarray:
        order = np.asarray(order, dtype=int)
        values = np.zeros(order.size + 1)
        labels = np.zeros(self.n, dtype=np.int64)
        for k, j in enumerate(order, start=1):
            _, labels = np.unique(labels * 2 + self.data[:, j], return_inverse=True)
            labels = labels.ravel()
            values[k] = self._entropy(np.bincount(labels))
        return values


class CompositeFunction(SetFunctionHandle):
    """Weighted sum Σ c_j F_j of handles on the same ground set"""
    
    def __init__(self, terms: Sequence[Tuple[float, SetFunctionHandle]], name: str = "F"):
        terms = [(float(c), h) for c, h in terms]
        if not terms:
            raise InputError("composite function needs at least one term")
        d = terms[0][1].d
        if any(h.d != d for _, h in terms):
            raise InputError("composite terms live on different ground sets")
        nondecreasing = True if all(c >= 0 and h.nondecreasing for c, h in terms) else None
        bounds = [h.value_bound for _, h in terms]
        value_bound = None
        if all(b is not None for b in bounds):
            value_bound = float(sum(abs(c) * b for (c, _), b in zip(terms, bounds)))
        super().__init__(d, nondecreasing=nondecreasing, value_bound=value_bound, name=name)
        self.terms = terms
    
    def _value(self, mask: np.ndarray) -> float:
        return float(sum(c * h._value(mask) for c, h in self.terms))
    
    def chain_values(self, order: Sequence[int]) -> np.ndarray:
        return sum(c * h.chain_values(order) for c, h in self.terms)
    
    def values_of_masks(self, masks: np.ndarray) -> np.ndarray:
        return sum(c * h.values_of_masks(masks) for c, h in self.terms)
    
    def modular_weights(self) -> Optional[np.ndarray]:
        parts = [h.modular_weights() for _, h in self.terms]
        if any(p is None for p in parts):
            return None
        return sum(c * p for (c, _), p in zip(self.terms, parts))


def combine(terms: Sequence[Tuple[float, SetFunctionHandle]], name: str = "F") -> SetFunctionHandle:
    """Weighted sum of handles"""
    return CompositeFunction(terms, name=name)


def make_function(
    d: int,
    fn: Callable[[FrozenSet[int]], float],
    nondecreasing: Optional[bool] = None,
    value_bound: Optional[float] = None,
    name: str = "F",
) -> SetFunctionHandle:
    return FunctionHandle(d, fn, nondecreasing=nondecreasing, value_bound=value_bound, name=name)


def make_set_cover(
    universe_size: int,
    covers: Sequence[Iterable[int]],
    alpha: float = 1.0,
    transform: str = "identity",
    nondecreasing: Optional[bool] = True,
    name: str = "cover",
) -> SetFunctionHandle:
    """
    Build the (weighted) set cover function alpha·|⋃_{i∈X} U_i|
    
    Args:
        universe_size: Number of items that can be covered
        covers: One list of covered items per ground element
        alpha: Positive weight
        transform: "identity" or "sqrt" applied to the covered count
        nondecreasing: Monotonicity flag carried by the handle
        
    Returns:
        Set cover handle with value_bound = alpha·t(universe_size)
    """
    return SetCoverFunction(universe_size, covers, alpha, transform, nondecreasing, name)


def make_concave_of_modular(
    groups: Sequence[Iterable[int]], weights: Sequence[float], name: str = "concave"
) -> SetFunctionHandle:
    return ConcaveOfModularFunction(groups, weights, name=name)


def make_empirical_entropy(
    data: np.ndarray,
    columns: Optional[Sequence[int]] = None,
    rows: Optional[Sequence[int]] = None,
    name: str = "entropy",
) -> SetFunctionHandle:
    """
    Plug-in entropy of the columns of a binary data matrix
    
    Args:
        data: Binary matrix of shape (n, p)
        columns: Columns forming the ground set (all by default)
        rows: Rows to use (all by default)
        
    Returns:
        Entropy handle in nats over a ground set of size len(columns)
    """
    data = np.asarray(data)
    if data.ndim != 2 or data.size == 0:
        raise InputError("entropy needs a non-empty n×d data matrix")
    if rows is not None:
        data = data[np.asarray(rows, dtype=int)]
    if columns is not None:
        data = data[:, np.asarray(columns, dtype=int)]
    return EmpiricalEntropyFunction(data, name=name)


def make_modular(weights: Sequence[float], name: str = "m") -> SetFunctionHandle:
    return ModularFunction(weights, name=name)


def make_zero(d: int) -> SetFunctionHandle:
    return ModularFunction(np.zeros(d), name="zero")


@dataclass(frozen=True)
class DSInstance:
    """DS decomposition F = G − H with regularization weight rho"""
    G: SetFunctionHandle
    H: SetFunctionHandle
    rho: float = 0.0
    name: str = "ds"
    
    def __post_init__(self):
        if self.G.d != self.H.d:
            raise InputError(f"G and H live on different ground sets ({self.G.d} vs {self.H.d})")
        if self.rho < 0:
            raise InputError(f"rho must be nonnegative, got {self.rho}")
        object.__setattr__(self, "F", CompositeFunction([(1.0, self.G), (-1.0, self.H)], name=f"{self.name}.F"))
    
    @property
    def d(self) -> int:
        return self.G.d
    
    def with_rho(self, rho: float) -> "DSInstance":
        return DSInstance(self.G, self.H, rho, self.name)


def tiny_a(alpha: float = 1.0) -> DSInstance:
    """d=3: G = alpha|X|, H = alpha|⋃U_i| with nested U_1 ⊂ U_2 ⊂ U_3"""
    G = make_modular(np.full(3, alpha), name="G")
    H = make_set_cover(3, [[0], [0, 1], [0, 1, 2]], alpha, name="H")
    return DSInstance(G, H, name="tiny_a")


def tiny_c(d: int = 5, alpha: float = 1.0) -> DSInstance:
    """A weak local minimum at {0} far from the optimum {1, 2}"""
    if d < 4:
        raise InputError(f"tiny_c needs d >= 4, got {d}")
    g_covers = [[0], [1], [1]] + [[2]] * (d - 3)
    h_covers = [[0], [1], [2]] + [[0]] * (d - 3)
    G = make_set_cover(3, g_covers, alpha, name="G")
    H = make_set_cover(3, h_covers, alpha, name="H")
    return DSInstance(G, H, name="tiny_c")


def tiny_d(alpha: float = 1.0) -> DSInstance:
    """Supermodular F that is not non-positive; {1} is a strong local min, {3} the optimum"""
    G = make_modular(np.full(4, 2 * alpha), name="G")
    H = make_set_cover(4, [list(range(i + 1)) for i in range(4)], alpha, name="H")
    return DSInstance(G, H, name="tiny_d")


def random_cover_instance(
    rng: np.random.Generator, d: int, universe: int = 6, density: float = 0.35
) -> DSInstance:
    """Random integer-valued set-cover pair, used by tests and the verify suite"""
    def covers() -> List[List[int]]:
        out = []
        for _ in range(d):
            items = np.flatnonzero(rng.random(universe) < density).tolist()
            out.append(items or [int(rng.integers(universe))])
        return out
    
    G = make_set_cover(universe, covers(), 1.0, name="G")
    H = make_set_cover(universe, covers(), 1.0, name="H")
    return DSInstance(G, H, name=f"random_cover_{d}")
