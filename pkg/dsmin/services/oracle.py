"""Exhaustive ground truth for small ground sets.

Subsets are encoded as integers: bit i set means element i is in the set.
Every enumeration runs in ascending order of that code, so the witness
reported for a failed check is the first violation in that order.
"""
import itertools
import math
import numpy as np
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple
from dsmin.core.config import settings
from dsmin.core.errors import InputError, UnsupportedError
from dsmin.models.schemas import CheckedProperty, OracleReport
from dsmin.services.setfn import SetFunctionHandle
from dsmin.services.lovasz import Permutation, greedy_subgradient

TOL = 1e-12
POLYTOPE_TOL = 1e-9
LOVASZ_MAX_D = 7
VERTEX_MAX_D = 8
PAIR_MAX_D = 10


def _check_cap(d: int, cap: int, what: str) -> None:
    if d > cap:
        raise UnsupportedError(f"{what} is capped at d={cap}, got d={d}")


@lru_cache(maxsize=32)
def subset_masks(d: int) -> np.ndarray:
    """Boolean table of all 2^d subsets; row c is the subset with code c"""
    _check_cap(d, settings.ORACLE_MAX_D, "subset enumeration")
    codes = np.arange(1 << d, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(d)) & 1).astype(bool)
    masks.setflags(write=False)
    return masks


@lru_cache(maxsize=64)
def subset_values(F: SetFunctionHandle) -> np.ndarray:
    """F on every subset, indexed by subset code"""
    values = np.asarray(F.values_of_masks(subset_masks(F.d)), dtype=float)
    values.setflags(write=False)
    return values


def code_of(X: Iterable[int]) -> int:
    return int(sum(1 << int(i) for i in set(X)))


def members(code: int, d: int) -> List[int]:
    return [i for i in range(d) if (code >> i) & 1]


def _subset_min(values: np.ndarray, d: int) -> np.ndarray:
    """out[c] = min over subsets c' ⊆ c of values[c']"""
    out = values.copy()
    codes = np.arange(out.size)
    for j in range(d):
        has = ((codes >> j) & 1).astype(bool)
        out[has] = np.minimum(out[has], out[codes[has] ^ (1 << j)])
    return out


def _superset_min(values: np.ndarray, d: int) -> np.ndarray:
    """out[c] = min over supersets c' ⊇ c of values[c']"""
    out = values.copy()
    codes = np.arange(out.size)
    for j in range(d):
        lacks = ~((codes >> j) & 1).astype(bool)
        out[lacks] = np.minimum(out[lacks], out[codes[lacks] | (1 << j)])
    return out


def _marginals(values: np.ndarray, d: int, i: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gains F(i | c) on codes without i; codes containing i get NaN"""
    codes = np.arange(values.size)
    without = ((codes >> i) & 1) == 0
    gains = np.full(values.size, np.nan)
    gains[without] = values[codes[without] | (1 << i)] - values[without]
    return gains, without


def brute_force_min(F: SetFunctionHandle) -> OracleReport:
    """
    Exact minimum of F over all subsets
    
    Args:
        F: Set function with d ≤ ORACLE_MAX_D
        
    Returns:
        OracleReport with the minimum and every minimizer (ascending code order)
    """
    values = subset_values(F)
    best = float(values.min())
    codes = np.flatnonzero(values <= best + TOL)
    return OracleReport(
        checked_property=CheckedProperty.GLOBAL_MIN,
        global_min_value=best,
        global_minimizers=[members(int(c), F.d) for c in codes],
    )


def brute_force_max(F: SetFunctionHandle) -> OracleReport:
    values = subset_values(F)
    best = float(values.max())
    codes = np.flatnonzero(values >= best - TOL)
    return OracleReport(
        checked_property=CheckedProperty.GLOBAL_MIN,
        global_min_value=best,
        global_minimizers=[members(int(c), F.d) for c in codes],
        details={"sense": "max"},
    )


def best_flip(F: SetFunctionHandle, X: Iterable[int]) -> Tuple[List[int], float]:
    """Best set at Hamming distance one from X; first in element order on ties"""
    mask = F.ground.to_mask(X)
    flips = np.tile(mask, (F.d, 1))
    flips[np.arange(F.d), np.arange(F.d)] ^= True
    values = F.values_of_masks(flips)
    k = int(np.argmin(values))
    return np.flatnonzero(flips[k]).tolist(), float(values[k])


def is_local_min(F: SetFunctionHandle, X: Iterable[int], eps: float = 0.0) -> OracleReport:
    """F(X) ≤ F(X Δ {i}) + eps for every element i"""
    mask = F.ground.to_mask(X)
    value = F.evaluate(mask)
    flips = np.tile(mask, (F.d, 1))
    flips[np.arange(F.d), np.arange(F.d)] ^= True
    values = F.values_of_masks(flips)
    bad = np.flatnonzero(value > values + eps)
    report = OracleReport(
        checked_property=CheckedProperty.LOCAL_MIN,
        holds=bad.size == 0,
        details={"value": value, "best_flip_value": float(values.min()), "eps": eps},
    )
    if bad.size:
        report.witness = np.flatnonzero(flips[bad[0]]).tolist()
    return report


def is_strong_local_min(F: SetFunctionHandle, X: Iterable[int], eps: float = 0.0) -> OracleReport:
    """F(X) ≤ F(Y) + eps for every subset and every superset Y of X"""
    mask = F.ground.to_mask(X)
    inside = np.flatnonzero(mask)
    outside = np.flatnonzero(~mask)
    if (1 << inside.size) + (1 << outside.size) > (1 << settings.ORACLE_MAX_D):
        raise UnsupportedError(f"strong local minimality check too large for |X|={inside.size}, d={F.d}")
    value = F.evaluate(mask)
    
    subsets = np.zeros((1 << inside.size, F.d), dtype=bool)
    subsets[:, inside] = subset_masks(inside.size)
    supersets = np.tile(mask, (1 << outside.size, 1))
    supersets[:, outside] = subset_masks(outside.size)
    candidates = np.vstack((subsets, supersets))
    values = F.values_of_masks(candidates)
    bad = np.flatnonzero(value > values + eps)
    report = OracleReport(
        checked_property=CheckedProperty.STRONG_LOCAL_MIN,
        holds=bad.size == 0,
        details={"value": value, "best_neighbor_value": float(values.min()), "eps": eps},
    )
    if bad.size:
        report.witness = np.flatnonzero(candidates[bad[0]]).tolist()
    return report


def check_submodular(F: SetFunctionHandle) -> OracleReport:
    """F(i | A) ≥ F(i | B) − 1e-12 for all A ⊆ B, i ∉ B"""
    _check_cap(F.d, settings.VERIFY_FULL_MAX_D, "submodularity check")
    values = subset_values(F)
    codes = np.arange(values.size)
    for i in range(F.d):
        gains, without = _marginals(values, F.d, i)
        # codes holding i are excluded from the max transform
        largest_above = -_superset_min(np.where(without, -gains, np.inf), F.d)
        bad = np.flatnonzero(without & (largest_above > gains + TOL))
        if bad.size:
            a = int(bad[0])
            above = np.flatnonzero(without & ((codes & a) == a) & (gains > gains[a] + TOL))
            b = int(above[0])
            return OracleReport(
                checked_property=CheckedProperty.SUBMODULAR,
                holds=False,
                witness=members(a, F.d),
                details={"A": members(a, F.d), "B": members(b, F.d), "i": i,
                         "gain_A": float(gains[a]), "gain_B": float(gains[b])},
            )
    return OracleReport(checked_property=CheckedProperty.SUBMODULAR, holds=True)


def check_nondecreasing(F: SetFunctionHandle) -> OracleReport:
    """F(A ∪ {i}) ≥ F(A) − 1e-12 for all A and i"""
    values = subset_values(F)
    for i in range(F.d):
        gains, without = _marginals(values, F.d, i)
        bad = np.flatnonzero(without & (gains < -TOL))
        if bad.size:
            a = int(bad[0])
            return OracleReport(
                checked_property=CheckedProperty.NONDECREASING,
                holds=False,
                witness=members(a, F.d),
                details={"i": i, "gain": float(gains[a])},
            )
    return OracleReport(checked_property=CheckedProperty.NONDECREASING, holds=True)


def check_base_polytope(F: SetFunctionHandle, y: Sequence[float]) -> OracleReport:
    """y(V) = F(V) and y(A) ≤ F(A) for every A, both to 1e-9"""
    y = np.asarray(y, dtype=float)
    if y.shape != (F.d,):
        raise InputError(f"vector has shape {y.shape}, expected ({F.d},)")
    values = subset_values(F)
    sums = subset_masks(F.d).astype(float) @ y
    full = (1 << F.d) - 1
    if abs(sums[full] - values[full]) > POLYTOPE_TOL:
        return OracleReport(
            checked_property=CheckedProperty.BASE_POLYTOPE,
            holds=False,
            witness=list(range(F.d)),
            details={"y_of_set": float(sums[full]), "F_of_set": float(values[full])},
        )
    bad = np.flatnonzero(sums > values + POLYTOPE_TOL)
    if bad.size:
        a = int(bad[0])
        return OracleReport(
            checked_property=CheckedProperty.BASE_POLYTOPE,
            holds=False,
            witness=members(a, F.d),
            details={"y_of_set": float(sums[a]), "F_of_set": float(values[a])},
        )
    return OracleReport(checked_property=CheckedProperty.BASE_POLYTOPE, holds=True)


def weak_dr_constants(F: SetFunctionHandle) -> Tuple[Optional[float], Optional[float]]:
    """
    Weak DR-submodularity (alpha) and DR-supermodularity (beta) constants
    
    alpha = min F(i|A)/F(i|B) and beta = min F(i|B)/F(i|A) over A ⊆ B, i ∉ B,
    skipping zero denominators. Both lie in (0, 1]; a constant whose ratio
    reaches 0 does not exist and is reported as None.
    
    Args:
        F: Nondecreasing set function, d ≤ 12
        
    Returns:
        Tuple of (alpha, beta), each None when undefined
    """
    _check_cap(F.d, settings.VERIFY_FULL_MAX_D, "weak DR constants")
    monotone = check_nondecreasing(F)
    if not monotone.holds:
        raise UnsupportedError(f"{F.name} is not nondecreasing (witness {monotone.witness}, element {monotone.details['i']})")
    values = subset_values(F)
    alpha = beta = 1.0
    for i in range(F.d):
        gains, without = _marginals(values, F.d, i)
        masked = np.where(without, gains, np.inf)
        below = _subset_min(masked, F.d)
        above = _superset_min(masked, F.d)
        positive = without & (gains > TOL)
        if positive.any():
            alpha = min(alpha, float((below[positive] / gains[positive]).min()))
            beta = min(beta, float((above[positive] / gains[positive]).min()))
    return (alpha if alpha > TOL else None), (beta if beta > TOL else None)


def _closest_to_one(lhs: np.ndarray, rhs: np.ndarray) -> Optional[float]:
    """Constant c ∈ (0, ∞) nearest to 1 with lhs ≥ c·rhs everywhere, or None"""
    lo, hi = 0.0, math.inf
    pos, neg, zero = rhs > TOL, rhs < -TOL, np.abs(rhs) <= TOL
    if pos.any():
        hi = float((lhs[pos] / rhs[pos]).min())
    if neg.any():
        lo = max(lo, float((lhs[neg] / rhs[neg]).max()))
    if zero.any() and (lhs[zero] < -TOL).any():
        return None
    if hi <= 0 or lo > hi:
        return None
    return float(min(max(1.0, lo), hi))


def modularity_constants(F: SetFunctionHandle) -> OracleReport:
    """
    Pairwise alpha-submodularity and beta-supermodularity constants
    
    alpha satisfies F(A) + F(B) ≥ alpha(F(A∪B) + F(A∩B)) and beta satisfies
    beta(F(A) + F(B)) ≤ F(A∪B) + F(A∩B) for every pair; each is the feasible
    value closest to 1, or None when no positive constant works.
    """
    _check_cap(F.d, PAIR_MAX_D, "pairwise modularity constants")
    values = subset_values(F)
    a, b = np.meshgrid(np.arange(values.size), np.arange(values.size), indexing="ij")
    pair_sum = (values[a] + values[b]).ravel()
    lattice_sum = (values[a | b] + values[a & b]).ravel()
    alpha = _closest_to_one(pair_sum, lattice_sum)
    beta = _closest_to_one(lattice_sum, pair_sum)
    return OracleReport(
        checked_property=CheckedProperty.MODULARITY,
        holds=alpha is not None and beta is not None,
        details={"alpha": alpha, "beta": beta,
                 "nonnegative": bool((values >= -TOL).all()),
                 "nonpositive": bool((values <= TOL).all())},
    )


def lovasz_bruteforce(F: SetFunctionHandle, x: Sequence[float]) -> float:
    """max over all d! greedy vertices y of ⟨x, y⟩"""
    _check_cap(F.d, LOVASZ_MAX_D, "brute-force Lovász extension")
    x = np.asarray(x, dtype=float)
    return max(float(x @ greedy_subgradient(F, Permutation(p)).y) for p in itertools.permutations(range(F.d)))


def subdifferential_vertices(H: SetFunctionHandle, x: Sequence[float], rho: float = 0.0) -> List[np.ndarray]:
    """All distinct vertices of ρx + ∂h_L(x): greedy vertices of orders sorting x decreasingly"""
    _check_cap(H.d, VERTEX_MAX_D, "subdifferential enumeration")
    x = np.asarray(x, dtype=float)
    blocks = [np.flatnonzero(x == value).tolist() for value in sorted(set(x.tolist()), reverse=True)]
    seen, vertices = set(), []
    for parts in itertools.product(*(itertools.permutations(block) for block in blocks)):
        order = tuple(i for part in parts for i in part)
        y = rho * x + greedy_subgradient(H, Permutation(order)).y
        key = tuple(np.round(y, 12).tolist())
        if key not in seen:
            seen.add(key)
            vertices.append(y)
    return vertices


def approx_submodular_bound(min_value: float, eps: float, alpha: float) -> float:
    """Value bound for an eps-strong local min of an alpha-submodular F (alpha > 1/2)"""
    if alpha <= 0.5:
        raise InputError(f"bound needs alpha > 1/2, got {alpha}")
    return (min_value + 2 * eps * alpha) / (2 * alpha - 1)


def weak_dr_bound(G_star: float, H_star: float, beta: float, eps: float) -> float:
    """G(X*) − beta·H(X*) + eps for beta-weakly DR-supermodular H"""
    return G_star - beta * H_star + eps


def nonpositive_supermodular_bound(min_value: float, eps: float, beta: float) -> float:
    """Bound on min{F(X), F(V∖X)} for an eps-strong local min of a non-positive beta-supermodular F"""
    return min_value / (3 * beta ** 2) + 2 * eps / 3
