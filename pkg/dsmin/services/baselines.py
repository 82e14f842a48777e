"""Prior DS minimization methods: SubSup, SupSub, ModMod, direct PGM and direct greedy"""
import math
import time
import numpy as np
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple
from dsmin.core.errors import InputError, UnsupportedError
from dsmin.core.logger import logger
from dsmin.models.schemas import BoundKind, IterationRecord, SolverConfig, SolverTrace
from dsmin.services.setfn import CompositeFunction, DSInstance, ModularFunction, SetFunctionHandle
from dsmin.services.lovasz import (
    Permutation,
    check_box,
    greedy_subgradient,
    lipschitz_bound,
    lovasz_eval,
    round_f,
    sort_decreasing,
)
from dsmin.services.inner_solvers import solve_subproblem
from dsmin.services.dc_solvers import IterateState, cert_bound, localmin_restart_wrap


@dataclass(frozen=True, eq=False)
class ModularBound:
    """m(X) = offset + Σ_{j∈X} weights_j, tight at the anchor"""
    weights: np.ndarray
    offset: float
    anchor: FrozenSet[int]
    kind: BoundKind
    
    def value(self, X: Iterable[int]) -> float:
        mask = np.zeros(self.weights.size, dtype=bool)
        mask[list(X)] = True
        return self.offset + float(self.weights[mask].sum())
    
    def values_of_masks(self, masks: np.ndarray) -> np.ndarray:
        return self.offset + masks.astype(float) @ self.weights


def _exchange(F: SetFunctionHandle, mask: np.ndarray, add: bool) -> np.ndarray:
    """Rows equal to mask with element i forced in (add) or out, one row per i"""
    rows = np.tile(mask, (F.d, 1))
    rows[np.arange(F.d), np.arange(F.d)] = add
    return rows


def modular_upper(F: SetFunctionHandle, Y: Iterable[int], kind: BoundKind = BoundKind.UPPER1) -> ModularBound:
    """
    Modular upper bound of a submodular F, tight at Y
    
    Args:
        F: Submodular function
        Y: Anchor set
        kind: upper1 uses F(j | Y∖j) on Y and F(j | ∅) off Y;
            upper2 uses F(j | V∖j) on Y and F(j | Y) off Y
            
    Returns:
        ModularBound with m ≥ F everywhere and m(Y) = F(Y)
    """
    kind = BoundKind(kind)
    if kind == BoundKind.LOWER:
        raise InputError("modular_upper builds upper bounds only")
    mask = F.ground.to_mask(Y)
    F_Y = F.evaluate(mask)
    singles = F.values_of_masks(np.eye(F.d, dtype=bool))
    if kind == BoundKind.UPPER1:
        on_anchor = F_Y - F.values_of_masks(_exchange(F, mask, False))
        off_anchor = singles
    else:
        full = np.ones(F.d, dtype=bool)
        on_anchor = F.evaluate(full) - F.values_of_masks(_exchange(F, full, False))
        off_anchor = F.values_of_masks(_exchange(F, mask, True)) - F_Y
    weights = np.where(mask, on_anchor, off_anchor)
    offset = F_Y - float(on_anchor[mask].sum())
    return ModularBound(weights=weights, offset=offset, anchor=F.ground.from_mask(mask), kind=kind)


def modular_lower(F: SetFunctionHandle, Y: Iterable[int]) -> ModularBound:
    """Greedy vertex along a permutation whose |Y|-prefix is Y"""
    mask = F.ground.to_mask(Y)
    point = greedy_subgradient(F, Permutation.with_prefix(np.flatnonzero(mask).tolist(), F.d))
    return ModularBound(weights=point.y, offset=0.0, anchor=F.ground.from_mask(mask), kind=BoundKind.LOWER)


def double_greedy_max(F: SetFunctionHandle, seed=None) -> FrozenSet[int]:
    """
    Randomized double greedy for unconstrained submodular maximization
    
    Elements are visited in index order; i joins A with probability
    a′/(a′ + b′), a′ = max(F(i|A), 0), b′ = max(F(B∖i) − F(B), 0), and is
    accepted when a′ = b′ = 0.
    
    Args:
        F: Normalized submodular function
        seed: Seed or numpy Generator
        
    Returns:
        The selected set
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    A = np.zeros(F.d, dtype=bool)
    B = np.ones(F.d, dtype=bool)
    value_A, value_B = 0.0, F.evaluate(B)
    for i in range(F.d):
        A[i] = True
        with_i = F.evaluate(A)
        A[i] = False
        B[i] = False
        without_i = F.evaluate(B)
        B[i] = True
        a = max(with_i - value_A, 0.0)
        b = max(without_i - value_B, 0.0)
        p = 1.0 if a + b == 0 else a / (a + b)
        if rng.random() < p:
            A[i] = True
            value_A = with_i
        else:
            B[i] = False
            value_B = without_i
    return F.ground.from_mask(A)


def _start_set(inst: DSInstance, x0) -> FrozenSet[int]:
    """Start set from None, an index collection, a mask or a box point"""
    if x0 is None:
        return frozenset()
    if isinstance(x0, np.ndarray) and x0.dtype == bool:
        return inst.F.ground.from_mask(inst.F.ground.to_mask(x0))
    if isinstance(x0, np.ndarray) and x0.dtype.kind == "f":
        x0 = check_box(x0, inst.d)
        if np.all((x0 == 0) | (x0 == 1)):
            return frozenset(np.flatnonzero(x0 == 1).tolist())
        return round_f(inst.F, x0).set
    return frozenset(inst.F.ground.check_element(i) for i in x0)


class _SetTracer:
    """Bookkeeping shared by the set-valued baselines"""
    
    def __init__(self, method: str, inst: DSInstance, cfg: SolverConfig, rho: float = 0.0):
        self.inst = inst
        self.cfg = cfg
        self.trace = SolverTrace(method=method, rho=rho, seed=cfg.seed, d=inst.d)
        self.started = time.perf_counter()
    
    def record(self, k: int, X: FrozenSet[int], value: float, next_value: Optional[float],
               gap: float = 0.0, certified: bool = True, label: Optional[str] = None) -> None:
        x = self.inst.F.ground.indicator(X)
        wall = (time.perf_counter() - self.started) * 1000 if self.cfg.record_timing else 0.0
        self.started = time.perf_counter()
        self.trace.append(IterationRecord(
            k=k, F_disc=value, f_cont=value, f_next=next_value, pgm_gap=gap, wall_ms=wall,
            X=sorted(X), x=x.tolist(), candidate=label, certified=certified,
        ))
    
    def finish(self, X: FrozenSet[int], converged: bool, eps_x: float = 0.0) -> Tuple[IterateState, SolverTrace]:
        value = self.inst.F.evaluate(X)
        x = self.inst.F.ground.indicator(X)
        t = self.trace
        t.final_set, t.final_value, t.final_x = sorted(X), value, x.tolist()
        t.converged = converged
        t.certified = all(r.certified for r in t.records)
        t.certificate = cert_bound(t.rho, self.inst.d, self.cfg.eps_stop, eps_x)
        logger.info(f"{t.method}: finished after {len(t.records)} records, F={value:.6g}, converged={converged}")
        state = IterateState(x=x, X_rounded=frozenset(X), k=len(t.records) - 1, f_cont=value, F_disc=value)
        return state, t


def _subsup(inst: DSInstance, cfg: SolverConfig, x0=None):
    F, G, H = inst.F, inst.G, inst.H
    tracer = _SetTracer("subsup", inst, cfg)
    X = _start_set(inst, x0)
    converged, max_gap = False, 0.0
    for k in range(cfg.max_outer):
        value = F.evaluate(X)
        y = greedy_subgradient(H, Permutation.with_prefix(X, inst.d)).y
        res = solve_subproblem(G, y, 0.0, cfg.eps_x, cfg.pgm_max_iter, cfg.inner_mode, cfg.step_rule,
                               x0=F.ground.indicator(X))
        surrogate = CompositeFunction([(1.0, G), (-1.0, ModularFunction(y))], name="G-y")
        X_next = round_f(surrogate, res.x).set
        next_value = F.evaluate(X_next)
        max_gap = max(max_gap, res.gap_certificate)
        tracer.record(k, X, value, next_value, res.gap_certificate, res.certified)
        if X_next == X or value - next_value <= cfg.eps_stop:
            converged = True
            break
        X = X_next
    else:
        tracer.record(cfg.max_outer, X, F.evaluate(X), None)
    return tracer.finish(X, converged, max(cfg.eps_x, max_gap))


def _best_candidate(inst: DSInstance, candidates: List[Tuple[str, FrozenSet[int]]]) -> Tuple[str, FrozenSet[int], float]:
    values = [inst.F.evaluate(X) for _, X in candidates]
    j = int(np.argmin(values))
    return candidates[j][0], candidates[j][1], values[j]


def _surrogate_descent(method: str, inst: DSInstance, cfg: SolverConfig, x0, propose):
    tracer = _SetTracer(method, inst, cfg)
    X = _start_set(inst, x0)
    converged = False
    for k in range(cfg.max_outer):
        value = inst.F.evaluate(X)
        label, X_next, next_value = _best_candidate(inst, propose(X))
        tracer.record(k, X, value, next_value, label=label)
        if X_next == X or value - next_value <= cfg.eps_stop:
            converged = True
            break
        X = X_next
    else:
        tracer.record(cfg.max_outer, X, inst.F.evaluate(X), None)
    return tracer.finish(X, converged)


def _supsub(inst: DSInstance, cfg: SolverConfig, x0=None):
    rng = np.random.default_rng(cfg.seed)
    
    def propose(X):
        out = []
        for kind in (BoundKind.UPPER1, BoundKind.UPPER2):
            bound = modular_upper(inst.G, X, kind)
            target = CompositeFunction([(1.0, inst.H), (-1.0, ModularFunction(bound.weights))], name="H-m")
            out.append((kind.value, double_greedy_max(target, rng)))
        return out
    
    return _surrogate_descent("supsub", inst, cfg, x0, propose)


def _modmod(inst: DSInstance, cfg: SolverConfig, x0=None):
    def propose(X):
        lower = modular_lower(inst.H, X)
        out = []
        for kind in (BoundKind.UPPER1, BoundKind.UPPER2):
            combined = modular_upper(inst.G, X, kind).weights - lower.weights
            out.append((kind.value, frozenset(np.flatnonzero(combined < 0).tolist())))
        return out
    
    return _surrogate_descent("modmod", inst, cfg, x0, propose)


def _with_restart(solver, inst: DSInstance, cfg: SolverConfig, x0):
    if cfg.localmin_restart:
        return localmin_restart_wrap(solver, inst, cfg, x0)
    return solver(inst, cfg, x0)


def subsup_run(inst: DSInstance, cfg: SolverConfig, X0=None):
    """
    SubSup: X^{k+1} minimizes G − y^k with y^k tight at X^k
    
    Args:
        inst: DS instance (rho is ignored)
        cfg: Solver configuration; inner_mode selects PGM or exact solves
        X0: Start set, or an indicator vector
        
    Returns:
        Tuple of (IterateState, SolverTrace)
    """
    return _with_restart(_subsup, inst, cfg, X0)


def supsub_run(inst: DSInstance, cfg: SolverConfig, X0=None):
    """SupSub: maximize H − m over both modular upper bounds m of G by double greedy"""
    return _with_restart(_supsub, inst, cfg, X0)


def modmod_run(inst: DSInstance, cfg: SolverConfig, X0=None):
    """ModMod: minimize upper(G) − lower(H) in closed form, for both upper bounds"""
    return _with_restart(_modmod, inst, cfg, X0)


def pgm_direct_run(inst: DSInstance, cfg: SolverConfig, x0: Optional[Sequence[float]] = None):
    """
    Projected subgradient directly on f_L = g_L − h_L over the box
    
    The subgradient pairs the greedy vertices of G and H on the same order.
    Returns Round_F of the best iterate by f_L.
    """
    F, G, H = inst.F, inst.G, inst.H
    tracer = _SetTracer("pgm", inst, cfg)
    x = np.zeros(inst.d) if x0 is None else np.clip(check_box(x0, inst.d), 0.0, 1.0)
    try:
        kappa = lipschitz_bound(G) + lipschitz_bound(H)
    except UnsupportedError:
        kappa = None
    running = 0.0
    best_x, best_f = x.copy(), math.inf
    converged = False
    radius = math.sqrt(inst.d)
    for k in range(cfg.direct_max_iter):
        sigma = sort_decreasing(x)
        grad = greedy_subgradient(G, sigma).y - greedy_subgradient(H, sigma).y
        f_x = float(x @ grad)
        if f_x < best_f:
            best_x, best_f = x.copy(), f_x
        running = max(running, float(np.linalg.norm(grad)))
        scale = kappa if kappa else running
        step = radius / (scale * math.sqrt(k + 1)) if scale > 0 else 0.0
        x_next = np.clip(x - step * grad, 0.0, 1.0)
        rounded = round_f(F, x)
        tracer.trace.append(IterationRecord(
            k=k, F_disc=rounded.value, f_cont=f_x, f_next=lovasz_eval(F, x_next),
            X=rounded.sorted(), x=x.tolist(), step_norm=float(np.linalg.norm(x - x_next)),
        ))
        if np.array_equal(x_next, x):
            converged = True
            break
        x = x_next
    rounded = round_f(F, best_x)
    state, trace = tracer.finish(rounded.set, converged)
    state.x, state.f_cont = best_x, best_f
    trace.final_x = best_x.tolist()
    return state, trace


def greedy_direct_run(inst: DSInstance, cfg: SolverConfig, x0=None):
    """Randomized double greedy applied to −F"""
    tracer = _SetTracer("greedy", inst, cfg)
    X0 = _start_set(inst, x0)
    negated = CompositeFunction([(-1.0, inst.G), (1.0, inst.H)], name="-F")
    X = double_greedy_max(negated, cfg.seed)
    tracer.record(0, X0, inst.F.evaluate(X0), inst.F.evaluate(X))
    tracer.record(1, X, inst.F.evaluate(X), None)
    logger.debug(f"greedy: selected {len(X)} of {inst.d} elements")
    return tracer.finish(X, True)
