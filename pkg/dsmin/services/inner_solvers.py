"""Inner solvers: the convex x-subproblem and the concave y-subproblem.

The x-subproblem minimizes Φ(x) = g_L(x) − ⟨y, x⟩ + (ρ/2)‖x‖² over the box
[0,1]^d by projected subgradient steps (PGM). The y-subproblem minimizes
φ_k(w) = ⟨w, x^k⟩ − g*(w) over ∂h(x^k) by Frank–Wolfe with unit steps.
"""
import math
import numpy as np
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
from dsmin.core.config import settings
from dsmin.core.errors import InputError, UnsupportedError
from dsmin.core.logger import logger
from dsmin.models.schemas import InnerMode, StepRule
from dsmin.services.setfn import DSInstance, SetFunctionHandle
from dsmin.services.lovasz import (
    BasePoint,
    Permutation,
    check_box,
    greedy_subgradient,
    lipschitz_bound,
    lovasz_eval,
    lovasz_eval_and_subgradient,
    sort_decreasing,
)
from dsmin.services.oracle import code_of, subset_masks, subset_values

CHECK_EVERY = 25
TIE_SLACK = 1e-12


@dataclass
class PgmProblem:
    """min_{x∈[0,1]^d} g_L(x) − ⟨y, x⟩ + (ρ/2)‖x‖²"""
    G: SetFunctionHandle
    linear: np.ndarray
    rho: float = 0.0
    x0: Optional[np.ndarray] = None
    
    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        if self.linear.shape != (self.G.d,):
            raise InputError(f"linear term has shape {self.linear.shape}, expected ({self.G.d},)")
        if self.rho < 0:
            raise InputError(f"rho must be nonnegative, got {self.rho}")
        self.x0 = np.zeros(self.G.d) if self.x0 is None else np.clip(check_box(self.x0, self.G.d), 0.0, 1.0)
    
    @property
    def d(self) -> int:
        return self.G.d
    
    def objective(self, x: np.ndarray) -> float:
        return lovasz_eval(self.G, x) - float(self.linear @ x) + 0.5 * self.rho * float(x @ x)
    
    def minorant_min(self, b: np.ndarray) -> Tuple[float, np.ndarray]:
        """Box minimum of ⟨b, z⟩ + (ρ/2)‖z‖², separable per coordinate"""
        if self.rho > 0:
            z = np.clip(-b / self.rho, 0.0, 1.0)
        else:
            z = (b < 0).astype(float)
        return float(b @ z + 0.5 * self.rho * z @ z), z
    
    def vertex_objectives(self, order: np.ndarray) -> np.ndarray:
        """Φ at the indicator of every prefix of ``order``"""
        k = np.arange(order.size + 1)
        linear = np.concatenate(([0.0], np.cumsum(self.linear[order])))
        return self.G.chain_values(order) - linear + 0.5 * self.rho * k


@dataclass
class PgmResult:
    """Approximate minimizer of the x-subproblem"""
    x: np.ndarray
    objective: float
    gap_certificate: float
    iterations: int
    certified: bool = True


def resolve_step_rule(step_rule: StepRule, rho: float) -> StepRule:
    if step_rule == StepRule.AUTO:
        return StepRule.RHO_POS if rho > 0 else StepRule.RHO_ZERO
    if step_rule == StepRule.RHO_POS and rho <= 0:
        raise InputError("the rho_pos step schedule needs rho > 0")
    return step_rule


def pgm_step_size(kind: StepRule, k: int, kappa: float, rho: float, d: int = 1) -> float:
    """
    Step length of the k-th projected subgradient step
    
    Args:
        kind: rho_zero uses √d/(κ√(k+1)); rho_pos uses 2/(ρ(k+2))
        k: Iteration counter starting at 0
        kappa: Bound on subgradient norms
        rho: Strong convexity modulus
        d: Dimension (the box diameter is √d)
        
    Returns:
        Positive step length
    """
    if k < 0:
        raise InputError(f"iteration counter must be nonnegative, got {k}")
    if kind == StepRule.RHO_POS:
        return 2.0 / (rho * (k + 2))
    radius = math.sqrt(d)
    if kappa <= 0:
        return radius / math.sqrt(k + 1)
    return radius / (kappa * math.sqrt(k + 1))


def _closed_form(p: PgmProblem, weights: np.ndarray) -> PgmResult:
    if p.rho > 0:
        x = np.clip((p.linear - weights) / p.rho, 0.0, 1.0)
    else:
        x = (p.linear > weights).astype(float)
    return PgmResult(x=x, objective=p.objective(x), gap_certificate=0.0, iterations=0)


def pgm_solve(
    p: PgmProblem,
    eps_x: float = 1e-6,
    max_iter: int = 1000,
    step_rule: StepRule = StepRule.AUTO,
) -> PgmResult:
    """
    Projected subgradient method for the x-subproblem
    
    The certificate is Φ(x_best) minus the best box minimum of the greedy
    minorants ⟨s − y, z⟩ + (ρ/2)‖z‖², taken over every single iterate and over
    the running average of all of them. Each minorant dominates the plain
    linearization of Φ at its iterate. Modular G is solved in closed form.
    
    Args:
        p: Problem data
        eps_x: Target gap
        max_iter: Iteration budget
        step_rule: Step schedule
        
    Returns:
        PgmResult with the best-seen iterate; certified=False when the budget
        ran out before the gap reached eps_x
    """
    if eps_x <= 0 and not max_iter:
        raise InputError("pgm_solve needs a positive tolerance or a finite budget")
    weights = p.G.modular_weights()
    if weights is not None:
        return _closed_form(p, weights)
    
    kind = resolve_step_rule(step_rule, p.rho)
    try:
        kappa = lipschitz_bound(p.G) + float(np.linalg.norm(p.linear)) + p.rho * math.sqrt(p.d)
    except UnsupportedError:
        kappa = None
    running_norm = 0.0
    
    x = p.x0.copy()
    best_x, best_obj = x.copy(), math.inf
    lower = -math.inf
    avg_b = np.zeros(p.d)
    gap = math.inf
    k = 0
    for k in range(max_iter):
        g_val, point = lovasz_eval_and_subgradient(p.G, x)
        obj = g_val - float(p.linear @ x) + 0.5 * p.rho * float(x @ x)
        if obj < best_obj:
            best_x, best_obj = x.copy(), obj
        b = point.y - p.linear
        lower = max(lower, p.minorant_min(b)[0])
        avg_b += (b - avg_b) / (k + 1)
        grad = b + p.rho * x
        
        if k % CHECK_EVERY == 0 or k == max_iter - 1:
            avg_lower, z = p.minorant_min(avg_b)
            lower = max(lower, avg_lower)
            for candidate in (z, _best_vertex(p, best_x)):
                cand_obj = p.objective(candidate)
                if cand_obj < best_obj:
                    best_x, best_obj = candidate.copy(), cand_obj
            gap = max(best_obj - lower, 0.0)
            if gap <= eps_x:
                break
        
        running_norm = max(running_norm, float(np.linalg.norm(grad)))
        step = pgm_step_size(kind, k, kappa if kappa is not None else running_norm, p.rho, p.d)
        x = np.clip(x - step * grad, 0.0, 1.0)
    
    vertex = _best_vertex(p, best_x)
    vertex_obj = p.objective(vertex)
    if vertex_obj < best_obj:
        best_x, best_obj = vertex, vertex_obj
    gap = max(best_obj - lower, 0.0)
    return PgmResult(
        x=best_x,
        objective=best_obj,
        gap_certificate=gap,
        iterations=k + 1,
        certified=gap <= eps_x,
    )


def _best_vertex(p: PgmProblem, x: np.ndarray) -> np.ndarray:
    """Best indicator among the prefixes of the sorting chain of x"""
    order = sort_decreasing(x).array()
    values = p.vertex_objectives(order)
    k = int(np.argmin(values))
    out = np.zeros(p.d)
    out[order[:k]] = 1.0
    return out


def exact_box_min(p: PgmProblem) -> PgmResult:
    """
    Enumeration-based solve for ρ = 0
    
    The box minimum of g_L − ⟨y,·⟩ is attained at a vertex, so the minimal
    minimizer over all 2^d subsets is returned, with certificate 0.
    """
    if p.rho != 0:
        raise UnsupportedError("exact inner solves require rho = 0")
    if p.d > settings.EXACT_INNER_MAX_D:
        raise UnsupportedError(f"exact inner solve is capped at d={settings.EXACT_INNER_MAX_D}, got d={p.d}")
    weights = p.G.modular_weights()
    if weights is not None:
        return _closed_form(p, weights)
    masks = subset_masks(p.d)
    values = subset_values(p.G) - masks.astype(float) @ p.linear
    best = float(values.min())
    minimal = np.logical_and.reduce(masks[values <= best + TIE_SLACK], axis=0)
    x = minimal.astype(float)
    return PgmResult(x=x, objective=p.objective(x), gap_certificate=0.0, iterations=1)


def solve_subproblem(
    G: SetFunctionHandle,
    y: np.ndarray,
    rho: float,
    eps_x: float,
    max_iter: int,
    mode: InnerMode = InnerMode.PGM,
    step_rule: StepRule = StepRule.AUTO,
    x0: Optional[np.ndarray] = None,
) -> PgmResult:
    """Dispatch to the closed form, the exact enumeration or PGM"""
    p = PgmProblem(G=G, linear=y, rho=rho, x0=x0)
    if mode == InnerMode.EXACT:
        return exact_box_min(p)
    return pgm_solve(p, eps_x=eps_x, max_iter=max_iter, step_rule=step_rule)


@dataclass
class PhiObjective:
    """φ_k(w) = ⟨w, x^k⟩ − g*(w), with g*(w) from an inner x-solve"""
    x_anchor: np.ndarray
    instance: DSInstance
    rho: float = 0.0
    eps_x: float = 1e-6
    max_iter: int = 1000
    mode: InnerMode = InnerMode.PGM
    step_rule: StepRule = StepRule.AUTO
    
    def __post_init__(self):
        self.x_anchor = check_box(self.x_anchor, self.instance.d)
    
    def solve_g(self, w: np.ndarray) -> PgmResult:
        """x̃ ∈ argmin_x g(x) − ⟨w, x⟩, which is a subgradient of g* at w"""
        return solve_subproblem(
            self.instance.G, w, self.rho, self.eps_x, self.max_iter, self.mode, self.step_rule,
            x0=self.x_anchor,
        )
    
    def evaluate(self, w: np.ndarray) -> Tuple[float, PgmResult]:
        res = self.solve_g(w)
        return float(w @ self.x_anchor) + res.objective, res


def linmin_subdiff(
    s: Sequence[float],
    x: Sequence[float],
    H: SetFunctionHandle,
    rho: float,
    maximize: bool = False,
) -> BasePoint:
    """
    Linear minimization of ⟨s, ·⟩ over ∂h(x) = ρx + ∂h_L(x)
    
    Ties among equal entries of x are broken by −s (or by s when
    ``maximize`` is set), which selects the optimal greedy vertex.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    sigma = sort_decreasing(x, s if maximize else -s)
    point = greedy_subgradient(H, sigma)
    shift = rho * x
    return BasePoint(y=shift + point.y, source=sigma, shift=shift)


def fw_gap(phi: PhiObjective, w: BasePoint, x_tilde: np.ndarray) -> float:
    """⟨s, w − v⟩ with s = x^k − x̃ and v the linear minimizer of ⟨s, ·⟩ over ∂h(x^k)"""
    s = phi.x_anchor - x_tilde
    v = linmin_subdiff(s, phi.x_anchor, phi.instance.H, phi.rho)
    return float(s @ (w.y - v.y))


def exact_face_min(phi: PhiObjective) -> Tuple[float, BasePoint]:
    """
    Global minimum of φ_k over ∂h_L(1_X) at ρ = 0
    
    φ_k(w) = H(X) + min_S G(S) − w(S), and the largest w(S) over the face is
    H(X∩S) + H(X∪S) − H(X), reached by the greedy order X∩S, X∖S, S∖X, rest.
    The minimum over w is therefore min_S G(S) − H(X∩S) − H(X∪S) + 2H(X).
    
    Args:
        phi: Objective with an integral anchor 1_X and rho = 0
    
    Returns:
        Tuple of (minimum value, greedy vertex attaining it); the first
        minimizing S in subset-code order is used
    """
    x = phi.x_anchor
    if phi.rho != 0:
        raise UnsupportedError("exact face minimization requires rho = 0")
    if not np.all((x == 0) | (x == 1)):
        raise UnsupportedError("exact face minimization requires an integral anchor")
    d = phi.instance.d
    if d > settings.EXACT_INNER_MAX_D:
        raise UnsupportedError(f"exact face minimization is capped at d={settings.EXACT_INNER_MAX_D}, got d={d}")
    G, H = phi.instance.G, phi.instance.H
    codes = np.arange(1 << d)
    X = x > 0.5
    code_X = code_of(np.flatnonzero(X).tolist())
    h = subset_values(H)
    values = subset_values(G) - h[codes & code_X] - h[codes | code_X] + 2 * h[code_X]
    best = int(np.argmin(values))
    S = subset_masks(d)[best]
    order = np.concatenate([np.flatnonzero(X & S), np.flatnonzero(X & ~S), np.flatnonzero(~X & S), np.flatnonzero(~X & ~S)])
    sigma = Permutation(tuple(order.tolist()))
    return float(values[best]), greedy_subgradient(H, sigma)


@dataclass
class FwResult:
    """Outcome of the Frank–Wolfe y-update"""
    w_best: BasePoint
    phi_best: float
    x_best: np.ndarray
    gaps: List[float] = field(default_factory=list)
    phis: List[float] = field(default_factory=list)
    gap_at_best: float = math.inf
    certified: bool = True
    inner_gap: float = 0.0


def fw_concave_min(
    phi: PhiObjective,
    w0: BasePoint,
    eps: float = 1e-6,
    T: int = 10,
    start: Optional[Tuple[float, PgmResult]] = None,
) -> FwResult:
    """
    Frank–Wolfe with unit steps for min φ_k over ∂h(x^k)
    
    Args:
        phi: Objective carrying x^k, the instance and the inner-solve settings
        w0: Starting vertex of ρx^k + B(H) on a decreasing order of x^k
        eps: Stop once the FW gap ⟨s, w − v⟩ is at most eps
        T: Number of gap evaluations allowed
        start: Already computed (φ_k(w0), x-solve at w0), if any
        
    Returns:
        FwResult with the iterate of smallest φ_k, its x-subproblem solution
        and the gap history
    """
    H, rho, xk = phi.instance.H, phi.rho, phi.x_anchor
    w = w0
    phi_w, res = start if start is not None else phi.evaluate(w.y)
    best = FwResult(w_best=w, phi_best=phi_w, x_best=res.x, phis=[phi_w])
    certified, inner_gap = res.certified, res.gap_certificate
    
    for _ in range(T):
        s = xk - res.x
        v = linmin_subdiff(s, xk, H, rho)
        gap = float(s @ (w.y - v.y))
        best.gaps.append(gap)
        if w is best.w_best:
            best.gap_at_best = gap
        if gap <= eps:
            break
        w = v
        phi_w, res = phi.evaluate(w.y)
        best.phis.append(phi_w)
        certified = certified and res.certified
        inner_gap = max(inner_gap, res.gap_certificate)
        if phi_w < best.phi_best:
            best.w_best, best.phi_best, best.x_best = w, phi_w, res.x
            best.gap_at_best = math.inf
    
    if math.isinf(best.gap_at_best):
        best.gap_at_best = fw_gap(phi, best.w_best, best.x_best)
    best.certified = certified
    best.inner_gap = inner_gap
    if not certified:
        logger.debug(f"Frank-Wolfe inner solves not certified (gap {inner_gap:.3g})")
    return best
