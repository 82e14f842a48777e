"""DC-programming solvers for F = G − H.

The decomposition is g = g_L + δ_box + (ρ/2)‖x‖², h = h_L + (ρ/2)‖x‖², so the
objective f = g − h equals the Lovász extension of F on the box. Each outer
iteration picks y^k ∈ ∂h(x^k) (greedy vertex for DCA, Frank–Wolfe over ∂h for
CDCA) and solves the x-subproblem at y^k. Rounded variants replace x^{k+1}
by the indicator of Round_F(x^{k+1}).
"""
import math
import time
import numpy as np
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence, Tuple
from dsmin.core.errors import InputError
from dsmin.core.logger import logger
from dsmin.models.schemas import CertBound, InnerMode, IterationRecord, PermutationMode, SolverConfig, SolverTrace
from dsmin.services.setfn import DSInstance
from dsmin.services.lovasz import (
    BasePoint,
    check_box,
    greedy_subgradient,
    local_tie_breaks,
    lovasz_eval,
    RoundedSet,
    round_f,
    sort_decreasing,
)
from dsmin.services.inner_solvers import (
    FwResult,
    PhiObjective,
    PgmResult,
    exact_face_min,
    fw_concave_min,
    fw_gap,
    solve_subproblem,
)
from dsmin.services.oracle import best_flip


@dataclass
class IterateState:
    """Point reached by a solver together with its rounding"""
    x: np.ndarray
    X_rounded: FrozenSet[int]
    k: int
    f_cont: float
    F_disc: float
    y: Optional[BasePoint] = None


@dataclass
class StepResult:
    """One candidate update x^k → x^{k+1}"""
    x_next: np.ndarray
    y: BasePoint
    label: str
    gap: float = 0.0
    certified: bool = True
    fw_gaps: List[float] = field(default_factory=list)
    fw_gap_at_best: float = 0.0
    phi: Optional[float] = None
    face_exact: bool = False


def cert_bound(
    rho: float,
    d: int,
    eps: float,
    eps_x: float,
    t_x: float = 0.5,
    t_y: float = 0.5,
    eps_y: float = 0.0,
) -> CertBound:
    """
    Set-level slack ε′ implied by a DC stopping tolerance
    
    Args:
        rho: Regularization weight
        d: Ground set size
        eps: Outer stopping tolerance
        eps_x: Accuracy of the x-subproblem solves
        t_x, t_y: Splitting weights in (0, 1] used for the descent constants
        eps_y: Accuracy of the y-subproblem
        
    Returns:
        CertBound with eps_prime, rho_bar and eps_bar
    """
    for name, value in (("rho", rho), ("d", d), ("eps", eps), ("eps_x", eps_x), ("eps_y", eps_y)):
        if value < 0:
            raise InputError(f"{name} must be nonnegative, got {value}")
    for name, value in (("t_x", t_x), ("t_y", t_y)):
        if not 0 < value <= 1:
            raise InputError(f"{name} must lie in (0, 1], got {value}")
    total = eps + eps_x
    half = rho * d / 2
    eps_prime = math.sqrt(2 * rho * d * total) if total <= half else half + total
    return CertBound(
        rho=rho,
        d=d,
        eps=eps,
        eps_x=eps_x,
        eps_y=eps_y,
        t_x=t_x,
        t_y=t_y,
        eps_prime=eps_prime,
        rho_bar=rho * (2 - t_x - t_y),
        eps_bar=eps_x / t_x + eps_y / t_y,
    )


def nesterov_t(k: int) -> float:
    """t_1 = 1, t_{j+1} = (1 + √(1 + 4t_j²)) / 2"""
    if k < 1:
        raise InputError(f"extrapolation index starts at 1, got {k}")
    t = 1.0
    for _ in range(k - 1):
        t = (1 + math.sqrt(1 + 4 * t * t)) / 2
    return t


def adca_extrapolate(
    x_k: np.ndarray,
    x_km1: np.ndarray,
    k: int,
    q: int,
    history: Sequence[float],
    inst: DSInstance,
) -> np.ndarray:
    """
    Extrapolated point for accelerated DCA
    
    z = x^k + ((t_k − 1)/t_{k+1})(x^k − x^{k−1}), clipped to the box, is
    returned when F(Round_F(z)) is at most the largest of the last q discrete
    values; otherwise x^k itself is returned.
    """
    t_k = nesterov_t(k)
    t_next = (1 + math.sqrt(1 + 4 * t_k * t_k)) / 2
    z = np.clip(x_k + ((t_k - 1) / t_next) * (x_k - x_km1), 0.0, 1.0)
    if np.array_equal(z, x_k):
        return x_k
    window = list(history)[-q:]
    if window and round_f(inst.F, z).value <= max(window):
        return z
    return x_k


class DCSolver:
    """Outer loop shared by the DCA and CDCA families"""
    
    def __init__(
        self,
        inst: DSInstance,
        cfg: SolverConfig,
        use_fw: bool = False,
        rounding: bool = False,
        accelerate: bool = False,
    ):
        self.inst = inst
        self.cfg = cfg
        self.rho = cfg.rho
        self.use_fw = use_fw
        self.rounding = rounding
        self.accelerate = accelerate
        self.rng = np.random.default_rng(cfg.seed)
        self.method = ("a" if accelerate else "") + ("cdca" if use_fw else "dca") + ("r" if rounding else "")
    
    def f(self, x: np.ndarray) -> float:
        return lovasz_eval(self.inst.F, x)
    
    def _indicator(self, X: Iterable[int]) -> np.ndarray:
        return self.inst.F.ground.indicator(X)
    
    def _tie_breaks(self, x: np.ndarray) -> List[Tuple[str, Optional[np.ndarray]]]:
        mode = self.cfg.permutation_mode
        if mode == PermutationMode.SINGLE:
            return [("sorted", None)]
        if mode == PermutationMode.ALL_D:
            return self._edge_tie_breaks(x)
        return self._heuristic_tie_breaks(x)
    
    @staticmethod
    def _edge_tie_breaks(x: np.ndarray) -> List[Tuple[str, Optional[np.ndarray]]]:
        return [(f"edge_{i}", tb) for i, tb in enumerate(local_tie_breaks(x))]
    
    def _heuristic_tie_breaks(self, x: np.ndarray) -> List[Tuple[str, Optional[np.ndarray]]]:
        """Random order, then decreasing G- and F-exchange gains at the current set"""
        X = self._current_set(x).set
        mask = self.inst.F.ground.to_mask(X)
        return [
            ("random", self.rng.random(self.inst.d)),
            ("G_gain", self._exchange_gains(self.inst.G, mask)),
            ("F_gain", self._exchange_gains(self.inst.F, mask)),
        ]
    
    @staticmethod
    def _exchange_gains(fn, mask: np.ndarray) -> np.ndarray:
        """fn(X ∪ i) − fn(X ∖ i) for every element i"""
        d = mask.size
        added = np.tile(mask, (d, 1))
        added[np.arange(d), np.arange(d)] = True
        removed = np.tile(mask, (d, 1))
        removed[np.arange(d), np.arange(d)] = False
        return fn.values_of_masks(added) - fn.values_of_masks(removed)
    
    def _inner(self, y: np.ndarray, x0: np.ndarray) -> PgmResult:
        cfg = self.cfg
        return solve_subproblem(
            self.inst.G, y, self.rho, cfg.eps_x, cfg.pgm_max_iter, cfg.inner_mode, cfg.step_rule, x0=x0
        )
    
    def _phi(self, x: np.ndarray) -> PhiObjective:
        cfg = self.cfg
        return PhiObjective(
            x_anchor=x,
            instance=self.inst,
            rho=self.rho,
            eps_x=cfg.eps_x,
            max_iter=cfg.pgm_max_iter,
            mode=cfg.inner_mode,
            step_rule=cfg.step_rule,
        )
    
    def _vertex(self, x: np.ndarray, tie_break: Optional[np.ndarray]) -> BasePoint:
        sigma = sort_decreasing(x, tie_break)
        point = greedy_subgradient(self.inst.H, sigma)
        shift = self.rho * x
        return BasePoint(y=shift + point.y, source=sigma, shift=shift)
    
    def _map(self, fn: Callable, items: list) -> list:
        if self.cfg.candidate_workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.candidate_workers) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]
    
    def _current_set(self, x: np.ndarray) -> RoundedSet:
        """X^k itself for rounded variants, Round_F(x^k) otherwise"""
        if self.rounding:
            X = self.inst.F.ground.from_mask(x > 0.5)
            return RoundedSet(set=X, value=self.inst.F.evaluate(X), chain_index=len(X))
        return round_f(self.inst.F, x)
    
    def _finish(self, x_tilde: np.ndarray) -> np.ndarray:
        if self.rounding:
            return self._indicator(round_f(self.inst.F, x_tilde).set)
        return x_tilde
    
    def _dca_step(self, x: np.ndarray) -> StepResult:
        def candidate(item) -> StepResult:
            label, tb = item
            y = self._vertex(x, tb)
            res = self._inner(y.y, x)
            return StepResult(
                x_next=self._finish(res.x), y=y, label=label,
                gap=res.gap_certificate, certified=res.certified,
            )
        
        tie_breaks = self._tie_breaks(x)
        steps = self._map(candidate, tie_breaks)
        if len(steps) == 1:
            return steps[0]
        if self.cfg.permutation_mode == PermutationMode.HEURISTIC3:
            scores = [round_f(self.inst.F, s.x_next).value for s in steps]
        else:
            scores = [self.f(s.x_next) for s in steps]
        chosen = steps[int(np.argmin(scores))]
        chosen.gap = max(s.gap for s in steps)
        chosen.certified = all(s.certified for s in steps)
        return chosen
    
    def _fw_starts(self, x: np.ndarray) -> List[Tuple[str, Optional[np.ndarray]]]:
        """The three heuristic orders, plus the edge orders under all_d"""
        starts = self._heuristic_tie_breaks(x)
        if self.cfg.permutation_mode == PermutationMode.ALL_D:
            starts += self._edge_tie_breaks(x)
        return starts
    
    def _face_enumerable(self, x: np.ndarray) -> bool:
        return (
            self.cfg.inner_mode == InnerMode.EXACT
            and self.rho == 0
            and bool(np.all((x == 0) | (x == 1)))
        )
    
    def _cdca_step(self, x: np.ndarray) -> StepResult:
        phi = self._phi(x)
        starts = [(label, self._vertex(x, tb)) for label, tb in self._fw_starts(x)]
        evaluated = self._map(lambda item: phi.evaluate(item[1].y), starts)
        best = int(np.argmin([value for value, _ in evaluated]))
        label, w0 = starts[best]
        fw: FwResult = fw_concave_min(phi, w0, eps=self.cfg.fw_gap_tol, T=self.cfg.fw_budget, start=evaluated[best])
        certified = fw.certified and all(res.certified for _, res in evaluated)
        gap = max([fw.inner_gap] + [res.gap_certificate for _, res in evaluated])
        step = StepResult(
            x_next=self._finish(fw.x_best), y=fw.w_best, label=label, gap=gap, certified=certified,
            fw_gaps=fw.gaps, fw_gap_at_best=fw.gap_at_best, phi=fw.phi_best,
        )
        if not self._face_enumerable(x):
            return step
    
        # a zero FW gap only marks a critical vertex of the concave φ_k
        phi_min, w_min = exact_face_min(phi)
        step.face_exact = True
        if phi_min < fw.phi_best - 1e-12:
            value, res = phi.evaluate(w_min.y)
            logger.debug(f"{self.method}: face minimum {phi_min:.6g} below Frank-Wolfe value {fw.phi_best:.6g}")
            step.x_next = self._finish(res.x)
            step.y = w_min
            step.label = "face_min"
            step.phi = value
            step.fw_gap_at_best = fw_gap(phi, w_min, res.x)
        return step
    
    def step(self, x: np.ndarray) -> StepResult:
        return self._cdca_step(x) if self.use_fw else self._dca_step(x)
    
    def run(self, x0: Optional[Sequence[float]] = None) -> Tuple[IterateState, SolverTrace]:
        """
        Run the outer loop until f(x^k) − f(x^{k+1}) ≤ eps_stop or the budget ends
        
        Args:
            x0: Start point in [0,1]^d (the empty set by default)
            
        Returns:
            Tuple of (final IterateState, SolverTrace). On convergence the final
            point is x^k, the iterate the stopping test certifies.
        """
        cfg, F = self.cfg, self.inst.F
        x = np.zeros(self.inst.d) if x0 is None else np.clip(check_box(x0, self.inst.d), 0.0, 1.0)
        if self.rounding and not np.all((x == 0) | (x == 1)):
            x = self._indicator(round_f(F, x).set)
        trace = SolverTrace(method=self.method, rho=self.rho, seed=cfg.seed, d=self.inst.d)
        history: deque = deque(maxlen=cfg.accel_q)
        x_prev: Optional[np.ndarray] = None
        y_last: Optional[BasePoint] = None
        converged = False
        max_gap = 0.0
        logger.debug(f"{self.method}: start, d={self.inst.d}, rho={self.rho}")
        
        for k in range(cfg.max_outer):
            started = time.perf_counter()
            rounded = self._current_set(x)
            f_x = self.f(x)
            history.append(rounded.value)
            
            origin = x
            if self.accelerate and x_prev is not None:
                origin = adca_extrapolate(x, x_prev, k, cfg.accel_q, history, self.inst)
            step = self.step(origin)
            f_next = self.f(step.x_next)
            if origin is not x and f_x - f_next <= cfg.eps_stop:
                # confirm convergence with a plain step from x^k
                origin = x
                step = self.step(x)
                f_next = self.f(step.x_next)
            
            max_gap = max(max_gap, step.gap)
            y_last = step.y
            label = step.label if origin is x else f"{step.label}+extrapolated"
            trace.append(IterationRecord(
                k=k,
                F_disc=rounded.value,
                f_cont=f_x,
                f_next=f_next,
                pgm_gap=step.gap,
                fw_gaps=step.fw_gaps,
                phi_best=step.phi,
                fw_gap_best=step.fw_gap_at_best if self.use_fw else None,
                face_exact=step.face_exact,
                wall_ms=(time.perf_counter() - started) * 1000 if cfg.record_timing else 0.0,
                X=rounded.sorted(),
                x=x.tolist(),
                step_norm=float(np.linalg.norm(x - step.x_next)),
                candidate=label,
                certified=step.certified,
            ))
            if not step.certified:
                logger.warning(f"{self.method}: inner solve not certified at k={k} (gap {step.gap:.3g})")
            logger.debug(f"{self.method}: k={k} F={rounded.value:.6g} f={f_x:.6g} f_next={f_next:.6g}")
            
            if f_x - f_next <= cfg.eps_stop:
                converged = True
                break
            x_prev, x = x, step.x_next
        else:
            rounded = self._current_set(x)
            trace.append(IterationRecord(
                k=cfg.max_outer,
                F_disc=rounded.value,
                f_cont=self.f(x),
                X=rounded.sorted(),
                x=x.tolist(),
            ))
        
        rounded = self._current_set(x)
        state = IterateState(
            x=x, X_rounded=rounded.set, k=len(trace.records) - 1,
            f_cont=self.f(x), F_disc=rounded.value, y=y_last,
        )
        trace.final_set = rounded.sorted()
        trace.final_value = rounded.value
        trace.final_x = x.tolist()
        trace.converged = converged
        trace.certified = all(r.certified for r in trace.records)
        trace.strong_certified = converged and self.use_fw and self.rounding and trace.records[-1].face_exact
        trace.certificate = cert_bound(
            self.rho, self.inst.d, cfg.eps_stop, max(cfg.eps_x, max_gap),
            eps_y=cfg.eps_x if self.use_fw else 0.0,
        )
        logger.info(
            f"{self.method}: finished after {len(trace.records)} records, "
            f"F={rounded.value:.6g}, converged={converged}, eps'={trace.certificate.eps_prime:.3g}"
        )
        return state, trace


SolverFn = Callable[[DSInstance, SolverConfig, Optional[Sequence[float]]], Tuple[IterateState, SolverTrace]]


def localmin_restart_wrap(
    solver: SolverFn,
    inst: DSInstance,
    cfg: SolverConfig,
    x0: Optional[Sequence[float]] = None,
) -> Tuple[IterateState, SolverTrace]:
    """
    Restart a solver until its rounded output is an ε′-local minimum
    
    After each run X = Round_F(x) is compared against its 2d single flips.
    If some flip improves F by more than ε′, the solver restarts from the
    indicator of the best flip. Records of later runs are appended with
    restart_flag set on their first record.
    """
    inner_cfg = cfg.model_copy(update={"localmin_restart": False})
    state, trace = solver(inst, inner_cfg, x0)
    restarts = 0
    while restarts < cfg.max_restarts:
        eps_prime = trace.certificate.eps_prime
        flip, flip_value = best_flip(inst.F, state.X_rounded)
        if state.F_disc <= flip_value + eps_prime:
            break
        restarts += 1
        logger.info(
            f"{trace.method}: {sorted(state.X_rounded)} is not a local minimum "
            f"(flip to {flip} gives {flip_value:.6g}), restart {restarts}"
        )
        state, more = solver(inst, inner_cfg, inst.F.ground.indicator(flip))
        offset = len(trace.records)
        for j, record in enumerate(more.records):
            record.k += offset
            record.restart_flag = j == 0
            trace.append(record)
        trace.final_set = more.final_set
        trace.final_value = more.final_value
        trace.final_x = more.final_x
        trace.converged = more.converged
        trace.strong_certified = more.strong_certified
        trace.certificate = more.certificate
    else:
        if cfg.max_restarts:
            logger.warning(f"{trace.method}: restart budget of {cfg.max_restarts} exhausted")
    trace.restarts = restarts
    trace.certified = all(r.certified for r in trace.records)
    return state, trace


def _runner(use_fw: bool, rounding: bool, accelerate: bool) -> SolverFn:
    def run(inst: DSInstance, cfg: SolverConfig, x0: Optional[Sequence[float]] = None):
        return DCSolver(inst, cfg, use_fw=use_fw, rounding=rounding, accelerate=accelerate).run(x0)
    return run


def _start_point(inst: DSInstance, X0) -> Optional[np.ndarray]:
    if X0 is None:
        return None
    if isinstance(X0, np.ndarray) and X0.dtype.kind == "f":
        return X0
    return inst.F.ground.indicator(X0)


def _dispatch(inst: DSInstance, cfg: SolverConfig, x0, use_fw: bool, rounding: bool, accelerate: bool):
    solver = _runner(use_fw, rounding, accelerate)
    if cfg.localmin_restart:
        return localmin_restart_wrap(solver, inst, cfg, x0)
    return solver(inst, cfg, x0)


def dca_run(inst: DSInstance, cfg: SolverConfig, x0: Optional[Sequence[float]] = None):
    """
    Approximate DCA
    
    Args:
        inst: DS instance; cfg.rho is the regularization used
        cfg: Solver configuration (round_each_iter and accelerate are honored)
        x0: Start point in [0,1]^d
        
    Returns:
        Tuple of (IterateState, SolverTrace)
    """
    return _dispatch(inst, cfg, x0, False, cfg.round_each_iter, cfg.accelerate)


def dcar_run(inst: DSInstance, cfg: SolverConfig, X0: Optional[Iterable[int]] = None):
    """DCA with x^{k+1} replaced by the indicator of Round_F(x̃^{k+1})"""
    return _dispatch(inst, cfg, _start_point(inst, X0), False, True, cfg.accelerate)


def adca_run(inst: DSInstance, cfg: SolverConfig, x0: Optional[Sequence[float]] = None):
    return _dispatch(inst, cfg, x0, False, cfg.round_each_iter, True)


def adcar_run(inst: DSInstance, cfg: SolverConfig, X0: Optional[Iterable[int]] = None):
    return _dispatch(inst, cfg, _start_point(inst, X0), False, True, True)


def cdca_run(inst: DSInstance, cfg: SolverConfig, x0: Optional[Sequence[float]] = None):
    """
    Complete DCA: y^k from Frank–Wolfe over ∂h(x^k)
    
    The FW start is the greedy vertex with the smallest φ_k among the random,
    G-gain and F-gain orders (plus the edge orders under all_d); x^{k+1} is
    the x-subproblem solution at the FW output. With exact inner solves at an
    integral x^k the face ∂h_L(x^k) is minimized by enumeration as well, and
    a CDCAR run stopping on such a step sets ``strong_certified``.
    """
    return _dispatch(inst, cfg, x0, True, cfg.round_each_iter, cfg.accelerate)


def cdcar_run(inst: DSInstance, cfg: SolverConfig, X0: Optional[Iterable[int]] = None):
    return _dispatch(inst, cfg, _start_point(inst, X0), True, True, cfg.accelerate)
