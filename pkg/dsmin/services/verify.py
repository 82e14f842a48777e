"""Oracle-backed invariant suites run by ``python -m dsmin verify``"""
import itertools
import numpy as np
from dataclasses import dataclass, field
from typing import Callable, List, Optional
from dsmin.core.config import settings
from dsmin.core.errors import InputError
from dsmin.core.logger import logger
from dsmin.models.schemas import InnerMode, PermutationMode, SolverConfig
from dsmin.services.setfn import (
    DSInstance,
    SetFunctionHandle,
    combine,
    make_empirical_entropy,
    make_modular,
    random_cover_instance,
    tiny_a,
    tiny_c,
    tiny_d,
)
from dsmin.services.lovasz import (
    BasePoint,
    Permutation,
    greedy_subgradient,
    lipschitz_bound,
    lovasz_eval,
    round_f,
    sort_decreasing,
)
from dsmin.services.inner_solvers import PgmProblem, PhiObjective, fw_concave_min, linmin_subdiff, pgm_solve
from dsmin.services.oracle import (
    brute_force_min,
    check_base_polytope,
    check_submodular,
    is_local_min,
    is_strong_local_min,
    lovasz_bruteforce,
    members,
    subdifferential_vertices,
    subset_masks,
    subset_values,
    weak_dr_bound,
    weak_dr_constants,
)
from dsmin.services.dc_solvers import cdca_run, cdcar_run, cert_bound, dca_run, dcar_run
from dsmin.services.baselines import subsup_run
from dsmin.services.harness import gen_speech_synthetic

GreedyFn = Callable[[SetFunctionHandle, Permutation], BasePoint]
TOL = 1e-9
SUPPORT_MAX_D = 6
FW_MAX_D = 7
FW_GAP_QUALIFY = 1e-8
STRONG_QUALIFY_SHARE = 0.8
LEVELS = ("fast", "full")


@dataclass
class CheckResult:
    """Outcome of one invariant check"""
    name: str
    passed: bool = True
    cases: int = 0
    witness: Optional[str] = None
    
    def fail(self, witness: str) -> None:
        if self.passed:
            self.passed = False
            self.witness = witness


@dataclass
class VerifyReport:
    level: str
    results: List[CheckResult] = field(default_factory=list)
    
    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)
    
    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]


class VerifySuite:
    """
    Randomized checks of the solver stack against exhaustive enumeration
    
    Args:
        level: "fast" (d ≤ VERIFY_FAST_MAX_D) or "full" (d ≤ VERIFY_FULL_MAX_D,
            plus the named regression instances)
        seed: Seed for instance generation
        greedy: Greedy-vertex rule under test
    """
    
    def __init__(self, level: str = "fast", seed: int = 0, greedy: GreedyFn = greedy_subgradient):
        if level not in LEVELS:
            raise InputError(f"unknown verify level {level!r}; expected one of {LEVELS}")
        self.level = level
        self.seed = seed
        self.greedy = greedy
        self.max_d = settings.VERIFY_FAST_MAX_D if level == "fast" else settings.VERIFY_FULL_MAX_D
        self.cases = 4 if level == "fast" else 8
    
    def _instances(self, salt: int, max_d: Optional[int] = None, count: Optional[int] = None) -> List[DSInstance]:
        rng = np.random.default_rng([self.seed, salt])
        top = min(max_d or self.max_d, self.max_d)
        return [random_cover_instance(rng, int(rng.integers(3, top + 1))) for _ in range(count or self.cases)]
    
    def _random_set(self, rng: np.random.Generator, d: int) -> np.ndarray:
        return rng.random(d) < 0.5
    
    def run(self) -> VerifyReport:
        checks = [
            self.check_extension,
            self.check_support_function,
            self.check_base_polytope,
            self.check_rounding,
            self.check_families_submodular,
            self.check_pgm_certificate,
            self.check_cert_bound_monotone,
            self.check_dcar_monotone,
            self.check_dcar_local_min,
            self.check_modular_h_global,
            self.check_descent,
            self.check_rate_bound,
            self.check_fw_gap_bound,
            self.check_subsup_is_dca,
            self.check_cdcar_strong_local_min,
            self.check_lipschitz,
            self.check_value_bounds,
            self.check_entropy_row_order,
        ]
        if self.level == "full":
            checks += [self.check_trapped_dca, self.check_weak_local_escape, self.check_supermodular_trap]
        report = VerifyReport(level=self.level)
        for check in checks:
            result = check()
            status = "ok" if result.passed else f"FAILED ({result.witness})"
            logger.info(f"verify {result.name}: {result.cases} cases, {status}")
            report.results.append(result)
        return report
    
    def check_extension(self) -> CheckResult:
        """f_L(1_X) = F(X) and f_L is additive over sums of functions"""
        result = CheckResult("lovasz_extension")
        rng = np.random.default_rng([self.seed, 1])
        for inst in self._instances(1):
            for _ in range(5):
                mask = self._random_set(rng, inst.d)
                value = lovasz_eval(inst.G, mask.astype(float))
                if abs(value - inst.G.evaluate(mask)) > TOL:
                    result.fail(f"{inst.name}: f_L(1_X) = {value} for X = {np.flatnonzero(mask).tolist()}")
                x = rng.random(inst.d)
                summed = lovasz_eval(combine([(1.0, inst.G), (1.0, inst.H)]), x)
                if abs(summed - lovasz_eval(inst.G, x) - lovasz_eval(inst.H, x)) > TOL:
                    result.fail(f"{inst.name}: extension not additive at x = {x.tolist()}")
                result.cases += 1
        return result
    
    def check_support_function(self) -> CheckResult:
        result = CheckResult("support_function")
        rng = np.random.default_rng([self.seed, 2])
        for inst in self._instances(2, SUPPORT_MAX_D):
            x = rng.random(inst.d)
            if abs(lovasz_bruteforce(inst.H, x) - lovasz_eval(inst.H, x)) > TOL:
                result.fail(f"{inst.name}: greedy value differs from max over vertices at x = {x.tolist()}")
            result.cases += 1
        return result
    
    def check_base_polytope(self) -> CheckResult:
        """Every greedy vertex lies in B(F)"""
        result = CheckResult("base_polytope")
        rng = np.random.default_rng([self.seed, 3])
        for inst in self._instances(3):
            for fn in (inst.G, inst.H):
                sigma = sort_decreasing(rng.random(inst.d))
                y = self.greedy(fn, sigma).y
                report = check_base_polytope(fn, y)
                if not report.holds:
                    result.fail(f"{inst.name}.{fn.name}: y = {np.round(y, 6).tolist()} violates A = {report.witness}")
                result.cases += 1
        return result
    
    def check_rounding(self) -> CheckResult:
        result = CheckResult("round_f")
        rng = np.random.default_rng([self.seed, 4])
        for inst in self._instances(4):
            for _ in range(10):
                x = rng.random(inst.d)
                rounded = round_f(inst.F, x)
                if rounded.value > lovasz_eval(inst.F, x) + TOL:
                    result.fail(f"{inst.name}: F(Round_F(x)) = {rounded.value} exceeds f_L(x) at x = {x.tolist()}")
                result.cases += 1
        return result
    
    def check_families_submodular(self) -> CheckResult:
        """Set cover, concave-of-modular and entropy handles are submodular"""
        result = CheckResult("families_submodular")
        rng = np.random.default_rng([self.seed, 5])
        speech = gen_speech_synthetic(self.seed, self.max_d, 20, max(1, self.max_d // 3)).instance()
        data = (rng.random((40, min(self.max_d, 8))) < 0.5).astype(int)
        handles = [speech.G, speech.H, make_empirical_entropy(data, name="entropy")]
        handles += [inst.G for inst in self._instances(5)]
        for fn in handles:
            report = check_submodular(fn)
            if not report.holds:
                result.fail(f"{fn.name}: diminishing returns fails at {report.details}")
            result.cases += 1
        return result
    
    def check_pgm_certificate(self) -> CheckResult:
        """Φ(x) − gap ≤ min Φ ≤ Φ(x) for the PGM result at ρ = 0"""
        result = CheckResult("pgm_certificate")
        rng = np.random.default_rng([self.seed, 6])
        for inst in self._instances(6):
            y = rng.normal(0.0, 1.0, inst.d)
            res = pgm_solve(PgmProblem(G=inst.G, linear=y), eps_x=1e-6, max_iter=500)
            true_min = float(np.min(subset_values(inst.G) - subset_masks(inst.d).astype(float) @ y))
            if res.objective < true_min - TOL or res.objective - res.gap_certificate > true_min + TOL:
                result.fail(
                    f"{inst.name}: objective {res.objective}, gap {res.gap_certificate}, true minimum {true_min}"
                )
            result.cases += 1
        return result
    
    def check_cert_bound_monotone(self) -> CheckResult:
        result = CheckResult("cert_bound_monotone")
        grid = [0.0, 1e-6, 1e-3, 0.1, 1.0]
        for rho, d in itertools.product([0.0, 0.01, 1.0, 10.0], [1, 5, 12]):
            values = [cert_bound(rho, d, eps, 1e-6).eps_prime for eps in grid]
            if any(b < a - TOL for a, b in zip(values, values[1:])):
                result.fail(f"eps_prime decreases in eps at rho={rho}, d={d}: {values}")
            result.cases += 1
        return result
    
    def _exact_cfg(self, **update) -> SolverConfig:
        base = {"rho": 0.0, "inner_mode": InnerMode.EXACT, "localmin_restart": False, "seed": self.seed}
        base.update(update)
        return SolverConfig(**base)
    
    def check_dcar_monotone(self) -> CheckResult:
        """F(X^k) never increases along a DCAR trace beyond the inner slack"""
        result = CheckResult("dcar_monotone")
        for inst in self._instances(7):
            _, trace = dcar_run(inst, self._exact_cfg())
            for prev, cur in zip(trace.records, trace.records[1:]):
                slack = 2 * max(prev.pgm_gap, cur.pgm_gap) + TOL
                if cur.F_disc > prev.F_disc + slack:
                    result.fail(f"{inst.name}: F rises from {prev.F_disc} to {cur.F_disc} at k={cur.k}")
            result.cases += 1
        return result
    
    def check_dcar_local_min(self) -> CheckResult:
        """DCAR over the d edge permutations stops at an ε′-local minimum"""
        result = CheckResult("dcar_local_min")
        cfg = self._exact_cfg(permutation_mode=PermutationMode.ALL_D)
        for inst in self._instances(8):
            _, trace = dcar_run(inst, cfg)
            if trace.converged:
                X = np.flatnonzero(np.asarray(trace.final_x) > 0.5).tolist()
                report = is_local_min(inst.F, X, trace.certificate.eps_prime + TOL)
                if not report.holds:
                    result.fail(f"{inst.name}: {X} improved by flipping to {report.witness}")
            result.cases += 1
        return result
    
    def check_modular_h_global(self) -> CheckResult:
        """With modular H a single exact step reaches the global minimum"""
        result = CheckResult("modular_h_global")
        rng = np.random.default_rng([self.seed, 9])
        for base in self._instances(9):
            inst = DSInstance(base.G, make_modular(rng.uniform(0.0, 2.0, base.d), name="H"), name=base.name)
            _, trace = dcar_run(inst, self._exact_cfg())
            best = brute_force_min(inst.F).global_min_value
            if trace.final_value > best + trace.certificate.eps_prime + TOL:
                result.fail(f"{inst.name}: final {trace.final_value} vs minimum {best}")
            result.cases += 1
        return result
    
    def check_descent(self) -> CheckResult:
        """f(x^k) − f(x^{k+1}) ≥ (ρ̄/2)‖x^k − x^{k+1}‖² − ε̄ on every DCA and CDCA step"""
        result = CheckResult("descent")
        for inst in self._instances(10):
            for rho in (0.0, 1.0):
                cfg = SolverConfig(rho=rho, pgm_max_iter=200, max_outer=8, localmin_restart=False, seed=self.seed)
                for run in (dca_run, cdca_run):
                    _, trace = run(inst, cfg)
                    for r in trace.records:
                        if r.f_next is None or r.restart_flag:
                            continue
                        eps_y = r.pgm_gap if run is cdca_run else 0.0
                        bound = cert_bound(rho, inst.d, cfg.eps_stop, r.pgm_gap, eps_y=eps_y)
                        required = 0.5 * bound.rho_bar * r.step_norm ** 2 - bound.eps_bar - 1e-6
                        if r.f_cont - r.f_next < required:
                            result.fail(
                                f"{inst.name}: {trace.method} at rho={rho:g}, k={r.k} decreased by "
                                f"{r.f_cont - r.f_next:.6g} < {required:.6g}"
                            )
                    result.cases += 1
        return result
    
    def check_rate_bound(self) -> CheckResult:
        """min_k decrease ≤ (f(x^0) − min F)/K"""
        result = CheckResult("rate_bound")
        for inst in self._instances(11):
            F_star = brute_force_min(inst.F).global_min_value
            for rho in (0.0, 1.0):
                _, trace = dca_run(inst, SolverConfig(rho=rho, pgm_max_iter=200, localmin_restart=False, seed=self.seed))
                steps = [r for r in trace.records if r.f_next is not None]
                if not steps:
                    continue
                smallest = min(r.f_cont - r.f_next for r in steps)
                allowed = (steps[0].f_cont - F_star) / len(steps)
                if smallest > allowed + TOL:
                    result.fail(f"{inst.name}: rho={rho:g}, smallest decrease {smallest:.6g} over {len(steps)} steps")
                result.cases += 1
        return result
    
    def check_fw_gap_bound(self) -> CheckResult:
        """min_t gap(w^t) ≤ (φ(w^0) − min φ)/T with min φ over all vertices of ∂h"""
        result = CheckResult("fw_gap_bound")
        rng = np.random.default_rng([self.seed, 12])
        for inst in self._instances(12, FW_MAX_D):
            x = self._random_set(rng, inst.d).astype(float)
            phi = PhiObjective(x_anchor=x, instance=inst, mode=InnerMode.EXACT)
            phi_min = min(phi.evaluate(v)[0] for v in subdifferential_vertices(inst.H, x))
            w0 = linmin_subdiff(np.zeros(inst.d), x, inst.H, rho=0.0)
            for T in (1, 2, 5, 10):
                fw = fw_concave_min(phi, w0, eps=0.0, T=T)
                allowed = (fw.phis[0] - phi_min) / T + 1e-6
                if min(fw.gaps) > allowed:
                    result.fail(f"{inst.name}: T={T}, smallest gap {min(fw.gaps):.6g} > {allowed:.6g} at x = {x.tolist()}")
                result.cases += 1
        return result
    
    def check_subsup_is_dca(self) -> CheckResult:
        """SubSup and exact DCA at ρ = 0 visit the same sets"""
        result = CheckResult("subsup_is_dca")
        rng = np.random.default_rng([self.seed, 13])
        cfg = self._exact_cfg()
        for inst in self._instances(13):
            X0 = np.flatnonzero(self._random_set(rng, inst.d)).tolist()
            _, dca = dca_run(inst, cfg, inst.F.ground.indicator(X0))
            _, subsup = subsup_run(inst, cfg, X0)
            if [r.x for r in dca.records] != [r.x for r in subsup.records]:
                result.fail(f"{inst.name}: iterates differ from X0 = {X0}")
            result.cases += 1
        return result
    
    def check_cdcar_strong_local_min(self) -> CheckResult:
        """
        CDCAR stops at an ε′-strong local minimum whenever the FW gap of the
        accepted y is at most 1e-8, and at least 80% of runs qualify
        """
        result = CheckResult("cdcar_strong_local_min")
        cfg = self._exact_cfg(fw_budget=20, fw_gap_tol=1e-12)
        instances = self._instances(14, count=3 * self.cases)
        qualified = 0
        for inst in instances:
            _, trace = cdcar_run(inst, cfg)
            result.cases += 1
            last = trace.records[-1]
            if not trace.converged or last.fw_gap_best is None or last.fw_gap_best > FW_GAP_QUALIFY:
                continue
            qualified += 1
            report = is_strong_local_min(inst.F, trace.final_set, trace.certificate.eps_prime + TOL)
            if not report.holds or not trace.strong_certified:
                result.fail(f"{inst.name}: {trace.final_set} improved by {report.witness}")
        if qualified < STRONG_QUALIFY_SHARE * len(instances):
            result.fail(f"only {qualified} of {len(instances)} runs reached a zero Frank-Wolfe gap")
        return result
    
    def check_lipschitz(self) -> CheckResult:
        """|f_L(x) − f_L(z)| ≤ κ‖x − z‖ for G, H and F = G − H"""
        result = CheckResult("lipschitz")
        rng = np.random.default_rng([self.seed, 15])
        for inst in self._instances(15):
            kappa_G, kappa_H = lipschitz_bound(inst.G), lipschitz_bound(inst.H)
            for fn, kappa in ((inst.G, kappa_G), (inst.H, kappa_H), (inst.F, kappa_G + kappa_H)):
                for _ in range(25):
                    x, z = rng.random(inst.d), rng.random(inst.d)
                    change = abs(lovasz_eval(fn, x) - lovasz_eval(fn, z))
                    if change > kappa * np.linalg.norm(x - z) + TOL:
                        result.fail(f"{inst.name}.{fn.name}: change {change:.6g} exceeds {kappa:g}·‖x − z‖")
                    result.cases += 1
        return result
    
    def check_value_bounds(self) -> CheckResult:
        """
        Global value guarantees: DC outputs on speech instances satisfy
        F ≤ G(X*) − βH(X*) + ε′; local minima of a supermodular F are strong
        local minima; strong local minima of a submodular F are global minima
        """
        result = CheckResult("value_bounds")
        cfg = self._exact_cfg()
        for j in range(self.cases):
            speech = gen_speech_synthetic(self.seed * 100 + j, min(self.max_d, 10), 12, 2).instance()
            _, beta = weak_dr_constants(speech.H)
            if beta is None:
                continue
            X_star = brute_force_min(speech.F).global_minimizers[0]
            for run in (dca_run, dcar_run, cdca_run, cdcar_run):
                _, trace = run(speech, cfg)
                if not trace.converged:
                    continue
                bound = weak_dr_bound(speech.G.evaluate(X_star), speech.H.evaluate(X_star), beta,
                                      trace.certificate.eps_prime) + 1e-6
                if trace.final_value > bound:
                    result.fail(f"speech {j}: {trace.method} ended at {trace.final_value:.6g} above {bound:.6g}")
                result.cases += 1
    
        rng = np.random.default_rng([self.seed, 16])
        for base in self._instances(16, 8):
            modular = make_modular(rng.uniform(0.0, 2.0, base.d), name="m")
            supermodular = DSInstance(modular, base.H, name=f"{base.name}_super")
            submodular = DSInstance(base.G, modular, name=f"{base.name}_sub")
            best = brute_force_min(submodular.F).global_min_value
            for code in range(1 << base.d):
                X = members(code, base.d)
                if is_local_min(supermodular.F, X).holds and not is_strong_local_min(supermodular.F, X, TOL).holds:
                    result.fail(f"{supermodular.name}: local minimum {X} is not a strong local minimum")
                if is_strong_local_min(submodular.F, X).holds and submodular.F.evaluate(X) > best + TOL:
                    result.fail(f"{submodular.name}: strong local minimum {X} is not global")
            result.cases += 1
        return result
    
    def check_entropy_row_order(self) -> CheckResult:
        """Empirical entropy does not depend on the order of the data rows"""
        result = CheckResult("entropy_row_order")
        rng = np.random.default_rng([self.seed, 17])
        for _ in range(self.cases):
            data = (rng.random((30, min(self.max_d, 8))) < 0.5).astype(int)
            shuffled = data[rng.permutation(data.shape[0])]
            masks = subset_masks(data.shape[1])
            values = make_empirical_entropy(data).values_of_masks(masks)
            if np.max(np.abs(values - make_empirical_entropy(shuffled).values_of_masks(masks))) > 1e-12:
                result.fail("entropy changed under a row permutation")
            result.cases += 1
        return result
    
    def check_trapped_dca(self) -> CheckResult:
        """Plain DCA with ρ = 1 stops at f = 0 on tiny_a; restarts reach −2"""
        result = CheckResult("trapped_dca", cases=2)
        inst = tiny_a()
        x0 = np.array([1.0, 0.5, 0.0])
        state, _ = dca_run(inst, SolverConfig(rho=1.0, localmin_restart=False), x0)
        if abs(state.f_cont) > TOL:
            result.fail(f"plain DCA stopped at f = {state.f_cont}")
        _, trace = dca_run(inst, SolverConfig(rho=1.0, localmin_restart=True), x0)
        if abs(trace.final_value + 2.0) > TOL:
            result.fail(f"restarted DCA ended at F = {trace.final_value}")
        return result
    
    def check_weak_local_escape(self) -> CheckResult:
        """{0} is a local but not strong local minimum of tiny_c; CDCAR escapes it"""
        result = CheckResult("weak_local_escape", cases=3)
        inst = tiny_c()
        if not is_local_min(inst.F, [0]).holds:
            result.fail("{0} is not a local minimum")
        strong = is_strong_local_min(inst.F, [0])
        if strong.holds:
            result.fail("{0} is reported as a strong local minimum")
        _, trace = cdcar_run(inst, self._exact_cfg(fw_budget=10), [0])
        if abs(trace.final_value + 1.0) > TOL:
            result.fail(f"CDCAR from {{0}} ended at F = {trace.final_value}")
        return result
    
    def check_supermodular_trap(self) -> CheckResult:
        """{1} is a strong local minimum of tiny_d with value 0 while min F = −2"""
        result = CheckResult("supermodular_trap", cases=2)
        inst = tiny_d()
        if not is_strong_local_min(inst.F, [1]).holds:
            result.fail("{1} is not a strong local minimum")
        best = brute_force_min(inst.F)
        if abs(best.global_min_value + 2.0) > TOL or best.global_minimizers != [[3]]:
            result.fail(f"minimum {best.global_min_value} at {best.global_minimizers}")
        return result


def run_verify(level: str = "fast", seed: int = 0, greedy: GreedyFn = greedy_subgradient) -> VerifyReport:
    return VerifySuite(level, seed, greedy).run()
