import math
import numpy as np
import pytest
from dsmin.core.errors import InputError
from dsmin.models.schemas import InnerMode, PermutationMode, SolverConfig
from dsmin.services.setfn import DSInstance, make_modular, random_cover_instance
from dsmin.services.lovasz import round_f
from dsmin.services.oracle import (
    brute_force_min,
    is_local_min,
    is_strong_local_min,
    weak_dr_bound,
    weak_dr_constants,
)
from dsmin.services.dc_solvers import (
    adca_extrapolate,
    adca_run,
    adcar_run,
    cdca_run,
    cdcar_run,
    cert_bound,
    dca_run,
    dcar_run,
    nesterov_t,
)
from dsmin.services.harness import gen_speech_synthetic


def exact(**kwargs) -> SolverConfig:
    return SolverConfig(rho=0.0, inner_mode=InnerMode.EXACT, localmin_restart=False, **kwargs)


def test_cert_bound_branches():
    """Test both branches of the set-level slack"""
    c = cert_bound(rho=0.0, d=5, eps=1e-6, eps_x=1e-6)
    assert c.eps_prime == pytest.approx(2e-6)
    
    c = cert_bound(rho=1.0, d=3, eps=1e-6, eps_x=1e-6)
    assert c.eps_prime == pytest.approx(math.sqrt(2 * 3 * 2e-6))
    assert c.rho_bar == pytest.approx(1.0)
    assert c.eps_bar == pytest.approx(2e-6)
    
    c = cert_bound(rho=0.001, d=2, eps=1.0, eps_x=0.0)
    assert c.eps_prime == pytest.approx(0.001 + 1.0)
    
    assert cert_bound(rho=0.0, d=4, eps=0.0, eps_x=0.0).eps_prime == 0.0


def test_cert_bound_validation():
    """Test parameter checks"""
    with pytest.raises(InputError):
        cert_bound(rho=-1.0, d=3, eps=0.0, eps_x=0.0)
    with pytest.raises(InputError):
        cert_bound(rho=1.0, d=3, eps=0.0, eps_x=0.0, t_x=0.0)
    with pytest.raises(InputError):
        cert_bound(rho=1.0, d=3, eps=0.0, eps_x=0.0, t_y=1.5)


def test_nesterov_sequence():
    """Test the extrapolation weights"""
    assert nesterov_t(1) == 1.0
    assert nesterov_t(2) == pytest.approx((1 + math.sqrt(5)) / 2)
    assert nesterov_t(5) > nesterov_t(4)
    with pytest.raises(InputError):
        nesterov_t(0)


def test_extrapolation_acceptance(tiny_a_inst):
    """Test that the extrapolated point is kept only when it passes the window test"""
    x_k = np.full(3, 0.5)
    x_km1 = np.zeros(3)
    
    assert adca_extrapolate(x_k, x_km1, 1, 5, [10.0], tiny_a_inst) is x_k
    
    z = adca_extrapolate(x_k, x_km1, 2, 5, [10.0], tiny_a_inst)
    assert z is not x_k
    assert np.all(z > x_k) and np.all(z <= 1.0)
    
    assert adca_extrapolate(x_k, x_km1, 2, 5, [-10.0], tiny_a_inst) is x_k


def test_tiny_a_stationary_start(tiny_a_inst):
    """Test that DCA and CDCA stop at the non-optimal critical point (1, 1/2, 0)"""
    cfg = SolverConfig(rho=1.0, localmin_restart=False)
    for run in (dca_run, cdca_run):
        state, trace = run(tiny_a_inst, cfg, [1.0, 0.5, 0.0])
        assert trace.converged
        assert len(trace.records) == 1
        assert abs(state.f_cont) <= 1e-9
        assert trace.final_value == pytest.approx(0.0)


def test_tiny_a_restart_escapes(tiny_a_inst):
    """Test that the local-minimum restart reaches the optimum −2"""
    cfg = SolverConfig(rho=1.0, localmin_restart=True)
    state, trace = dca_run(tiny_a_inst, cfg, [1.0, 0.5, 0.0])
    
    assert trace.final_value == pytest.approx(-2.0)
    assert trace.final_set == [2]
    assert trace.restarts == 1
    assert any(r.restart_flag for r in trace.records)
    assert [r.k for r in trace.records] == list(range(len(trace.records)))


def test_tiny_c_cdcar_escapes_weak_local_min(tiny_c_inst):
    """Test that exact CDCAR leaves the weak local minimum {0}"""
    assert is_local_min(tiny_c_inst.F, [0]).holds
    
    state, trace = cdcar_run(tiny_c_inst, exact(), [0])
    
    assert trace.records[0].X == [0]
    assert trace.final_value == pytest.approx(-1.0)
    assert trace.final_set == [1, 2]


def test_integral_start_is_kept(tiny_c_inst):
    """Test that rounded variants start from the given set even on value ties"""
    _, trace = dcar_run(tiny_c_inst, exact(max_outer=1), [0])
    assert trace.records[0].X == [0]
    assert trace.records[0].x == [1.0, 0.0, 0.0, 0.0, 0.0]


@pytest.mark.parametrize("rho", [0.0, 1.0])
@pytest.mark.parametrize("run", [dca_run, cdca_run])
def test_sufficient_decrease(random_instances, rho, run):
    """Test f(x^k) − f(x^{k+1}) ≥ (ρ/2)‖x^{k+1} − x^k‖² up to the inner accuracy"""
    cfg = SolverConfig(rho=rho, pgm_max_iter=200, max_outer=8, localmin_restart=False)
    for inst in random_instances[:6]:
        _, trace = run(inst, cfg)
        for r in trace.records:
            if r.f_next is None:
                continue
            slack = (4 if run is cdca_run else 2) * r.pgm_gap + 1e-6
            assert r.f_cont - r.f_next >= 0.5 * rho * r.step_norm ** 2 - slack


def test_rate_bound(random_instances):
    """Test min_k decrease ≤ (f(x^0) − min F)/K"""
    for rho in (0.0, 1.0):
        cfg = SolverConfig(rho=rho, pgm_max_iter=200, localmin_restart=False)
        for inst in random_instances:
            _, trace = dca_run(inst, cfg)
            steps = [r for r in trace.records if r.f_next is not None]
            decreases = [r.f_cont - r.f_next for r in steps]
            F_star = brute_force_min(inst.F).global_min_value
            assert min(decreases) <= (steps[0].f_cont - F_star) / len(steps) + 1e-9


def test_dcar_monotone(random_instances):
    """Test that F(X^k) never increases along DCAR iterates"""
    for inst in random_instances:
        _, trace = dcar_run(inst, SolverConfig(pgm_max_iter=300, localmin_restart=False))
        values = trace.discrete_values
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_dcar_all_d_local_min():
    """Test that DCAR with all d tie-breaks stops at an ε′-local minimum"""
    rng = np.random.default_rng(11)
    cfg = exact(permutation_mode=PermutationMode.ALL_D)
    for _ in range(20):
        inst = random_cover_instance(rng, int(rng.integers(3, 9)))
        state, trace = dcar_run(inst, cfg)
        if not trace.converged:
            continue
        X = np.flatnonzero(np.asarray(trace.final_x) > 0.5).tolist()
        assert X == trace.final_set
        assert is_local_min(inst.F, X, trace.certificate.eps_prime + 1e-9).holds


def test_cdcar_strong_local_min():
    """Test that CDCAR with exact face minimization stops at ε′-strong local minima"""
    rng = np.random.default_rng(5)
    cfg = exact(fw_budget=20, fw_gap_tol=1e-12)
    qualified = 0
    for _ in range(25):
        inst = random_cover_instance(rng, int(rng.integers(3, 9)))
        _, trace = cdcar_run(inst, cfg)
        last = trace.records[-1]
        if not trace.converged or last.fw_gap_best is None or last.fw_gap_best > 1e-8:
            continue
        qualified += 1
        assert trace.strong_certified
        assert is_strong_local_min(inst.F, trace.final_set, trace.certificate.eps_prime + 1e-8).holds
    assert qualified >= 20


def test_tiny_c_cdcar_strong_certificate(tiny_c_inst):
    """Test that exact CDCAR certifies its stopping set on tiny_c as a strong local minimum"""
    _, trace = cdcar_run(tiny_c_inst, exact(), [0])
    assert trace.final_value == pytest.approx(-1.0)
    assert trace.strong_certified
    assert is_strong_local_min(tiny_c_inst.F, trace.final_set, trace.certificate.eps_prime).holds


def test_strong_certificate_needs_exact_rounded_run(random_instances):
    """Test that only rounded runs with exact face minimization claim the strong certificate"""
    for inst in random_instances[:4]:
        _, unrounded = cdca_run(inst, exact())
        _, pgm = cdcar_run(inst, SolverConfig(rho=0.0, localmin_restart=False, pgm_max_iter=300))
        assert not unrounded.strong_certified
        assert not pgm.strong_certified


@pytest.mark.parametrize("mode", [PermutationMode.SINGLE, PermutationMode.HEURISTIC3])
def test_cdca_starts_from_best_heuristic_vertex(random_instances, mode):
    """Test that CDCA starts Frank-Wolfe from the random, G-gain or F-gain order in every mode"""
    cfg = SolverConfig(rho=0.0, localmin_restart=False, pgm_max_iter=300, permutation_mode=mode)
    for inst in random_instances:
        _, trace = cdca_run(inst, cfg)
        labels = {r.candidate for r in trace.records if r.candidate is not None}
        assert labels <= {"random", "G_gain", "F_gain", "face_min"}


@pytest.mark.parametrize("run", [dca_run, dcar_run, cdca_run, cdcar_run])
def test_weak_dr_value_bound(run):
    """Test F(X̂) ≤ G(X*) − βH(X*) + ε′ on speech instances"""
    checked = 0
    for seed in range(15):
        inst = gen_speech_synthetic(seed, d=8, n_words=12, r=2).instance()
        _, beta = weak_dr_constants(inst.H)
        if beta is None:
            continue
        X_star = brute_force_min(inst.F).global_minimizers[0]
        _, trace = run(inst, exact())
        if not trace.converged:
            continue
        checked += 1
        bound = weak_dr_bound(inst.G.evaluate(X_star), inst.H.evaluate(X_star), beta, trace.certificate.eps_prime)
        assert trace.final_value <= bound + 1e-6
    assert checked > 0


@pytest.mark.parametrize("mode", [InnerMode.PGM, InnerMode.EXACT])
@pytest.mark.parametrize("run", [dca_run, dcar_run, cdca_run, cdcar_run])
def test_modular_h_reaches_global_min(run, mode):
    """Test that a modular H gives the global minimum"""
    rng = np.random.default_rng(3)
    cfg = SolverConfig(rho=0.0, inner_mode=mode, localmin_restart=False)
    for _ in range(5):
        base = random_cover_instance(rng, 6)
        H = make_modular(rng.uniform(0.0, 3.0, size=6), name="H")
        inst = DSInstance(base.G, H)
        _, trace = run(inst, cfg)
        slack = trace.certificate.eps_prime + max(r.pgm_gap for r in trace.records) + 1e-6
        assert trace.final_value <= brute_force_min(inst.F).global_min_value + slack


def test_restart_gives_local_min(random_instances):
    """Test that ADCA with restarts ends at an ε′-local minimum"""
    cfg = SolverConfig(rho=0.0, inner_mode=InnerMode.EXACT, localmin_restart=True)
    for inst in random_instances:
        state, trace = adca_run(inst, cfg)
        assert trace.method == "adca"
        if trace.restarts < cfg.max_restarts:
            assert is_local_min(inst.F, trace.final_set, trace.certificate.eps_prime + 1e-9).holds


def test_adcar_method_and_labels(random_instances):
    """Test accelerated rounding runs and their candidate labels"""
    for inst in random_instances[:4]:
        _, trace = adcar_run(inst, exact())
        assert trace.method == "adcar"
        for r in trace.records:
            if r.candidate is not None:
                assert r.candidate.split("+")[0] == "sorted"


def test_heuristic3_candidates(random_instances):
    """Test the three-candidate permutation heuristic"""
    cfg = exact(permutation_mode=PermutationMode.HEURISTIC3, seed=9)
    for inst in random_instances:
        _, trace = dcar_run(inst, cfg)
        values = trace.discrete_values
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))
        for r in trace.records:
            if r.candidate is not None:
                assert r.candidate in {"random", "G_gain", "F_gain"}


def test_candidate_workers_do_not_change_trace(random_instances):
    """Test that evaluating tie-breaks concurrently gives the same iterates"""
    inst = random_instances[0]
    _, serial = dcar_run(inst, exact(permutation_mode=PermutationMode.ALL_D))
    _, pooled = dcar_run(inst, exact(permutation_mode=PermutationMode.ALL_D, candidate_workers=3))
    assert [r.X for r in serial.records] == [r.X for r in pooled.records]
    assert serial.final_value == pooled.final_value


def test_budget_exhaustion_record(random_instances):
    """Test the terminal record written when max_outer runs out"""
    inst = random_instances[1]
    _, trace = dca_run(inst, SolverConfig(max_outer=1, eps_stop=0.0, pgm_max_iter=50))
    if not trace.converged:
        assert trace.records[-1].k == 1
        assert trace.records[-1].f_next is None


def test_final_state_matches_trace(random_instances):
    """Test that the returned state and the trace agree"""
    for inst in random_instances[:3]:
        state, trace = cdca_run(inst, exact())
        assert sorted(state.X_rounded) == trace.final_set
        assert state.F_disc == trace.final_value
        assert round_f(inst.F, state.x).value == pytest.approx(trace.final_value)
        assert trace.certificate is not None


def test_start_outside_box_rejected(tiny_a_inst):
    """Test that a start point outside the box raises InputError"""
    with pytest.raises(InputError):
        dca_run(tiny_a_inst, SolverConfig(), [2.0, 0.0, 0.0])
    with pytest.raises(InputError):
        dca_run(tiny_a_inst, SolverConfig(), [0.5, 0.5])
