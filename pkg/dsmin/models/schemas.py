from pydantic import BaseModel, Field
from typing import Any, Dict, List, Optional
from enum import Enum


class PermutationMode(str, Enum):
    """How the h-subgradient permutation is chosen at each outer iteration"""
    SINGLE = "single"
    HEURISTIC3 = "heuristic3"
    ALL_D = "all_d"


class InnerMode(str, Enum):
    """Solver used for the convex x-subproblem"""
    PGM = "pgm"
    EXACT = "exact"


class StepRule(str, Enum):
    """Projected subgradient step schedule"""
    AUTO = "auto"
    RHO_ZERO = "rho_zero"
    RHO_POS = "rho_pos"


class BoundKind(str, Enum):
    """Modular bound variants"""
    UPPER1 = "upper1"
    UPPER2 = "upper2"
    LOWER = "lower"


class CheckedProperty(str, Enum):
    """Property verified by an oracle report"""
    GLOBAL_MIN = "global_min"
    LOCAL_MIN = "local_min"
    STRONG_LOCAL_MIN = "strong_local_min"
    SUBMODULAR = "submodular"
    NONDECREASING = "nondecreasing"
    BASE_POLYTOPE = "base_polytope"
    WEAK_DR = "weak_dr"
    MODULARITY = "modularity"


class InstanceKind(str, Enum):
    """Experiment instance families"""
    SPEECH = "speech"
    FEATURE = "feature"
    SET_COVER = "set_cover"
    TINY_A = "tiny_a"
    TINY_C = "tiny_c"
    TINY_D = "tiny_d"


class SolverConfig(BaseModel):
    """Tolerances, budgets and heuristic switches of one solver run"""
    rho: float = Field(0.0, ge=0)
    eps_stop: float = Field(1e-6, ge=0)
    eps_x: float = Field(1e-6, gt=0)
    max_outer: int = Field(30, ge=1)
    fw_budget: int = Field(10, ge=1)
    fw_gap_tol: float = Field(1e-6, ge=0)
    pgm_max_iter: int = Field(1000, ge=1)
    step_rule: StepRule = StepRule.AUTO
    inner_mode: InnerMode = InnerMode.PGM
    permutation_mode: PermutationMode = PermutationMode.SINGLE
    round_each_iter: bool = False
    accelerate: bool = False
    accel_q: int = Field(5, ge=1)
    localmin_restart: bool = False
    max_restarts: int = Field(50, ge=0)
    direct_max_iter: int = Field(1000, ge=1)
    candidate_workers: int = Field(1, ge=1)
    record_timing: bool = False
    seed: int = 42
    
    class Config:
        extra = 'forbid'


class CertBound(BaseModel):
    """Set-level optimality slack derived from DC tolerances"""
    rho: float
    d: int
    eps: float
    eps_x: float
    eps_y: float = 0.0
    t_x: float = 0.5
    t_y: float = 0.5
    eps_prime: float
    rho_bar: float
    eps_bar: float


class IterationRecord(BaseModel):
    """One outer iteration of a solver"""
    k: int
    F_disc: float
    f_cont: float
    f_next: Optional[float] = None
    pgm_gap: float = 0.0
    fw_gaps: List[float] = []
    phi_best: Optional[float] = None
    fw_gap_best: Optional[float] = None
    face_exact: bool = False
    wall_ms: float = 0.0
    restart_flag: bool = False
    X: List[int] = []
    x: List[float] = []
    step_norm: float = 0.0
    candidate: Optional[str] = None
    certified: bool = True


class SolverTrace(BaseModel):
    """Append-only record of a solver run"""
    method: str
    rho: float
    seed: int
    d: int
    records: List[IterationRecord] = []
    final_set: List[int] = []
    final_value: Optional[float] = None
    final_x: List[float] = []
    certificate: Optional[CertBound] = None
    converged: bool = False
    certified: bool = True
    strong_certified: bool = False
    restarts: int = 0
    error: Optional[str] = None
    
    def append(self, record: IterationRecord) -> None:
        self.records.append(record)
    
    @property
    def discrete_values(self) -> List[float]:
        return [r.F_disc for r in self.records]
    
    @property
    def continuous_values(self) -> List[float]:
        return [r.f_cont for r in self.records]


class OracleReport(BaseModel):
    """Outcome of an exhaustive check"""
    checked_property: CheckedProperty
    holds: bool = True
    global_min_value: Optional[float] = None
    global_minimizers: List[List[int]] = []
    witness: Optional[List[int]] = None
    details: Dict[str, Any] = {}


class InstanceSpec(BaseModel):
    """Which instance an experiment runs on"""
    kind: InstanceKind = InstanceKind.SPEECH
    d: int = Field(50, ge=1)
    n_words: int = Field(100, ge=1)
    r: int = Field(10, ge=1)
    lam: float = 1.0
    alpha: float = Field(1.0, gt=0)
    csv_path: Optional[str] = None
    class_column: str = "class"
    train_fraction: float = Field(0.7, gt=0, le=1)
    g_universe: Optional[int] = None
    g_covers: Optional[List[List[int]]] = None
    h_universe: Optional[int] = None
    h_covers: Optional[List[List[int]]] = None
    
    class Config:
        extra = 'forbid'


class ExperimentConfig(BaseModel):
    """Full description of an experiment sweep"""
    name: str = "experiment"
    instance: InstanceSpec = Field(default_factory=InstanceSpec)
    methods: List[str] = ["dca", "dcar", "cdca", "cdcar", "subsup", "supsub", "modmod"]
    rho_grid: List[float] = [0.0, 0.001, 0.01, 0.1, 1.0, 10.0]
    seeds: List[int] = [42, 43, 44]
    solver: SolverConfig = Field(default_factory=SolverConfig)
    x0: Optional[List[float]] = None
    workers: int = Field(1, ge=1)
    
    class Config:
        extra = 'forbid'


class SeriesSummary(BaseModel):
    """Per-iteration gap statistics for one method"""
    method: str
    iterations: int
    mean_discrete_gap: List[float]
    std_discrete_gap: List[float]
    mean_continuous_gap: List[float]
    std_continuous_gap: List[float]
    best_final_value: Optional[float] = None
    cells: int = 0
    failed_cells: int = 0
    uncertified_cells: int = 0


class ExperimentSummary(BaseModel):
    """Aggregated view over all cells of an experiment"""
    name: str
    methods: List[SeriesSummary] = []
    min_discrete: Dict[str, float] = {}
    min_continuous: Dict[str, float] = {}
    notes: List[str] = []
