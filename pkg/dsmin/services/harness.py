"""Experiment instances, sweep orchestration, trace persistence and plot data"""
import json
import math
import time
import numpy as np
import pandas as pd
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
from pydantic import ValidationError
from sklearn.model_selection import train_test_split
from dsmin.core.config import settings
from dsmin.core.errors import DataParseError, InputError, TraceParseError
from dsmin.core.logger import logger
from dsmin.models.schemas import (
    ExperimentConfig,
    ExperimentSummary,
    InstanceKind,
    InstanceSpec,
    IterationRecord,
    SeriesSummary,
    SolverConfig,
    SolverTrace,
)
from dsmin.services.setfn import (
    CompositeFunction,
    DSInstance,
    make_concave_of_modular,
    make_empirical_entropy,
    make_modular,
    make_set_cover,
    tiny_a,
    tiny_c,
    tiny_d,
)
from dsmin.services.dc_solvers import adca_run, adcar_run, cdca_run, cdcar_run, dca_run, dcar_run
from dsmin.services.baselines import (
    greedy_direct_run,
    modmod_run,
    pgm_direct_run,
    subsup_run,
    supsub_run,
)

PathLike = Union[str, Path]

METHODS: Dict[str, Callable] = {
    "dca": dca_run,
    "dcar": dcar_run,
    "adca": adca_run,
    "adcar": adcar_run,
    "cdca": cdca_run,
    "cdcar": cdcar_run,
    "subsup": subsup_run,
    "supsub": supsub_run,
    "modmod": modmod_run,
    "pgm": pgm_direct_run,
    "greedy": greedy_direct_run,
}
DC_FAMILY = ("dca", "dcar", "adca", "adcar", "cdca", "cdcar")
NO_RESTART = ("pgm", "greedy")
RHO_FREE = ("subsup", "supsub", "modmod", "pgm", "greedy")
SOFT_CHECK_SLACK = 1e-9


@dataclass
class SpeechInstance:
    """Utterance selection: λ√|N(X)| − Σ_g √(m(X ∩ V_g))"""
    incidence: List[List[int]]
    n_words: int
    m: np.ndarray
    groups: List[List[int]]
    lam: float
    
    @property
    def d(self) -> int:
        return len(self.incidence)
    
    def instance(self) -> DSInstance:
        G = make_set_cover(self.n_words, self.incidence, alpha=self.lam, transform="sqrt", name="G")
        H = make_concave_of_modular(self.groups, self.m, name="H")
        return DSInstance(G, H, name="speech")
    
    def beta_lower_bound(self) -> float:
        """min over groups g and j ∈ V_g of √(m_j / m(V_g)) / 2"""
        bound = math.inf
        for group in self.groups:
            total = float(self.m[group].sum())
            if total > 0:
                bound = min(bound, 0.5 * math.sqrt(float(self.m[group].min()) / total))
        return bound


@dataclass
class FeatureInstance:
    """Feature selection: λ|X| − Î(U_X; C)"""
    data: np.ndarray
    class_labels: np.ndarray
    lam: float
    feature_names: List[str] = field(default_factory=list)
    
    def instance(self) -> DSInstance:
        n, d = self.data.shape
        H = make_empirical_entropy(self.data, name="H")
        terms = [(self.lam, make_modular(np.ones(d), name="size"))]
        for label in np.unique(self.class_labels):
            rows = np.flatnonzero(self.class_labels == label)
            terms.append((rows.size / n, make_empirical_entropy(self.data, rows=rows, name=f"H|{label}")))
        G = CompositeFunction(terms, name="G")
        return DSInstance(G, H, name="feature")


def gen_speech_synthetic(
    seed: int, d: int, n_words: int, r: int, lam: float = 1.0, p: float = 0.3
) -> SpeechInstance:
    """
    Synthetic utterance/word corpus
    
    Args:
        seed: Random seed; equal seeds give identical instances
        d: Number of utterances
        n_words: Vocabulary size
        r: Number of consecutive-index groups
        lam: Weight of the vocabulary term
        p: Success probability of the geometric cover size
        
    Returns:
        SpeechInstance with uniform(0,1) importance weights
    """
    if min(d, n_words, r) < 1:
        raise InputError(f"d, n_words and r must be positive, got {d}, {n_words}, {r}")
    if r > d:
        raise InputError(f"cannot split {d} utterances into {r} groups")
    rng = np.random.default_rng(seed)
    incidence = []
    for _ in range(d):
        size = int(min(rng.geometric(p), n_words))
        incidence.append(sorted(rng.choice(n_words, size=size, replace=False).tolist()))
    m = rng.uniform(0.0, 1.0, size=d)
    groups = [g.tolist() for g in np.array_split(np.arange(d), r)]
    return SpeechInstance(incidence=incidence, n_words=n_words, m=m, groups=groups, lam=lam)


def load_binary_csv(csv_path: PathLike, class_column: str) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """Read a header + binary-cell CSV; the class column may hold any labels"""
    df = pd.read_csv(csv_path)
    if df.empty:
        raise InputError(f"{csv_path} has no data rows")
    if class_column not in df.columns:
        raise InputError(f"class column {class_column!r} not found in {csv_path}")
    labels = df[class_column].to_numpy()
    features = df.drop(columns=[class_column])
    if features.shape[1] == 0:
        raise InputError(f"{csv_path} has no feature columns")
    numeric = features.apply(pd.to_numeric, errors="coerce")
    bad = ~numeric.isin([0, 1])
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DataParseError(
            f"cell value {features.iat[row, col]!r} is not 0 or 1", row=int(row) + 1, column=str(features.columns[col])
        )
    return numeric.to_numpy(dtype=np.int64), labels, [str(c) for c in features.columns]


def build_feature_instance(
    csv_path: PathLike,
    class_column: str = "class",
    lam: float = 1e-4,
    train_fraction: float = 0.7,
    seed: int = 42,
) -> FeatureInstance:
    """
    Feature-selection instance from a binary CSV
    
    Args:
        csv_path: File with a header row, binary feature cells and a class column
        class_column: Name of the class column
        lam: Per-feature cost
        train_fraction: Share of rows kept, drawn with the seed; 1.0 keeps all rows
        seed: Random seed for the row split
        
    Returns:
        FeatureInstance on the training rows
    """
    data, labels, names = load_binary_csv(csv_path, class_column)
    if not 0 < train_fraction <= 1:
        raise InputError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    if train_fraction < 1:
        rows, _ = train_test_split(np.arange(data.shape[0]), train_size=train_fraction, random_state=seed)
        rows = np.sort(rows)
        data, labels = data[rows], labels[rows]
    logger.info(f"Feature instance: {data.shape[0]} rows, {data.shape[1]} features from {csv_path}")
    return FeatureInstance(data=data, class_labels=labels, lam=lam, feature_names=names)


def instance_from_spec(spec: InstanceSpec, seed: int) -> DSInstance:
    """Build the DS instance an InstanceSpec describes"""
    if spec.kind == InstanceKind.SPEECH:
        return gen_speech_synthetic(seed, spec.d, spec.n_words, spec.r, spec.lam).instance()
    if spec.kind == InstanceKind.FEATURE:
        if not spec.csv_path:
            raise InputError("feature instances need csv_path")
        return build_feature_instance(spec.csv_path, spec.class_column, spec.lam, spec.train_fraction, seed).instance()
    if spec.kind == InstanceKind.SET_COVER:
        if spec.g_covers is None or spec.h_covers is None:
            raise InputError("set_cover instances need g_covers and h_covers")
        g_universe = spec.g_universe if spec.g_universe is not None else 1 + max(max(c, default=-1) for c in spec.g_covers)
        h_universe = spec.h_universe if spec.h_universe is not None else 1 + max(max(c, default=-1) for c in spec.h_covers)
        G = make_set_cover(g_universe, spec.g_covers, spec.alpha, name="G")
        H = make_set_cover(h_universe, spec.h_covers, spec.alpha, name="H")
        return DSInstance(G, H, name="set_cover")
    if spec.kind == InstanceKind.TINY_A:
        return tiny_a(spec.alpha)
    if spec.kind == InstanceKind.TINY_C:
        return tiny_c(spec.d, spec.alpha)
    return tiny_d(spec.alpha)


def series_key(method: str, rho: float) -> str:
    return method if method in RHO_FREE else f"{method}@{rho:g}"


def trace_filename(trace: SolverTrace) -> str:
    return f"{trace.method}-{trace.rho:g}-{trace.seed}.jsonl"


def write_trace(trace: SolverTrace, path: PathLike) -> Path:
    """Persist a trace as JSON lines: meta, one line per record, final"""
    path = Path(path)
    meta = {"kind": "meta", "method": trace.method, "rho": trace.rho, "seed": trace.seed, "d": trace.d}
    final = trace.model_dump(mode="json", exclude={"records", "method", "rho", "seed", "d"})
    final["kind"] = "final"
    lines = [json.dumps(meta, sort_keys=True)]
    for record in trace.records:
        lines.append(json.dumps({"kind": "record", **record.model_dump(mode="json")}, sort_keys=True))
    lines.append(json.dumps(final, sort_keys=True))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace(path: PathLike) -> SolverTrace:
    """Load a trace written by write_trace; raises TraceParseError with the line number"""
    path = Path(path)
    trace: Optional[SolverTrace] = None
    finished = False
    line_no = 0
    with path.open() as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                kind = obj.pop("kind")
                if kind == "meta" and trace is None:
                    trace = SolverTrace(**obj)
                elif kind == "record" and trace is not None and not finished:
                    trace.append(IterationRecord(**obj))
                elif kind == "final" and trace is not None and not finished:
                    for key, value in SolverTrace(method=trace.method, rho=trace.rho, seed=trace.seed,
                                                  d=trace.d, **obj):
                        if key != "records":
                            setattr(trace, key, value)
                    finished = True
                else:
                    raise TraceParseError(f"unexpected {kind!r} line", str(path), line_no)
            except TraceParseError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError, ValidationError) as e:
                raise TraceParseError(f"corrupt trace line ({e.__class__.__name__})", str(path), line_no) from e
    if trace is None or not finished:
        raise TraceParseError("trace is truncated", str(path), line_no + 1)
    return trace


def load_traces(trace_dir: PathLike) -> List[SolverTrace]:
    trace_dir = Path(trace_dir)
    if not trace_dir.is_dir():
        raise InputError(f"{trace_dir} is not a directory")
    paths = sorted(trace_dir.glob("*.jsonl"))
    if not paths:
        raise InputError(f"no traces found in {trace_dir}")
    return [read_trace(p) for p in paths]


@dataclass
class ExperimentResult:
    """Traces, summary and where they were written"""
    traces: List[SolverTrace]
    summary: ExperimentSummary
    out_dir: Optional[Path] = None
    
    @property
    def failed(self) -> int:
        return sum(1 for t in self.traces if t.error is not None)
    
    @property
    def uncertified(self) -> int:
        return sum(1 for t in self.traces if t.error is None and not t.certified)


class ExperimentService:
    """Runs sweeps over (method, rho, seed) cells and reduces them to summaries"""
    
    def cells(self, cfg: ExperimentConfig) -> List[Tuple[str, float, int]]:
        unknown = [m for m in cfg.methods if m not in METHODS]
        if unknown:
            raise InputError(f"unknown methods {unknown}; available: {sorted(METHODS)}")
        out = []
        for method in cfg.methods:
            rhos = [0.0] if method in RHO_FREE else cfg.rho_grid
            for rho in rhos:
                for seed in cfg.seeds:
                    out.append((method, float(rho), int(seed)))
        return sorted(set(out))
    
    def run_cell(
        self, method: str, rho: float, seed: int, inst: DSInstance, cfg: ExperimentConfig
    ) -> SolverTrace:
        update = {"rho": rho, "seed": seed}
        if method in NO_RESTART:
            update["localmin_restart"] = False
        solver_cfg = cfg.solver.model_copy(update=update)
        x0 = None if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
        try:
            _, trace = METHODS[method](inst, solver_cfg, x0)
        except Exception as e:
            logger.error(f"Cell {method} rho={rho:g} seed={seed} failed: {str(e)}", exc_info=True)
            trace = SolverTrace(method=method, rho=rho, seed=seed, d=inst.d, certified=False, error=str(e))
        return trace
    
    def run_experiment(
        self,
        cfg: ExperimentConfig,
        out_dir: Optional[PathLike] = None,
        workers: Optional[int] = None,
    ) -> ExperimentResult:
        """
        Run every (method, rho, seed) cell of an experiment
        
        Args:
            cfg: Experiment configuration
            out_dir: Root directory; traces go to out_dir/<name>/
            workers: Concurrent cells (cfg.workers by default)
            
        Returns:
            ExperimentResult with traces sorted by cell and the summary
        """
        cells = self.cells(cfg)
        workers = workers or cfg.workers or settings.DEFAULT_WORKERS
        logger.info(f"Running experiment {cfg.name!r}: {len(cells)} cells on {workers} worker(s)")
        instances = {seed: instance_from_spec(cfg.instance, seed) for seed in sorted(set(cfg.seeds))}
        
        def job(cell):
            method, rho, seed = cell
            return self.run_cell(method, rho, seed, instances[seed], cfg)
        
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                traces = list(pool.map(job, cells))
        else:
            traces = [job(cell) for cell in cells]
        
        summary = self.summarize(traces, cfg.name)
        target = None
        if out_dir is not None:
            target = Path(out_dir) / cfg.name
            target.mkdir(parents=True, exist_ok=True)
            (target / "experiment.json").write_text(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
            for trace in traces:
                write_trace(trace, target / trace_filename(trace))
            self.write_summary(summary, target)
            self.emit_plot_data(summary, target, self.series_keys(cfg))
        result = ExperimentResult(traces=traces, summary=summary, out_dir=target)
        logger.info(f"Experiment {cfg.name!r} finished: {result.failed} failed, {result.uncertified} uncertified")
        return result
    
    def summarize(self, traces: Sequence[SolverTrace], name: str) -> ExperimentSummary:
        """
        Per-series gap statistics against the best value any method reached
        
        Gaps are measured per seed from the smallest discrete (continuous)
        value recorded by any trace with that seed. Shorter traces are padded
        with their last value before averaging.
        """
        traces = sorted(traces, key=lambda t: (t.method, t.rho, t.seed))
        ok = [t for t in traces if t.error is None and t.records]
        min_d: Dict[str, float] = {}
        min_c: Dict[str, float] = {}
        for t in ok:
            key = str(t.seed)
            min_d[key] = min(min_d.get(key, math.inf), min(t.discrete_values))
            min_c[key] = min(min_c.get(key, math.inf), min(t.continuous_values))
        
        groups: Dict[str, List[SolverTrace]] = {}
        for t in traces:
            groups.setdefault(series_key(t.method, t.rho), []).append(t)
        
        series = []
        for key in sorted(groups):
            members = groups[key]
            usable = [t for t in members if t.error is None and t.records]
            length = max((len(t.records) for t in usable), default=0)
            
            def padded(values: List[float], floor: float) -> np.ndarray:
                gaps = np.asarray(values, dtype=float) - floor
                return np.concatenate((gaps, np.full(length - gaps.size, gaps[-1])))
            
            if usable:
                disc = np.vstack([padded(t.discrete_values, min_d[str(t.seed)]) for t in usable])
                cont = np.vstack([padded(t.continuous_values, min_c[str(t.seed)]) for t in usable])
            else:
                disc = cont = np.zeros((1, 0))
            finals = [t.final_value for t in usable if t.final_value is not None]
            series.append(SeriesSummary(
                method=key,
                iterations=length,
                mean_discrete_gap=disc.mean(axis=0).tolist(),
                std_discrete_gap=disc.std(axis=0).tolist(),
                mean_continuous_gap=cont.mean(axis=0).tolist(),
                std_continuous_gap=cont.std(axis=0).tolist(),
                best_final_value=min(finals) if finals else None,
                cells=len(members),
                failed_cells=sum(1 for t in members if t.error is not None),
                uncertified_cells=sum(1 for t in members if t.error is None and not t.certified),
            ))
        summary = ExperimentSummary(name=name, methods=series, min_discrete=min_d, min_continuous=min_c)
        summary.notes = self._soft_checks(ok)
        return summary
    
    def _soft_checks(self, traces: List[SolverTrace]) -> List[str]:
        """DC-family finals should not exceed ModMod on most seeds; logged, never fatal"""
        modmod = {t.seed: t.final_value for t in traces if t.method == "modmod"}
        if not modmod:
            return []
        notes = []
        finals: Dict[str, Dict[int, float]] = {}
        for t in traces:
            if t.method in DC_FAMILY and t.seed in modmod:
                finals.setdefault(series_key(t.method, t.rho), {})[t.seed] = t.final_value
        for key in sorted(finals):
            seeds = finals[key]
            good = sum(1 for seed, value in seeds.items() if value <= modmod[seed] + SOFT_CHECK_SLACK)
            if 3 * good < 2 * len(seeds):
                note = f"{key}: final value at most ModMod on {good} of {len(seeds)} seeds"
                logger.warning(f"Soft check missed: {note}")
                notes.append(note)
        return notes
    
    def write_summary(self, summary: ExperimentSummary, out_dir: PathLike) -> Path:
        path = Path(out_dir) / "summary.json"
        path.write_text(json.dumps(summary.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        return path
    
    def series_keys(self, cfg: ExperimentConfig) -> List[str]:
        return sorted({series_key(method, rho) for method, rho, _ in self.cells(cfg)})
    
    def emit_plot_data(
        self, summary: ExperimentSummary, out_dir: PathLike, series: Optional[Sequence[str]] = None
    ) -> List[Path]:
        """
        Write one CSV per series with mean/std discrete and continuous gaps
        
        Mean gaps are floored at PLOT_GAP_FLOOR so they can go on a log axis;
        a comment line at the top of each file says so. Keys in ``series``
        that the summary lacks get header-only files.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        floor = settings.PLOT_GAP_FLOOR
        present = {s.method for s in summary.methods}
        empty = [
            SeriesSummary(method=key, iterations=0, mean_discrete_gap=[], std_discrete_gap=[],
                          mean_continuous_gap=[], std_continuous_gap=[])
            for key in (series or []) if key not in present
        ]
        paths = []
        for s in sorted(summary.methods + empty, key=lambda s: s.method):
            df = pd.DataFrame({
                "iteration": np.arange(s.iterations, dtype=int),
                "mean_discrete_gap": np.maximum(np.asarray(s.mean_discrete_gap, dtype=float), floor),
                "std_discrete_gap": np.asarray(s.std_discrete_gap, dtype=float),
                "mean_continuous_gap": np.maximum(np.asarray(s.mean_continuous_gap, dtype=float), floor),
                "std_continuous_gap": np.asarray(s.std_continuous_gap, dtype=float),
            })
            path = out_dir / f"plot_{s.method.replace('@', '_rho')}.csv"
            with path.open("w") as handle:
                handle.write(f"# mean gaps floored at {floor:g} for log-scale plotting\n")
                df.to_csv(handle, index=False, float_format="%.17g")
            paths.append(path)
        return paths
    
    def report(self, trace_dir: PathLike) -> ExperimentSummary:
        """Rebuild summary.json and plot CSVs from stored traces"""
        trace_dir = Path(trace_dir)
        traces = load_traces(trace_dir)
        name = trace_dir.name
        series = None
        config_path = trace_dir / "experiment.json"
        if config_path.exists():
            cfg = ExperimentConfig(**json.loads(config_path.read_text()))
            name = cfg.name
            series = self.series_keys(cfg)
            present = {t.method for t in traces}
            missing = [m for m in cfg.methods if m not in present]
            if missing:
                logger.warning(f"Traces missing for methods {missing}; summarizing available methods only")
        summary = self.summarize(traces, name)
        self.write_summary(summary, trace_dir)
        self.emit_plot_data(summary, trace_dir, series)
        return summary
    
    def bench(self, d: int = 50, seeds: Optional[Sequence[int]] = None, workers: int = 1,
              out_dir: Optional[PathLike] = None) -> pd.DataFrame:
        """Desk-scale sweep on synthetic speech; wall time and best value per method"""
        rows = []
        for method in METHODS:
            cfg = ExperimentConfig(
                name=f"bench-{method}",
                instance=InstanceSpec(kind=InstanceKind.SPEECH, d=d),
                methods=[method],
                seeds=list(seeds or settings.seeds),
                solver=SolverConfig(localmin_restart=method not in NO_RESTART),
            )
            started = time.perf_counter()
            result = self.run_experiment(cfg, out_dir=out_dir, workers=workers)
            elapsed = time.perf_counter() - started
            finals = [t.final_value for t in result.traces if t.final_value is not None]
            rows.append({
                "method": method,
                "seconds": elapsed,
                "best_final_value": min(finals) if finals else float("nan"),
                "failed": result.failed,
            })
        return pd.DataFrame(rows)


experiment_service = ExperimentService()
run_experiment = experiment_service.run_experiment
emit_plot_data = experiment_service.emit_plot_data
