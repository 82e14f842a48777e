"""Services module initialization"""
from dsmin.services.harness import experiment_service, run_experiment, emit_plot_data
from dsmin.services.dc_solvers import (
    dca_run,
    dcar_run,
    adca_run,
    adcar_run,
    cdca_run,
    cdcar_run,
)
from dsmin.services.baselines import subsup_run, supsub_run, modmod_run

__all__ = [
    "experiment_service",
    "run_experiment",
    "emit_plot_data",
    "dca_run",
    "dcar_run",
    "adca_run",
    "adcar_run",
    "cdca_run",
    "cdcar_run",
    "subsup_run",
    "supsub_run",
    "modmod_run",
]
