from .config import ExperimentConfig, config_from_dict, load_config
from .runner import Cell, RunArtifacts, report, run_experiment, summarize, sweep

__all__ = ["ExperimentConfig", "config_from_dict", "load_config", "Cell", "RunArtifacts", "report",
           "run_experiment", "summarize", "sweep"]
