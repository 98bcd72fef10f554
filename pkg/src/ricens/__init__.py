"""Multi-sensor rice-yield regression with an inverse-error weighted ensemble."""
from .config import PipelineConfig, load_config, parse_config
from .ensemble import combine_predictions, compute_weights
from .evaluation import MetricsReport, compute_metrics
from .pipeline import PipelineError, run_pipeline
from .selection import paper_selected_features, selection_pipeline
from .spectral import IndexId, compute_optical_index, compute_rvi
from .synthetic import SyntheticSpec, generate_synthetic_dataset

__version__ = "0.1.0"
