"""Integrated volatility under serially dependent microstructure noise."""

from ._accel import backend
from .ingest import IngestSpec, load_days, read_series_csv, write_series_csv
from .mc import McConfig, McReport, preset_configs, qq_data, run_mc
from .multistep import PipelineReport, Tuning, iv_raw_corrected, run_pipeline
from .noise_moments import (
    NoiseMoments,
    estimate_noise_moments,
    fit_ar1_acf,
    log_acf_regression,
    rv_lag,
    rv_lag_adjusted,
    sigma2_u_of,
)
from .preavg import IvEstimate, iv_estimate, normalized_stat, optimal_c, pav_geometry, pav_stat
from .sampling import TickSeries, calendar_subsample, tick_filter, time_warp_grid
from .sim import (
    Ar1NoiseConfig,
    OuConfig,
    SvConfig,
    model_sigma2_u,
    simulate_noise,
    simulate_observed,
    simulate_ou,
    simulate_sv,
)

__version__ = "0.1.0"
