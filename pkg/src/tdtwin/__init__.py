"""Targeted digital twins: learn a memory-based flow map for the
quantities of interest of an expensive simulator, then predict their
long-horizon dynamics from a short initial window."""

from .core import (
    Burst,
    BurstDataset,
    FlowMapModel,
    FourierSeries,
    Trajectory,
    burst_length,
    explicit_params,
    qoi_vector,
    validate_dataset,
)
from .errors import ConfigurationError, DataError, DivergenceError, TdtwinError
from .fml import (
    AdamState,
    TrainConfig,
    adam_step,
    backward,
    cyclic_lr,
    fit_normalization,
    forward,
    init_model,
    load_model,
    loss_multi_step,
    rollout_k,
    save_model,
    train,
)
from .pipeline import (
    GenerationPlan,
    extract_bursts,
    extract_bursts_from,
    generate_trajectories,
    iter_trajectories,
    load_dataset,
    load_trajectories,
    plan_from_config,
    read_json_config,
    sample_inputs,
    save_dataset,
    save_trajectories,
)
from .predict import (
    SpectrumResult,
    fourier_eval,
    fourier_fit,
    l2_surface_error,
    pointwise_error,
    predict_qoi,
    read_fourier_csv,
    read_series_csv,
    spectrum,
    write_fourier_csv,
    write_series_csv,
)
from .sims import (
    SYSTEM_IDS,
    FullDtSpec,
    SimRun,
    default_hidden_ranges,
    default_init_ranges,
    rk4_step,
    run_full_dt,
    system_info,
)

__version__ = "0.1.0"
