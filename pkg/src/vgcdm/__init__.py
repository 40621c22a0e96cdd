"""Pulse-voltage-guided conditional diffusion workbench for 1D vibration signals."""

__version__ = "0.1.0"

from .signals import (  # noqa: F401
    Dataset,
    DatasetManifest,
    PairedSample,
    Signal,
    normalize,
    read_dataset,
    slice_nonoverlapping,
    write_dataset,
)
from .schedule import (  # noqa: F401
    NoiseSchedule,
    cosine_schedule,
    linear_schedule,
    make_schedule,
    posterior_step_params,
    q_sample,
)
from .metrics import MetricConfig, batch_stats, fscs, psnr, rmse  # noqa: F401
