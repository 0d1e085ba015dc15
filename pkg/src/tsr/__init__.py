"""Temporal score rescaling for diffusion and flow-matching samplers on analytic score fields."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    DomainError,
    ParameterError,
    PolicyMisuseError,
    TSRError,
    UnsupportedRegimeError,
    UnsupportedScheduleError,
)
from .rescale import CFG, CNS, TSR, NoRescale, tsr_factor  # noqa: E402
from .sampler import SampleBatch, SamplerConfig, run  # noqa: E402
from .schedule import Schedule  # noqa: E402
from .scorefield import EmpiricalField, GaussianMixture  # noqa: E402

__all__ = [
    "CFG", "CNS", "TSR", "NoRescale", "tsr_factor", "SampleBatch", "SamplerConfig", "run", "Schedule",
    "EmpiricalField", "GaussianMixture", "TSRError", "DomainError", "ParameterError", "PolicyMisuseError",
    "ConfigurationError", "UnsupportedRegimeError", "UnsupportedScheduleError",
]
