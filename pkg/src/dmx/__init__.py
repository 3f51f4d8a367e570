"""Minimax state estimation for linear descriptor systems."""

from .continuous import (Convention, ContinuousDescriptorModel, closed_range_diagnostic,
                         filter_integrate, riccati_integrate, svd_reduce)
from .discrete import (UNBOUNDED, EstimateReport, FilterState, batch_oracle, directional_error,
                       estimate, filter_init, filter_step, membership, run_filter, run_kalman)
from .errors import (CoefficientAssemblyError, ContractViolation, DegenerateModel, DimensionMismatch,
                     DmxError, FiniteEscape, InfeasibleStep, NumericalFailure,
                     PreconditionViolation)
from .linalg import ToleranceConfig, is_spd, numeric_rank, pinv, range_projector
from .model import (DiscreteDescriptorModel, DisturbanceRealization, Trajectory, propagate,
                    psi_value, sample_disturbance)

__version__ = "0.1.0"
