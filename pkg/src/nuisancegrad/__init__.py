"""Stochastic gradient methods for risk minimization when the loss
depends on an estimated nuisance function: problem oracles, nuisance
estimators, orthogonalized gradient oracles, iteration engines, and an
experiment harness with machine-checked scaling-law verification.
"""

from .errors import (ConfigError, DomainError, EmptySample, EmptySeries,
                     KindMismatch, MissingColumn, MissingComponent,
                     NoConvergence, NonFiniteEval, NonFiniteIterate,
                     NonPositive, NotPositiveDefinite, NuisanceGradError,
                     ParseError, StreamExhausted, Unsupported)
from .linalg import cholesky, finite_diff_grad, min_eig_sym
from .metrics import excess_risk, slope_fit
from .nuisance import (LogisticOnFeatures, RFFMap, RidgeOnFeatures,
                       StreamingLogistic, StreamingRidge, as_nuisance,
                       model_from_json, model_to_json)
from .optimize import (InterleaveSchedule, OptConfig, Trajectory,
                       averaged_sgd_run, interleaved_run, osgd_run, sgd_run)
from .ortho import (NoOracle, OrthoOperator, estimate_operator, frob_error,
                    orthogonality_check, perturbed_operator,
                    plm_true_operator, zero_operator)
from .problems import (MonteCarloCfg, NuisanceFn, Sample, SampleBatch,
                       PROBLEM_IDS, diagnostics, make_oracle, nuisance_norm,
                       unit_direction)
from .rng import Rng, gaussian
from .simdata import (DgpConfig, SampleStream, TabularSource, draw_batch,
                      draw_sample, ingest_csv, split_streams)

__version__ = "0.1.0"
