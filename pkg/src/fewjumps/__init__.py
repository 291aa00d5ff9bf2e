"""Large-deviation rate functions for sums of stretched-exponential random vectors."""

from .errors import (ConfigError, EvaluationError, FewJumpsError, PreconditionError,
                     UnsupportedError)
from .geometry import (DirectionSet, StiefelSample, SupportRateResult, sample_stiefel,
                       spiral_directions, support_function, support_rate)
from .kernels import BACKEND
from .models import (BivariateGaussPower, GaussPowerModel, MdpGaussModel,
                     MultivariateWeibullModel, TwoJumpModel, bivariate_J, bivariate_Jbar,
                     gausspower_J, gausspower_Jbar, mdp_rate, model_from_json, model_to_json,
                     moment_Mq, to_rate_handle, twojump_J, weibull_J, weibull_log_survival)
from .ratefn import (Decomposition, OptimizerOptions, RateEvaluation, RateFunctionHandle,
                     check_homogeneity, convexity_probe, monotone_envelope, rate_I,
                     rate_I_many, rate_I_oracle)
from .sampling import (EmpiricalRateCurve, SeededStream, TailEstimate, empirical_rate_curve,
                       estimate_orthant_tail, sample_gausspower, sample_mo_weibull,
                       sample_twojump, sum_experiment)

__version__ = "0.1.0"
