"""Model selection between parametric densities with Bregman divergences.

A bias-reduced Gaussian kernel density estimate serves as the nonparametric
reference; each fitted candidate is scored by its beta-generated Bregman
divergence from the estimate, and the normalized difference of the two
scores decides between them.
"""

from .density import (DensityEstimate, Kernel, Sample, Variant, cv_bandwidth, default_grid,
                      kde_bias_reduced_evaluate, kde_evaluate)
from .divergence import (BregmanGenerator, TruncationPolicy, bregman_pointwise,
                         divergence_estimate, divergence_exact, phi,
                         specialized_beta3_estimate, specialized_beta3_exact)
from .errors import (BregselError, ConvergenceError, DegenerateEstimateError,
                     DegenerateFitError, DegenerateVarianceError, DomainError, ParseError,
                     StepFailureError, UnsupportedKernelError)
from .montecarlo import (ExperimentConfig, TableRow, label_decisions, run_experiment,
                         run_replication, table_config)
from .parametric import (BALL_BEARING_GAMMA, BALL_BEARING_LOGNORMAL, GammaParams,
                         LogNormalParams, MixtureDGP, OneStepConfig, gamma_multistep_mle,
                         gamma_one_step_mle, lognormal_mle)
from .quadrature import QuadratureSpec, adaptive_simpson
from .selection import (CandidatePair, Decision, PowerSpec, SelectionResult,
                        SelectionSettings, fit_pair, gof_statistic, kappa_bootstrap,
                        pair_divergences, power_estimate, power_inputs, select, u_statistic)
from .cli import bundled_dataset

__version__ = "0.1.0"
