"""Marginally calibrated Bayesian variable selection with implicit copulas."""
from .bayes_factor import (BfRequest, copula_r_squared, log_bayes_factor, log_marginal_likelihood,
                           posterior_median_g)
from .copula_core import (GammaFactor, RegressionData, build_factor, log_det_R,
                          log_gauss_copula_kernel, posterior_mean_beta, quad_form_R_inv,
                          scale_factors)
from .errors import CopulaVSError
from .margins import MarginModel, fit_margin, inverse_pit, pit_transform
from .predict import (cv_mean_log_score, log_predictive_density, pointwise_log_scores,
                      predictive_density, predictive_mean, predictive_scale)
from .priors import (GPrior, dlog_prior_dloggtilde, log_prior_g, log_prior_gamma,
                     log_prior_loggtilde, parse_g_prior)
from .sampler import (SamplerConfig, Trace, gibbs_pair_update, hmc_update_g, inclusion_probabilities,
                      pair_partition, run_chain, top_models)

__version__ = "0.1.0"
