"""U-statistics of bounded kernels on temporally dependent data.

Subpackages: kernels (bounded symmetric kernels), processes (stationary
generators and finite Markov chains), mixing (exact dependence coefficients),
ustat (evaluation, rank statistics, decomposition), bounds (tail and log-MGF
families), hidim (rank-correlation matrices), harness/cli (experiments).
"""
from .bounds import (BernsteinParams, BoundConstants, CalibrationResult, TailPoint,
                     bernstein_envelope, bias_bound, calibrate_constants,
                     combine_bernstein_params, empirical_log_mgf, hoeffding_bound,
                     mixing_sum_logmgf_bound, mixing_sum_tail_bound, ustat_tail_bound,
                     bias_offset, variance_logmgf_bound)
from .hidim import (CorrelationMatrixEstimate, PopulationMatrix, independent_population,
                    kendall_matrix, max_norm_deviation, population_matrix_oracle,
                    scaling_experiment, spearman_matrix)
from .kernels import (KernelSpec, eval_kernel, load_table_kernel, mean_kernel,
                      sign_product_kernel, spearman_symmetric_kernel, symmetrize,
                      table_kernel)
from .mixing import (MixingProfile, alpha_coeff, beta_coeff, beta_coeff_bruteforce,
                     conditional_phi_coeff, fit_decay_rate, mixing_profile, phi_coeff)
from .processes import (FiniteMarkovChain, ProcessSpec, SeriesPath, cycle_chain,
                        generate, generate_batch, iid_chain, m_dependent_from_iid,
                        path_from_csv, random_chain, truncate_to_finite, two_state_chain)
from .ustat import (ConditionalExpectationOracle, DecompositionReport, SpearmanResult,
                    check_zero_conditional_means, decompose, hoeffding_decoupling_average,
                    kendall_tau, kendall_tau_batch, spearman_rho, theta_independent,
                    theta_star, u_statistic)

__version__ = "0.1.0"
