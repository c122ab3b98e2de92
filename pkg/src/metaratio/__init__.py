"""Meta-analysis of the log response ratio for two-arm studies.

Study-level effects (usual and bias-corrected), four point and four interval
estimators of the between-study variance, five point and seven interval
estimators of the overall effect, and a deterministic Monte Carlo harness
that measures their bias and coverage on lognormal data.
"""

from .model import (
    ArmSummary,
    EffectRow,
    PooledResult,
    Scenario,
    ScenarioResult,
    StudySummary,
    Tau2Estimate,
    Tau2Interval,
    validate_study,
)
from .distributions import (
    RngStream,
    chi2_cdf,
    chi2_quantile,
    lognormal_params_from_moments,
    norm_quantile,
    sample_lognormal_by_moments,
    sample_normal,
    t_quantile,
)
from .effects import lrr, lrr_bias_corrected
from .heterogeneity import (
    QProfile,
    cochran_q,
    generalized_q,
    restricted_loglik,
    tau2_dl,
    tau2_j,
    tau2_mp,
    tau2_reml,
)
from .quadform import WeightedChiSq, cdf_weighted_chisq, q_eigenvalues
from .tau_intervals import bj_interval, j_interval, pl_interval, qp_interval
from .pooling import ci_hksj, ci_iv_normal, ci_ssw_t, pool_iv, pool_ssw
from .simgrid import (
    GridConfig,
    generate_meta_sample,
    load_config,
    run_grid,
    run_replication,
    run_scenario,
)
from .report import render_panel_grid, write_results_csv

__version__ = "0.1.0"

__all__ = [
    "ArmSummary",
    "EffectRow",
    "GridConfig",
    "PooledResult",
    "QProfile",
    "RngStream",
    "Scenario",
    "ScenarioResult",
    "StudySummary",
    "Tau2Estimate",
    "Tau2Interval",
    "WeightedChiSq",
    "bj_interval",
    "cdf_weighted_chisq",
    "chi2_cdf",
    "chi2_quantile",
    "ci_hksj",
    "ci_iv_normal",
    "ci_ssw_t",
    "cochran_q",
    "generalized_q",
    "generate_meta_sample",
    "j_interval",
    "load_config",
    "lognormal_params_from_moments",
    "lrr",
    "lrr_bias_corrected",
    "norm_quantile",
    "pl_interval",
    "pool_iv",
    "pool_ssw",
    "q_eigenvalues",
    "qp_interval",
    "render_panel_grid",
    "restricted_loglik",
    "run_grid",
    "run_replication",
    "run_scenario",
    "sample_lognormal_by_moments",
    "sample_normal",
    "t_quantile",
    "tau2_dl",
    "tau2_j",
    "tau2_mp",
    "tau2_reml",
    "validate_study",
    "write_results_csv",
]
