"""Bivariate rerandomized IVW estimation for summary-data Mendelian randomization."""

from .estimators import (METHODS, EstimateResult, EstimationError, brivw, brivw_variance, divw,
                         ivw, predicted_bias_divw, predicted_bias_ivw, rivw)
from .kernels import (KeyedStream, bivariate_normal_sample, lambda_from_pvalue, norm_cdf,
                      norm_pdf, norm_quantile, rb_ratio, rb_ratio_second)
from .rao_blackwell import RbRecords, rao_blackwellize
from .selection import SelectionConfig, SelectionOutcome, prob_select, select
from .structure import SnpPairs, StructureParams, adjust

__version__ = "0.1.0"
