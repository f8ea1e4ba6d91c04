"""Randomized instrument selection with Gaussian pseudo-noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KeyedStream, lambda_from_pvalue, norm_cdf, pvalue_from_lambda

DEFAULT_P_THRESHOLD = 5e-5
DEFAULT_ETA = 0.5


@dataclass(frozen=True)
class SelectionConfig:
    lambda_: float
    eta: float = DEFAULT_ETA
    seed: int = 0

    def __post_init__(self):
        if not self.lambda_ >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lambda_}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")

    @classmethod
    def from_pvalue(cls, p_threshold: float = DEFAULT_P_THRESHOLD, eta: float = DEFAULT_ETA,
                    seed: int = 0) -> "SelectionConfig":
        return cls(lambda_from_pvalue(p_threshold), eta, seed)

    @property
    def p_threshold(self) -> float:
        return pvalue_from_lambda(self.lambda_)


@dataclass
class SelectionOutcome:
    selected: np.ndarray  # boolean mask over the input SNPs
    z_values: np.ndarray
    s_values: np.ndarray

    @property
    def n_selected(self) -> int:
        return int(np.count_nonzero(self.selected))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.selected)


def selection_statistic(gamma_hat, se_gamma, z, lambda_):
    return np.abs(np.asarray(gamma_hat) / np.asarray(se_gamma) + z) - lambda_


def select(pairs, cfg: SelectionConfig, stream: KeyedStream | None = None) -> SelectionOutcome:
    """Draw ``Z_j ~ N(0, eta^2)`` for every SNP and keep those with ``S_j > 0``.

    ``Z_j`` is the ``j``-th variate of the stream keyed by ``cfg.seed`` unless
    an explicit stream is passed (the simulator passes per-replicate streams).
    """
    if not pairs.adjusted:
        raise ValueError("select() needs structure-adjusted SnpPairs")
    n = len(pairs)
    if stream is None:
        stream = KeyedStream(cfg.seed, 0x5E1EC7)
    z = cfg.eta * stream.normal(n)
    s = selection_statistic(pairs.gamma_hat, pairs.se_gamma, z, cfg.lambda_)
    return SelectionOutcome(selected=s > 0, z_values=z, s_values=s)


def prob_select(gamma_over_sigma, cfg: SelectionConfig):
    """Probability that a SNP with standardized true effect ``gamma_over_sigma`` is selected."""
    g = np.asarray(gamma_over_sigma, dtype=float)
    scale = np.sqrt(1.0 + cfg.eta ** 2)
    return (norm_cdf((-cfg.lambda_ - g) / scale) + norm_cdf((g - cfg.lambda_) / scale))[()]
