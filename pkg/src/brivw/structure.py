"""Sample-structure parameters and standard-error adjustment."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class StructureParams:
    """LDSC intercepts: ``c1``/``c2`` inflate exposure/outcome SEs, ``c12`` couples them.

    ``inflation_scale`` chooses whether ``c1``/``c2`` multiply standard errors
    (``"sd"``) or variances (``"var"``).
    """

    c1: float = 1.0
    c2: float = 1.0
    c12: float = 0.0
    inflation_scale: str = "sd"

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0):
            raise StructureError(f"c1 and c2 must be positive (got c1={self.c1}, c2={self.c2})")
        if self.inflation_scale not in ("sd", "var"):
            raise StructureError(f"inflation_scale must be 'sd' or 'var', got {self.inflation_scale!r}")
        if not abs(self.rho) < 1.0:
            raise StructureError(f"implied |rho| = |{self.rho:.6g}| must be < 1")

    @property
    def rho(self) -> float:
        return self.c12 / math.sqrt(self.c1 * self.c2)

    @property
    def sd_factors(self) -> tuple[float, float]:
        if self.inflation_scale == "var":
            return math.sqrt(self.c1), math.sqrt(self.c2)
        return self.c1, self.c2

    @classmethod
    def from_file(cls, path) -> "StructureParams":
        """Read ``key=value`` lines (c1, c2, c12, inflation_scale); ``#`` starts a comment."""
        values = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise StructureError(f"{path}:{lineno}: expected key=value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key in ("c1", "c2", "c12"):
                    values[key] = float(val)
                elif key == "inflation_scale":
                    values[key] = val
                else:
                    raise StructureError(f"{path}:{lineno}: unknown key {key!r}")
        return cls(**values)


@dataclass
class SnpPairs:
    """Per-SNP exposure/outcome summary statistics, stored column-wise.

    ``se_gamma``/``se_Gamma`` are the structure-adjusted standard errors and
    are ``None`` until :func:`adjust` has been applied.
    """

    ids: np.ndarray
    gamma_hat: np.ndarray
    se_gamma_raw: np.ndarray
    Gamma_hat: np.ndarray
    se_Gamma_raw: np.ndarray
    se_gamma: np.ndarray | None = None
    se_Gamma: np.ndarray | None = None
    chrom: np.ndarray | None = None
    pos: np.ndarray | None = None
    rejected: list = field(default_factory=list)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=object)
        for name in ("gamma_hat", "se_gamma_raw", "Gamma_hat", "se_Gamma_raw"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.ids)
        for name in ("gamma_hat", "se_gamma_raw", "Gamma_hat", "se_Gamma_raw",
                     "se_gamma", "se_Gamma", "chrom", "pos"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"column {name} has length {len(v)}, expected {n}")

    def __len__(self):
        return len(self.ids)

    @property
    def adjusted(self) -> bool:
        return self.se_gamma is not None

    def subset(self, index) -> "SnpPairs":
        def take(v):
            return None if v is None else np.asarray(v)[index]
        return SnpPairs(
            ids=self.ids[index], gamma_hat=self.gamma_hat[index],
            se_gamma_raw=self.se_gamma_raw[index], Gamma_hat=self.Gamma_hat[index],
            se_Gamma_raw=self.se_Gamma_raw[index], se_gamma=take(self.se_gamma),
            se_Gamma=take(self.se_Gamma), chrom=take(self.chrom), pos=take(self.pos),
        )


def adjust(pairs: SnpPairs, params: StructureParams) -> SnpPairs:
    """Rescale raw standard errors by the inflation factors.

    Records with a non-positive or non-finite raw SE are dropped and their ids
    listed in ``result.rejected``. Adjusting an already adjusted table raises.
    """
    if pairs.adjusted:
        raise StructureError("SnpPairs already adjusted; refusing to adjust twice")
    bad = ~((pairs.se_gamma_raw > 0) & (pairs.se_Gamma_raw > 0)
            & np.isfinite(pairs.se_gamma_raw) & np.isfinite(pairs.se_Gamma_raw))
    rejected = [str(i) for i in pairs.ids[bad]]
    if rejected:
        log.warning("adjust: rejected %d SNP(s) with non-positive SE: %s",
                    len(rejected), ", ".join(rejected[:10]) + (" ..." if len(rejected) > 10 else ""))
        pairs = pairs.subset(~bad)
    f1, f2 = params.sd_factors
    out = replace(pairs, se_gamma=f1 * pairs.se_gamma_raw, se_Gamma=f2 * pairs.se_Gamma_raw,
                  rejected=rejected)
    return out
