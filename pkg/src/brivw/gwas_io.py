"""GWAS summary-statistic ingestion: parsing, allele harmonization, sigma-based pruning."""
from __future__ import annotations

import bisect
import csv
import io
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .structure import SnpPairs

log = logging.getLogger(__name__)

DEFAULT_COLUMNS = {"snp_id": "SNP", "chrom": "CHR", "pos": "POS", "effect_allele": "A1",
                   "other_allele": "A2", "beta": "BETA", "se": "SE", "sample_n": "N"}
MANDATORY = ("snp_id", "chrom", "pos", "effect_allele", "other_allele", "beta", "se")
NUCLEOTIDES = frozenset("ACGT")
_COMPLEMENT = {"A": "T", "T": "A", "C": "G", "G": "C"}


class GwasFormatError(ValueError):
    pass


class HarmonizationError(ValueError):
    pass


@dataclass
class GwasTable:
    """Parsed summary statistics, one column per field."""

    snp_id: np.ndarray
    chrom: np.ndarray
    pos: np.ndarray
    effect_allele: np.ndarray
    other_allele: np.ndarray
    beta: np.ndarray
    se: np.ndarray
    sample_n: np.ndarray | None = None
    rejects: list = field(default_factory=list)  # (line number, reason)

    def __len__(self):
        return len(self.snp_id)

    def rows(self):
        """Iterate as plain tuples ``(snp_id, chrom, pos, a1, a2, beta, se, n)``."""
        n = self.sample_n if self.sample_n is not None else [None] * len(self)
        yield from zip(self.snp_id, self.chrom, self.pos, self.effect_allele, self.other_allele,
                       self.beta, self.se, n)

    def take(self, index) -> "GwasTable":
        return GwasTable(self.snp_id[index], self.chrom[index], self.pos[index],
                         self.effect_allele[index], self.other_allele[index], self.beta[index],
                         self.se[index], None if self.sample_n is None else self.sample_n[index])


def read_column_map(path) -> dict:
    """``field=HEADER`` lines overriding :data:`DEFAULT_COLUMNS`."""
    cmap = dict(DEFAULT_COLUMNS)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or key.strip() not in DEFAULT_COLUMNS:
                raise GwasFormatError(f"{path}:{lineno}: expected <field>=<header> with field in "
                                      f"{sorted(DEFAULT_COLUMNS)}")
            cmap[key.strip()] = val.strip()
    return cmap


def _to_float(col) -> pd.Series:
    # float() is correctly rounded, unlike the fast path of pd.to_numeric
    out = np.full(len(col), np.nan)
    for i, v in enumerate(col.to_numpy()):
        try:
            out[i] = float(v)
        except ValueError:
            pass
    return pd.Series(out, index=col.index)


def parse(stream, column_map: dict | None = None) -> GwasTable:
    """Parse a tab-separated summary-statistic table with a header line.

    ``stream`` is a path or a text file object. Malformed rows are skipped
    and recorded in ``table.rejects`` as ``(line_number, reason)``; a missing
    mandatory column raises :class:`GwasFormatError`.
    """
    cmap = dict(DEFAULT_COLUMNS, **(column_map or {}))
    df = pd.read_csv(stream, sep="\t", dtype=str, keep_default_na=False, na_filter=False,
                     comment=None, quoting=csv.QUOTE_NONE)
    missing = [k for k in MANDATORY if cmap[k] not in df.columns]
    if missing:
        raise GwasFormatError("missing mandatory column(s): "
                              + ", ".join(f"{k} (header {cmap[k]!r})" for k in missing))
    lineno = np.arange(len(df)) + 2  # header is line 1
    snp = df[cmap["snp_id"]].str.strip()
    chrom = df[cmap["chrom"]].str.strip()
    a1 = df[cmap["effect_allele"]].str.strip().str.upper()
    a2 = df[cmap["other_allele"]].str.strip().str.upper()
    pos = _to_float(df[cmap["pos"]])
    beta = _to_float(df[cmap["beta"]])
    se = _to_float(df[cmap["se"]])
    has_n = cmap["sample_n"] in df.columns
    n = _to_float(df[cmap["sample_n"]]) if has_n else None

    reason = pd.Series("", index=df.index, dtype=object)

    def flag(mask, why):
        mask = mask & (reason == "")
        reason[mask] = why

    flag(snp == "", "empty SNP id")
    flag(chrom == "", "empty chromosome")
    flag(pos.isna() | (pos != np.floor(pos)) | (pos < 0), "invalid position")
    flag(~a1.isin(NUCLEOTIDES) | ~a2.isin(NUCLEOTIDES), "allele not in {A,C,G,T}")
    flag(a1 == a2, "effect allele equals other allele")
    flag(beta.isna() | ~np.isfinite(beta), "invalid beta")
    flag(se.isna() | ~np.isfinite(se), "invalid SE")
    flag(se <= 0, "non-positive SE")
    if has_n:
        raw_n = df[cmap["sample_n"]].str.strip()
        flag((raw_n != "") & (n.isna() | (n < 0)), "invalid sample size")

    bad = (reason != "").to_numpy()
    rejects = list(zip(lineno[bad].tolist(), reason[bad].tolist()))
    for ln, why in rejects[:20]:
        log.warning("line %d rejected: %s", ln, why)
    good = ~bad
    log.info("parsed %d rows, rejected %d", int(good.sum()), len(rejects))
    return GwasTable(
        snp_id=snp[good].to_numpy(dtype=object), chrom=chrom[good].to_numpy(dtype=object),
        pos=pos[good].to_numpy(dtype=np.int64), effect_allele=a1[good].to_numpy(dtype=object),
        other_allele=a2[good].to_numpy(dtype=object), beta=beta[good].to_numpy(dtype=float),
        se=se[good].to_numpy(dtype=float),
        sample_n=None if n is None else n[good].to_numpy(dtype=float), rejects=rejects)


def emit(table: GwasTable, fh, column_map: dict | None = None):
    """Write a table in the format :func:`parse` reads; floats are written round-trip exact."""
    cmap = dict(DEFAULT_COLUMNS, **(column_map or {}))
    keys = list(MANDATORY) + (["sample_n"] if table.sample_n is not None else [])
    fh.write("\t".join(cmap[k] for k in keys) + "\n")
    for row in table.rows():
        vals = [row[0], row[1], str(int(row[2])), row[3], row[4], repr(float(row[5])),
                repr(float(row[6]))]
        if table.sample_n is not None:
            vals.append("" if not np.isfinite(row[7]) else repr(float(row[7])))
        fh.write("\t".join(vals) + "\n")


def is_palindromic(a1: str, a2: str) -> bool:
    return _COMPLEMENT.get(a1) == a2


@dataclass
class HarmonizeReport:
    n_exposure: int
    n_outcome: int
    n_overlap: int
    n_kept: int
    n_flipped: int
    dropped: Counter


def harmonize(exposure: GwasTable, outcome: GwasTable, drop_palindromic: bool = True):
    """Inner-join on SNP id and align outcome effects to the exposure effect allele.

    Returns ``(SnpPairs, HarmonizeReport)``. The pairs carry raw SEs and the
    exposure positions; output rows follow the exposure table order.
    """
    out_index = {}
    dup = Counter()
    for i, sid in enumerate(outcome.snp_id):
        if sid in out_index:
            dup[sid] += 1
        out_index[sid] = i
    dropped = Counter()
    for sid in dup:
        del out_index[sid]
        dropped["duplicate id in outcome"] += 1

    seen = set()
    keep_e, keep_o, sign = [], [], []
    n_overlap = 0
    n_flipped = 0
    for i, sid in enumerate(exposure.snp_id):
        if sid in seen:
            dropped["duplicate id in exposure"] += 1
            continue
        seen.add(sid)
        j = out_index.get(sid)
        if j is None:
            continue
        n_overlap += 1
        e1, e2 = exposure.effect_allele[i], exposure.other_allele[i]
        o1, o2 = outcome.effect_allele[j], outcome.other_allele[j]
        if drop_palindromic and is_palindromic(e1, e2):
            dropped["palindromic"] += 1
            continue
        if (o1, o2) == (e1, e2):
            s = 1.0
        elif (o1, o2) == (e2, e1):
            s = -1.0
            n_flipped += 1
        else:
            dropped["allele mismatch"] += 1
            continue
        keep_e.append(i)
        keep_o.append(j)
        sign.append(s)
    if n_overlap == 0:
        raise HarmonizationError(
            f"no overlapping SNP ids between exposure ({len(exposure)} rows) and outcome "
            f"({len(outcome)} rows)")
    ie = np.asarray(keep_e, dtype=np.int64)
    io_ = np.asarray(keep_o, dtype=np.int64)
    pairs = SnpPairs(
        ids=exposure.snp_id[ie], gamma_hat=exposure.beta[ie], se_gamma_raw=exposure.se[ie],
        Gamma_hat=np.asarray(sign) * outcome.beta[io_] if len(io_) else np.zeros(0),
        se_Gamma_raw=outcome.se[io_], chrom=exposure.chrom[ie], pos=exposure.pos[ie])
    report = HarmonizeReport(len(exposure), len(outcome), n_overlap, len(ie), n_flipped, dropped)
    log.info("harmonized %d SNPs (%d flipped); dropped %s", len(ie), n_flipped, dict(dropped))
    return pairs, report


# ---------------------------------------------------------------------------
# pruning

@dataclass(frozen=True)
class LdPair:
    snp_a: str
    snp_b: str
    r2: float

    def __post_init__(self):
        if not 0.0 <= self.r2 <= 1.0:
            raise ValueError(f"r2 must lie in [0, 1], got {self.r2}")


def read_ld(path_or_fh) -> list:
    """Read an LD pair list (``snp_a snp_b r2``, tab-separated, header optional)."""
    own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
    fh = open(path_or_fh) if own else path_or_fh
    try:
        out = []
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if not line.strip():
                continue
            if lineno == 1 and parts[-1].strip().lower() == "r2":
                continue
            if len(parts) != 3:
                raise GwasFormatError(f"LD line {lineno}: expected 3 tab-separated fields")
            try:
                out.append(LdPair(parts[0].strip(), parts[1].strip(), float(parts[2])))
            except ValueError as exc:
                raise GwasFormatError(f"LD line {lineno}: {exc}") from None
        return out
    finally:
        if own:
            fh.close()


def _ld_lookup(ld):
    table = defaultdict(dict)
    for pair in ld:
        a, b, r2 = (pair.snp_a, pair.snp_b, pair.r2) if isinstance(pair, LdPair) else pair
        # keep the larger value if a pair is listed twice
        if r2 > table[a].get(b, -1.0):
            table[a][b] = r2
            table[b][a] = r2
    return table


def prune_order(pairs: SnpPairs) -> np.ndarray:
    """Ascending raw exposure SE, ties broken by SNP id."""
    keys = sorted(range(len(pairs)), key=lambda i: (pairs.se_gamma_raw[i], str(pairs.ids[i])))
    return np.asarray(keys, dtype=np.int64)


def sigma_prune(pairs: SnpPairs, ld, r2_max: float = 0.001, window_kb: float = 10_000):
    """Greedy pruning that prefers SNPs with small exposure standard errors.

    SNPs are visited by ascending ``se_gamma_raw``; a SNP is kept unless an
    already kept SNP on the same chromosome within ``window_kb`` kilobases
    has ``r2 >= r2_max`` with it. SNP pairs absent from ``ld`` count as
    independent. Returns the kept subset in visiting order.
    """
    if pairs.chrom is None or pairs.pos is None:
        raise ValueError("sigma_prune needs chromosome and position columns")
    lookup = _ld_lookup(ld)
    window_bp = window_kb * 1000.0
    kept_by_chrom = defaultdict(lambda: ([], []))  # chrom -> (sorted positions, ids)
    keep = []
    for i in prune_order(pairs):
        sid = str(pairs.ids[i])
        partners = lookup.get(sid)
        positions, ids = kept_by_chrom[pairs.chrom[i]]
        pos = pairs.pos[i]
        blocked = False
        if partners:
            lo = bisect.bisect_left(positions, pos - window_bp)
            hi = bisect.bisect_right(positions, pos + window_bp)
            for k in range(lo, hi):
                if partners.get(ids[k], 0.0) >= r2_max:
                    blocked = True
                    break
        if blocked:
            continue
        at = bisect.bisect_right(positions, pos)
        positions.insert(at, pos)
        ids.insert(at, sid)
        keep.append(i)
    return pairs.subset(np.asarray(keep, dtype=np.int64))


def write_pairs_tsv(pairs: SnpPairs, fh):
    cols = ["SNP", "CHR", "POS", "gamma_hat", "se_gamma_raw", "Gamma_hat", "se_Gamma_raw"]
    if pairs.adjusted:
        cols += ["se_gamma", "se_Gamma"]
    fh.write("\t".join(cols) + "\n")
    for i in range(len(pairs)):
        vals = [str(pairs.ids[i]),
                "" if pairs.chrom is None else str(pairs.chrom[i]),
                "" if pairs.pos is None else str(int(pairs.pos[i])),
                f"{pairs.gamma_hat[i]:.17g}", f"{pairs.se_gamma_raw[i]:.17g}",
                f"{pairs.Gamma_hat[i]:.17g}", f"{pairs.se_Gamma_raw[i]:.17g}"]
        if pairs.adjusted:
            vals += [f"{pairs.se_gamma[i]:.17g}", f"{pairs.se_Gamma[i]:.17g}"]
        fh.write("\t".join(vals) + "\n")


def read_pairs_tsv(path_or_fh) -> SnpPairs:
    df = pd.read_csv(path_or_fh, sep="\t", dtype={"SNP": str, "CHR": str},
                     keep_default_na=False, float_precision="round_trip")
    return SnpPairs(ids=df["SNP"].to_numpy(dtype=object), gamma_hat=df["gamma_hat"].to_numpy(),
                    se_gamma_raw=df["se_gamma_raw"].to_numpy(), Gamma_hat=df["Gamma_hat"].to_numpy(),
                    se_Gamma_raw=df["se_Gamma_raw"].to_numpy(),
                    chrom=df["CHR"].to_numpy(dtype=object),
                    pos=pd.to_numeric(df["POS"]).to_numpy(dtype=np.int64))


def pairs_to_text(pairs: SnpPairs) -> str:
    buf = io.StringIO()
    write_pairs_tsv(pairs, buf)
    return buf.getvalue()
