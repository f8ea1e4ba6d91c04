"""Randomized fixture builders shared by unit and acceptance tests."""
import numpy as np

from brivw.gwas_io import GwasTable, LdPair
from brivw.structure import SnpPairs


def random_block_fixture(rng, max_snps=60):
    """SNPs on a few chromosomes grouped in LD blocks, with tied SEs and stray cross-block LD."""
    n = int(rng.integers(1, max_snps + 1))
    chrom = rng.choice(["1", "2", "X"], size=n)
    pos = rng.integers(0, 30_000_000, size=n)
    # block structure: nearby SNPs share a block id
    block = pos // 2_000_000
    se = rng.choice([0.01, 0.012, 0.015, 0.02], size=n) * rng.choice([1.0, 1.0, 1.5], size=n)
    ids = np.array([f"rs{int(v)}" for v in rng.permutation(10 * n)[:n]], dtype=object)
    ld = []
    for i in range(n):
        for j in range(i + 1, n):
            same = chrom[i] == chrom[j] and block[i] == block[j]
            if same and rng.random() < 0.7:
                ld.append(LdPair(ids[i], ids[j], float(rng.choice([0.5, 0.001, 0.0009, 0.2]))))
            elif rng.random() < 0.02:
                ld.append(LdPair(ids[j], ids[i], float(rng.uniform(0, 0.01))))
    pairs = SnpPairs(ids=ids, gamma_hat=rng.normal(0, 0.02, n), se_gamma_raw=se,
                     Gamma_hat=rng.normal(0, 0.02, n), se_Gamma_raw=np.full(n, 0.01),
                     chrom=chrom.astype(object), pos=pos)
    return pairs, ld


def gwas_table(ids, a1, a2, beta, se, chrom=None, pos=None, n=None):
    k = len(ids)
    return GwasTable(snp_id=np.asarray(ids, dtype=object),
                     chrom=np.asarray(chrom if chrom is not None else ["1"] * k, dtype=object),
                     pos=np.asarray(pos if pos is not None else np.arange(k) * 1000, dtype=np.int64),
                     effect_allele=np.asarray(a1, dtype=object), other_allele=np.asarray(a2, dtype=object),
                     beta=np.asarray(beta, dtype=float), se=np.asarray(se, dtype=float),
                     sample_n=None if n is None else np.asarray(n, dtype=float))
