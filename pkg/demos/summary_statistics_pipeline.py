"""
From two GWAS files to a causal estimate
========================================

Two summary-statistic files are written for an exposure and an outcome
that share part of their samples, so their noise is correlated. The
outcome file lists alleles the other way round for a third of the SNPs.
The command line tool then harmonizes, adjusts for the sample structure,
selects instruments with a randomized threshold and reports all four
estimators. Output goes to a temporary directory.
"""
import json
import os
import tempfile

import numpy as np

from brivw import cli
from brivw.kernels import KeyedStream
from brivw.simulation import MixtureConfig, generate_effects, generate_summary

cfg = MixtureConfig(beta=0.2, p=20_000, pi_x=0.05, pi_y=0.02, eps_x2=2e-4, tau2=2e-4, rho=0.3, seed=3)
effects = generate_effects(cfg, KeyedStream(3, 0, 1))
stats = generate_summary(effects, cfg, KeyedStream(3, 0, 2))
alleles = [("A", "G"), ("C", "T"), ("A", "C"), ("G", "T")]


def write(path, beta, se, flip):
    with open(path, "w") as fh:
        fh.write("SNP\tCHR\tPOS\tA1\tA2\tBETA\tSE\tN\n")
        for i in range(cfg.p):
            a1, a2 = alleles[i % 4]
            b = beta[i]
            if flip[i]:
                a1, a2, b = a2, a1, -b
            fh.write(f"rs{i}\t{1 + i % 22}\t{1000 * i}\t{a1}\t{a2}\t{b:.17g}\t{se[i]:.17g}\t100000\n")


tmp = tempfile.mkdtemp(prefix="brivw_demo_")
exposure, outcome = os.path.join(tmp, "exposure.tsv"), os.path.join(tmp, "outcome.tsv")
write(exposure, stats.gamma_hat, stats.se_gamma_raw, np.zeros(cfg.p, bool))
write(outcome, stats.Gamma_hat, stats.se_Gamma_raw, np.arange(cfg.p) % 3 == 0)

# %% run the estimate subcommand; c12 is the cross-trait noise correlation
result = os.path.join(tmp, "estimate.json")
cli.main(["estimate", "--exposure", exposure, "--outcome", outcome,
          "--c1", "1", "--c2", "1", "--c12", "0.3", "--seed", "5", "--out", result])

payload = json.load(open(result))
print(f"\ntrue beta = {cfg.beta}; harmonization: {payload['snps']}")

# %% the manifest replays the same run bit for bit
again = os.path.join(tmp, "again.json")
cli.main(["rerun", result + ".manifest.json", "--out", again])
same = json.load(open(again))["results"] == payload["results"]
print(f"rerun from manifest reproduces the results: {same}")
