import numpy as np

from kernvim.nuisance import Dataset, PseudoOutcomes
from kernvim.pipeline import ImportanceAnalysis, PipelineConfig


def fixed_psi_analysis(X, psi, bandwidth=1.0, lam=0.1, B=200, **kw):
    """Analysis on given pseudo-outcomes so estimator pieces can be checked in isolation."""
    X = np.asarray(X, dtype=float)
    data = Dataset(X, np.asarray(psi, dtype=float))
    cfg = PipelineConfig(B=B, lam=lam, bandwidth=bandwidth, mode="prediction", **kw)
    return ImportanceAnalysis(data, cfg, seed=0, psi=PseudoOutcomes(psi, "prediction"))
