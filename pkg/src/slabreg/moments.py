"""Design second moments: the Gram matrix G[j, k] = mean of theta_j * theta_k.

The inductive engine needs moments under the design distribution (exact for
orthonormal families, Monte Carlo or a user-supplied Gram otherwise); the
transductive engine uses the empirical moments of the unlabeled test design,
normalized by 1/(kN) so that the diagonal matches the squared empirical norm.
Both are carried by the same immutable ``DesignMoments`` and everything
downstream is agnostic to which one it got.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dictionary import FeatureDictionary, ORTHONORMAL_KINDS, validate_feature_matrix
from .errors import ConfigError, DataError, NumericalError

SYMMETRY_TOL = 1e-12
PSD_TOL = -1e-8


@dataclass(frozen=True)
class DesignMoments:
    """Symmetric PSD Gram matrix with provenance and a degeneracy mask."""

    gram: np.ndarray
    provenance: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gram, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ConfigError(f"gram matrix must be square, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("gram matrix contains NaN or Inf")
        object.__setattr__(self, "gram", g)

    @property
    def m(self) -> int:
        return self.gram.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.gram)

    @property
    def degenerate(self) -> np.ndarray:
        return self.diag <= 0.0

    def spec(self) -> dict:
        return {"provenance": self.provenance, **self.detail}


def _symmetrize(g: np.ndarray) -> np.ndarray:
    if np.max(np.abs(g - g.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(g).max(initial=0.0)):
        raise ConfigError("gram matrix is not symmetric")
    return 0.5 * (g + g.T)


def _repair_psd(g: np.ndarray) -> np.ndarray:
    """Clip eigenvalues in (PSD_TOL, 0) to zero; reject anything lower."""
    vals, vecs = np.linalg.eigh(g)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals[0] < PSD_TOL * scale:
        raise NumericalError(f"gram matrix is indefinite: eigenvalue {vals[0]:.3e}")
    if vals[0] >= 0.0:
        return g
    vals = np.clip(vals, 0.0, None)
    return 0.5 * ((vecs * vals) @ vecs.T + ((vecs * vals) @ vecs.T).T)


def exact_moments(dictionary: FeatureDictionary) -> DesignMoments:
    """Closed-form Gram for orthonormal kinds under the uniform design: identity."""
    if dictionary.kind not in ORTHONORMAL_KINDS:
        raise ConfigError(
            f"exact moments are only available for orthonormal kinds {ORTHONORMAL_KINDS}; "
            f"use monte_carlo_moments or a user Gram for kind {dictionary.kind!r}"
        )
    return DesignMoments(np.eye(dictionary.m), "Exact", {})


def monte_carlo_moments(
    dictionary: FeatureDictionary,
    sampler,
    n_samples: int,
    seed: int,
    batch: int = 100_000,
) -> DesignMoments:
    """Gram estimated as (1/M) sum phi(x_s) phi(x_s)^T over sampler draws.

    ``sampler(rng, size)`` must return design points. Deterministic given the
    seed; the fixed batch size pins the accumulation order.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ConfigError("monte carlo moments need n_samples >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    m = dictionary.m
    acc = np.zeros((m, m))
    done = 0
    while done < n_samples:
        take = min(batch, n_samples - done)
        pts = sampler(rng, take)
        feats = validate_feature_matrix(dictionary.evaluate(pts))
        acc += feats.T @ feats
        done += take
    g = _symmetrize(acc / n_samples)
    return DesignMoments(g, "MonteCarlo", {"n_samples": n_samples, "seed": int(seed)})


def empirical_test_moments(features: np.ndarray, n_train: int, k_test: int) -> DesignMoments:
    """Empirical Gram of the test design block, normalized by 1/(kN).

    ``features`` must hold all (k+1)N rows, training rows first.
    """
    features = validate_feature_matrix(features)
    n_train, k_test = int(n_train), int(k_test)
    if k_test * n_train <= 0:
        raise ConfigError("empirical test moments need k_test >= 1 and n_train >= 1")
    expected = (k_test + 1) * n_train
    if features.shape[0] != expected:
        raise DataError(
            f"feature matrix has {features.shape[0]} rows, expected (k+1)N = {expected}"
        )
    test = features[n_train:]
    g = _symmetrize(test.T @ test / (k_test * n_train))
    mom = DesignMoments(g, "EmpiricalTest", {"n_train": n_train, "k_test": k_test})
    _warn_degenerate(mom)
    return mom


def empirical_moments(features: np.ndarray) -> DesignMoments:
    """Empirical Gram over all rows of a feature matrix."""
    features = validate_feature_matrix(features)
    if features.shape[0] == 0:
        raise ConfigError("empirical moments need at least one row")
    g = _symmetrize(features.T @ features / features.shape[0])
    return DesignMoments(g, "EmpiricalAll", {"rows": features.shape[0]})


def load_gram_csv(path) -> DesignMoments:
    """User-supplied Gram: a headerless CSV of m rows by m columns."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty gram file")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() != len(rows):
        raise DataError(f"{path}: gram file must be square")
    g = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(g)):
        raise DataError(f"{path}: gram file contains non-finite values")
    g = _repair_psd(_symmetrize(g))
    mom = DesignMoments(g, "UserSupplied", {"file": str(path)})
    _warn_degenerate(mom)
    return mom


def _warn_degenerate(moments: DesignMoments) -> None:
    bad = np.nonzero(moments.degenerate)[0]
    if bad.size:
        warnings.warn(
            f"{bad.size} degenerate feature(s) with zero design second moment "
            f"(first index {int(bad[0]) + 1}); they are excluded from selection",
            stacklevel=3,
        )


def uniform_sampler(low: float = 0.0, high: float = 1.0, dim: int = 1):
    """Uniform design sampler factory for monte_carlo_moments."""
    low, high = float(low), float(high)
    if not high > low:
        raise ConfigError("uniform sampler needs high > low")

    def sample(rng, size):
        return rng.uniform(low, high, size=(size, dim))

    return sample
