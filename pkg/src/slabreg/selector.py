"""Iterative feature selection by projection onto per-feature confidence slabs.

The state is a coefficient vector c over the dictionary. For feature k the
signed residual in coefficient units is

    gamma_k = center_k - (1/v_k) sum_j c_j G[j, k],

the distance from the current point to the slab center along theta_k in the
geometry of the active Gram matrix G. Projecting onto the slab soft
thresholds gamma at tau_k = sqrt(beta_k / v_k): the coefficient moves by
sgn(gamma) (|gamma| - tau)_+ and the squared ambient movement is
delta_k = v_k (|gamma_k| - tau_k)_+^2. The loop greedily applies the best
projection (or cycles round robin) until the best available improvement
drops below kappa.

The same engine serves the inductive setting (design moments) and the
transductive one (empirical test moments); only the Gram differs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .bounds import BoundSpec, ConfidenceRadius, compute_stats, compute_radius, slab_centers
from .data import Dataset
from .dictionary import FeatureDictionary, from_spec as dictionary_from_spec
from .errors import ConfigError, NumericalError
from .moments import DesignMoments

SCHEDULES = ("GreedyMax", "RoundRobin")
DEFAULT_MAX_ITERATIONS = 1_000_000


@dataclass(frozen=True)
class IterationRecord:
    """One applied projection: step index, 1-based feature, residual, threshold,
    squared movement and the signed coefficient increment."""

    n: int
    feature: int
    gamma: float
    tau: float
    delta: float
    update: float

    def to_json_dict(self):
        return {
            "n": self.n,
            "feature": self.feature,
            "gamma": self.gamma,
            "tau": self.tau,
            "delta": self.delta,
            "update": self.update,
        }

    @classmethod
    def from_json_dict(cls, obj):
        return cls(
            n=int(obj["n"]),
            feature=int(obj["feature"]),
            gamma=float(obj["gamma"]),
            tau=float(obj["tau"]),
            delta=float(obj["delta"]),
            update=float(obj["update"]),
        )


@dataclass(frozen=True)
class SelectionModel:
    """Fitted coefficients plus the full projection trace and run metadata."""

    coefficients: np.ndarray
    trace: tuple
    bound_variant: str
    epsilon: float
    kappa: float
    schedule: str
    dictionary: FeatureDictionary | None = None
    moments_provenance: str = "?"
    orthonormal_design: bool = False
    clip_bound: float | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "trace", tuple(self.trace))

    @property
    def stopped_at(self) -> int:
        return len(self.trace)

    @property
    def m(self) -> int:
        return self.coefficients.shape[0]

    @property
    def selected(self) -> np.ndarray:
        return np.nonzero(self.coefficients != 0.0)[0] + 1

    def to_json_dict(self) -> dict:
        return {
            "tool_version": __version__,
            "dictionary": None if self.dictionary is None else self.dictionary.spec(),
            "coefficients": self.coefficients.tolist(),
            "bound_variant": self.bound_variant,
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "schedule": self.schedule,
            "moments_provenance": self.moments_provenance,
            "orthonormal_design": self.orthonormal_design,
            "clip_bound": self.clip_bound,
            "seed": self.seed,
            "stopped_at": self.stopped_at,
            "trace": [r.to_json_dict() for r in self.trace],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SelectionModel":
        dictionary = None
        if obj.get("dictionary") is not None:
            dictionary = dictionary_from_spec(obj["dictionary"])
        return cls(
            coefficients=np.asarray(obj["coefficients"], dtype=float),
            trace=tuple(IterationRecord.from_json_dict(r) for r in obj.get("trace", ())),
            bound_variant=obj["bound_variant"],
            epsilon=float(obj["epsilon"]),
            kappa=float(obj["kappa"]),
            schedule=obj["schedule"],
            dictionary=dictionary,
            moments_provenance=obj.get("moments_provenance", "?"),
            orthonormal_design=bool(obj.get("orthonormal_design", False)),
            clip_bound=obj.get("clip_bound"),
            seed=obj.get("seed"),
        )


def residual_gamma(coefficients, k: int, centers, moments: DesignMoments) -> float:
    """Signed coefficient-space residual of feature k (0-based) at the current point."""
    v = moments.diag[k]
    if v <= 0.0:
        raise ConfigError(f"feature {k + 1} is degenerate (zero design second moment)")
    interaction = float(moments.gram[:, k] @ np.asarray(coefficients, dtype=float))
    return float(centers[k]) - interaction / v


def project_feature(coefficients, k: int, centers, moments: DesignMoments, radius: ConfidenceRadius):
    """Project the current point onto feature k's slab.

    Returns (new_coefficients, delta) with delta the squared ambient movement
    v_k (|gamma| - tau)_+^2. Projecting twice is identical to projecting once.
    """
    c = np.array(coefficients, dtype=float, copy=True)
    gamma = residual_gamma(c, k, centers, moments)
    tau = float(radius.tau[k])
    over = abs(gamma) - tau
    if over <= 0.0:
        return c, 0.0
    step = math.copysign(over, gamma)
    c[k] += step
    return c, float(moments.diag[k]) * over * over


def _iterate(centers, moments, radius, kappa, schedule, active, max_iterations, warm_start=None):
    g = moments.gram
    v = moments.diag
    tau = radius.tau
    m = centers.shape[0]
    c = np.zeros(m) if warm_start is None else np.array(warm_start, dtype=float, copy=True)
    trace = []
    if not np.any(active):
        warnings.warn("all features are degenerate; returning the zero model", stacklevel=3)
        return c, trace
    if schedule == "GreedyMax":
        safe_v = np.where(active, v, 1.0)
        for _ in range(max_iterations):
            gamma = np.where(active, centers - (c @ g) / safe_v, 0.0)
            over = np.abs(gamma) - tau
            delta = np.where(active & (over > 0.0), safe_v * over * over, 0.0)
            best = int(np.argmax(delta))
            best_delta = float(delta[best])
            if best_delta > 0.0:
                step = math.copysign(float(over[best]), float(gamma[best]))
                c[best] += step
                trace.append(
                    IterationRecord(
                        n=len(trace) + 1,
                        feature=best + 1,
                        gamma=float(gamma[best]),
                        tau=float(tau[best]),
                        delta=best_delta,
                        update=step,
                    )
                )
            if best_delta < kappa:
                return c, trace
        raise NumericalError(f"selection did not terminate within {max_iterations} iterations")
    # RoundRobin: cycle the features in index order, applying every positive
    # projection; stop when a full pass yields no improvement >= kappa.
    pass_best = 0.0
    for visit in range(max_iterations):
        k = visit % m
        if active[k]:
            gamma = float(centers[k]) - float(g[:, k] @ c) / float(v[k])
            over = abs(gamma) - float(tau[k])
            if over > 0.0:
                delta = float(v[k]) * over * over
                step = math.copysign(over, gamma)
                c[k] += step
                pass_best = max(pass_best, delta)
                trace.append(
                    IterationRecord(
                        n=len(trace) + 1,
                        feature=k + 1,
                        gamma=gamma,
                        tau=float(tau[k]),
                        delta=delta,
                        update=step,
                    )
                )
        if k == m - 1:
            if pass_best < kappa:
                return c, trace
            pass_best = 0.0
    raise NumericalError(f"selection did not terminate within {max_iterations} feature visits")


def run_selection(
    data: Dataset,
    dictionary: FeatureDictionary,
    moments: DesignMoments,
    spec: BoundSpec,
    kappa: float | None = None,
    schedule: str = "GreedyMax",
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    warm_start=None,
    loo_index=None,
    features_per_point=None,
    seed: int | None = None,
) -> SelectionModel:
    """Fit the selection model end to end.

    Evaluates the dictionary, computes per-feature statistics, radii and slab
    centers, then runs the projection loop. kappa defaults to 1/(2N), the
    midpoint of the admissible interval (0, 1/N). Deterministic given inputs.
    """
    if schedule not in SCHEDULES:
        raise ConfigError(f"schedule must be one of {SCHEDULES}, got {schedule!r}")
    n = data.n_train
    if kappa is None:
        kappa = 1.0 / (2.0 * n)
    if not 0.0 < kappa < 1.0 / n:
        raise ConfigError(f"kappa must lie in (0, 1/N) = (0, {1.0 / n}), got {kappa}")
    features = dictionary.evaluate(data.x)
    if features.shape[1] != moments.m:
        raise ConfigError(
            f"dictionary has {features.shape[1]} features but moments cover {moments.m}"
        )
    stats = compute_stats(features, data)
    if spec.transductive != (moments.provenance == "EmpiricalTest"):
        raise ConfigError(
            f"bound variant {spec.variant} and moments provenance {moments.provenance} "
            "disagree about the ambient geometry"
        )
    radius = compute_radius(spec, stats, moments, loo_index=loo_index, features_per_point=features_per_point)
    centers = slab_centers(stats, moments)
    active = ~moments.degenerate & ~stats.train_degenerate
    dropped = int(stats.m - active.sum())
    if dropped and np.any(active):
        warnings.warn(f"excluding {dropped} degenerate feature(s) from selection", stacklevel=2)
    coeffs, trace = _iterate(
        centers, moments, radius, kappa, schedule, active, max_iterations, warm_start
    )
    gram = moments.gram
    orthonormal = bool(gram.shape[0] == gram.shape[1] and np.array_equal(gram, np.eye(gram.shape[0])))
    return SelectionModel(
        coefficients=coeffs,
        trace=tuple(trace),
        bound_variant=spec.variant,
        epsilon=spec.epsilon,
        kappa=kappa,
        schedule=schedule,
        dictionary=dictionary,
        moments_provenance=moments.provenance,
        orthonormal_design=orthonormal,
        seed=seed,
    )


def predict(model: SelectionModel, points) -> np.ndarray:
    """Evaluate the fitted combination sum_k c_k theta_k at the given points."""
    if model.dictionary is None:
        raise ConfigError("model carries no dictionary; predictions are unavailable")
    feats = model.dictionary.evaluate(points)
    return feats @ model.coefficients


def clip_coefficients(model: SelectionModel, bound: float) -> SelectionModel:
    """Clamp every coefficient into [-bound, bound].

    Valid only under orthonormal moments, where the per-coordinate boxes are
    orthogonal directions and the clamp is the exact projection onto their
    intersection (projection order is irrelevant because the constraints are
    separable).
    """
    if bound < 0:
        raise ConfigError(f"clip bound must be >= 0, got {bound}")
    if not model.orthonormal_design:
        raise ConfigError("coefficient clipping requires orthonormal design moments")
    clipped = np.clip(model.coefficients, -bound, bound)
    return replace(model, coefficients=clipped, clip_bound=float(bound))
