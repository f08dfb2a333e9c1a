"""Per-feature confidence radii from finite-sample deviation inequalities.

Each variant produces, for every feature k, a radius beta[k] such that with
probability at least 1 - epsilon, simultaneously over k, the excess risk of
the recentred one-feature least squares fit over the best one-feature
predictor is at most beta[k]. In coefficient units the corresponding slab
half-width is tau[k] = sqrt(beta[k] / v[k]) with v[k] the design second
moment of the feature.

Inductive variants measure risk under the design distribution and take v
from exact / Monte Carlo / user-supplied moments; transductive variants
measure risk on the unlabeled test block and take v from its empirical
moments. Variants that would need hidden test labels run in "simulation"
mode when those labels are available (synthetic data) and otherwise fall
back to the documented observable majorants ("deployment" mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np

from .data import Dataset
from .dictionary import validate_feature_matrix
from .errors import ConfigError
from .moments import DesignMoments

INDUCTIVE_VARIANTS = ("IndExact", "IndVarFirstOrder", "IndSvm")
TRANSDUCTIVE_VARIANTS = ("TrBasicBounded", "TrFirstOrder", "TrVariance", "TrGeneralK")
VARIANTS = INDUCTIVE_VARIANTS + TRANSDUCTIVE_VARIANTS


@dataclass(frozen=True)
class BoundSpec:
    """Configuration for one bound variant.

    B bounds |f| (IndExact) or |Y| (TrBasicBounded, TrVariance deployment);
    sigma2 is the noise second moment (IndExact); subexp holds per-feature
    (rate, bound) pairs with P exp(rate * |theta(X) Y|) <= bound (TrGeneralK);
    y_subexp = (b_y, B_y) with P exp(b_y |Y|) <= B_y (TrFirstOrder deployment).
    """

    variant: str
    epsilon: float
    B: float | None = None
    sigma2: float | None = None
    subexp: tuple | None = None
    y_subexp: tuple | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown bound variant {self.variant!r}; choose from {VARIANTS}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.B is not None and not self.B >= 0.0:
            raise ConfigError(f"B must be >= 0, got {self.B}")
        if self.sigma2 is not None and not self.sigma2 >= 0.0:
            raise ConfigError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.subexp is not None:
            pairs = tuple((float(a), float(b)) for a, b in self.subexp)
            for rate, bound in pairs:
                if not rate > 0.0:
                    raise ConfigError(f"subexp rate must be > 0, got {rate}")
                if not bound >= 1.0:
                    raise ConfigError(f"subexp bound must be >= 1, got {bound}")
            object.__setattr__(self, "subexp", pairs)
        if self.y_subexp is not None:
            b_y, big = (float(v) for v in self.y_subexp)
            if not (b_y > 0.0 and big >= 1.0):
                raise ConfigError(f"y_subexp needs b_y > 0 and B_y >= 1, got {self.y_subexp}")
            object.__setattr__(self, "y_subexp", (b_y, big))

    @property
    def transductive(self) -> bool:
        return self.variant in TRANSDUCTIVE_VARIANTS

    def to_json_dict(self) -> dict:
        out = {"variant": self.variant, "epsilon": self.epsilon}
        if self.B is not None:
            out["B"] = self.B
        if self.sigma2 is not None:
            out["sigma2"] = self.sigma2
        if self.subexp is not None:
            out["subexp"] = [{"beta_h": a, "B_h": b} for a, b in self.subexp]
        if self.y_subexp is not None:
            out["y_subexp"] = {"b_y": self.y_subexp[0], "B_y": self.y_subexp[1]}
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "BoundSpec":
        if "variant" not in obj or "epsilon" not in obj:
            raise ConfigError("bound spec needs 'variant' and 'epsilon'")
        subexp = obj.get("subexp")
        if subexp is not None:
            subexp = tuple((p["beta_h"], p["B_h"]) for p in subexp)
        y_subexp = obj.get("y_subexp")
        if y_subexp is not None:
            y_subexp = (y_subexp["b_y"], y_subexp["B_y"])
        return cls(
            variant=obj["variant"],
            epsilon=float(obj["epsilon"]),
            B=obj.get("B"),
            sigma2=obj.get("sigma2"),
            subexp=subexp,
            y_subexp=y_subexp,
        )


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature sample statistics feeding the bound formulas.

    Train-side quantities are means over the N labeled rows; test-side
    fourth moments are sums over the kN unlabeled rows (normalized inside
    the formulas, which divide by N). ``train_ty`` keeps the raw products
    theta_k(X_i) Y_i for leave-one-out statistics.
    """

    n_train: int
    k_test: int
    train_mean_sq: np.ndarray
    train_mean_sq_ysq: np.ndarray
    train_mean_ty: np.ndarray
    train_var_ty: np.ndarray
    train_mean_t4y4: np.ndarray
    train_mean_t4: np.ndarray
    test_sum_t4: np.ndarray | None
    test_sum_t4y4: np.ndarray | None
    train_ty: np.ndarray

    @property
    def m(self) -> int:
        return self.train_mean_sq.shape[0]

    @property
    def has_test_labels(self) -> bool:
        return self.test_sum_t4y4 is not None

    @property
    def train_degenerate(self) -> np.ndarray:
        return self.train_mean_sq <= 0.0


def compute_stats(features: np.ndarray, data: Dataset) -> FeatureStats:
    """Split a full ((k+1)N, m) feature matrix and accumulate the statistics."""
    features = validate_feature_matrix(features)
    n = data.n_train
    if features.shape[0] != (data.k_test + 1) * n:
        raise ConfigError(
            f"feature matrix has {features.shape[0]} rows, dataset expects "
            f"{(data.k_test + 1) * n}"
        )
    train = features[:n]
    test = features[n:]
    y = data.y
    ty = train * y[:, None]
    mean_ty = ty.mean(axis=0)
    t2 = train**2
    test_sum_t4 = (test**4).sum(axis=0) if data.k_test > 0 else None
    test_sum_t4y4 = None
    if data.k_test > 0 and data.hidden_y is not None:
        test_sum_t4y4 = ((test * data.hidden_y[:, None]) ** 4).sum(axis=0)
    return FeatureStats(
        n_train=n,
        k_test=data.k_test,
        train_mean_sq=t2.mean(axis=0),
        train_mean_sq_ysq=(t2 * (y**2)[:, None]).mean(axis=0),
        train_mean_ty=mean_ty,
        train_var_ty=np.maximum((ty**2).mean(axis=0) - mean_ty**2, 0.0),
        train_mean_t4y4=(ty**4).mean(axis=0),
        train_mean_t4=(t2**2).mean(axis=0),
        test_sum_t4=test_sum_t4,
        test_sum_t4y4=test_sum_t4y4,
        train_ty=ty,
    )


@dataclass(frozen=True)
class ConfidenceRadius:
    """Radii beta (risk units) and thresholds tau (coefficient units)."""

    beta: np.ndarray
    tau: np.ndarray
    variant: str
    epsilon: float
    observables: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.beta.shape[0]


def _radius(beta, moments, spec, observables) -> ConfidenceRadius:
    beta = np.asarray(beta, dtype=float)
    v = moments.diag
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(v > 0.0, np.sqrt(np.maximum(beta, 0.0) / np.where(v > 0.0, v, 1.0)), np.inf)
    tau = np.where(np.isnan(tau), np.inf, tau)
    return ConfidenceRadius(beta=beta, tau=tau, variant=spec.variant, epsilon=spec.epsilon, observables=observables)


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.inf)
    return np.where((num == 0.0) & (den <= 0.0), 0.0, out)


def _require_inductive_moments(moments: DesignMoments):
    if moments.provenance == "EmpiricalTest":
        raise ConfigError(
            "inductive bound variants need design moments (Exact, MonteCarlo, "
            "EmpiricalAll or UserSupplied), not the empirical test Gram"
        )


def _require_test_moments(moments: DesignMoments, stats: FeatureStats):
    if moments.provenance != "EmpiricalTest":
        raise ConfigError("transductive bound variants need EmpiricalTest moments")
    if stats.k_test < 1:
        raise ConfigError("transductive bound variants need a test block (k_test >= 1)")


def ind_exact(stats: FeatureStats, moments: DesignMoments, spec: BoundSpec) -> ConfidenceRadius:
    """beta_k = (4 (1 + log(2m/eps)) / N) (mean theta_k^2 Y^2 / v_k + B^2 + sigma^2)."""
    _require_inductive_moments(moments)
    if spec.B is None or spec.sigma2 is None:
        missing = "B" if spec.B is None else "sigma2"
        raise ConfigError(f"IndExact needs the hypothesis constant {missing!r}")
    m, n = stats.m, stats.n_train
    lead = 4.0 * (1.0 + log(2.0 * m / spec.epsilon)) / n
    ratio = _safe_ratio(stats.train_mean_sq_ysq, moments.diag)
    beta = lead * (ratio + spec.B**2 + spec.sigma2)
    return _radius(beta, moments, spec, {"mean_sq_ysq": stats.train_mean_sq_ysq, "mode": "observable"})


def ind_var_first_order(stats: FeatureStats, moments: DesignMoments, spec: BoundSpec) -> ConfidenceRadius:
    """beta_k = (2 log(4m/eps) / N) vhat_k / v_k, with vhat the empirical
    variance of theta_k(X_i) Y_i over the training sample."""
    _require_inductive_moments(moments)
    if stats.n_train < 2:
        raise ConfigError("IndVarFirstOrder needs N >= 2")
    m, n = stats.m, stats.n_train
    beta = (2.0 * log(4.0 * m / spec.epsilon) / n) * _safe_ratio(stats.train_var_ty, moments.diag)
    return _radius(beta, moments, spec, {"vhat": stats.train_var_ty, "mode": "observable"})


def ind_svm(
    stats: FeatureStats,
    moments: DesignMoments,
    spec: BoundSpec,
    loo_index: np.ndarray,
    features_per_point: int | None = None,
) -> ConfidenceRadius:
    """Leave-one-out variant for dictionaries built on the training points.

    Feature k is anchored at training point i = loo_index[k]; its statistics
    use the other N-1 rows. beta_k = (2 log(2 N m' / eps) / (N-1)) vhat_k / v_k
    with m' the number of features per anchor point.
    """
    _require_inductive_moments(moments)
    n = stats.n_train
    if n < 2:
        raise ConfigError("IndSvm needs N >= 2 for a leave-one-out sample")
    loo_index = np.asarray(loo_index, dtype=int)
    if loo_index.shape != (stats.m,):
        raise ConfigError(f"loo_index must map each of the {stats.m} features to a training row")
    if loo_index.min(initial=0) < 0 or loo_index.max(initial=0) >= n:
        raise ConfigError("loo_index entries must be valid training rows")
    if features_per_point is None:
        anchors = np.unique(loo_index).size
        if stats.m % anchors:
            raise ConfigError("cannot infer features-per-point; pass features_per_point")
        features_per_point = stats.m // anchors
    ty = stats.train_ty
    cols = np.arange(stats.m)
    own = ty[loo_index, cols]
    loo_mean = (ty.sum(axis=0) - own) / (n - 1)
    loo_sq = ((ty**2).sum(axis=0) - own**2) / (n - 1)
    vhat = np.maximum(loo_sq - loo_mean**2, 0.0)
    lead = 2.0 * log(2.0 * n * features_per_point / spec.epsilon) / (n - 1)
    beta = lead * _safe_ratio(vhat, moments.diag)
    return _radius(
        beta, moments, spec, {"vhat_loo": vhat, "features_per_point": features_per_point, "mode": "observable"}
    )


def tr_basic_bounded(stats: FeatureStats, moments: DesignMoments, spec: BoundSpec) -> ConfidenceRadius:
    """beta_h = 4 (B^2 + mean_train theta_h^2 Y^2 / mean_test theta_h^2) log(2m/eps) / N.

    The declared label bound B stands in for the hidden test-label term.
    """
    _require_test_moments(moments, stats)
    if stats.k_test != 1:
        raise ConfigError("TrBasicBounded is stated for k_test = 1; use TrGeneralK otherwise")
    if spec.B is None:
        raise ConfigError("TrBasicBounded needs the label bound 'B'")
    m, n = stats.m, stats.n_train
    ratio = _safe_ratio(stats.train_mean_sq_ysq, moments.diag)
    beta = 4.0 * (spec.B**2 + ratio) * log(2.0 * m / spec.epsilon) / n
    return _radius(beta, moments, spec, {"mean_sq_ysq": stats.train_mean_sq_ysq, "mode": "deployment"})


def tr_first_order(stats: FeatureStats, moments: DesignMoments, spec: BoundSpec) -> ConfidenceRadius:
    """First-order transductive bound (k_test = 1) with a fourth-moment term.

    Simulation mode (test labels known):
      beta_h = (8 log(4m/eps)/N) [ratio_h + sqrt(q4_h log(2m/eps) / (2N))]
    with q4_h = (1/N) sum over all 2N rows of theta_h^4 Y^4.

    Deployment mode substitutes the sub-exponential label majorant
    sup_i |Y_i| <= (1/b_y) log(2 N B_y / eps), giving
      beta_h = (8 log(8m/eps)/N) [ratio_h +
               sqrt(t4_h log(4m/eps) log(4 N B_y/eps)^4 / (2 N b_y^4))]
    with t4_h = (1/N) sum over all 2N rows of theta_h^4.
    """
    _require_test_moments(moments, stats)
    if stats.k_test != 1:
        raise ConfigError("TrFirstOrder is stated for k_test = 1; use TrGeneralK otherwise")
    m, n = stats.m, stats.n_train
    eps = spec.epsilon
    ratio = _safe_ratio(stats.train_mean_sq_ysq, moments.diag)
    if stats.has_test_labels:
        q4 = stats.train_mean_t4y4 + stats.test_sum_t4y4 / n
        beta = (8.0 * log(4.0 * m / eps) / n) * (ratio + np.sqrt(q4 * log(2.0 * m / eps) / (2.0 * n)))
        mode = "simulation"
    elif spec.y_subexp is not None:
        b_y, big_y = spec.y_subexp
        t4 = stats.train_mean_t4 + stats.test_sum_t4 / n
        inner = t4 * log(4.0 * m / eps) * log(4.0 * n * big_y / eps) ** 4 / (2.0 * n * b_y**4)
        beta = (8.0 * log(8.0 * m / eps) / n) * (ratio + np.sqrt(inner))
        mode = "deployment"
    else:
        raise ConfigError(
            "TrFirstOrder needs test labels (simulation) or sub-exponential label "
            "constants y_subexp = (b_y, B_y)"
        )
    return _radius(beta, moments, spec, {"mean_sq_ysq": stats.train_mean_sq_ysq, "mode": mode})


def tr_variance(stats: FeatureStats, moments: DesignMoments, spec: BoundSpec) -> ConfidenceRadius:
    """Variance-based transductive bound (k_test = 1).

    beta_h = pref * (4 log(4m/eps)/N) * V1_h / mean_test theta_h^2
             + pref * 2 (2 + sqrt 2) (log(6m/eps)/N)^{3/2} * sqrt(q4_h) / mean_test theta_h^2
    with pref = 1 / (1 - 2 log(4m/eps)/N), V1 the training variance of
    theta_h(X_i) Y_i, and q4_h the 1/N-normalized fourth moment over all 2N
    rows (hidden test labels majorized by B^4 in deployment mode).
    """
    _require_test_moments(moments, stats)
    if stats.k_test != 1:
        raise ConfigError("TrVariance is stated for k_test = 1; use TrGeneralK otherwise")
    m, n = stats.m, stats.n_train
    eps = spec.epsilon
    log4 = log(4.0 * m / eps)
    if n <= 2.0 * log4:
        raise ConfigError(
            f"variance bound inapplicable at this N/epsilon: need N > 2 log(4m/eps) = {2.0 * log4:.3f}"
        )
    if stats.has_test_labels:
        q4 = stats.train_mean_t4y4 + stats.test_sum_t4y4 / n
        mode = "simulation"
    elif spec.B is not None:
        q4 = stats.train_mean_t4y4 + (spec.B**4) * stats.test_sum_t4 / n
        mode = "deployment"
    else:
        raise ConfigError("TrVariance needs test labels (simulation) or the label bound 'B'")
    pref = 1.0 / (1.0 - 2.0 * log4 / n)
    lead = pref * (4.0 * log4 / n) * _safe_ratio(stats.train_var_ty, moments.diag)
    tail = pref * 2.0 * (2.0 + sqrt(2.0)) * (log(6.0 * m / eps) / n) ** 1.5
    beta = lead + tail * _safe_ratio(np.sqrt(q4), moments.diag)
    return _radius(
        beta, moments, spec, {"v1": stats.train_var_ty, "prefactor": pref, "mode": mode}
    )


def _general_k_bracket(vhat, log4, big_log, rate, n):
    """Bracket of the general-k bound: 2 vhat log4 / N + T3 + T4.

    T3 and T4 carry vhat in the denominator; zero numerators short-circuit
    to zero, otherwise vhat = 0 yields an infinite bracket.
    """
    lead = 2.0 * vhat * log4 / n
    num3 = 16.0 * log4**1.5 * big_log**3 / (3.0 * rate**3 * n**1.5)
    num4 = 64.0 * log4**2 * big_log**6 / (9.0 * rate**6 * n**2)
    t3 = _safe_ratio(num3, np.sqrt(vhat))
    t4 = _safe_ratio(num4, vhat**2)
    return lead + t3 + t4


def tr_general_k(stats: FeatureStats, moments: DesignMoments, spec: BoundSpec) -> ConfidenceRadius:
    """Transductive bound for a test block of k N points, any k >= 1.

    beta_h = (1 + 1/k)^2 / v_h * [2 vhat_h log(4m/eps)/N + T3 + T4], where
    vhat is the training variance of theta_h(X_i) Y_i substituted for the
    pooled variance, v_h the empirical test second moment, and T3, T4 the
    higher-order terms driven by log(4 (k+1) m N B_h / eps) and the
    sub-exponential rates beta_h.
    """
    _require_test_moments(moments, stats)
    if spec.subexp is None:
        raise ConfigError("TrGeneralK needs per-feature sub-exponential constants 'subexp'")
    m, n, k = stats.m, stats.n_train, stats.k_test
    pairs = spec.subexp
    if len(pairs) == 1:
        pairs = pairs * m
    if len(pairs) != m:
        raise ConfigError(f"subexp needs 1 or {m} (rate, bound) pairs, got {len(pairs)}")
    rates = np.array([p[0] for p in pairs])
    bigs = np.array([p[1] for p in pairs])
    log4 = log(4.0 * m / spec.epsilon)
    big_log = np.log(4.0 * (k + 1) * m * n * bigs / spec.epsilon)
    bracket = _general_k_bracket(stats.train_var_ty, log4, big_log, rates, n)
    pref = (1.0 + 1.0 / k) ** 2
    beta = pref * _safe_ratio(bracket, moments.diag)
    return _radius(beta, moments, spec, {"vhat": stats.train_var_ty, "prefactor": pref, "mode": "observable"})


def compute_radius(
    spec: BoundSpec,
    stats: FeatureStats,
    moments: DesignMoments,
    loo_index=None,
    features_per_point=None,
) -> ConfidenceRadius:
    """Dispatch to the requested bound variant."""
    if spec.variant == "IndExact":
        return ind_exact(stats, moments, spec)
    if spec.variant == "IndVarFirstOrder":
        return ind_var_first_order(stats, moments, spec)
    if spec.variant == "IndSvm":
        if loo_index is None:
            raise ConfigError("IndSvm needs loo_index mapping features to training rows")
        return ind_svm(stats, moments, spec, loo_index, features_per_point)
    if spec.variant == "TrBasicBounded":
        return tr_basic_bounded(stats, moments, spec)
    if spec.variant == "TrFirstOrder":
        return tr_first_order(stats, moments, spec)
    if spec.variant == "TrVariance":
        return tr_variance(stats, moments, spec)
    if spec.variant == "TrGeneralK":
        return tr_general_k(stats, moments, spec)
    raise ConfigError(f"unknown bound variant {spec.variant!r}")


def alpha_hat(stats: FeatureStats) -> np.ndarray:
    """Training least squares coefficient per feature (NaN where degenerate)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(stats.train_mean_sq > 0.0, stats.train_mean_ty / stats.train_mean_sq, np.nan)


def normalization_ratio(stats: FeatureStats, moments: DesignMoments) -> np.ndarray:
    """Ratio of the training second moment to the design second moment."""
    return _safe_ratio(stats.train_mean_sq, moments.diag)


def slab_centers(stats: FeatureStats, moments: DesignMoments) -> np.ndarray:
    """Recentred coefficient C_k * alpha_hat_k = (mean theta_k Y) / v_k.

    Degenerate features (zero design moment) get a zero center; they are
    excluded from selection anyway.
    """
    v = moments.diag
    return np.where(v > 0.0, stats.train_mean_ty / np.where(v > 0.0, v, 1.0), 0.0)
