"""Finite feature families evaluable at design points.

A dictionary is an ordered family theta_1 .. theta_m of real functions on
the design space. Construction is deterministic; evaluation is pure. The
data-dependent kinds (Gaussian kernels centered on sample points, kernel
PCA eigen-features) are built as exchangeable functions of the design
points: permuting the input sample yields the same ordered family.

Serialized form is a JSON object {kind, m, parameters} (plus an optional
seed recorded by callers); kernel PCA persists its eigenvalues and
eigenvectors so a saved dictionary evaluates identically later.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError, NumericalError

ORTHONORMAL_KINDS = ("Trigonometric", "Haar")


def as_points(points) -> np.ndarray:
    """Coerce input to an (n, d) float array; 1-d input becomes a column."""
    a = np.asarray(points, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DataError(f"design points must be 1-d or 2-d, got shape {a.shape}")
    if a.shape[0] and not np.all(np.isfinite(a)):
        bad = int(np.argwhere(~np.isfinite(a).all(axis=1))[0, 0])
        raise DataError(f"non-finite design point at index {bad}")
    return a


def _unit_interval(points, kind: str) -> np.ndarray:
    a = as_points(points)
    if a.shape[0] and a.shape[1] != 1:
        raise DataError(f"{kind} dictionary expects 1-d design points, got dimension {a.shape[1]}")
    x = a[:, 0] if a.shape[0] else np.empty(0)
    bad = np.nonzero((x < 0.0) | (x > 1.0))[0]
    if bad.size:
        raise DataError(f"point {int(bad[0])} = {x[bad[0]]!r} outside [0, 1] for {kind} dictionary")
    return x


def validate_feature_matrix(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DataError(f"feature matrix must be 2-d, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise NumericalError("feature matrix contains NaN or Inf entries")
    return values


def degenerate_columns(values: np.ndarray) -> np.ndarray:
    """Boolean mask of feature columns identically zero on the given rows."""
    if values.shape[0] == 0:
        return np.zeros(values.shape[1], dtype=bool)
    return ~np.any(values != 0.0, axis=0)


class FeatureDictionary:
    """Base class: an ordered family of m feature functions."""

    kind = "?"

    @property
    def m(self) -> int:
        raise NotImplementedError

    def evaluate(self, points) -> np.ndarray:
        """Feature matrix with entry (i, k) = theta_k(points[i])."""
        raise NotImplementedError

    def parameters(self) -> dict:
        raise NotImplementedError

    def spec(self) -> dict:
        return {"kind": self.kind, "m": self.m, "parameters": self.parameters()}

    def __eq__(self, other):
        return isinstance(other, FeatureDictionary) and _spec_equal(self.spec(), other.spec())


def _spec_equal(a, b) -> bool:
    import json

    return json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


class Trigonometric(FeatureDictionary):
    """1, sqrt(2) cos(2 pi j x), sqrt(2) sin(2 pi j x) on [0, 1], in that order."""

    kind = "Trigonometric"

    def __init__(self, m: int):
        m = int(m)
        if m < 1:
            raise ConfigError("trigonometric dictionary needs m >= 1")
        self._m = m

    @property
    def m(self):
        return self._m

    def evaluate(self, points):
        x = _unit_interval(points, self.kind)
        n, m = x.shape[0], self._m
        out = np.zeros((n, m))
        out[:, 0] = 1.0
        nfreq = m // 2
        if nfreq:
            ang = 2.0 * np.pi * np.outer(x, np.arange(1, nfreq + 1))
            cos = np.sqrt(2.0) * np.cos(ang)
            sin = np.sqrt(2.0) * np.sin(ang)
            out[:, 1::2] = cos[:, : out[:, 1::2].shape[1]]
            out[:, 2::2] = sin[:, : out[:, 2::2].shape[1]]
        return out

    def parameters(self):
        return {}


class Haar(FeatureDictionary):
    """Constant function plus Haar wavelets at levels 0..J on [0, 1].

    Level j holds 2**j wavelets with disjoint dyadic supports, each of unit
    norm under the uniform design, so m = 2**(J+1).
    """

    kind = "Haar"

    def __init__(self, levels: int):
        levels = int(levels)
        if levels < 0:
            raise ConfigError("haar dictionary needs levels >= 0")
        self.levels = levels

    @property
    def m(self):
        return 2 ** (self.levels + 1)

    def evaluate(self, points):
        x = _unit_interval(points, self.kind)
        n = x.shape[0]
        out = np.zeros((n, self.m))
        out[:, 0] = 1.0
        col = 1
        rows = np.arange(n)
        for j in range(self.levels + 1):
            width = 2**j
            pos = x * width
            idx = np.minimum(np.floor(pos).astype(int), width - 1)
            frac = pos - idx
            sign = np.where(frac < 0.5, 1.0, -1.0)
            out[rows, col + idx] = (2.0 ** (j / 2.0)) * sign
            col += width
        return out

    def parameters(self):
        return {"levels": self.levels}


class MultiscaleGaussian(FeatureDictionary):
    """Gaussian bumps exp(-g * ||x - c||^2 / 2) over centers c and widths g.

    Index order is scale-major (ascending scale), centers ascending in the
    lexicographic order of their coordinates, so indexation does not depend
    on the order the sample was presented in. ``center_origin`` maps each
    sorted center back to its position in the input list, and
    ``center_train_indices`` tiles that map over scales for leave-one-out
    bookkeeping when the centers are the training points.
    """

    kind = "MultiscaleGaussian"

    def __init__(self, centers, scales):
        centers = as_points(centers)
        if centers.shape[0] == 0:
            raise ConfigError("gaussian dictionary needs at least one center")
        scales = np.asarray(scales, dtype=float).ravel()
        if scales.size == 0 or np.any(scales <= 0) or not np.all(np.isfinite(scales)):
            raise ConfigError("gaussian dictionary needs positive finite scales")
        order = np.lexsort(centers.T[::-1])
        self.centers = centers[order]
        self.center_origin = order
        self.scales = np.sort(scales, kind="stable")

    @property
    def m(self):
        return self.centers.shape[0] * self.scales.size

    @property
    def center_train_indices(self) -> np.ndarray:
        return np.tile(self.center_origin, self.scales.size)

    @property
    def features_per_center(self) -> int:
        return int(self.scales.size)

    def evaluate(self, points):
        pts = as_points(points)
        if pts.shape[0] and pts.shape[1] != self.centers.shape[1]:
            raise DataError(
                f"points have dimension {pts.shape[1]}, centers have {self.centers.shape[1]}"
            )
        if pts.shape[0] == 0:
            return np.zeros((0, self.m))
        d2 = cdist(pts, self.centers, metric="sqeuclidean")
        blocks = [np.exp(-0.5 * g * d2) for g in self.scales]
        return np.hstack(blocks)

    def parameters(self):
        return {
            "centers": self.centers.tolist(),
            "scales": self.scales.tolist(),
            "center_origin": self.center_origin.tolist(),
        }


class GaussianKernel(MultiscaleGaussian):
    """Single-scale Gaussian kernel features."""

    kind = "GaussianKernel"

    def __init__(self, centers, scale):
        super().__init__(centers, [float(scale)])

    def parameters(self):
        p = super().parameters()
        return {"centers": p["centers"], "scale": self.scales[0], "center_origin": p["center_origin"]}


def _kernel_matrix(kernel: dict, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    kind = kernel.get("kind")
    if kind == "gaussian":
        gamma = float(kernel["gamma"])
        if gamma <= 0:
            raise ConfigError("gaussian kernel needs gamma > 0")
        return np.exp(-0.5 * gamma * cdist(a, b, metric="sqeuclidean"))
    if kind == "linear":
        return a @ b.T
    if kind == "explicit":
        raise ConfigError("explicit kernel matrices evaluate only at the original sample")
    raise ConfigError(f"unknown kernel kind {kind!r}")


class KernelPCA(FeatureDictionary):
    """Eigen-features of the kernel matrix over a design sample.

    Diagonalizes K(X_i, X_j), keeps the ``top`` leading eigenpairs in
    descending eigenvalue order, and exposes k_l(x) = sum_i E[i, l] K(X_i, x).
    Eigenvector signs are fixed so the entry of largest magnitude is
    positive, which is invariant under permutations of the sample.
    """

    kind = "KernelPCA"

    def __init__(self, points, kernel: dict, top: int, eigenvalues=None, eigenvectors=None):
        self.points = as_points(points)
        n = self.points.shape[0]
        if n == 0:
            raise ConfigError("kernel PCA needs a nonempty design sample")
        self.kernel = dict(kernel)
        top = int(top)
        if not 1 <= top <= n:
            raise ConfigError(f"top must be in 1..{n}, got {top}")
        self.top = top
        if eigenvalues is not None and eigenvectors is not None:
            self.eigenvalues = np.asarray(eigenvalues, dtype=float)
            self.eigenvectors = np.asarray(eigenvectors, dtype=float)
            return
        K = self._gram()
        try:
            vals, vecs = np.linalg.eigh(K)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"kernel eigendecomposition failed: {exc}") from None
        vals, vecs = vals[::-1], vecs[:, ::-1]
        tol = 1e-8 * max(1.0, float(np.abs(vals).max()))
        if vals[-1] < -tol:
            raise NumericalError(
                f"kernel matrix is not positive semidefinite: eigenvalue {vals[-1]:.3e}"
            )
        vals = np.clip(vals, 0.0, None)
        vecs = _canonical_signs(vecs)
        self.eigenvalues = vals[:top].copy()
        self.eigenvectors = vecs[:, :top].copy()

    def _gram(self) -> np.ndarray:
        if self.kernel.get("kind") == "explicit":
            K = np.asarray(self.kernel["matrix"], dtype=float)
            n = self.points.shape[0]
            if K.shape != (n, n):
                raise ConfigError(f"explicit kernel matrix must be {n}x{n}, got {K.shape}")
            if not np.allclose(K, K.T, atol=1e-10):
                raise ConfigError("explicit kernel matrix is not symmetric")
            return 0.5 * (K + K.T)
        return _kernel_matrix(self.kernel, self.points, self.points)

    @property
    def m(self):
        return self.top

    def evaluate(self, points):
        pts = as_points(points)
        if self.kernel.get("kind") == "explicit":
            if pts.shape != self.points.shape or not np.array_equal(pts, self.points):
                raise DataError("explicit-kernel PCA features evaluate only at the stored sample")
            cross = self._gram()
        else:
            cross = _kernel_matrix(self.kernel, pts, self.points)
        return cross @ self.eigenvectors

    def parameters(self):
        kernel = dict(self.kernel)
        if "matrix" in kernel:
            kernel["matrix"] = np.asarray(kernel["matrix"], dtype=float).tolist()
        return {
            "points": self.points.tolist(),
            "kernel": kernel,
            "top": self.top,
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
        }


class ExplicitMatrix(FeatureDictionary):
    """A user-supplied precomputed feature matrix standing in for a dictionary.

    Rows are tied to a fixed sample; evaluation requires the same number of
    points in the same order and returns the stored values.
    """

    kind = "ExplicitMatrix"

    def __init__(self, values):
        self.values = validate_feature_matrix(np.asarray(values, dtype=float))

    @property
    def m(self):
        return self.values.shape[1]

    def evaluate(self, points):
        if points is None:
            return self.values.copy()
        pts = as_points(points)
        if pts.shape[0] != self.values.shape[0]:
            raise DataError(
                f"explicit feature matrix has {self.values.shape[0]} rows, got {pts.shape[0]} points"
            )
        return self.values.copy()

    def parameters(self):
        return {"values": self.values.tolist()}


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    if vectors.size == 0:
        return vectors
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def build_trigonometric(m: int) -> Trigonometric:
    return Trigonometric(m)


def build_haar(levels: int) -> Haar:
    return Haar(levels)


def build_multiscale_gaussian(centers, scales) -> MultiscaleGaussian:
    return MultiscaleGaussian(centers, scales)


def build_gaussian_kernel(centers, scale) -> GaussianKernel:
    return GaussianKernel(centers, scale)


def build_kernel_pca(points, kernel: dict, top: int) -> KernelPCA:
    return KernelPCA(points, kernel, top)


def build_explicit(values) -> ExplicitMatrix:
    return ExplicitMatrix(values)


def from_spec(spec: dict) -> FeatureDictionary:
    """Rebuild a dictionary from its serialized {kind, m, parameters} form."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("dictionary spec must be an object with a 'kind' field")
    kind = spec["kind"]
    p = spec.get("parameters", {})
    if kind == "Trigonometric":
        return Trigonometric(spec.get("m", p.get("m", 0)))
    if kind == "Haar":
        if "levels" not in p:
            raise ConfigError("haar dictionary spec needs parameters.levels")
        return Haar(p["levels"])
    if kind == "MultiscaleGaussian":
        return MultiscaleGaussian(p["centers"], p["scales"])
    if kind == "GaussianKernel":
        return GaussianKernel(p["centers"], p["scale"])
    if kind == "KernelPCA":
        return KernelPCA(
            p["points"],
            p["kernel"],
            p["top"],
            eigenvalues=p.get("eigenvalues"),
            eigenvectors=p.get("eigenvectors"),
        )
    if kind == "ExplicitMatrix":
        return ExplicitMatrix(p["values"])
    raise ConfigError(f"unknown dictionary kind {kind!r}")
