"""Synthetic outlier-contaminated problems with oracle instrumentation.

Two problem kinds:

* ``linear_regression`` -- scalar targets ``y = w*.x + eps + o`` with squared
  error per sample; a chosen subset carries a Gaussian offset ``o``.
* ``blob_classification`` -- Gaussian class blobs with a linear softmax model
  and cross-entropy per sample; a chosen subset has its label replaced by a
  uniformly random *different* class (symmetric label noise).

Every instance keeps hidden oracle fields (clean label, outlier flag,
perturbation) that optimizers never see; diagnostics use them to measure
clean losses and the additive gradient perturbation ``h_i`` each outlier
contributes.  Generation is a pure function of (config, seed); instances
round-trip bit-exactly through CSV + JSON sidecar (see docs/formats.md).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LinearRegression = "linear_regression"
BlobClassification = "blob_classification"


class ShapeError(ValueError):
    """Weight or index dimensions do not match the problem."""


@dataclass(frozen=True)
class Sample:
    """One training sample with its hidden oracle fields."""

    x: np.ndarray
    observed_label: float | int
    oracle_clean_label: float | int
    oracle_is_outlier: bool
    oracle_perturbation: float | tuple[int, int] | None


@dataclass
class ProblemInstance:
    kind: str
    X: np.ndarray                 # (n, k) features
    y: np.ndarray                 # observed labels: float (regression) / int (classification)
    y_clean: np.ndarray           # oracle clean labels
    is_outlier: np.ndarray        # (n,) bool
    X_test: np.ndarray
    y_test: np.ndarray            # clean test labels
    lam: float
    seed: int
    K: int | None = None          # classes (classification only)
    w_star: np.ndarray | None = None      # regression ground truth
    class_means: np.ndarray | None = None  # (K, k) blob centers
    params: dict = field(default_factory=dict)

    # -- basic shape info ----------------------------------------------------

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        """Length of the flat weight vector the model expects."""
        return self.k if self.kind == LinearRegression else self.k * self.K

    @property
    def outlier_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_outlier)

    @property
    def n_outliers(self) -> int:
        return int(np.count_nonzero(self.is_outlier))

    def sample(self, i: int) -> Sample:
        if self.kind == LinearRegression:
            pert = float(self.y[i] - self.y_clean[i]) if self.is_outlier[i] else 0.0
            observed, clean = float(self.y[i]), float(self.y_clean[i])
        else:
            pert = (int(self.y_clean[i]), int(self.y[i])) if self.is_outlier[i] else None
            observed, clean = int(self.y[i]), int(self.y_clean[i])
        return Sample(
            x=self.X[i],
            observed_label=observed,
            oracle_clean_label=clean,
            oracle_is_outlier=bool(self.is_outlier[i]),
            oracle_perturbation=pert,
        )

    def _check_w(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ShapeError(f"expected weight vector of shape ({self.dim},), got {w.shape}")
        return w

    # -- losses and gradients -------------------------------------------------

    def _softmax_probs(self, X: np.ndarray, w: np.ndarray) -> np.ndarray:
        W = w.reshape(self.k, self.K)
        Z = X @ W
        Z = Z - Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(axis=1, keepdims=True)
        return P

    def losses(self, w, labels: np.ndarray | None = None) -> np.ndarray:
        """Vector of per-sample losses f_i(w) over the training set."""
        w = self._check_w(w)
        y = self.y if labels is None else labels
        if self.kind == LinearRegression:
            resid = y - self.X @ w
            return resid * resid
        P = self._softmax_probs(self.X, w)
        p_y = np.maximum(P[np.arange(self.n), y], 1e-300)
        return np.maximum(-np.log(p_y), 0.0)

    def clean_losses(self, w) -> np.ndarray:
        return self.losses(w, labels=self.y_clean)

    def batch_losses(self, w, idx: np.ndarray) -> np.ndarray:
        """Per-sample losses restricted to ``idx`` (cheaper than a full pass)."""
        w = self._check_w(w)
        idx = np.asarray(idx, dtype=np.intp)
        if self.kind == LinearRegression:
            resid = self.y[idx] - self.X[idx] @ w
            return resid * resid
        P = self._softmax_probs(self.X[idx], w)
        p_y = np.maximum(P[np.arange(len(idx)), self.y[idx]], 1e-300)
        return np.maximum(-np.log(p_y), 0.0)

    def sample_loss(self, w, i: int) -> float:
        return float(self.losses(w)[i])

    def sample_grad(self, w, i: int) -> np.ndarray:
        return self.grad_matrix(w, np.array([i]))[0]

    def oracle_clean_loss(self, w, i: int) -> float:
        return float(self.clean_losses(w)[i])

    def oracle_clean_grad(self, w, i: int) -> np.ndarray:
        return self.grad_matrix(w, np.array([i]), labels=self.y_clean)[0]

    def oracle_outlier_gradient(self, w, i: int) -> np.ndarray:
        """h_i = observed gradient minus clean gradient; defined for outliers only."""
        if not self.is_outlier[i]:
            raise ValueError(f"sample {i} is not an outlier; h_i is undefined")
        return self.sample_grad(w, i) - self.oracle_clean_grad(w, i)

    def grad_matrix(self, w, idx: np.ndarray, labels: np.ndarray | None = None) -> np.ndarray:
        """Per-sample gradients, one row per index in ``idx`` (shape (m, dim))."""
        w = self._check_w(w)
        idx = np.asarray(idx, dtype=np.intp)
        y = self.y if labels is None else labels
        Xb = self.X[idx]
        if self.kind == LinearRegression:
            resid = y[idx] - Xb @ w
            return -2.0 * resid[:, None] * Xb
        P = self._softmax_probs(Xb, w)
        P[np.arange(len(idx)), y[idx]] -= 1.0
        return np.einsum("mi,mc->mic", Xb, P).reshape(len(idx), self.dim)

    def grad_mean(self, w, idx: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
        """Mean gradient over a batch, optionally weighted per sample."""
        w = self._check_w(w)
        idx = np.asarray(idx, dtype=np.intp)
        if weights is None:
            weights = np.ones(len(idx))
        if self.kind == LinearRegression:
            Xb = self.X[idx]
            resid = self.y[idx] - Xb @ w
            return (-2.0 * (weights * resid)) @ Xb / len(idx)
        P = self._softmax_probs(self.X[idx], w)
        P[np.arange(len(idx)), self.y[idx]] -= 1.0
        P *= weights[:, None]
        return (self.X[idx].T @ P).reshape(self.dim) / len(idx)

    def all_grads(self, w, clean: bool = False) -> np.ndarray:
        labels = self.y_clean if clean else None
        return self.grad_matrix(w, np.arange(self.n), labels=labels)

    # -- evaluation ------------------------------------------------------------

    def test_metric(self, w) -> float:
        """RMSE on the clean test set (regression) or top-1 accuracy (classification)."""
        w = self._check_w(w)
        if self.kind == LinearRegression:
            resid = self.y_test - self.X_test @ w
            return float(np.sqrt(np.mean(resid * resid)))
        P = self.X_test @ w.reshape(self.k, self.K)
        return float(np.mean(P.argmax(axis=1) == self.y_test))

    def init_weights(self) -> np.ndarray:
        return np.zeros(self.dim)


def _round_count(lam: float, n: int) -> int:
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"outlier fraction must lie in [0, 1), got {lam}")
    return round(lam * n)


def gen_linear_regression(
    n: int,
    k: int = 10,
    lam: float = 0.0,
    noise_sd: float = 0.1,
    outlier_sd: float = 5.0,
    seed: int = 0,
    test_fraction: float = 0.2,
) -> ProblemInstance:
    """Scalar-output regression with additive Gaussian outlier offsets.

    Feature coordinates are uniform on (0, 1], true weights are standard
    normal, and a uniformly chosen round(lam * n) subset receives an offset
    drawn from N(0, outlier_sd).  The test set is clean.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    X = 1.0 - rng.random((n, k))
    w_star = rng.standard_normal(k)
    eps = rng.normal(0.0, noise_sd, n)
    y_clean = X @ w_star + eps
    n_out = _round_count(lam, n)
    out_idx = rng.choice(n, size=n_out, replace=False)
    offsets = np.zeros(n)
    offsets[out_idx] = rng.normal(0.0, outlier_sd, n_out)
    is_outlier = np.zeros(n, dtype=bool)
    is_outlier[out_idx] = True
    n_test = round(test_fraction * n)
    X_test = 1.0 - rng.random((n_test, k))
    y_test = X_test @ w_star + rng.normal(0.0, noise_sd, n_test)
    return ProblemInstance(
        kind=LinearRegression,
        X=X,
        y=y_clean + offsets,
        y_clean=y_clean,
        is_outlier=is_outlier,
        X_test=X_test,
        y_test=y_test,
        lam=lam,
        seed=int(seed),
        w_star=w_star,
        params={
            "n": n,
            "k": k,
            "noise_sd": noise_sd,
            "outlier_sd": outlier_sd,
            "test_fraction": test_fraction,
        },
    )


def gen_blob_classification(
    n: int,
    k: int = 5,
    K: int = 3,
    lam: float = 0.0,
    separation: float = 3.0,
    seed: int = 0,
    test_fraction: float = 0.2,
) -> ProblemInstance:
    """K unit-covariance Gaussian blobs with symmetric label noise.

    Blob means sit on scaled coordinate axes so that every pair of means is
    exactly ``separation`` apart (requires k >= K).  Corrupted labels map to
    a uniformly random *different* class, so ``lam`` is the true rate.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if k < K:
        raise ValueError(f"blob placement needs k >= K (got k={k}, K={K})")
    rng = np.random.default_rng(seed)
    means = np.zeros((K, k))
    means[np.arange(K), np.arange(K)] = separation / np.sqrt(2.0)

    y_clean = rng.integers(0, K, n)
    X = means[y_clean] + rng.standard_normal((n, k))
    n_out = _round_count(lam, n)
    out_idx = rng.choice(n, size=n_out, replace=False)
    y = y_clean.copy()
    y[out_idx] = (y[out_idx] + rng.integers(1, K, n_out)) % K
    is_outlier = np.zeros(n, dtype=bool)
    is_outlier[out_idx] = True

    n_test = round(test_fraction * n)
    y_test = rng.integers(0, K, n_test)
    X_test = means[y_test] + rng.standard_normal((n_test, k))
    return ProblemInstance(
        kind=BlobClassification,
        X=X,
        y=y,
        y_clean=y_clean,
        is_outlier=is_outlier,
        X_test=X_test,
        y_test=y_test,
        lam=lam,
        seed=int(seed),
        K=K,
        class_means=means,
        params={"n": n, "k": k, "K": K, "separation": separation, "test_fraction": test_fraction},
    )


# ---------------------------------------------------------------------------
# serialization: CSV pair + JSON sidecar, bit-exact round trip
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def save_instance(problem: ProblemInstance, directory: str | Path, stem: str = "instance") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    k = problem.k
    feat_cols = [f"x{j}" for j in range(k)]
    regression = problem.kind == LinearRegression

    with open(directory / f"{stem}_train.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(feat_cols + ["observed_label", "clean_label", "is_outlier"])
        for i in range(problem.n):
            row = [_fmt(v) for v in problem.X[i]]
            if regression:
                row += [_fmt(problem.y[i]), _fmt(problem.y_clean[i])]
            else:
                row += [str(int(problem.y[i])), str(int(problem.y_clean[i]))]
            row.append("1" if problem.is_outlier[i] else "0")
            writer.writerow(row)

    with open(directory / f"{stem}_test.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(feat_cols + ["label"])
        for i in range(len(problem.y_test)):
            row = [_fmt(v) for v in problem.X_test[i]]
            row.append(_fmt(problem.y_test[i]) if regression else str(int(problem.y_test[i])))
            writer.writerow(row)

    meta = {
        "kind": problem.kind,
        "n": problem.n,
        "k": problem.k,
        "K": problem.K,
        "lambda": problem.lam,
        "seed": problem.seed,
        "params": problem.params,
        "w_star": None if problem.w_star is None else [_fmt(v) for v in problem.w_star],
        "class_means": None
        if problem.class_means is None
        else [[_fmt(v) for v in row] for row in problem.class_means],
    }
    with open(directory / f"{stem}.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_instance(directory: str | Path, stem: str = "instance") -> ProblemInstance:
    directory = Path(directory)
    with open(directory / f"{stem}.json") as fh:
        meta = json.load(fh)
    regression = meta["kind"] == LinearRegression
    k = meta["k"]

    def read_csv(path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        return header, rows

    _, rows = read_csv(directory / f"{stem}_train.csv")
    X = np.array([[float(r[j]) for j in range(k)] for r in rows])
    if regression:
        y = np.array([float(r[k]) for r in rows])
        y_clean = np.array([float(r[k + 1]) for r in rows])
    else:
        y = np.array([int(r[k]) for r in rows])
        y_clean = np.array([int(r[k + 1]) for r in rows])
    is_outlier = np.array([r[k + 2] == "1" for r in rows])

    _, rows = read_csv(directory / f"{stem}_test.csv")
    X_test = np.array([[float(r[j]) for j in range(k)] for r in rows]).reshape(len(rows), k)
    y_test = (
        np.array([float(r[k]) for r in rows])
        if regression
        else np.array([int(r[k]) for r in rows])
    )

    return ProblemInstance(
        kind=meta["kind"],
        X=X,
        y=y,
        y_clean=y_clean,
        is_outlier=is_outlier,
        X_test=X_test,
        y_test=y_test,
        lam=meta["lambda"],
        seed=meta["seed"],
        K=meta["K"],
        w_star=None if meta["w_star"] is None else np.array([float(v) for v in meta["w_star"]]),
        class_means=None
        if meta["class_means"] is None
        else np.array([[float(v) for v in row] for row in meta["class_means"]]),
        params=meta["params"],
    )
