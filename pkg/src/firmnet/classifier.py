"""Logistic regression with deterministic full-batch Newton training.

The model is P(y=1|x) = sigmoid(w.x + b). Training maximizes the penalized
log-likelihood (l2 on w only, intercept free) with damped Newton steps and a
backtracking line search, so the objective is monotone iteration to
iteration. Numeric columns flagged by the dataset are standardized with
statistics from the fitting data and the transform is stored on the model.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

logger = logging.getLogger(__name__)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log_likelihood(z, y):
    # sum over rows of log sigmoid(z_i) for y=1 and log(1-sigmoid) for y=0
    signed = np.where(y == 1, z, -z)
    return float(-np.logaddexp(0.0, -signed).sum())


def penalized_objective(A, y, W, pen):
    """Penalized log-likelihood at W; A carries the intercept column."""
    z = A @ W
    return _log_likelihood(z, y) - 0.5 * float(pen @ (W * W))


def penalized_grad(A, y, W, pen, p=None):
    """Gradient of :func:`penalized_objective` with respect to W."""
    if p is None:
        p = sigmoid(A @ W)
    return A.T @ (y - p) - pen * W


@dataclass
class TrainedModel:
    w: np.ndarray
    intercept: float
    feature_names: list
    converged: bool
    iterations: int
    final_grad_norm: float
    hyper: dict
    scale_cols: tuple = ()
    scale_mean: tuple = ()
    scale_std: tuple = ()
    warnings: list = field(default_factory=list)
    objective_path: tuple = ()

    def to_dict(self):
        return {
            "feature_names": list(self.feature_names),
            "w": [float(v) for v in self.w],
            "intercept": float(self.intercept),
            "hyper": self.hyper,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_grad_norm": float(self.final_grad_norm),
            "transform": {
                "cols": list(self.scale_cols),
                "mean": [float(v) for v in self.scale_mean],
                "std": [float(v) for v in self.scale_std],
                "kind": "ln1p-zscore",
            },
        }


def likelihood(x, model):
    """sigmoid(w.x + intercept) for one raw feature vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.w.shape[0]:
        raise ValueError(
            f"dimension mismatch: got {x.shape[0]}, model has "
            f"{model.w.shape[0]}")
    x = x.copy()
    for c, mu, sd in zip(model.scale_cols, model.scale_mean, model.scale_std):
        x[c] = (x[c] - mu) / sd
    return float(sigmoid(np.array([x @ model.w + model.intercept]))[0])


def _standardize(X, cols, mean=None, std=None):
    """Scale stored entries of the given columns in place (CSR copy).

    Works because every row stores those columns explicitly (dataset
    contract), so implicit zeros never belong to a scaled column.
    """
    X = X.tocsr().copy()
    stats = []
    for j, col in enumerate(cols):
        hit = X.indices == col
        vals = X.data[hit]
        if mean is None:
            mu = float(vals.mean()) if len(vals) else 0.0
            sd = float(vals.std())
            if sd < 1e-12:
                sd = 1.0
        else:
            mu, sd = mean[j], std[j]
        X.data[hit] = (vals - mu) / sd
        stats.append((mu, sd))
    return X, stats


def train(dataset, l2=0.0, tol=1e-8, max_iter=500, standardize=True):
    """Fit the model on a LabeledDataset; deterministic for fixed inputs.

    Raises on single-class labels or non-finite features. ``converged`` is
    False when the iteration cap or a line-search stall ends the run first.
    """
    X = dataset.X.tocsr()
    y = np.asarray(dataset.y, dtype=np.float64)
    if not np.isfinite(X.data).all():
        raise ValueError("non-finite feature values")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("training labels are single-class")

    stats = []
    if standardize and dataset.numeric_cols:
        X, stats = _standardize(X, dataset.numeric_cols)

    n, dim = X.shape
    A = sp.hstack([X, sp.csr_matrix(np.ones((n, 1)))], format="csr")
    pen = np.full(dim + 1, float(l2))
    pen[dim] = 0.0

    ybar = min(max(y.mean(), 1e-9), 1.0 - 1e-9)
    W = np.zeros(dim + 1)
    W[dim] = np.log(ybar / (1.0 - ybar))

    def objective(Wv):
        z = A @ Wv
        return _log_likelihood(z, y) - 0.5 * float(pen @ (Wv * Wv)), z

    obj, z = objective(W)
    path = [obj]
    converged = False
    grad_norm = np.inf
    warnings = []
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(z)
        grad = penalized_grad(A, y, W, pen, p=p)
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= tol:
            converged = True
            it -= 1
            break

        d = np.maximum(p * (1.0 - p), 1e-12)
        B = A.multiply(np.sqrt(d)[:, None]).tocsr()
        H = (B.T @ B).toarray() + np.diag(pen)

        jitter = 0.0
        step = None
        while step is None:
            try:
                cho = scipy.linalg.cho_factor(
                    H + jitter * np.eye(dim + 1), lower=True)
                step = scipy.linalg.cho_solve(cho, grad)
            except np.linalg.LinAlgError:
                jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
                if jitter > 1e6:
                    raise RuntimeError("Hessian factorization failed")

        # Backtracking keeps the penalized log-likelihood monotone.
        scale = 1.0
        improved = False
        for _ in range(60):
            cand = W + scale * step
            cand_obj, cand_z = objective(cand)
            if cand_obj >= obj:
                improved = cand_obj > obj or scale == 1.0
                W, obj, z = cand, cand_obj, cand_z
                path.append(obj)
                break
            scale *= 0.5
        else:
            warnings.append(f"line search stalled at iteration {it}")
            break
        if not improved and scale < 1.0:
            warnings.append(f"no objective gain at iteration {it}")
            break
    else:
        it = max_iter

    if not converged:
        grad = penalized_grad(A, y, W, pen, p=sigmoid(z))
        grad_norm = float(np.abs(grad).max())
        converged = grad_norm <= tol

    # One-hot blocks sum to one per row, so weights are identified only up
    # to a per-block constant absorbed by the intercept. Pin the gauge to
    # the minimum-norm representative (the l2 -> 0+ limit); with l2 > 0 the
    # optimum already sits there.
    if l2 == 0.0:
        for lo, hi in getattr(dataset, "onehot_blocks", ()):
            shift = float(W[lo:hi].mean())
            W[lo:hi] -= shift
            W[dim] += shift

    model = TrainedModel(
        w=W[:dim].copy(),
        intercept=float(W[dim]),
        feature_names=list(dataset.feature_names),
        converged=converged,
        iterations=it,
        final_grad_norm=grad_norm,
        hyper={"l2": float(l2), "tol": float(tol), "max_iter": int(max_iter)},
        scale_cols=tuple(dataset.numeric_cols) if stats else (),
        scale_mean=tuple(mu for mu, _ in stats),
        scale_std=tuple(sd for _, sd in stats),
        warnings=warnings,
        objective_path=tuple(path),
    )
    return model


def predict_proba(model, X):
    """Scores for a raw design matrix (applies the stored transform)."""
    X = X.tocsr()
    if X.shape[1] != model.w.shape[0]:
        raise ValueError("dimension mismatch")
    if model.scale_cols:
        X, _ = _standardize(X, model.scale_cols,
                            mean=model.scale_mean, std=model.scale_std)
    z = X @ model.w + model.intercept
    return sigmoid(z)


@dataclass
class PrecisionCurve:
    s_grid: np.ndarray
    hits: np.ndarray
    precision: np.ndarray


def precision_curve(scores, y, s_grid, firm_index=None):
    """P(S) = hits/S over the top-S scored rows.

    Ranking is by score descending with ties broken by ascending firm index.
    Raises when a grid point exceeds the number of rows.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    n = len(scores)
    if firm_index is None:
        firm_index = np.arange(n)
    s_grid = np.asarray(s_grid, dtype=np.int64)
    if (s_grid < 1).any() or (s_grid > n).any():
        raise ValueError(f"S grid must lie in [1, {n}]")
    order = np.lexsort((firm_index, -scores))
    cum = np.cumsum(y[order].astype(np.int64))
    hits = cum[s_grid - 1]
    return PrecisionCurve(s_grid=s_grid, hits=hits,
                          precision=hits / s_grid)


def make_folds(n, k, seed):
    """Random partition into k folds; sizes differ by at most one.

    The remainder spreads over the first folds. Returns an int array of fold
    ids per row.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError("dataset smaller than fold count")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(n)
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    fold = np.empty(n, dtype=np.int32)
    start = 0
    for f in range(k):
        fold[perm[start:start + sizes[f]]] = f
        start += sizes[f]
    return fold


@dataclass
class GroupEval:
    group: str
    s_grid: np.ndarray
    per_fold: np.ndarray  # (k, len(s_grid)), NaN for skipped folds
    folds_used: int
    skipped_folds: list

    @property
    def p_mean(self):
        return np.nanmean(self.per_fold, axis=0)

    @property
    def p_std(self):
        return np.nanstd(self.per_fold, axis=0)


def default_s_grid(n_rows, k, fractions=(0.005, 0.01, 0.02, 0.05, 0.10)):
    """S counts derived from fractions of the minimum fold size."""
    base = n_rows // k
    grid = sorted({max(1, int(frac * base)) for frac in fractions})
    return np.array(grid, dtype=np.int64)


def cross_validate(datasets, k=10, seed=0, s_grid=None, l2=0.0, tol=1e-8,
                   max_iter=500):
    """k-fold evaluation of one or more feature groups on aligned rows.

    ``datasets`` maps group name to LabeledDataset; all must cover the same
    firms in the same order so every group sees identical folds. Folds with a
    single-class training side are skipped with a warning and excluded from
    the averages.
    """
    groups = list(datasets)
    first = datasets[groups[0]]
    for g in groups[1:]:
        if not np.array_equal(datasets[g].firm_index, first.firm_index):
            raise ValueError("datasets must cover identical rows")
    n = first.n_rows
    fold = make_folds(n, k, seed)
    if s_grid is None:
        s_grid = default_s_grid(n, k)
    s_grid = np.asarray(s_grid, dtype=np.int64)

    results = {}
    for g in groups:
        ds = datasets[g]
        per_fold = np.full((k, len(s_grid)), np.nan)
        skipped = []
        for f in range(k):
            test = fold == f
            train_rows = ~test
            ytr = ds.y[train_rows]
            if len(np.unique(ytr)) < 2:
                skipped.append(f)
                logger.warning("fold %d skipped for group %s: single-class "
                               "training labels", f, g)
                continue
            sub = LabeledDatasetView(ds, train_rows)
            model = train(sub, l2=l2, tol=tol, max_iter=max_iter)
            scores = predict_proba(model, ds.X[test])
            curve = precision_curve(scores, ds.y[test], s_grid,
                                    firm_index=ds.firm_index[test])
            per_fold[f] = curve.precision
        results[g] = GroupEval(group=g, s_grid=s_grid, per_fold=per_fold,
                               folds_used=k - len(skipped),
                               skipped_folds=skipped)
    return results


class LabeledDatasetView:
    """Row-sliced view exposing the LabeledDataset fields train() needs."""

    def __init__(self, dataset, row_mask):
        self.X = dataset.X[row_mask]
        self.y = dataset.y[row_mask]
        self.firm_index = dataset.firm_index[row_mask]
        self.feature_names = dataset.feature_names
        self.numeric_cols = dataset.numeric_cols
        self.group = dataset.group
        self.onehot_blocks = getattr(dataset, "onehot_blocks", ())


def weight_report(model):
    """Features ranked by |weight| descending; zero weights omitted.

    Ties order by feature position. Returns (rows, ratio) where rows are
    (rank, feature, weight) and ratio is top network |weight| over top
    individual |weight| (None when either side is absent).
    """
    w = model.w
    order = np.lexsort((np.arange(len(w)), -np.abs(w)))
    rows = []
    rank = 0
    for j in order:
        if w[j] == 0.0:
            continue
        rank += 1
        rows.append((rank, model.feature_names[j], float(w[j])))

    top_net = top_ind = None
    for _, name, weight in rows:
        if name.startswith("net_"):
            if top_net is None:
                top_net = abs(weight)
        elif top_ind is None:
            top_ind = abs(weight)
        if top_net is not None and top_ind is not None:
            break
    ratio = (top_net / top_ind) if top_net and top_ind else None
    return rows, ratio
