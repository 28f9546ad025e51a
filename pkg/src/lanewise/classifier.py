"""Frame-likelihood models: a linear SVM and a random forest.

Both estimators map 240-value frame descriptors to a probability vector
over the eight supported label classes and follow the scikit-learn
fit/predict/predict_proba convention. Training is deterministic under the
``seed`` parameter, and models round-trip bit-exactly through the
plain-text serialization in :func:`save_model` / :func:`load_model`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .exceptions import DegenerateDataError, InvalidInputError, ModelFormatError
from .features import FEATURE_DIM
from .labels import N_CLASSES, label_index, labels_array
from .validation import check_feature_matrix

MODEL_MAGIC = "lanewise-model"
MODEL_VERSION = "v1"


def _as_class_indices(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 2 and y.shape[1] == 2:
        return np.array([label_index(row) for row in y], dtype=np.int64)
    y = y.reshape(-1)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise InvalidInputError("class indices must lie in [0, 8)")
    return y.astype(np.int64)


def _check_fit_inputs(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = check_feature_matrix(X, FEATURE_DIM)
    yi = _as_class_indices(y)
    if yi.shape[0] != X.shape[0]:
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {yi.shape[0]}")
    if np.unique(yi).size < 2:
        raise DegenerateDataError("training data must contain at least 2 classes")
    return X, yi


# ---------------------------------------------------------------------------
# linear SVM


def _sgd_hinge_ovr(X: np.ndarray, y: np.ndarray, C: float, epochs: int, rng) -> np.ndarray:
    """One-vs-rest hinge-loss SGD with L2 regularization.

    All eight binary problems share the sample order, which is equivalent
    to training them independently with the same permutations. The bias is
    an augmented always-one feature, so it is (lightly) regularized too.
    Returns an (8, dim+1) weight matrix, bias last.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    targets = np.where(y[None, :] == np.arange(N_CLASSES)[:, None], 1.0, -1.0)
    lam = 1.0 / (C * n)
    W = np.zeros((N_CLASSES, d + 1))
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margins = targets[:, i] * (W @ Xa[i])
            W *= 1.0 - 1.0 / t
            hot = margins < 1.0
            if hot.any():
                W[hot] += (eta * targets[hot, i])[:, None] * Xa[i]
    return W


def _fit_sigmoid(scores: np.ndarray, positive: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Platt scaling: fit (A, B) so that sigmoid(A*s + B) matches outcomes.

    Newton iterations with backtracking on the cross-entropy against the
    usual smoothed targets; robust to separable score distributions.
    """
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(positive, hi, lo)
    A, B = 0.0, np.log((n_pos + 1.0) / (n_neg + 1.0))
    eps = 1e-12

    def objective(a, b):
        f = a * scores + b
        # cross-entropy sum(-t*log p - (1-t)*log(1-p)) for p = sigmoid(f),
        # written with a stable log(1 + exp(f))
        log1pef = np.where(f >= 0, f + np.log1p(np.exp(-f)), np.log1p(np.exp(f)))
        return float(np.sum(log1pef - t * f))

    fval = objective(A, B)
    for _ in range(max_iter):
        f = A * scores + B
        p = 1.0 / (1.0 + np.exp(-f))
        g = p - t
        grad_a = float(np.dot(g, scores))
        grad_b = float(np.sum(g))
        if abs(grad_a) < 1e-7 and abs(grad_b) < 1e-7:
            break
        w = np.maximum(p * (1.0 - p), eps)
        haa = float(np.dot(w, scores * scores)) + eps
        hbb = float(np.sum(w)) + eps
        hab = float(np.dot(w, scores))
        det = haa * hbb - hab * hab
        if det <= 0:
            break
        da = -(hbb * grad_a - hab * grad_b) / det
        db = -(-hab * grad_a + haa * grad_b) / det
        step = 1.0
        while step >= 1e-10:
            cand = objective(A + step * da, B + step * db)
            if cand < fval:
                A += step * da
                B += step * db
                fval = cand
                break
            step /= 2.0
        else:
            break
    return A, B


class LinearSvmModel(BaseEstimator, ClassifierMixin):
    """One-vs-rest linear SVM with per-class sigmoid probability calibration.

    Calibration parameters are fitted on out-of-fold decision scores so
    that predict_proba is honest about training-set confidence.
    """

    kind = "svm"

    def __init__(self, C=1.0, epochs=30, seed=0, calibration_folds=5):
        self.C = C
        self.epochs = epochs
        self.seed = seed
        self.calibration_folds = calibration_folds

    def fit(self, X, y):
        X, yi = _check_fit_inputs(X, y)
        if not self.C > 0:
            raise InvalidInputError(f"C must be > 0, got {self.C!r}")
        n = X.shape[0]

        # out-of-fold decision scores for calibration
        folds = max(2, min(int(self.calibration_folds), n))
        order = np.random.default_rng(np.random.SeedSequence((int(self.seed), 1))).permutation(n)
        oof = np.zeros((n, N_CLASSES))
        bounds = np.linspace(0, n, folds + 1).astype(int)
        for k in range(folds):
            hold = order[bounds[k] : bounds[k + 1]]
            train = np.setdiff1d(order, hold)
            if np.unique(yi[train]).size < 2 or hold.size == 0:
                continue
            rng = np.random.default_rng(np.random.SeedSequence((int(self.seed), 2, k)))
            Wk = _sgd_hinge_ovr(X[train], yi[train], self.C, int(self.epochs), rng)
            oof[hold] = X[hold] @ Wk[:, :-1].T + Wk[:, -1]

        rng = np.random.default_rng(np.random.SeedSequence((int(self.seed), 0)))
        W = _sgd_hinge_ovr(X, yi, self.C, int(self.epochs), rng)
        self.weights_ = W[:, :-1].copy()
        self.biases_ = W[:, -1].copy()
        calib = np.zeros((N_CLASSES, 2))
        for c in range(N_CLASSES):
            calib[c] = _fit_sigmoid(oof[:, c], yi == c)
        self.calibration_ = calib
        self.classes_ = labels_array()
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("LinearSvmModel is not fitted yet")

    def decision_function(self, X) -> np.ndarray:
        """Uncalibrated per-class margins, shape (n, 8)."""
        self._check_fitted()
        X = check_feature_matrix(X, FEATURE_DIM)
        return X @ self.weights_.T + self.biases_

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        scores = self.decision_function(X)
        f = self.calibration_[:, 0] * scores + self.calibration_[:, 1]
        probs = 1.0 / (1.0 + np.exp(-np.clip(f, -500, 500)))
        totals = probs.sum(axis=1, keepdims=True)
        flat = (totals <= 0.0).ravel()
        probs[flat] = 1.0 / N_CLASSES
        totals[flat] = 1.0
        return probs / totals

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


# ---------------------------------------------------------------------------
# random forest


def gini_impurity(counts) -> float:
    """Gini impurity of a class-count vector; empty counts score 0."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


class _Tree:
    """Flat-array CART tree. Leaves have feature -1 and carry class counts."""

    __slots__ = ("feature", "threshold", "left", "right", "counts")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.counts: list[np.ndarray] = []

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(np.zeros(N_CLASSES, dtype=np.int64))
        return len(self.feature) - 1

    def leaf_proba(self, node: int) -> np.ndarray:
        c = self.counts[node].astype(np.float64)
        return c / c.sum()

    def apply_proba(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros((X.shape[0], N_CLASSES))
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            if self.feature[node] < 0:
                out[rows] = self.leaf_proba(node)
                continue
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], rows[go_left]))
            stack.append((self.right[node], rows[~go_left]))
        return out


def _best_split(Xn, yn, feats, min_leaf):
    """Lowest weighted-Gini split over the sampled features.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values. Ties break toward the first candidate in (feature, threshold)
    order, which keeps tree growth deterministic.
    """
    n = yn.size
    onehot = np.zeros((n, N_CLASSES))
    onehot[np.arange(n), yn] = 1.0
    best = None
    for f in feats:
        v = Xn[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        cum = np.cumsum(onehot[order], axis=0)
        # split after position i is allowed where the value actually changes
        cut = np.nonzero(vs[:-1] < vs[1:])[0]
        if cut.size == 0:
            continue
        nl = cut + 1
        nr = n - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        cut, nl, nr = cut[ok], nl[ok], nr[ok]
        lc = cum[cut]
        rc = cum[-1] - lc
        gl = 1.0 - np.sum((lc / nl[:, None]) ** 2, axis=1)
        gr = 1.0 - np.sum((rc / nr[:, None]) ** 2, axis=1)
        score = (nl * gl + nr * gr) / n
        j = int(np.argmin(score))
        if best is None or score[j] < best[0] - 1e-15:
            thr = 0.5 * (vs[cut[j]] + vs[cut[j] + 1])
            best = (float(score[j]), int(f), thr)
    return best


def _grow_tree(X, y, rng, max_depth, min_leaf, mtry) -> _Tree:
    tree = _Tree()
    d = X.shape[1]

    def build(rows, depth) -> int:
        node = tree.add_node()
        yn = y[rows]
        counts = np.bincount(yn, minlength=N_CLASSES)
        tree.counts[node] = counts
        if depth >= max_depth or rows.size < 2 * min_leaf or counts.max() == rows.size:
            return node
        feats = np.sort(rng.choice(d, size=min(mtry, d), replace=False))
        found = _best_split(X[rows], yn, feats, min_leaf)
        if found is None:
            return node
        _, f, thr = found
        go_left = X[rows, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = build(rows[go_left], depth + 1)
        tree.right[node] = build(rows[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return tree


class RandomForestModel(BaseEstimator, ClassifierMixin):
    """Bootstrap-aggregated CART trees with Gini splits.

    Each tree's randomness is keyed by (seed, tree index) only, and with
    ``canonical_order`` the training rows are sorted into a canonical order
    before sampling, so the fitted forest depends on the multiset of
    training rows rather than their order. With ``canonical_order=False``
    the forest is NOT invariant to row shuffling.
    """

    kind = "forest"

    def __init__(self, n_trees=100, max_depth=16, min_leaf=5, mtry=16, seed=0, canonical_order=True):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.mtry = mtry
        self.seed = seed
        self.canonical_order = canonical_order

    def fit(self, X, y):
        X, yi = _check_fit_inputs(X, y)
        for name in ("n_trees", "max_depth", "min_leaf", "mtry"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.canonical_order:
            order = np.lexsort((yi,) + tuple(X.T)[::-1])
            X, yi = X[order], yi[order]
        n = X.shape[0]
        self.trees_ = []
        for t in range(int(self.n_trees)):
            rng = np.random.default_rng(np.random.SeedSequence((int(self.seed), t)))
            boot = rng.integers(0, n, size=n)
            self.trees_.append(
                _grow_tree(X[boot], yi[boot], rng, int(self.max_depth), int(self.min_leaf), int(self.mtry))
            )
        self.classes_ = labels_array()
        return self

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise NotFittedError("RandomForestModel is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_feature_matrix(X, FEATURE_DIM)
        acc = np.zeros((X.shape[0], N_CLASSES))
        for tree in self.trees_:
            acc += tree.apply_proba(X)
        return acc / len(self.trees_)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]


# ---------------------------------------------------------------------------
# plain-text serialization

_SVM_PARAMS = {"C": float, "epochs": int, "seed": int, "calibration_folds": int}
_FOREST_PARAMS = {
    "n_trees": int,
    "max_depth": int,
    "min_leaf": int,
    "mtry": int,
    "seed": int,
    "canonical_order": lambda s: s == "True",
}


def save_model(model, path) -> None:
    """Write a fitted model in the versioned plain-text format.

    Floats are emitted with repr, which round-trips float64 bit-exactly.
    """
    if isinstance(model, LinearSvmModel):
        model._check_fitted()
        lines = [f"{MODEL_MAGIC} {MODEL_VERSION} svm"]
        for name in _SVM_PARAMS:
            lines.append(f"param {name} {getattr(model, name)!r}")
        lines.append(f"classes {N_CLASSES}")
        lines.append(f"dim {FEATURE_DIM}")
        for c, (t1, t2) in enumerate(model.classes_):
            lines.append(f"class {t1} {t2}")
            lines.append(f"bias {float(model.biases_[c])!r}")
            lines.append(f"calib {float(model.calibration_[c, 0])!r} {float(model.calibration_[c, 1])!r}")
            lines.append("w " + " ".join(repr(float(v)) for v in model.weights_[c]))
    elif isinstance(model, RandomForestModel):
        model._check_fitted()
        lines = [f"{MODEL_MAGIC} {MODEL_VERSION} forest"]
        for name in _FOREST_PARAMS:
            lines.append(f"param {name} {getattr(model, name)!r}")
        lines.append(f"classes {N_CLASSES}")
        lines.append(f"dim {FEATURE_DIM}")
        for t, tree in enumerate(model.trees_):
            lines.append(f"tree {t} nodes {len(tree.feature)}")
            for i in range(len(tree.feature)):
                if tree.feature[i] >= 0:
                    lines.append(
                        f"node split {tree.feature[i]} {float(tree.threshold[i])!r} "
                        f"{tree.left[i]} {tree.right[i]}"
                    )
                else:
                    lines.append("node leaf " + " ".join(str(int(v)) for v in tree.counts[i]))
    else:
        raise InvalidInputError(f"cannot serialize {type(model).__name__}")
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path):
    """Read a model written by :func:`save_model`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ModelFormatError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != MODEL_MAGIC or head[1] != MODEL_VERSION:
        raise ModelFormatError(f"{path}: bad header {lines[0]!r}")
    kind = head[2]
    if kind == "svm":
        return _load_svm(lines, path)
    if kind == "forest":
        return _load_forest(lines, path)
    raise ModelFormatError(f"{path}: unknown model kind {kind!r}")


class _LineReader:
    def __init__(self, lines, path):
        self.lines = lines
        self.pos = 1
        self.path = path

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"{self.path}: truncated model file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, prefix: str) -> list[str]:
        line = self.next()
        if not line.startswith(prefix + " ") and line != prefix:
            raise ModelFormatError(f"{self.path}:{self.pos}: expected {prefix!r}, got {line!r}")
        return line.split()[1:]


def _read_params(reader: _LineReader, schema: dict):
    params = {}
    while reader.lines[reader.pos].startswith("param "):
        _, name, raw = reader.next().split(" ", 2)
        if name not in schema:
            raise ModelFormatError(f"{reader.path}: unknown param {name!r}")
        params[name] = schema[name](raw)
    return params


def _load_svm(lines, path) -> LinearSvmModel:
    reader = _LineReader(lines, path)
    model = LinearSvmModel(**_read_params(reader, _SVM_PARAMS))
    n_classes = int(reader.expect("classes")[0])
    dim = int(reader.expect("dim")[0])
    if n_classes != N_CLASSES or dim != FEATURE_DIM:
        raise ModelFormatError(f"{path}: unexpected shape {n_classes} x {dim}")
    weights = np.zeros((N_CLASSES, FEATURE_DIM))
    biases = np.zeros(N_CLASSES)
    calib = np.zeros((N_CLASSES, 2))
    for c in range(N_CLASSES):
        reader.expect("class")
        biases[c] = float(reader.expect("bias")[0])
        calib[c] = [float(v) for v in reader.expect("calib")]
        row = [float(v) for v in reader.expect("w")]
        if len(row) != FEATURE_DIM:
            raise ModelFormatError(f"{path}: weight row {c} has {len(row)} values")
        weights[c] = row
    reader.expect("end")
    model.weights_ = weights
    model.biases_ = biases
    model.calibration_ = calib
    model.classes_ = labels_array()
    return model


def _load_forest(lines, path) -> RandomForestModel:
    reader = _LineReader(lines, path)
    model = RandomForestModel(**_read_params(reader, _FOREST_PARAMS))
    n_classes = int(reader.expect("classes")[0])
    dim = int(reader.expect("dim")[0])
    if n_classes != N_CLASSES or dim != FEATURE_DIM:
        raise ModelFormatError(f"{path}: unexpected shape {n_classes} x {dim}")
    trees = []
    for t in range(int(model.n_trees)):
        head = reader.expect("tree")
        if int(head[0]) != t:
            raise ModelFormatError(f"{path}: tree {head[0]} out of order")
        n_nodes = int(head[2])
        tree = _Tree()
        for _ in range(n_nodes):
            parts = reader.expect("node")
            node = tree.add_node()
            if parts[0] == "split":
                tree.feature[node] = int(parts[1])
                tree.threshold[node] = float(parts[2])
                tree.left[node] = int(parts[3])
                tree.right[node] = int(parts[4])
            elif parts[0] == "leaf":
                tree.counts[node] = np.array([int(v) for v in parts[1:]], dtype=np.int64)
            else:
                raise ModelFormatError(f"{path}: bad node line {parts!r}")
        trees.append(tree)
    reader.expect("end")
    model.trees_ = trees
    model.classes_ = labels_array()
    return model
