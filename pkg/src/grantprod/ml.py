"""Classifier families and the balanced-resample x k-fold evaluation protocol.

All trainers are deterministic under their seed; anything data-dependent
(imputation medians, standardization statistics, tf-idf vocabularies, nested
kNN grid search) is fitted on training folds only.  Trees split on entropy
information gain (bits) and retain per-node Gini impurity records so the
relevance stage can replay them.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .complexity import COMPLEXITY_SCHEMA, extract_complexity_vector
from .corpus import (
    GrantRecord,
    Label,
    balanced_resample,
    stratified_fold_indices,
)
from .relevance import (
    FeatureRelevanceReport,
    ImpurityRecord,
    RankingRow,
    aggregate_relevance,
    average_rank,
    critical_difference,
    feature_importance,
    gini_from_counts,
    impurity_decrease,
)
from .seeds import derive_seed
from .textproc import LexiconSet, builtin_lexicons
from .topical import (
    FieldSelector,
    IdfVariant,
    VectorMode,
    Vocabulary,
    field_tokens,
    fit_vocabulary_from_tokens,
    vectorize,
)

ALGORITHMS = ("dtree", "random_forest", "knn", "naive_bayes", "linear_svm", "mlp")

# Dense complexity features are standardized for the geometry/gradient-based
# learners; trees are scale-invariant and the Gaussian likelihood handles
# scale itself.  Sparse tf-idf features are used as-is for every learner.
STANDARDIZED_ALGORITHMS = frozenset({"knn", "linear_svm", "mlp"})

_SALT_RESAMPLE = 101
_SALT_FOLD = 202
_SALT_TRAIN = 303
_SALT_KNN = 404


class TrainingDivergedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Feature matrices and fold transforms
# ---------------------------------------------------------------------------

@dataclass
class FeatureMatrix:
    """Dense instance-by-feature matrix with aligned labels."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = ()
    grant_ids: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray([v.value if isinstance(v, Label) else int(v) for v in self.y])
        if self.X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y row counts differ")
        if not self.feature_names:
            self.feature_names = tuple(f"f{i}" for i in range(self.X.shape[1]))
        if len(self.feature_names) != self.X.shape[1]:
            raise ValueError("feature_names length must match X columns")


def _check_finite(X: np.ndarray) -> None:
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains NaN or infinite values; impute first")


def _require_nonempty(y: np.ndarray) -> None:
    if y.size == 0:
        raise ValueError("empty training set")


def fit_median_imputer(X: np.ndarray) -> np.ndarray:
    """Per-column medians ignoring NaN; all-NaN columns fall back to 0."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
        medians = np.nanmedian(X, axis=0)
    medians = np.where(np.isnan(medians), 0.0, medians)
    return medians


def apply_imputer(X: np.ndarray, medians: np.ndarray) -> np.ndarray:
    X = np.array(X, dtype=float, copy=True)
    rows, cols = np.nonzero(np.isnan(X))
    X[rows, cols] = medians[cols]
    return X


def fit_standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0, 1.0, std)
    return mean, std


def apply_standardizer(X: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (X - mean) / std


def document_text(record: GrantRecord, language: str, include_title: bool) -> str:
    if language == "pt":
        title, abstract = record.title_pt, record.abstract_pt
    else:
        title, abstract = record.title_en, record.abstract_en
    if abstract is None:
        raise ValueError(f"record {record.grant_id} has no {language} abstract")
    if not include_title or not title:
        return abstract
    separator = " " if title.rstrip().endswith((".", "!", "?")) else ". "
    return title + separator + abstract


def complexity_rows(
    records: Sequence[GrantRecord],
    language: str = "pt",
    lexicons: LexiconSet | None = None,
    include_title: bool = False,
) -> np.ndarray:
    """Raw complexity matrix with NaN where a metric is missing."""
    if lexicons is None:
        lexicons = builtin_lexicons(language)
    rows = []
    for record in records:
        vector = extract_complexity_vector(
            document_text(record, language, include_title),
            language=language,
            lexicons=lexicons,
            doc_id=record.grant_id,
        )
        rows.append([np.nan if v is None else float(v) for v in vector.as_row()])
    return np.array(rows, dtype=float).reshape(len(rows), len(COMPLEXITY_SCHEMA))


def tfidf_fold_matrices(
    token_lists: Sequence[Sequence[str]],
    train_rows: Sequence[int],
    test_rows: Sequence[int],
    top_x: int,
    mode: VectorMode = VectorMode.TFIDF,
    idf_variant: IdfVariant = IdfVariant.LOG_RATIO,
    vocabulary: Vocabulary | None = None,
) -> tuple[np.ndarray, np.ndarray, Vocabulary]:
    """Vectorize one fold; the vocabulary is fitted on the training rows only."""
    if vocabulary is None:
        vocabulary = fit_vocabulary_from_tokens([token_lists[i] for i in train_rows], top_x)
    size = len(vocabulary)

    def densify(rows):
        out = np.zeros((len(rows), size))
        for r, i in enumerate(rows):
            for index, weight in vectorize(token_lists[i], vocabulary, mode, idf_variant).pairs:
                out[r, index] = weight
        return out

    return densify(train_rows), densify(test_rows), vocabulary


# ---------------------------------------------------------------------------
# Hyperparameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeHyper:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    # Splits with gain below this become leaves.  The default of 0.0 admits
    # zero-gain splits on impure nodes, which is what lets a tree resolve
    # XOR-style interactions at depth 2.
    min_gain: float = 0.0


@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 100
    max_features: int | str | None = "sqrt"
    bootstrap: bool = True
    tree: TreeHyper = field(default_factory=TreeHyper)


@dataclass(frozen=True)
class KnnHyper:
    k: int | None = None       # None -> nested grid selection on training folds
    metric: str | None = None  # None -> euclidean for dense, cosine for tf-idf
    grid: tuple[int, ...] = (1, 3, 5, 7, 11, 15)


@dataclass(frozen=True)
class SvmHyper:
    C: float = 1.0
    epochs: int = 200


@dataclass(frozen=True)
class MlpHyper:
    hidden_layers: tuple[int, ...] = (16,)
    learning_rate: float = 0.1
    epochs: int = 300

    def __post_init__(self):
        if not self.hidden_layers or any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layers must all have at least one unit")


def _fingerprint(X: np.ndarray, y: np.ndarray, seed: int | None, algorithm: str, hyper) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(X).tobytes())
    digest.update(np.ascontiguousarray(y).tobytes())
    digest.update(str(seed).encode())
    digest.update(algorithm.encode())
    digest.update(repr(hyper).encode())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Decision tree
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    node_id: int
    n_samples: int
    prediction: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    impurity: ImpurityRecord | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def _entropy_bits(pos: int, total: int) -> float:
    if total == 0:
        return 0.0
    h = 0.0
    for count in (pos, total - pos):
        if count > 0:
            p = count / total
            h -= p * math.log2(p)
    return h


def _entropy_bits_vec(pos: np.ndarray, total: np.ndarray) -> np.ndarray:
    out = np.zeros(len(total))
    for counts in (pos, total - pos):
        p = counts / total
        mask = p > 0
        out[mask] -= p[mask] * np.log2(p[mask])
    return out


def information_gain(y: np.ndarray, left_mask: np.ndarray) -> float:
    """Entropy of the labels minus the split-conditional entropy, in bits."""
    y = np.asarray(y)
    left_mask = np.asarray(left_mask, dtype=bool)
    n = y.size
    n_left = int(left_mask.sum())
    n_right = n - n_left
    parent = _entropy_bits(int(y.sum()), n)
    left = _entropy_bits(int(y[left_mask].sum()), n_left)
    right = _entropy_bits(int(y[~left_mask].sum()), n_right)
    return parent - (n_left / n) * left - (n_right / n) * right


def _best_split(X, y, features, min_leaf):
    """Highest-gain (feature, midpoint threshold); ties keep the first found."""
    n = y.size
    pos_total = int(y.sum())
    h_parent = _entropy_bits(pos_total, n)
    best = None
    for j in features:
        column = X[:, j]
        order = np.argsort(column, kind="stable")
        xs = column[order]
        ys = y[order]
        boundaries = np.nonzero(xs[1:] > xs[:-1])[0]  # left block is [0..b]
        if boundaries.size == 0:
            continue
        admissible = (boundaries + 1 >= min_leaf) & (n - boundaries - 1 >= min_leaf)
        boundaries = boundaries[admissible]
        if boundaries.size == 0:
            continue
        pos_prefix = np.cumsum(ys)
        n_left = boundaries + 1
        pos_left = pos_prefix[boundaries]
        n_right = n - n_left
        pos_right = pos_total - pos_left
        gains = (
            h_parent
            - (n_left / n) * _entropy_bits_vec(pos_left, n_left)
            - (n_right / n) * _entropy_bits_vec(pos_right, n_right)
        )
        i = int(np.argmax(gains))  # first max -> smallest threshold
        if best is None or gains[i] > best[0]:
            b = boundaries[i]
            best = (float(gains[i]), int(j), float((xs[b] + xs[b + 1]) / 2.0))
    return best


def _grow_tree(X, y, hyper: TreeHyper, depth, counter, rng=None, max_features=None):
    n = y.size
    pos = int(y.sum())
    node = TreeNode(node_id=counter[0], n_samples=n, prediction=1 if 2 * pos > n else 0)
    counter[0] += 1
    if pos == 0 or pos == n:
        return node
    if hyper.max_depth is not None and depth >= hyper.max_depth:
        return node
    if n < hyper.min_samples_split:
        return node

    d = X.shape[1]
    if max_features is not None and max_features < d:
        features = np.sort(rng.choice(d, size=max_features, replace=False))
    else:
        features = np.arange(d)
    best = _best_split(X, y, features, hyper.min_samples_leaf)
    if best is None or best[0] < hyper.min_gain:
        return node

    gain, feature, threshold = best
    left_mask = X[:, feature] <= threshold
    n_left = int(left_mask.sum())
    n_right = n - n_left
    gini_before = gini_from_counts(pos, n)
    gini_left = gini_from_counts(int(y[left_mask].sum()), n_left)
    gini_right = gini_from_counts(int(y[~left_mask].sum()), n_right)
    node.feature = feature
    node.threshold = threshold
    node.impurity = ImpurityRecord(
        node_id=node.node_id,
        feature_index=feature,
        gini_before=gini_before,
        gini_left=gini_left,
        gini_right=gini_right,
        n_left=n_left,
        n_right=n_right,
        delta_g=impurity_decrease(gini_before, gini_left, gini_right, n_left, n_right),
    )
    node.left = _grow_tree(X[left_mask], y[left_mask], hyper, depth + 1, counter, rng, max_features)
    node.right = _grow_tree(X[~left_mask], y[~left_mask], hyper, depth + 1, counter, rng, max_features)
    return node


def _predict_tree(root: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=int)
    for i, row in enumerate(X):
        node = root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        out[i] = node.prediction
    return out


def _iter_tree_records(root: TreeNode) -> Iterator[ImpurityRecord]:
    stack = [root]
    while stack:
        node = stack.pop()
        if node.impurity is not None:
            yield node.impurity
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)


@dataclass
class DecisionTreeModel:
    root: TreeNode
    n_features: int
    hyperparameters: dict
    fingerprint: str
    algorithm: str = "dtree"

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _predict_tree(self.root, np.asarray(X, dtype=float))

    def iter_impurity_records(self) -> Iterator[ImpurityRecord]:
        return _iter_tree_records(self.root)


def train_decision_tree(train: FeatureMatrix, hyper: TreeHyper | None = None) -> DecisionTreeModel:
    """Greedy binary tree maximizing information gain at each node.

    A single-class training set yields a one-leaf majority model rather than
    an error.
    """
    hyper = hyper or TreeHyper()
    _require_nonempty(train.y)
    _check_finite(train.X)
    counter = [0]
    root = _grow_tree(train.X, train.y, hyper, depth=0, counter=counter)
    return DecisionTreeModel(
        root=root,
        n_features=train.X.shape[1],
        hyperparameters=asdict(hyper),
        fingerprint=_fingerprint(train.X, train.y, None, "dtree", hyper),
    )


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

@dataclass
class RandomForestModel:
    roots: list[TreeNode]
    n_features: int
    hyperparameters: dict
    fingerprint: str
    algorithm: str = "random_forest"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        votes = np.zeros(X.shape[0], dtype=int)
        for root in self.roots:
            votes += _predict_tree(root, X)
        # strict majority of trees; exact ties fall to the zero class
        return (2 * votes > len(self.roots)).astype(int)

    def iter_impurity_records(self) -> Iterator[ImpurityRecord]:
        for root in self.roots:
            yield from _iter_tree_records(root)


def _resolve_max_features(spec_value, d: int) -> int | None:
    if spec_value is None:
        return None
    if spec_value == "sqrt":
        return max(1, int(math.sqrt(d)))
    value = int(spec_value)
    if value < 1:
        raise ValueError("max_features must be at least 1")
    return min(value, d)


def train_random_forest(
    train: FeatureMatrix,
    hyper: ForestHyper | None = None,
    seed: int = 0,
) -> RandomForestModel:
    """Bootstrap trees with per-node feature subsampling, majority vote."""
    hyper = hyper or ForestHyper()
    _require_nonempty(train.y)
    _check_finite(train.X)
    n, d = train.X.shape
    max_features = _resolve_max_features(hyper.max_features, d)
    roots = []
    for t in range(hyper.n_trees):
        rng = np.random.default_rng(derive_seed(seed, t))
        if hyper.bootstrap:
            sample = rng.integers(0, n, size=n)
            X_t, y_t = train.X[sample], train.y[sample]
        else:
            X_t, y_t = train.X, train.y
        counter = [0]
        roots.append(
            _grow_tree(X_t, y_t, hyper.tree, depth=0, counter=counter, rng=rng,
                       max_features=max_features)
        )
    return RandomForestModel(
        roots=roots,
        n_features=d,
        hyperparameters={**asdict(hyper), "seed": seed},
        fingerprint=_fingerprint(train.X, train.y, seed, "random_forest", hyper),
    )


# ---------------------------------------------------------------------------
# Naive Bayes
# ---------------------------------------------------------------------------

@dataclass
class NaiveBayesModel:
    likelihood: str
    log_prior: np.ndarray                  # (2,)
    means: np.ndarray | None               # gaussian: (2, d)
    variances: np.ndarray | None           # gaussian: (2, d)
    feature_log_prob: np.ndarray | None    # multinomial: (2, d)
    hyperparameters: dict
    fingerprint: str
    algorithm: str = "naive_bayes"

    def decision_scores(self, X: np.ndarray, include_prior: bool = True) -> np.ndarray:
        """Per-class log-likelihood sums, optionally plus the log prior."""
        X = np.asarray(X, dtype=float)
        if self.likelihood == "gaussian":
            scores = np.empty((X.shape[0], 2))
            for c in range(2):
                var = self.variances[c]
                scores[:, c] = -0.5 * (
                    np.log(2.0 * math.pi * var) + (X - self.means[c]) ** 2 / var
                ).sum(axis=1)
        else:
            scores = X @ self.feature_log_prob.T
        if include_prior:
            scores = scores + self.log_prior
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_scores(X), axis=1)


def train_naive_bayes(train: FeatureMatrix, likelihood: str = "gaussian") -> NaiveBayesModel:
    """Class priors plus per-feature likelihoods (Gaussian or multinomial).

    Gaussian variances are floored at 1e-9 times the mean feature variance of
    the training set, so constant features cannot blow up the log-likelihood.
    Multinomial counts use add-one smoothing.
    """
    if likelihood not in ("gaussian", "multinomial"):
        raise ValueError(f"unknown likelihood '{likelihood}'")
    _require_nonempty(train.y)
    _check_finite(train.X)
    X, y = train.X, train.y
    counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=float)
    if (counts == 0).any():
        raise ValueError("both classes must be present in the training set")
    log_prior = np.log(counts / y.size)

    means = variances = feature_log_prob = None
    if likelihood == "gaussian":
        means = np.vstack([X[y == c].mean(axis=0) for c in range(2)])
        variances = np.vstack([X[y == c].var(axis=0) for c in range(2)])
        floor = 1e-9 * float(X.var(axis=0).mean())
        if floor <= 0.0:
            floor = 1e-12
        variances = np.maximum(variances, floor)
    else:
        if (X < 0).any():
            raise ValueError("multinomial likelihood requires non-negative features")
        d = X.shape[1]
        totals = np.vstack([X[y == c].sum(axis=0) for c in range(2)])
        feature_log_prob = np.log(totals + 1.0) - np.log(
            totals.sum(axis=1, keepdims=True) + d
        )

    return NaiveBayesModel(
        likelihood=likelihood,
        log_prior=log_prior,
        means=means,
        variances=variances,
        feature_log_prob=feature_log_prob,
        hyperparameters={"likelihood": likelihood},
        fingerprint=_fingerprint(X, y, None, "naive_bayes", likelihood),
    )


# ---------------------------------------------------------------------------
# k nearest neighbors
# ---------------------------------------------------------------------------

def _pairwise_distances(queries: np.ndarray, references: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        qq = (queries ** 2).sum(axis=1)[:, None]
        rr = (references ** 2).sum(axis=1)[None, :]
        d2 = np.maximum(qq + rr - 2.0 * queries @ references.T, 0.0)
        return np.sqrt(d2)
    if metric == "cosine":
        qn = np.linalg.norm(queries, axis=1)
        rn = np.linalg.norm(references, axis=1)
        sim = queries @ references.T
        denom = qn[:, None] * rn[None, :]
        sim = np.divide(sim, denom, out=np.zeros_like(sim), where=denom > 0)
        return 1.0 - sim
    raise ValueError(f"unknown metric '{metric}'")


@dataclass
class KnnModel:
    X_train: np.ndarray
    y_train: np.ndarray
    k: int
    metric: str
    hyperparameters: dict
    fingerprint: str
    algorithm: str = "knn"

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        distances = _pairwise_distances(X, self.X_train, self.metric)
        out = np.empty(X.shape[0], dtype=int)
        for i in range(X.shape[0]):
            # stable sort: distance ties resolve by training-set order
            nearest = np.argsort(distances[i], kind="stable")[: self.k]
            votes = int(self.y_train[nearest].sum())
            if 2 * votes > self.k:
                out[i] = 1
            elif 2 * votes < self.k:
                out[i] = 0
            else:
                out[i] = int(self.y_train[nearest[0]])  # vote tie -> nearest neighbor
        return out


def train_knn(train: FeatureMatrix, k: int, metric: str = "euclidean") -> KnnModel:
    if not 1 <= k <= train.y.size:
        raise ValueError("k must be in [1, len(train)]")
    _check_finite(train.X)
    return KnnModel(
        X_train=train.X,
        y_train=train.y,
        k=k,
        metric=metric,
        hyperparameters={"k": k, "metric": metric},
        fingerprint=_fingerprint(train.X, train.y, None, "knn", (k, metric)),
    )


def knn_predict(
    train: FeatureMatrix,
    query: Sequence[float],
    k: int,
    metric: str = "euclidean",
) -> Label:
    """Majority label among the k nearest training instances."""
    model = train_knn(train, k, metric)
    return Label(int(model.predict(np.asarray(query, dtype=float)[None, :])[0]))


def select_knn_k(
    X: np.ndarray,
    y: np.ndarray,
    hyper: KnnHyper,
    seed: int,
    metric: str = "euclidean",
    inner_folds: int = 3,
) -> int:
    """Nested grid selection of k on the training split only."""
    candidates = [k for k in hyper.grid if k <= max(1, y.size - max(2, y.size // inner_folds))]
    if not candidates:
        candidates = [1]
    class_min = min(int((y == 0).sum()), int((y == 1).sum()))
    folds_n = min(inner_folds, max(2, class_min))
    if y.size < folds_n or class_min == 0:
        return candidates[0]
    assignment = np.array(stratified_fold_indices(list(y), folds_n, seed))
    scores = {k: [] for k in candidates}
    for fold in range(folds_n):
        test_mask = assignment == fold
        X_tr, y_tr = X[~test_mask], y[~test_mask]
        X_te, y_te = X[test_mask], y[test_mask]
        for k in candidates:
            if k > y_tr.size:
                scores[k].append(0.0)
                continue
            model = train_knn(FeatureMatrix(X_tr, y_tr), k, metric)
            scores[k].append(f1_score(model.predict(X_te), y_te))
    # best mean score; ties prefer the smaller k
    return max(candidates, key=lambda k: (sum(scores[k]) / len(scores[k]), -k))


# ---------------------------------------------------------------------------
# Linear SVM (primal subgradient descent on hinge loss + L2)
# ---------------------------------------------------------------------------

@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    hyperparameters: dict
    fingerprint: str
    algorithm: str = "linear_svm"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)


def train_linear_svm(
    train: FeatureMatrix,
    hyper: SvmHyper | None = None,
    seed: int = 0,
) -> LinearSvmModel:
    """Pegasos-style stochastic subgradient descent, lambda = 1 / (C n).

    The bias term is updated without regularization; the weight vector is
    projected onto the ball of radius 1/sqrt(lambda) for stability.
    """
    hyper = hyper or SvmHyper()
    _require_nonempty(train.y)
    _check_finite(train.X)
    X, y = train.X, train.y
    n, d = X.shape
    targets = 2.0 * y - 1.0
    lam = 1.0 / (hyper.C * n)
    radius = 1.0 / math.sqrt(lam)
    w = np.zeros(d)
    b = 0.0
    t = 0
    rng = np.random.default_rng(derive_seed(seed))
    for _ in range(hyper.epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = targets[i] * (X[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * targets[i] * X[i]
                b += eta * targets[i]
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
    return LinearSvmModel(
        weights=w,
        bias=b,
        hyperparameters={**asdict(hyper), "seed": seed},
        fingerprint=_fingerprint(X, y, seed, "linear_svm", hyper),
    )


# ---------------------------------------------------------------------------
# Multi-layer perceptron
# ---------------------------------------------------------------------------

def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    expz = np.exp(z[~positive])
    out[~positive] = expz / (1.0 + expz)
    return out


def mlp_loss_and_grad(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    X: np.ndarray,
    y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy (computed from logits) and its exact gradients.

    tanh hidden layers, logistic output.  Exposed at module level so the
    analytic gradients can be checked against finite differences.
    """
    n = X.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught via the loss
        activations = [np.asarray(X, dtype=float)]
        for W, b in zip(weights[:-1], biases[:-1]):
            activations.append(np.tanh(activations[-1] @ W + b))
        logits = (activations[-1] @ weights[-1] + biases[-1])[:, 0]
        # log(1 + e^z) - y z, stable for large |z|
        loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))

    delta = ((_sigmoid(logits) - y) / n)[:, None]
    grad_w: list[np.ndarray] = [np.empty(0)] * len(weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (1.0 - activations[layer] ** 2)
    return loss, grad_w, grad_b


def _mlp_init(sizes: Sequence[int], rng: np.random.Generator):
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hyperparameters: dict
    fingerprint: str
    algorithm: str = "mlp"

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(X, dtype=float)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ W + b)
        return _sigmoid((a @ self.weights[-1] + self.biases[-1])[:, 0])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) > 0.5).astype(int)


def train_mlp(
    train: FeatureMatrix,
    hyper: MlpHyper | None = None,
    seed: int = 0,
) -> MlpModel:
    """Full-batch gradient descent on cross-entropy; expects standardized inputs."""
    hyper = hyper or MlpHyper()
    _require_nonempty(train.y)
    _check_finite(train.X)
    X = train.X
    y = train.y.astype(float)
    sizes = [X.shape[1], *hyper.hidden_layers, 1]
    rng = np.random.default_rng(derive_seed(seed))
    weights, biases = _mlp_init(sizes, rng)
    for epoch in range(hyper.epochs):
        loss, grad_w, grad_b = mlp_loss_and_grad(weights, biases, X, y)
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss {loss!r} at epoch {epoch} "
                f"(lr={hyper.learning_rate}, layers={hyper.hidden_layers})"
            )
        for layer in range(len(weights)):
            weights[layer] -= hyper.learning_rate * grad_w[layer]
            biases[layer] -= hyper.learning_rate * grad_b[layer]
    return MlpModel(
        weights=weights,
        biases=biases,
        hyperparameters={**asdict(hyper), "seed": seed},
        fingerprint=_fingerprint(X, train.y, seed, "mlp", hyper),
    )


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def _as_int_labels(values) -> np.ndarray:
    return np.asarray([v.value if isinstance(v, Label) else int(v) for v in values])


def f1_score(predictions, truth, positive: int | Label = 1) -> float:
    """Positive-class F1; defined as 0 when precision + recall is 0."""
    preds = _as_int_labels(predictions)
    true = _as_int_labels(truth)
    if preds.shape != true.shape:
        raise ValueError("predictions and truth must have equal length")
    positive = positive.value if isinstance(positive, Label) else int(positive)
    tp = int(((preds == positive) & (true == positive)).sum())
    fp = int(((preds == positive) & (true != positive)).sum())
    fn = int(((preds != positive) & (true == positive)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def macro_f1(predictions, truth) -> float:
    return 0.5 * (f1_score(predictions, truth, 1) + f1_score(predictions, truth, 0))


def significance_pvalue(n_correct: int, n_total: int, p_dominant: float) -> float:
    """Upper-tail binomial probability of at least n_correct chance successes.

    Summed in log space so small tails stay accurate for large n_total.
    """
    if not 0 <= n_correct <= n_total:
        raise ValueError("n_correct must lie in [0, n_total]")
    if not 0.0 < p_dominant < 1.0:
        raise ValueError("p_dominant must lie strictly between 0 and 1")
    if n_correct == 0:
        return 1.0
    log_p = math.log(p_dominant)
    log_q = math.log1p(-p_dominant)
    log_terms = [
        math.lgamma(n_total + 1)
        - math.lgamma(k + 1)
        - math.lgamma(n_total - k + 1)
        + k * log_p
        + (n_total - k) * log_q
        for k in range(n_correct, n_total + 1)
    ]
    peak = max(log_terms)
    tail = peak + math.log(math.fsum(math.exp(term - peak) for term in log_terms))
    return min(1.0, math.exp(tail))


# ---------------------------------------------------------------------------
# Cross-validation protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexityFeatures:
    language: str = "pt"
    include_title: bool = False
    family: str = "complexity"


@dataclass(frozen=True)
class TfidfFeatures:
    language: str = "pt"
    selector: FieldSelector = FieldSelector.ABSTRACT
    top_x: int = 1100
    mode: VectorMode = VectorMode.TFIDF
    idf_variant: IdfVariant = IdfVariant.LOG_RATIO
    per_fold_vocabulary: bool = True
    family: str = "tfidf"


def _config_echo(feature_config, algorithm, k, n_resamples, base_seed, hyper) -> dict:
    features = {}
    for key, value in asdict(feature_config).items():
        features[key] = value.value if hasattr(value, "value") else value
    return {
        "algorithm": algorithm,
        "features": features,
        "k_folds": k,
        "n_resamples": n_resamples,
        "base_seed": base_seed,
        "hyperparameters": repr(hyper) if hyper is not None else "default",
    }


@dataclass
class EvalReport:
    algorithm: str
    per_run_f1: tuple[float, ...]
    mean_f1: float
    sd_f1: float
    per_run_macro_f1: tuple[float, ...]
    mean_macro_f1: float
    pooled_f1: float
    n_correct_total: int
    n_total: int
    p_dominant: float
    p_value: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "per_run_f1": list(self.per_run_f1),
            "mean_f1": self.mean_f1,
            "sd_f1": self.sd_f1,
            "per_run_macro_f1": list(self.per_run_macro_f1),
            "mean_macro_f1": self.mean_macro_f1,
            "pooled_f1": self.pooled_f1,
            "n_correct_total": self.n_correct_total,
            "n_total": self.n_total,
            "p_dominant": self.p_dominant,
            "p_value": self.p_value,
            "config": self.config,
        }


def _default_hyper(algorithm: str):
    return {
        "dtree": TreeHyper(),
        "random_forest": ForestHyper(),
        "knn": KnnHyper(),
        "naive_bayes": None,
        "linear_svm": SvmHyper(),
        "mlp": MlpHyper(),
    }[algorithm]


def _train_for_cell(algorithm, X, y, hyper, seed, feature_family, knn_seed):
    matrix = FeatureMatrix(X, y)
    if algorithm == "dtree":
        return train_decision_tree(matrix, hyper)
    if algorithm == "random_forest":
        return train_random_forest(matrix, hyper, seed)
    if algorithm == "naive_bayes":
        likelihood = "gaussian" if feature_family == "complexity" else "multinomial"
        return train_naive_bayes(matrix, likelihood)
    if algorithm == "knn":
        metric = hyper.metric or ("cosine" if feature_family == "tfidf" else "euclidean")
        if hyper.k is not None:
            k_value = hyper.k
        else:
            k_value = select_knn_k(X, y, hyper, knn_seed, metric)
        return train_knn(matrix, min(k_value, y.size), metric)
    if algorithm == "linear_svm":
        return train_linear_svm(matrix, hyper, seed)
    if algorithm == "mlp":
        return train_mlp(matrix, hyper, seed)
    raise ValueError(f"unknown algorithm '{algorithm}'")


def cross_validate(
    labeled: Sequence[tuple[GrantRecord, Label]],
    feature_config: ComplexityFeatures | TfidfFeatures,
    algorithm: str,
    k: int = 10,
    n_resamples: int = 10,
    base_seed: int = 0,
    hyper=None,
    lexicons: LexiconSet | None = None,
) -> EvalReport:
    """Balanced-resample x stratified k-fold evaluation of one algorithm.

    Per-run F1 values are collected resample-major, fold order within, so the
    report is bit-reproducible for a given base seed.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm '{algorithm}' (expected one of {ALGORITHMS})")
    if hyper is None:
        hyper = _default_hyper(algorithm)

    records = [record for record, _ in labeled]
    if feature_config.family == "complexity":
        raw_rows = complexity_rows(
            records, feature_config.language, lexicons, feature_config.include_title
        )
        token_lists = None
        global_vocab = None
    else:
        token_lists = [
            field_tokens(record, feature_config.selector, feature_config.language)
            for record in records
        ]
        raw_rows = None
        global_vocab = None
        if not feature_config.per_fold_vocabulary:
            global_vocab = fit_vocabulary_from_tokens(token_lists, feature_config.top_x)

    per_run_f1: list[float] = []
    per_run_macro: list[float] = []
    pooled_preds: list[int] = []
    pooled_truth: list[int] = []
    n_correct = 0
    n_total = 0
    label_counts: Counter[int] = Counter()

    for r in range(n_resamples):
        dataset = balanced_resample(labeled, derive_seed(base_seed, _SALT_RESAMPLE, r))
        y_ds = np.array([label.value for _, label in dataset.instances])
        source = np.array(dataset.source_indices)
        assignment = np.array(
            stratified_fold_indices(list(y_ds), k, derive_seed(base_seed, _SALT_FOLD, r))
        )
        for fold in range(k):
            test_mask = assignment == fold
            train_rows = source[~test_mask]
            test_rows = source[test_mask]
            y_train = y_ds[~test_mask]
            y_test = y_ds[test_mask]

            if feature_config.family == "complexity":
                medians = fit_median_imputer(raw_rows[train_rows])
                X_train = apply_imputer(raw_rows[train_rows], medians)
                X_test = apply_imputer(raw_rows[test_rows], medians)
                if algorithm in STANDARDIZED_ALGORITHMS:
                    mean, std = fit_standardizer(X_train)
                    X_train = apply_standardizer(X_train, mean, std)
                    X_test = apply_standardizer(X_test, mean, std)
            else:
                X_train, X_test, _ = tfidf_fold_matrices(
                    token_lists,
                    train_rows,
                    test_rows,
                    feature_config.top_x,
                    feature_config.mode,
                    feature_config.idf_variant,
                    vocabulary=global_vocab,
                )

            model = _train_for_cell(
                algorithm,
                X_train,
                y_train,
                hyper,
                derive_seed(base_seed, _SALT_TRAIN, r, fold),
                feature_config.family,
                derive_seed(base_seed, _SALT_KNN, r, fold),
            )
            predictions = model.predict(X_test)
            per_run_f1.append(f1_score(predictions, y_test))
            per_run_macro.append(macro_f1(predictions, y_test))
            n_correct += int((predictions == y_test).sum())
            n_total += int(y_test.size)
            label_counts.update(int(v) for v in y_test)
            pooled_preds.extend(int(v) for v in predictions)
            pooled_truth.extend(int(v) for v in y_test)

    mean_f1 = float(np.mean(per_run_f1))
    sd_f1 = float(np.sqrt(np.mean((np.array(per_run_f1) - mean_f1) ** 2)))
    p_dominant = max(label_counts.values()) / n_total
    return EvalReport(
        algorithm=algorithm,
        per_run_f1=tuple(per_run_f1),
        mean_f1=mean_f1,
        sd_f1=sd_f1,
        per_run_macro_f1=tuple(per_run_macro),
        mean_macro_f1=float(np.mean(per_run_macro)),
        pooled_f1=f1_score(pooled_preds, pooled_truth),
        n_correct_total=n_correct,
        n_total=n_total,
        p_dominant=p_dominant,
        p_value=significance_pvalue(n_correct, n_total, p_dominant),
        config=_config_echo(feature_config, algorithm, k, n_resamples, base_seed, hyper),
    )


# ---------------------------------------------------------------------------
# Relevance protocol (one forest per balanced resample)
# ---------------------------------------------------------------------------

def relevance_over_resamples(
    labeled: Sequence[tuple[GrantRecord, Label]],
    language: str = "pt",
    lexicons: LexiconSet | None = None,
    include_title: bool = False,
    n_resamples: int = 10,
    base_seed: int = 0,
    forest_hyper: ForestHyper | None = None,
    weighting: str = "node_mean",
    alpha: float = 0.05,
) -> tuple[list[RankingRow], FeatureRelevanceReport, list[FeatureRelevanceReport]]:
    """Train one forest per balanced resample on complexity features and rank.

    Resample seeds match those used by :func:`cross_validate` for the same
    base seed, so relevance runs line up with evaluation runs.
    """
    records = [record for record, _ in labeled]
    raw_rows = complexity_rows(records, language, lexicons, include_title)
    names = COMPLEXITY_SCHEMA.names()
    reports = []
    for r in range(n_resamples):
        dataset = balanced_resample(labeled, derive_seed(base_seed, _SALT_RESAMPLE, r))
        rows = raw_rows[list(dataset.source_indices)]
        medians = fit_median_imputer(rows)
        X = apply_imputer(rows, medians)
        y = np.array([label.value for _, label in dataset.instances])
        forest = train_random_forest(
            FeatureMatrix(X, y, feature_names=names),
            forest_hyper,
            seed=derive_seed(base_seed, _SALT_TRAIN, r),
        )
        reports.append(feature_importance(forest, names, weighting))
    ranking = average_rank(reports)
    aggregated = aggregate_relevance(reports)
    if n_resamples >= 2:
        aggregated.critical_difference = critical_difference(
            [row.average_rank for row in ranking], n_resamples, alpha
        )
    return ranking, aggregated, reports
