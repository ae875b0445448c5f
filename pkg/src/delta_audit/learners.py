"""Desk-scale classifiers used to construct A/B update pairs.

Four families, all trained from scratch on numpy:

* ``logreg``   -- multinomial softmax regression, gradient descent with
  backtracking line search and an L2 penalty.
* ``knn``      -- exact k-nearest-neighbour voting, uniform or distance
  weighted; a ``scan_order`` knob changes only the internal scan direction
  (a provably cosmetic update).
* ``forest``   -- random forest of Gini trees with bootstrap sampling and
  per-node feature subsampling.
* ``gbstumps`` -- one-vs-rest gradient boosting of shallow regression trees
  on per-class log-odds (depth 1 or 2).

Every family is deterministic given its spec and seed: fitting twice
reproduces identical parameters and identical scores.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class LearnerError(ValueError):
    """Invalid learner specification or fit/score misuse."""


# (has_margin, has_probability) per family; margin families expose raw
# additive scores, probability families expose normalized vote shares.
FAMILY_CAPABILITIES = {
    "logreg": (True, True),
    "knn": (False, True),
    "forest": (False, True),
    "gbstumps": (True, True),
}

_DEFAULTS = {
    "logreg": {"l2_strength": 1.0, "max_iterations": 500, "learning_rate": 1.0},
    "knn": {"k": 5, "weighting": "uniform", "scan_order": "forward"},
    "forest": {"n_trees": 50, "max_depth": None, "feature_rule": "sqrt", "seed": 0},
    "gbstumps": {"n_rounds": 50, "learning_rate": 0.1, "max_depth": 1},
}


@dataclass(frozen=True)
class LearnerSpec:
    """A learner family plus its hyperparameter map."""

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILY_CAPABILITIES:
            raise LearnerError(f"unknown family {self.family!r}; choose from {sorted(FAMILY_CAPABILITIES)}")
        merged = dict(_DEFAULTS[self.family])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise LearnerError(f"{self.family}: unknown hyperparameters {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        self._validate()

    def _validate(self):
        p = self.params
        fam = self.family
        if fam == "logreg":
            if p["l2_strength"] <= 0 or p["learning_rate"] <= 0 or p["max_iterations"] <= 0:
                raise LearnerError("logreg hyperparameters must be positive")
        elif fam == "knn":
            if p["k"] <= 0:
                raise LearnerError("knn k must be positive")
            if p["weighting"] not in ("uniform", "distance"):
                raise LearnerError(f"knn weighting must be uniform|distance, got {p['weighting']!r}")
            if p["scan_order"] not in ("forward", "reverse"):
                raise LearnerError(f"knn scan_order must be forward|reverse, got {p['scan_order']!r}")
        elif fam == "forest":
            if p["n_trees"] <= 0:
                raise LearnerError("forest n_trees must be positive")
            if p["max_depth"] is not None and p["max_depth"] < 0:
                raise LearnerError("forest max_depth must be None or >= 0")
            if p["feature_rule"] not in ("sqrt", "log2", "all"):
                raise LearnerError(f"forest feature_rule must be sqrt|log2|all, got {p['feature_rule']!r}")
        elif fam == "gbstumps":
            # n_rounds 0 is allowed: the model then scores with class priors only
            if p["n_rounds"] < 0 or p["learning_rate"] <= 0:
                raise LearnerError("gbstumps needs n_rounds >= 0 and learning_rate > 0")
            if not 1 <= p["max_depth"] <= 2:
                raise LearnerError("gbstumps max_depth must be 1 or 2")


@dataclass(frozen=True)
class TrainedModel:
    spec: LearnerSpec
    classes: int
    state: Any

    @property
    def has_margin(self) -> bool:
        return FAMILY_CAPABILITIES[self.spec.family][0]

    @property
    def has_probability(self) -> bool:
        return FAMILY_CAPABILITIES[self.spec.family][1]


# ---------------------------------------------------------------------------
# logreg
# ---------------------------------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class _LogregState:
    weights: np.ndarray   # (d, C)
    intercept: np.ndarray  # (C,)
    converged: bool
    iterations: int


def _fit_logreg(spec: LearnerSpec, X: np.ndarray, y: np.ndarray, C: int) -> _LogregState:
    lam = float(spec.params["l2_strength"])
    max_iter = int(spec.params["max_iterations"])
    step0 = float(spec.params["learning_rate"])
    n, d = X.shape
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    W = np.zeros((d, C))
    b = np.zeros(C)

    def loss_grad(W, b):
        logits = X @ W + b
        P = _softmax(logits)
        # clip only inside the loss; the gradient uses raw P
        ll = -np.log(np.clip(P[np.arange(n), y], 1e-300, None)).mean()
        loss = ll + 0.5 * lam * float((W * W).sum())
        G = X.T @ (P - Y) / n + lam * W
        gb = (P - Y).mean(axis=0)
        return loss, G, gb

    loss, G, gb = loss_grad(W, b)
    it = 0
    converged = False
    while it < max_iter:
        gnorm = math.sqrt(float((G * G).sum()) + float((gb * gb).sum()))
        if gnorm <= 1e-6:
            converged = True
            break
        step = step0
        # Armijo backtracking on the joint (W, b) gradient step
        for _ in range(40):
            W2 = W - step * G
            b2 = b - step * gb
            loss2, G2, gb2 = loss_grad(W2, b2)
            if loss2 <= loss - 1e-4 * step * gnorm * gnorm:
                break
            step *= 0.5
        W, b, loss, G, gb = W2, b2, loss2, G2, gb2
        it += 1
    else:
        gnorm = math.sqrt(float((G * G).sum()) + float((gb * gb).sum()))
        converged = gnorm <= 1e-6
    if not converged:
        warnings.warn(f"logreg did not reach gradient tolerance in {max_iter} iterations", RuntimeWarning)
    return _LogregState(weights=W, intercept=b, converged=converged, iterations=it)


# ---------------------------------------------------------------------------
# knn
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _KnnState:
    X: np.ndarray
    y: np.ndarray


def _knn_scores(state: _KnnState, spec: LearnerSpec, X: np.ndarray, C: int) -> np.ndarray:
    k = int(spec.params["k"])
    weighting = spec.params["weighting"]
    n_train = state.X.shape[0]
    scan = np.arange(n_train)
    if spec.params["scan_order"] == "reverse":
        scan = scan[::-1]
    # scan order only changes the evaluation sequence; sorting by
    # (distance, original index) makes the neighbour set identical either way
    Xt = state.X[scan]
    out = np.zeros((X.shape[0], C))
    for i, x in enumerate(X):
        d2 = ((Xt - x) ** 2).sum(axis=1)
        order = np.lexsort((scan, d2))
        nearest = scan[order[:k]]
        dist = np.sqrt(d2[order[:k]])
        if weighting == "uniform":
            w = np.full(k, 1.0 / k)
        else:
            exact = dist == 0.0
            if exact.any():
                w = exact / exact.sum()
            else:
                w = 1.0 / dist
                w = w / w.sum()
        np.add.at(out[i], state.y[nearest], w)
    return out


# ---------------------------------------------------------------------------
# forest
# ---------------------------------------------------------------------------


@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None
    distribution: np.ndarray | None = None  # set on leaves


@dataclass(frozen=True)
class _Tree:
    root: _TreeNode
    node_feature_counts: tuple[int, ...]  # candidate features considered per split search


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


def _best_split(X, y, rows, feats, C):
    """Best (impurity decrease, feature, threshold); ties go to the lowest
    feature index, then the lowest threshold."""
    parent_counts = np.bincount(y[rows], minlength=C)
    n = rows.size
    parent_imp = _gini(parent_counts)
    best = None
    for f in feats:
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        labels = y[rows][order]
        cuts = np.flatnonzero(vs[1:] > vs[:-1]) + 1
        if cuts.size == 0:
            continue
        onehot = np.zeros((n, C))
        onehot[np.arange(n), labels] = 1.0
        prefix = onehot.cumsum(axis=0)
        left = prefix[cuts - 1]
        right = parent_counts - left
        nl = cuts.astype(float)
        nr = n - nl
        pl = left / nl[:, None]
        pr = right / nr[:, None]
        imp = (nl * (1.0 - (pl * pl).sum(axis=1)) + nr * (1.0 - (pr * pr).sum(axis=1))) / n
        pos = int(np.argmin(imp))
        gain = parent_imp - float(imp[pos])
        if gain > 1e-15 and (best is None or gain > best[0] + 1e-15):
            cut = cuts[pos]
            thr = 0.5 * (vs[cut - 1] + vs[cut])
            best = (gain, int(f), float(thr))
    return best


def _grow_tree(X, y, rows, depth, max_depth, n_candidates, rng, C, counts_out):
    node = _TreeNode()
    labels = y[rows]
    if (
        (max_depth is not None and depth >= max_depth)
        or rows.size < 2
        or np.all(labels == labels[0])
    ):
        node.distribution = np.bincount(labels, minlength=C) / rows.size
        return node
    d = X.shape[1]
    feats = np.sort(rng.choice(d, size=min(n_candidates, d), replace=False))
    counts_out.append(int(feats.size))
    best = _best_split(X, y, rows, feats, C)
    if best is None:
        node.distribution = np.bincount(labels, minlength=C) / rows.size
        return node
    _, f, thr = best
    mask = X[rows, f] < thr
    node.feature = f
    node.threshold = thr
    node.left = _grow_tree(X, y, rows[mask], depth + 1, max_depth, n_candidates, rng, C, counts_out)
    node.right = _grow_tree(X, y, rows[~mask], depth + 1, max_depth, n_candidates, rng, C, counts_out)
    return node


def _tree_scores(node: _TreeNode, X: np.ndarray, C: int) -> np.ndarray:
    out = np.empty((X.shape[0], C))
    for i, x in enumerate(X):
        cur = node
        while cur.distribution is None:
            cur = cur.left if x[cur.feature] < cur.threshold else cur.right
        out[i] = cur.distribution
    return out


@dataclass(frozen=True)
class _ForestState:
    trees: tuple[_Tree, ...]


def _candidate_count(rule: str, d: int) -> int:
    if rule == "all":
        return d
    if rule == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    return max(1, math.ceil(math.log2(d)))


def _fit_forest(spec: LearnerSpec, X, y, C) -> _ForestState:
    p = spec.params
    n = X.shape[0]
    n_candidates = _candidate_count(p["feature_rule"], X.shape[1])
    seeds = np.random.SeedSequence(int(p["seed"])).spawn(int(p["n_trees"]))
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, n, size=n)
        counts: list[int] = []
        root = _grow_tree(X, y, boot, 0, p["max_depth"], n_candidates, rng, C, counts)
        trees.append(_Tree(root=root, node_feature_counts=tuple(counts)))
    return _ForestState(trees=tuple(trees))


def _forest_scores(state: _ForestState, X, C) -> np.ndarray:
    acc = np.zeros((X.shape[0], C))
    for tree in state.trees:
        acc += _tree_scores(tree.root, X, C)
    return acc / len(state.trees)


# ---------------------------------------------------------------------------
# gbstumps
# ---------------------------------------------------------------------------


@dataclass
class _RegNode:
    feature: int = -1
    threshold: float = 0.0
    left: "_RegNode | None" = None
    right: "_RegNode | None" = None
    value: float | None = None


def _best_reg_split(X, rows, grad):
    """Squared-error split on the gradient targets, same tie rules as forest."""
    g = grad[rows]
    n = rows.size
    total = g.sum()
    base = float((g * g).sum()) - total * total / n
    best = None
    for f in range(X.shape[1]):
        v = X[rows, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        gs = g[order]
        cuts = np.flatnonzero(vs[1:] > vs[:-1]) + 1
        if cuts.size == 0:
            continue
        prefix = gs.cumsum()
        sq_prefix = (gs * gs).cumsum()
        nl = cuts.astype(float)
        sl = prefix[cuts - 1]
        ql = sq_prefix[cuts - 1]
        nr = n - nl
        sr = total - sl
        qr = sq_prefix[-1] - ql
        sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        pos = int(np.argmin(sse))
        gain = base - float(sse[pos])
        if gain > 1e-15 and (best is None or gain > best[0] + 1e-15):
            cut = cuts[pos]
            thr = 0.5 * (vs[cut - 1] + vs[cut])
            best = (gain, f, float(thr))
    return best


def _grow_reg_tree(X, rows, grad, hess, depth, max_depth, lr):
    node = _RegNode()
    if depth >= max_depth or rows.size < 2:
        node.value = _newton_leaf(rows, grad, hess, lr)
        return node
    best = _best_reg_split(X, rows, grad)
    if best is None:
        node.value = _newton_leaf(rows, grad, hess, lr)
        return node
    _, f, thr = best
    mask = X[rows, f] < thr
    node.feature = f
    node.threshold = thr
    node.left = _grow_reg_tree(X, rows[mask], grad, hess, depth + 1, max_depth, lr)
    node.right = _grow_reg_tree(X, rows[~mask], grad, hess, depth + 1, max_depth, lr)
    return node


def _newton_leaf(rows, grad, hess, lr) -> float:
    h = hess[rows].sum()
    if h < 1e-12:
        return 0.0
    return lr * float(grad[rows].sum() / h)


def _reg_predict(node: _RegNode, X) -> np.ndarray:
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        cur = node
        while cur.value is None:
            cur = cur.left if x[cur.feature] < cur.threshold else cur.right
        out[i] = cur.value
    return out


@dataclass(frozen=True)
class _GbState:
    priors: np.ndarray                      # (C,) initial log-odds
    rounds: tuple[tuple[_RegNode, ...], ...]  # per round, one tree per class


def _fit_gbstumps(spec: LearnerSpec, X, y, C) -> _GbState:
    p = spec.params
    n = X.shape[0]
    lr = float(p["learning_rate"])
    max_depth = int(p["max_depth"])
    prior_p = np.bincount(y, minlength=C) / n
    prior_p = np.clip(prior_p, 1e-9, 1 - 1e-9)
    priors = np.log(prior_p / (1 - prior_p))
    F = np.tile(priors, (n, 1))
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    rounds = []
    all_rows = np.arange(n)
    for _ in range(int(p["n_rounds"])):
        P = 1.0 / (1.0 + np.exp(-F))
        grad = Y - P
        hess = P * (1.0 - P)
        per_class = []
        for c in range(C):
            tree = _grow_reg_tree(X, all_rows, grad[:, c], hess[:, c], 0, max_depth, lr)
            F[:, c] += _reg_predict(tree, X)
            per_class.append(tree)
        rounds.append(tuple(per_class))
    return _GbState(priors=priors, rounds=tuple(rounds))


def _gb_margins(state: _GbState, X, C) -> np.ndarray:
    F = np.tile(state.priors, (X.shape[0], 1))
    for per_class in state.rounds:
        for c, tree in enumerate(per_class):
            F[:, c] += _reg_predict(tree, X)
    return F


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------


def fit(spec: LearnerSpec, X_train: np.ndarray, y_train: np.ndarray) -> TrainedModel:
    """Train one model; deterministic for a fixed spec (and seed, for forest)."""
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise LearnerError("X_train must be 2-d with matching y_train length")
    C = int(y.max()) + 1
    counts = np.bincount(y, minlength=C)
    if (counts == 0).any():
        raise LearnerError("every class in [0, C) needs at least one training sample")
    fam = spec.family
    if fam == "knn" and spec.params["k"] > X.shape[0]:
        raise LearnerError(f"knn k={spec.params['k']} exceeds training size {X.shape[0]}")
    if fam == "logreg":
        state = _fit_logreg(spec, X, y, C)
    elif fam == "knn":
        state = _KnnState(X=X.copy(), y=y.copy())
    elif fam == "forest":
        state = _fit_forest(spec, X, y, C)
    else:
        state = _fit_gbstumps(spec, X, y, C)
    return TrainedModel(spec=spec, classes=C, state=state)


def decision_scores(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Native n-by-C score matrix: margins for margin families, vote/leaf
    probabilities otherwise."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise LearnerError("X must be 2-d")
    fam = model.spec.family
    if fam == "logreg":
        st = model.state
        if X.shape[1] != st.weights.shape[0]:
            raise LearnerError(f"expected {st.weights.shape[0]} features, got {X.shape[1]}")
        return X @ st.weights + st.intercept
    if fam == "knn":
        if X.shape[1] != model.state.X.shape[1]:
            raise LearnerError(f"expected {model.state.X.shape[1]} features, got {X.shape[1]}")
        return _knn_scores(model.state, model.spec, X, model.classes)
    if fam == "forest":
        return _forest_scores(model.state, X, model.classes)
    return _gb_margins(model.state, X, model.classes)


def margin_scores(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    if not model.has_margin:
        raise LearnerError(f"{model.spec.family} has no margin path")
    return decision_scores(model, X)


def probability_scores(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    if not model.has_probability:
        raise LearnerError(f"{model.spec.family} has no probability path")
    fam = model.spec.family
    if fam == "logreg":
        return _softmax(decision_scores(model, X))
    if fam in ("knn", "forest"):
        return decision_scores(model, X)
    # gbstumps: one-vs-rest sigmoids, normalized to a distribution
    F = decision_scores(model, X)
    S = 1.0 / (1.0 + np.exp(-F))
    total = S.sum(axis=1, keepdims=True)
    uniform = np.full_like(S, 1.0 / S.shape[1])
    with np.errstate(invalid="ignore"):
        P = np.where(total > 0, S / np.where(total > 0, total, 1.0), uniform)
    return P


def predict(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Argmax over the preferred score path; ties go to the lowest class."""
    scores = decision_scores(model, X)
    return np.argmax(scores, axis=1).astype(np.int64)
