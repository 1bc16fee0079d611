"""Random forests over the labeled part of a domain.

The grower is a small, fully deterministic CART implementation: given the
same domain, parameters, and :class:`~treealign.core.RngConfig`, the same
forest is produced regardless of thread count or platform.  Determinism
rules: candidate features are scanned in ascending index order, split
thresholds are midpoints between adjacent distinct values, and a candidate
replaces the incumbent only on strictly greater gain (so the lowest
feature index / lowest threshold wins ties).
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DataValidationError, LabeledDomain, RngConfig

_MAGIC = b"FSTA"
_VERSION = 1

# Relative gain threshold: splits must beat the parent score by more than
# this fraction of the node weight to be accepted.
_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class ForestParams:
    """Hyperparameters for :func:`train_forest`.

    ``max_features=None`` selects ``ceil(sqrt(d))`` candidates per node;
    ``max_depth=None`` grows trees to purity.
    """

    n_trees: int = 100
    max_features: int | None = None
    min_leaf: int = 1
    max_depth: int | None = None

    def __post_init__(self):
        if self.n_trees < 10:
            raise DataValidationError("n_trees must be at least 10")
        if self.max_features is not None and self.max_features < 1:
            raise DataValidationError("max_features must be positive")
        if self.min_leaf < 1:
            raise DataValidationError("min_leaf must be at least 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise DataValidationError("max_depth must be positive")


@dataclass
class Tree:
    """Flat array encoding of one decision tree.

    ``feature[v] == -1`` marks a leaf; ``leaf_ids`` maps node id to a dense
    leaf index (or -1 for internal nodes).  ``children[v]`` holds the
    (left, right) node ids; samples with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    children: np.ndarray
    leaf_ids: np.ndarray
    leaf_class_counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return self.leaf_class_counts.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for every row of ``X``."""
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            cur = node[rows]
            x = X[rows, feat[rows]]
            go_left = x <= self.threshold[cur]
            node[rows] = np.where(go_left, self.children[cur, 0], self.children[cur, 1])
        return self.leaf_ids[node]


@dataclass
class Forest:
    """A trained forest plus the bookkeeping needed for proximity queries."""

    trees: list[Tree]
    inbag: np.ndarray            # (n_trees, n_labeled) bootstrap multiplicities
    train_leaves: np.ndarray     # (n_labeled, n_trees) leaf of each training sample
    labeled_indices: np.ndarray  # domain indices the forest was trained on
    class_count: int
    n_features: int
    importances: np.ndarray      # (n_features,) mean decrease in impurity, sums to 1
    params: ForestParams

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_labeled(self) -> int:
        return self.labeled_indices.size

    def oob_mask(self) -> np.ndarray:
        """Boolean (n_trees, n_labeled): True where the sample was out of bag."""
        return self.inbag == 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf indices, shape (n_rows, n_trees)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataValidationError(
                f"apply expects (*, {self.n_features}) features, got {X.shape}"
            )
        out = np.empty((X.shape[0], self.n_trees), dtype=np.int32)
        for t, tree in enumerate(self.trees):
            out[:, t] = tree.apply(X)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority class by averaged leaf distributions; ties pick the lowest id."""
        leaves = self.apply(X)
        probs = np.zeros((X.shape[0], self.class_count), dtype=np.float64)
        for t, tree in enumerate(self.trees):
            counts = tree.leaf_class_counts[leaves[:, t]].astype(np.float64)
            probs += counts / counts.sum(axis=1, keepdims=True)
        return probs.argmax(axis=1).astype(np.int64)

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            fh.write(
                struct.pack(
                    "<IIIII",
                    self.n_trees,
                    self.class_count,
                    self.n_features,
                    self.params.min_leaf,
                    0 if self.params.max_depth is None else self.params.max_depth,
                )
            )
            fh.write(
                struct.pack(
                    "<I",
                    0 if self.params.max_features is None else self.params.max_features,
                )
            )
            _write_array(fh, self.labeled_indices)
            _write_array(fh, self.inbag)
            _write_array(fh, self.train_leaves)
            _write_array(fh, self.importances)
            for tree in self.trees:
                _write_array(fh, tree.feature)
                _write_array(fh, tree.threshold)
                _write_array(fh, tree.children)
                _write_array(fh, tree.leaf_ids)
                _write_array(fh, tree.leaf_class_counts)

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise DataValidationError(f"{path}: not a forest file (bad magic {magic!r})")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != _VERSION:
                raise DataValidationError(f"{path}: unsupported forest version {version}")
            n_trees, class_count, n_features, min_leaf, max_depth = struct.unpack(
                "<IIIII", fh.read(20)
            )
            (max_features,) = struct.unpack("<I", fh.read(4))
            params = ForestParams(
                n_trees=n_trees,
                max_features=max_features or None,
                min_leaf=min_leaf,
                max_depth=max_depth or None,
            )
            labeled_indices = _read_array(fh)
            inbag = _read_array(fh)
            train_leaves = _read_array(fh)
            importances = _read_array(fh)
            trees = []
            for _ in range(n_trees):
                feature = _read_array(fh)
                threshold = _read_array(fh)
                children = _read_array(fh)
                leaf_ids = _read_array(fh)
                leaf_class_counts = _read_array(fh)
                trees.append(Tree(feature, threshold, children, leaf_ids, leaf_class_counts))
            if fh.read(1):
                raise DataValidationError(f"{path}: trailing bytes after forest payload")
        return cls(
            trees=trees,
            inbag=inbag,
            train_leaves=train_leaves,
            labeled_indices=labeled_indices,
            class_count=class_count,
            n_features=n_features,
            importances=importances,
            params=params,
        )


_DTYPE_CODES = {
    np.dtype("<i4"): 1,
    np.dtype("<i8"): 2,
    np.dtype("<f8"): 3,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def _write_array(fh, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    code = _DTYPE_CODES[le.dtype]
    fh.write(struct.pack("<BB", code, le.ndim))
    for s in le.shape:
        fh.write(struct.pack("<Q", s))
    fh.write(le.tobytes())


def _read_array(fh) -> np.ndarray:
    head = fh.read(2)
    if len(head) != 2:
        raise DataValidationError("truncated forest file")
    code, ndim = struct.unpack("<BB", head)
    if code not in _CODE_DTYPES:
        raise DataValidationError(f"unknown array dtype code {code}")
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = fh.read(count * dtype.itemsize)
    if len(raw) != count * dtype.itemsize:
        raise DataValidationError("truncated forest file")
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def train_forest(
    domain: LabeledDomain,
    params: ForestParams | None = None,
    rng: RngConfig | None = None,
    *,
    threads: int = 1,
) -> Forest:
    """Grow a bootstrap forest on the labeled samples of ``domain``.

    Each tree draws an independent substream from ``rng``, so results are
    identical for any ``threads`` value.
    """
    params = params or ForestParams()
    if rng is None:
        raise DataValidationError("train_forest requires an RngConfig")
    labeled = domain.labeled_indices
    if labeled.size < 2:
        raise DataValidationError("training requires at least two labeled samples")
    y = domain.labels[labeled]
    if np.unique(y).size < 2:
        raise DataValidationError("training requires at least two distinct labeled classes")
    X = domain.features[labeled]
    d = X.shape[1]
    m = params.max_features if params.max_features is not None else int(np.ceil(np.sqrt(d)))
    m = min(m, d)

    def grow(t: int):
        gen = rng.stream("forest", t)
        return _grow_tree(X, y, domain.class_count, m, params, gen)

    results: list = [None] * params.n_trees
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for t, res in enumerate(pool.map(grow, range(params.n_trees))):
                results[t] = res
    else:
        for t in range(params.n_trees):
            results[t] = grow(t)

    trees = [r[0] for r in results]
    inbag = np.stack([r[1] for r in results], axis=0)
    train_leaves = np.stack([r[2] for r in results], axis=1)
    raw_imp = np.stack([r[3] for r in results], axis=0)

    # Mean decrease in impurity: normalize per tree, average, renormalize.
    totals = raw_imp.sum(axis=1, keepdims=True)
    safe = np.where(totals > 0.0, totals, 1.0)
    mean_imp = (raw_imp / safe).mean(axis=0)
    total = mean_imp.sum()
    importances = mean_imp / total if total > 0.0 else np.full(d, 1.0 / d)

    return Forest(
        trees=trees,
        inbag=inbag,
        train_leaves=train_leaves,
        labeled_indices=labeled,
        class_count=domain.class_count,
        n_features=d,
        importances=importances,
        params=params,
    )


def _grow_tree(X, y, n_classes, max_features, params, gen):
    """Grow one tree on a bootstrap resample; returns (tree, inbag, leaves, imp)."""
    n = X.shape[0]
    d = X.shape[1]
    draws = gen.integers(0, n, size=n)
    inbag = np.bincount(draws, minlength=n).astype(np.int64)
    active = np.flatnonzero(inbag > 0)
    weights = inbag[active].astype(np.float64)

    feature: list[int] = []
    threshold: list[float] = []
    children: list[tuple[int, int]] = []
    leaf_counts: list[np.ndarray] = []
    leaf_ids: list[int] = []
    importance = np.zeros(d, dtype=np.float64)

    # Stack of (member positions into `active`, depth, slot); slot -1 is the
    # root, otherwise (parent_node, side).  LIFO with right pushed first so
    # the left child is expanded next (preorder numbering).
    stack = [(np.arange(active.size), 0, (-1, 0))]
    while stack:
        members, depth, slot = stack.pop()
        node_id = len(feature)
        if slot[0] >= 0:
            left_right = children[slot[0]]
            children[slot[0]] = (
                (node_id, left_right[1]) if slot[1] == 0 else (left_right[0], node_id)
            )

        yn = y[active[members]]
        wn = weights[members]
        w_total = wn.sum()
        counts = np.bincount(yn, weights=wn, minlength=n_classes)
        impure = int(np.count_nonzero(counts)) > 1
        at_depth_cap = params.max_depth is not None and depth >= params.max_depth
        can_split = impure and not at_depth_cap and members.size >= 2 * params.min_leaf

        best = None  # (gain, feat, thr, left_mask)
        if can_split:
            Xn = X[active[members]]
            onehot = np.zeros((members.size, n_classes), dtype=np.float64)
            onehot[np.arange(members.size), yn] = wn
            parent_score = float(np.sum(counts * counts)) / w_total
            cand = np.sort(gen.choice(d, size=max_features, replace=False))
            best = _scan_features(Xn, onehot, wn, counts, w_total, parent_score,
                                  cand, params.min_leaf)
            if best is None and max_features < d:
                rest = np.setdiff1d(np.arange(d), cand, assume_unique=False)
                best = _scan_features(Xn, onehot, wn, counts, w_total, parent_score,
                                      rest, params.min_leaf)

        if best is None:
            feature.append(-1)
            threshold.append(0.0)
            children.append((-1, -1))
            leaf_ids.append(len(leaf_counts))
            leaf_counts.append(counts)
            continue

        gain, f, thr, left_mask = best
        importance[f] += gain
        feature.append(f)
        threshold.append(thr)
        children.append((-1, -1))
        leaf_ids.append(-1)
        stack.append((members[~left_mask], depth + 1, (node_id, 1)))
        stack.append((members[left_mask], depth + 1, (node_id, 0)))

    tree = Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        children=np.array(children, dtype=np.int32).reshape(-1, 2),
        leaf_ids=np.array(leaf_ids, dtype=np.int32),
        leaf_class_counts=np.stack(leaf_counts, axis=0)
        if leaf_counts
        else np.zeros((0, n_classes)),
    )
    leaves = tree.apply(X)
    return tree, inbag, leaves, importance


def _scan_features(Xn, onehot, wn, counts, w_total, parent_score, cand_features, min_leaf):
    """Best (gain, feature, threshold, left_mask) over candidates, or None.

    Gain is the weighted Gini decrease, computed as the increase of
    sum(counts^2)/weight over the parent.  Candidates are scanned in
    ascending feature order and replace the incumbent only on strictly
    greater gain, which makes ties resolve toward the lowest feature index
    and, within a feature, the lowest threshold (first best position).
    """
    k = wn.size
    best_gain = _GAIN_EPS * w_total
    best = None
    for f in cand_features:
        v = Xn[:, int(f)]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        distinct = vs[:-1] < vs[1:]
        if not distinct.any():
            continue
        cum = np.cumsum(onehot[order], axis=0)
        cw = np.cumsum(wn[order])
        left_sq = np.sum(cum[:-1] * cum[:-1], axis=1)
        right = counts[None, :] - cum[:-1]
        right_sq = np.sum(right * right, axis=1)
        wl = cw[:-1]
        wr = w_total - wl
        pos_idx = np.arange(1, k)
        valid = distinct & (pos_idx >= min_leaf) & (k - pos_idx >= min_leaf)
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            score = left_sq / wl + right_sq / wr
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        gain = float(score[i]) - parent_score
        if gain > best_gain:
            lo, hi = vs[i], vs[i + 1]
            thr = lo + (hi - lo) / 2.0
            if thr >= hi:  # midpoint rounded up to the right value
                thr = lo
            best_gain = gain
            best = (gain, int(f), float(thr), v <= thr)
    return best
