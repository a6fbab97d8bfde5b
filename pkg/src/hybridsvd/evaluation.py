"""Data ingestion, cross-validation splits and top-n ranking metrics.

Two protocols are supported:

``standard``
    Users are split into five disjoint blocks. In each fold the users of one
    block each lose one random item, which becomes their holdout; everybody
    else's data stays in training.
``cold_start``
    Items are split into five disjoint blocks. The items of one block are
    removed from training; every cold item is ranked against all training
    users and scored on one random user who interacted with it.

MRR@n, HR@n and coverage are averaged per fold; reports carry the mean over
folds and a 95% t-interval half-width.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DataError
from .factorization import analyze, refactorize
from .model import (
    cold_item_embed,
    cold_item_users,
    cold_start_map,
    fit,
    recommend,
    top_n,
    truncate,
)
from .similarity import blend, common_neighbors
from .sparse import SparseMatrix, from_triplets_arrays

__all__ = [
    "EvalReport",
    "FactorCache",
    "HybridSVDFactory",
    "InteractionData",
    "RandomFactory",
    "SplitPlan",
    "audit_cold_start_split",
    "audit_standard_splits",
    "coverage",
    "evaluate",
    "evaluate_grid",
    "hr_at_n",
    "interactions_from_records",
    "load_interactions",
    "mrr_at_n",
    "paired_t_test",
    "split",
]

log = logging.getLogger(__name__)

SCENARIOS = ("standard", "cold_start")
N_SPLITS = 5


# -- data --------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionData:
    """Binary users x items matrix with the labels of its rows and columns."""

    user_ids: tuple
    item_ids: tuple
    matrix: SparseMatrix
    provenance: dict = field(default_factory=dict)

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def user_index(self):
        return {u: i for i, u in enumerate(self.user_ids)}

    def item_index(self):
        return {it: i for i, it in enumerate(self.item_ids)}

    def items_of(self, user):
        """Item labels of one user (by label)."""
        cols, _ = self.matrix.row_entries(self.user_index()[user])
        return [self.item_ids[c] for c in cols]

    def subset(self, users=None, items=None):
        """Restrict to the given row / column indices (order preserved)."""
        M = self.matrix
        uids, iids = self.user_ids, self.item_ids
        if users is not None:
            users = np.asarray(users, dtype=np.int64)
            M = M.select_rows(users)
            uids = tuple(uids[i] for i in users)
        if items is not None:
            items = np.asarray(items, dtype=np.int64)
            M = M.select_columns(items)
            iids = tuple(iids[i] for i in items)
        return InteractionData(uids, iids, M, dict(self.provenance))


def _kcore(rows, cols, min_user, min_item):
    keep = np.ones(rows.size, dtype=bool)
    while True:
        ucount = np.bincount(rows[keep], minlength=rows.max(initial=-1) + 1)
        icount = np.bincount(cols[keep], minlength=cols.max(initial=-1) + 1)
        bad = keep & ((ucount[rows] < min_user) | (icount[cols] < min_item))
        if not bad.any():
            return keep
        keep &= ~bad


def interactions_from_records(records, threshold=1.0, min_user=0, min_item=0, source=None):
    """Binarize ``(user, item, rating)`` records and apply iterative k-core filtering.

    Ratings at or above ``threshold`` become 1, the rest are dropped. Users
    and items are indexed in order of first appearance among kept records.
    """
    users, items = {}, {}
    pairs = set()
    for user, item, rating in records:
        if rating >= threshold:
            pairs.add((users.setdefault(user, len(users)), items.setdefault(item, len(items))))
    if not pairs:
        raise DataError("no interactions left after binarization")
    rows, cols = (np.asarray(x, dtype=np.int64) for x in zip(*sorted(pairs)))
    keep = _kcore(rows, cols, min_user, min_item)
    if not keep.any():
        raise DataError("no interactions left after k-core filtering")
    rows, cols = rows[keep], cols[keep]
    user_labels = np.array(list(users), dtype=object)
    item_labels = np.array(list(items), dtype=object)
    ukeep, rows = np.unique(rows, return_inverse=True)
    ikeep, cols = np.unique(cols, return_inverse=True)
    M = from_triplets_arrays(rows, cols, np.ones(rows.size), ukeep.size, ikeep.size)
    provenance = {"source": None if source is None else str(source), "threshold": threshold,
                  "min_user": min_user, "min_item": min_item}
    return InteractionData(tuple(user_labels[ukeep]), tuple(item_labels[ikeep]), M, provenance)


def load_interactions(path, threshold=1.0, min_user=0, min_item=0):
    """Read a ``user_id,item_id,rating[,timestamp]`` CSV file with a header row.

    See :func:`interactions_from_records` for binarization and filtering.

    Raises
    ------
    DataError
        On malformed rows (with the line number) or when nothing survives filtering.
    """
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) is None:
            raise DataError(f"{path}: empty interactions file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) not in (3, 4):
                raise DataError(f"{path}: expected 3 or 4 fields, got {len(row)}", line=lineno)
            try:
                rating = float(row[2])
            except ValueError:
                raise DataError(f"{path}: rating {row[2]!r} is not a number", line=lineno) from None
            records.append((row[0].strip(), row[1].strip(), rating))
    return interactions_from_records(records, threshold, min_user, min_item, source=path)


# -- splitting ---------------------------------------------------------------

def _keyed_rng(seed, fold, label):
    # counter-based stream keyed by (seed, fold, entity label): adding entities
    # never changes the draws of existing ones
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    key = [((int(seed) & 0xFFFFFFFF) << 32) | int(fold), int.from_bytes(digest, "little")]
    return np.random.Generator(np.random.Philox(key=key))


def _blocks(n, seed, stream, n_splits=N_SPLITS):
    perm = np.random.default_rng([int(seed), stream]).permutation(n)
    return [np.sort(b) for b in np.array_split(perm, n_splits)]


@dataclass(frozen=True)
class SplitPlan:
    """One cross-validation fold.

    ``holdout`` holds label pairs: ``(test_user, held_item)`` in the
    standard scenario and ``(cold_item, probe_user)`` in the cold start one.
    """

    fold_index: int
    seed: int
    scenario: str
    train: InteractionData
    holdout: tuple
    skipped: tuple = ()
    test_block: tuple = ()


def split(data, scenario, fold, seed=0):
    """Deterministic split for fold ``fold`` (0..4) of the given scenario."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    if not 0 <= fold < N_SPLITS:
        raise ValueError(f"fold must be in 0..{N_SPLITS - 1}, got {fold}")
    if scenario == "standard":
        return _split_standard(data, fold, seed)
    return _split_cold(data, fold, seed)


def _split_standard(data, fold, seed):
    block = _blocks(data.n_users, seed, 0)[fold]
    R = data.matrix
    holdout, skipped, drop = [], [], []
    for u in block.tolist():
        cols, _ = R.row_entries(u)
        uid = data.user_ids[u]
        if cols.size < 2:
            skipped.append(uid)
            continue
        pick = int(cols[_keyed_rng(seed, fold, uid).integers(cols.size)])
        holdout.append((uid, data.item_ids[pick]))
        drop.append(u * R.n_cols + pick)
    keys = R.row_indices * R.n_cols + R.col_indices
    keep = ~np.isin(keys, np.asarray(drop, dtype=np.int64))
    M = from_triplets_arrays(R.row_indices[keep], R.col_indices[keep], R.values[keep],
                             R.n_rows, R.n_cols)
    train = InteractionData(data.user_ids, data.item_ids, M, dict(data.provenance))
    return SplitPlan(fold, seed, "standard", train, tuple(holdout), tuple(skipped),
                     tuple(data.user_ids[u] for u in block))


def _split_cold(data, fold, seed):
    block = _blocks(data.n_items, seed, 1)[fold]
    cold = np.zeros(data.n_items, dtype=bool)
    cold[block] = True
    R = data.matrix
    warm_count = np.bincount(R.row_indices[~cold[R.col_indices]], minlength=R.n_rows)
    users = np.flatnonzero(warm_count > 0)
    train = data.subset(users=users, items=np.flatnonzero(~cold))
    in_train = np.zeros(R.n_rows, dtype=bool)
    in_train[users] = True
    Rt = R.transpose()
    holdout, skipped = [], []
    for i in block.tolist():
        iid = data.item_ids[i]
        who, _ = Rt.row_entries(i)
        who = who[in_train[who]]
        if who.size == 0:
            skipped.append(iid)
            continue
        probe = int(who[_keyed_rng(seed, fold, iid).integers(who.size)])
        holdout.append((iid, data.user_ids[probe]))
    return SplitPlan(fold, seed, "cold_start", train, tuple(holdout), tuple(skipped),
                     tuple(data.item_ids[i] for i in block))


def audit_standard_splits(data, plans):
    """Problems found in a full set of standard-scenario folds (empty if none)."""
    problems = []
    seen = {}
    for plan in plans:
        for u in plan.test_block:
            if u in seen:
                problems.append(f"user {u!r} is a test user in folds {seen[u]} and {plan.fold_index}")
            seen[u] = plan.fold_index
        size = len(plan.test_block)
        if abs(size - data.n_users / N_SPLITS) >= 1:
            problems.append(f"fold {plan.fold_index} test block has {size} users")
        held_users = [u for u, _ in plan.holdout]
        if len(set(held_users)) != len(held_users):
            problems.append(f"fold {plan.fold_index} holds out more than one item for a user")
        block = set(plan.test_block)
        train_items = {u: set(plan.train.items_of(u)) for u in held_users}
        for u, it in plan.holdout:
            if u not in block:
                problems.append(f"holdout user {u!r} outside the fold's test block")
            if it in train_items[u]:
                problems.append(f"held item {it!r} still in training row of {u!r}")
            if it not in data.items_of(u):
                problems.append(f"held item {it!r} was never seen by {u!r}")
        # nothing but the held items may differ from the full data
        if plan.train.matrix.nnz != data.matrix.nnz - len(plan.holdout):
            problems.append(f"fold {plan.fold_index} train lost more than the held items")
    if len(seen) != data.n_users:
        problems.append(f"{data.n_users - len(seen)} users never tested")
    return problems


def audit_cold_start_split(data, plan):
    """Problems found in one cold start fold (empty if none)."""
    problems = []
    cold = set(plan.test_block)
    train_items = set(plan.train.item_ids)
    if cold & train_items:
        problems.append(f"{len(cold & train_items)} cold items present in train")
    if train_items | cold != set(data.item_ids):
        problems.append("train and cold items do not cover the catalog")
    if plan.train.matrix.nnz and np.any(np.diff(plan.train.matrix.row_offsets) == 0):
        problems.append("train contains users without items")
    train_users = set(plan.train.user_ids)
    full = data.user_index()
    Rt = data.matrix.transpose()
    item_pos = data.item_index()
    for it, u in plan.holdout:
        if it not in cold:
            problems.append(f"holdout item {it!r} is not cold")
        who, _ = Rt.row_entries(item_pos[it])
        if full[u] not in set(who.tolist()):
            problems.append(f"probe user {u!r} never interacted with {it!r}")
        if u not in train_users:
            problems.append(f"probe user {u!r} missing from train")
    for u in data.user_ids:
        warm = set(data.items_of(u)) - cold
        if bool(warm) != (u in train_users):
            problems.append(f"user {u!r} wrongly {'kept' if u in train_users else 'dropped'}")
    return problems


# -- metrics -----------------------------------------------------------------

def mrr_at_n(ranked, target, n):
    """Reciprocal rank of ``target`` within the top ``n``, else 0."""
    if n < 1:
        raise ValueError("cutoff must be at least 1")
    rank = ranked.rank_of(target)
    return 1.0 / rank if rank is not None and rank <= n else 0.0


def hr_at_n(ranked, target, n):
    """1 if ``target`` is within the top ``n``, else 0."""
    if n < 1:
        raise ValueError("cutoff must be at least 1")
    rank = ranked.rank_of(target)
    return 1.0 if rank is not None and rank <= n else 0.0


def coverage(all_recommendations, train, entity="items", n=None):
    """Fraction of training entities that appear in at least one list.

    ``train`` is an :class:`InteractionData` (``entity`` picks items or users)
    or a plain count. With ``n`` only the top ``n`` of each list count.
    """
    if isinstance(train, InteractionData):
        total = train.n_items if entity == "items" else train.n_users
    else:
        total = int(train)
    seen = set()
    for rec in all_recommendations:
        ids = rec.entity_ids if n is None else rec.entity_ids[:n]
        seen.update(ids.tolist())
    return len(seen) / total if total else 0.0


@dataclass(frozen=True)
class EvalReport:
    """Fold-level and aggregated metrics for one configuration and cutoff."""

    n: int
    scenario: str
    per_fold: dict
    config: dict = field(default_factory=dict)

    METRICS = ("mrr", "hr", "coverage")

    @property
    def folds(self):
        return len(self.per_fold["mrr"])

    def mean(self, metric):
        return float(np.mean(self.per_fold[metric]))

    def ci95(self, metric):
        """Half-width of the 95% t-interval over folds; ``None`` for one fold."""
        vals = np.asarray(self.per_fold[metric], dtype=float)
        if vals.size < 2:
            return None
        half = stats.t.ppf(0.975, vals.size - 1) * vals.std(ddof=1) / np.sqrt(vals.size)
        return float(half)

    def to_text(self):
        lines = ["metric,cutoff,mean,ci95"]
        for m in self.METRICS:
            ci = self.ci95(m)
            lines.append(f"{m},{self.n},{self.mean(m):.10g},{'' if ci is None else f'{ci:.10g}'}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "cutoff": self.n,
            "config": self.config,
            "metrics": {m: {"mean": self.mean(m), "ci95": self.ci95(m),
                            "per_fold": [float(x) for x in self.per_fold[m]]}
                        for m in self.METRICS},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def paired_t_test(report_a, report_b, metric="mrr", alternative="two-sided"):
    """Paired t-test over folds of two reports computed on identical splits."""
    a = np.asarray(report_a.per_fold[metric], dtype=float)
    b = np.asarray(report_b.per_fold[metric], dtype=float)
    res = stats.ttest_rel(a, b, alternative=alternative)
    return float(res.statistic), float(res.pvalue)


# -- scorers -----------------------------------------------------------------

class FactorCache:
    """Similarity matrices and Cholesky factors shared across alphas and folds.

    The Common Neighbors matrix and the symbolic analysis are computed once
    per set of training items; every alpha only costs a numeric
    refactorization.
    """

    def __init__(self, catalog):
        self.catalog = catalog
        self._base = {}
        self.symbolic_runs = 0
        self.numeric_runs = 0

    def _entry(self, item_ids):
        key = hash(tuple(item_ids))
        if key not in self._base:
            aligned = self.catalog.align(item_ids)
            Z, m = common_neighbors(aligned, return_norm=True)
            self._base[key] = (aligned, Z, m, analyze(Z))
            self.symbolic_runs += 1
        return self._base[key]

    def aligned(self, item_ids):
        return self._entry(item_ids)[0]

    def similarity(self, item_ids, alpha):
        """Blended similarity and its factor (``None`` for ``alpha == 0``)."""
        _, Z, m, symbolic = self._entry(item_ids)
        sim = blend(Z, alpha, z_norm=m)
        if alpha == 0.0:
            return sim, None
        factor = refactorize(symbolic, sim.matrix, hint=f"try a smaller alpha than {alpha}")
        self.numeric_runs += 1
        return sim, factor


class FittedHybridSVD:
    """A fitted model bound to its training data, ready to rank."""

    def __init__(self, model, train, catalog=None):
        self.model = model
        self.train = train
        self.catalog = catalog
        self._cmap = None

    def truncate(self, k):
        return FittedHybridSVD(truncate(self.model, k), self.train, self.catalog)

    def recommend(self, p, n, exclude_seen=True):
        return recommend(self.model, p, n, exclude_seen=exclude_seen)

    def recommend_users(self, item_id, n):
        if self.catalog is None:
            raise ValueError("cold start scoring needs an item feature catalog")
        if self._cmap is None:
            self._cmap = cold_start_map(self.model, self.catalog.align(self.train.item_ids))
        f, _ = self.catalog.feature_vector(self.catalog.features_of(item_id))
        return cold_item_users(self.model, cold_item_embed(self._cmap, f), n)


class HybridSVDFactory:
    """Callable producing a fitted HybridSVD (PureSVD when ``alpha == 0``) per training set."""

    def __init__(self, k, alpha=0.0, d=1.0, catalog=None, cache=None, seed=0, tol=1e-10):
        if alpha > 0 and catalog is None and cache is None:
            raise ValueError("alpha > 0 requires an item feature catalog")
        self.k, self.alpha, self.d, self.seed, self.tol = k, float(alpha), d, seed, tol
        self.cache = cache if cache is not None else (FactorCache(catalog) if catalog else None)
        self.catalog = catalog if catalog is not None else getattr(cache, "catalog", None)
        self.calls = 0

    def __call__(self, train):
        self.calls += 1
        sim = factor = None
        if self.alpha > 0:
            sim, factor = self.cache.similarity(train.item_ids, self.alpha)
        k = min(self.k, min(train.matrix.shape))
        model = fit(train.matrix, sim, k=k, d=self.d, item_factor=factor,
                    seed=self.seed, tol=self.tol)
        return FittedHybridSVD(model, train, self.catalog)


class _RandomScorer:
    def __init__(self, train, seed):
        self.train = train
        self.seed = seed
        self._calls = 0

    def _rng(self):
        self._calls += 1
        return np.random.default_rng([self.seed, self._calls])

    def truncate(self, k):
        return self

    def recommend(self, p, n, exclude_seen=True):
        exclude = np.flatnonzero(np.asarray(p) > 0) if exclude_seen else None
        return top_n(self._rng().random(self.train.n_items), n, exclude)

    def recommend_users(self, item_id, n):
        return top_n(self._rng().random(self.train.n_users), n)


class RandomFactory:
    """Uniform random ranker, a sanity baseline for the harness."""

    def __init__(self, seed=0):
        self.seed = seed
        self.calls = 0

    def __call__(self, train):
        self.calls += 1
        return _RandomScorer(train, self.seed)


# -- evaluation loop ---------------------------------------------------------

def _score_fold(scorer, plan, cutoffs):
    nmax = max(cutoffs)
    train = plan.train
    recs, targets = [], []
    if plan.scenario == "standard":
        uidx, iidx = train.user_index(), train.item_index()
        for user, item in plan.holdout:
            p = train.matrix.row(uidx[user])
            recs.append(scorer.recommend(p, nmax, exclude_seen=True))
            targets.append(iidx[item])
        entity = "items"
    else:
        uidx = train.user_index()
        for item, user in plan.holdout:
            recs.append(scorer.recommend_users(item, nmax))
            targets.append(uidx[user])
        entity = "users"
    out = {}
    for n in cutoffs:
        mrr = [mrr_at_n(r, t, n) for r, t in zip(recs, targets)]
        hr = [hr_at_n(r, t, n) for r, t in zip(recs, targets)]
        out[n] = {
            "mrr": float(np.mean(mrr)) if mrr else 0.0,
            "hr": float(np.mean(hr)) if hr else 0.0,
            "coverage": coverage(recs, train, entity=entity, n=n),
        }
    return out


def evaluate_grid(model_factory, data, scenario, cutoffs=(10,), ranks=None, folds=N_SPLITS,
                  seed=0, plans=None, config=None):
    """Evaluate one model configuration over folds, ranks and cutoffs.

    ``model_factory(train)`` is called once per fold. When ``ranks`` is
    given, the fitted scorer is truncated to each rank instead of refitting.

    Returns
    -------
    dict
        ``(k, n) -> EvalReport`` with ``k`` None when ``ranks`` is None.
    """
    if not 1 <= folds <= N_SPLITS:
        raise ValueError(f"folds must be in 1..{N_SPLITS}")
    cutoffs = tuple(int(n) for n in cutoffs)
    rank_list = [None] if ranks is None else sorted(int(k) for k in ranks)
    acc = {(k, n): {m: [] for m in EvalReport.METRICS} for k in rank_list for n in cutoffs}
    for fold in range(folds):
        plan = plans[fold] if plans is not None else split(data, scenario, fold, seed)
        try:
            scorer = model_factory(plan.train)
            for k in rank_list:
                s = scorer if k is None else _truncated(scorer, k)
                res = _score_fold(s, plan, cutoffs)
                for n in cutoffs:
                    for m in EvalReport.METRICS:
                        acc[(k, n)][m].append(res[n][m])
        except Exception as err:
            err.fold = fold
            if hasattr(err, "add_note"):
                err.add_note(f"while evaluating fold {fold}")
            raise
    return {key: EvalReport(key[1], scenario, per_fold,
                            config={**(config or {}), "k": key[0], "seed": seed, "folds": folds})
            for key, per_fold in acc.items()}


def _truncated(scorer, k):
    # the factory may have capped the rank to a small training matrix
    model = getattr(scorer, "model", None)
    return scorer.truncate(k if model is None else min(k, model.k))


def evaluate(model_factory, data, scenario, n=10, folds=N_SPLITS, seed=0, plans=None):
    """Single-cutoff evaluation; see :func:`evaluate_grid`."""
    return evaluate_grid(model_factory, data, scenario, (n,), None, folds, seed, plans)[(None, n)]
