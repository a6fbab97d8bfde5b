import numpy as np
import pytest
from scipy import stats

from hybridsvd.datasets import planted_hybrid, toy_interactions
from hybridsvd.errors import DataError
from hybridsvd.evaluation import (
    EvalReport,
    FactorCache,
    HybridSVDFactory,
    InteractionData,
    RandomFactory,
    audit_cold_start_split,
    audit_standard_splits,
    coverage,
    evaluate,
    evaluate_grid,
    hr_at_n,
    interactions_from_records,
    load_interactions,
    mrr_at_n,
    paired_t_test,
    split,
)
from hybridsvd.model import Recommendations
from hybridsvd.sparse import from_triplets_arrays

TOY_CSV = """user_id,item_id,rating
Alice,Item1,1
Alice,Item3,1
Alice,Item4,1
Bob,Item1,1
Bob,Item2,1
Bob,Item4,1
Carol,Item1,1
Carol,Item4,1
"""


def ranked(ids):
    ids = np.asarray(ids, dtype=np.int64)
    return Recommendations(ids, -np.arange(ids.size, dtype=float))


def uniform_data(n_users, n_items, per_user, seed=0):
    """Every user has exactly ``per_user`` distinct items."""
    rng = np.random.default_rng(seed)
    rows = np.repeat(np.arange(n_users), per_user)
    cols = np.concatenate([rng.choice(n_items, per_user, replace=False) for _ in range(n_users)])
    M = from_triplets_arrays(rows, cols, np.ones(rows.size), n_users, n_items)
    return InteractionData(tuple(f"u{i}" for i in range(n_users)),
                           tuple(f"i{j}" for j in range(n_items)), M)


# -- ingestion ---------------------------------------------------------------

def test_threshold_binarization():
    data = interactions_from_records([("a", "x", 5), ("a", "y", 4), ("a", "z", 3)], threshold=4)
    assert data.matrix.nnz == 2
    assert data.item_ids == ("x", "y")


def test_kcore_cascade():
    # item "rare" has 1 user; dropping it leaves user "c" with 1 item, which then drops too
    records = [(u, it, 1) for u in "ab" for it in ("x", "y")]
    records += [("c", "x", 1), ("c", "rare", 1)]
    data = interactions_from_records(records, min_user=2, min_item=2)
    assert data.user_ids == ("a", "b")
    assert data.item_ids == ("x", "y")
    assert data.matrix.nnz == 4


def test_toy_csv(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text(TOY_CSV, encoding="utf-8")
    data = load_interactions(p)
    assert data.matrix.nnz == 8
    assert data.n_users == 3
    # Item5 has no interactions and so cannot appear in a ratings file
    assert data.item_ids == ("Item1", "Item3", "Item4", "Item2")
    assert data.provenance["threshold"] == 1.0


def test_malformed_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("u,i,r\na,x,1\nb,y\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 3"):
        load_interactions(p)
    p.write_text("u,i,r\na,x,high\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        load_interactions(p)


def test_empty_after_filtering(tmp_path):
    p = tmp_path / "low.csv"
    p.write_text("u,i,r\na,x,1\n", encoding="utf-8")
    with pytest.raises(DataError, match="no interactions"):
        load_interactions(p, threshold=4)
    with pytest.raises(DataError):
        interactions_from_records([("a", "x", 1)], min_user=2)


def test_timestamp_column_accepted(tmp_path):
    p = tmp_path / "ts.csv"
    p.write_text("u,i,r,t\na,x,5,100\n", encoding="utf-8")
    assert load_interactions(p).matrix.nnz == 1


# -- splitting ---------------------------------------------------------------

def test_standard_folds_partition_users():
    data = uniform_data(100, 30, 4)
    plans = [split(data, "standard", f, seed=3) for f in range(5)]
    assert audit_standard_splits(data, plans) == []
    tested = [u for p in plans for u, _ in p.holdout]
    assert sorted(tested) == sorted(data.user_ids)
    assert all(len(p.test_block) == 20 for p in plans)


def test_split_is_deterministic():
    data = uniform_data(50, 20, 3)
    a, b = split(data, "standard", 2, seed=9), split(data, "standard", 2, seed=9)
    assert a.holdout == b.holdout
    assert a.train.matrix.to_triplets() == b.train.matrix.to_triplets()
    assert split(data, "standard", 2, seed=10).holdout != a.holdout


def test_single_item_users_are_skipped():
    rows = [(0, 0), (1, 1), (1, 2)]
    M = from_triplets_arrays(*zip(*rows), np.ones(3), 2, 3)
    data = InteractionData(("solo", "duo"), ("a", "b", "c"), M)
    plans = [split(data, "standard", f) for f in range(5)]
    assert sum(("solo" in p.skipped) for p in plans) == 1
    assert all(u != "solo" for p in plans for u, _ in p.holdout)


def test_test_users_keep_rest_of_their_row():
    data = uniform_data(40, 25, 5)
    plan = split(data, "standard", 0)
    for u, it in plan.holdout:
        assert set(plan.train.items_of(u)) == set(data.items_of(u)) - {it}


def test_holdout_draw_depends_only_on_user_label():
    data = uniform_data(60, 25, 5, seed=1)
    bigger_rows = data.matrix
    extra = from_triplets_arrays(
        np.concatenate([bigger_rows.row_indices, [60, 60]]),
        np.concatenate([bigger_rows.col_indices, [0, 1]]),
        np.ones(bigger_rows.nnz + 2), 61, 25)
    bigger = InteractionData(data.user_ids + ("new",), data.item_ids, extra)
    held = {u: it for f in range(5) for u, it in split(data, "standard", f).holdout}
    fold_of = {u: f for f in range(5) for u in split(data, "standard", f).test_block}
    held2 = {u: it for f in range(5) for u, it in split(bigger, "standard", f).holdout}
    fold2 = {u: f for f in range(5) for u in split(bigger, "standard", f).test_block}
    same_fold = [u for u in data.user_ids if fold_of[u] == fold2[u]]
    assert same_fold
    assert all(held[u] == held2[u] for u in same_fold)


def test_cold_start_toy_item5():
    data = toy_interactions()
    plans = [split(data, "cold_start", f) for f in range(5)]
    plan = next(p for p in plans if "Item5" in p.test_block)
    assert "Item5" not in plan.train.item_ids
    assert "Item5" in plan.skipped  # nobody interacted with it
    assert audit_cold_start_split(data, plan) == []


def test_cold_start_audit_on_synthetic_data():
    data, _ = planted_hybrid(n_users=1000, seed=2)
    plans = [split(data, "cold_start", f, seed=5) for f in range(5)]
    for plan in plans:
        assert audit_cold_start_split(data, plan) == []
    blocks = [set(p.test_block) for p in plans]
    assert set().union(*blocks) == set(data.item_ids)
    assert sum(len(b) for b in blocks) == data.n_items


def test_audits_catch_broken_plans():
    data = uniform_data(20, 10, 3)
    plans = [split(data, "standard", f) for f in range(5)]
    assert audit_standard_splits(data, plans[:4])
    plan = split(data, "cold_start", 0)
    leaky = type(plan)(plan.fold_index, plan.seed, plan.scenario, data, plan.holdout,
                       plan.skipped, plan.test_block)
    assert any("present in train" in p for p in audit_cold_start_split(data, leaky))


def test_bad_split_arguments():
    data = uniform_data(10, 5, 2)
    with pytest.raises(ValueError):
        split(data, "warm", 0)
    with pytest.raises(ValueError):
        split(data, "standard", 5)


# -- metrics -----------------------------------------------------------------

def test_metric_examples():
    r = ranked(range(20))
    assert mrr_at_n(r, 0, 10) == 1.0
    assert mrr_at_n(r, 2, 10) == pytest.approx(1 / 3)
    assert mrr_at_n(r, 10, 10) == 0.0
    assert hr_at_n(r, 4, 10) == 1.0
    assert hr_at_n(r, 10, 10) == 0.0
    assert mrr_at_n(r, 99, 10) == 0.0
    with pytest.raises(ValueError):
        mrr_at_n(r, 0, 0)


def test_hand_built_lists():
    # target ranks 1, 2, 3, 5, 10, 11, absent, 4, 1, 7 in ten lists of 12 items
    ranks = [1, 2, 3, 5, 10, 11, None, 4, 1, 7]
    lists, targets = [], []
    for i, rank in enumerate(ranks):
        ids = [(i + j) % 12 + 100 for j in range(12)]
        lists.append(ranked(ids))
        targets.append(ids[rank - 1] if rank else 999)
    mrr = np.mean([mrr_at_n(r, t, 10) for r, t in zip(lists, targets)])
    hr = np.mean([hr_at_n(r, t, 10) for r, t in zip(lists, targets)])
    assert mrr == (1 + 1 / 2 + 1 / 3 + 1 / 5 + 1 / 10 + 1 / 4 + 1 + 1 / 7) / 10
    assert hr == 0.8
    # every list holds ids 100..111; the top 10 leave out two ids in each list,
    # but together they cover all 12
    assert coverage(lists, 12, n=10) == 1.0
    assert coverage(lists[:1], 12, n=10) == 10 / 12


def test_coverage_examples():
    data = uniform_data(5, 100, 2)
    assert coverage([ranked([7])] * 30, data) == 0.01
    assert coverage([ranked(range(100))], data) == 1.0
    assert coverage([ranked([0, 1])], data, entity="users") == 2 / 5


def test_metric_bounds_on_random_lists():
    rng = np.random.default_rng(0)
    for _ in range(200):
        r = ranked(rng.permutation(30))
        t = int(rng.integers(30))
        assert 0 <= mrr_at_n(r, t, 10) <= hr_at_n(r, t, 10) <= 1


# -- reports -----------------------------------------------------------------

def test_report_ci_and_text():
    rep = EvalReport(10, "standard", {"mrr": [0.1, 0.2, 0.3], "hr": [0.5, 0.5, 0.5],
                                      "coverage": [1.0, 1.0, 1.0]})
    half = stats.t.ppf(0.975, 2) * np.std([0.1, 0.2, 0.3], ddof=1) / np.sqrt(3)
    assert rep.ci95("mrr") == pytest.approx(half, rel=1e-12)
    assert rep.ci95("hr") == 0.0
    lines = rep.to_text().splitlines()
    assert lines[0] == "metric,cutoff,mean,ci95"
    assert lines[1].startswith("mrr,10,0.2,")
    one = EvalReport(10, "standard", {"mrr": [0.1], "hr": [0.2], "coverage": [0.3]})
    assert one.ci95("mrr") is None
    assert one.to_text().splitlines()[1] == "mrr,10,0.1,"
    assert one.to_dict()["metrics"]["mrr"]["ci95"] is None


def test_paired_t_test_matches_scipy():
    a = EvalReport(10, "standard", {"mrr": [0.3, 0.35, 0.32, 0.4, 0.38]})
    b = EvalReport(10, "standard", {"mrr": [0.2, 0.3, 0.31, 0.33, 0.3]})
    res = stats.ttest_rel([0.3, 0.35, 0.32, 0.4, 0.38], [0.2, 0.3, 0.31, 0.33, 0.3])
    assert paired_t_test(a, b) == pytest.approx((res.statistic, res.pvalue))


# -- evaluation loop ---------------------------------------------------------

def test_random_ranker_matches_closed_form():
    # each user keeps 4 of 5 items after the holdout: 30 - 4 = 26 candidates,
    # so the expected MRR@10 is H_10 / 26
    data = uniform_data(3000, 30, 5)
    rep = evaluate(RandomFactory(seed=1), data, "standard", n=10)
    expected = sum(1 / r for r in range(1, 11)) / 26
    per_case_sd = np.sqrt(sum(1 / r ** 2 for r in range(1, 11)) / 26 - expected ** 2)
    assert abs(rep.mean("mrr") - expected) < 4 * per_case_sd / np.sqrt(3000)
    assert rep.mean("hr") == pytest.approx(10 / 26, abs=0.04)


def test_random_ranker_cold_start():
    data, _ = planted_hybrid(seed=1)
    rep = evaluate(RandomFactory(seed=2), data, "cold_start", n=10)
    plans = [split(data, "cold_start", f) for f in range(5)]
    harmonic, harmonic2 = (sum(1 / r ** e for r in range(1, 11)) for e in (1, 2))
    # fold means of H_10 / |train users| and their standard error
    expected = np.mean([harmonic / p.train.n_users for p in plans])
    var = np.mean([(harmonic2 / p.train.n_users - (harmonic / p.train.n_users) ** 2)
                   / len(p.holdout) for p in plans]) / 5
    assert abs(rep.mean("mrr") - expected) < 4 * np.sqrt(var)


def test_identical_factories_give_identical_reports():
    data = uniform_data(80, 30, 6)
    a = evaluate(HybridSVDFactory(5), data, "standard", n=5)
    b = evaluate(HybridSVDFactory(5), data, "standard", n=5)
    assert a.to_json() == b.to_json()
    assert a.to_text() == b.to_text()


def test_single_fold_has_no_interval():
    data = uniform_data(40, 20, 4)
    rep = evaluate(HybridSVDFactory(3), data, "standard", n=5, folds=1)
    assert rep.folds == 1
    assert rep.ci95("mrr") is None


def test_grid_fits_once_per_fold():
    data = uniform_data(60, 25, 5)
    factory = HybridSVDFactory(10)
    reports = evaluate_grid(factory, data, "standard", cutoffs=(5, 10), ranks=(2, 5, 10))
    assert factory.calls == 5
    assert sorted(reports) == [(k, n) for k in (2, 5, 10) for n in (5, 10)]
    direct = evaluate(HybridSVDFactory(5), data, "standard", n=10)
    assert reports[(5, 10)].mean("mrr") == pytest.approx(direct.mean("mrr"), abs=1e-12)


def test_errors_carry_the_fold():
    data = uniform_data(30, 10, 3)

    def factory(train):
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError) as info:
        evaluate(factory, data, "standard")
    assert info.value.fold == 0


def test_factor_cache_reuses_symbolic_analysis():
    data, catalog = planted_hybrid(n_users=200, seed=3)
    cache = FactorCache(catalog)
    plans = [split(data, "cold_start", f) for f in range(2)]
    for alpha in (0.2, 0.5, 0.8):
        evaluate(HybridSVDFactory(8, alpha, cache=cache), data, "cold_start", folds=2, plans=plans)
    assert cache.symbolic_runs == 2
    assert cache.numeric_runs == 6


def test_hybrid_needs_catalog():
    with pytest.raises(ValueError):
        HybridSVDFactory(5, alpha=0.5)
