"""Small built-in datasets: the four-user toy example and a planted generator."""

from __future__ import annotations

import numpy as np

from .evaluation import InteractionData, interactions_from_records
from .similarity import load_features
from .sparse import from_triplets

__all__ = [
    "TOY_ITEMS",
    "TOY_USERS",
    "planted_hybrid",
    "toy_features",
    "toy_interactions",
    "toy_new_user",
]

TOY_USERS = ("Alice", "Bob", "Carol")
TOY_ITEMS = ("Item1", "Item2", "Item3", "Item4", "Item5")
_TOY_PAIRS = (
    ("Alice", "Item1"), ("Alice", "Item3"), ("Alice", "Item4"),
    ("Bob", "Item1"), ("Bob", "Item2"), ("Bob", "Item4"),
    ("Carol", "Item1"), ("Carol", "Item4"),
)


def toy_interactions():
    """3 users x 5 items; Item5 has no interactions."""
    uidx = {u: i for i, u in enumerate(TOY_USERS)}
    iidx = {it: i for i, it in enumerate(TOY_ITEMS)}
    R = from_triplets([(uidx[u], iidx[it], 1.0) for u, it in _TOY_PAIRS], 3, 5)
    return InteractionData(TOY_USERS, TOY_ITEMS, R, {"source": "toy"})


def toy_new_user():
    """Preference vector of the new user who picked Item1, Item4 and Item5."""
    return np.array([1.0, 0.0, 0.0, 1.0, 1.0])


def toy_features(encoding="shared"):
    """Item features making Item3 and Item5 similar.

    ``"shared"``: every item has a single feature and Item3, Item5 have the
    same one (Common Neighbors similarity 1 between them).
    ``"minimal"``: every item has its own feature and Item3, Item5 also share
    one more (similarity 1/2 after scaling).
    """
    if encoding == "shared":
        records = [("Item1", "f1"), ("Item2", "f2"), ("Item3", "f35"),
                   ("Item4", "f4"), ("Item5", "f35")]
    elif encoding == "minimal":
        records = [(it, f"own:{it}") for it in TOY_ITEMS]
        records += [("Item3", "shared:35"), ("Item5", "shared:35")]
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    return load_features(records)


def planted_hybrid(n_users=300, n_groups=30, items_per_group=12, n_genres=6,
                   items_per_user=(3, 8), popularity=1.0, seed=0):
    """Interactions generated from planted item groups that the features reveal.

    Items come in groups (think artists); every group belongs to one genre.
    Each item is tagged with its group and its genre. Users favour a couple
    of groups and pick items mostly from those, so item groups are the
    latent structure behind the interactions and the ``group:*`` features
    expose it directly.

    Returns
    -------
    data : InteractionData
    catalog : FeatureCatalog
    """
    rng = np.random.default_rng(seed)
    n_items = n_groups * items_per_group
    group_of = np.repeat(np.arange(n_groups), items_per_group)
    genre_of_group = np.arange(n_groups) % n_genres
    item_pop = rng.pareto(3.0, n_items) * popularity + 1.0

    records = []
    for u in range(n_users):
        # a few favourite groups, biased towards one genre
        genre = rng.integers(n_genres)
        in_genre = np.flatnonzero(genre_of_group == genre)
        fav = rng.choice(in_genre, size=min(2, in_genre.size), replace=False)
        weights = np.full(n_groups, 0.05)
        weights[fav] = rng.uniform(2.0, 4.0, fav.size)
        item_w = weights[group_of] * item_pop
        count = rng.integers(items_per_user[0], items_per_user[1] + 1)
        picks = rng.choice(n_items, size=count, replace=False, p=item_w / item_w.sum())
        records.extend((f"u{u}", f"i{i}", 1.0) for i in picks)

    data = interactions_from_records(records, threshold=1.0)
    feats = []
    for i in range(n_items):
        feats.append((f"i{i}", f"group:{group_of[i]}"))
        feats.append((f"i{i}", f"genre:{genre_of_group[group_of[i]]}"))
    data = InteractionData(data.user_ids, data.item_ids, data.matrix,
                           {"source": f"planted(seed={seed})"})
    return data, load_features(feats)
