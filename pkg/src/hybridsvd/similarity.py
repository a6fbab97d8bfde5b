"""Side-similarity matrices built from categorical features.

Features are one-hot encoded into a binary entity-by-feature matrix ``F``.
The Common Neighbors similarity ``F F^T`` is scaled by its largest element,
its diagonal reset to one, and the result blended with the identity:
``S = (1 - alpha) I + alpha Z``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError
from .sparse import SparseMatrix, from_triplets_arrays

__all__ = [
    "DROP_TOLERANCE",
    "FeatureCatalog",
    "GuardResult",
    "SideSimilarity",
    "blend",
    "common_neighbors",
    "definiteness_guard",
    "dominance_bound",
    "load_features",
    "read_feature_csv",
]

DROP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class FeatureCatalog:
    """Binary assignment of features to entities.

    ``assignments`` has one row per entry of ``entity_ids`` and one column
    per entry of ``feature_names``. Entities that ended up without any
    feature are not part of the catalog; their ids are listed in ``rejects``.
    """

    assignments: SparseMatrix
    entity_ids: tuple
    feature_names: tuple
    rejects: tuple = ()
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.assignments.shape != (len(self.entity_ids), len(self.feature_names)):
            raise DimensionError("assignment matrix does not match the id / feature lists")
        if np.any(self.assignments.values != 1.0):
            raise ValueError("feature assignments must be binary")
        if np.any(np.diff(self.assignments.row_offsets) == 0):
            raise ValueError("every entity in a catalog needs at least one feature")
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(self.entity_ids)})

    @property
    def n_entities(self):
        return len(self.entity_ids)

    @property
    def n_features(self):
        return len(self.feature_names)

    def __contains__(self, entity):
        return entity in self._index

    def features_of(self, entity):
        cols, _ = self.assignments.row_entries(self._index[entity])
        return [self.feature_names[c] for c in cols]

    def feature_vector(self, labels):
        """Indicator vector over the catalog features.

        Returns the vector and the list of labels the catalog does not know.
        """
        pos = {f: i for i, f in enumerate(self.feature_names)}
        vec = np.zeros(self.n_features)
        unknown = []
        for lab in labels:
            if lab in pos:
                vec[pos[lab]] = 1.0
            else:
                unknown.append(lab)
        return vec, unknown

    def align(self, entity_ids):
        """Catalog restricted and reordered to ``entity_ids``.

        Raises ``KeyError`` listing ids the catalog does not cover.
        """
        missing = [e for e in entity_ids if e not in self._index]
        if missing:
            shown = ", ".join(map(str, missing[:10]))
            raise KeyError(f"{len(missing)} entities have no features: {shown}")
        rows = np.fromiter((self._index[e] for e in entity_ids), dtype=np.int64,
                           count=len(entity_ids))
        return FeatureCatalog(self.assignments.select_rows(rows), tuple(entity_ids),
                              self.feature_names)

    def digest(self):
        """Stable hash of ids, feature names and assignments."""
        h = hashlib.sha256()
        h.update(repr((self.entity_ids, self.feature_names)).encode())
        h.update(self.assignments.row_offsets.tobytes())
        h.update(self.assignments.col_indices.tobytes())
        return h.hexdigest()[:16]


def load_features(records):
    """Build a :class:`FeatureCatalog` from ``(entity_id, feature_label)`` pairs.

    Entities and features are indexed in order of first appearance. Repeated
    pairs collapse to a single entry. A record with an empty or ``None``
    label registers the entity without a feature; entities left with no
    features are reported in ``rejects`` and excluded from the catalog.
    """
    records = list(records)
    if not records:
        raise ValueError("no feature records given")
    entities, features = {}, {}
    pairs = set()
    for entity, label in records:
        entities.setdefault(entity, len(entities))
        if label is None or label == "":
            continue
        features.setdefault(label, len(features))
        pairs.add((entities[entity], features[label]))
    has_feature = np.zeros(len(entities), dtype=bool)
    for e, _ in pairs:
        has_feature[e] = True
    all_ids = list(entities)
    kept = [e for e in all_ids if has_feature[entities[e]]]
    rejects = tuple(e for e in all_ids if not has_feature[entities[e]])
    new_row = {entities[e]: i for i, e in enumerate(kept)}
    if pairs:
        rows, cols = zip(*((new_row[e], f) for e, f in pairs))
    else:
        rows, cols = (), ()
    F = from_triplets_arrays(rows, cols, np.ones(len(rows)), len(kept), len(features))
    return FeatureCatalog(F, tuple(kept), tuple(features), rejects)


def read_feature_csv(path):
    """Read an ``entity_id,feature_label`` CSV file with a header row."""
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty feature file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}: expected 2 fields, got {len(row)}", line=lineno)
            records.append((row[0].strip(), row[1].strip()))
    if not records:
        raise DataError(f"{path}: no feature records")
    return load_features(records)


@dataclass(frozen=True)
class SideSimilarity:
    """Blended similarity ``(1 - alpha) I + alpha Z`` and its provenance."""

    matrix: SparseMatrix
    alpha: float
    z_norm: float = 1.0
    base: SparseMatrix = field(default=None, repr=False)

    @property
    def n(self):
        return self.matrix.n_rows


def common_neighbors(catalog, return_norm=False):
    """Scaled Common Neighbors similarity of the catalog entities.

    ``Z = F F^T / m`` with ``m`` the largest element of ``F F^T`` (diagonal
    included), then the diagonal is set to one. Off-diagonal values below
    ``DROP_TOLERANCE`` are dropped.

    Returns
    -------
    Z : SparseMatrix
    m : float
        Only when ``return_norm`` is set.
    """
    F = catalog.assignments if isinstance(catalog, FeatureCatalog) else catalog
    if F.nnz == 0:
        raise ValueError("feature matrix is all zeros")
    Fs = F.to_scipy()
    G = (Fs @ Fs.T).tocoo()
    m = float(G.data.max())
    off = (G.row != G.col) & (G.data / m >= DROP_TOLERANCE)
    n = F.n_rows
    rows = np.concatenate([G.row[off], np.arange(n)])
    cols = np.concatenate([G.col[off], np.arange(n)])
    vals = np.concatenate([G.data[off] / m, np.ones(n)])
    Z = from_triplets_arrays(rows, cols, vals, n, n)
    return (Z, m) if return_norm else Z


def blend(Z, alpha, z_norm=1.0):
    """``S = (1 - alpha) I + alpha Z`` for ``Z`` with a unit diagonal."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if Z.n_rows != Z.n_cols:
        raise DimensionError(f"similarity must be square, got shape {Z.shape}")
    n = Z.n_rows
    if alpha == 0.0:
        return SideSimilarity(SparseMatrix.identity(n), 0.0, z_norm, Z)
    diag = Z.row_indices == Z.col_indices
    if not np.allclose(Z.values[diag], 1.0) or np.count_nonzero(diag) != n:
        raise ValueError("Z must have a unit diagonal")
    vals = np.where(diag, 1.0, alpha * Z.values)
    S = SparseMatrix(n, n, Z.row_offsets, Z.col_indices, vals, check=False)
    return SideSimilarity(S, float(alpha), z_norm, Z)


def _offdiag_rowsums(M):
    mask = M.row_indices != M.col_indices
    return np.bincount(M.row_indices[mask], weights=np.abs(M.values[mask]), minlength=M.n_rows)


def dominance_bound(Z):
    """Largest alpha keeping ``(1 - alpha) I + alpha Z`` strictly diagonally dominant.

    Any alpha strictly below the returned value gives a positive definite
    blend. Returns ``inf`` for a diagonal ``Z``.
    """
    worst = _offdiag_rowsums(Z).max(initial=0.0)
    return np.inf if worst == 0 else 1.0 / worst


@dataclass(frozen=True)
class GuardResult:
    status: str        # "ok", "warn" or "fail"
    margin: float      # 1 - largest off-diagonal absolute row sum

    @property
    def ok(self):
        return self.status == "ok"


def definiteness_guard(sim):
    """Diagnose positive definiteness through diagonal dominance.

    ``ok`` means strictly diagonally dominant, hence positive definite.
    ``warn`` means dominance fails; the matrix may still be definite and the
    Cholesky pivot check decides. ``fail`` flags a non-positive diagonal.
    """
    S = sim.matrix if isinstance(sim, SideSimilarity) else sim
    diag = S.diagonal()
    if np.any(diag <= 0):
        return GuardResult("fail", float(np.min(diag)))
    margin = float(np.min(diag - _offdiag_rowsums(S)))
    return GuardResult("ok" if margin > 0 else "warn", margin)

