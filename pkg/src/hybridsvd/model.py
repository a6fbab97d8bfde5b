"""HybridSVD: truncated SVD of ``L_K^T R L_S`` and everything built on it.

With Cholesky-type factors ``K = L_K L_K^T`` and ``S = L_S L_S^T`` of the user
and item side similarities, the model keeps the leading singular triplets
``(U_hat, sigma, V_hat)`` of the auxiliary matrix ``L_K^T R L_S`` together with

* ``U = L_K^{-T} U_hat`` and ``V = L_S^{-T} V_hat``, which are K- and
  S-orthonormal;
* the folding-in pair ``V_l = V`` and ``V_r = L_S V_hat``, giving item scores
  ``V_l V_r^T p`` for any preference vector ``p``.

Leaving both similarities out gives plain PureSVD.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DimensionError, HybridSVDError
from .factorization import (
    CholeskyFactor,
    LinearOperator,
    cholesky,
    mul_lower,
    solve_lower,
    truncated_svd,
)
from .similarity import FeatureCatalog, SideSimilarity
from .sparse import SparseMatrix, scale_columns

__all__ = [
    "ColdStartMap",
    "HybridSvdModel",
    "Recommendations",
    "auxiliary_operator",
    "cold_item_embed",
    "cold_item_users",
    "cold_start_map",
    "fit",
    "load_model",
    "recommend",
    "save_model",
    "score_items",
    "top_n",
    "truncate",
]

FORMAT_VERSION = 1


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HybridSvdModel:
    """Fitted HybridSVD factors. Immutable; safe to share between threads.

    ``item_cholesky`` / ``user_cholesky`` are ``None`` when the matching
    similarity is the identity, and also on models read back from disk.
    """

    sigma: np.ndarray
    u_hat: np.ndarray
    v_hat: np.ndarray
    u: np.ndarray
    v: np.ndarray
    v_left: np.ndarray
    v_right: np.ndarray
    scaling_d: float = 1.0
    item_cholesky: CholeskyFactor | None = field(default=None, repr=False)
    user_cholesky: CholeskyFactor | None = field(default=None, repr=False)
    provenance: dict = field(default_factory=dict)

    @property
    def k(self):
        return int(self.sigma.size)

    @property
    def n_users(self):
        return self.u.shape[0]

    @property
    def n_items(self):
        return self.v.shape[0]


@dataclass(frozen=True)
class Recommendations:
    """Ranked entities, best first."""

    entity_ids: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return int(self.entity_ids.size)

    def rank_of(self, entity):
        """1-based rank of ``entity`` or ``None`` if it is not listed."""
        hit = np.flatnonzero(self.entity_ids == entity)
        return int(hit[0]) + 1 if hit.size else None


def top_n(scores, n, exclude=None):
    """Top-``n`` entities by score; ties go to the lower entity id.

    ``exclude`` is a boolean mask or an index array of entities to skip.
    """
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.arange(scores.size)
    if exclude is not None:
        exclude = np.asarray(exclude)
        mask = np.zeros(scores.size, dtype=bool)
        mask[exclude] = True
        ids = ids[~mask]
    cand = scores[ids]
    n = min(int(n), ids.size)
    if n <= 0:
        return Recommendations(np.zeros(0, dtype=np.int64), np.zeros(0))
    if n < ids.size:
        # pre-select with a partition, widened to keep every tie at the cut
        kth = np.partition(-cand, n - 1)[n - 1]
        keep = -cand <= kth
        ids, cand = ids[keep], cand[keep]
    order = np.lexsort((ids, -cand))[:n]
    return Recommendations(ids[order], cand[order])


def auxiliary_operator(R, item_factor=None, user_factor=None):
    """Matrix-free ``x -> L_K^T R L_S x`` and its transpose."""

    def apply(x):
        if item_factor is not None:
            x = mul_lower(item_factor, x)
        y = R.matvec(x)
        if user_factor is not None:
            y = mul_lower(user_factor, y, transpose=True)
        return y

    def apply_t(y):
        if user_factor is not None:
            y = mul_lower(user_factor, y)
        x = R.matvec_t(y)
        if item_factor is not None:
            x = mul_lower(item_factor, x, transpose=True)
        return x

    return LinearOperator(R.n_rows, R.n_cols, apply, apply_t)


def _factor_for(sim, factor, n, side, hint):
    if factor is not None:
        if factor.n != n:
            raise DimensionError(f"{side} Cholesky factor has size {factor.n}, expected {n}")
        return factor
    if sim is None:
        return None
    matrix = sim.matrix if isinstance(sim, SideSimilarity) else sim
    if matrix.shape != (n, n):
        raise DimensionError(f"{side} similarity has shape {matrix.shape}, expected ({n}, {n})")
    return cholesky(matrix, hint=hint)


def fit(R, item_sim=None, user_sim=None, k=10, d=1.0, *, item_factor=None, user_factor=None,
        tol=1e-10, seed=0, max_iter=None, oversampling=10):
    """Fit a HybridSVD model of rank ``k``.

    Parameters
    ----------
    R : SparseMatrix
        Users x items interaction matrix with unknowns as zeros.
    item_sim, user_sim : SideSimilarity or SparseMatrix, optional
        Side similarities ``S`` (items) and ``K`` (users). Absent means identity.
    k : int
        Rank; at most ``min(R.shape)``.
    d : float
        Column scaling exponent in ``[0, 1]``; 1 leaves ``R`` untouched.
    item_factor, user_factor : CholeskyFactor, optional
        Precomputed factors, e.g. from :func:`~hybridsvd.factorization.refactorize`.
        They take precedence over the similarity matrices.
    tol, seed, max_iter, oversampling
        Passed to :func:`~hybridsvd.factorization.truncated_svd`.
    """
    M, N = R.shape
    if R.nnz == 0:
        raise ValueError("interaction matrix is empty")
    if not 1 <= k <= min(M, N):
        raise ValueError(f"rank k={k} out of range [1, {min(M, N)}]")
    Rs = scale_columns(R, d)

    Ls = _factor_for(item_sim, item_factor, N, "item", "try a smaller alpha")
    Lk = _factor_for(user_sim, user_factor, M, "user", "try a smaller beta")

    svd = truncated_svd(auxiliary_operator(Rs, Ls, Lk), k, max_iter=max_iter, tol=tol,
                        seed=seed, oversampling=oversampling)
    u_hat, v_hat = svd.left, svd.right
    u = u_hat if Lk is None else _frozen(solve_lower(Lk, u_hat, transpose=True))
    if Ls is None:
        v = v_right = v_hat
    else:
        v = _frozen(solve_lower(Ls, v_hat, transpose=True))
        v_right = _frozen(mul_lower(Ls, v_hat))

    provenance = {
        "alpha": item_sim.alpha if isinstance(item_sim, SideSimilarity) else None,
        "beta": user_sim.alpha if isinstance(user_sim, SideSimilarity) else None,
    }
    return HybridSvdModel(
        sigma=svd.singular_values, u_hat=u_hat, v_hat=v_hat, u=u, v=v,
        v_left=v, v_right=v_right, scaling_d=float(d),
        item_cholesky=Ls, user_cholesky=Lk, provenance=provenance,
    )


def truncate(model, k):
    """Rank-``k`` model made of the leading columns; nothing is recomputed."""
    if not 1 <= k <= model.k:
        raise ValueError(f"cannot truncate a rank-{model.k} model to rank {k}")
    if k == model.k:
        return model
    cut = {name: getattr(model, name)[:, :k]
           for name in ("u_hat", "v_hat", "u", "v", "v_left", "v_right")}
    return replace(model, sigma=model.sigma[:k], **cut)


def score_items(model, p):
    """Folding-in item scores ``V_l (V_r^T p)``."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (model.n_items,):
        raise DimensionError(f"preference vector must have length {model.n_items}, got {p.shape}")
    return model.v_left @ (model.v_right.T @ p)


def recommend(model, p, n=10, exclude_seen=True):
    """Top-``n`` items for a user with preference vector ``p``.

    Items with ``p > 0`` are skipped when ``exclude_seen`` is set. If that
    leaves nothing to rank the result is empty.
    """
    scores = score_items(model, p)
    exclude = np.flatnonzero(np.asarray(p) > 0) if exclude_seen else None
    return top_n(scores, n, exclude)


@dataclass(frozen=True)
class ColdStartMap:
    """Linear map ``W`` (k x n_features) from latent to feature space.

    Cold items are embedded by the minimum-norm least-squares solution of
    ``W^T v = f``, computed from a cached SVD of ``W^T``.
    """

    w: np.ndarray
    _basis_left: np.ndarray = field(repr=False)
    _inv_sv: np.ndarray = field(repr=False)
    _basis_right: np.ndarray = field(repr=False)

    @property
    def rank(self):
        return int(self._inv_sv.size)

    @classmethod
    def from_w(cls, w):
        w = _frozen(w)
        q, s, pt = np.linalg.svd(w.T, full_matrices=False)
        cutoff = (s[0] if s.size else 0.0) * max(w.shape) * np.finfo(float).eps
        r = int(np.count_nonzero(s > cutoff))
        return cls(w, _frozen(q[:, :r]), _frozen(1.0 / s[:r]), _frozen(pt[:r].T))


def cold_start_map(model, features):
    """Latent-to-feature map ``W = V^T S F`` of the training items.

    Computed as ``V_r^T F``, which equals ``V^T S F`` and needs no solve.

    Parameters
    ----------
    features : FeatureCatalog, SparseMatrix or ndarray
        Item features, one row per training item in model order.
    """
    F = features.assignments if isinstance(features, FeatureCatalog) else features
    if isinstance(F, SparseMatrix):
        if F.n_rows != model.n_items:
            raise DimensionError(f"feature matrix has {F.n_rows} rows, model has {model.n_items} items")
        w = F.matmat_t(model.v_right).T
    else:
        F = np.asarray(F, dtype=np.float64)
        if F.ndim != 2 or F.shape[0] != model.n_items:
            raise DimensionError(f"feature matrix has shape {F.shape}, model has {model.n_items} items")
        w = model.v_right.T @ F
    return ColdStartMap.from_w(w)


def cold_item_embed(cmap, f):
    """Latent vector of a cold item from its feature indicator vector."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (cmap.w.shape[1],):
        raise DimensionError(f"feature vector must have length {cmap.w.shape[1]}, got {f.shape}")
    if not np.any(f):
        raise HybridSVDError("cold item has no features")
    return cmap._basis_right @ (cmap._inv_sv * (cmap._basis_left.T @ f))


def cold_item_users(model, v, n=10):
    """Top-``n`` users for a cold item with latent vector ``v``; scores ``U (sigma * v)``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.k,):
        raise DimensionError(f"latent vector must have length {model.k}, got {v.shape}")
    return top_n(model.u @ (model.sigma * v), n)


# -- persistence -------------------------------------------------------------

_ARRAYS = ("sigma", "u_hat", "v_hat", "u", "v", "v_left", "v_right")


def save_model(model, path, **meta):
    """Write the model to a single ``.npz`` container.

    Extra keyword arguments (ids, provenance) are stored as JSON metadata.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "k": model.k,
        "scaling_d": model.scaling_d,
        "provenance": model.provenance,
        **meta,
    }
    arrays = {name: np.asarray(getattr(model, name)) for name in _ARRAYS}
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_model(path):
    """Read a model written by :func:`save_model`.

    Returns the model and the metadata dictionary.
    """
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["meta"]))
        arrays = {name: _frozen(data[name]) for name in _ARRAYS}
    if header.get("format_version") != FORMAT_VERSION:
        raise HybridSVDError(f"unsupported model format {header.get('format_version')!r}")
    model = HybridSvdModel(scaling_d=float(header["scaling_d"]),
                           provenance=header.get("provenance", {}), **arrays)
    return model, header

