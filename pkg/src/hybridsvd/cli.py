"""Command line interface.

Subcommands::

    hybridsvd train       fit one model per alpha and save it
    hybridsvd evaluate    cross-validated MRR / HR / coverage reports and figures
    hybridsvd recommend   top-n items for an item history
    hybridsvd coldstart   top-n users for a new item given its feature labels
    hybridsvd show-config print the effective configuration

``train``, ``evaluate`` and ``show-config`` read an optional flat
``key = value`` config file (``--config``); command line flags override its
values. Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 input / output or data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ConvergenceError, DataError, HybridSVDError, NotPositiveDefiniteError
from .evaluation import SCENARIOS, FactorCache, HybridSVDFactory, evaluate_grid, load_interactions, split
from .factorization import analysis_counts
from .model import (
    ColdStartMap,
    cold_item_embed,
    cold_item_users,
    cold_start_map,
    fit,
    load_model,
    recommend,
    save_model,
)
from .plotting import plot_rank_curves
from .similarity import read_feature_csv

log = logging.getLogger("hybridsvd")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(HybridSVDError):
    """Bad command line arguments."""


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    interactions: str = ""
    features: str = ""
    threshold: float = 1.0
    min_user: int = 0
    min_item: int = 0
    alpha: tuple = (0.0,)
    d: float = 1.0
    k_max: int = 50
    k_eval: tuple = ()
    n: tuple = (10,)
    scenario: str = "standard"
    seed: int = 0
    folds: int = 5
    tol: float = 1e-10
    output_dir: str = "output"

    def ranks(self):
        return self.k_eval or (self.k_max,)

    def validate(self, need_data=True):
        if need_data and not self.interactions:
            raise ConfigError("interactions path is not set")
        for a in self.alpha:
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"alpha must lie in [0, 1], got {a}")
        if not 0.0 <= self.d <= 1.0:
            raise ConfigError(f"d must lie in [0, 1], got {self.d}")
        if self.k_max < 1:
            raise ConfigError(f"k_max must be positive, got {self.k_max}")
        bad = [k for k in self.k_eval if not 1 <= k <= self.k_max]
        if bad:
            raise ConfigError(f"k_eval values must lie in [1, k_max={self.k_max}], got {bad}")
        if any(n < 1 for n in self.n):
            raise ConfigError(f"cutoffs n must be positive, got {list(self.n)}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}")
        if not 1 <= self.folds <= 5:
            raise ConfigError(f"folds must lie in [1, 5], got {self.folds}")
        if not self.alpha:
            raise ConfigError("at least one alpha is required")
        return self

    def digest(self):
        text = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


_LISTS = {"alpha": float, "k_eval": int, "n": int}
_SCALARS = {f.name: type(f.default) for f in fields(RunConfig) if f.name not in _LISTS}


def _convert(key, raw):
    raw = raw.strip()
    try:
        if key in _LISTS:
            return tuple(_LISTS[key](x) for x in raw.replace(",", " ").split())
        return _SCALARS[key](raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text, source="config"):
    """Values from a flat ``key = value`` text; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in _LISTS and key not in _SCALARS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _LISTS:
            v = ", ".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def _load_config(args):
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        values.update(parse_config(path.read_text(encoding="utf-8"), source=str(path)))
    for key in list(_LISTS) + list(_SCALARS):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _convert(key, flag) if isinstance(flag, str) else flag
    return RunConfig(**values)


# -- helpers -----------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, cfg, inputs, outputs):
    manifest = {
        "command": command,
        "version": __version__,
        "config": asdict(cfg) if cfg is not None else None,
        "config_hash": cfg.digest() if cfg is not None else None,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    path = Path(out_dir) / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_data(cfg):
    data = load_interactions(cfg.interactions, cfg.threshold, cfg.min_user, cfg.min_item)
    catalog = read_feature_csv(cfg.features) if cfg.features else None
    log.info("%d users, %d items, %d interactions", data.n_users, data.n_items, data.matrix.nnz)
    return data, catalog


def _require_features(cfg, why):
    if not cfg.features:
        raise ConfigError(f"a features file is required {why}")


def _alpha_tag(alpha):
    return f"{alpha:g}"


# -- commands ----------------------------------------------------------------

def cmd_train(cfg):
    """Fit a rank ``k_max`` model for every alpha and save it with a training log."""
    cfg.validate()
    if any(a > 0 for a in cfg.alpha):
        _require_features(cfg, "when alpha > 0")
    data, catalog = _load_data(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = min(cfg.k_max, min(data.matrix.shape))
    cache = FactorCache(catalog) if catalog is not None else None
    lines, outputs = [], []
    for alpha in cfg.alpha:
        before = analysis_counts()
        start = time.perf_counter()
        sim = factor = None
        if alpha > 0:
            sim, factor = cache.similarity(data.item_ids, alpha)
        model = fit(data.matrix, sim, k=k, d=cfg.d, item_factor=factor, seed=cfg.seed, tol=cfg.tol)
        elapsed = time.perf_counter() - start
        after = analysis_counts()
        path = out / f"model-alpha{_alpha_tag(alpha)}.npz"
        save_model(model, path, item_ids=list(data.item_ids), user_ids=list(data.user_ids),
                   alpha=alpha, config_hash=cfg.digest())
        outputs.append(path)
        spectrum = " ".join(f"{s:.6g}" for s in model.sigma)
        nnz = factor.nnz if factor is not None else "none (identity similarity)"
        lines += [
            f"alpha={alpha:g} k={model.k} d={cfg.d:g}",
            f"  sigma: {spectrum}",
            f"  cholesky nnz: {nnz}",
            f"  symbolic analyses: {after['symbolic'] - before['symbolic']}"
            f", numeric factorizations: {after['numeric'] - before['numeric']}",
            f"  wall time: {elapsed:.3f} s",
            f"  model: {path.name}",
        ]
    if cache is not None:
        lines.append(f"symbolic analyses total: {cache.symbolic_runs}"
                     f", numeric refactorizations: {cache.numeric_runs}")
    log_path = out / "train.log"
    log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    inputs = [cfg.interactions] + ([cfg.features] if cfg.features else [])
    _write_manifest(out, "train", cfg, inputs, outputs + [log_path])
    for line in lines:
        print(line)
    return outputs


def cmd_evaluate(cfg):
    """Cross-validated reports for every ``(k, n, alpha)``, plus one figure per cutoff.

    Each fold and alpha is fitted once at ``k_max``; smaller ranks are
    truncations of that fit.
    """
    cfg.validate()
    if any(a > 0 for a in cfg.alpha):
        _require_features(cfg, "when alpha > 0")
    if cfg.scenario == "cold_start":
        _require_features(cfg, "for the cold start scenario")
    data, catalog = _load_data(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    plans = [split(data, cfg.scenario, f, cfg.seed) for f in range(cfg.folds)]
    cache = FactorCache(catalog) if catalog is not None else None
    outputs, fits, evaluations = [], 0, 0
    curves = {n: {} for n in cfg.n}
    for alpha in cfg.alpha:
        factory = HybridSVDFactory(cfg.k_max, alpha, cfg.d, catalog=catalog, cache=cache,
                                   seed=cfg.seed, tol=cfg.tol)
        reports = evaluate_grid(factory, data, cfg.scenario, cfg.n, cfg.ranks(), cfg.folds,
                                cfg.seed, plans=plans, config={"alpha": alpha, "d": cfg.d})
        fits += factory.calls
        evaluations += factory.calls * len(cfg.ranks())
        for (k, n), rep in sorted(reports.items()):
            stem = f"report-k{k}-n{n}-alpha{_alpha_tag(alpha)}"
            csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
            csv_path.write_text(rep.to_text(), encoding="utf-8")
            json_path.write_text(rep.to_json(), encoding="utf-8")
            outputs += [csv_path, json_path]
            curves[n].setdefault(alpha, []).append((k, rep.mean("mrr"), rep.ci95("mrr")))
            print(f"alpha={alpha:g}\tk={k}\tn={n}\tmrr={rep.mean('mrr'):.6f}"
                  f"\thr={rep.mean('hr'):.6f}\tcoverage={rep.mean('coverage'):.6f}")
    for n, per_alpha in curves.items():
        fig = plot_rank_curves(per_alpha, out / f"mrr-n{n}.png", "mrr", n, cfg.scenario)
        outputs.append(fig)
    print(f"fits: {fits}, evaluations: {evaluations}")
    inputs = [cfg.interactions] + ([cfg.features] if cfg.features else [])
    _write_manifest(out, "evaluate", cfg, inputs, outputs)
    return {"fits": fits, "evaluations": evaluations, "outputs": outputs}


def _read_model(path):
    model, header = load_model(path)
    if "item_ids" not in header or "user_ids" not in header:
        raise DataError(f"{path}: model file has no id metadata")
    return model, header


def cmd_recommend(model_path, history, n=10, exclude_seen=True, out=None):
    """Print the top-``n`` items for an item history as ``item<TAB>score`` lines."""
    out = out or sys.stdout
    model, header = _read_model(model_path)
    if not history:
        raise UsageError("item history is empty")
    item_ids = header["item_ids"]
    index = {it: i for i, it in enumerate(item_ids)}
    unknown = [it for it in history if it not in index]
    if unknown:
        log.warning("ignoring unknown item ids: %s", ", ".join(unknown))
    known = [index[it] for it in history if it in index]
    if not known:
        raise UsageError("none of the history items is known to the model")
    p = np.zeros(model.n_items)
    p[known] = 1.0
    recs = recommend(model, p, n, exclude_seen=exclude_seen)
    if len(recs) == 0:
        log.warning("no items left to recommend")
    for i, s in zip(recs.entity_ids, recs.scores):
        out.write(f"{item_ids[i]}\t{s:.10g}\n")
    return [(item_ids[i], float(s)) for i, s in zip(recs.entity_ids, recs.scores)]


def _cold_map(model, model_path, catalog, item_ids):
    """Cold start map, cached next to the model and keyed by the catalog digest."""
    model_path = Path(model_path)
    cache = model_path.with_name(f"{model_path.stem}.coldmap-{catalog.digest()}.npz")
    if cache.exists():
        with np.load(cache, allow_pickle=False) as z:
            return ColdStartMap.from_w(z["w"]), cache
    cmap = cold_start_map(model, catalog.align(item_ids))
    with cache.open("wb") as fh:
        np.savez(fh, w=cmap.w)
    return cmap, cache


def cmd_coldstart(model_path, features_path, labels, n=10, out=None):
    """Print the top-``n`` training users for a new item with the given feature labels."""
    out = out or sys.stdout
    model, header = _read_model(model_path)
    catalog = read_feature_csv(features_path)
    f, unknown = catalog.feature_vector(labels)
    if unknown:
        log.warning("ignoring unknown feature labels: %s", ", ".join(unknown))
    if not np.any(f):
        raise UsageError("the cold item has no feature known to the catalog")
    cmap, _ = _cold_map(model, model_path, catalog, header["item_ids"])
    recs = cold_item_users(model, cold_item_embed(cmap, f), n)
    user_ids = header["user_ids"]
    for u, s in zip(recs.entity_ids, recs.scores):
        out.write(f"{user_ids[u]}\t{s:.10g}\n")
    return [(user_ids[u], float(s)) for u, s in zip(recs.entity_ids, recs.scores)]


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--interactions", help="user_id,item_id,rating CSV with header")
    p.add_argument("--features", help="item_id,feature_label CSV with header")
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-user", dest="min_user", type=int)
    p.add_argument("--min-item", dest="min_item", type=int)
    p.add_argument("--alpha", help="one or more values, comma separated")
    p.add_argument("--d", type=float, help="column scaling exponent")
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--k-eval", dest="k_eval", help="ranks to evaluate, comma separated")
    p.add_argument("--n", help="cutoffs, comma separated")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--output-dir", dest="output_dir")


def build_parser():
    parser = _Parser(prog="hybridsvd", description="HybridSVD recommender")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, text in (("train", "fit and save models"),
                       ("evaluate", "cross-validated evaluation"),
                       ("show-config", "print the effective configuration")):
        _add_config_flags(sub.add_parser(name, help=text))

    p = sub.add_parser("recommend", help="top-n items for an item history")
    p.add_argument("model")
    p.add_argument("items", nargs="*", help="item ids the user interacted with")
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--include-seen", action="store_true")

    p = sub.add_parser("coldstart", help="top-n users for a new item")
    p.add_argument("model")
    p.add_argument("features", help="feature CSV the catalog is read from")
    p.add_argument("labels", nargs="*", help="feature labels of the new item")
    p.add_argument("-n", type=int, default=10)
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "recommend":
        cmd_recommend(args.model, args.items, args.n, exclude_seen=not args.include_seen)
    elif args.command == "coldstart":
        cmd_coldstart(args.model, args.features, args.labels, args.n)
    else:
        cfg = _load_config(args)
        if args.command == "show-config":
            sys.stdout.write(format_config(cfg.validate(need_data=False)))
        elif args.command == "train":
            cmd_train(cfg)
        else:
            cmd_evaluate(cfg)
    return EXIT_OK


def exit_code(err):
    """Exit status for an exception raised by a command."""
    if isinstance(err, (ConfigError, UsageError)):
        return EXIT_USAGE
    if isinstance(err, (OSError, DataError, KeyError)):
        return EXIT_IO
    if isinstance(err, (NotPositiveDefiniteError, ConvergenceError, HybridSVDError,
                        np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return None


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(levelname)s: %(message)s")
    if argv is None:
        argv = sys.argv[1:]
    if "-v" in argv or "--verbose" in argv:
        logging.getLogger("hybridsvd").setLevel(logging.INFO)
    try:
        return run(argv)
    except SystemExit as exc:
        # argparse exits on usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except Exception as err:  # noqa: BLE001 - mapped to an exit status below
        code = exit_code(err)
        if code is None:
            raise
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"hybridsvd: error: {msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
