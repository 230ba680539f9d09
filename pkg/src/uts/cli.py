"""Command-line interface: ``uts <verb> [options]``.

Every verb reads an optional TOML config; command-line flags override the
matching config keys. Exit status is 0 on success, 2 for input or schema
problems and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import tomli

from . import retrieval
from .clustering import average_linkage
from .core import Metric, PointCloud, load_embeddings, normalize_rows
from .errors import ComponentFailure, ParseError, PreconditionError, SchemaError, UTSError
from .learn import ForestParams, SupervisedTable, cross_validate, fit_forest
from .signature import (
    DescriptorConfig,
    NormalizationState,
    SignatureVector,
    apply_normalization,
    compute_global_signature,
    compute_local_signature,
    correlation_report,
    fit_normalization,
    pca_reduce,
    read_signatures,
    signature_distance,
    signature_matrix,
    write_signatures,
)


# -- configuration -----------------------------------------------------------


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ParseError(f"config file {path} not found") from None
    except tomli.TOMLDecodeError as err:
        raise ParseError(f"{path}: {err}") from None


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


class Settings:
    """Config file values overlaid with command-line flags."""

    def __init__(self, args: argparse.Namespace):
        self.raw = load_config(args.config)
        self.section = dict(self.raw.get(args.command, {}))
        self.seeds = args.seed if args.seed is not None else list(self.raw.get("seeds", [0, 1, 2]))
        if not self.seeds:
            raise PreconditionError("seed list must be nonempty")
        self.desk_scale = args.desk_scale if args.desk_scale is not None else bool(self.raw.get("desk_scale", True))
        self.out = Path(args.out if args.out is not None else self.raw.get("out", "uts-out"))
        desc = dict(self.raw.get("descriptors", {}))
        if args.metric is not None:
            desc["metrics"] = [args.metric]
        self.descriptors = DescriptorConfig.from_mapping(desc, desk_scale=self.desk_scale)
        self.threads = _threads()

    def get(self, args: argparse.Namespace, key: str, default=None):
        value = getattr(args, key, None)
        if value is not None:
            return value
        return self.section.get(key, default)


def _threads() -> int:
    raw = os.environ.get("UTS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise PreconditionError(f"UTS_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise PreconditionError("UTS_THREADS must be >= 1")
    return n


def _map(fn, items, threads: int) -> list:
    """Ordered map; results do not depend on the worker count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- output helpers ----------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _write_csv(path: Path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_meta(settings: Settings, command: str, extra: dict | None = None) -> None:
    meta = {
        "command": command,
        "argv": sys.argv[1:],
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config_hash": settings.descriptors.config_hash(),
        "desk_scale": settings.desk_scale,
        "seeds": settings.seeds,
        "threads": settings.threads,
        "linkage": "average",
        "magnitude_convergence_fraction": 0.95,
    }
    meta.update(extra or {})
    _atomic_write(settings.out / f"{command}.meta.json", json.dumps(meta, indent=2) + "\n")


def _load_unit(path, format=None) -> PointCloud:
    cloud = load_embeddings(path, format)
    return cloud if cloud.is_unit_normalized() else normalize_rows(cloud)


def _source(path: str, args) -> dict:
    return {
        "model": getattr(args, "model", None) or Path(path).stem,
        "dataset": getattr(args, "dataset", None) or "",
    }


# -- verbs -------------------------------------------------------------------


def cmd_signature(args, settings: Settings) -> dict:
    jobs = [(path, seed) for path in args.inputs for seed in settings.seeds]
    clouds = {path: _load_unit(path, args.format) for path in args.inputs}

    def run(job):
        path, seed = job
        return compute_global_signature(clouds[path], settings.descriptors, seed, _source(path, args))

    vectors = _map(run, jobs, settings.threads)
    out = settings.out / "signatures.jsonl"
    settings.out.mkdir(parents=True, exist_ok=True)
    write_signatures(out, vectors)
    return {"signatures": str(out), "count": len(vectors)}


def _anchor_list(args, n: int) -> list[int]:
    if args.anchors_file:
        text = Path(args.anchors_file).read_text().split()
    else:
        text = (args.anchors or "").replace(",", " ").split()
    try:
        anchors = [int(a) for a in text]
    except ValueError:
        raise ParseError("anchors must be integers") from None
    if not anchors:
        raise PreconditionError("no anchors given")
    bad = [a for a in anchors if not 0 <= a < n]
    if bad:
        raise PreconditionError(f"anchors out of range for n={n}: {bad[:5]}")
    return anchors


def cmd_local_signature(args, settings: Settings) -> dict:
    cloud = _load_unit(args.input, args.format)
    k = int(settings.get(args, "k", 100))
    anchors = _anchor_list(args, cloud.n)
    jobs = [(a, s) for a in anchors for s in settings.seeds]

    def run(job):
        a, s = job
        return compute_local_signature(cloud, a, k, settings.descriptors, s, _source(args.input, args))

    vectors = _map(run, jobs, settings.threads)
    out = settings.out / "local_signatures.jsonl"
    settings.out.mkdir(parents=True, exist_ok=True)
    write_signatures(out, vectors)
    return {"signatures": str(out), "count": len(vectors), "k": k}


def _items(files: list[str]) -> dict[str, list[SignatureVector]]:
    """Group signatures into comparison items by source model.

    A (model, dataset, seed) key seen in two files makes the later file's
    signatures a separate item named ``model@file``.
    """
    items: dict[str, list[SignatureVector]] = {}
    seen: dict[tuple, str] = {}
    for path in files:
        for v in read_signatures(path):
            model = v.source.get("model", "") or Path(path).stem
            key = (model, v.source.get("dataset", ""), v.seed, v.anchor)
            name = model
            if key in seen and seen[key] != path:
                name = f"{model}@{Path(path).stem}"
            seen.setdefault(key, path)
            items.setdefault(name, []).append(v)
    return items


def _item_distance(a: list[SignatureVector], b: list[SignatureVector]) -> float:
    """Mean over shared datasets of the mean seed-matched distance."""
    by_a: dict[str, dict[int, SignatureVector]] = {}
    by_b: dict[str, dict[int, SignatureVector]] = {}
    for v in a:
        by_a.setdefault(v.source.get("dataset", ""), {})[v.seed] = v
    for v in b:
        by_b.setdefault(v.source.get("dataset", ""), {})[v.seed] = v
    shared = sorted(set(by_a) & set(by_b))
    if not shared:
        raise SchemaError("two items share no dataset to compare on")
    per_dataset = []
    for ds in shared:
        seeds = sorted(set(by_a[ds]) & set(by_b[ds]))
        pairs = [(by_a[ds][s], by_b[ds][s]) for s in seeds] or [
            (x, y) for x in by_a[ds].values() for y in by_b[ds].values()
        ]
        per_dataset.append(np.mean([signature_distance(x, y) for x, y in pairs]))
    return float(np.mean(per_dataset))


def cmd_compare(args, settings: Settings) -> dict:
    items = _items(args.inputs)
    if len(items) < 2:
        raise PreconditionError("compare needs signatures from at least two sources")
    everything = [v for vs in items.values() for v in vs]
    hashes = {v.config_hash for v in everything}
    if len(hashes) > 1:
        raise SchemaError(f"signatures come from {len(hashes)} different descriptor configs")
    state = fit_normalization(everything)
    normed = {k: [apply_normalization(v, state) for v in vs] for k, vs in items.items()}
    names = list(normed)
    n = len(names)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = _item_distance(normed[names[i]], normed[names[j]])
    dendro = average_linkage(dist, labels=names)
    out = settings.out
    _write_csv(out / "distances.csv", ["item", *names], [[nm, *map(float, row)] for nm, row in zip(names, dist)])
    _atomic_write(out / "dendrogram.json", dendro.to_json() + "\n")
    _atomic_write(out / "normalization.json", json.dumps(state.to_dict(), indent=2) + "\n")
    means = np.vstack([signature_matrix(normed[nm]).mean(axis=0) for nm in names])
    pca = pca_reduce(means, min(2, max(1, n - 1)), ids=state.kept, row_ids=names)
    coords = np.zeros((n, 2))
    coords[:, : pca.n_components] = pca.coordinates
    _write_csv(out / "projection.csv", ["item", "pc1", "pc2"], [[nm, float(x), float(y)] for nm, (x, y) in zip(names, coords)])
    return {"items": names}


def cmd_retrieve(args, settings: Settings) -> dict:
    queries = _load_unit(args.queries, args.format)
    docs = _load_unit(args.docs, args.format)
    c = int(settings.get(args, "c", retrieval.DEFAULT_CUTOFF))
    qids = retrieval.load_ids(args.query_ids) if args.query_ids else None
    dids = retrieval.load_ids(args.doc_ids) if args.doc_ids else None
    run = retrieval.dense_retrieve(queries, docs, c, qids, dids)
    settings.out.mkdir(parents=True, exist_ok=True)
    path = settings.out / "run.trec"
    run.to_trec(path)
    return {"run": str(path), "queries": queries.n, "c": c}


def cmd_retrievability(args, settings: Settings) -> dict:
    queries = _load_unit(args.queries, args.format)
    docs = _load_unit(args.docs, args.format)
    c = int(settings.get(args, "c", retrieval.DEFAULT_CUTOFF))
    m = int(settings.get(args, "m", 100))
    k = int(settings.get(args, "k", 100))
    if args.query_subset:
        rows = [int(r) for r in Path(args.query_subset).read_text().split()]
        queries = queries.take(rows)
    doc_ids = [str(i) for i in range(docs.n)]
    run = retrieval.dense_retrieve(queries, docs, c, doc_ids=doc_ids)
    table = retrieval.retrievability(run, doc_ids)
    g = retrieval.gini(table)
    top, bottom = retrieval.select_extremes(table, m)
    jobs = [(int(d), 1, s) for d in top for s in settings.seeds] + [(int(d), 0, s) for d in bottom for s in settings.seeds]
    source = _source(args.docs, args)

    def run_local(job):
        anchor, label, seed = job
        v = compute_local_signature(docs, anchor, k, settings.descriptors, seed, source)
        v.labels = {"retrievable": label, "retrievability": table.counts[str(anchor)]}
        return v

    vectors = _map(run_local, jobs, settings.threads)
    out = settings.out
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "retrievability.csv")
    _atomic_write(out / "gini.json", json.dumps({"gini": g, "c": c, "queries": queries.n, "documents": docs.n}, indent=2) + "\n")
    write_signatures(out / "extremes.jsonl", vectors)
    return {"gini": g, "labelled": len(vectors)}


def cmd_eval(args, settings: Settings) -> dict:
    run = retrieval.RankedRun.from_trec(args.run)
    qrels = retrieval.read_qrels(args.qrels)
    cutoffs = settings.get(args, "cutoffs", list(retrieval.DEFAULT_EVAL_CUTOFFS))
    if isinstance(cutoffs, str):
        cutoffs = [int(k) for k in cutoffs.split(",")]
    report = retrieval.eval_metrics(run, qrels, cutoffs)
    if not report.per_query:
        raise PreconditionError("no query in the run has relevant documents")
    settings.out.mkdir(parents=True, exist_ok=True)
    report.to_csv(settings.out / "eval.csv")
    return {"mean": report.mean, "skipped": report.skipped}


def _read_targets(path) -> dict:
    """CSV with columns ``model,dataset,target`` (``anchor`` optional)."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"model", "dataset", "target"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: need columns model, dataset, target")
        for lineno, row in enumerate(reader, start=2):
            anchor = row.get("anchor") or None
            key = (row["model"], row["dataset"], int(anchor) if anchor is not None else None)
            out[key] = row["target"]
    return out


def cmd_predict(args, settings: Settings) -> dict:
    vectors = [v for path in args.inputs for v in read_signatures(path)]
    if not vectors:
        raise SchemaError("no signatures to learn from")
    task = settings.get(args, "task", "classify")
    folds = int(settings.get(args, "folds", 3))
    group_by = settings.get(args, "group_by", "dataset")
    if args.targets:
        table_targets = _read_targets(args.targets)
        targets = []
        for v in vectors:
            key = (v.source.get("model", ""), v.source.get("dataset", ""), v.anchor)
            if key not in table_targets:
                raise SchemaError(f"no target for {key}")
            targets.append(table_targets[key])
    else:
        name = settings.get(args, "target", "retrievable")
        try:
            targets = [v.labels[name] for v in vectors]
        except KeyError:
            raise SchemaError(f"signature without label {name!r}") from None
    y = np.array([float(t) for t in targets]) if task == "regress" else np.array([str(t) for t in targets])
    groups = np.array([v.source.get(group_by, "") for v in vectors])
    ids = vectors[0].ids
    row_ids = [f"{v.key}#{v.anchor}#{v.seed}#{i}" for i, v in enumerate(vectors)]
    table = SupervisedTable(signature_matrix(vectors, ids), y, groups, tuple(row_ids), ids)
    params = ForestParams(
        task=task,
        n_trees=int(settings.get(args, "n_trees", 200)),
        max_depth=int(settings.get(args, "max_depth", 5)),
        seed=int(settings.seeds[0]),
    )
    pca = settings.get(args, "pca", None)
    result = cross_validate(table, params, folds, normalize=True, pca_components=pca)
    out = settings.out
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "cv.csv")
    _write_csv(
        out / "importance.csv",
        ["feature", "importance"],
        sorted(([k, float(v)] for k, v in result.importances.items()), key=lambda r: (-r[1], r[0])),
    )
    _write_csv(out / "predictions.csv", ["row", "prediction"], [[k, v] for k, v in result.predictions.items()])
    # final model on all rows, for reuse
    state = np.max(np.abs(table.features), axis=0)
    keep = state > 0
    full = SupervisedTable(table.features[:, keep] / state[keep], y, groups, tuple(row_ids), tuple(np.array(ids)[keep]))
    model = fit_forest(full, params)
    _atomic_write(out / "model.json", model.to_json() + "\n")
    return {"summary": result.summary()}


def _parse_sizes(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    return [int(s) for s in str(text).split(",") if s.strip()]


def cmd_sweep(args, settings: Settings) -> dict:
    cloud = _load_unit(args.input, args.format)
    descriptor = settings.get(args, "descriptor")
    if descriptor is None:
        raise PreconditionError("sweep needs --descriptor")
    sizes = _parse_sizes(settings.get(args, "sizes", "100,200,500,1000"))
    if sizes != sorted(sizes):
        raise PreconditionError("sizes must be ascending")
    if any(s > cloud.n for s in sizes):
        warnings.warn(f"sizes above n={cloud.n} are clamped", stacklevel=2)
        sizes = sorted({min(s, cloud.n) for s in sizes})
    rows = []
    for size in sizes:
        cfg = DescriptorConfig(
            **{
                **settings.descriptors.to_dict(),
                "descriptors": (descriptor,),
                "budgets": {**settings.descriptors.budgets, descriptor: size},
            }
        )
        values: dict[str, list[float]] = {}
        times = []
        for seed in settings.seeds:
            start = time.perf_counter()
            vec = compute_global_signature(cloud, cfg, seed)
            times.append(max(time.perf_counter() - start, 1e-9))
            for cid, val in vec.components.items():
                values.setdefault(cid, []).append(val)
        for cid, vals in values.items():
            rows.append([size, cid, float(np.mean(vals)), float(np.std(vals)), float(np.mean(times))])
    _write_csv(settings.out / "sweep.csv", ["size", "component", "mean", "sd", "wall_time"], rows)
    return {"rows": len(rows)}


def _read_extras(path) -> dict:
    out: dict[str, dict[str, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "model" not in reader.fieldnames:
            raise SchemaError(f"{path}: need a model column")
        for row in reader:
            try:
                out[row["model"]] = {k: float(v) for k, v in row.items() if k not in ("model", "dataset")}
            except ValueError:
                raise ParseError(f"{path}: non-numeric property for model {row['model']}") from None
    return out


def cmd_correlations(args, settings: Settings) -> dict:
    vectors = [v for path in args.inputs for v in read_signatures(path)]
    extras = _read_extras(args.extras) if args.extras else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        report = correlation_report(vectors, extras)
    settings.out.mkdir(parents=True, exist_ok=True)
    report.to_csv(settings.out / "correlations.csv")
    report.matrix_csv(settings.out / "correlation_matrix.csv")
    return {"components": len(report.names)}


def cmd_normalize(args, settings: Settings) -> dict:
    vectors = [v for path in args.inputs for v in read_signatures(path)]
    if args.state:
        state = NormalizationState.from_dict(json.loads(Path(args.state).read_text()))
    else:
        state = fit_normalization(vectors)
        _atomic_write(settings.out / "normalization.json", json.dumps(state.to_dict(), indent=2) + "\n")
    normed = [apply_normalization(v, state) for v in vectors]
    settings.out.mkdir(parents=True, exist_ok=True)
    write_signatures(settings.out / "normalized.jsonl", normed)
    return {"count": len(normed), "dropped": list(state.constant)}


def cmd_reduce(args, settings: Settings) -> dict:
    vectors = [v for path in args.inputs for v in read_signatures(path)]
    target = settings.get(args, "components", None)
    target = int(target) if target is not None else float(settings.get(args, "variance", 0.91))
    pca = pca_reduce(vectors, target)
    out = settings.out
    names = [f"pc{i + 1}" for i in range(pca.n_components)]
    _write_csv(
        out / "reduced.csv",
        ["model", "dataset", "seed", *names],
        [[v.source.get("model", ""), v.source.get("dataset", ""), v.seed, *map(float, row)] for v, row in zip(vectors, pca.coordinates)],
    )
    _write_csv(out / "loadings.csv", ["component", *names], [[cid, *map(float, col)] for cid, col in zip(pca.ids, pca.loadings.T)])
    _write_csv(out / "explained.csv", ["component", "variance_ratio"], [[nm, float(r)] for nm, r in zip(names, pca.explained)])
    return {"components": pca.n_components, "explained": float(pca.explained.sum())}


VERBS = {
    "signature": cmd_signature,
    "local-signature": cmd_local_signature,
    "compare": cmd_compare,
    "retrieve": cmd_retrieve,
    "retrievability": cmd_retrievability,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "correlations": cmd_correlations,
    "normalize": cmd_normalize,
    "reduce": cmd_reduce,
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="TOML configuration file")
    shared.add_argument("--seed", type=_parse_seeds, help="comma-separated seeds (default 0,1,2)")
    shared.add_argument("--metric", choices=[m.value for m in Metric], help="restrict to one metric variant")
    scale = shared.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", dest="desk_scale", action="store_true", default=None, help="sample budgets divided by ten (default)")
    scale.add_argument("--full-scale", dest="desk_scale", action="store_false", help="full sample budgets")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("--format", choices=["binary", "csv"], help="embedding format (default: by suffix)")

    parser = argparse.ArgumentParser(prog="uts", description="Topological signatures of embedding spaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("signature", parents=[shared], help="global signatures per input and seed")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--model")
    p.add_argument("--dataset")

    p = sub.add_parser("local-signature", parents=[shared], help="neighbourhood signatures around anchors")
    p.add_argument("input")
    p.add_argument("--anchors", help="comma-separated row indices")
    p.add_argument("--anchors-file")
    p.add_argument("--k", type=int)
    p.add_argument("--model")
    p.add_argument("--dataset")

    p = sub.add_parser("compare", parents=[shared], help="distances, dendrogram and projection")
    p.add_argument("inputs", nargs="+")

    p = sub.add_parser("retrieve", parents=[shared], help="exact dense retrieval to a TREC run")
    p.add_argument("queries")
    p.add_argument("docs")
    p.add_argument("--c", type=int)
    p.add_argument("--query-ids")
    p.add_argument("--doc-ids")

    p = sub.add_parser("retrievability", parents=[shared], help="retrievability, Gini and labelled local signatures")
    p.add_argument("queries")
    p.add_argument("docs")
    p.add_argument("--m", type=int)
    p.add_argument("--c", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--query-subset", help="file with query row indices to use")
    p.add_argument("--model")
    p.add_argument("--dataset")

    p = sub.add_parser("eval", parents=[shared], help="Recall, MAP and NDCG of a TREC run")
    p.add_argument("run")
    p.add_argument("qrels")
    p.add_argument("--cutoffs")

    p = sub.add_parser("predict", parents=[shared], help="grouped cross-validated forest prediction")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--targets", help="CSV with model,dataset[,anchor],target")
    p.add_argument("--target", help="label key inside the signature records")
    p.add_argument("--task", choices=["classify", "regress"])
    p.add_argument("--folds", type=int)
    p.add_argument("--group-by", dest="group_by", choices=["dataset", "model"])
    p.add_argument("--n-trees", dest="n_trees", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--pca", type=float)

    p = sub.add_parser("sweep", parents=[shared], help="descriptor value and runtime against sample size")
    p.add_argument("input")
    p.add_argument("--descriptor")
    p.add_argument("--sizes")

    p = sub.add_parser("correlations", parents=[shared], help="descriptor correlation report")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--extras", help="CSV of per-model properties")

    p = sub.add_parser("normalize", parents=[shared], help="max-abs normalisation of signatures")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--state", help="apply a stored normalisation instead of fitting one")

    p = sub.add_parser("reduce", parents=[shared], help="PCA of normalised signatures")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--components", type=int)
    p.add_argument("--variance", type=float)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if getattr(args, "pca", None) is not None and float(args.pca).is_integer() and args.pca >= 1:
        args.pca = int(args.pca)
    try:
        settings = Settings(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary = VERBS[args.command](args, settings)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        _write_meta(settings, args.command, {"summary": summary})
    except ComponentFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except UTSError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return err.exit_code
    except (FileNotFoundError, IsADirectoryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as err:
        print(f"error: invalid JSON: {err}", file=sys.stderr)
        return 2
    except FloatingPointError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    print(json.dumps(summary, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
