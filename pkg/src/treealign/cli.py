"""Command-line pipeline: split, align, embed, evaluate, pipeline.

Every run is reproducible: outputs depend only on the resolved
configuration (flags win over the config file, which wins over
defaults), and no output file contains timestamps or machine state.
Stage timings go to stderr via logging.  Exit codes: 0 success, 1 usage
error, 2 data validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import SplitSpec, split
from .core import (
    UNLABELED,
    Coupling,
    DataValidationError,
    LabeledDomain,
    NumericalError,
    RngConfig,
    load_domain,
)
from .embed import EmbedParams
from .forest import ForestParams
from .metrics import (
    alignment_score,
    foscttm,
    integration_suite,
    label_transfer_accuracy,
)
from .pipeline import align_domains, embed_joint
from .transport import DEFAULT_EXACT_CAP, HiRefParams

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad command line or config; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit(2); we pin usage = 1
        raise UsageError(message)


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# Option resolution: flag > config file > default
# ---------------------------------------------------------------------------

_OPTION_DEFAULTS = {
    "label_column": "label",
    "kind": "rotate",
    "split_seed": 0,
    "sigma": 0.5,
    "noise_ratio": 10,
    "mask_fraction": 0.0,
    "trees": 100,
    "max_features": 0,
    "min_leaf": 1,
    "max_depth": 0,
    "exact_cap": DEFAULT_EXACT_CAP,
    "threads": 1,
    "base_size": 64,
    "branching": 2,
    "kmeans_iters": 50,
    "restarts": 4,
    "out_dims": 2,
    "time": 0,
    "landmarks": 2000,
    "mds_iters": 100,
    "metrics": "all",
    "metric_k": 5,
    "repeat": 1,
    "out_dir": "treealign_out",
}

_FLAG_OPTIONS = ("exact", "subsample", "dump_affinities", "resume")


class Options:
    """Resolved configuration for one command."""

    def __init__(self, args: argparse.Namespace):
        section = {}
        if getattr(args, "config", None):
            parser = configparser.ConfigParser()
            read = parser.read(args.config)
            if not read:
                raise UsageError(f"config file not found: {args.config}")
            if parser.has_section("treealign"):
                section = dict(parser.items("treealign"))
            else:
                section = dict(parser.defaults())
        self._args = args
        self._section = section

    def _lookup(self, name: str, default, conv):
        flag = getattr(self._args, name, None)
        if flag is not None:
            return flag
        if name in self._section:
            raw = self._section[name]
            try:
                if conv is bool:
                    return raw.strip().lower() in ("1", "true", "yes", "on")
                return conv(raw)
            except ValueError as exc:
                raise UsageError(f"config value {name}={raw!r}: {exc}") from exc
        return default

    def get(self, name: str):
        if name in _FLAG_OPTIONS:
            return bool(self._lookup(name, False, bool))
        default = _OPTION_DEFAULTS.get(name)
        conv = type(default) if default is not None else str
        return self._lookup(name, default, conv)

    def str_opt(self, name: str) -> str | None:
        return self._lookup(name, None, str)

    def require_seed(self) -> int:
        seed = self._lookup("seed", None, int)
        if seed is None:
            raise UsageError("--seed is mandatory (directly or via config)")
        return int(seed)


def _forest_params(opt: Options) -> ForestParams:
    return ForestParams(
        n_trees=int(opt.get("trees")),
        max_features=int(opt.get("max_features")) or None,
        min_leaf=int(opt.get("min_leaf")),
        max_depth=int(opt.get("max_depth")) or None,
    )


def _hiref_params(opt: Options) -> HiRefParams:
    return HiRefParams(
        base_size=int(opt.get("base_size")),
        branching=int(opt.get("branching")),
        kmeans_iters=int(opt.get("kmeans_iters")),
        restarts=int(opt.get("restarts")),
    )


def _embed_params(opt: Options) -> EmbedParams:
    return EmbedParams(
        out_dims=int(opt.get("out_dims")),
        t=int(opt.get("time")) or None,
        landmarks=int(opt.get("landmarks")),
        mds_iters=int(opt.get("mds_iters")),
    )


# ---------------------------------------------------------------------------
# File formats (all re-parseable, all byte-deterministic)
# ---------------------------------------------------------------------------


def write_domain_csv(path: Path, domain: LabeledDomain) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"feature_{j}" for j in range(domain.dim)] + ["label"])
        for i in range(domain.n):
            row = [_fmt(v) for v in domain.features[i]]
            lab = domain.labels[i]
            row.append("" if lab == UNLABELED else str(int(lab)))
            writer.writerow(row)


def write_correspondence_csv(
    path: Path, corr: np.ndarray, labels_a: np.ndarray, labels_b: np.ndarray
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index_a", "index_b", "label_a", "label_b"])
        for i, j in enumerate(corr):
            writer.writerow([i, int(j), int(labels_a[i]), int(labels_b[int(j)])])


def read_correspondence_csv(path: Path):
    rows = _read_csv(path, ["index_a", "index_b", "label_a", "label_b"])
    idx_a = np.array([int(r[0]) for r in rows], dtype=np.int64)
    idx_b = np.array([int(r[1]) for r in rows], dtype=np.int64)
    lab_a = np.array([int(r[2]) for r in rows], dtype=np.int64)
    lab_b = np.array([int(r[3]) for r in rows], dtype=np.int64)
    return idx_a, idx_b, lab_a, lab_b


def write_coupling_csv(path: Path, coupling: Coupling) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index_a", "index_b"])
        for i, j in enumerate(coupling.forward):
            writer.writerow([i, int(j)])


def read_coupling_csv(path: Path) -> Coupling:
    rows = _read_csv(path, ["index_a", "index_b"])
    forward = np.empty(len(rows), dtype=np.int64)
    for r in rows:
        forward[int(r[0])] = int(r[1])
    return Coupling(forward)


def write_affinity_csv(path: Path, matrix) -> None:
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "value"])
        for k in order:
            writer.writerow([int(coo.row[k]), int(coo.col[k]), _fmt(coo.data[k])])


def write_embedding_csv(
    path: Path, coords: np.ndarray, domains: list[str], indices: np.ndarray,
    labels: np.ndarray,
) -> None:
    dims = coords.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["domain", "index", "label"] + [f"dim_{k}" for k in range(dims)])
        for i in range(coords.shape[0]):
            lab = labels[i]
            writer.writerow(
                [domains[i], int(indices[i]), "" if lab == UNLABELED else str(int(lab))]
                + [_fmt(v) for v in coords[i]]
            )


def read_embedding_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataValidationError(f"{path}: empty embedding file")
    header = rows[0]
    dims = len(header) - 3
    if header[:3] != ["domain", "index", "label"] or dims < 1:
        raise DataValidationError(f"{path}: not an embedding file")
    body = rows[1:]
    coords = np.array([[float(v) for v in r[3:]] for r in body])
    domains = [r[0] for r in body]
    indices = np.array([int(r[1]) for r in body], dtype=np.int64)
    labels = np.array(
        [int(r[2]) if r[2] != "" else UNLABELED for r in body], dtype=np.int64
    )
    return coords, domains, indices, labels


def _read_csv(path: Path, expected_header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != expected_header:
        raise DataValidationError(
            f"{path}: expected header {expected_header}, got {rows[0] if rows else 'empty'}"
        )
    return rows[1:]


def write_metrics_csv(path: Path, scores: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name in sorted(scores):
            writer.writerow([name, _fmt(scores[name])])


def _write_manifest(path: Path, entries: dict) -> None:
    lines = [f"{k}={entries[k]}" for k in sorted(entries)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _manifest_matches(path: Path, entries: dict) -> bool:
    if not path.exists():
        return False
    lines = [f"{k}={entries[k]}" for k in sorted(entries)]
    return path.read_text(encoding="utf-8") == "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG scatter (dependency-free, diffable)
# ---------------------------------------------------------------------------

_PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc949", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)


def write_scatter_svg(path: Path, coords: np.ndarray, categories, title: str) -> None:
    """2-D scatter with one circle per sample, categorically colored.

    Higher-dimensional coordinates are projected onto the first two
    dimensions, with a note in the plot subtitle.
    """
    width, height, margin = 640.0, 480.0, 48.0
    note = ""
    xy = np.asarray(coords, dtype=np.float64)
    if xy.shape[1] > 2:
        note = f" (showing dim_0/dim_1 of {xy.shape[1]})"
        xy = xy[:, :2]
    elif xy.shape[1] == 1:
        xy = np.hstack([xy, np.zeros_like(xy)])
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    span = np.where(hi - lo > 0.0, hi - lo, 1.0)

    cats = [str(c) for c in categories]
    order = sorted(set(cats))
    color_of = {c: _PALETTE[i % len(_PALETTE)] for i, c in enumerate(order)}

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="#ffffff"/>',
        f'<text x="{margin:.0f}" y="24" font-family="sans-serif" font-size="14">'
        f"{title}{note}</text>",
    ]
    for i in range(xy.shape[0]):
        px = margin + (xy[i, 0] - lo[0]) / span[0] * (width - 2 * margin)
        py = height - margin - (xy[i, 1] - lo[1]) / span[1] * (height - 2 * margin)
        parts.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color_of[cats[i]]}" '
            f'fill-opacity="0.75"/>'
        )
    for i, cat in enumerate(order):
        y = 40.0 + 16.0 * i
        parts.append(
            f'<circle cx="{width - margin - 90:.1f}" cy="{y:.1f}" r="4" '
            f'fill="{color_of[cat]}"/>'
        )
        parts.append(
            f'<text x="{width - margin - 80:.1f}" y="{y + 4:.1f}" '
            f'font-family="sans-serif" font-size="11">{cat}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Stage runners
# ---------------------------------------------------------------------------


def _stage_split(opt: Options, out_dir: Path, seed: int):
    """Split one input CSV into domains A and B (with optional masking)."""
    input_path = opt.str_opt("input")
    if not input_path:
        raise UsageError("split requires --input")
    label_column = str(opt.get("label_column"))
    kind = str(opt.get("kind"))
    mask = float(opt.get("mask_fraction"))
    rng = RngConfig(seed)
    spec = SplitSpec(
        kind=kind,
        seed=int(opt.get("split_seed")),
        noise_ratio=int(opt.get("noise_ratio")),
        sigma=float(opt.get("sigma")),
    )
    manifest = {
        "stage": "split",
        "input": input_path,
        "label_column": label_column,
        "kind": kind,
        "split_seed": spec.seed,
        "noise_ratio": spec.noise_ratio,
        "sigma": spec.sigma,
        "mask_fraction": mask,
        "seed": seed,
        "version": __version__,
    }
    manifest_path = out_dir / "manifest_split.txt"
    paths = [out_dir / "A.csv", out_dir / "B.csv", out_dir / "correspondence.csv"]
    if opt.get("resume") and _manifest_matches(manifest_path, manifest) and all(
        p.exists() for p in paths
    ):
        logger.info("stage=split reused existing outputs")
        return paths
    truth = load_domain(input_path, label_column)
    observed = load_domain(
        input_path, label_column, mask_fraction=mask, rng=rng
    )
    dom_a, dom_b, corr = split(observed, spec, rng)
    write_domain_csv(paths[0], dom_a)
    write_domain_csv(paths[1], dom_b)
    write_correspondence_csv(paths[2], corr, truth.labels, truth.labels)
    _write_manifest(manifest_path, manifest)
    return paths


def _load_pair(opt: Options, seed: int):
    path_a = opt.str_opt("domain_a")
    path_b = opt.str_opt("domain_b")
    if not path_a or not path_b:
        raise UsageError("need --domain-a and --domain-b (or --input for pipeline)")
    label_column = str(opt.get("label_column"))
    mask = float(opt.get("mask_fraction"))
    rng = RngConfig(seed)
    dom_a = load_domain(path_a, label_column, mask_fraction=mask, rng=rng, name="A")
    dom_b = load_domain(path_b, label_column, mask_fraction=mask, rng=rng, name="B")
    return dom_a, dom_b


def _align_manifest(opt: Options, seed: int) -> dict:
    return {
        "stage": "align",
        "seed": seed,
        "trees": int(opt.get("trees")),
        "max_features": int(opt.get("max_features")),
        "min_leaf": int(opt.get("min_leaf")),
        "max_depth": int(opt.get("max_depth")),
        "exact": bool(opt.get("exact")),
        "exact_cap": int(opt.get("exact_cap")),
        "subsample": bool(opt.get("subsample")),
        "base_size": int(opt.get("base_size")),
        "branching": int(opt.get("branching")),
        "kmeans_iters": int(opt.get("kmeans_iters")),
        "restarts": int(opt.get("restarts")),
        "mask_fraction": float(opt.get("mask_fraction")),
        "version": __version__,
    }


def _stage_align(opt: Options, out_dir: Path, seed: int, dom_a, dom_b):
    result = align_domains(
        dom_a,
        dom_b,
        forest_params=_forest_params(opt),
        hiref_params=_hiref_params(opt),
        rng=RngConfig(seed),
        exact=bool(opt.get("exact")),
        exact_cap=int(opt.get("exact_cap")),
        subsample=bool(opt.get("subsample")),
        threads=int(opt.get("threads")),
    )
    write_coupling_csv(out_dir / "coupling.csv", result.coupling)
    if opt.get("dump_affinities"):
        write_affinity_csv(out_dir / "affinity_a.csv", result.w_a.matrix)
        write_affinity_csv(out_dir / "affinity_b.csv", result.w_b.matrix)
        write_affinity_csv(out_dir / "affinity_joint.csv", result.w_joint.matrix)
    _write_manifest(out_dir / "manifest_align.txt", _align_manifest(opt, seed))
    logger.info(
        "coupling fixed-point fraction: %.4f, transport cost: %.6f",
        result.coupling.fixed_point_fraction(),
        result.transport_cost,
    )
    return result


def _embedding_rows(result, coords):
    n_a = result.domain_a.n
    domains = ["A"] * n_a + ["B"] * result.domain_b.n
    indices = np.concatenate(
        [np.arange(n_a, dtype=np.int64), np.arange(result.domain_b.n, dtype=np.int64)]
    )
    labels = np.concatenate([result.domain_a.labels, result.domain_b.labels])
    return domains, indices, labels


def _stage_embed(opt: Options, out_dir: Path, seed: int, result):
    coords = embed_joint(result, _embed_params(opt), RngConfig(seed))
    domains, indices, labels = _embedding_rows(result, coords)
    write_embedding_csv(out_dir / "embedding.csv", coords, domains, indices, labels)
    write_scatter_svg(out_dir / "scatter_domain.svg", coords, domains, "domains")
    label_cats = ["masked" if lab == UNLABELED else str(int(lab)) for lab in labels]
    write_scatter_svg(out_dir / "scatter_label.svg", coords, label_cats, "labels")
    manifest = _align_manifest(opt, seed)
    manifest.update(
        {
            "stage": "embed",
            "out_dims": int(opt.get("out_dims")),
            "time": int(opt.get("time")),
            "landmarks": int(opt.get("landmarks")),
            "mds_iters": int(opt.get("mds_iters")),
        }
    )
    _write_manifest(out_dir / "manifest_embed.txt", manifest)
    return coords


_ALIGNMENT_METRICS = ("label_transfer_accuracy", "alignment_score", "foscttm")
_INTEGRATION_METRICS = (
    "nmi", "ari", "kmeans_nmi", "kmeans_ari", "silhouette_label", "clisi",
    "isolated_labels", "bras", "ilisi", "kbet", "graph_connectivity",
    "pcr_comparison", "bio_aggregate", "batch_aggregate",
)


def _stage_evaluate(opt: Options, out_dir: Path, seed: int, result, coords):
    selection = str(opt.get("metrics"))
    wanted = {s.strip() for s in selection.split(",") if s.strip()}
    if "all" in wanted:
        wanted = set(_ALIGNMENT_METRICS) | set(_INTEGRATION_METRICS)
    elif "alignment" in wanted:
        wanted |= set(_ALIGNMENT_METRICS)
        wanted.discard("alignment")
    elif "integration" in wanted:
        wanted |= set(_INTEGRATION_METRICS)
        wanted.discard("integration")
    unknown = wanted - set(_ALIGNMENT_METRICS) - set(_INTEGRATION_METRICS)
    if unknown:
        raise UsageError(f"unknown metrics: {sorted(unknown)}")

    k = int(opt.get("metric_k"))
    dom_a, dom_b = result.domain_a, result.domain_b
    n_a = dom_a.n
    domain_ids = np.concatenate(
        [np.zeros(n_a, dtype=np.int64), np.ones(dom_b.n, dtype=np.int64)]
    )
    rng = RngConfig(seed)
    scores: dict = {}

    corr_path = opt.str_opt("correspondence")
    truth = None
    if corr_path:
        truth = read_correspondence_csv(Path(corr_path))

    if "alignment_score" in wanted:
        scores["alignment_score"] = alignment_score(coords, domain_ids, k)
    if truth is not None:
        idx_a, idx_b, lab_a, lab_b = truth
        if "foscttm" in wanted:
            scores["foscttm"] = foscttm(coords[idx_a], coords[n_a + idx_b])
        if "label_transfer_accuracy" in wanted:
            masked = np.flatnonzero(dom_b.labels == UNLABELED)
            if masked.size:
                true_of_b = np.full(dom_b.n, UNLABELED, dtype=np.int64)
                true_of_b[idx_b] = lab_b
                scores["label_transfer_accuracy"] = label_transfer_accuracy(
                    coords, dom_a.labels, n_a + masked, true_of_b[masked], k
                )

    if wanted & set(_INTEGRATION_METRICS):
        if truth is not None:
            labels = np.concatenate([truth[2], truth[3][np.argsort(truth[1])]])
            keep = np.arange(coords.shape[0])
        else:
            labels = np.concatenate([dom_a.labels, dom_b.labels])
            keep = np.flatnonzero(labels != UNLABELED)
        sub_coords = coords[keep]
        sub_labels = labels[keep]
        sub_batches = domain_ids[keep]
        if dom_a.dim == dom_b.dim:
            features = np.vstack([dom_a.features, dom_b.features])[keep]
        else:
            features = None
            logger.info(
                "pcr_comparison skipped: domains have different feature widths"
            )
        suite = integration_suite(
            sub_coords,
            sub_labels,
            sub_batches,
            features if features is not None else sub_coords,
            rng,
        )
        if features is None:
            for name in ("pcr_comparison", "batch_aggregate"):
                suite.pop(name, None)
        scores.update({k2: v for k2, v in suite.items() if k2 in wanted})

    write_metrics_csv(out_dir / "metrics.csv", scores)
    summary = {
        "metrics": {name: scores[name] for name in sorted(scores)},
        "aggregation": {
            "bio_slots": 7,
            "batch_slots": 5,
            "cluster_nmi": "kmeans substituted for community detection",
            "cluster_ari": "kmeans substituted for community detection",
        },
        "seed": seed,
        "version": __version__,
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return scores


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_split(opt: Options) -> int:
    out_dir = Path(opt.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    _stage_split(opt, out_dir, opt.require_seed())
    return 0


def _run_through(opt: Options, out_dir: Path, seed: int, upto: str):
    """Run align (and optionally embed/evaluate) for one seed."""
    if opt.str_opt("input"):
        paths = _stage_split(opt, out_dir, seed)
        # Split outputs always use the canonical "label" column, and
        # masking already happened inside the split stage.
        inner = _InnerOptions(opt, domain_a=str(paths[0]), domain_b=str(paths[1]),
                              correspondence=str(paths[2]), label_column="label")
        dom_a, dom_b = _load_pair(_InnerOptions(inner, mask_fraction="0"), seed)
        opt = inner
    else:
        dom_a, dom_b = _load_pair(opt, seed)
    result = _stage_align(opt, out_dir, seed, dom_a, dom_b)
    if upto == "align":
        return result, None, None
    coords = _stage_embed(opt, out_dir, seed, result)
    if upto == "embed":
        return result, coords, None
    scores = _stage_evaluate(opt, out_dir, seed, result, coords)
    return result, coords, scores


class _InnerOptions(Options):
    """Options view with a few values overridden (used by pipeline stages)."""

    def __init__(self, base: Options, **overrides):
        self._args = base._args
        self._section = dict(base._section)
        for key, value in overrides.items():
            self._section[key] = value
        for key in overrides:
            if getattr(self._args, key, None) is not None:
                self._args = argparse.Namespace(**vars(self._args))
                setattr(self._args, key, None)


def cmd_align(opt: Options) -> int:
    out_dir = Path(opt.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_through(opt, out_dir, opt.require_seed(), "align")
    return 0


def cmd_embed(opt: Options) -> int:
    out_dir = Path(opt.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_through(opt, out_dir, opt.require_seed(), "embed")
    return 0


def cmd_evaluate(opt: Options) -> int:
    out_dir = Path(opt.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    _run_through(opt, out_dir, opt.require_seed(), "evaluate")
    return 0


def cmd_pipeline(opt: Options) -> int:
    out_dir = Path(opt.get("out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = opt.require_seed()
    repeat = int(opt.get("repeat"))
    if repeat < 1:
        raise UsageError("--repeat must be at least 1")
    all_scores: list[dict] = []
    for r in range(repeat):
        run_seed = seed + r
        run_dir = out_dir if repeat == 1 else out_dir / f"run_{run_seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        _, _, scores = _run_through(opt, run_dir, run_seed, "evaluate")
        all_scores.append(scores)

    manifest = _align_manifest(opt, seed)
    manifest.update({"stage": "pipeline", "repeat": repeat})
    _write_manifest(out_dir / "manifest_pipeline.txt", manifest)
    if repeat > 1:
        names = sorted(set().union(*(s.keys() for s in all_scores)))
        with open(out_dir / "metrics_summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "mean", "std"])
            for name in names:
                vals = np.array([s[name] for s in all_scores if name in s])
                writer.writerow([name, _fmt(vals.mean()), _fmt(vals.std())])
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="INI config file ([treealign] section)")
    sub.add_argument("--seed", type=int, help="root random seed (mandatory)")
    sub.add_argument("--out-dir", dest="out_dir", help="output directory")
    sub.add_argument("--resume", action="store_true", default=None,
                     help="reuse stage outputs whose manifests match")


def _add_split_opts(sub):
    sub.add_argument("--input", help="input CSV for scenario splitting")
    sub.add_argument("--label-column", dest="label_column")
    sub.add_argument("--kind", choices=("random", "importance", "alternating",
                                        "add_noise", "distort", "rotate"))
    sub.add_argument("--split-seed", dest="split_seed", type=int)
    sub.add_argument("--sigma", type=float)
    sub.add_argument("--noise-ratio", dest="noise_ratio", type=int)
    sub.add_argument("--mask-fraction", dest="mask_fraction", type=float)


def _add_align_opts(sub):
    sub.add_argument("--domain-a", dest="domain_a")
    sub.add_argument("--domain-b", dest="domain_b")
    sub.add_argument("--trees", type=int)
    sub.add_argument("--max-features", dest="max_features", type=int)
    sub.add_argument("--min-leaf", dest="min_leaf", type=int)
    sub.add_argument("--max-depth", dest="max_depth", type=int)
    sub.add_argument("--exact", action="store_true", default=None)
    sub.add_argument("--exact-cap", dest="exact_cap", type=int)
    sub.add_argument("--subsample", action="store_true", default=None)
    sub.add_argument("--threads", type=int)
    sub.add_argument("--base-size", dest="base_size", type=int)
    sub.add_argument("--branching", type=int)
    sub.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    sub.add_argument("--restarts", type=int)
    sub.add_argument("--dump-affinities", dest="dump_affinities",
                     action="store_true", default=None)


def _add_embed_opts(sub):
    sub.add_argument("--out-dims", dest="out_dims", type=int)
    sub.add_argument("--time", type=int, help="diffusion time (0 = auto)")
    sub.add_argument("--landmarks", type=int)
    sub.add_argument("--mds-iters", dest="mds_iters", type=int)


def _add_eval_opts(sub):
    sub.add_argument("--metrics", help="comma list, or all/alignment/integration")
    sub.add_argument("--metric-k", dest="metric_k", type=int)
    sub.add_argument("--correspondence", help="truth CSV from the split stage")


def build_parser() -> _Parser:
    parser = _Parser(prog="treealign", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p_split = subs.add_parser("split", help="split one CSV into two domains")
    _add_common(p_split)
    _add_split_opts(p_split)

    p_align = subs.add_parser("align", help="align two domains")
    _add_common(p_align)
    _add_split_opts(p_align)
    _add_align_opts(p_align)

    p_embed = subs.add_parser("embed", help="align and embed")
    _add_common(p_embed)
    _add_split_opts(p_embed)
    _add_align_opts(p_embed)
    _add_embed_opts(p_embed)

    p_eval = subs.add_parser("evaluate", help="align, embed, and score")
    _add_common(p_eval)
    _add_split_opts(p_eval)
    _add_align_opts(p_eval)
    _add_embed_opts(p_eval)
    _add_eval_opts(p_eval)

    p_pipe = subs.add_parser("pipeline", help="split, align, embed, evaluate")
    _add_common(p_pipe)
    _add_split_opts(p_pipe)
    _add_align_opts(p_pipe)
    _add_embed_opts(p_pipe)
    _add_eval_opts(p_pipe)
    p_pipe.add_argument("--repeat", type=int, help="number of seeds to run")

    return parser


_COMMANDS = {
    "split": cmd_split,
    "align": cmd_align,
    "embed": cmd_embed,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(name)s %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opt = Options(args)
        return _COMMANDS[args.command](opt)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataValidationError as exc:
        print(f"data validation error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
