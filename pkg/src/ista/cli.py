"""Command-line pipeline runner.

Every stage reads and writes files, so a full run can resume anywhere and
two runs with the same config and inputs produce byte-identical artifacts.
Exit codes: 0 on success, 2 for a missing or unreadable input artifact, 3
for configuration or validation problems, 4 for numerical failure, 1 for
anything unexpected.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .codebook import VisualCodebook, corpus_descriptor_matrix
from .config import PipelineConfig, parse_config
from .errors import (
    ConfigError,
    EvaluationError,
    FitError,
    FormatError,
    IstaError,
    NumericalError,
    ResourceError,
    ValidationError,
)
from .grids import corpus_paths, load_corpus, load_grid, normalize_grid
from .normalize import normalize_signature
from .oracle import identity_trial
from .pairs import (
    RawSignature,
    compute_pair_basis,
    encode_raw,
    grid_pair_stats,
    load_pair_basis,
    load_pair_stats,
    save_pair_basis,
    save_pair_stats,
)
from .reduce import (
    ReductionModel,
    apply_block_reduction,
    apply_full_reduction,
    fit_block_reduction,
    fit_full_reduction,
    load_reduction_model,
    save_reduction_model,
)
from .retrieval import (
    GroundTruthEntry,
    Signature,
    average_precision,
    combine_resolutions,
    load_ground_truth,
    load_signature,
    rank,
    save_ground_truth,
    save_signature,
    write_ranking,
)
from .synthetic import make_synthetic_corpus, shuffled_corpus, write_corpus

SIG_SUFFIX = ".sig"
IDENTITY_TOLERANCE = 1e-9


def _require_file(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing {what}: {path}")
    return path


def _sig_paths(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"signature directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.name.endswith(SIG_SUFFIX))


def _split_resolution(stem: str) -> tuple[str, int]:
    head, sep, tail = stem.rpartition(".")
    if sep and tail.isdigit():
        return head, int(tail)
    return stem, 0


def _load_raw_signatures(directory: str | Path, layout) -> list[RawSignature]:
    sigs = []
    for path in _sig_paths(directory):
        loaded = load_signature(path)
        if loaded.dim != layout.total_dim:
            raise ValidationError(
                f"{path}: vector length {loaded.dim} does not match layout "
                f"dimension {layout.total_dim}"
            )
        sigs.append(RawSignature(loaded.image_id, loaded.vector, layout))
    if not sigs:
        raise FileNotFoundError(f"no {SIG_SUFFIX} files under {directory}")
    return sigs


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# stage handlers

def cmd_fit_codebook(args, cfg: PipelineConfig) -> int:
    grids = load_corpus(args.in_path)
    if not grids:
        raise FileNotFoundError(f"no .desc files under {args.in_path}")
    codebook = VisualCodebook(
        n_words=cfg.codebook_size, seed=cfg.seed, max_iters=cfg.max_iters,
        sample_cap=cfg.sample_cap,
    ).fit(corpus_descriptor_matrix(grids))
    codebook.save(args.out)
    print(f"fit-codebook\t{cfg.codebook_size} words\tinertia {codebook.inertia_:.6g}")
    return 0


def cmd_fit_stats(args, cfg: PipelineConfig) -> int:
    codebook = VisualCodebook.load(_require_file(args.codebook, "codebook"))
    paths = corpus_paths(args.in_path)
    if not paths:
        raise FileNotFoundError(f"no .desc files under {args.in_path}")

    def one(path: Path):
        return grid_pair_stats(normalize_grid(load_grid(path)), codebook, cfg.radius)

    partials = _map_ordered(one, paths, cfg.threads)
    stats = partials[0]
    for partial in partials[1:]:
        stats.add(partial)
    save_pair_stats(stats, args.out)
    print(f"fit-stats\t{len(paths)} grids\t{stats.total_pairs} pairs")
    return 0


def cmd_fit_basis(args, cfg: PipelineConfig) -> int:
    stats = load_pair_stats(_require_file(args.in_path, "pair statistics"))
    basis = compute_pair_basis(stats, cfg.variance_target, cfg.min_pair_count)
    layout = basis.layout()
    save_pair_basis(basis, args.out)
    print(f"fit-basis\t{len(layout.pairs)} live pairs\tdim {layout.total_dim}")
    return 0


def cmd_encode(args, cfg: PipelineConfig) -> int:
    codebook = VisualCodebook.load(_require_file(args.codebook, "codebook"))
    basis = load_pair_basis(_require_file(args.model, "pair model"), cfg.variance_target)
    stats = None
    if args.stats:
        stats = load_pair_stats(_require_file(args.stats, "pair statistics"))
    in_path = Path(args.in_path)
    paths = [in_path] if in_path.is_file() else corpus_paths(in_path)
    if not paths:
        raise FileNotFoundError(f"no .desc files under {in_path}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(path: Path):
        grid = normalize_grid(load_grid(path))
        raw = encode_raw(grid, codebook, basis, stats, cfg.radius)
        normalized = normalize_signature(raw, cfg.alpha, cfg.eps)
        out_name = path.name[: -len(".desc")] + SIG_SUFFIX
        save_signature(Signature(raw.image_id, normalized.vector), out_dir / out_name)

    _map_ordered(one, paths, cfg.threads)
    print(f"encode\t{len(paths)} grids\tdim {basis.layout().total_dim}")
    return 0


def cmd_fit_block_reduction(args, cfg: PipelineConfig) -> int:
    basis = load_pair_basis(_require_file(args.model, "pair model"), cfg.variance_target)
    samples = _load_raw_signatures(args.in_path, basis.layout())
    block = fit_block_reduction(samples, cfg.keep_ratio)
    save_reduction_model(ReductionModel(block, None), args.out)
    print(f"fit-block-reduction\t{len(samples)} samples\tdim {block.output_dim}")
    return 0


def cmd_fit_full_reduction(args, cfg: PipelineConfig) -> int:
    model = load_reduction_model(_require_file(args.blocks, "block reduction model"))
    samples = _load_raw_signatures(args.in_path, model.block.input_layout)
    reduced = np.stack([apply_block_reduction(model.block, s) for s in samples])
    full = fit_full_reduction(reduced, cfg.final_dim, whiten=cfg.whiten)
    save_reduction_model(ReductionModel(model.block, full), args.out)
    print(f"fit-full-reduction\t{len(samples)} samples\tdim {full.output_dim}")
    return 0


def cmd_reduce(args, cfg: PipelineConfig) -> int:
    model = load_reduction_model(_require_file(args.model, "reduction model"))
    if model.full is None:
        raise ValidationError(f"{args.model}: full reduction stage has not been fitted")
    samples = _load_raw_signatures(args.in_path, model.block.input_layout)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(sig: RawSignature):
        reduced = apply_block_reduction(model.block, sig)
        final = apply_full_reduction(model.full, reduced, cfg.renorm)
        save_signature(Signature(sig.image_id, final), out_dir / f"{sig.image_id}{SIG_SUFFIX}")

    _map_ordered(one, samples, cfg.threads)
    print(f"reduce\t{len(samples)} signatures\tdim {model.full.output_dim}")
    return 0


def cmd_combine(args, cfg: PipelineConfig) -> int:
    groups: dict[str, list[Signature]] = {}
    for path in _sig_paths(args.in_path):
        stem = path.name[: -len(SIG_SUFFIX)]
        image_id, resolution = _split_resolution(stem)
        loaded = load_signature(path, resolution)
        groups.setdefault(image_id, []).append(
            Signature(image_id, loaded.vector, loaded.resolution_set)
        )
    if not groups:
        raise FileNotFoundError(f"no {SIG_SUFFIX} files under {args.in_path}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for image_id in sorted(groups):
        combined = combine_resolutions(groups[image_id])
        save_signature(combined, out_dir / f"{image_id}{SIG_SUFFIX}")
    print(f"combine\t{len(groups)} images")
    return 0


def cmd_index(args, cfg: PipelineConfig) -> int:
    paths = _sig_paths(args.in_path)
    if not paths:
        raise FileNotFoundError(f"no {SIG_SUFFIX} files under {args.in_path}")
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in paths:
        image_id = path.name[: -len(SIG_SUFFIX)]
        try:
            rel = path.relative_to(out_path.parent)
        except ValueError:
            rel = path.resolve()
        rows.append((image_id, str(rel)))
    rows.sort()
    with open(out_path, "w", encoding="utf-8") as f:
        for image_id, rel in rows:
            f.write(f"{image_id}\t{rel}\n")
    print(f"index\t{len(rows)} signatures")
    return 0


def _load_index(path: str | Path) -> dict[str, Signature]:
    path = _require_file(path, "signature index")
    sigs: dict[str, Signature] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            image_id, _, rel = line.partition("\t")
            sig_path = Path(rel)
            if not sig_path.is_absolute():
                sig_path = path.parent / sig_path
            loaded = load_signature(_require_file(sig_path, f"signature for {image_id}"))
            sigs[image_id] = Signature(image_id, loaded.vector)
    if not sigs:
        raise FormatError(f"{path}: empty index")
    return sigs


def cmd_query(args, cfg: PipelineConfig) -> int:
    index = _load_index(args.index)
    query_sig = load_signature(_require_file(args.sig, "query signature"))
    ranking = rank(list(index.values()), query_sig)
    if args.out:
        write_ranking(ranking, args.out)
    else:
        for position, (image_id, score) in enumerate(ranking, start=1):
            print(f"{position}\t{image_id}\t{score:.9g}")
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    index = _load_index(args.index)
    entries = load_ground_truth(_require_file(args.gt, "ground truth"))
    if not entries:
        raise EvaluationError(f"{args.gt}: no queries")
    rankings_dir = Path(args.rankings) if args.rankings else None
    if rankings_dir:
        rankings_dir.mkdir(parents=True, exist_ok=True)
    signatures = list(index.values())
    aps = []
    for entry in entries:
        if entry.query_id not in index:
            raise EvaluationError(f"query {entry.query_id!r} has no signature in the index")
        ranking = rank(signatures, index[entry.query_id])
        if rankings_dir:
            write_ranking(ranking, rankings_dir / f"{entry.query_id}.tsv")
        aps.append(average_precision([image_id for image_id, _ in ranking], entry))
    print(f"mAP\t{float(np.mean(aps)):.6f}")
    return 0


def cmd_oracle_check(args, cfg: PipelineConfig) -> int:
    trials = args.trials
    failures = 0
    worst = 0.0
    for include_center in (False, True):
        for seed in range(trials):
            gap = identity_trial(seed, include_center)
            worst = max(worst, gap)
            if gap > IDENTITY_TOLERANCE:
                failures += 1
    total = 2 * trials
    print(f"linearization-identity\t{total - failures}/{total} passed\tworst gap {worst:.3g}")
    if failures:
        raise NumericalError(f"{failures} identity trials exceeded {IDENTITY_TOLERANCE}")
    return 0


def cmd_make_synthetic(args, cfg: PipelineConfig) -> int:
    corpus = make_synthetic_corpus(
        n_classes=args.classes,
        per_class=args.per_class,
        height=args.height,
        width=args.width,
        depth=args.depth,
        n_words=args.words,
        seed=args.corpus_seed,
    )
    if args.shuffle:
        corpus = shuffled_corpus(corpus, args.corpus_seed + 1)
    gt_path = write_corpus(corpus, args.out)
    print(f"make-synthetic\t{len(corpus.grids)} grids\tground truth {gt_path}")
    return 0


def cmd_convert_gt(args, cfg: PipelineConfig) -> int:
    in_dir = Path(args.in_path)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {in_dir}")
    if args.format == "oxford":
        entries = _convert_oxford(in_dir)
    else:
        entries = _convert_holidays(in_dir)
    if not entries:
        raise EvaluationError(f"{in_dir}: no queries found")
    save_ground_truth(entries, args.out)
    print(f"convert-gt\t{len(entries)} queries")
    return 0


def _read_id_list(path: Path) -> set[str]:
    if not path.is_file():
        return set()
    with open(path, "r", encoding="utf-8") as f:
        return {line.strip() for line in f if line.strip()}


def _convert_oxford(gt_dir: Path) -> list[GroundTruthEntry]:
    """Per-query good/ok/junk list files; good and ok both count as positive."""
    entries = []
    for query_file in sorted(gt_dir.glob("*_query.txt")):
        stem = query_file.name[: -len("_query.txt")]
        with open(query_file, "r", encoding="utf-8") as f:
            token = f.read().split()[0]
        query_id = token.removeprefix("oxc1_")
        positives = _read_id_list(gt_dir / f"{stem}_good.txt") | _read_id_list(
            gt_dir / f"{stem}_ok.txt"
        )
        junk = _read_id_list(gt_dir / f"{stem}_junk.txt")
        positives.discard(query_id)
        junk -= positives
        entries.append(GroundTruthEntry(query_id, frozenset(positives), frozenset(junk)))
    return entries


def _convert_holidays(desc_dir: Path) -> list[GroundTruthEntry]:
    """Numeric ids grouped by all digits but the last two; xx00 queries its group."""
    ids = set()
    for path in desc_dir.iterdir():
        stem = path.name.split(".")[0]
        if stem.isdigit():
            ids.add(stem)
    groups: dict[str, list[str]] = {}
    for image_id in sorted(ids):
        groups.setdefault(image_id[:-2], []).append(image_id)
    entries = []
    for prefix in sorted(groups):
        members = groups[prefix]
        query_id = prefix + "00"
        if query_id not in members or len(members) < 2:
            continue
        positives = frozenset(m for m in members if m != query_id)
        entries.append(GroundTruthEntry(query_id, positives))
    return entries


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (key = value lines)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="override the configured thread cap")

    parser = argparse.ArgumentParser(
        prog="ista",
        description="Spatially-coupled descriptor-pair aggregation pipeline",
    )
    sub = parser.add_subparsers(dest="stage", required=True)

    def stage(name, handler, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=handler)
        return p

    p = stage("fit-codebook", cmd_fit_codebook, "train the visual vocabulary")
    p.add_argument("--in", dest="in_path", required=True, help="directory of .desc grids")
    p.add_argument("--out", required=True, help="output .codebook path")

    p = stage("fit-stats", cmd_fit_stats, "accumulate pair statistics over a corpus")
    p.add_argument("--in", dest="in_path", required=True, help="directory of .desc grids")
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True, help="output .pairstats path")

    p = stage("fit-basis", cmd_fit_basis, "extract per-pair singular bases")
    p.add_argument("--in", dest="in_path", required=True, help="input .pairstats path")
    p.add_argument("--out", required=True, help="output .pairmodel path")

    p = stage("encode", cmd_encode, "encode grids into normalized raw signatures")
    p.add_argument("--in", dest="in_path", required=True, help=".desc file or directory")
    p.add_argument("--codebook", required=True)
    p.add_argument("--model", required=True, help=".pairmodel path")
    p.add_argument("--stats", help="optional .pairstats for consistency checking")
    p.add_argument("--out", required=True, help="output directory for .sig files")

    p = stage("fit-block-reduction", cmd_fit_block_reduction, "fit per-pair Gram projectors")
    p.add_argument("--in", dest="in_path", required=True, help="directory of raw .sig files")
    p.add_argument("--model", required=True, help=".pairmodel path (for the layout)")
    p.add_argument("--out", required=True, help="output .redmodel path")

    p = stage("fit-full-reduction", cmd_fit_full_reduction, "fit the final Gram projector")
    p.add_argument("--in", dest="in_path", required=True, help="directory of raw .sig files")
    p.add_argument("--blocks", required=True, help=".redmodel with the block stage")
    p.add_argument("--out", required=True, help="output .redmodel path")

    p = stage("reduce", cmd_reduce, "project raw signatures to the final dimension")
    p.add_argument("--in", dest="in_path", required=True, help="directory of raw .sig files")
    p.add_argument("--model", required=True, help="complete .redmodel path")
    p.add_argument("--out", required=True, help="output directory for .sig files")

    p = stage("combine", cmd_combine, "sum per-resolution signatures per image")
    p.add_argument("--in", dest="in_path", required=True, help="directory of per-resolution .sig files")
    p.add_argument("--out", required=True, help="output directory")

    p = stage("index", cmd_index, "write a signature manifest")
    p.add_argument("--in", dest="in_path", required=True, help="directory of .sig files")
    p.add_argument("--out", required=True, help="output index .tsv path")

    p = stage("query", cmd_query, "rank the index against one query signature")
    p.add_argument("--index", required=True)
    p.add_argument("--sig", required=True, help="query .sig path")
    p.add_argument("--out", help="ranking .tsv path (default: stdout)")

    p = stage("evaluate", cmd_evaluate, "mean average precision over a ground-truth file")
    p.add_argument("--index", required=True)
    p.add_argument("--gt", required=True, help="ground-truth text file")
    p.add_argument("--rankings", help="optional directory for per-query ranking files")

    p = stage("oracle-check", cmd_oracle_check, "verify the linearization identity on random instances")
    p.add_argument("--trials", type=int, default=50)

    p = stage("make-synthetic", cmd_make_synthetic, "generate a separable synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--height", type=int, default=12)
    p.add_argument("--width", type=int, default=12)
    p.add_argument("--depth", type=int, default=16)
    p.add_argument("--words", type=int, default=8)
    p.add_argument("--corpus-seed", type=int, default=7)
    p.add_argument("--shuffle", action="store_true",
                   help="shuffle grid positions (spatial-ablation corpus)")

    p = stage("convert-gt", cmd_convert_gt, "convert dataset ground-truth layouts")
    p.add_argument("--format", choices=("oxford", "holidays"), required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)

    return parser


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        cfg = parse_config(args.config)
    else:
        cfg = PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        return args.func(args, cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValidationError, FitError, EvaluationError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except IstaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
