"""Command-line driver: ``gouda {synth,adapt,eval,analyze,oracle-check}``.

Exit codes: 0 success, 1 a checked property failed, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .adaptation import NoValidTripletsError, adapt
from .config import ConfigError, RunConfig, load_config
from .embedding import (
    GaitRecord,
    read_embeddings_csv,
    record_identities,
    record_views,
    split_records,
    stack_embeddings,
    write_embeddings_csv,
    write_frames_csv,
)
from .evaluation import (
    oracle_filter,
    positive_view_confusion,
    rank1_cross_view,
    supervised_adapt,
    triplet_correctness,
    view_neighborhood_histogram,
)
from .mining import Triplet, TripletLog
from .oracles import run_oracle_checks
from .synthetic import generate_target_domain

logger = logging.getLogger("gouda")

EMBEDDINGS = "embeddings.csv"
FRAMES = "frames.csv"
SYNTH_SIDECAR = "synth_config.json"
ADAPTER = "adapter.csv"
TRACE = "trace.json"
TRIPLETS = "triplets.csv"
RANK1 = "rank1.json"
RANK1_MATRIX = "rank1_per_pair.csv"
CORRECTNESS = "correctness.json"
CONFUSION = "positive_confusion.csv"
NEIGHBORHOOD = "view_neighborhood.json"
BASELINES = "baselines.json"
ORACLE_REPORT = "oracle_check.json"


class UsageError(Exception):
    """Bad input files or arguments; maps to exit code 2."""


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _provenance(cfg: RunConfig) -> dict:
    return {"config_sha256": cfg.digest(), "seed": cfg.seed}


def _write_manifest(cfg: RunConfig, out: Path, command: str, files: list[str]) -> None:
    _dump_json(out / f"manifest_{command}.json", {"command": command, "files": sorted(files), **_provenance(cfg)})


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _load_dataset(data_dir: Path, with_frames: bool) -> list[GaitRecord]:
    emb = data_dir / EMBEDDINGS
    frames = data_dir / FRAMES
    for path in [emb] + ([frames] if with_frames else []):
        if not path.exists():
            raise UsageError(f"missing dataset file: {path}")
    return read_embeddings_csv(emb, frames if with_frames else None)


def _write_matrix_csv(path: Path, edges, matrix, corner: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([corner] + [repr(float(e)) for e in edges])
        for edge, row in zip(edges, matrix):
            writer.writerow([repr(float(edge))] + ["" if np.isnan(x) else repr(float(x)) for x in row])


def read_adapter(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"missing adapter file: {path}")
    W = np.loadtxt(path, delimiter=",", ndmin=2)
    if W.shape[0] != W.shape[1]:
        raise UsageError(f"adapter in {path} is not square: {W.shape}")
    return W


def write_adapter(path, W: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in W:
            writer.writerow([repr(float(x)) for x in row])


def read_triplets_csv(path, record_ids) -> tuple[list[Triplet], list[int]]:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"missing triplet file: {path}")
    index = {rid: i for i, rid in enumerate(record_ids)}
    triplets, stages = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            triplets.append(
                Triplet(index[row["anchor_id"]], index[row["positive_id"]], index[row["negative_id"]], float(row["confidence"]))
            )
            stages.append(int(row["stage"]))
    return triplets, stages


# -- pipeline steps, usable without the argument parser ----------------------


def run_adaptation(cfg: RunConfig, records: list[GaitRecord], oracle: bool = False):
    """Split ``records``, run the adaptation and return ``(W, trace, train, val)``."""
    train, val, _ = split_records(records, cfg.test_fraction, cfg.val_fraction)
    labels = [r.identity for r in train] if all(r.identity for r in train) else None
    triplet_filter = None
    if oracle:
        if labels is None:
            raise UsageError("the triplet oracle needs identity labels")
        triplet_filter = lambda trips: oracle_filter(trips, labels)  # noqa: E731
    W, trace = adapt(
        train,
        stack_embeddings(val),
        record_views(val),
        mining=cfg.mining,
        schedule=cfg.schedule,
        adam=cfg.adam(),
        K=cfg.K,
        checkpoint_every=cfg.checkpoint_every,
        seed=cfg.seed,
        w_gouda=cfg.w_gouda,
        w_ssl=cfg.w_ssl,
        triplet_filter=triplet_filter,
        labels=labels,
        aug_min_fraction=cfg.aug_min_fraction,
        loss_margin=cfg.loss_margin,
    )
    return W, trace, train, val


def evaluation_records(cfg: RunConfig, records: list[GaitRecord]) -> list[GaitRecord]:
    if cfg.test_fraction == 0:
        return records
    return split_records(records, cfg.test_fraction, cfg.val_fraction)[2]


def cmd_synth(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    ds = generate_target_domain(cfg.synth)
    write_embeddings_csv(out / EMBEDDINGS, ds.records)
    write_frames_csv(out / FRAMES, ds.records)
    _dump_json(out / SYNTH_SIDECAR, {"synth": cfg.synth.to_dict(), **_provenance(cfg)})
    _write_manifest(cfg, out, "synth", [EMBEDDINGS, FRAMES, SYNTH_SIDECAR])
    logger.info("wrote %d records to %s", len(ds.records), out)
    return 0


def cmd_adapt(cfg: RunConfig, data_dir: Path) -> int:
    out = _out_dir(cfg)
    records = _load_dataset(data_dir, with_frames=cfg.w_ssl != 0)
    W, trace, train, _ = run_adaptation(cfg, records, oracle=cfg.triplet_oracle)
    write_adapter(out / ADAPTER, W)
    _dump_json(out / TRACE, {**trace.to_dict(), **_provenance(cfg)})
    log = TripletLog()
    for stage, selected in enumerate(trace.triplets, start=1):
        log.extend(selected, stage)
    log.write_csv(out / TRIPLETS, [r.record_id for r in train])
    _write_manifest(cfg, out, "adapt", [ADAPTER, TRACE, TRIPLETS])
    logger.info("chosen checkpoint: iteration %d, SC %.4f", trace.chosen.iteration, trace.chosen.sc)
    return 0


def cmd_eval(cfg: RunConfig, data_dir: Path, adapter_path: Path | None) -> int:
    out = _out_dir(cfg)
    records = evaluation_records(cfg, _load_dataset(data_dir, with_frames=False))
    W = read_adapter(adapter_path) if adapter_path is not None else None
    report = rank1_cross_view(records, W)
    hist, sc = view_neighborhood_histogram(records, W, cfg.K, cfg.mining.T_s, cfg.mining.angle_mode)
    payload = {**report.to_dict(), "sc": sc, "view_neighborhood": hist.tolist(), **_provenance(cfg)}
    _dump_json(out / RANK1, payload)
    _write_matrix_csv(out / RANK1_MATRIX, report.views, report.per_pair, "probe\\gallery")
    _write_manifest(cfg, out, "eval", [RANK1, RANK1_MATRIX])
    logger.info("cross-view rank-1 %.2f%%, identical-view %.2f%%", report.overall_cross_view, report.identical_view_mean)
    return 0


def cmd_analyze(cfg: RunConfig, data_dir: Path, adapter_path: Path | None, baselines: bool) -> int:
    out = _out_dir(cfg)
    records = _load_dataset(data_dir, with_frames=baselines and cfg.w_ssl != 0)
    train, _, _ = split_records(records, cfg.test_fraction, cfg.val_fraction)
    files = []

    triplet_path = data_dir / TRIPLETS
    if triplet_path.exists():
        triplets, stages = read_triplets_csv(triplet_path, [r.record_id for r in train])
        report = triplet_correctness(triplets, record_identities(train), stages)
        _dump_json(out / CORRECTNESS, {**report.to_dict(), **_provenance(cfg)})
        edges, matrix = positive_view_confusion(triplets, record_views(train), cfg.bin_width)
        _write_matrix_csv(out / CONFUSION, edges, matrix, "anchor\\positive")
        files += [CORRECTNESS, CONFUSION]
    else:
        logger.warning("no %s in %s; skipping triplet analyses", TRIPLETS, data_dir)

    test = evaluation_records(cfg, records)
    W = read_adapter(adapter_path) if adapter_path is not None else None
    before, sc_before = view_neighborhood_histogram(test, None, cfg.K, cfg.mining.T_s, cfg.mining.angle_mode)
    after, sc_after = view_neighborhood_histogram(test, W, cfg.K, cfg.mining.T_s, cfg.mining.angle_mode)
    _dump_json(
        out / NEIGHBORHOOD,
        {
            "before": {"histogram": before.tolist(), "sc": sc_before},
            "after": {"histogram": after.tolist(), "sc": sc_after},
            **_provenance(cfg),
        },
    )
    files.append(NEIGHBORHOOD)

    if baselines:
        W_gouda, _, _, _ = run_adaptation(cfg, records)
        W_oracle, _, _, _ = run_adaptation(cfg, records, oracle=True)
        train_all, val_all, _ = split_records(records, cfg.test_fraction, cfg.val_fraction)
        W_sup = supervised_adapt(
            train_all + val_all, cfg.adam(), cfg.supervised_iterations, cfg.schedule.batch_triplets, cfg.loss_margin, cfg.seed
        )
        table = {
            name: rank1_cross_view(test, w).overall_cross_view
            for name, w in [("direct_testing", None), ("gouda", W_gouda), ("triplet_oracle", W_oracle), ("supervised", W_sup)]
        }
        _dump_json(out / BASELINES, {"overall_cross_view": table, **_provenance(cfg)})
        files.append(BASELINES)

    _write_manifest(cfg, out, "analyze", files)
    return 0


def cmd_oracle_check(cfg: RunConfig, instances: int, inject_fault: bool) -> int:
    out = _out_dir(cfg)
    report = run_oracle_checks(
        n_instances=instances,
        T_s=cfg.mining.T_s,
        T_c=cfg.mining.T_c,
        margin=cfg.mining.margin,
        seed=cfg.seed,
        inject_fault=inject_fault,
    )
    summary = {
        "triplet_exact_matches": f"{report.triplet_matches}/{report.triplet_cases}",
        "triplets_mined": report.triplets_mined,
        "gradient_max_rel_error": report.gradient_max_rel_error,
        "gradient_cases": report.gradient_cases,
        "failures": report.failures,
        "passed": report.passed,
        **_provenance(cfg),
    }
    _dump_json(out / ORACLE_REPORT, summary)
    print(f"triplet selection: {report.triplet_matches}/{report.triplet_cases} exact matches")
    print(f"gradient check: max relative error {report.gradient_max_rel_error:.3e} over {report.gradient_cases} batches")
    if not report.passed:
        print(f"FAIL: {report.failures[0]}")
        return 1
    print("PASS")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", type=Path, action="append", default=None, help="INI run configuration; repeat to layer overrides"
    )
    common.add_argument("--seed", type=int, default=None, help="override run.seed")
    common.add_argument("--out", default=None, help="override run.out_dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gouda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic target domain")
    p = sub.add_parser("adapt", parents=[common], help="train the adapter")
    p.add_argument("--data", type=Path, default=None, help="dataset directory (default: out dir)")
    p = sub.add_parser("eval", parents=[common], help="cross-view rank-1 report")
    p.add_argument("--data", type=Path, default=None)
    p.add_argument("--adapter", type=Path, default=None, help="adapter CSV; omit for direct testing")
    p = sub.add_parser("analyze", parents=[common], help="triplet correctness, view confusion, baselines")
    p.add_argument("--data", type=Path, default=None, help="directory with the dataset and triplets.csv")
    p.add_argument("--adapter", type=Path, default=None)
    p.add_argument("--baselines", action="store_true", help="also train oracle and supervised baselines")
    p = sub.add_parser("oracle-check", parents=[common], help="brute-force selection and gradient checks")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        data_dir = getattr(args, "data", None) or Path(cfg.out_dir)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "adapt":
            return cmd_adapt(cfg, data_dir)
        if args.command == "eval":
            return cmd_eval(cfg, data_dir, args.adapter)
        if args.command == "analyze":
            return cmd_analyze(cfg, data_dir, args.adapter, args.baselines)
        return cmd_oracle_check(cfg, args.instances, args.inject_fault)
    except (ConfigError, UsageError, FileNotFoundError, NoValidTripletsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
