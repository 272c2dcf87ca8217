"""Batch front-end: dataset runs, bank building, scoring, and reports.

Verbs:
    zeroshot       score a dataset with text prompts only
    build-bank     build and save memory banks from reference images
    test           score a dataset against saved banks
    eval           recompute metrics from a previous run's artifacts
    export-config  print or write the engine configuration as INI

Every score map is exported three ways: raw little-endian float32
(`.bin`), a JSON header (shape, min, max, config hash), and an 8-bit
grayscale heatmap (`.png`, min-max normalized per map). Per-image
failures are recorded and the batch continues; more than half failing
marks the whole batch failed.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import EngineConfig
from .dataset import (
    CategoryDataset,
    discover_categories,
    discover_category,
    from_manifest,
    load_image,
    load_mask,
)
from .errors import InvalidInputError, PatchmemError
from .fewshot import run_few_shot
from .membank import build_banks, load_banks, save_banks
from .metrics import EvalReport, evaluate
from .providers.mock import MockProvider
from .providers.remote import RemoteProvider
from .zeroshot import run_zero_shot

BANK_FILENAME = "banks.msmb"


# ------------------------------------------------------------- map export

def export_map(score_map: np.ndarray, stem: Path, cfg_hash: str) -> None:
    """Write <stem>.bin/.json/.png for one score map."""
    arr = np.asarray(score_map, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"score map must be 2-d, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInputError(
            f"refusing to export {stem}: map contains NaN or infinity")
    stem.parent.mkdir(parents=True, exist_ok=True)
    raw = arr.astype("<f4")
    stem.with_suffix(".bin").write_bytes(raw.tobytes(order="C"))
    header = {
        "shape": list(arr.shape),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "config_hash": cfg_hash,
    }
    stem.with_suffix(".json").write_text(json.dumps(header, sort_keys=True))
    lo, hi = float(raw.min()), float(raw.max())
    if hi > lo:
        levels = ((raw - lo) / (hi - lo) * 255.0).round().astype(np.uint8)
    else:
        levels = np.zeros(raw.shape, dtype=np.uint8)
    Image.fromarray(levels, mode="L").save(stem.with_suffix(".png"))


def read_map(stem: Path) -> np.ndarray:
    """Read back a map exported by export_map (bitwise, as float32)."""
    try:
        header = json.loads(stem.with_suffix(".json").read_text())
        shape = tuple(int(x) for x in header["shape"])
        raw = stem.with_suffix(".bin").read_bytes()
    except FileNotFoundError as exc:
        raise InvalidInputError(f"missing exported map: {exc.filename}") from None
    except (ValueError, KeyError) as exc:
        raise InvalidInputError(f"bad map header {stem}.json: {exc}") from exc
    expected = shape[0] * shape[1] * 4
    if len(raw) != expected:
        raise InvalidInputError(
            f"{stem}.bin holds {len(raw)} bytes, header says {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape)


# ------------------------------------------------------------- batch core

def run_batch(samples, worker) -> tuple[list, list]:
    """Apply worker to each sample, recording failures without stopping."""
    records, failures = [], []
    for sample in samples:
        try:
            records.append(worker(sample))
        except (PatchmemError, OSError) as exc:
            failures.append({
                "path": str(sample.path),
                "error": type(exc).__name__,
                "message": str(exc),
            })
    return records, failures


def _category_metrics(records, cfg: EngineConfig) -> EvalReport | None:
    labels = [r["label"] for r in records]
    if len(set(labels)) < 2:
        return None
    scores = [r["score"] for r in records]
    maps = masks = None
    if all(r["mask"] is not None for r in records if r["label"]):
        maps, masks = [], []
        for r in records:
            m = read_map(Path(r["map_stem"]))
            maps.append(m)
            if r["mask"] is None:
                masks.append(np.zeros(m.shape, dtype=bool))
            else:
                masks.append(load_mask(r["mask"], expected_shape=m.shape))
    return evaluate(scores, labels, maps, masks,
                    max_thresholds=cfg.seg_thresholds,
                    exact=cfg.exact_seg_sweep)


def _write_category_outputs(out_cat: Path, category: str, mode: str,
                            cfg: EngineConfig, records, failures,
                            cfg_hash: str | None = None) -> dict:
    cfg_hash = cfg_hash or cfg.config_hash()
    out_cat.mkdir(parents=True, exist_ok=True)
    scores_doc = {
        "category": category,
        "mode": mode,
        "config_hash": cfg_hash,
        "results": records,
        "failures": failures,
    }
    (out_cat / "scores.json").write_text(
        json.dumps(scores_doc, indent=2, sort_keys=True))
    report = _category_metrics(records, cfg) if records else None
    if report is not None:
        doc = {"category": category, "config_hash": cfg_hash}
        doc.update(report.to_dict())
        (out_cat / "metrics.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True))
    return {"report": report, "failures": failures, "records": records}


def _score_category(provider, ds: CategoryDataset, cfg: EngineConfig,
                    out_cat: Path, mode: str, bank_set=None) -> dict:
    pair = None if cfg.text_free else provider.embed_text(ds.name)
    maps_dir = out_cat / "maps"

    def worker(sample):
        image = load_image(sample.path)
        if mode == "zeroshot":
            res = run_zero_shot(provider, image, ds.name, cfg, pair=pair)
        else:
            res = run_few_shot(provider, image, bank_set, cfg,
                               class_name=ds.name, pair=pair)
        stem = maps_dir / f"{sample.defect_type}_{sample.path.stem}"
        export_map(res.map, stem, cfg.config_hash())
        return {
            "path": str(sample.path),
            "kind": sample.defect_type,
            "label": bool(sample.label),
            "score": float(res.image_score),
            "map_stem": str(stem),
            "mask": str(sample.mask_path) if sample.mask_path else None,
        }

    records, failures = run_batch(ds.samples, worker)
    return _write_category_outputs(out_cat, ds.name, mode, cfg, records,
                                   failures)


# ------------------------------------------------------------- reporting

def _mean_of(reports: dict, field: str):
    vals = [getattr(r, field) for r in reports.values()
            if r is not None and getattr(r, field) is not None]
    return float(np.mean(vals)) if vals else None


def _write_run_summary(out: Path, cfg: EngineConfig, outcomes: dict,
                       totals: tuple[int, int],
                       cfg_hash: str | None = None) -> None:
    reports = {name: o["report"] for name, o in outcomes.items()}
    summary = {
        "config_hash": cfg_hash or cfg.config_hash(),
        "categories": {
            name: (r.to_dict() if r is not None else None)
            for name, r in sorted(reports.items())
        },
        "mean": {
            field: _mean_of(reports, field)
            for field in ("f1_classification", "auroc_classification",
                          "f1_segmentation", "auroc_segmentation")
        },
        "images": totals[0],
        "failed": totals[1],
    }
    (out / "metrics.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True))


def _write_error_manifest(out: Path, outcomes: dict) -> None:
    failures = {name: o["failures"] for name, o in outcomes.items()
                if o["failures"]}
    if failures:
        (out / "errors.json").write_text(
            json.dumps(failures, indent=2, sort_keys=True))


def _finish_run(out: Path, cfg: EngineConfig, outcomes: dict,
                cfg_hash: str | None = None) -> int:
    total = sum(len(o["records"]) + len(o["failures"])
                for o in outcomes.values())
    failed = sum(len(o["failures"]) for o in outcomes.values())
    _write_run_summary(out, cfg, outcomes, (total, failed), cfg_hash)
    _write_error_manifest(out, outcomes)
    if total and failed * 2 > total:
        print(f"batch failed: {failed}/{total} images errored", file=sys.stderr)
        return 2
    if failed:
        print(f"completed with {failed}/{total} image errors "
              f"(see {out / 'errors.json'})", file=sys.stderr)
        return 1
    return 0


# ------------------------------------------------------------- providers

def make_provider(args):
    if args.mock_providers is not None:
        return MockProvider(dim=args.mock_dim, seed=args.mock_providers)
    if args.endpoint:
        return RemoteProvider(args.endpoint)
    raise InvalidInputError("choose a provider: --endpoint or --mock-providers")


def load_config(args) -> EngineConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except FileNotFoundError:
            raise InvalidInputError(
                f"config file not found: {args.config}") from None
        cfg = EngineConfig.from_ini(text)
    else:
        cfg = EngineConfig()
    overrides = {}
    if args.text_free:
        overrides["text_free"] = True
    if getattr(args, "exact_seg_sweep", False):
        overrides["exact_seg_sweep"] = True
    for name in ("workers", "seed", "capacity_cap"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def iter_datasets(args):
    if args.manifest:
        yield from_manifest(args.manifest)
        return
    if not args.data:
        raise InvalidInputError("provide --data ROOT or --manifest FILE")
    names = args.category or discover_categories(args.data)
    for name in names:
        yield discover_category(args.data, name,
                                max_references=getattr(args, "shots", None))


# ------------------------------------------------------------- verbs

def cmd_zeroshot(args) -> int:
    cfg = load_config(args)
    if cfg.text_free:
        raise InvalidInputError(
            "zero-shot scoring is text-prompt based; text_free only "
            "applies to bank testing")
    provider = make_provider(args)
    out = Path(args.out)
    outcomes = {}
    for ds in iter_datasets(args):
        outcomes[ds.name] = _score_category(provider, ds, cfg,
                                            out / ds.name, "zeroshot")
    return _finish_run(out, cfg, outcomes)


def cmd_build_bank(args) -> int:
    cfg = load_config(args)
    provider = make_provider(args)
    out = Path(args.out)
    for ds in iter_datasets(args):
        refs = [load_image(p) for p in ds.reference_paths]
        bank_set = build_banks(provider, refs, cfg)
        cat_dir = out / ds.name
        cat_dir.mkdir(parents=True, exist_ok=True)
        save_banks(bank_set, cat_dir / BANK_FILENAME)
        record = {
            "category": ds.name,
            "config_hash": cfg.config_hash(),
            "references": [str(p) for p in ds.reference_paths],
            "rows": {f"{kind.value}/{scale.value}": bank.rows
                     for (kind, scale), bank in bank_set},
        }
        (cat_dir / "banks.json").write_text(
            json.dumps(record, indent=2, sort_keys=True))
        print(f"{ds.name}: banks written to {cat_dir / BANK_FILENAME}")
    return 0


def cmd_test(args) -> int:
    cfg = load_config(args)
    provider = make_provider(args)
    out = Path(args.out)
    banks_root = Path(args.banks) if args.banks else out
    outcomes = {}
    for ds in iter_datasets(args):
        bank_path = banks_root / ds.name / BANK_FILENAME
        if not bank_path.is_file():
            raise InvalidInputError(
                f"no bank file for category {ds.name}: {bank_path} "
                f"(run build-bank first)")
        bank_set = load_banks(bank_path,
                              expected_descriptor=provider.descriptor())
        outcomes[ds.name] = _score_category(provider, ds, cfg, out / ds.name,
                                            "test", bank_set=bank_set)
    return _finish_run(out, cfg, outcomes)


def cmd_eval(args) -> int:
    cfg = load_config(args)
    run_dir = Path(args.run)
    score_files = sorted(run_dir.glob("*/scores.json"))
    if not score_files:
        raise InvalidInputError(f"no scores.json files under {run_dir}")
    outcomes = {}
    hashes = set()
    for sf in score_files:
        doc = json.loads(sf.read_text())
        # metrics describe the run that produced the maps, so keep its
        # hash unless the caller explicitly re-sweeps under a new config
        run_hash = cfg.config_hash() if args.config else doc["config_hash"]
        hashes.add(run_hash)
        outcomes[doc["category"]] = _write_category_outputs(
            sf.parent, doc["category"], doc["mode"], cfg,
            doc["results"], doc["failures"], cfg_hash=run_hash)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    summary_hash = hashes.pop() if len(hashes) == 1 else "mixed"
    return _finish_run(out, cfg, outcomes, cfg_hash=summary_hash)


def cmd_export_config(args) -> int:
    cfg = load_config(args)
    text = cfg.to_ini()
    if args.output:
        Path(args.output).write_text(text)
        print(f"config written to {args.output} (hash {cfg.config_hash()})")
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------- arguments

def _add_provider_args(p):
    p.add_argument("--endpoint", help="embedding sidecar base URL")
    p.add_argument("--mock-providers", type=int, metavar="SEED",
                   help="run fully offline with seeded mock providers")
    p.add_argument("--mock-dim", type=int, default=64,
                   help="embedding width of the mock provider")


def _add_dataset_args(p):
    p.add_argument("--data", help="dataset root (category directories)")
    p.add_argument("--manifest", help="explicit JSON file listing")
    p.add_argument("--category", action="append",
                   help="restrict to this category (repeatable)")


def _add_config_args(p):
    p.add_argument("--config", help="engine configuration INI file")
    p.add_argument("--text-free", action="store_true",
                   help="drop the text-alignment terms")
    p.add_argument("--workers", type=int, help="provider worker threads")
    p.add_argument("--seed", type=int, help="engine random seed")
    p.add_argument("--capacity-cap", type=int,
                   help="maximum rows kept per memory bank")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchmem",
        description="zero-/few-shot anomaly detection over a dataset tree")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("zeroshot", help="text-prompt scoring, no banks")
    _add_dataset_args(p)
    _add_provider_args(p)
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--exact-seg-sweep", action="store_true")
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("build-bank", help="build memory banks from references")
    _add_dataset_args(p)
    _add_provider_args(p)
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--shots", type=int,
                   help="use only the first k reference images")
    p.set_defaults(func=cmd_build_bank)

    p = sub.add_parser("test", help="score a dataset against saved banks")
    _add_dataset_args(p)
    _add_provider_args(p)
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--banks", help="bank directory (default: --out)")
    p.add_argument("--exact-seg-sweep", action="store_true")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("eval", help="recompute metrics from run artifacts")
    p.add_argument("--run", required=True, help="directory of a previous run")
    p.add_argument("--out", help="where to write metrics (default: --run)")
    p.add_argument("--config", help="engine configuration INI file")
    p.add_argument("--exact-seg-sweep", action="store_true")
    p.add_argument("--text-free", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-config", help="write the configuration INI")
    p.add_argument("--config", help="start from this INI instead of defaults")
    p.add_argument("--output", help="write here instead of stdout")
    p.add_argument("--text-free", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_export_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PatchmemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
