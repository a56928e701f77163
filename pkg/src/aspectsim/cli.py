"""Command-line entry point.

    aspectsim build-dataset --corpus DIR --format acl_style --out data/
    aspectsim stats --dataset data/dataset.jsonl --out stats/
    aspectsim train --dataset data/dataset.jsonl --model scibert --out model/
    aspectsim cross-validate --dataset data/dataset.jsonl --folds data/folds.json --out cv/
    aspectsim evaluate --dataset data/dataset.jsonl --folds data/folds.json --predictions cv/ --out eval/
    aspectsim predict --model model/ --seed-paper seed.json --target-paper doi:10.18653/v1/N19-1423

Settings come from built-in defaults, then ``--config run.toml``, then
``ASPECTSIM_<NAME>`` environment variables, then flags (flags win).
Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from contextlib import contextmanager
from importlib import metadata as importlib_metadata
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__

logger = logging.getLogger("aspectsim")

# name -> type; every setting can come from TOML, env or a flag
SETTINGS = {
    "corpus": str,
    "format": str,
    "variants": str,
    "negative_ratio": float,
    "seed": int,
    "k": int,
    "top_k": int,
    "enrich": bool,
    "model": str,
    "embedding_path": str,
    "epochs": int,
    "lr": float,
    "batch_size": int,
    "threshold": float,
    "max_length": int,
}
DEFAULTS = {
    "format": "acl_style",
    "negative_ratio": 0.5,
    "seed": 0,
    "k": 4,
    "top_k": 9,
    "enrich": False,
    "model": "scibert",
}
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


# settings ----------------------------------------------------------------


def _coerce(name: str, value):
    kind = SETTINGS[name]
    if value is None or isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    if kind is bool:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise UsageError(f"setting {name!r}: cannot read {value!r} as {kind.__name__}") from None


def load_toml(path: str | Path) -> dict:
    """Flat settings from a TOML file; one level of tables is merged in."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid TOML in {path}: {exc}") from None
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    unknown = sorted(set(flat) - set(SETTINGS))
    if unknown:
        raise UsageError(f"unknown settings in {path}: {', '.join(unknown)}")
    return flat


def resolve_settings(args: argparse.Namespace, env=None) -> dict:
    env = os.environ if env is None else env
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(load_toml(args.config))
    for name in SETTINGS:
        value = env.get(f"ASPECTSIM_{name.upper()}")
        if value is not None:
            merged[name] = value
    for name in SETTINGS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return {k: _coerce(k, v) for k, v in merged.items()}


# manifests and staging ---------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_tree(path: str | Path) -> str:
    """Content hash of a file or of every file under a directory (relative paths included)."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f.relative_to(path).as_posix().encode("utf-8") + b"\0")
        h.update(sha256_file(f).encode("ascii"))
    return h.hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version(), "aspectsim": __version__}
    for pkg in ("numpy", "torch", "transformers", "gensim", "spacy"):
        try:
            out[pkg] = importlib_metadata.version(pkg)
        except importlib_metadata.PackageNotFoundError:
            pass
    return out


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def run_hash(command: str, config: dict, inputs: dict[str, str]) -> str:
    return config_hash({"command": command, **config, "inputs": inputs})


def write_manifest(out_dir: Path, command: str, config: dict, inputs: dict[str, str]) -> dict:
    manifest = {
        "command": command,
        "config": config,
        "config_hash": run_hash(command, config, inputs),
        "seed": config.get("seed"),
        "inputs": inputs,
        "versions": _versions(),
    }
    _write_json(out_dir / MANIFEST, manifest)
    return manifest


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _check_output_dir(out: Path) -> None:
    if out.exists() and not out.is_dir():
        raise UsageError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not (out / MANIFEST).exists():
        raise UsageError(f"refusing to overwrite non-empty directory {out} (no {MANIFEST})")


@contextmanager
def staged_output(out: Path):
    """Yield a scratch directory that replaces ``out`` only if the block succeeds."""
    _check_output_dir(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    stage.rename(out)


def _require_path(path, what: str, must_be_dir: bool = False) -> Path:
    if path is None:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists() or (must_be_dir and not p.is_dir()):
        raise UsageError(f"{what} {p} does not exist")
    return p


def _quiet_transformers() -> None:
    try:
        from transformers.utils import logging as hf_logging
    except ImportError:
        return
    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()


def _model_config(settings: dict):
    from .models import ModelConfig

    overrides = {
        "epochs": settings.get("epochs"),
        "learning_rate": settings.get("lr"),
        "batch_size": settings.get("batch_size"),
        "classification_threshold": settings.get("threshold"),
        "rng_seed": settings.get("seed"),
        "embedding_path": settings.get("embedding_path"),
        "max_length": settings.get("max_length"),
    }
    try:
        return ModelConfig.for_model(settings["model"], **{k: v for k, v in overrides.items() if v is not None})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


# commands ----------------------------------------------------------------


def cmd_build_dataset(args, settings) -> int:
    from .corpus import ParseStats, filter_and_dedup, parse_corpus, write_records
    from .dataset import save_dataset, write_stats
    from .labels import load_variant_table
    from .pipeline import build_dataset

    corpus = _require_path(settings.get("corpus"), "corpus path", must_be_dir=True)
    out = Path(_required(args.out, "--out"))
    table = load_variant_table(_require_path(settings["variants"], "variants file")) if settings.get("variants") else None
    inputs = {"corpus": sha256_tree(corpus)}
    if settings.get("variants"):
        inputs["variants"] = sha256_file(settings["variants"])
    # paths are replaced by content hashes so the hash survives moving the corpus
    run_config = {k: v for k, v in settings.items() if k in
                  ("format", "negative_ratio", "seed", "k", "top_k", "enrich")}

    parse_stats = ParseStats()
    records = list(parse_corpus(corpus, settings["format"], parse_stats))
    logger.info("parsed %d papers, %d citations, %d warnings",
                parse_stats.papers, parse_stats.citations, parse_stats.warnings)
    if settings["enrich"]:
        from .metadata import EnrichStats, MetadataClient, enrich_metadata

        enrich_stats = EnrichStats()
        with MetadataClient.from_config() as client:
            records = list(enrich_metadata(records, client, enrich_stats))
        logger.info("metadata: %d filled, %d unresolved", enrich_stats.filled, enrich_stats.unresolved)
    records = filter_and_dedup(records)
    logger.info("%d papers after filtering", len(records))

    provenance = {**run_config, "config_hash": run_hash("build-dataset", run_config, inputs)}
    result = build_dataset(
        records,
        table,
        negative_ratio=settings["negative_ratio"],
        seed=settings["seed"],
        k=settings["k"],
        top_k=settings["top_k"],
        provenance=provenance,
    )
    with staged_output(out) as stage:
        write_records(records, stage / "records.jsonl")
        save_dataset(result.samples, stage / "dataset.jsonl")
        result.folds.save(stage / "folds.json")
        write_stats(result.stats, result.vocab, stage)
        summary = result.summary()
        summary["parse"] = {
            "papers": parse_stats.papers,
            "citations": parse_stats.citations,
            "warnings": parse_stats.warnings,
            "retained": len(records),
        }
        _write_json(stage / "build_report.json", summary)
        write_manifest(stage, "build-dataset", run_config, inputs)
    print(f"{len(result.samples)} pairs ({result.stats.positives} positive, "
          f"{result.stats.negatives} negative) -> {out}")
    return 0


def cmd_stats(args, settings) -> int:
    from .dataset import dataset_stats, load_dataset, write_stats

    path = _require_path(args.dataset, "dataset")
    out = Path(_required(args.out, "--out"))
    samples = load_dataset(path)
    report = dataset_stats(samples)
    with staged_output(out) as stage:
        write_stats(report, samples.vocab, stage)
        write_manifest(stage, "stats", {}, {"dataset": sha256_file(path)})
    width = max(len(samples.vocab.display_name(c)) for c in samples.vocab.classes)
    for name, count in report.class_counts.items():
        print(f"{samples.vocab.display_name(name):<{width}}  {count:>8}")
    print(f"{'Total pairs':<{width}}  {len(samples):>8}")
    return 0


def _load_folds(args, samples, settings):
    from .dataset import FoldAssignment, stratified_folds

    if args.folds:
        folds = FoldAssignment.load(_require_path(args.folds, "folds file"))
        if len(folds.assignment) != len(samples):
            raise UsageError(f"folds file covers {len(folds.assignment)} pairs, dataset has {len(samples)}")
        return folds
    return stratified_folds(samples, settings["k"], settings["seed"])


def cmd_train(args, settings) -> int:
    from .dataset import load_dataset
    from .models import train

    path = _require_path(args.dataset, "dataset")
    out = Path(_required(args.out, "--out"))
    config = _model_config(settings)
    samples = load_dataset(path)
    inputs = {"dataset": sha256_file(path)}
    if args.fold is not None:
        folds = _load_folds(args, samples, settings)
        if not 0 <= args.fold < folds.k:
            raise UsageError(f"--fold must be in [0, {folds.k})")
        samples = samples.subset(folds.train_indices(args.fold))
    _quiet_transformers()
    with staged_output(out) as stage:
        model = train(config, samples.pairs, samples.papers, samples.vocab)
        model.save(stage)
        write_manifest(stage, "train", {**config.to_json(), "fold": args.fold}, inputs)
    losses = model.epoch_losses()
    print(f"trained {settings['model']} on {len(samples)} pairs; final epoch loss {losses[-1]:.4f} -> {out}")
    return 0


def cmd_cross_validate(args, settings) -> int:
    from .dataset import load_dataset
    from .metrics import write_report
    from .models.cv import evaluate_cross_validation, run_cross_validation

    path = _require_path(args.dataset, "dataset")
    out = Path(_required(args.out, "--out"))
    _check_output_dir(out)
    config = _model_config(settings)
    samples = load_dataset(path)
    folds = _load_folds(args, samples, settings)
    if args.fold is not None and not 0 <= args.fold < folds.k:
        raise UsageError(f"--fold must be in [0, {folds.k})")
    _quiet_transformers()
    out.mkdir(parents=True, exist_ok=True)
    folds.save(out / "folds.json")
    result = run_cross_validation(
        samples,
        folds,
        config,
        output_dir=out,
        resume=args.resume,
        only_folds=None if args.fold is None else [args.fold],
    )
    _write_json(out / "failures.json", [{"fold": f.fold, "error": f.error} for f in result.failures])
    write_manifest(out, "cross-validate", {**config.to_json(), "k": folds.k},
                   {"dataset": sha256_file(path), "folds": sha256_file(out / "folds.json")})
    if not result.completed:
        raise RuntimeError("every fold failed; see failures.json")
    report = evaluate_cross_validation(samples, result, args.macro_exclude or ())
    write_report(report, out, title=f"{settings['model']} ({report.k} of {folds.k} folds)")
    micro = report.aggregate["micro_f1"]
    print(f"micro-F1 {micro[0]:.3f} ± {micro[1]:.3f} over {report.k} folds"
          + (f"; {len(result.failures)} fold(s) failed" if result.failures else ""))
    return 0 if not result.failures else 1


def cmd_evaluate(args, settings) -> int:
    from .dataset import load_dataset
    from .metrics import write_report
    from .models.cv import CrossValidationResult, evaluate_cross_validation, predictions_path, read_predictions

    path = _require_path(args.dataset, "dataset")
    pred_dir = _require_path(args.predictions, "predictions directory", must_be_dir=True)
    out = Path(_required(args.out, "--out"))
    samples = load_dataset(path)
    folds = _load_folds(args, samples, settings)
    result = CrossValidationResult(folds)
    for fold in range(folds.k):
        p = predictions_path(pred_dir, fold)
        if p.exists():
            result.predictions[fold] = read_predictions(p, samples)
        else:
            logger.warning("fold %d has no predictions under %s", fold, pred_dir)
    if not result.completed:
        raise RuntimeError(f"no fold predictions found under {pred_dir}")
    report = evaluate_cross_validation(samples, result, args.macro_exclude or ())
    inputs = {"dataset": sha256_file(path), "predictions": sha256_tree(pred_dir)}
    with staged_output(out) as stage:
        write_report(report, stage, title=args.title or "Evaluation")
        write_manifest(stage, "evaluate", {"macro_exclude": list(args.macro_exclude or ())}, inputs)
    print((Path(out) / "report.md").read_text(encoding="utf-8"))
    return 0


class PaperNotFound(RuntimeError):
    pass


def resolve_paper(ref: str, client=None):
    """Inline JSON, a JSON file, or an external id (``doi:...``, ``arxiv:...``, S2 id)."""
    from .dataset import PaperText
    from .metadata import MetadataClient, MetadataQuery

    obj = None
    if ref.lstrip().startswith("{"):
        try:
            obj = json.loads(ref)
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid inline paper JSON: {exc.msg}") from None
    elif ref.endswith(".json") or Path(ref).is_file():
        p = Path(ref)
        if not p.is_file():
            raise PaperNotFound(f"paper not found: {ref}")
        obj = json.loads(p.read_text(encoding="utf-8"))
    if obj is not None:
        title, abstract = (obj.get("title") or "").strip(), (obj.get("abstract") or "").strip()
        if not title and not abstract:
            raise PaperNotFound(f"paper not found: {ref} has neither title nor abstract")
        return PaperText(title, abstract)
    scheme, _, ident = ref.partition(":")
    query = MetadataQuery(scheme.lower(), ident) if ident else MetadataQuery("s2", ref)
    owned = client is None
    client = client or MetadataClient.from_config()
    try:
        resp = client.lookup(query)
    except ValueError as exc:
        raise PaperNotFound(f"paper not found: {ref} ({exc})") from None
    finally:
        if owned:
            client.close()
    if resp is None or not ((resp.title or "").strip() or (resp.abstract or "").strip()):
        raise PaperNotFound(f"paper not found: {ref}")
    return PaperText((resp.title or "").strip(), (resp.abstract or "").strip())


def verdict(labels, vocab) -> str:
    if not labels:
        return "undecided (no class above threshold)"
    if set(labels) == {vocab.none_class}:
        return "not similar"
    aspects = [vocab.display_name(x) for x in vocab.sort_labels(labels) if x != vocab.none_class]
    return "similar: " + ", ".join(aspects)


def cmd_predict(args, settings) -> int:
    from .models import TrainedModel
    from .models.head import threshold_labels
    from .models.training import predict_probabilities

    model_dir = _require_path(args.model_dir, "model directory", must_be_dir=True)
    _quiet_transformers()
    seed, target = resolve_paper(args.seed_paper), resolve_paper(args.target_paper)
    model = TrainedModel.load(model_dir)
    threshold = settings.get("threshold") or model.config.classification_threshold
    if not 0.0 < threshold < 1.0:
        raise UsageError("--threshold must be in (0, 1)")
    probs = predict_probabilities(model, [(seed, target)])[0]
    labels = threshold_labels(probs, model.vocab.classes, threshold)
    result = {
        "labels": model.vocab.sort_labels(labels),
        "probabilities": {c: round(float(p), 6) for c, p in zip(model.vocab.classes, probs)},
        "threshold": threshold,
        "verdict": verdict(labels, model.vocab),
    }
    print(json.dumps(result, indent=2, ensure_ascii=False))
    if args.out:
        inputs = {"model": sha256_file(model_dir / "config.json"),
                  "seed_paper": hashlib.sha256(repr(seed).encode()).hexdigest(),
                  "target_paper": hashlib.sha256(repr(target).encode()).hexdigest()}
        with staged_output(Path(args.out)) as stage:
            _write_json(stage / "prediction.json", result)
            write_manifest(stage, "predict", {"threshold": threshold}, inputs)
    return 0


# parser ------------------------------------------------------------------


def _required(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", help="registry name (scibert, bert-base, ..., lstm-baseline) or checkpoint path")
    g.add_argument("--embedding-path", dest="embedding_path", help="fastText vectors for the LSTM baseline")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--threshold", type=float)
    g.add_argument("--max-length", dest="max_length", type=int)
    g.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aspectsim",
        description="Aspect-based document similarity from citation sections.",
    )
    parser.add_argument("--config", help="TOML file with run settings")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="corpus -> labeled pairs, negatives, folds and stats")
    p.add_argument("--corpus")
    p.add_argument("--format", choices=("acl_style", "cord19_style"))
    p.add_argument("--variants", help="section variant table (variant -> canonical)")
    p.add_argument("--negative-ratio", dest="negative_ratio", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int, help="number of folds")
    p.add_argument("--top-k", dest="top_k", type=int, help="number of positive section classes")
    p.add_argument("--enrich", action="store_true", default=None, help="fill missing abstracts via the metadata API")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("stats", help="label distribution of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--folds", help="folds.json; with --fold, that fold is held out")
    p.add_argument("--fold", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cross-validate", help="k-fold train/predict/evaluate")
    p.add_argument("--dataset", required=True)
    p.add_argument("--folds", help="folds.json (default: stratify with --k and --seed)")
    p.add_argument("--fold", type=int, help="run only this fold")
    p.add_argument("--k", type=int)
    p.add_argument("--resume", action="store_true", help="skip folds that already have predictions")
    p.add_argument("--macro-exclude", dest="macro_exclude", action="append", help="class left out of macro averages")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_cross_validate)

    p = sub.add_parser("evaluate", help="metrics from saved fold predictions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--folds")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--predictions", required=True, help="cross-validate output directory")
    p.add_argument("--macro-exclude", dest="macro_exclude", action="append")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="aspects for one (seed, target) paper pair")
    p.add_argument("--model", dest="model_dir", required=True, help="trained model directory")
    p.add_argument("--seed-paper", required=True, help="inline JSON, JSON file, or id such as doi:...")
    p.add_argument("--target-paper", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="also write prediction.json and a manifest here")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = resolve_settings(args)
        return args.func(args, settings)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 - report, don't dump a traceback
        logger.debug("failure", exc_info=True)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
