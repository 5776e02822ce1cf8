"""Batch command-line entry points.

Subcommands run in-process against the core package; `serve` starts the
HTTP service. The data directory can come from --data or the
PROTOFORGE_DATA environment variable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import datagen, metrics, refinery, render, video as videomod
from .datagen import DataConfig, generate_dataset, load_manifest, load_sample, load_split
from .model import TrainConfig, encode_samples, load_model, save_model, train as train_model
from .refinery import Session, VersionStore, build_cache, load_cache, save_cache


def _fail(message: str, as_json: bool):
    if as_json:
        click.echo(json.dumps({"error": message}))
    else:
        click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _data_dir(data) -> Path:
    if data:
        return Path(data)
    raise click.UsageError("no data directory: pass --data or set PROTOFORGE_DATA")


def _load_dataset(data_dir: Path):
    manifest = load_manifest(data_dir / "manifest.json")
    return manifest, load_split(manifest, "train"), load_split(manifest, "test")


def _resolve_model(model_path: Path):
    """Accept either a store root (lineage.json) or a bare model directory."""
    model_path = Path(model_path)
    if (model_path / "lineage.json").exists():
        store = VersionStore(model_path)
        ids = store.ids()
        if not ids:
            raise click.UsageError(f"{model_path}: empty version store")
        return store.load(ids[-1]), store
    if (model_path / "model.json").exists():
        return load_model(model_path), None
    raise click.UsageError(f"{model_path}: neither a version store nor a model directory")


def _session_for(model, store, data_dir: Path, model_dir: Path | None = None):
    manifest, train_s, test_s = _load_dataset(data_dir)
    caches = None
    if model_dir is not None:
        tc_path = model_dir / "cache_train.bin"
        sc_path = model_dir / "cache_test.bin"
        if tc_path.exists() and sc_path.exists():
            try:
                tc = load_cache(tc_path, verify_with=model)
                sc = load_cache(sc_path, verify_with=model)
                if tc.model_id == model.id and sc.model_id == model.id:
                    caches = (tc, sc)
            except refinery.StaleCacheError:
                caches = None
    if caches is None:
        enc_train = encode_samples(train_s)
        enc_test = encode_samples(test_s)
        caches = (
            build_cache(model, enc_train, "train"),
            build_cache(model, enc_test, "test"),
        )
    marks = {s.sample_id: s.landmarks for s in list(train_s) + list(test_s)}
    sess = Session(model, caches[0], caches[1], marks, store=store)
    samples_by_id = {s.sample_id: s for s in list(train_s) + list(test_s)}
    return sess, manifest, samples_by_id


data_option = click.option(
    "--data", envvar="PROTOFORGE_DATA", type=click.Path(), help="dataset directory"
)


@click.group()
def main():
    """Prototype-based video-fragment classifier with fast refinement."""


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.option("--train", "train_n", default=200, type=int)
@click.option("--test", "test_n", default=100, type=int)
@click.option("--size", default=64, type=int)
@click.option("--k", default=10, type=int)
@click.option("--fraction", default=0.5, type=float, help="manipulated fraction")
def gen_data(out, seed, train_n, test_n, size, k, fraction):
    """Generate a synthetic dataset with planted artifacts."""
    cfg = DataConfig(
        height=size,
        width=size,
        k=k,
        train_samples=train_n,
        test_samples=test_n,
        manipulated_fraction=fraction,
        seed=seed,
    )
    manifest = generate_dataset(cfg, out)
    click.echo(
        f"wrote {sum(sum(c.values()) for c in manifest.counts.values())} samples "
        f"to {out} (counts: {manifest.counts})"
    )


@main.command("train")
@data_option
@click.option("--out", required=True, type=click.Path())
@click.option("--protos", default=5, type=int, help="prototypes per class")
@click.option("--seed", default=0, type=int)
@click.option("--epochs", default=30, type=int)
@click.option("--json", "as_json", is_flag=True)
def train_cmd(data, out, protos, seed, epochs, as_json):
    """Train a model and write the version store plus activation caches."""
    data_dir = _data_dir(data)
    out = Path(out)
    _, train_s, test_s = _load_dataset(data_dir)
    enc_train = encode_samples(train_s)
    enc_test = encode_samples(test_s)
    cfg = TrainConfig(protos_per_class=protos, seed=seed, epochs=epochs)
    model = train_model(enc_train, cfg)
    store = VersionStore(out)
    store.add(model)
    tc = build_cache(model, enc_train, "train")
    sc = build_cache(model, enc_test, "test")
    save_cache(tc, out / "cache_train.bin")
    save_cache(sc, out / "cache_test.bin")
    report = metrics.evaluate(model, sc)
    if as_json:
        click.echo(json.dumps({"model_id": model.id, "metrics": report.as_dict()},
                              indent=1, sort_keys=True))
    else:
        click.echo(f"model {model.id} -> {out}")
        click.echo(f"test accuracy {report.accuracy:.4f} auc {report.auc:.4f}")


@main.command("eval")
@data_option
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--split", default="test", type=click.Choice(["train", "test"]))
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(data, model_path, split, as_json):
    """Evaluate a model on a dataset split."""
    data_dir = _data_dir(data)
    model, _ = _resolve_model(Path(model_path))
    manifest, train_s, test_s = _load_dataset(data_dir)
    samples = train_s if split == "train" else test_s
    report = metrics.evaluate(model, encode_samples(samples))
    if as_json:
        click.echo(json.dumps({"model_id": model.id, "split": split,
                               "metrics": report.as_dict()}, indent=1, sort_keys=True))
    else:
        click.echo(f"{split}: n={report.n_samples} accuracy {report.accuracy:.4f} "
                   f"auc {report.auc:.4f} total loss {report.loss.total:.4f}")


@main.command("refine")
@data_option
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def refine_cmd(data, model_path, plan_path, out, as_json):
    """Apply an ordered plan of refinement ops, dry-running then committing."""
    data_dir = _data_dir(data)
    model, _ = _resolve_model(Path(model_path))
    store = VersionStore(out)
    sess, _, _ = _session_for(model, store, data_dir, Path(model_path))
    plan = json.loads(Path(plan_path).read_text())
    log = []
    for step in plan:
        kind = step.get("kind")
        if kind == "delete":
            report = sess.delete_prototypes(tuple(step["ids"]), dry_run=True)
        elif kind in ("replace", "add"):
            cand = step["candidate"]
            entry = sess.patch_index.find(cand["sample_id"], tuple(cand["cell"]))
            target = None if kind == "add" else step.get("proto_id")
            report = sess.replace_prototype(target, entry, dry_run=True)
        else:
            _fail(f"unknown plan op kind {kind!r}", as_json)
        entry_log = {
            "op": report.op.describe(),
            "accuracy_before": report.before.accuracy,
            "accuracy_after": report.after.accuracy,
            "accuracy_delta": report.after.accuracy - report.before.accuracy,
            "auc_after": report.after.auc,
            "elapsed_ms": report.elapsed_ms,
        }
        new_id = sess.commit(report)
        entry_log["committed"] = new_id
        log.append(entry_log)
        if not as_json:
            click.echo(f"{entry_log['op']}: accuracy {entry_log['accuracy_before']:.4f} "
                       f"-> {entry_log['accuracy_after']:.4f} (committed {new_id})")
    save_cache(sess.train_cache, Path(out) / "cache_train.bin")
    save_cache(sess.test_cache, Path(out) / "cache_test.bin")
    if as_json:
        click.echo(json.dumps({"final_model_id": sess.model.id, "steps": log},
                              indent=1, sort_keys=True))
    else:
        click.echo(f"final model {sess.model.id} -> {out}")


@main.command("trace")
@data_option
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--video", "video_id", required=True)
@click.option("--out", "out_path", type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def trace_cmd(data, model_path, video_id, out_path, as_json):
    """Predict one video (a source id from the dataset) window by window."""
    data_dir = _data_dir(data)
    model, _ = _resolve_model(Path(model_path))
    manifest, train_s, test_s = _load_dataset(data_dir)
    windows = sorted(
        (s for s in list(train_s) + list(test_s) if s.source_id == video_id),
        key=lambda s: s.frame_index,
    )
    if not windows:
        _fail(f"no samples for video {video_id!r}", as_json)
    record = videomod.VideoRecord.from_samples(video_id, windows)
    trace = videomod.predict_video(model, record)
    text = trace.to_json()
    if out_path:
        Path(out_path).write_text(text)
    if as_json or not out_path:
        click.echo(text)
    else:
        click.echo(f"trace for {video_id} ({len(windows)} windows) -> {out_path}")


@main.command("render")
@data_option
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def render_cmd(data, model_path, out):
    """Write prototype strip PNGs and relevance overlays."""
    data_dir = _data_dir(data)
    model, _ = _resolve_model(Path(model_path))
    manifest, train_s, test_s = _load_dataset(data_dir)
    samples_by_id = {s.sample_id: s for s in list(train_s) + list(test_s)}
    written = render.render_model(model, samples_by_id, out)
    from . import explain
    from .encoder import EncoderConfig, encode

    for p in model.prototypes:
        if p.source is None or p.source.sample_id not in samples_by_id:
            continue
        sample = samples_by_id[p.source.sample_id]
        rel = explain.prp_map(model, sample, encode(sample), p.id)
        render.relevance_overlay(sample, rel).save(Path(out) / f"prp_{p.id}.png")
        written.append(Path(out) / f"prp_{p.id}.png")
    click.echo(f"wrote {len(written)} renders to {out}")


@main.command("serve")
@data_option
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8080, type=int)
@click.option("--renders", "render_dir", default=None, type=click.Path())
def serve_cmd(data, model_path, host, port, render_dir):
    """Start the HTTP service for the web UI."""
    from .service import AppState, serve

    data_dir = _data_dir(data)
    model, store = _resolve_model(Path(model_path))
    if store is None:
        store = VersionStore(Path(model_path) / "store")
    sess, manifest, samples_by_id = _session_for(
        model, store, data_dir, Path(model_path)
    )
    videos = {}
    for s in samples_by_id.values():
        videos.setdefault(s.source_id, []).append(s)
    records = {
        vid: videomod.VideoRecord.from_samples(
            vid, sorted(ss, key=lambda s: s.frame_index)
        )
        for vid, ss in videos.items()
    }
    state = AppState(
        session=sess,
        videos=records,
        samples_by_id=samples_by_id,
        render_dir=Path(render_dir) if render_dir else Path(model_path) / "renders",
    )
    click.echo(f"serving model {sess.model.id} on http://{host}:{port}")
    serve(state, host=host, port=port)


if __name__ == "__main__":
    main()
