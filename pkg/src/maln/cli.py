"""Command-line entry point wiring the library into reproducible runs.

Configuration resolves in layers (defaults, preset, config file, flags).
Every command writes its artifacts into a staging directory that is
atomically renamed onto the requested output path on success, so a
failed run leaves nothing behind.  Each run directory carries a
manifest.json plus the fully resolved config; downstream commands
(classify, translate, map-sensor) reload both from a train run.

Exit codes: 0 success, 1 configuration error, 2 data/parse error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, available_presets, format_kv
from .data import (MultimodalDataset, SynthConfig, ViewConfig,
                   generate_synthetic, load_binary, save_binary)
from .errors import ConfigError, DataError, DimensionError, NumericError
from .inference import (KnnClassAvg, MetricsReport, compute_metrics, ensemble_predict,
                        fuse_embeddings, train_classifier, unified_cross_eval)
from .losses import LossConfig
from .mining import MiningConfig, dump_triplets, mine_checkpoint
from .model import EmbeddingSet, SensorAutoencoder
from .training import (MappingPlan, TrainingPlan, train_additional_sensor,
                       train_shared_manifold)
from .translation import (mean_latent_baseline, predict_latent, train_regressor,
                          translate, translation_mse)

log = logging.getLogger("maln")

# independent sub-streams of the run seed; keep stable across releases
_STREAM_MODEL_A = 1
_STREAM_MODEL_B = 2
_STREAM_MODEL_MAP = 3
_STREAM_CLASSIFIER = 10
_STREAM_REGRESSOR = 20


def _derived_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


# -- run plumbing ------------------------------------------------------------


@contextmanager
def _staged_output(final_path):
    """Directory that becomes `final_path` only if the body succeeds."""
    final = Path(final_path)
    if final.exists():
        raise ConfigError(f"output path already exists: {final}")
    staging = final.parent / (final.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    os.replace(staging, final)


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig,
                    artifacts: dict[str, str], seconds: float,
                    extra: dict | None = None) -> None:
    payload = {
        "tool": "maln",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "artifacts": artifacts,
        "wall_clock_seconds": round(seconds, 3),
    }
    if extra:
        payload.update(extra)
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    (out_dir / "resolved.cfg").write_text(format_kv(cfg.to_dict()))


def _load_run(run_dir) -> tuple[RunConfig, Path]:
    run = Path(run_dir)
    manifest = run / "manifest.json"
    if not manifest.exists():
        raise DataError(f"no manifest.json under run directory: {run}")
    payload = json.loads(manifest.read_text())
    return RunConfig.from_dict(payload.get("config", {})), run


def _model_base(directory: Path, sensor_id: str) -> Path:
    return directory / f"model_{sensor_id.lower()}"


def _load_model(run: Path, sensor_id: str) -> SensorAutoencoder:
    base = _model_base(run, sensor_id)
    if not base.with_suffix(".cfg").exists():
        raise DataError(f"no saved model for sensor '{sensor_id}' under {run}")
    return SensorAutoencoder.load(base)


def _synth_config(cfg: RunConfig) -> SynthConfig:
    views = {str(sid): ViewConfig(int(dim), int(depth), cfg.synth_noise)
             for sid, dim, depth in zip(cfg.synth_sensor_ids, cfg.synth_sensor_dims,
                                        cfg.synth_view_depths)}
    return SynthConfig(cfg.synth_classes, cfg.synth_samples_per_class,
                       cfg.synth_truth_dim, views, cfg.synth_cluster_spread,
                       cfg.data_seed)


def _load_dataset(cfg: RunConfig) -> MultimodalDataset:
    if cfg.dataset:
        path = Path(cfg.dataset)
        if not path.exists():
            raise DataError(f"dataset file not found: {path}")
        dataset = load_binary(path)
    else:
        dataset = generate_synthetic(_synth_config(cfg))
    dataset.split(cfg.train_fraction, seed=cfg.data_seed)
    return dataset


def _resolve_config(args) -> RunConfig:
    overrides: dict[str, str] = {}
    for key in ("dataset", "seed", "gamma", "alpha", "strategy", "triplet_sensor"):
        value = getattr(args, key, None)
        if value is not None:
            if key == "triplet_sensor" and value == "alt":
                value = "alternating"
            overrides[key] = str(value)
    if getattr(args, "no_figures", False):
        overrides["figures"] = "false"
    cfg = RunConfig.from_sources(preset=args.preset, config_path=args.config,
                                 overrides=overrides)
    cfg.validate()
    return cfg


def _training_plan(cfg: RunConfig) -> TrainingPlan:
    return TrainingPlan(cfg.checkpoints, cfg.epochs_per_checkpoint,
                        cfg.triplets_per_checkpoint, cfg.batch_size, cfg.learning_rate,
                        LossConfig(cfg.alpha, cfg.gamma, cfg.hinge),
                        MiningConfig(strategy=cfg.strategy, easy_fraction=cfg.easy_fraction),
                        cfg.triplet_sensor, cfg.seed)


def _build_model(cfg: RunConfig, sensor_id: str, input_dim: int,
                 stream: int) -> SensorAutoencoder:
    return SensorAutoencoder.build(sensor_id, input_dim, cfg.latent_dim,
                                   enc_hidden=cfg.enc_hidden,
                                   dec_hidden=cfg.dec_hidden or None,
                                   hidden_activation=cfg.hidden_activation,
                                   seed=_derived_seed(cfg.seed, stream))


# -- delimited writers --------------------------------------------------------


def _write_training_log(path: Path, result) -> None:
    lines = ["checkpoint\tepoch\tl_t\tl_e\tl_se\ttotal\tsilhouette"]
    for rec in result.records:
        for epoch, b in enumerate(rec.epoch_losses, start=1):
            sil = f"{rec.silhouette:.6f}" if epoch == len(rec.epoch_losses) else ""
            lines.append(f"{rec.index}\t{epoch}\t{b.l_t:.6g}\t{b.l_e:.6g}"
                         f"\t{b.l_se:.6g}\t{b.total:.6g}\t{sil}")
    path.write_text("\n".join(lines) + "\n")


def _write_predictions(path: Path, sample_ids, y_true, y_pred) -> None:
    lines = [f"{int(s)}\t{int(t)}\t{int(p)}"
             for s, t, p in zip(sample_ids, y_true, y_pred)]
    path.write_text("sample_id\ttrue\tpred\n" + "\n".join(lines) + "\n")


def _metric_record_lines(model_name: str, report: MetricsReport) -> list[str]:
    return [f"{model_name}\t{metric}\t{value:.6f}"
            for metric, value in report.to_records()]


# -- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    started = time.perf_counter()
    cfg = _resolve_config(args)
    dataset = _load_dataset(cfg)
    id_a, id_b = cfg.sensors
    model_a = _build_model(cfg, id_a, dataset.dim(id_a), _STREAM_MODEL_A)
    model_b = _build_model(cfg, id_b, dataset.dim(id_b), _STREAM_MODEL_B)
    plan = _training_plan(cfg)

    with _staged_output(args.out) as out:
        result = train_shared_manifold(dataset, model_a, model_b, plan,
                                       snapshot_dir=out / "checkpoints")
        model_a.save(_model_base(out, id_a))
        model_b.save(_model_base(out, id_b))
        _write_training_log(out / "training_log.tsv", result)
        artifacts = {
            "model_" + id_a.lower(): f"model_{id_a.lower()}.maln",
            "model_" + id_b.lower(): f"model_{id_b.lower()}.maln",
            "checkpoints": "checkpoints",
            "training_log": "training_log.tsv",
        }

        if args.dump_triplets:
            # the pool a hypothetical next checkpoint would train on
            next_cp = plan.n_checkpoints + 1
            if plan.triplet_sensor == "alternating":
                sensor_t = "A" if next_cp % 2 == 1 else "B"
            else:
                sensor_t = plan.triplet_sensor
            model_t, model_o = (model_a, model_b) if sensor_t == "A" else (model_b, model_a)
            x_t = dataset.train_arrays(model_t.sensor_id)
            x_o = dataset.train_arrays(model_o.sensor_id)
            pool = mine_checkpoint(EmbeddingSet.from_model(model_t, x_t, dataset.train_labels),
                                   EmbeddingSet.from_model(model_o, x_o, dataset.train_labels),
                                   plan.resolved_mining(), next_cp)
            dump_triplets(pool, out / "triplets.tsv")
            artifacts["triplets"] = "triplets.tsv"

        if cfg.figures:
            from . import report
            artifacts["loss_figure"] = "loss_curves.png"
            artifacts["silhouette_figure"] = "silhouette.png"
            artifacts["embedding_figure"] = "embeddings.png"
            report.plot_loss_curves(result.records, out / "loss_curves.png")
            report.plot_silhouette_curve(result.initial_silhouette, result.records,
                                         out / "silhouette.png")
            sets = [EmbeddingSet.from_model(m, dataset.train_arrays(m.sensor_id),
                                            dataset.train_labels)
                    for m in (model_a, model_b)]
            report.plot_embeddings(sets, out / "embeddings.png")

        _write_manifest(out, "train", cfg, artifacts, time.perf_counter() - started,
                        extra={"initial_silhouette": result.initial_silhouette,
                               "final_silhouette": result.records[-1].silhouette})
    print(f"final silhouette {result.records[-1].silhouette:.4f} "
          f"(initial {result.initial_silhouette:.4f})")
    print(f"wrote {args.out}")
    return 0


def cmd_map_sensor(args) -> int:
    started = time.perf_counter()
    cfg, run = _load_run(args.run)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_figures:
        cfg.figures = False
    dataset = _load_dataset(cfg)
    frozen = _load_model(run, cfg.map_encoder)
    digest_before = frozen.params_digest()
    model_new = _build_model(cfg, cfg.map_sensor, dataset.dim(cfg.map_sensor),
                             _STREAM_MODEL_MAP)
    plan = MappingPlan(cfg.map_epochs, cfg.map_batch, cfg.map_lr, cfg.seed,
                       cfg.latent_gap_threshold)

    with _staged_output(args.out) as out:
        record = train_additional_sensor(frozen, model_new, dataset, plan)
        digest_after = frozen.params_digest()
        if digest_after != digest_before:
            raise NumericError("frozen encoder parameters changed during mapping")
        model_new.save(_model_base(out, cfg.map_sensor))
        lines = ["epoch\tlatent\trecon\ttotal"]
        for epoch, (latent, recon) in enumerate(record.epoch_losses, start=1):
            lines.append(f"{epoch}\t{latent:.6g}\t{recon:.6g}\t{latent + recon:.6g}")
        (out / "mapping_log.tsv").write_text("\n".join(lines) + "\n")
        artifacts = {"model_" + cfg.map_sensor.lower():
                     f"model_{cfg.map_sensor.lower()}.maln",
                     "mapping_log": "mapping_log.tsv"}
        if cfg.figures:
            from . import report
            artifacts["mapping_figure"] = "mapping_loss.png"
            report.plot_mapping_curve(record.epoch_losses, out / "mapping_loss.png")
        _write_manifest(out, "map-sensor", cfg, artifacts, time.perf_counter() - started,
                        extra={"frozen_sensor": cfg.map_encoder,
                               "frozen_digest": digest_before,
                               "final_latent_gap": record.final_latent_gap,
                               "latent_gap_threshold": plan.latent_gap_threshold,
                               "threshold_met": record.threshold_met})
    print(f"frozen encoder '{cfg.map_encoder}' digest {digest_before[:16]} "
          f"unchanged: {digest_after == digest_before}")
    print(f"latent gap {record.final_latent_gap:.5f} "
          f"(threshold {plan.latent_gap_threshold}, met: {record.threshold_met})")
    print(f"wrote {args.out}")
    return 0


def cmd_classify(args) -> int:
    started = time.perf_counter()
    cfg, run = _load_run(args.run)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.k is not None:
        cfg.knn_k = args.k
    if args.no_figures:
        cfg.figures = False
    dataset = _load_dataset(cfg)
    models = {sid: _load_model(run, sid) for sid in cfg.sensors}
    train_ids = np.flatnonzero(dataset.train_mask)
    test_ids = np.flatnonzero(dataset.test_mask)
    train_sets = {sid: EmbeddingSet.from_model(m, dataset.train_arrays(sid),
                                               dataset.train_labels, train_ids)
                  for sid, m in models.items()}
    test_sets = {sid: EmbeddingSet.from_model(m, dataset.test_arrays(sid),
                                              dataset.test_labels, test_ids)
                 for sid, m in models.items()}
    fused_train = fuse_embeddings(list(train_sets.values()))
    fused_test = fuse_embeddings(list(test_sets.values()))
    y_train, y_test = dataset.train_labels, dataset.test_labels
    n_classes = dataset.n_classes

    knn = KnnClassAvg(cfg.knn_k, n_classes).fit(fused_train, y_train)
    members = [train_classifier(fused_train, y_train, hidden=cfg.classifier_hidden,
                                epochs=cfg.classifier_epochs,
                                learning_rate=cfg.classifier_lr,
                                batch_size=cfg.classifier_batch,
                                seed=_derived_seed(cfg.seed, _STREAM_CLASSIFIER + i),
                                n_classes=n_classes)
               for i in range(cfg.ensemble_members)]
    predictions = {
        "fused_knn": knn.predict(fused_test),
        "fused_classifier": members[0].predict(fused_test),
        "fused_ensemble": ensemble_predict(members, fused_test),
    }
    reports = {name: compute_metrics(y_test, pred, n_classes)
               for name, pred in predictions.items()}

    with _staged_output(args.out) as out:
        text_blocks = []
        record_lines = ["model\tmetric\tvalue"]
        for name, rep in reports.items():
            text_blocks.append(f"[{name}]\n" + rep.format_text(dataset.class_names))
            record_lines.extend(_metric_record_lines(name, rep))
        (out / "metrics.txt").write_text("\n".join(text_blocks))
        (out / "metrics.tsv").write_text("\n".join(record_lines) + "\n")
        artifacts = {"metrics_text": "metrics.txt", "metrics": "metrics.tsv"}
        for name, pred in predictions.items():
            fname = f"predictions_{name}.tsv"
            _write_predictions(out / fname, test_ids, y_test, pred)
            artifacts[f"predictions_{name}"] = fname

        extra: dict = {"overall_accuracy":
                       {name: rep.overall_accuracy for name, rep in reports.items()}}
        if args.unified:
            table = unified_cross_eval(train_sets, test_sets,
                                       hidden=cfg.classifier_hidden,
                                       epochs=cfg.classifier_epochs,
                                       learning_rate=cfg.classifier_lr,
                                       batch_size=cfg.classifier_batch,
                                       seed=_derived_seed(cfg.seed, _STREAM_CLASSIFIER))
            lines = ["train_sensor\ttest_sensor\toa\taa\tkappa"]
            for (tr, te), rep in sorted(table.items()):
                lines.append(f"{tr}\t{te}\t{rep.overall_accuracy:.6f}"
                             f"\t{rep.average_accuracy:.6f}\t{rep.kappa:.6f}")
            (out / "unified.tsv").write_text("\n".join(lines) + "\n")
            artifacts["unified"] = "unified.tsv"

        sweep_curves: dict[str, list[float]] = {}
        if args.knn_sweep:
            ks = [k for k in cfg.knn_sweep if k <= len(y_train)]
            lines = ["mode\tk\toa\taa\tkappa"]
            modes = {"fused": (fused_train, fused_test)}
            modes.update({sid: (train_sets[sid].z, test_sets[sid].z)
                          for sid in cfg.sensors})
            for mode, (ztr, zte) in modes.items():
                curve = []
                for k in ks:
                    rep = compute_metrics(
                        y_test, KnnClassAvg(k, n_classes).fit(ztr, y_train).predict(zte),
                        n_classes)
                    curve.append(rep.overall_accuracy)
                    lines.append(f"{mode}\t{k}\t{rep.overall_accuracy:.6f}"
                                 f"\t{rep.average_accuracy:.6f}\t{rep.kappa:.6f}")
                sweep_curves[mode] = curve
            (out / "knn_sweep.tsv").write_text("\n".join(lines) + "\n")
            artifacts["knn_sweep"] = "knn_sweep.tsv"

        if cfg.figures:
            from . import report
            artifacts["embedding_figure"] = "embeddings.png"
            report.plot_embeddings(list(test_sets.values()), out / "embeddings.png")
            if sweep_curves:
                artifacts["knn_sweep_figure"] = "knn_sweep.png"
                report.plot_knn_sweep(ks, sweep_curves, out / "knn_sweep.png")

        _write_manifest(out, "classify", cfg, artifacts,
                        time.perf_counter() - started, extra=extra)
    for name, rep in reports.items():
        print(f"{name}: OA {rep.overall_accuracy:.4f} AA {rep.average_accuracy:.4f} "
              f"kappa {rep.kappa:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_translate(args) -> int:
    started = time.perf_counter()
    cfg, run = _load_run(args.run)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_figures:
        cfg.figures = False
    from_id = args.from_sensor or cfg.translate_from
    to_id = args.to_sensor or cfg.translate_to
    dataset = _load_dataset(cfg)
    model_from = _load_model(run, from_id)
    model_to = _load_model(run, to_id)

    z_from_train = model_from.embed(dataset.train_arrays(from_id))
    z_to_train = model_to.embed(dataset.train_arrays(to_id))
    z_from_test = model_from.embed(dataset.test_arrays(from_id))
    z_to_test = model_to.embed(dataset.test_arrays(to_id))

    result = train_regressor(z_from_train, z_to_train, hidden=cfg.regressor_hidden,
                             folds=cfg.regressor_folds, epochs=cfg.regressor_epochs,
                             learning_rate=cfg.regressor_lr,
                             batch_size=cfg.regressor_batch,
                             seed=_derived_seed(cfg.seed, _STREAM_REGRESSOR),
                             decoder=model_to)
    predicted_latent = predict_latent(result.regressor, z_from_test)
    latent_mse = float(((predicted_latent - z_to_test) ** 2).mean())
    baseline = mean_latent_baseline(z_to_train, z_from_test.shape[0])
    baseline_mse = float(((baseline - z_to_test) ** 2).mean())
    decoded = translate(result.regressor, model_to, z_from_test)
    decoded_mse = translation_mse(decoded, dataset.test_arrays(to_id))

    with _staged_output(args.out) as out:
        translated = MultimodalDataset({to_id: decoded}, dataset.test_labels,
                                       dataset.class_names)
        save_binary(translated, out / "translated.mmds")
        rows = [
            ("fold_latent_mse_mean", result.mean_mse),
            ("fold_latent_mse_std", result.std_mse),
            ("test_latent_mse", latent_mse),
            ("baseline_latent_mse", baseline_mse),
            ("decoded_mse", decoded_mse),
        ]
        text = [f"translation {from_id} -> {to_id}",
                f"fold latent MSE {result.mean_mse:.6f} +- {result.std_mse:.6f} "
                f"(std across {cfg.regressor_folds} folds)"]
        text += [f"{name} {value:.6f}" for name, value in rows[2:]]
        (out / "translation_metrics.txt").write_text("\n".join(text) + "\n")
        (out / "translation_metrics.tsv").write_text(
            "metric\tvalue\n" +
            "\n".join(f"{name}\t{value:.8f}" for name, value in rows) + "\n")
        artifacts = {"translated": "translated.mmds",
                     "metrics_text": "translation_metrics.txt",
                     "metrics": "translation_metrics.tsv"}
        if cfg.figures:
            from . import report
            artifacts["fold_mse_figure"] = "fold_mse.png"
            report.plot_fold_mse(result.fold_mses, out / "fold_mse.png")
        _write_manifest(out, "translate", cfg, artifacts,
                        time.perf_counter() - started,
                        extra={"from_sensor": from_id, "to_sensor": to_id,
                               "test_latent_mse": latent_mse,
                               "baseline_latent_mse": baseline_mse,
                               "decoded_mse": decoded_mse})
    print(f"fold latent MSE {result.mean_mse:.6f} +- {result.std_mse:.6f} "
          f"(std across {cfg.regressor_folds} folds)")
    print(f"test latent MSE {latent_mse:.6f} (mean-latent baseline {baseline_mse:.6f})")
    print(f"decoded translation MSE {decoded_mse:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_ablate(args) -> int:
    started = time.perf_counter()
    cfg = _resolve_config(args)
    dataset = _load_dataset(cfg)
    id_a, id_b = cfg.sensors
    se_gamma = cfg.gamma if cfg.gamma > 0.0 else 0.2
    grid = [(gamma, strategy, sensor)
            for gamma in (se_gamma, 0.0)
            for strategy in ("hard", "semi_hard")
            for sensor in ("A", "B", "alternating")]

    rows = []
    for gamma, strategy, sensor in grid:
        model_a = _build_model(cfg, id_a, dataset.dim(id_a), _STREAM_MODEL_A)
        model_b = _build_model(cfg, id_b, dataset.dim(id_b), _STREAM_MODEL_B)
        plan = TrainingPlan(cfg.checkpoints, cfg.epochs_per_checkpoint,
                            cfg.triplets_per_checkpoint, cfg.batch_size,
                            cfg.learning_rate, LossConfig(cfg.alpha, gamma, cfg.hinge),
                            MiningConfig(strategy=strategy,
                                         easy_fraction=cfg.easy_fraction),
                            sensor, cfg.seed)
        result = train_shared_manifold(dataset, model_a, model_b, plan)
        final = result.records[-1]
        rows.append((gamma, strategy, sensor, final.silhouette,
                     final.epoch_losses[-1].total))
        log.info("ablation gamma=%g strategy=%s sensor=%s -> silhouette %.4f",
                 gamma, strategy, sensor, final.silhouette)

    with _staged_output(args.out) as out:
        lines = ["se_weight\tstrategy\ttriplet_sensor\tsilhouette\tfinal_total_loss"]
        for gamma, strategy, sensor, sil, total in rows:
            lines.append(f"{gamma:g}\t{strategy}\t{sensor}\t{sil:.6f}\t{total:.6g}")
        (out / "ablation.tsv").write_text("\n".join(lines) + "\n")
        artifacts = {"ablation": "ablation.tsv"}
        if cfg.figures:
            from . import report
            artifacts["ablation_figure"] = "ablation.png"
            bars = [(f"se={'on' if g > 0 else 'off'} {strat} {sensor}", sil)
                    for g, strat, sensor, sil, _ in rows]
            report.plot_ablation(bars, out / "ablation.png")
        _write_manifest(out, "ablate", cfg, artifacts, time.perf_counter() - started)
    for gamma, strategy, sensor, sil, _ in rows:
        print(f"se={'on' if gamma > 0 else 'off'} strategy={strategy} "
              f"sensor={sensor} silhouette={sil:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    dataset = generate_synthetic(_synth_config(cfg))
    out = Path(args.out)
    if out.exists():
        raise ConfigError(f"output path already exists: {out}")
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = out.parent / (out.name + ".partial")
    save_binary(dataset, staging)
    os.replace(staging, out)
    dims = ", ".join(f"{sid}:{dataset.dim(sid)}" for sid in dataset.sensor_ids)
    print(f"wrote {out}: {dataset.n_samples} samples, {dataset.n_classes} classes, "
          f"sensors {dims}")
    return 0


# -- argument parsing ----------------------------------------------------------


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--preset", help="named preset (%s)" % ", ".join(available_presets()))
    p.add_argument("--dataset", help="dataset file path (overrides config)")
    p.add_argument("--seed", type=int, help="run seed (overrides config)")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--run", required=True, help="directory written by 'maln train'")
    p.add_argument("--seed", type=int, help="override the run's seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maln",
        description="Align heterogeneous sensors on a shared latent manifold; "
                    "classify, map additional sensors, and translate between them.")
    parser.add_argument("--version", action="version", version=f"maln {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="mine triplets and train two aligned autoencoders")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output directory (must not exist)")
    p.add_argument("--strategy", choices=["hard", "semi_hard", "random"])
    p.add_argument("--gamma", type=float, help="similarity-enhancement weight")
    p.add_argument("--alpha", type=float, help="triplet margin")
    p.add_argument("--triplet-sensor", dest="triplet_sensor",
                   choices=["A", "B", "alt", "alternating"],
                   help="which sensor anchors mining (A/B = first/second listed)")
    p.add_argument("--dump-triplets", action="store_true",
                   help="also dump a mined pool from the final model")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("map-sensor", help="fit a new sensor against a frozen encoder")
    _add_run_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_map_sensor)

    p = sub.add_parser("classify", help="fused and cross-sensor evaluation")
    _add_run_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--unified", action="store_true",
                   help="emit the train-sensor x test-sensor accuracy matrix")
    p.add_argument("--knn-sweep", dest="knn_sweep", action="store_true",
                   help="evaluate the class-averaged KNN over a grid of k")
    p.add_argument("--k", type=int, help="override the KNN k")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("translate", help="predict one sensor's data from another's")
    _add_run_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--from", dest="from_sensor", help="source sensor id")
    p.add_argument("--to", dest="to_sensor", help="target sensor id")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("ablate", help="silhouette grid over SE term, strategy, sensor")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, help="SE weight for the on arm")
    p.add_argument("--alpha", type=float)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-data", help="write a synthetic dataset file")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output file (must not exist)")
    p.set_defaults(func=cmd_gen_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (DataError, DimensionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
