"""
convoher2 命令行入口

    convoher2 ingest --modality IHC --data-root BCI_dataset/IHC
    convoher2 extract-features --modality IHC --manifest runs/manifest_IHC.tsv
    convoher2 train --modality IHC --manifest runs/manifest_IHC.tsv --use-cached-features
    convoher2 evaluate --modality IHC --manifest runs/manifest_IHC.tsv --checkpoint runs/best.weights.h5
    convoher2 predict --checkpoint runs/best.weights.h5 --image x.png
    convoher2 report --out-dir runs
    convoher2 verify

退出码：0 成功；1 校验/评估未通过；2 用法或输入错误。
"""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Optional

from convoher2.data import check_distribution, scan_dataset, split_manifest, verify_pairing
from convoher2.data.manifest import DatasetManifest
from convoher2.enums import SCORE_LABELS, Split, StainModality
from convoher2.errors import BackboneMutated, Convoher2Error, NonFiniteGradient, NonFiniteLoss
from convoher2.log import setup_logging
from convoher2.model import (
    INCEPTION_V3,
    BackboneSpec,
    FeatureStore,
    ModelHandle,
    ModelMetadata,
    build_feature_store,
    build_head,
    compose,
    count_params,
    load_checkpoint,
    read_checkpoint_meta,
)
from convoher2.oracle.suite import run_verification_suite
from convoher2.preprocess import AugmentPolicy
from convoher2.report import EvaluationReport, comparison_table, full_report, measured_row
from convoher2.training import ResolvedConfig, Trainer, TrainHistory, load_config, predict_image
from convoher2.training.trainer import CHECKPOINT_LOG, HISTORY_FILE
from convoher2.visualization import plot_curves

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# 运行过程中的校验失败（退出码 1）；其余 Convoher2Error 都是用法或输入错误（退出码 2）
RUN_FAILURES = (NonFiniteLoss, BackboneMutated, NonFiniteGradient)

# 命令行参数 → 配置键
FLAG_KEYS = {
    "data_root": "data_root",
    "manifest": "manifest",
    "out_dir": "out_dir",
    "seed": "seed",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "lr": "learning_rate",
    "monitor": "checkpoint_monitor",
    "modality": "modality",
    "head": "head_variant",
    "backbone": "backbone",
    "backbone_weights": "backbone_weights",
    "feature_cache": "feature_cache",
    "workers": "workers",
    "train_fraction": "train_fraction",
    "log_level": "log_level",
    "augment": "augment",
    "progress": "progress",
}


class UsageError(Convoher2Error, ValueError):
    """命令行参数组合不合法"""


# ======================
# 公共工具
# ======================

def _require_modality(cfg: ResolvedConfig) -> StainModality:
    if cfg.train.modality is None:
        raise UsageError("需要指定 --modality {HE,IHC}")
    return cfg.train.modality


def _out_dir(cfg: ResolvedConfig) -> Path:
    path = Path(cfg.pipeline.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest_path(cfg: ResolvedConfig, modality: StainModality) -> Path:
    if cfg.pipeline.manifest:
        return Path(cfg.pipeline.manifest)
    return Path(cfg.pipeline.out_dir) / f"manifest_{modality.value}.tsv"


def _feature_cache_path(cfg: ResolvedConfig, modality: StainModality) -> Path:
    if cfg.pipeline.feature_cache:
        return Path(cfg.pipeline.feature_cache)
    return Path(cfg.pipeline.out_dir) / f"features_{modality.value}.npz"


def _backbone_spec(cfg: ResolvedConfig) -> BackboneSpec:
    p = cfg.pipeline
    if p.backbone == INCEPTION_V3:
        return BackboneSpec(weights=p.backbone_weights)
    return BackboneSpec.stub(seed=cfg.train.seed)


def _build_handle(cfg: ResolvedConfig) -> ModelHandle:
    backbone = _backbone_spec(cfg)
    head = build_head(backbone.feature_dim, cfg.pipeline.head_variant)
    metadata = ModelMetadata(config_hash=cfg.config_hash, modality=cfg.train.modality)
    return compose(backbone, head, seed=cfg.train.seed, metadata=metadata)


def _backbone_override(cfg: ResolvedConfig) -> Optional[BackboneSpec]:
    """显式指定了骨干时覆盖检查点中记录的骨干"""
    if "backbone" in cfg.sources or "backbone_weights" in cfg.sources:
        return _backbone_spec(cfg)
    return None


def _load_or_ingest(cfg: ResolvedConfig, modality: StainModality, force_split: bool = False) -> DatasetManifest:
    path = _manifest_path(cfg, modality)
    if path.is_file():
        manifest = DatasetManifest.load(path)
        if manifest.modality is not modality:
            raise UsageError(f"清单模态为 {manifest.modality.value}，与 --modality {modality.value} 不一致")
        return manifest
    if not cfg.pipeline.data_root:
        raise UsageError(f"清单不存在 ({path})，且未指定 --data-root")
    return _ingest(cfg, modality, force_split)


def _ingest(cfg: ResolvedConfig, modality: StainModality, force_split: bool) -> DatasetManifest:
    p = cfg.pipeline
    manifest = scan_dataset(p.data_root, modality, p.label_pattern, seed=cfg.train.seed, workers=max(1, p.workers))
    if not manifest.is_split or force_split:
        manifest = split_manifest(manifest, p.train_fraction, seed=cfg.train.seed, force=force_split)
    manifest.save(_manifest_path(cfg, modality))
    return manifest


def _print_counts(manifest: DatasetManifest):
    counts = manifest.split_counts
    print(f"📊 {manifest.modality.value}: {len(manifest)} 张图像 "
          f"(train={counts.train}, test={counts.test}, unsplit={counts.unsplit}, 跳过 {manifest.skipped})")
    for label, n in zip(SCORE_LABELS, manifest.class_counts):
        print(f"  {label:<3} {n:>6}")


# ======================
# 子命令
# ======================

def cmd_ingest(args, cfg: ResolvedConfig) -> int:
    modality = _require_modality(cfg)
    if not cfg.pipeline.data_root:
        raise UsageError("ingest 需要 --data-root")
    manifest = _ingest(cfg, modality, args.force_split)
    _print_counts(manifest)

    check = check_distribution(manifest)
    if check.exact:
        print("✅ 类别分布与 BCI 发行版一致")
    elif check.ok:
        print(f"⚠️  类别分布与 BCI 发行版相差 {check.total_deviation} 张（容差内）: {check.deltas}")
    else:
        print(f"⚠️  类别分布与 BCI 发行版不一致: {check.deltas}")

    if args.paired_root:
        other = StainModality.IHC if modality is StainModality.HE else StainModality.HE
        paired = scan_dataset(args.paired_root, other, cfg.pipeline.label_pattern, workers=max(1, cfg.pipeline.workers))
        he, ihc = (manifest, paired) if modality is StainModality.HE else (paired, manifest)
        report = verify_pairing(he, ihc)
        mark = "✅" if report.ok else "⚠️ "
        print(f"{mark} 配对校验: {report.summary()}")

    print(f"✅ 清单已保存到: {_manifest_path(cfg, modality)}")
    return EXIT_OK


def cmd_extract_features(args, cfg: ResolvedConfig) -> int:
    modality = _require_modality(cfg)
    manifest = _load_or_ingest(cfg, modality)
    handle = _build_handle(cfg)
    store = build_feature_store(handle, manifest, workers=cfg.pipeline.workers, progress=cfg.pipeline.progress)
    path = store.save(_feature_cache_path(cfg, modality))
    print(f"✅ 特征缓存已保存到: {path} ({len(store)} × {store.dim})")
    return EXIT_OK


def cmd_train(args, cfg: ResolvedConfig) -> int:
    modality = _require_modality(cfg)
    manifest = _load_or_ingest(cfg, modality, args.force_split)
    out_dir = _out_dir(cfg)
    print("📋 配置:")
    print(cfg.render())
    print(f"🔑 config_hash = {cfg.config_hash}")
    (out_dir / "config.txt").write_text(cfg.render() + "\n", encoding="utf-8")

    handle = _build_handle(cfg)
    counts = count_params(handle)
    print(f"🧮 参数: total={counts.total:,} trainable={counts.trainable:,} non-trainable={counts.non_trainable:,}")

    val_manifest = manifest if manifest.select(Split.TEST) else None
    trainer = Trainer(
        handle, cfg.train, out_dir,
        config_hash=cfg.config_hash, progress=cfg.pipeline.progress, workers=cfg.pipeline.workers,
    )
    try:
        if args.use_cached_features:
            cache = _feature_cache_path(cfg, modality)
            if cache.is_file():
                store = FeatureStore.load(cache)
            else:
                store = build_feature_store(handle, manifest, workers=cfg.pipeline.workers, progress=cfg.pipeline.progress)
                store.save(cache)
            if cfg.pipeline.augment:
                logger.warning("特征缓存路径不做数据增强")
            history, best = trainer.train_on_cached_features(store, manifest, val_manifest)
        else:
            policy = AugmentPolicy() if cfg.pipeline.augment else None
            history, best = trainer.train(manifest, val_manifest, policy)
    except NonFiniteLoss as e:
        print(f"❌ {e}")
        if e.last_checkpoint is not None:
            print(f"   最后有效检查点: {e.last_checkpoint.path} (epoch {e.last_checkpoint.epoch})")
        return EXIT_FAILED

    if best is None:
        print("⚠️  没有写出任何检查点（epochs = 0）")
    else:
        print(f"✅ 最优检查点: {best.path} (epoch {best.epoch}, {cfg.train.checkpoint_monitor}={best.monitored_loss:.4f})")
    if history.epochs:
        last = history.epochs[-1]
        print(f"📊 最后一轮: loss={last.train_loss:.4f} acc={last.train_accuracy:.4f}")
    return EXIT_OK


def cmd_evaluate(args, cfg: ResolvedConfig) -> int:
    modality = _require_modality(cfg)
    if not args.checkpoint:
        raise UsageError("evaluate 需要 --checkpoint")
    manifest = _load_or_ingest(cfg, modality)
    expected = None
    if "head_variant" in cfg.sources:
        expected = build_head(_backbone_spec(cfg).feature_dim, cfg.pipeline.head_variant)
    handle = load_checkpoint(args.checkpoint, expected_head=expected, backbone=_backbone_override(cfg))

    split = Split.parse(args.split)
    store = FeatureStore.load(_feature_cache_path(cfg, modality)) if args.use_cached_features else None
    report = full_report(
        handle, manifest, read_checkpoint_meta(args.checkpoint), split=split, store=store, workers=cfg.pipeline.workers,
    )
    path = report.save(_out_dir(cfg) / f"evaluation_{modality.value}_{split.value}.json")
    print(report.render())
    print(f"📊 评估报告已保存到: {path}")

    if args.min_accuracy is not None and report.accuracy < args.min_accuracy:
        print(f"❌ 准确率 {report.accuracy:.4f} 低于要求的 {args.min_accuracy:.4f}")
        return EXIT_FAILED
    return EXIT_OK


def cmd_predict(args, cfg: ResolvedConfig) -> int:
    if not args.checkpoint or not args.image:
        raise UsageError("predict 需要 --checkpoint 与 --image")
    handle = load_checkpoint(args.checkpoint, backbone=_backbone_override(cfg))
    score, probs = predict_image(handle, args.image)
    print(f"{score.label} " + " ".join(f"{p:.6f}" for p in probs))
    return EXIT_OK


def cmd_report(args, cfg: ResolvedConfig) -> int:
    out_dir = Path(cfg.pipeline.out_dir)
    history_path = out_dir / HISTORY_FILE
    if not history_path.is_file():
        raise UsageError(f"找不到训练历史: {history_path}")
    history = TrainHistory.load(history_path, cfg.train.checkpoint_monitor, out_dir / CHECKPOINT_LOG)
    modality = cfg.train.modality
    plot_curves(history, out_dir, title_prefix=modality.value if modality else None)

    evaluations = [Path(p) for p in args.evaluation] if args.evaluation else sorted(out_dir.glob("evaluation_*.json"))
    rows = [measured_row(r.accuracy, r.modality) for r in map(EvaluationReport.load, evaluations)]
    table = comparison_table(rows, include_original=args.include_original)
    table.pretty_print()
    (out_dir / "comparison.txt").write_text(table.render() + "\n", encoding="utf-8")
    table.to_csv(out_dir / "comparison.csv")
    print(f"📊 对比表已保存到: {out_dir / 'comparison.txt'}")
    return EXIT_OK


def cmd_verify(args, cfg: ResolvedConfig) -> int:
    report = run_verification_suite()
    for check in report.checks:
        mark = "✅" if check.passed else "❌"
        print(f"{mark} {check.name:<24} {check.detail}")
    if report.passed:
        print(f"✅ 全部 {len(report.checks)} 项校验通过")
        return EXIT_OK
    print(f"❌ {len(report.failed)} 项校验失败")
    return EXIT_FAILED


# ======================
# 参数解析
# ======================

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value 配置文件")
    p.add_argument("--out-dir", help="输出目录")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="图像解码线程数")
    p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--no-progress", dest="progress", action="store_const", const=False, help="关闭进度条")


def _add_data(p: argparse.ArgumentParser):
    p.add_argument("--modality", choices=["HE", "IHC"])
    p.add_argument("--data-root", help="某一模态的数据目录")
    p.add_argument("--manifest", help="清单文件路径")


def _add_model(p: argparse.ArgumentParser):
    p.add_argument("--head", choices=["convoher2", "baseline"])
    p.add_argument("--backbone", choices=["inception_v3", "stub"])
    p.add_argument("--backbone-weights", help="imagenet | 本地权重文件 | none")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convoher2", description="HER2 评分分类（冻结 InceptionV3 + 分类头）")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="扫描数据目录、划分并保存清单")
    _add_common(p)
    _add_data(p)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--force-split", action="store_true", help="覆盖数据集自带的 train/test 划分")
    p.add_argument("--paired-root", help="另一模态的数据目录（做 HE/IHC 配对校验）")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("extract-features", help="提取骨干特征并缓存")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--feature-cache", help="特征缓存 .npz 路径")
    p.set_defaults(handler=cmd_extract_features)

    p = sub.add_parser("train", help="训练分类头")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--monitor", choices=["train_loss", "val_loss"])
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--force-split", action="store_true")
    p.add_argument("--use-cached-features", action="store_true")
    p.add_argument("--feature-cache")
    p.add_argument("--no-augment", dest="augment", action="store_const", const=False)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="评估检查点并写出报告")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--checkpoint")
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--use-cached-features", action="store_true")
    p.add_argument("--feature-cache")
    p.add_argument("--min-accuracy", type=float, help="低于该准确率时退出码为 1")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("predict", help="对单张图像打分")
    _add_common(p)
    _add_model(p)
    p.add_argument("--checkpoint")
    p.add_argument("--image")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("report", help="绘制训练曲线并生成对比表")
    _add_common(p)
    p.add_argument("--modality", choices=["HE", "IHC"])
    p.add_argument("--monitor", choices=["train_loss", "val_loss"])
    p.add_argument("--evaluation", action="append", help="evaluate 写出的 JSON（可多次指定）")
    p.add_argument("--include-original", action="store_true", help="加入原始 InceptionV3 (76%%) 一行")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("verify", help="运行数值校验套件")
    _add_common(p)
    p.set_defaults(handler=cmd_verify)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    values = vars(args)
    return {key: values[flag] for flag, key in FLAG_KEYS.items() if values.get(flag) is not None}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    handler: Callable[[argparse.Namespace, ResolvedConfig], int] = args.handler
    try:
        cfg = load_config(args.config, os.environ, _overrides(args))
        setup_logging(cfg.pipeline.log_level)
        return handler(args, cfg)
    except Convoher2Error as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAILED if isinstance(e, RUN_FAILURES) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
