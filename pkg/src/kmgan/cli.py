"""Experiment runner.

Subcommands: train, generate, interpolate, eval, export-features,
train-classifier. Configuration is a flat key=value file; command-line flags
override file values, which override defaults. Unknown keys are a hard error.
Exit codes: 0 ok, 2 config error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import archs, checkpoint as ckpt, clustering, datasets, metrics, nn, training
from .training import TrainConfig, TrainingAborted


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # training hyperparameters (see TrainConfig)
    mode: str = "regular"
    batch_size: int = 64
    k: int = 4
    iterations: int = 0  # 0 means: derive from epochs
    epochs: int = 200
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    d_round: float = 0.0
    lam: float = 0.0
    clip_bound: float | None = None
    noise_dim: int = 100
    seed: int = 0
    center_update_rule: str = "smoothed"
    norm_reduction: str = "mean"
    use_generalized_path: bool = False
    saturating_g: bool = False
    weight_std: float = 0.02
    snapshot_every: int = 10
    # experiment plumbing
    dataset: str = "synthetic"
    data_seed: int = 0
    data_dir: str = "."
    images_file: str = ""
    labels_file: str = ""
    subset: int = 0  # 0 means: use everything
    arch: str = "auto"
    out_dir: str = "out"


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_OPTIONAL_FLOATS = {"clip_bound"}


def _parse_value(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    raw = raw.strip()
    if key in _OPTIONAL_FLOATS:
        if raw.lower() in ("", "none"):
            return None
        return float(raw)
    ftype = _FIELD_TYPES[key]
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    if ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {key}: {raw!r}")
    return raw


def load_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            values[key] = _parse_value(key, raw)
    return values


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    for key in _FIELD_TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag if key not in _OPTIONAL_FLOATS else _parse_value(key, str(flag)))
    if os.environ.get("KMGAN_OUT"):
        cfg.out_dir = os.environ["KMGAN_OUT"]
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={'' if v is None else v}")
    return "\n".join(lines) + "\n"


def load_dataset(cfg: ExperimentConfig) -> datasets.LabeledDataset:
    if cfg.dataset == "synthetic":
        ds = datasets.gen_synthetic(
            datasets.SyntheticSpec(), np.random.default_rng(cfg.data_seed)
        )
    elif cfg.dataset in ("mnist", "fashion-10"):
        img = os.path.join(cfg.data_dir, "train-images-idx3-ubyte")
        lbl = os.path.join(cfg.data_dir, "train-labels-idx1-ubyte")
        if not os.path.exists(img):
            raise ConfigError(f"missing IDX file {img}")
        ds = datasets.load_idx(img, lbl if os.path.exists(lbl) else None)
        timg = os.path.join(cfg.data_dir, "t10k-images-idx3-ubyte")
        tlbl = os.path.join(cfg.data_dir, "t10k-labels-idx1-ubyte")
        if os.path.exists(timg):
            extra = datasets.load_idx(timg, tlbl if os.path.exists(tlbl) else None)
            feats = np.concatenate([ds.features, extra.features])
            labels = None
            if ds.labels is not None and extra.labels is not None:
                labels = np.concatenate([ds.labels, extra.labels])
            ds = datasets.LabeledDataset(feats, labels)
    elif cfg.dataset == "idx":
        if not cfg.images_file:
            raise ConfigError("dataset=idx needs images_file")
        ds = datasets.load_idx(cfg.images_file, cfg.labels_file or None)
    else:
        raise ConfigError(f"unknown dataset {cfg.dataset!r}")
    if cfg.subset and cfg.subset < ds.n:
        keep = np.random.default_rng(cfg.data_seed).permutation(ds.n)[: cfg.subset]
        ds = datasets.LabeledDataset(
            ds.features[keep],
            ds.labels[keep] if ds.labels is not None else None,
            ds.latents[keep] if ds.latents is not None else None,
        )
    return ds


def build_specs(cfg: ExperimentConfig, data_dim: int):
    name = cfg.arch
    if name == "auto":
        name = "synthetic" if cfg.dataset == "synthetic" else "image_dense"
    return archs.build(name, cfg.noise_dim, data_dim)


def to_train_config(cfg: ExperimentConfig, n_samples: int) -> TrainConfig:
    iters = cfg.iterations
    if iters <= 0:
        iters = cfg.epochs * training.iterations_per_epoch(n_samples, cfg.batch_size)
    return TrainConfig(
        batch_size=cfg.batch_size,
        k=cfg.k,
        iterations=iters,
        alpha=cfg.alpha,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        adam_eps=cfg.adam_eps,
        d_round=cfg.d_round,
        lam=cfg.lam,
        clip_bound=cfg.clip_bound,
        noise_dim=cfg.noise_dim,
        seed=cfg.seed,
        mode=cfg.mode,
        center_update_rule=cfg.center_update_rule,
        norm_reduction=cfg.norm_reduction,
        use_generalized_path=cfg.use_generalized_path,
        saturating_g=cfg.saturating_g,
        weight_std=cfg.weight_std,
        snapshot_every=cfg.snapshot_every,
    )


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return 0
    ds = load_dataset(cfg)
    d_spec, g_spec = build_specs(cfg, ds.dim)
    tc = to_train_config(cfg, ds.n)
    try:
        training.run_training(tc, ds, d_spec, g_spec, cfg.out_dir)
    except TrainingAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    print(f"trained {tc.iterations} iterations; artifacts in {cfg.out_dir}")
    return 0


def cmd_generate(args) -> int:
    state, meta = training.load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    z = rng.normal(size=(args.n, meta["noise_dim"]))
    samples = training.generate(state, z)
    training._write_samples_csv(args.out, samples)
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def cmd_interpolate(args) -> int:
    if args.steps < 2:
        raise ConfigError("steps must be >= 2")
    state, meta = training.load_checkpoint(args.checkpoint)
    nd = meta["noise_dim"]
    z0 = np.random.default_rng(args.z0_seed).normal(size=nd)
    z1 = np.random.default_rng(args.z1_seed).normal(size=nd)
    betas = np.linspace(0.0, 1.0, args.steps)
    zs = betas[:, None] * z0[None, :] + (1.0 - betas)[:, None] * z1[None, :]
    samples = training.generate(state, zs)
    with open(args.out, "w") as fh:
        fh.write("beta," + ",".join(f"x{i}" for i in range(samples.shape[1])) + "\n")
        for beta, row in zip(betas, samples):
            fh.write(f"{float(beta)!r}," + ",".join(repr(float(v)) for v in row) + "\n")
    print(f"wrote {args.steps} interpolation rows to {args.out}")
    return 0


def save_classifier(path, spec, params, n_classes):
    meta = {
        "version": 1,
        "kind": "classifier",
        "spec": nn.spec_to_list(spec),
        "n_classes": n_classes,
    }
    records = {ckpt.META_KEY: ckpt.pack_meta(meta)}
    for name, t in params.tensors.items():
        records[f"c.{name}"] = t.data
    ckpt.save_records(path, records)


def load_classifier(path):
    records = ckpt.load_records(path)
    meta = ckpt.unpack_meta(records[ckpt.META_KEY])
    if meta.get("kind") != "classifier":
        raise ckpt.CheckpointError("not a classifier checkpoint")
    spec = nn.spec_from_list(meta["spec"])
    params = nn.ParamSet()
    for name, arr in records.items():
        if name.startswith("c."):
            params.tensors[name[2:]] = nn.Tensor(arr, requires_grad=True)
    return spec, params, meta


def cmd_train_classifier(args) -> int:
    cfg = resolve_config(args)
    ds = load_dataset(cfg)
    if ds.labels is None:
        raise ConfigError("classifier training needs a labeled dataset")
    n_classes = int(ds.labels.max()) + 1
    spec, params, train_acc, test_acc = metrics.train_classifier(
        ds.features,
        ds.labels,
        n_classes,
        hidden=args.hidden,
        epochs=args.classifier_epochs,
        seed=cfg.seed,
    )
    save_classifier(args.out, spec, params, n_classes)
    print(f"classifier: train acc {train_acc:.4f}, test acc {test_acc:.4f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    state, meta = training.load_checkpoint(args.checkpoint)
    cls_spec, cls_params, cls_meta = load_classifier(args.classifier)
    if cls_spec.in_dim != state.g_spec.out_dim:
        raise ConfigError(
            f"classifier expects {cls_spec.in_dim}-D input, generator emits "
            f"{state.g_spec.out_dim}-D samples"
        )
    rng = np.random.default_rng(args.seed)
    z = rng.normal(size=(args.n_samples, meta["noise_dim"]))
    samples = training.generate(state, z)
    probs = metrics.classify(cls_spec, cls_params, samples)
    report = metrics.class_frequencies(probs)
    is_mean, is_std = metrics.inception_score(probs, args.splits)
    with open(args.out_prefix + "_frequencies.csv", "w") as fh:
        fh.write(report.csv())
    with open(args.out_prefix + "_summary.txt", "w") as fh:
        fh.write(report.summary())
        fh.write(f"inception score: {is_mean:.4f} +- {is_std:.4f}\n")
    print(report.summary(), end="")
    print(f"inception score: {is_mean:.4f} +- {is_std:.4f}")
    return 0


def cmd_export_features(args) -> int:
    cfg = resolve_config(args)
    state, _ = training.load_checkpoint(args.checkpoint)
    ds = load_dataset(cfg)
    feats = training.features_of(state, ds.features)
    training._write_features_csv(args.out, feats, ds.labels)
    print(f"wrote {feats.shape[0]} feature rows to {args.out}")
    return 0


def _add_config_flags(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--dump-config", action="store_true", dest="dump_config")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _OPTIONAL_FLOATS:
            p.add_argument(flag, type=str, default=None)
        elif f.type == "bool":
            p.add_argument(
                flag,
                type=lambda s: s.lower() in ("1", "true", "yes", "on"),
                default=None,
            )
        elif f.type == "int":
            p.add_argument(flag, type=int, default=None)
        elif f.type == "float":
            p.add_argument(flag, type=float, default=None)
        else:
            p.add_argument(flag, type=str, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="kmgan")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training experiment")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="sample from a trained generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("interpolate", help="latent interpolation between two seeds")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--z0-seed", type=int, required=True, dest="z0_seed")
    p.add_argument("--z1-seed", type=int, required=True, dest="z1_seed")
    p.add_argument("--steps", type=int, default=11)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_interpolate)

    p = sub.add_parser("eval", help="class-frequency audit + diversity score")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--n-samples", type=int, default=5000, dest="n_samples")
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", default="eval", dest="out_prefix")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("export-features", help="dump eval-mode discriminator features")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_features)

    p = sub.add_parser("train-classifier", help="train the audit classifier")
    _add_config_flags(p)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--classifier-epochs", type=int, default=20, dest="classifier_epochs")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_classifier)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ckpt.CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
