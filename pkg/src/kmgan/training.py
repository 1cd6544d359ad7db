"""Three-step alternating trainer (discriminator step, generator step, joint
center step, then minibatch center updates), the pixel-space reduced variant
with the reversed step order, and the vanilla GAN baseline loop.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint as ckpt
from . import clustering, losses, nn, optim
from . import tensor as T
from .clustering import Centroids
from .datasets import LabeledDataset
from .nn import MlpSpec, ParamSet
from .tensor import Tensor

MODES = ("regular", "reduced", "vanilla")
CENTER_RULES = ("smoothed", "batch_mean")


class TrainingAborted(RuntimeError):
    """A loss or update went non-finite; partial artifacts were flushed."""


@dataclass
class TrainConfig:
    batch_size: int = 64
    k: int = 4
    iterations: int = 1000
    alpha: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    d_round: float = 0.0
    lam: float = 0.0
    clip_bound: float | None = None
    noise_dim: int = 100
    seed: int = 0
    mode: str = "regular"
    center_update_rule: str = "smoothed"
    norm_reduction: str = "mean"
    use_generalized_path: bool = False
    saturating_g: bool = False
    weight_std: float = 0.02
    snapshot_every: int = 10

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm)")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.d_round < 0 or self.lam < 0:
            raise ValueError("d_round and lambda must be >= 0")
        if self.clip_bound is not None and self.clip_bound <= 0:
            raise ValueError("clip_bound must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.center_update_rule not in CENTER_RULES:
            raise ValueError(f"center_update_rule must be one of {CENTER_RULES}")
        if self.norm_reduction not in ("mean", "sum"):
            raise ValueError("norm_reduction must be mean or sum")


@dataclass
class TrainState:
    d_spec: MlpSpec  # full discriminator (trunk + prob head in vanilla mode)
    feature_spec: MlpSpec  # trunk producing the feature vector
    g_spec: MlpSpec
    d_params: ParamSet
    g_params: ParamSet
    adam_d: optim.AdamState
    adam_g: optim.AdamState
    real_centroids: Centroids | None = None  # pixel-space centers in reduced mode
    fake_centroids: Centroids | None = None
    iteration: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


def _update_centers(cents, feats, assignment, rule):
    if rule == "smoothed":
        return clustering.update_centers_minibatch(cents, feats, assignment)
    return clustering.update_centers_batch_mean(cents, feats, assignment)


def features_of(state: TrainState, x: np.ndarray, mode: str = "eval") -> np.ndarray:
    return nn.forward(state.feature_spec, state.d_params, x, mode=mode).data


def generate(state: TrainState, z: np.ndarray) -> np.ndarray:
    return nn.forward(state.g_spec, state.g_params, z, mode="eval").data


def init_training(
    config: TrainConfig,
    dataset: LabeledDataset,
    d_spec: MlpSpec,
    g_spec: MlpSpec,
) -> TrainState:
    """Initialize both networks, then seed the centers: K-Means++ over
    eval-mode discriminator features of the whole dataset (regular mode) or
    over raw pixels (reduced mode). Fake centers start as a copy."""
    if dataset.n == 0:
        raise ValueError("empty dataset")
    if dataset.n < config.k:
        raise ValueError(f"dataset of {dataset.n} samples cannot seed k={config.k}")
    if g_spec.in_dim != config.noise_dim:
        raise ValueError("generator input dim != noise_dim")
    if d_spec.in_dim != dataset.dim or g_spec.out_dim != dataset.dim:
        raise ValueError("architecture does not match data dimension")

    rng = np.random.default_rng(config.seed)
    feature_spec = d_spec
    full_d_spec = d_spec
    if config.mode == "vanilla":
        from .archs import prob_head

        head = prob_head(d_spec.out_dim)
        full_d_spec = nn.MlpSpec(d_spec.layers + head.layers)
    d_params = nn.init_params(full_d_spec, rng, config.weight_std)
    g_params = nn.init_params(g_spec, rng, config.weight_std)
    adam_kw = dict(
        alpha=config.alpha, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps
    )
    state = TrainState(
        d_spec=full_d_spec,
        feature_spec=feature_spec,
        g_spec=g_spec,
        d_params=d_params,
        g_params=g_params,
        adam_d=optim.AdamState(**adam_kw),
        adam_g=optim.AdamState(**adam_kw),
        rng=rng,
    )
    if config.mode == "regular":
        feats = features_of(state, dataset.features)
        state.real_centroids = clustering.kmeanspp_init(feats, config.k, rng)
        state.fake_centroids = state.real_centroids.clone()
    elif config.mode == "reduced":
        state.real_centroids = clustering.kmeanspp_init(dataset.features, config.k, rng)
    return state


def _regularizers(fr, ff, config):
    normalize = config.norm_reduction == "mean"
    li = losses.intra_loss(fr, ff, normalize)
    le = losses.inter_loss(fr, ff, normalize)
    return li, le


def train_step_regular(
    state: TrainState, real_batch, noise_batch, config: TrainConfig, trace=None
):
    c = config
    red = c.norm_reduction
    want_reg = c.lam > 0 or c.use_generalized_path

    # first forward pass: eval-mode features fix the cluster labels
    f_real = features_of(state, real_batch)
    x_fake0 = generate(state, noise_batch)
    f_fake = features_of(state, x_fake0)
    real_assign = clustering.assign_labels(f_real, state.real_centroids)
    fake_assign_real = clustering.assign_labels(f_fake, state.real_centroids)
    fake_assign_fake = clustering.assign_labels(f_fake, state.fake_centroids)
    c_real = losses.build_center_targets(real_assign, state.real_centroids)
    c_gen = losses.build_center_targets(fake_assign_real, state.real_centroids)

    report = losses.LossReport()

    # discriminator step (generated batch detached from G)
    state.d_params.zero_grad()
    fr = nn.forward(state.feature_spec, state.d_params, real_batch, mode="train")
    x_fake = nn.forward(state.g_spec, state.g_params, noise_batch, mode="train").data
    ff = nn.forward(state.feature_spec, state.d_params, x_fake, mode="train")
    if want_reg:
        li, le = _regularizers(fr, ff, c)
        report.l_intra, report.l_inter = li.item(), le.item()
        ld = losses.d_loss(fr, c_real, ff, c_gen, c.lam, li, le, red)
    else:
        ld = losses.d_loss(fr, c_real, ff, c_gen, reduction=red)
    report.l_d = ld.item()
    ld.backward()
    optim.adam_step(state.d_params, state.d_params.grad_map(), state.adam_d)
    if trace is not None:
        trace.append("d_step")

    # generator step
    state.d_params.zero_grad()
    state.g_params.zero_grad()
    xg = nn.forward(state.g_spec, state.g_params, noise_batch, mode="train")
    fg = nn.forward(state.feature_spec, state.d_params, xg, mode="train")
    if want_reg:
        fr_const = Tensor(features_of(state, real_batch))
        le_g = losses.inter_loss(fr_const, fg, red == "mean")
        lg = losses.g_loss(fg, c_gen, c.lam, le_g, red)
    else:
        lg = losses.g_loss(fg, c_gen, reduction=red)
    report.l_g = lg.item()
    lg.backward()
    optim.adam_step(state.g_params, state.g_params.grad_map(), state.adam_g)
    if trace is not None:
        trace.append("g_step")

    # joint center step, gated by d_round
    state.d_params.zero_grad()
    state.g_params.zero_grad()
    fr2 = nn.forward(state.feature_spec, state.d_params, real_batch, mode="train")
    xg2 = nn.forward(state.g_spec, state.g_params, noise_batch, mode="train")
    fg2 = nn.forward(state.feature_spec, state.d_params, xg2, mode="train")
    lc = losses.center_loss(
        state.real_centroids, state.fake_centroids, fr2, fg2, real_assign, fake_assign_fake
    )
    report.l_center = lc.item()
    report.applied_center_step = report.l_center >= c.d_round
    if report.applied_center_step:
        lc.backward()
        optim.adam_step(state.d_params, state.d_params.grad_map(), state.adam_d)
        optim.adam_step(state.g_params, state.g_params.grad_map(), state.adam_g)
        if trace is not None:
            trace.append("center_step")

    if c.clip_bound is not None:
        optim.clip_weights(state.d_params, c.clip_bound)
        if trace is not None:
            trace.append("clip")

    # minibatch center updates from the label-fixing pass features
    state.real_centroids = _update_centers(
        state.real_centroids, f_real, real_assign, c.center_update_rule
    )
    state.fake_centroids = _update_centers(
        state.fake_centroids, f_fake, fake_assign_fake, c.center_update_rule
    )
    if trace is not None:
        trace.append("center_update")

    state.iteration += 1
    return report


def _l1_reduce(diff: Tensor, reduction: str) -> Tensor:
    # L1 over the batch: mean (or sum) of per-row L1 norms
    per_row = T.l1_norm(diff) if reduction == "sum" else None
    if per_row is not None:
        return per_row
    n = diff.data.shape[0]
    return T.mul(T.l1_norm(diff), Tensor(1.0 / n))


def train_step_reduced(
    state: TrainState, real_batch, noise_batch, config: TrainConfig, trace=None
):
    c = config
    red = c.norm_reduction
    cents = state.real_centroids  # pixel-space

    # labels come from pixel space in this variant
    x_fake0 = generate(state, noise_batch)
    real_assign = clustering.assign_labels(real_batch, cents)
    fake_assign = clustering.assign_labels(x_fake0, cents)
    c_real_px = losses.build_center_targets(real_assign, cents)
    c_gen_px = losses.build_center_targets(fake_assign, cents)

    report = losses.LossReport()

    # joint center step comes FIRST in the reduced variant
    state.d_params.zero_grad()
    state.g_params.zero_grad()
    dcr = nn.forward(state.feature_spec, state.d_params, c_real_px, mode="train")
    dcg = nn.forward(state.feature_spec, state.d_params, c_gen_px, mode="train")
    lc = _l1_reduce(T.sub(dcr, dcg), red)
    report.l_center = lc.item()
    report.applied_center_step = report.l_center >= c.d_round
    if report.applied_center_step:
        lc.backward()
        optim.adam_step(state.d_params, state.d_params.grad_map(), state.adam_d)
        # the pixel centers do not depend on G; the joint update degenerates
        # to a zero step for the generator parameters
        optim.adam_step(state.g_params, state.g_params.grad_map(), state.adam_g)
        if trace is not None:
            trace.append("center_step")

    # discriminator step
    state.d_params.zero_grad()
    fr = nn.forward(state.feature_spec, state.d_params, real_batch, mode="train")
    dcr2 = nn.forward(state.feature_spec, state.d_params, c_real_px, mode="train")
    ld = losses._reduce(T.row_norms_l2(T.sub(fr, dcr2)), red)
    report.l_d = ld.item()
    ld.backward()
    optim.adam_step(state.d_params, state.d_params.grad_map(), state.adam_d)
    if trace is not None:
        trace.append("d_step")

    # generator step
    state.d_params.zero_grad()
    state.g_params.zero_grad()
    xg = nn.forward(state.g_spec, state.g_params, noise_batch, mode="train")
    fg = nn.forward(state.feature_spec, state.d_params, xg, mode="train")
    dcg2 = nn.forward(state.feature_spec, state.d_params, c_gen_px, mode="train")
    lg = losses._reduce(T.row_norms_l2(T.sub(fg, dcg2)), red)
    report.l_g = lg.item()
    lg.backward()
    optim.adam_step(state.g_params, state.g_params.grad_map(), state.adam_g)
    if trace is not None:
        trace.append("g_step")

    if c.clip_bound is not None:
        optim.clip_weights(state.d_params, c.clip_bound)
        if trace is not None:
            trace.append("clip")

    # pixel centers track the real batch only
    state.real_centroids = _update_centers(
        cents, real_batch, real_assign, c.center_update_rule
    )
    if trace is not None:
        trace.append("center_update")

    state.iteration += 1
    return report


def train_step_vanilla(
    state: TrainState, real_batch, noise_batch, config: TrainConfig, trace=None
):
    c = config
    report = losses.LossReport()

    # discriminator step
    state.d_params.zero_grad()
    p_real = nn.forward(state.d_spec, state.d_params, real_batch, mode="train")
    x_fake = nn.forward(state.g_spec, state.g_params, noise_batch, mode="train").data
    p_fake = nn.forward(state.d_spec, state.d_params, x_fake, mode="train")
    ld, _ = losses.vanilla_gan_losses(p_real, p_fake, c.saturating_g)
    report.l_d = ld.item()
    ld.backward()
    optim.adam_step(state.d_params, state.d_params.grad_map(), state.adam_d)
    if trace is not None:
        trace.append("d_step")

    # generator step
    state.d_params.zero_grad()
    state.g_params.zero_grad()
    xg = nn.forward(state.g_spec, state.g_params, noise_batch, mode="train")
    p_fake2 = nn.forward(state.d_spec, state.d_params, xg, mode="train")
    _, lg = losses.vanilla_gan_losses(Tensor(p_real.data), p_fake2, c.saturating_g)
    report.l_g = lg.item()
    lg.backward()
    optim.adam_step(state.g_params, state.g_params.grad_map(), state.adam_g)
    if trace is not None:
        trace.append("g_step")

    if c.clip_bound is not None:
        optim.clip_weights(state.d_params, c.clip_bound)
        if trace is not None:
            trace.append("clip")

    state.iteration += 1
    return report


STEP_FNS = {
    "regular": train_step_regular,
    "reduced": train_step_reduced,
    "vanilla": train_step_vanilla,
}


def iterations_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def _write_features_csv(path, feats, labels):
    d = feats.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(f"f{i}" for i in range(d)) + ",label\n")
        for i in range(feats.shape[0]):
            lbl = int(labels[i]) if labels is not None else -1
            fh.write(",".join(repr(float(v)) for v in feats[i]) + f",{lbl}\n")


def _write_samples_csv(path, samples):
    d = samples.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(f"x{i}" for i in range(d)) + "\n")
        for row in samples:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _snapshot(state, dataset, out_dir, epoch, config):
    feats = features_of(state, dataset.features)
    _write_features_csv(
        os.path.join(out_dir, f"features_epoch{epoch}.csv"), feats, dataset.labels
    )
    z = state.rng.normal(size=(config.batch_size, config.noise_dim))
    _write_samples_csv(os.path.join(out_dir, f"samples_epoch{epoch}.csv"), generate(state, z))
    if state.real_centroids is not None:
        clustering.export_centers_csv(
            state.real_centroids, os.path.join(out_dir, f"centers_epoch{epoch}.csv")
        )


def run_training(
    config: TrainConfig,
    dataset: LabeledDataset,
    d_spec: MlpSpec,
    g_spec: MlpSpec,
    out_dir=None,
    snapshots: bool = True,
) -> TrainState:
    """Run config.iterations steps of the configured mode, emitting loss CSV,
    periodic snapshots, and a final checkpoint when out_dir is given."""
    state = init_training(config, dataset, d_spec, g_spec)
    step_fn = STEP_FNS[config.mode]
    n = dataset.n
    per_epoch = iterations_per_epoch(n, config.batch_size)

    loss_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        loss_fh = open(os.path.join(out_dir, "losses.csv"), "w")
        loss_fh.write(losses.LossReport.CSV_HEADER + "\n")
        if snapshots:
            _snapshot(state, dataset, out_dir, 0, config)

    it = 0
    epoch = 0
    try:
        while it < config.iterations:
            epoch += 1
            order = state.rng.permutation(n)
            for start in range(0, n, config.batch_size):
                if it >= config.iterations:
                    break
                idx = order[start : start + config.batch_size]
                if idx.size < 2:
                    continue  # batch norm cannot take a single sample
                real_batch = dataset.features[idx]
                noise = state.rng.normal(size=(idx.size, config.noise_dim))
                try:
                    report = step_fn(state, real_batch, noise, config)
                except (T.NonFiniteError, FloatingPointError) as exc:
                    raise TrainingAborted(
                        f"non-finite value at iteration {it}: {exc}"
                    ) from exc
                if loss_fh is not None:
                    loss_fh.write(report.csv_row(it) + "\n")
                it += 1
            if (
                out_dir is not None
                and snapshots
                and epoch % config.snapshot_every == 0
            ):
                _snapshot(state, dataset, out_dir, epoch, config)
    finally:
        if loss_fh is not None:
            loss_fh.close()

    if out_dir is not None:
        save_checkpoint(state, config, os.path.join(out_dir, "final.ckpt"))
    return state


def _param_records(prefix, params: ParamSet):
    recs = {}
    for name, t in params.tensors.items():
        recs[f"{prefix}.{name}"] = t.data
    for name, arr in params.running.items():
        recs[f"{prefix}.running.{name}"] = arr
    return recs


def _adam_records(prefix, st: optim.AdamState):
    recs = {f"{prefix}.t": np.array([float(st.t)])}
    for name, arr in st.m.items():
        recs[f"{prefix}.m.{name}"] = arr
    for name, arr in st.v.items():
        recs[f"{prefix}.v.{name}"] = arr
    return recs


def save_checkpoint(state: TrainState, config: TrainConfig, path) -> None:
    meta = {
        "version": 1,
        "mode": config.mode,
        "k": config.k,
        "noise_dim": config.noise_dim,
        "iteration": state.iteration,
        "d_spec": nn.spec_to_list(state.d_spec),
        "feature_spec": nn.spec_to_list(state.feature_spec),
        "g_spec": nn.spec_to_list(state.g_spec),
        "alpha": config.alpha,
        "beta1": config.beta1,
        "beta2": config.beta2,
        "adam_eps": config.adam_eps,
    }
    records = {ckpt.META_KEY: ckpt.pack_meta(meta)}
    records.update(_param_records("d", state.d_params))
    records.update(_param_records("g", state.g_params))
    records.update(_adam_records("adam_d", state.adam_d))
    records.update(_adam_records("adam_g", state.adam_g))
    if state.real_centroids is not None:
        records["centers.real"] = state.real_centroids.centers
        records["centers.real_counts"] = state.real_centroids.counts.astype(np.float64)
    if state.fake_centroids is not None:
        records["centers.fake"] = state.fake_centroids.centers
        records["centers.fake_counts"] = state.fake_centroids.counts.astype(np.float64)
    ckpt.save_records(path, records)


def _load_params(prefix, spec, records) -> ParamSet:
    params = ParamSet()
    for name, arr in records.items():
        if name.startswith(f"{prefix}.running."):
            params.running[name[len(prefix) + 9 :]] = arr.copy()
        elif name.startswith(f"{prefix}.") and not name.startswith(f"{prefix}.running"):
            params.tensors[name[len(prefix) + 1 :]] = Tensor(arr, requires_grad=True)
    return params


def _load_adam(prefix, records, config_meta) -> optim.AdamState:
    st = optim.AdamState(
        alpha=config_meta["alpha"],
        beta1=config_meta["beta1"],
        beta2=config_meta["beta2"],
        eps=config_meta["adam_eps"],
    )
    st.t = int(records[f"{prefix}.t"][0])
    for name, arr in records.items():
        if name.startswith(f"{prefix}.m."):
            st.m[name[len(prefix) + 3 :]] = arr.copy()
        elif name.startswith(f"{prefix}.v."):
            st.v[name[len(prefix) + 3 :]] = arr.copy()
    return st


def load_checkpoint(path) -> tuple[TrainState, dict]:
    """Rebuild a TrainState from disk; returns (state, meta)."""
    records = ckpt.load_records(path)
    if ckpt.META_KEY not in records:
        raise ckpt.CheckpointError("checkpoint has no metadata record")
    meta = ckpt.unpack_meta(records[ckpt.META_KEY])
    d_spec = nn.spec_from_list(meta["d_spec"])
    feature_spec = nn.spec_from_list(meta["feature_spec"])
    g_spec = nn.spec_from_list(meta["g_spec"])
    state = TrainState(
        d_spec=d_spec,
        feature_spec=feature_spec,
        g_spec=g_spec,
        d_params=_load_params("d", d_spec, records),
        g_params=_load_params("g", g_spec, records),
        adam_d=_load_adam("adam_d", records, meta),
        adam_g=_load_adam("adam_g", records, meta),
        iteration=int(meta["iteration"]),
    )
    if "centers.real" in records:
        state.real_centroids = Centroids(
            records["centers.real"], records["centers.real_counts"].astype(np.int64)
        )
    if "centers.fake" in records:
        state.fake_centroids = Centroids(
            records["centers.fake"], records["centers.fake_counts"].astype(np.int64)
        )
    return state, meta
