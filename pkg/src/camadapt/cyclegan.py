"""Unpaired image-to-image training of the distortion mapping.

Two generators (forward = the learned distortion, backward = its inverse)
and two patch discriminators trained with a least-squares adversarial loss,
cycle consistency, and an identity term. The trained forward generator is
the learned pristine-to-distorted mapping.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nets


class TrainError(Exception):
    pass


@dataclass
class TrainConfig:
    discriminator_variant: str = "SD"
    lambda_cycle: float = 10.0
    lambda_identity: float = 0.5
    base_lr: float = 2e-4
    epochs_const: int = 100
    epochs_decay: int = 100
    batch_size: int = 1
    crop: int = 256
    pool_size: int = 50
    seed: int = 0
    checkpoint_every: int = 10
    dtype: str = "float32"

    def __post_init__(self):
        if self.lambda_cycle < 0 or self.lambda_identity < 0:
            raise TrainError("loss weights must be >= 0")
        if self.epochs_const + self.epochs_decay < 1:
            raise TrainError("need at least one epoch")
        if self.crop < 16:
            raise TrainError("crop must be >= 16")


def normalize_image(image: np.ndarray, dtype=np.float32) -> ad.Tensor:
    """uint8 (H, W, 3) -> (1, 3, H, W) tensor in [-1, 1]."""
    arr = np.asarray(image, dtype=np.float64) / 127.5 - 1.0
    return ad.Tensor(arr.transpose(2, 0, 1)[None].astype(dtype))


def denormalize(t: ad.Tensor) -> np.ndarray:
    arr = (np.asarray(t.data, dtype=np.float64)[0].transpose(1, 2, 0) + 1.0) * 127.5
    return np.clip(np.round(arr), 0, 255).astype(np.uint8)


def lsgan_d_loss(disc, real_batch, fake_batch):
    """0.5 * [mse(D(real), 1) + mse(D(fake), 0)] over the patch map."""
    pred_real = disc(real_batch)
    pred_fake = disc(fake_batch)
    ones = ad.Tensor(np.ones_like(pred_real.data))
    zeros = ad.Tensor(np.zeros_like(pred_fake.data))
    return ad.mul(ad.add(ad.mse_loss(pred_real, ones),
                         ad.mse_loss(pred_fake, zeros)), 0.5)


def lsgan_g_loss(disc, fake_batch):
    pred = disc(fake_batch)
    return ad.mse_loss(pred, ad.Tensor(np.ones_like(pred.data)))


def cycle_loss(x, x_rec, y, y_rec):
    return ad.add(ad.l1_loss(x_rec, x), ad.l1_loss(y_rec, y))


def identity_loss(g_of_y, y, f_of_x, x):
    return ad.add(ad.l1_loss(g_of_y, y), ad.l1_loss(f_of_x, x))


def full_objective(adv_g, adv_f, cyc, idt, lambda_cycle, lambda_identity):
    """adv_g + adv_f + lambda_cycle * cyc + lambda_identity * idt."""
    total = ad.add(adv_g, adv_f)
    total = ad.add(total, ad.mul(cyc, lambda_cycle))
    return ad.add(total, ad.mul(idt, lambda_identity))


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    total = config.epochs_const + config.epochs_decay
    if not 0 <= epoch < total:
        raise TrainError(f"epoch {epoch} outside [0, {total})")
    if epoch < config.epochs_const:
        return config.base_lr
    frac = (epoch - config.epochs_const + 1) / (config.epochs_decay + 1)
    return config.base_lr * (1.0 - frac)


class ImagePool:
    """History buffer of generated fakes used for discriminator updates."""

    def __init__(self, size, rng):
        self.size = size
        self.rng = rng
        self.items = []

    def sample(self, fresh):
        if self.size == 0:
            return fresh
        if len(self.items) < self.size:
            self.items.append(fresh)
            return fresh
        if self.rng.random() < 0.5:
            idx = self.rng.integers(0, self.size)
            stored = self.items[idx]
            self.items[idx] = fresh
            return stored
        return fresh


class TrainerState:
    """Networks, optimizers, pools, and loss history for one training run."""

    def __init__(self, config: TrainConfig):
        config = config if isinstance(config, TrainConfig) else TrainConfig(**config)
        self.config = config
        dtype = np.dtype(config.dtype).type
        seed = config.seed
        gen_spec = nets.builtin_spec("RESNET9_GENERATOR")
        disc_spec = nets.builtin_spec(config.discriminator_variant)
        self.G = nets.build(gen_spec, seed=seed, dtype=dtype)
        self.F = nets.build(gen_spec, seed=seed + 1, dtype=dtype)
        self.D_X = nets.build(disc_spec, seed=seed + 2, dtype=dtype)
        self.D_Y = nets.build(disc_spec, seed=seed + 3, dtype=dtype)
        self.opt_g = ad.AdamState(self.G.params + self.F.params, lr=config.base_lr)
        self.opt_d = ad.AdamState(self.D_X.params + self.D_Y.params, lr=config.base_lr)
        self.rng = np.random.default_rng(seed)
        self.pool_x = ImagePool(config.pool_size, self.rng)
        self.pool_y = ImagePool(config.pool_size, self.rng)
        self.epoch = 0
        self.history = []


def train_step(state: TrainerState, x, y, lr: float):
    """One generator update followed by one update of each discriminator."""
    cfg = state.config
    state.opt_g.lr = lr
    state.opt_d.lr = lr
    G, F, D_X, D_Y = state.G, state.F, state.D_X, state.D_Y

    # generator step: discriminators are graded through but not updated
    D_X.set_requires_grad(False)
    D_Y.set_requires_grad(False)
    with ad.tape_scope():
        fake_y = G(x)
        rec_x = F(fake_y)
        fake_x = F(y)
        rec_y = G(fake_x)
        adv_g = lsgan_g_loss(D_Y, fake_y)
        adv_f = lsgan_g_loss(D_X, fake_x)
        cyc = cycle_loss(x, rec_x, y, rec_y)
        if cfg.lambda_identity > 0:
            idt = identity_loss(G(y), y, F(x), x)
        else:
            idt = ad.Tensor(np.zeros((), dtype=x.dtype))
        total = full_objective(adv_g, adv_f, cyc, idt,
                               cfg.lambda_cycle, cfg.lambda_identity)
        if not np.isfinite(total.item()):
            raise TrainError(f"non-finite generator loss at epoch {state.epoch}")
        state.opt_g.zero_grad()
        ad.backward(total)
        state.opt_g.step()
    D_X.set_requires_grad(True)
    D_Y.set_requires_grad(True)

    # discriminator steps on pooled, detached fakes
    G.set_requires_grad(False)
    F.set_requires_grad(False)
    fake_y_d = state.pool_y.sample(fake_y.detach())
    fake_x_d = state.pool_x.sample(fake_x.detach())
    with ad.tape_scope():
        d_y = lsgan_d_loss(D_Y, y, fake_y_d)
        d_x = lsgan_d_loss(D_X, x, fake_x_d)
        d_total = ad.add(d_y, d_x)
        if not np.isfinite(d_total.item()):
            raise TrainError(f"non-finite discriminator loss at epoch {state.epoch}")
        state.opt_d.zero_grad()
        ad.backward(d_total)
        state.opt_d.step()
    G.set_requires_grad(True)
    F.set_requires_grad(True)

    record = {"adv_g": adv_g.item(), "adv_f": adv_f.item(), "cycle": cyc.item(),
              "identity": idt.item(), "total": total.item(),
              "d_x": d_x.item(), "d_y": d_y.item()}
    state.history.append(record)
    return record


def _random_crop(image, crop, rng):
    h, w = image.shape[:2]
    if h < crop or w < crop:
        raise TrainError(f"image {h}x{w} smaller than crop {crop}")
    y0 = rng.integers(0, h - crop + 1)
    x0 = rng.integers(0, w - crop + 1)
    return image[y0:y0 + crop, x0:x0 + crop]


def train(config: TrainConfig, dataset_x, dataset_y, out_dir=None,
          progress=None):
    """Full training loop; returns the trainer state (state.G is the mapping)."""
    if not len(dataset_x) or not len(dataset_y):
        raise TrainError("datasets must be non-empty")
    state = TrainerState(config)
    dtype = np.dtype(config.dtype).type
    steps_per_epoch = min(len(dataset_x), len(dataset_y))
    total_epochs = config.epochs_const + config.epochs_decay
    epoch_rows = []
    for epoch in range(total_epochs):
        state.epoch = epoch
        lr = lr_schedule(epoch, config)
        ix = state.rng.permutation(len(dataset_x))[:steps_per_epoch]
        iy = state.rng.permutation(len(dataset_y))[:steps_per_epoch]
        sums = None
        for i, j in zip(ix, iy):
            x = normalize_image(_random_crop(dataset_x[i], config.crop, state.rng), dtype)
            y = normalize_image(_random_crop(dataset_y[j], config.crop, state.rng), dtype)
            rec = train_step(state, x, y, lr)
            if sums is None:
                sums = dict.fromkeys(rec, 0.0)
            for k, v in rec.items():
                sums[k] += v
        row = {k: v / steps_per_epoch for k, v in sums.items()}
        row["epoch"] = epoch
        row["lr"] = lr
        epoch_rows.append(row)
        if progress:
            progress(row)
        if out_dir is not None:
            write_loss_csv(os.path.join(out_dir, "losses.csv"), epoch_rows)
            last = epoch == total_epochs - 1
            if last or (epoch + 1) % config.checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, "checkpoint"), state)
    state.epoch_rows = epoch_rows
    return state


# internal loss-record key -> CSV column
LOSS_COLUMNS = (("epoch", "epoch"), ("adv_g", "L_GAN_G"), ("adv_f", "L_GAN_F"),
                ("cycle", "L_c"), ("identity", "L_i"), ("total", "total"),
                ("d_x", "d_x"), ("d_y", "d_y"), ("lr", "lr"))


def write_loss_csv(path, rows):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([col for _, col in LOSS_COLUMNS])
        for row in rows:
            writer.writerow([row.get(key, "") for key, _ in LOSS_COLUMNS])
    os.replace(tmp, path)


def emulate(generator, images):
    """Apply the learned mapping to a list of uint8 images."""
    out = []
    dtype = generator.params[0].dtype.type
    for img in images:
        h, w = img.shape[:2]
        if min(h, w) < 16:
            raise TrainError("image too small for the generator (min side 16)")
        # The generator only preserves sizes divisible by 4; reflect-pad up
        # to the next multiple and crop the result back.
        ph = (-h) % 4
        pw = (-w) % 4
        if ph or pw:
            img = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect")
        with ad.tape_scope():
            mapped = generator(normalize_image(img, dtype), train=False)
        out.append(denormalize(mapped)[:h, :w])
    return out


# ---------------------------------------------------------------------------
# checkpoints: flat little-endian binary + text manifest


def save_checkpoint(path_prefix, state: TrainerState):
    nets_to_save = {"G": state.G, "F": state.F, "D_X": state.D_X, "D_Y": state.D_Y}
    blob = bytearray()
    manifest = [f"variant {state.config.discriminator_variant}",
                f"dtype {state.config.dtype}",
                f"epoch {state.epoch}",
                "endianness little"]
    for net_name, net in nets_to_save.items():
        manifest.append(f"spec {net_name} {net.spec.name}")
        for arr_name, arr in net.state_arrays():
            data = np.asarray(arr, dtype="<" + arr.dtype.str[1:]).tobytes()
            shape = ",".join(str(s) for s in arr.shape) or "scalar"
            manifest.append(
                f"array {net_name}.{arr_name} {shape} {arr.dtype.name} {len(blob)} {len(data)}")
            blob += data
    tmp_bin, tmp_man = path_prefix + ".bin.tmp", path_prefix + ".manifest.tmp"
    with open(tmp_bin, "wb") as f:
        f.write(bytes(blob))
    with open(tmp_man, "w") as f:
        f.write("\n".join(manifest) + "\n")
    os.replace(tmp_bin, path_prefix + ".bin")
    os.replace(tmp_man, path_prefix + ".manifest")


def load_checkpoint(path_prefix):
    """Rebuild the networks recorded in a checkpoint; returns a TrainerState."""
    with open(path_prefix + ".manifest") as f:
        lines = [ln.split() for ln in f.read().splitlines() if ln]
    header = {ln[0]: ln[1] for ln in lines if ln[0] in ("variant", "dtype", "epoch")}
    config = TrainConfig(discriminator_variant=header["variant"],
                         dtype=header["dtype"])
    state = TrainerState(config)
    state.epoch = int(header["epoch"])
    with open(path_prefix + ".bin", "rb") as f:
        blob = f.read()
    loads = {"G": [], "F": [], "D_X": [], "D_Y": []}
    for ln in lines:
        if ln[0] != "array":
            continue
        full, shape_s, dtype_s, off_s, size_s = ln[1], ln[2], ln[3], ln[4], ln[5]
        net_name, arr_name = full.split(".", 1)
        shape = () if shape_s == "scalar" else tuple(int(v) for v in shape_s.split(","))
        off, size = int(off_s), int(size_s)
        arr = np.frombuffer(blob[off:off + size],
                            dtype=np.dtype(dtype_s).newbyteorder("<")).reshape(shape)
        loads[net_name].append((arr_name, arr.astype(dtype_s)))
    for net_name, net in (("G", state.G), ("F", state.F),
                          ("D_X", state.D_X), ("D_Y", state.D_Y)):
        net.load_state_arrays(loads[net_name])
    return state
