"""Synthetic domain-adaptation study.

Three-step protocol on a desk-scale classification task:

1. pre-train a small CNN on pristine synthetic images,
2. build an adapted training set (true distortion for the oracle scenario,
   a learned mapping for the adapted scenario) and fine-tune,
3. evaluate every scenario on a test split degraded by the TRUE distortion.

The test split is never touched by the learned mapping; only training data
is emulated.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import cyclegan
from . import distortion


class HarnessError(Exception):
    pass


# ---------------------------------------------------------------------------
# synthetic labeled data

CLASS_NAMES = ("disk", "box", "stripes", "checker")


def _render_class(kind, rng, size):
    """One 64x64-ish image of the given class with randomized pose/colors."""
    bg = rng.integers(60, 196, size=3).astype(np.float64)
    fg = rng.integers(30, 226, size=3).astype(np.float64)
    while np.abs(fg - bg).max() < 70:  # keep figure/ground separable
        fg = rng.integers(30, 226, size=3).astype(np.float64)
    img = np.ones((size, size, 3), dtype=np.float64) * bg
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = rng.uniform(0.3, 0.7) * size
    cy = rng.uniform(0.3, 0.7) * size
    if kind == 0:  # filled disk
        r = rng.uniform(0.15, 0.3) * size
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif kind == 1:  # axis-aligned box outline
        h = rng.uniform(0.22, 0.34) * size
        w = rng.uniform(0.22, 0.34) * size
        t = rng.uniform(5, 8)
        outer = (np.abs(yy - cy) <= h) & (np.abs(xx - cx) <= w)
        inner = (np.abs(yy - cy) <= h - t) & (np.abs(xx - cx) <= w - t)
        mask = outer & ~inner
    elif kind == 2:  # oriented stripes
        theta = rng.uniform(0, np.pi)
        period = rng.uniform(12, 18)
        proj = np.cos(theta) * xx + np.sin(theta) * yy
        mask = (proj % period) < period / 2
    elif kind == 3:  # checkerboard
        cell = rng.integers(3, 6)
        mask = ((yy // cell + xx // cell) % 2).astype(bool)
    else:
        raise HarnessError(f"unknown class kind {kind}")
    img[mask] = fg
    # low-amplitude background texture so the task is not trivially flat
    noise = rng.standard_normal((size, size, 1)) * 4.0
    img = img + noise
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


@dataclass
class LabeledDataset:
    images: list
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise HarnessError("images/labels length mismatch")
        self.labels = np.asarray(self.labels, dtype=np.int64)

    def __len__(self):
        return len(self.images)

    def with_images(self, images, split=None):
        return LabeledDataset(list(images), self.labels.copy(),
                              split if split is not None else self.split)


def generate_synthetic_dataset(seed, n_per_class, classes=4, size=64,
                               split="train"):
    """Procedurally rendered shape/texture classification set."""
    if n_per_class < 1:
        raise HarnessError("n_per_class must be >= 1")
    if not 2 <= classes <= len(CLASS_NAMES):
        raise HarnessError(f"classes must be in [2, {len(CLASS_NAMES)}]")
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(n_per_class):
        for c in range(classes):
            images.append(_render_class(c, rng, size))
            labels.append(c)
    return LabeledDataset(images, np.array(labels), split)


# ---------------------------------------------------------------------------
# toy classifier: 3 conv blocks + pooling + linear head


class PerceptionModel:
    """Small CNN classifier over (H, W, 3) uint8 images."""

    CHANNELS = (16, 32, 64)

    def __init__(self, classes=4, seed=0, dtype=np.float32):
        self.classes = classes
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params = []
        self._convs = []
        c_in = 3
        for c_out in self.CHANNELS:
            fan_in = c_in * 9
            w = ad.Tensor(
                (rng.standard_normal((c_out, c_in, 3, 3)) / np.sqrt(fan_in))
                .astype(self.dtype), requires_grad=True)
            b = ad.Tensor(np.zeros(c_out, dtype=self.dtype), requires_grad=True)
            self._convs.append((w, b))
            self.params += [w, b]
            c_in = c_out
        self._head_w = ad.Tensor(
            (rng.standard_normal((c_in, classes)) / np.sqrt(c_in))
            .astype(self.dtype), requires_grad=True)
        self._head_b = ad.Tensor(np.zeros(classes, dtype=self.dtype),
                                 requires_grad=True)
        self.params += [self._head_w, self._head_b]

    def logits(self, batch):
        """batch: (N, 3, H, W) tensor scaled to [-1, 1]; H, W divisible by 8."""
        x = batch
        for w, b in self._convs:
            # stride-2 convs downsample; a global average pool feeds the head
            x = ad.relu(ad.conv2d(x, w, b, stride=2, padding=1))
        x = ad.tmean(x, axis=(2, 3))
        return ad.linear(x, self._head_w, self._head_b)

    def clone(self):
        other = PerceptionModel(self.classes, seed=0, dtype=self.dtype)
        for dst, src in zip(other.params, self.params):
            dst.data = src.data.copy()
        return other


def _to_batch(images, dtype=np.float32):
    arr = np.stack([im.astype(np.float64) for im in images])
    arr = (arr / 127.5 - 1.0).transpose(0, 3, 1, 2)
    return ad.Tensor(arr.astype(dtype))


@dataclass
class TrainRecipe:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3
    lr_drop_at: float = 0.75  # fraction of steps after which lr /= 10
    seed: int = 0


def _train(model, dataset, recipe):
    if recipe.steps == 0:
        return model
    if not len(dataset):
        raise HarnessError("empty training dataset")
    rng = np.random.default_rng(recipe.seed)
    opt = ad.AdamState(model.params, lr=recipe.lr, beta1=0.9, beta2=0.999)
    drop = int(recipe.steps * recipe.lr_drop_at)
    n = len(dataset)
    for step in range(recipe.steps):
        opt.lr = recipe.lr if step < drop else recipe.lr / 10.0
        idx = rng.integers(0, n, size=min(recipe.batch_size, n))
        batch = _to_batch([dataset.images[i] for i in idx], model.dtype)
        labels = dataset.labels[idx]
        with ad.tape_scope():
            loss = ad.softmax_cross_entropy(model.logits(batch), labels)
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
    return model


def pretrain(dataset, classes=4, recipe=None, seed=0):
    recipe = recipe or TrainRecipe(seed=seed)
    model = PerceptionModel(classes=classes, seed=seed)
    return _train(model, dataset, recipe)


def fine_tune(model, adapted_dataset, recipe=None, seed=0):
    """Continue training from pretrained weights at a reduced budget."""
    recipe = recipe or TrainRecipe(steps=600, lr=1e-4, seed=seed)
    return _train(model.clone(), adapted_dataset, recipe)


def evaluate(model, dataset, batch_size=32):
    """Returns (accuracy, per-class accuracy array)."""
    correct = np.zeros(model.classes)
    total = np.zeros(model.classes)
    for i in range(0, len(dataset), batch_size):
        ims = dataset.images[i:i + batch_size]
        labels = dataset.labels[i:i + batch_size]
        pred = np.argmax(model.logits(_to_batch(ims, model.dtype)).data, axis=1)
        for lab, p in zip(labels, pred):
            total[lab] += 1
            correct[lab] += (lab == p)
    per_class = np.divide(correct, total, out=np.zeros_like(correct),
                          where=total > 0)
    return float(correct.sum() / max(total.sum(), 1)), per_class


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    kind: str  # baseline | oracle | adapted
    checkpoint: str = ""  # adapted only

    def __post_init__(self):
        if self.kind not in ("baseline", "oracle", "adapted"):
            raise HarnessError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "adapted" and not self.checkpoint:
            raise HarnessError("adapted scenario needs a mapping checkpoint")
        if self.kind != "adapted" and self.checkpoint:
            raise HarnessError(f"{self.kind} scenario takes no checkpoint")


@dataclass
class ScenarioResult:
    kind: str
    seed: int
    accuracy: float
    per_class: np.ndarray


@dataclass
class StudyConfig:
    distortion: object = None  # callable(image, index) -> image, or None
    scenarios: tuple = (Scenario("baseline"), Scenario("oracle"))
    seed: int = 0
    classes: int = 4
    n_per_class_train: int = 100
    n_per_class_test: int = 40
    pretrain_recipe: TrainRecipe = None
    finetune_recipe: TrainRecipe = None


def awgn_distortion(sigma, seed_base=9000):
    """Deterministic per-index additive-noise distortion."""
    def f(image, index):
        return distortion.awgn(image, sigma, seed=seed_base + index)
    return f


def camera_distortion(params, seed_base=9000):
    def f(image, index):
        return distortion.apply_camera_model(image, params,
                                             seed=seed_base + index)
    return f


def _distort_all(images, fn, offset=0):
    if fn is None:
        return list(images)
    return [fn(im, offset + i) for i, im in enumerate(images)]


def _emulate_all(checkpoint, images):
    state = cyclegan.load_checkpoint(checkpoint)
    return cyclegan.emulate(state.G, images)


def run_scenarios(config, progress=None):
    """Pretrain once, then fine-tune and evaluate each scenario.

    Every scenario is scored on the same test split distorted by the true
    mapping; the learned mapping only ever produces training data.
    """
    say = progress or (lambda msg: None)
    train_set = generate_synthetic_dataset(config.seed, config.n_per_class_train,
                                           config.classes, split="train")
    test_set = generate_synthetic_dataset(config.seed + 1,
                                          config.n_per_class_test,
                                          config.classes, split="test")
    distorted_test = test_set.with_images(
        _distort_all(test_set.images, config.distortion, offset=10 ** 6))

    say("pretraining on pristine data")
    pre_recipe = config.pretrain_recipe or TrainRecipe(seed=config.seed)
    model = pretrain(train_set, config.classes, pre_recipe, seed=config.seed)

    results = []
    for sc in config.scenarios:
        say(f"scenario {sc.kind}")
        if sc.kind == "baseline":
            scored = model
        else:
            if sc.kind == "oracle":
                adapted_images = _distort_all(train_set.images,
                                              config.distortion)
            else:
                adapted_images = _emulate_all(sc.checkpoint, train_set.images)
            ft_recipe = config.finetune_recipe or TrainRecipe(
                steps=600, lr=1e-4, seed=config.seed)
            scored = fine_tune(model, train_set.with_images(adapted_images),
                               ft_recipe, seed=config.seed)
        acc, per_class = evaluate(scored, distorted_test)
        results.append(ScenarioResult(sc.kind, config.seed, acc, per_class))
        say(f"  {sc.kind}: accuracy {acc:.3f}")
    return results


def write_results_csv(path, results, distortion_name=""):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "distortion", "seed", "accuracy"])
        for r in results:
            writer.writerow([r.kind, distortion_name, r.seed,
                             f"{r.accuracy:.4f}"])
    os.replace(tmp, path)
