"""Shared fixtures and cached artifacts for long-running acceptance tests.

The two stochastic acceptance checks train real models (minutes to hours on
one core). Their outputs are cached under tests/_artifacts keyed by the full
training configuration, so reruns of the suite reuse prior results instead
of retraining.
"""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from camadapt import cyclegan as cg
from camadapt import distortion as dist

ARTIFACTS = Path(__file__).parent / "_artifacts"


def _toy_datasets(sigma, n=200, held=20, size=64):
    """Pristine X, sigma-noised disjoint Y, and a held-out pristine set."""
    corpus = dist.synthetic_corpus(2 * n + held, size=size, seed=100)
    x = corpus[:n]
    y = [dist.awgn(im, sigma, seed=1000 + i) for i, im in enumerate(corpus[n:2 * n])]
    return x, y, corpus[2 * n:]


def toy_cyclegan_run(sigma, seed, epochs_const, epochs_decay, crop=32,
                     lambda_identity=0.0):
    """Train (or load) the toy distortion mapping; returns metrics + paths.

    Metrics are measured on held-out pristine images: residual std of
    G(x) - x and the mean |PSNR(x, G(x)) - PSNR(x, f(x))| gap against the
    true distortion.
    """
    key = (f"toy_s{sigma:g}_seed{seed}_e{epochs_const}+{epochs_decay}"
           f"_c{crop}_li{lambda_identity:g}")
    out_dir = ARTIFACTS / key
    metrics_path = out_dir / "metrics.json"
    if metrics_path.exists():
        return json.loads(metrics_path.read_text())

    out_dir.mkdir(parents=True, exist_ok=True)
    x, y, held = _toy_datasets(sigma)
    config = cg.TrainConfig(discriminator_variant="SD", crop=crop,
                            lambda_identity=lambda_identity,
                            epochs_const=epochs_const,
                            epochs_decay=epochs_decay, seed=seed,
                            checkpoint_every=max(epochs_const + epochs_decay, 1))
    state = cg.train(config, x, y, out_dir=str(out_dir))

    stds, gaps = [], []
    for i, im in enumerate(held):
        out = cg.emulate(state.G, [im])[0]
        stds.append(np.std(out.astype(np.float64) - im.astype(np.float64)))
        true = dist.awgn(im, sigma, seed=5000 + i)
        gaps.append(abs(dist.psnr(im, out) - dist.psnr(im, true)))
    metrics = {
        "residual_std": float(np.mean(stds)),
        "psnr_gap": float(np.mean(gaps)),
        "checkpoint": str(out_dir / "checkpoint"),
        "sigma": sigma,
        "seed": seed,
    }
    metrics_path.write_text(json.dumps(metrics, indent=2))
    return metrics


def cached_json(key, compute):
    """Generic disk cache for expensive test computations."""
    path = ARTIFACTS / f"{key}.json"
    if path.exists():
        return json.loads(path.read_text())
    ARTIFACTS.mkdir(parents=True, exist_ok=True)
    result = compute()
    path.write_text(json.dumps(result, indent=2))
    return result
