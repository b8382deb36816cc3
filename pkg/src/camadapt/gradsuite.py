"""Finite-difference gradient suite over every op and the full networks.

Everything runs in double precision; the suite raises on any relative error
above 1e-3 and returns the worst error observed.
"""

import numpy as np

from . import autodiff as ad
from . import nets


def _t(rng, *shape):
    return ad.Tensor(rng.standard_normal(shape), requires_grad=True)


def _op_checks(rng):
    """(name, fn, tensors, sample) tuples covering each primitive op."""
    sq = lambda x: ad.tsum(ad.mul(x, x))  # scalarize any output
    checks = []

    a, b = _t(rng, 3, 4), _t(rng, 3, 4)
    checks.append(("add", lambda a, b: sq(ad.add(a, b)), [a, b]))
    checks.append(("mul", lambda a, b: sq(ad.mul(a, b)), [a, b]))
    checks.append(("sum", lambda a: ad.tsum(a), [_t(rng, 5)]))
    checks.append(("mean", lambda a: ad.tmean(a), [_t(rng, 4, 3)]))
    checks.append(("mean_axis", lambda a: sq(ad.tmean(a, axis=(2, 3))),
                   [_t(rng, 2, 3, 4, 4)]))
    x = _t(rng, 3, 5)
    x.data += np.where(np.abs(x.data) < 0.2, 0.5, 0.0)  # stay off the kink
    checks.append(("relu", lambda a: sq(ad.relu(a)), [x]))
    x2 = ad.Tensor(x.data.copy(), requires_grad=True)
    checks.append(("leaky_relu", lambda a: sq(ad.leaky_relu(a, 0.2)), [x2]))
    checks.append(("tanh", lambda a: sq(ad.tanh(a)), [_t(rng, 3, 4)]))
    checks.append(("mse_loss",
                   lambda a, b: ad.mse_loss(a, b), [_t(rng, 4, 4), _t(rng, 4, 4)]))
    d = _t(rng, 4, 4)
    d.data += np.sign(d.data + 1e-12) * 0.3  # keep |a-b| away from zero
    checks.append(("l1_loss", lambda a, b: ad.l1_loss(a, b),
                   [d, ad.Tensor(np.zeros((4, 4)), requires_grad=True)]))
    labels = np.array([0, 2, 1])
    checks.append(("softmax_cross_entropy",
                   lambda z: ad.softmax_cross_entropy(z, labels),
                   [_t(rng, 3, 3)]))
    checks.append(("reshape", lambda a: sq(ad.reshape(a, (6, 2))),
                   [_t(rng, 3, 4)]))
    checks.append(("pad2d_zero", lambda a: sq(ad.pad2d(a, 2, "zero")),
                   [_t(rng, 2, 3, 5, 5)]))
    checks.append(("pad2d_reflect", lambda a: sq(ad.pad2d(a, 2, "reflect")),
                   [_t(rng, 2, 3, 5, 5)]))
    checks.append(("avg_pool2d", lambda a: sq(ad.avg_pool2d(a, 2)),
                   [_t(rng, 2, 3, 4, 4)]))
    checks.append(("linear", lambda x, w, b: sq(ad.linear(x, w, b)),
                   [_t(rng, 3, 4), _t(rng, 4, 2), _t(rng, 2)]))
    checks.append(("conv2d_s1",
                   lambda x, w, b: sq(ad.conv2d(x, w, b, stride=1, padding=1)),
                   [_t(rng, 2, 3, 6, 6), _t(rng, 4, 3, 3, 3), _t(rng, 4)]))
    checks.append(("conv2d_s2",
                   lambda x, w, b: sq(ad.conv2d(x, w, b, stride=2, padding=1)),
                   [_t(rng, 1, 3, 7, 7), _t(rng, 4, 3, 4, 4), _t(rng, 4)]))
    checks.append(("conv2d_reflect",
                   lambda x, w: sq(ad.conv2d(x, w, stride=1, padding=2,
                                             pad_mode="reflect")),
                   [_t(rng, 1, 2, 6, 6), _t(rng, 3, 2, 5, 5)]))
    checks.append(("conv_transpose2d",
                   lambda x, w, b: sq(ad.conv_transpose2d(
                       x, w, b, stride=2, padding=1, output_padding=1)),
                   [_t(rng, 1, 4, 5, 5), _t(rng, 4, 3, 3, 3), _t(rng, 3)]))
    checks.append(("batch_norm",
                   lambda x, g, b: sq(ad.batch_norm(x, g, b, {}, mode="train")),
                   [_t(rng, 3, 4, 5, 5), _t(rng, 4), _t(rng, 4)]))
    checks.append(("instance_norm", lambda x: sq(ad.instance_norm(x)),
                   [_t(rng, 2, 3, 5, 5)]))
    return checks


def _network_check(variant, rng, sample, max_tensors=8):
    net = nets.build(nets.builtin_spec(variant), seed=3, dtype=np.float64)
    x = _t(rng, 1, 3, 32, 32)
    params = net.params
    if len(params) > max_tensors:
        picked = rng.choice(len(params), size=max_tensors, replace=False)
        params = [params[i] for i in sorted(picked)]
    tensors = [x] + params

    def fn(*ts):
        y = net.forward(ts[0], train=True)
        return ad.tmean(ad.mul(y, y))

    return fn, tensors


def run_gradient_suite(verbose=False, rng=None):
    """Run all checks; returns the worst relative error (raises if > 1e-3)."""
    rng = rng or np.random.default_rng(42)
    worst = 0.0
    for name, fn, tensors in _op_checks(rng):
        err = ad.finite_difference_check(fn, tensors)
        worst = max(worst, err)
        if verbose:
            print(f"  {name:<24} rel err {err:.3e}")
    for variant, sample in (("SD", 3), ("ESD", 3), ("RESNET9_GENERATOR", 2)):
        fn, tensors = _network_check(variant, rng, sample)
        # Whole networks are deep stacks of relu/leaky_relu units, so any
        # single step size can land across an activation kink for some
        # coordinate; the checker picks the best-behaved candidate step.
        err = ad.finite_difference_check(fn, tensors, h=(1e-5, 3e-6),
                                         sample=sample, rng=rng)
        worst = max(worst, err)
        if verbose:
            print(f"  {variant:<24} rel err {err:.3e}")
    return worst
