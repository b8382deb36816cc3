"""Network architecture specs, analytic checks, and realized networks.

Discriminators are PatchGANs of varying depth; the generator is the
9-residual-block encoder/decoder. Specs are declarative so the receptive
field recursion and parameter counts can be verified without building
anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad


class SpecError(Exception):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str                 # conv | conv_transpose | residual_block
    out_channels: int
    kernel: int = 3
    stride: int = 1
    norm: str = "none"        # none | batch | instance
    activation: str = "none"  # none | leaky_relu | relu | tanh
    pad: int = 0
    pad_mode: str = "zero"    # zero | reflect
    output_padding: int = 0

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.out_channels < 1:
            raise SpecError(f"invalid layer geometry: {self}")


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    in_channels: int
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))


def _disc_layers(chain, norm):
    """PatchGAN stack: first conv bare+lrelu, middle norm+lrelu, last bare."""
    layers = []
    for i, (c, k, s) in enumerate(chain):
        first, last = i == 0, i == len(chain) - 1
        layers.append(LayerSpec(
            kind="conv", out_channels=c, kernel=k, stride=s,
            norm="none" if (first or last) else norm,
            activation="none" if last else "leaky_relu",
            pad=1, pad_mode="zero"))
    return layers


def _generator_layers(base=64, n_blocks=9):
    layers = [LayerSpec("conv", base, 7, 1, "instance", "relu", pad=3, pad_mode="reflect"),
              LayerSpec("conv", base * 2, 3, 2, "instance", "relu", pad=1),
              LayerSpec("conv", base * 4, 3, 2, "instance", "relu", pad=1)]
    layers += [LayerSpec("residual_block", base * 4, 3, 1, "instance", "relu",
                         pad=1, pad_mode="reflect")] * n_blocks
    layers += [LayerSpec("conv_transpose", base * 2, 3, 2, "instance", "relu",
                         pad=1, output_padding=1),
               LayerSpec("conv_transpose", base, 3, 2, "instance", "relu",
                         pad=1, output_padding=1),
               LayerSpec("conv", 3, 7, 1, "none", "tanh", pad=3, pad_mode="reflect")]
    return layers


_BUILTINS = {
    "BD": lambda: ArchitectureSpec("BD", 3, _disc_layers(
        [(64, 4, 2), (128, 4, 2), (256, 4, 2), (512, 4, 1), (1, 4, 1)], "instance")),
    "SD": lambda: ArchitectureSpec("SD", 3, _disc_layers(
        [(64, 4, 2), (128, 4, 2), (256, 4, 1), (1, 4, 1)], "batch")),
    "ESD": lambda: ArchitectureSpec("ESD", 3, _disc_layers(
        [(64, 4, 2), (128, 4, 1), (1, 4, 1)], "batch")),
    "RESNET9_GENERATOR": lambda: ArchitectureSpec("RESNET9_GENERATOR", 3,
                                                  _generator_layers()),
}


def builtin_spec(variant: str) -> ArchitectureSpec:
    key = variant.upper()
    if key not in _BUILTINS:
        raise SpecError(f"unknown builtin variant: {variant!r}")
    return _BUILTINS[key]()


def receptive_field(spec: ArchitectureSpec) -> int:
    """r_m = r_{m-1} + (k_m - 1) * prod(s_1..s_{m-1}), r_0 = 1."""
    r = 1
    jump = 1
    for layer in spec.layers:
        if layer.kind != "conv":
            raise SpecError(
                f"receptive field recursion covers plain convolutions only, got {layer.kind}")
        r += (layer.kernel - 1) * jump
        jump *= layer.stride
    return r


def _layer_param_count(layer: LayerSpec, c_in: int) -> int:
    k, c = layer.kernel, layer.out_channels
    w = c_in * c * k * k
    if layer.kind == "residual_block":
        # two k x k convs at constant width, each followed by the block norm
        per_conv = c * c * k * k
        return 2 * (per_conv + _norm_and_bias(layer.norm, c))
    return w + _norm_and_bias(layer.norm, c)


def _norm_and_bias(norm: str, c: int) -> int:
    # batch norm: affine (2C), conv bias suppressed; instance norm: affine-free,
    # conv keeps its bias; bare conv keeps its bias
    if norm == "batch":
        return 2 * c
    return c


def count_params(spec: ArchitectureSpec) -> int:
    total = 0
    c_in = spec.in_channels
    for layer in spec.layers:
        total += _layer_param_count(layer, c_in)
        c_in = layer.out_channels
    return total


def _conv_out(size, k, s, p):
    return (size + 2 * p - k) // s + 1


def predict_output_shape(spec: ArchitectureSpec, input_shape):
    n, c, h, w = input_shape
    if c != spec.in_channels:
        raise SpecError(f"{spec.name} expects {spec.in_channels} input channels, got {c}")
    for layer in spec.layers:
        if layer.kind == "conv":
            h = _conv_out(h, layer.kernel, layer.stride, layer.pad)
            w = _conv_out(w, layer.kernel, layer.stride, layer.pad)
        elif layer.kind == "conv_transpose":
            h = (h - 1) * layer.stride - 2 * layer.pad + layer.kernel + layer.output_padding
            w = (w - 1) * layer.stride - 2 * layer.pad + layer.kernel + layer.output_padding
        elif layer.kind == "residual_block":
            pass  # 3x3 stride-1 pad-1 convs preserve the spatial size
        if h < 1 or w < 1:
            raise SpecError(f"{spec.name}: non-positive intermediate size at {layer}")
        c = layer.out_channels
    return (n, c, h, w)


# ---------------------------------------------------------------------------
# realized networks


class _Norm:
    """Norm state for one conv; instance norm has no parameters."""

    def __init__(self, kind, c, rng, dtype):
        self.kind = kind
        self.params = []
        if kind == "batch":
            self.gamma = ad.Tensor(rng.normal(1.0, 0.02, c).astype(dtype), requires_grad=True)
            self.beta = ad.Tensor(np.zeros(c, dtype=dtype), requires_grad=True)
            self.running = {"mean": np.zeros(c, dtype=dtype),
                            "var": np.ones(c, dtype=dtype)}
            self.params = [self.gamma, self.beta]

    def __call__(self, x, train):
        if self.kind == "batch":
            return ad.batch_norm(x, self.gamma, self.beta, self.running,
                                 mode="train" if train else "eval")
        if self.kind == "instance":
            return ad.instance_norm(x)
        return x


_ACTS = {
    "none": lambda x: x,
    "leaky_relu": lambda x: ad.leaky_relu(x, 0.2),
    "relu": ad.relu,
    "tanh": ad.tanh,
}


class _ConvUnit:
    def __init__(self, layer: LayerSpec, c_in, rng, dtype):
        k, c = layer.kernel, layer.out_channels
        self.layer = layer
        if layer.kind == "conv_transpose":
            wshape = (c_in, c, k, k)
        else:
            wshape = (c, c_in, k, k)
        self.weight = ad.Tensor(rng.normal(0.0, 0.02, wshape).astype(dtype),
                                requires_grad=True)
        self.bias = None
        if layer.norm != "batch":
            self.bias = ad.Tensor(np.zeros(c, dtype=dtype), requires_grad=True)
        self.norm = _Norm(layer.norm, c, rng, dtype)

    @property
    def params(self):
        out = [self.weight]
        if self.bias is not None:
            out.append(self.bias)
        return out + self.norm.params

    def __call__(self, x, train):
        lay = self.layer
        if lay.kind == "conv_transpose":
            y = ad.conv_transpose2d(x, self.weight, self.bias, stride=lay.stride,
                                    padding=lay.pad, output_padding=lay.output_padding)
        else:
            y = ad.conv2d(x, self.weight, self.bias, stride=lay.stride,
                          padding=lay.pad, pad_mode=lay.pad_mode)
        y = self.norm(y, train)
        return _ACTS[lay.activation](y)


class _ResidualBlock:
    def __init__(self, layer: LayerSpec, c_in, rng, dtype):
        if c_in != layer.out_channels:
            raise SpecError("residual block requires equal in/out channels")
        inner = replace(layer, kind="conv")
        self.conv1 = _ConvUnit(inner, c_in, rng, dtype)
        self.conv2 = _ConvUnit(replace(inner, activation="none"), c_in, rng, dtype)

    @property
    def params(self):
        return self.conv1.params + self.conv2.params

    def __call__(self, x, train):
        return ad.add(x, self.conv2(self.conv1(x, train), train))


class NetworkInstance:
    """Realized parameters for a spec plus a forward entry point."""

    def __init__(self, spec: ArchitectureSpec, seed=0, dtype=np.float64):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.units = []
        c_in = spec.in_channels
        for layer in spec.layers:
            cls = _ResidualBlock if layer.kind == "residual_block" else _ConvUnit
            self.units.append(cls(layer, c_in, rng, dtype))
            c_in = layer.out_channels

    @property
    def params(self):
        out = []
        for u in self.units:
            out.extend(u.params)
        return out

    @property
    def param_total(self):
        return sum(p.data.size for p in self.params)

    def forward(self, x, train=True):
        for u in self.units:
            x = u(x, train)
        return x

    __call__ = forward

    def set_requires_grad(self, flag):
        for p in self.params:
            p.requires_grad = flag

    def state_arrays(self):
        """Named parameter and running-stat arrays, in deterministic order."""
        out = []
        for i, u in enumerate(self.units):
            convs = [u.conv1, u.conv2] if isinstance(u, _ResidualBlock) else [u]
            for j, cu in enumerate(convs):
                tag = f"unit{i}.conv{j}"
                out.append((f"{tag}.weight", cu.weight.data))
                if cu.bias is not None:
                    out.append((f"{tag}.bias", cu.bias.data))
                if cu.norm.kind == "batch":
                    out.append((f"{tag}.gamma", cu.norm.gamma.data))
                    out.append((f"{tag}.beta", cu.norm.beta.data))
                    out.append((f"{tag}.running_mean", cu.norm.running["mean"]))
                    out.append((f"{tag}.running_var", cu.norm.running["var"]))
        return out

    def load_state_arrays(self, named):
        table = dict(named)
        for name, arr in self.state_arrays():
            if name not in table:
                raise SpecError(f"checkpoint missing array {name}")
            src = table[name]
            if src.shape != arr.shape:
                raise SpecError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src
        for p in self.params:
            p.mark_dirty()


def build(spec: ArchitectureSpec, seed=0, dtype=np.float64) -> NetworkInstance:
    return NetworkInstance(spec, seed=seed, dtype=dtype)


# ---------------------------------------------------------------------------
# plain-text spec serialization


_FIELD_DEFAULTS = {"norm": "none", "act": "none", "pad": 0, "pad_mode": "zero",
                   "out_pad": 0}


def spec_to_text(spec: ArchitectureSpec) -> str:
    lines = [f"name {spec.name}", f"in_channels {spec.in_channels}"]
    for lay in spec.layers:
        parts = [lay.kind, f"c={lay.out_channels}", f"k={lay.kernel}", f"s={lay.stride}",
                 f"norm={lay.norm}", f"act={lay.activation}", f"pad={lay.pad}"]
        if lay.pad_mode != "zero":
            parts.append(f"pad_mode={lay.pad_mode}")
        if lay.output_padding:
            parts.append(f"out_pad={lay.output_padding}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> ArchitectureSpec:
    name = "unnamed"
    in_channels = 3
    layers = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        head = fields[0]
        try:
            if head == "name":
                name = fields[1]
            elif head == "in_channels":
                in_channels = int(fields[1])
            elif head in ("conv", "conv_transpose", "residual_block"):
                kv = dict(f.split("=", 1) for f in fields[1:])
                unknown = set(kv) - {"c", "k", "s", "norm", "act", "pad",
                                     "pad_mode", "out_pad"}
                if unknown:
                    raise ValueError(f"unknown keys {sorted(unknown)}")
                layers.append(LayerSpec(
                    kind=head,
                    out_channels=int(kv["c"]),
                    kernel=int(kv.get("k", 3)),
                    stride=int(kv.get("s", 1)),
                    norm=kv.get("norm", "none"),
                    activation=kv.get("act", "none"),
                    pad=int(kv.get("pad", 0)),
                    pad_mode=kv.get("pad_mode", "zero"),
                    output_padding=int(kv.get("out_pad", 0))))
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (ValueError, KeyError, IndexError) as exc:
            raise SpecError(f"line {lineno}: cannot parse {raw!r} ({exc})") from exc
    if not layers:
        raise SpecError("spec file contains no layers")
    return ArchitectureSpec(name, in_channels, layers)


def empirical_receptive_field(spec: ArchitectureSpec) -> int:
    """Measure the receptive field by tracing one-hot input support.

    All weights set to 1, biases 0, norms/activations disabled; the width of
    the input region feeding the center output unit is read off the adjoint
    (all-ones output gradient restricted to one unit).
    """
    rf = receptive_field(spec)  # sizing only; agreement is what tests assert
    side = rf + 32
    x = ad.Tensor(np.zeros((1, spec.in_channels, side, side)), requires_grad=True)
    with ad.tape_scope():
        y = x
        for layer in spec.layers:
            w = ad.Tensor(np.ones((layer.out_channels, y.data.shape[1],
                                   layer.kernel, layer.kernel)))
            y = ad.conv2d(y, w, stride=layer.stride, padding=layer.pad)
        mask = np.zeros_like(y.data)
        cy, cx = y.data.shape[2] // 2, y.data.shape[3] // 2
        mask[0, 0, cy, cx] = 1.0
        loss = ad.tsum(ad.mul(y, ad.Tensor(mask)))
        ad.backward(loss)
    support = np.nonzero(np.abs(x.grad).sum(axis=(0, 1)))
    height = support[0].max() - support[0].min() + 1
    width = support[1].max() - support[1].min() + 1
    if height != width:
        raise SpecError("asymmetric empirical receptive field")
    return int(width)
