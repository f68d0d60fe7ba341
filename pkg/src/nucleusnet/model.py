"""Declarative construction of the sound-classification networks.

A ModelConfig lists typed layer specifications; ``build`` turns one into a
Model with allocated parameters, and the Model orchestrates the forward pass
(recording an activation tape) and the backward pass (populating parameter
gradients). The four standard architectures differ only in their 1D front
end; all share the 2D tail ending in a 1x1 conv over the class channels,
global average pooling, and softmax.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import BuildError, ShapeError
from .optim import glorot_init
from .tensor import Tensor, as_array

ARCH_NAMES = ("inception", "inception_fa", "inception_fi", "inception_bn")

LAYER_KINDS = (
    "conv1d", "conv2d", "relu", "maxpool1d", "maxpool2d", "batchnorm",
    "inception_nucleus", "reshape_to_image", "gap", "softmax",
)

# Exact whole-model parameter totals (including BN running statistics) for
# the standard 10-class configurations.
EXPECTED_TOTALS = {
    "inception": 289_450,
    "inception_fa": 789_162,
    "inception_fi": 593_706,
    "inception_bn": 292_050,
}

_FI_COUNT_NOTE = (
    "literal inception_fi configuration yields 593,706 parameters; the "
    "published total of 479 K is not reproducible from the table as written"
)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class LayerSpec:
    """One typed layer in a ModelConfig.

    ``branches`` (inception_nucleus only) is a list of branches, each an
    ordered list of conv1d LayerSpecs; every branch conv is implicitly
    followed by a ReLU. ``batch_norm`` on a conv inserts a BN layer between
    the conv and any following nonlinearity.
    """

    kind: str
    channels: int | None = None
    kernel: object = None  # int for 1d, (kh, kw) for 2d
    stride: int | None = None
    padding: str = "same"
    batch_norm: bool = False
    momentum: float = 0.9
    epsilon: float = 1e-5
    branches: list | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise BuildError(f"unknown layer kind {self.kind!r}")
        if self.kind == "inception_nucleus":
            if not self.branches or len(self.branches) < 2:
                raise BuildError("inception_nucleus needs at least 2 branches")
            for b, branch in enumerate(self.branches):
                if not branch:
                    raise BuildError(f"inception_nucleus branch {b} is empty")
                for spec in branch:
                    if spec.kind != "conv1d":
                        raise BuildError(
                            f"inception_nucleus branches hold conv1d specs, got {spec.kind!r}"
                        )
        if self.kind == "conv2d" and self.kernel is not None:
            self.kernel = tuple(self.kernel)
        if self.kind == "maxpool2d" and self.kernel is not None:
            self.kernel = tuple(self.kernel)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("conv1d", "conv2d"):
            d["channels"] = self.channels
            d["kernel"] = list(self.kernel) if isinstance(self.kernel, tuple) else self.kernel
            d["stride"] = self.stride
            d["padding"] = self.padding
            d["batch_norm"] = self.batch_norm
            if self.batch_norm:
                d["momentum"] = self.momentum
                d["epsilon"] = self.epsilon
        elif self.kind in ("maxpool1d", "maxpool2d"):
            d["kernel"] = list(self.kernel) if isinstance(self.kernel, tuple) else self.kernel
            d["stride"] = self.stride
        elif self.kind == "batchnorm":
            d["momentum"] = self.momentum
            d["epsilon"] = self.epsilon
        elif self.kind == "inception_nucleus":
            d["branches"] = [[s.to_dict() for s in branch] for branch in self.branches]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        kind = d.pop("kind")
        if "branches" in d:
            d["branches"] = [
                [cls.from_dict(s) for s in branch] for branch in d["branches"]
            ]
        if "kernel" in d and isinstance(d["kernel"], list):
            d["kernel"] = tuple(d["kernel"])
        return cls(kind=kind, **d)


@dataclass
class ModelConfig:
    """Named, ordered layer list plus the class count it maps onto."""

    name: str
    layers: list
    num_classes: int = 10
    expected_param_count: int | None = None
    count_note: str | None = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise BuildError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.layers:
            raise BuildError("config has no layers")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_classes": self.num_classes,
            "layers": [s.to_dict() for s in self.layers],
            "expected_param_count": self.expected_param_count,
            "count_note": self.count_note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            name=d["name"],
            num_classes=d["num_classes"],
            layers=[LayerSpec.from_dict(s) for s in d["layers"]],
            expected_param_count=d.get("expected_param_count"),
            count_note=d.get("count_note"),
        )


def _conv1(ch, k, s, bn=False):
    return LayerSpec("conv1d", channels=ch, kernel=k, stride=s, batch_norm=bn)


def _conv2(ch, k, s, bn=False):
    return LayerSpec("conv2d", channels=ch, kernel=k, stride=s, batch_norm=bn)


def _nucleus(branch_defs, bn=False):
    branches = [[_conv1(ch, k, s, bn) for (ch, k, s) in bd] for bd in branch_defs]
    return LayerSpec("inception_nucleus", branches=branches)


def standard_config(name: str, num_classes: int = 10) -> ModelConfig:
    """One of the four published architectures.

    Stacked "x2" branch convolutions apply the listed stride on the first
    conv and stride 1 on the repeat, so every branch of a nucleus reaches
    the same temporal length and channel-wise concatenation stays legal.
    """
    if name not in ARCH_NAMES:
        raise BuildError(
            f"unknown architecture {name!r}; valid names: {', '.join(ARCH_NAMES)}"
        )
    bn = name == "inception_bn"
    layers = []
    if name == "inception_fi":
        layers.append(_nucleus([
            [(32, 60, 4)],
            [(32, 80, 4), (32, 80, 1)],
            [(32, 100, 4), (32, 100, 1)],
        ]))
    else:
        layers += [_conv1(32, 80, 4, bn), LayerSpec("relu")]
    if name == "inception_fa":
        layers.append(_nucleus([
            [(64, 20, 4)],
            [(64, 40, 4), (64, 40, 1)],
            [(64, 60, 4), (64, 60, 1)],
        ]))
    else:
        layers.append(_nucleus([
            [(64, 4, 4)],
            [(64, 8, 4), (64, 8, 1)],
            [(64, 16, 4), (64, 16, 1)],
        ], bn))
    layers += [
        LayerSpec("maxpool1d", kernel=10, stride=1),
        LayerSpec("reshape_to_image"),
        _conv2(32, (3, 3), 1, bn), LayerSpec("relu"),
        LayerSpec("maxpool2d", kernel=(2, 2), stride=2),
        _conv2(64, (3, 3), 1, bn), LayerSpec("relu"),
        _conv2(64, (3, 3), 1, bn), LayerSpec("relu"),
        LayerSpec("maxpool2d", kernel=(2, 2), stride=2),
        _conv2(128, (3, 3), 1, bn), LayerSpec("relu"),
        LayerSpec("maxpool2d", kernel=(2, 2), stride=2),
        _conv2(num_classes, (1, 1), 1, bn),
        LayerSpec("gap"),
        LayerSpec("softmax"),
    ]
    expected = EXPECTED_TOTALS.get(name) if num_classes == 10 else None
    note = _FI_COUNT_NOTE if name == "inception_fi" else None
    return ModelConfig(name=name, layers=layers, num_classes=num_classes,
                       expected_param_count=expected, count_note=note)


def miniature_config(num_classes: int = 4, batch_norm: bool = False) -> ModelConfig:
    """Scaled-down inception for fast gradient checks and overfit tests.

    Same topology as the full network (conv stem, 3-branch nucleus with
    stacked branches, 1D pool, 2D tail) with small channel counts and
    kernels; admissible from a few hundred input samples.
    """
    bn = batch_norm
    layers = [
        _conv1(8, 9, 4, bn), LayerSpec("relu"),
        _nucleus([
            [(8, 3, 4)],
            [(8, 5, 4), (8, 5, 1)],
            [(8, 7, 4), (8, 7, 1)],
        ], bn),
        LayerSpec("maxpool1d", kernel=4, stride=1),
        LayerSpec("reshape_to_image"),
        _conv2(4, (3, 3), 1, bn), LayerSpec("relu"),
        LayerSpec("maxpool2d", kernel=(2, 2), stride=2),
        _conv2(8, (3, 3), 1, bn), LayerSpec("relu"),
        _conv2(8, (3, 3), 1, bn), LayerSpec("relu"),
        LayerSpec("maxpool2d", kernel=(2, 2), stride=2),
        _conv2(16, (3, 3), 1, bn), LayerSpec("relu"),
        LayerSpec("maxpool2d", kernel=(2, 2), stride=2),
        _conv2(num_classes, (1, 1), 1, bn),
        LayerSpec("gap"),
        LayerSpec("softmax"),
    ]
    name = "inception_mini_bn" if bn else "inception_mini"
    return ModelConfig(name=name, layers=layers, num_classes=num_classes)


# ---------------------------------------------------------------------------
# parameter store


@dataclass
class Param:
    name: str
    value: Tensor
    grad: Tensor | None
    trainable: bool
    kind: str


class ParamStore:
    """Named, ordered parameters with gradients; iteration is definition order."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name, value, trainable=True, kind="other") -> Param:
        if name in self._params:
            raise BuildError(f"duplicate parameter name {name!r}")
        p = Param(name=name, value=Tensor(value), grad=None, trainable=trainable, kind=kind)
        self._params[name] = p
        return p

    def __contains__(self, name) -> bool:
        return name in self._params

    def __getitem__(self, name) -> Param:
        return self._params[name]

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def trainable(self):
        return (p for p in self._params.values() if p.trainable)

    def param_count(self, include_non_trainable: bool = False) -> int:
        return sum(
            p.value.size for p in self._params.values()
            if include_non_trainable or p.trainable
        )

    def clear_grads(self):
        for p in self._params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# layer implementations


class _Conv1D:
    def __init__(self, name, spec, in_ch, store, rng, dtype):
        self.name = name
        self.stride = spec.stride
        self.padding = spec.padding
        self.in_ch = in_ch
        self.out_ch = spec.channels
        k = spec.kernel
        self.kernel = k
        w = glorot_init((spec.channels, in_ch, k), in_ch * k, spec.channels * k, rng, dtype)
        self._w = store.add(f"{name}.weight", w, kind="conv_weight")
        self._b = store.add(f"{name}.bias", np.zeros(spec.channels, dtype=dtype), kind="bias")

    def forward(self, x, mode):
        y = ops.conv1d_forward_array(x, self._w.value.array, self._b.value.array,
                                     self.stride, self.padding)
        return y, x

    def backward(self, gout, cache):
        gx, gw, gb = ops.conv1d_backward_array(cache, self._w.value.array,
                                               self.stride, self.padding, gout)
        self._w.grad = Tensor(gw)
        self._b.grad = Tensor(gb)
        return gx


class _Conv2D:
    def __init__(self, name, spec, in_ch, store, rng, dtype):
        self.name = name
        self.stride = spec.stride
        self.padding = spec.padding
        self.in_ch = in_ch
        self.out_ch = spec.channels
        kh, kw = spec.kernel
        self.kernel = (kh, kw)
        w = glorot_init((spec.channels, in_ch, kh, kw), in_ch * kh * kw,
                        spec.channels * kh * kw, rng, dtype)
        self._w = store.add(f"{name}.weight", w, kind="conv_weight")
        self._b = store.add(f"{name}.bias", np.zeros(spec.channels, dtype=dtype), kind="bias")

    def forward(self, x, mode):
        y = ops.conv2d_forward_array(x, self._w.value.array, self._b.value.array,
                                     self.stride, self.padding)
        return y, x

    def backward(self, gout, cache):
        gx, gw, gb = ops.conv2d_backward_array(cache, self._w.value.array,
                                               self.stride, self.padding, gout)
        self._w.grad = Tensor(gw)
        self._b.grad = Tensor(gb)
        return gx


class _ReLU:
    name = "relu"

    def forward(self, x, mode):
        y = ops.relu_forward_array(x)
        return y, y  # mask recoverable from the output: y > 0 iff x > 0

    def backward(self, gout, cache):
        return ops.relu_backward_array(cache, gout)


class _MaxPool1D:
    def __init__(self, name, spec):
        self.name = name
        self.kernel = spec.kernel
        self.stride = spec.stride

    def forward(self, x, mode):
        y, arg = ops.maxpool1d_forward_array(x, self.kernel, self.stride, return_argmax=True)
        return y, (x.shape, arg, x.dtype)

    def backward(self, gout, cache):
        shape, arg, dtype = cache
        return ops.maxpool1d_backward_array(shape, self.kernel, self.stride, arg, gout, dtype)


class _MaxPool2D:
    def __init__(self, name, spec):
        self.name = name
        self.kernel = spec.kernel
        self.stride = spec.stride

    def forward(self, x, mode):
        y, arg = ops.maxpool2d_forward_array(x, self.kernel, self.stride, return_argmax=True)
        return y, (x.shape, arg, x.dtype)

    def backward(self, gout, cache):
        shape, arg, dtype = cache
        return ops.maxpool2d_backward_array(shape, self.kernel, self.stride, arg, gout, dtype)


class _BatchNorm:
    def __init__(self, name, channels, momentum, epsilon, store, dtype):
        self.name = name
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.initialized = False
        self._gamma = store.add(f"{name}.gamma", np.ones(channels, dtype=dtype), kind="bn_gamma")
        self._beta = store.add(f"{name}.beta", np.zeros(channels, dtype=dtype), kind="bn_beta")
        self._rmean = store.add(f"{name}.running_mean", np.zeros(channels, dtype=dtype),
                                trainable=False, kind="bn_running")
        self._rvar = store.add(f"{name}.running_var", np.ones(channels, dtype=dtype),
                               trainable=False, kind="bn_running")

    def set_running_stats(self, mean, var):
        self._rmean.value = Tensor(np.asarray(mean, dtype=self._rmean.value.dtype))
        self._rvar.value = Tensor(np.asarray(var, dtype=self._rvar.value.dtype))
        self.initialized = True

    def forward(self, x, mode):
        gamma = self._gamma.value.array
        beta = self._beta.value.array
        if mode == "train":
            y, mean, var, cache = ops.batchnorm_train_array(x, gamma, beta, self.epsilon)
            mom = np.asarray(self.momentum, dtype=x.dtype)
            self._rmean.value = Tensor(mom * self._rmean.value.array + (1 - mom) * mean)
            self._rvar.value = Tensor(mom * self._rvar.value.array + (1 - mom) * var)
            self.initialized = True
            return y, ("train", cache)
        if not self.initialized:
            raise ValueError(f"{self.name}: uninitialized running statistics")
        y = ops.batchnorm_infer_array(x, gamma, beta, self._rmean.value.array,
                                      self._rvar.value.array, self.epsilon)
        return y, ("infer", x)

    def backward(self, gout, cache):
        tag, payload = cache
        if tag == "train":
            dx, dgamma, dbeta = ops.batchnorm_backward_train_array(payload, gout)
        else:
            dx, dgamma, dbeta = ops.batchnorm_backward_infer_array(
                payload, self._gamma.value.array, self._rmean.value.array,
                self._rvar.value.array, self.epsilon, gout,
            )
        self._gamma.grad = Tensor(dgamma)
        self._beta.grad = Tensor(dbeta)
        return dx


class _InceptionNucleus:
    """Parallel 1D conv branches concatenated channel-wise."""

    def __init__(self, name, branches):
        self.name = name
        self.branches = branches  # list of lists of layer objects

    def forward(self, x, mode):
        outs, caches, lengths = [], [], []
        for branch in self.branches:
            h = x
            bcache = []
            for layer in branch:
                h, c = layer.forward(h, mode)
                bcache.append(c)
            outs.append(h)
            caches.append(bcache)
            lengths.append(h.shape[2])
        if len(set(lengths)) != 1:
            raise ShapeError(f"{self.name}: branch output lengths differ: {lengths}")
        y = np.concatenate(outs, axis=1)
        splits = np.cumsum([o.shape[1] for o in outs])[:-1]
        return y, (caches, splits)

    def backward(self, gout, cache):
        caches, splits = cache
        parts = np.split(gout, splits, axis=1)
        gx = None
        for branch, bcache, g in zip(self.branches, caches, parts):
            g = np.ascontiguousarray(g)
            for layer, c in zip(reversed(branch), reversed(bcache)):
                g = layer.backward(g, c)
            gx = g if gx is None else gx + g
        return gx


class _ReshapeToImage:
    name = "reshape"

    def forward(self, x, mode):
        n, c, length = x.shape
        return x.reshape(n, 1, c, length), (n, c, length)

    def backward(self, gout, cache):
        return gout.reshape(cache)


class _GAP:
    name = "gap"

    def forward(self, x, mode):
        return ops.gap_forward_array(x), x.shape

    def backward(self, gout, cache):
        return ops.gap_backward_array(cache, gout)


class _Softmax:
    name = "softmax"

    def forward(self, x, mode):
        return ops.softmax_array(x), x  # cache = logits

    def backward(self, gout, cache):
        raise RuntimeError("softmax layer has no backward; train against logits")


# ---------------------------------------------------------------------------
# shape simulation (used for validation and minimum-length computation)


def _simulate(config: ModelConfig, length: int):
    """Final output shape for a 1 x length input, or None if inadmissible."""
    stage, ch, dims = "1d", 1, (length,)

    def conv1d_len(L, spec):
        if spec.padding == "valid" and L < spec.kernel:
            return None
        out = ops.conv_out_len(L, spec.kernel, spec.stride, spec.padding)
        return out if out >= 1 else None

    for spec in config.layers:
        kind = spec.kind
        if kind in ("relu", "batchnorm", "softmax"):
            continue
        if kind == "conv1d":
            if stage != "1d":
                return None
            out = conv1d_len(dims[0], spec)
            if out is None:
                return None
            ch, dims = spec.channels, (out,)
        elif kind == "inception_nucleus":
            if stage != "1d":
                return None
            lens, chans = set(), 0
            for branch in spec.branches:
                L = dims[0]
                for cspec in branch:
                    L = conv1d_len(L, cspec)
                    if L is None:
                        return None
                lens.add(L)
                chans += branch[-1].channels
            if len(lens) != 1:
                return None
            ch, dims = chans, (lens.pop(),)
        elif kind == "maxpool1d":
            if stage != "1d" or dims[0] < spec.kernel:
                return None
            dims = (ops.pool_out_len(dims[0], spec.kernel, spec.stride),)
        elif kind == "reshape_to_image":
            if stage != "1d":
                return None
            stage, ch, dims = "2d", 1, (ch, dims[0])
        elif kind == "conv2d":
            if stage != "2d":
                return None
            kh, kw = spec.kernel
            if spec.padding == "valid" and (dims[0] < kh or dims[1] < kw):
                return None
            h = ops.conv_out_len(dims[0], kh, spec.stride, spec.padding)
            w = ops.conv_out_len(dims[1], kw, spec.stride, spec.padding)
            if h < 1 or w < 1:
                return None
            ch, dims = spec.channels, (h, w)
        elif kind == "maxpool2d":
            kh, kw = spec.kernel
            if stage != "2d" or dims[0] < kh or dims[1] < kw:
                return None
            dims = (ops.pool_out_len(dims[0], kh, spec.stride),
                    ops.pool_out_len(dims[1], kw, spec.stride))
        elif kind == "gap":
            if stage != "2d":
                return None
            stage, dims = "vec", ()
    return (ch,) + dims if stage == "vec" else None


def minimum_input_length(config: ModelConfig) -> int:
    """Smallest L for which the architecture produces a class vector."""
    hi = 1
    while _simulate(config, hi) is None:
        hi *= 2
        if hi > 2 ** 26:
            raise BuildError(f"{config.name}: no admissible input length found")
    lo = hi // 2
    while lo + 1 < hi:  # admissibility is monotone in L
        mid = (lo + hi) // 2
        if _simulate(config, mid) is None:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# model


@dataclass
class Tape:
    """Activations retained by one forward pass, consumed by backward."""

    caches: list
    logits: np.ndarray
    batch_size: int
    model: object = None


class Model:
    """A built network: config, parameter store, and executable layers."""

    def __init__(self, config, store, layers, dtype, final_conv_index):
        self.config = config
        self.store = store
        self.layers = layers
        self.dtype = np.dtype(dtype)
        self._final_conv_index = final_conv_index
        self._min_length = minimum_input_length(config)
        self.has_batchnorm = any(
            isinstance(l, _BatchNorm) for l in self._iter_layers()
        )

    def _iter_layers(self):
        for layer in self.layers:
            if isinstance(layer, _InceptionNucleus):
                for branch in layer.branches:
                    yield from branch
            yield layer

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def min_input_length(self) -> int:
        return self._min_length

    def batchnorm_layers(self):
        return [l for l in self._iter_layers() if isinstance(l, _BatchNorm)]

    def _check_input(self, xs):
        if xs.ndim != 3 or xs.shape[1] != 1:
            raise ShapeError(f"expected input of shape (batch, 1, length), got {xs.shape}")
        if xs.shape[2] < self._min_length:
            raise ShapeError(
                f"input length {xs.shape[2]} is below the minimum {self._min_length} "
                f"required by architecture {self.config.name!r}"
            )

    def _run(self, xs, mode, keep_tape):
        xs = np.ascontiguousarray(as_array(xs), dtype=self.dtype)
        self._check_input(xs)
        caches = [] if keep_tape else None
        x = xs
        logits = None
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(x, mode)
            if i == len(self.layers) - 1:
                logits = cache
            if keep_tape:
                caches.append(cache)
        return x, logits, caches

    def forward_batch(self, xs, mode="infer"):
        """Forward an (n, 1, L) batch; returns (probabilities (n, k), Tape)."""
        probs, logits, caches = self._run(xs, mode, keep_tape=True)
        return probs, Tape(caches=caches, logits=logits, batch_size=probs.shape[0],
                           model=self)

    def logits_batch(self, xs, mode="infer") -> np.ndarray:
        """Forward without retaining activations; returns pre-softmax logits."""
        _, logits, _ = self._run(xs, mode, keep_tape=False)
        return logits

    def forward(self, x, mode="infer"):
        """Forward a single (1, L) waveform; returns (probabilities (k,), Tape)."""
        a = as_array(x)
        if a.ndim != 2:
            raise ShapeError(f"expected a (1, length) waveform, got shape {a.shape}")
        probs, tape = self.forward_batch(a[None], mode=mode)
        return Tensor(probs[0]), tape

    def backward(self, tape: Tape, grad_logits) -> None:
        """Populate parameter gradients from the gradient wrt the logits.

        Gradients overwrite whatever a previous backward left in the store.
        """
        if not isinstance(tape, Tape) or tape.model is not self:
            raise ShapeError("tape/model mismatch: tape was not produced by this model")
        g = as_array(grad_logits)
        if g.ndim == 1:
            g = g[None]
        if g.shape != tape.logits.shape:
            raise ShapeError(
                f"grad shape {g.shape} does not match logits shape {tape.logits.shape}"
            )
        g = np.ascontiguousarray(g, dtype=self.dtype)
        for layer, cache in zip(reversed(self.layers[:-1]), reversed(tape.caches[:-1])):
            g = layer.backward(g, cache)

    def features_batch(self, xs) -> np.ndarray:
        """Penultimate embeddings: spatial mean of the final conv's input."""
        xs = np.ascontiguousarray(as_array(xs), dtype=self.dtype)
        self._check_input(xs)
        x = xs
        for layer in self.layers[: self._final_conv_index]:
            x, _ = layer.forward(x, "infer")
        return x.mean(axis=(2, 3))

    def penultimate_features(self, x) -> Tensor:
        a = as_array(x)
        return Tensor(self.features_batch(a[None])[0])

    def kink_margin(self, xs, mode="train") -> float:
        """Distance of this forward pass from the nearest non-smooth point.

        Minimum over (a) |pre-activation| at every ReLU and (b) the gap
        between the top two values of every max-pool window whose max is
        positive (windows of all-clamped zeros stay flat under small
        perturbations, so they are excluded). Finite-difference gradient
        checks are only trustworthy when this margin is well above the
        probe step size.
        """
        xs = np.ascontiguousarray(as_array(xs), dtype=self.dtype)
        self._check_input(xs)
        margin = [np.inf]

        def pool_gap(win_flat):
            # Gap between a window's max and its largest strictly smaller
            # value, over windows with positive max. Exact duplicates of the
            # max are overwhelmingly copies of one upstream activation (runs
            # produced by stride-1 pooling); they move together under any
            # perturbation, so they do not make the pass non-smooth.
            mx = win_flat.max(axis=-1, keepdims=True)
            below = np.where(win_flat < mx, win_flat, -np.inf).max(axis=-1)
            gaps = (mx[..., 0] - below)[(mx[..., 0] > 0) & np.isfinite(below)]
            if gaps.size:
                margin[0] = min(margin[0], float(gaps.min()))

        def visit(layer, x):
            if isinstance(layer, _ReLU):
                margin[0] = min(margin[0], float(np.abs(x).min()))
            elif isinstance(layer, _MaxPool1D):
                out = ops.pool_out_len(x.shape[2], layer.kernel, layer.stride)
                win = ops._windows1d(x, layer.kernel, layer.stride, out)
                pool_gap(win.transpose(0, 1, 3, 2))
            elif isinstance(layer, _MaxPool2D):
                kh, kw = layer.kernel
                oh = ops.pool_out_len(x.shape[2], kh, layer.stride)
                ow = ops.pool_out_len(x.shape[3], kw, layer.stride)
                win = ops._windows2d(x, kh, kw, layer.stride, oh, ow)
                win = win.transpose(0, 1, 4, 5, 2, 3)
                pool_gap(win.reshape(win.shape[:4] + (kh * kw,)))

        def walk(layers, x):
            for layer in layers:
                if isinstance(layer, _InceptionNucleus):
                    x = np.concatenate([walk(b, x) for b in layer.branches], axis=1)
                else:
                    visit(layer, x)
                    x, _ = layer.forward(x, mode)
            return x

        walk(self.layers, xs)
        return margin[0]

    def count_params(self, include_non_trainable: bool = False) -> int:
        return self.store.param_count(include_non_trainable)

    def first_conv1d_weight_name(self) -> str:
        for p in self.store:
            if p.kind == "conv_weight" and p.value.ndim == 3:
                return p.name
        raise BuildError("model has no conv1d layer")


def count_params(model: Model, include_non_trainable: bool = False) -> int:
    return model.count_params(include_non_trainable)


# ---------------------------------------------------------------------------
# builder


class _BuildState:
    def __init__(self, store, rng, dtype):
        self.store = store
        self.rng = rng
        self.dtype = dtype
        self.counters = {}

    def next_name(self, prefix):
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        return f"{prefix}{self.counters[prefix]}"


def _build_conv1d(spec, in_ch, name, st):
    conv = _Conv1D(name, spec, in_ch, st.store, st.rng, st.dtype)
    layers = [conv]
    if spec.batch_norm:
        layers.append(_BatchNorm(f"{name}.bn", spec.channels, spec.momentum,
                                 spec.epsilon, st.store, st.dtype))
    return layers


def build(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Allocate and glorot-initialize a Model from its configuration.

    Channel arithmetic is chained through the layer list; any inconsistency
    (wrong stage, dangling tail) raises BuildError naming the layer. The
    required tail is conv2d(num_classes, 1x1) -> gap -> softmax.
    """
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise BuildError(f"unsupported dtype {dtype}; use float32 or float64")
    store = ParamStore()
    st = _BuildState(store, np.random.default_rng(seed), dtype)
    layers = []
    stage, ch = "1d", 1
    final_conv_index = None

    for spec in config.layers:
        kind = spec.kind
        if kind == "conv1d":
            if stage != "1d":
                raise BuildError(f"conv1d cannot appear in the {stage} stage")
            name = st.next_name("conv")
            layers.extend(_build_conv1d(spec, ch, name, st))
            ch = spec.channels
        elif kind == "inception_nucleus":
            if stage != "1d":
                raise BuildError(f"inception_nucleus cannot appear in the {stage} stage")
            nname = st.next_name("nucleus")
            branches = []
            out_ch = 0
            for bi, bspecs in enumerate(spec.branches, start=1):
                bch = ch
                blayers = []
                for ci, cspec in enumerate(bspecs, start=1):
                    blayers.extend(
                        _build_conv1d(cspec, bch, f"{nname}.branch{bi}.conv{ci}", st)
                    )
                    blayers.append(_ReLU())
                    bch = cspec.channels
                branches.append(blayers)
                out_ch += bch
            layers.append(_InceptionNucleus(nname, branches))
            ch = out_ch
        elif kind == "relu":
            layers.append(_ReLU())
        elif kind == "maxpool1d":
            if stage != "1d":
                raise BuildError(f"maxpool1d cannot appear in the {stage} stage")
            layers.append(_MaxPool1D(st.next_name("pool"), spec))
        elif kind == "reshape_to_image":
            if stage != "1d":
                raise BuildError(f"reshape_to_image cannot appear in the {stage} stage")
            layers.append(_ReshapeToImage())
            stage, ch = "2d", 1
        elif kind == "conv2d":
            if stage != "2d":
                raise BuildError(f"conv2d cannot appear in the {stage} stage")
            name = st.next_name("conv")
            conv = _Conv2D(name, spec, ch, st.store, st.rng, st.dtype)
            final_conv_index = len(layers)
            layers.append(conv)
            if spec.batch_norm:
                layers.append(_BatchNorm(f"{name}.bn", spec.channels, spec.momentum,
                                         spec.epsilon, st.store, st.dtype))
            ch = spec.channels
        elif kind == "maxpool2d":
            if stage != "2d":
                raise BuildError(f"maxpool2d cannot appear in the {stage} stage")
            layers.append(_MaxPool2D(st.next_name("pool"), spec))
        elif kind == "batchnorm":
            if stage == "vec":
                raise BuildError("batchnorm cannot appear after gap")
            layers.append(_BatchNorm(st.next_name("bn"), ch, spec.momentum,
                                     spec.epsilon, st.store, st.dtype))
        elif kind == "gap":
            if stage != "2d":
                raise BuildError(f"gap cannot appear in the {stage} stage")
            layers.append(_GAP())
            stage = "vec"
        elif kind == "softmax":
            if stage != "vec":
                raise BuildError("softmax must follow gap")
            layers.append(_Softmax())
            stage = "probs"

    if stage != "probs":
        raise BuildError("config must end with gap followed by softmax")
    if final_conv_index is None or ch != config.num_classes:
        raise BuildError(
            f"last conv2d must emit num_classes={config.num_classes} channels, got {ch}"
        )

    model = Model(config, store, layers, dtype, final_conv_index)
    expected = config.expected_param_count
    if expected is not None:
        total = model.count_params(include_non_trainable=True)
        if total != expected:
            warnings.warn(
                f"{config.name}: parameter count {total} does not match "
                f"expected {expected}",
                stacklevel=2,
            )
    return model
