"""Minimal deterministic neural-network engine.

Dense and stride-1 1-D convolution / transposed-convolution layers with
exact backpropagation, Adam, and MSE loss: just enough to train the two
autoencoder architectures used for separation. Everything is plain
numpy; given the same seed, data, and hyperparameters, training produces
bit-identical parameters.

Convolutional activations are kept as (batch, width, channels) arrays,
and every layer is evaluated as one im2col + GEMM so the heavy lifting
stays inside BLAS.

Checkpoint format (all little-endian)
-------------------------------------
    magic        4 bytes   b"PDAE"
    version      u32       currently 1
    seed         i64
    encoder_len  u32       number of layers forming the encoder
    input_dim    u32
    n_layers     u32
    per layer:
        kind        u8     0 dense, 1 conv1d, 2 deconv1d
        activation  u8     0 relu, 1 linear
        dims        4*u32  dense: in_size, out_size, 0, 0
                           conv/deconv: in_channels, out_channels, kernel_len, 0
    then, in the same layer order: weight block, bias block, each raw
    float64 little-endian in C order (dense weights are (in, out); conv
    weights (out_ch, in_ch, kernel); deconv weights (in_ch, out_ch, kernel)).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_KIND_CODE = {"dense": 0, "conv1d": 1, "deconv1d": 2}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}
_ACT_CODE = {"relu": 0, "linear": 1}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}


@dataclass
class LayerSpec:
    kind: str
    activation: str
    in_size: int = 0
    out_size: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel_len: int = 1

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in _ACT_CODE:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "dense":
            if self.in_size <= 0 or self.out_size <= 0:
                raise ValueError("dense layer needs positive in_size/out_size")
        else:
            if self.in_channels <= 0 or self.out_channels <= 0:
                raise ValueError("conv layer needs positive channel counts")
            if self.kernel_len < 1:
                raise ValueError("kernel_len must be >= 1")


def _flat_gemm(x: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """(B, W, C) @ (C, K) as one contiguous GEMM."""
    b, w, _ = x.shape
    return (x.reshape(b * w, -1) @ mat).reshape(b, w, -1)


class _Layer:
    """Holds parameters and the spec; subclasses do the math."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, dtype):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        fan_in = (spec.in_size if spec.kind == "dense"
                  else spec.in_channels * spec.kernel_len)
        limit = np.sqrt(6.0 / fan_in)
        self.w = rng.uniform(-limit, limit, self._w_shape()).astype(self.dtype)
        self.b = np.zeros(self._b_len(), dtype=self.dtype)

    def _w_shape(self):
        raise NotImplementedError

    def _b_len(self):
        s = self.spec
        return s.out_size if s.kind == "dense" else s.out_channels

    def _activate(self, z):
        if self.spec.activation == "relu":
            mask = z > 0
            return np.maximum(z, 0.0, out=z), mask
        return z, None

    def _act_backward(self, g, mask):
        # relu subgradient at 0 is 0, so the mask is strictly positive pre-acts
        return np.multiply(g, mask, out=g) if mask is not None else g

    def n_params(self) -> int:
        return self.w.size + self.b.size


class DenseLayer(_Layer):
    def _w_shape(self):
        return (self.spec.in_size, self.spec.out_size)

    def forward(self, x):
        z = x @ self.w + self.b
        out, mask = self._activate(z)
        return out, (x, mask)

    def backward(self, g, cache):
        x, mask = cache
        g = self._act_backward(g, mask)
        gw = x.T @ g
        gb = g.sum(axis=0)
        gx = g @ self.w.T
        return gx, (gw, gb)


class Conv1dLayer(_Layer):
    """Valid cross-correlation, stride 1: width shrinks by kernel_len - 1."""

    def _w_shape(self):
        s = self.spec
        return (s.out_channels, s.in_channels, s.kernel_len)

    def _tap(self, l):
        # w[:, :, l] is strided; BLAS needs a contiguous operand
        return np.ascontiguousarray(self.w[:, :, l])

    def forward(self, x):
        k = self.spec.kernel_len
        wo = x.shape[1] - k + 1
        # per-tap full-width GEMM, then accumulate the shifted slabs
        z = _flat_gemm(x, self._tap(0).T)
        if k > 1:
            z = z[:, 0:wo, :].copy()
            for l in range(1, k):
                z += _flat_gemm(x, self._tap(l).T)[:, l:l + wo, :]
        z += self.b
        out, mask = self._activate(z)
        return out, (x, mask)

    def backward(self, g, cache):
        x, mask = cache
        s = self.spec
        k = s.kernel_len
        wo = g.shape[1]
        g = self._act_backward(g, mask)
        g_flat = g.reshape(-1, s.out_channels)
        gw = np.empty_like(self.w)
        for l in range(k):
            xs = np.ascontiguousarray(x[:, l:l + wo, :]).reshape(-1, s.in_channels)
            gw[:, :, l] = g_flat.T @ xs
        gb = g_flat.sum(axis=0)
        gx = np.zeros_like(x)
        for l in range(k):
            gx[:, l:l + wo, :] += _flat_gemm(g, self._tap(l))
        return gx, (gw, gb)


class Deconv1dLayer(_Layer):
    """Transposed convolution, stride 1: width grows by kernel_len - 1."""

    def _w_shape(self):
        s = self.spec
        return (s.in_channels, s.out_channels, s.kernel_len)

    def _tap(self, l):
        return np.ascontiguousarray(self.w[:, :, l])

    def forward(self, x):
        b, w, _ = x.shape
        k = self.spec.kernel_len
        z = np.zeros((b, w + k - 1, self.spec.out_channels), dtype=x.dtype)
        for l in range(k):
            z[:, l:l + w, :] += _flat_gemm(x, self._tap(l))
        z += self.b
        out, mask = self._activate(z)
        return out, (x, mask)

    def backward(self, g, cache):
        x, mask = cache
        s = self.spec
        k = s.kernel_len
        w_in = x.shape[1]
        g = self._act_backward(g, mask)
        x_flat = x.reshape(-1, s.in_channels)
        gw = np.empty_like(self.w)
        for l in range(k):
            gs = np.ascontiguousarray(g[:, l:l + w_in, :]).reshape(-1, s.out_channels)
            gw[:, :, l] = x_flat.T @ gs
        gb = g.sum(axis=(0, 1))
        gx = _flat_gemm(g, self._tap(0).T)
        if k > 1:
            gx = gx[:, 0:w_in, :].copy()
            for l in range(1, k):
                gx += _flat_gemm(g, self._tap(l).T)[:, l:l + w_in, :]
        return gx, (gw, gb)


def _make_layer(spec: LayerSpec, rng, dtype):
    cls = {"dense": DenseLayer, "conv1d": Conv1dLayer, "deconv1d": Deconv1dLayer}
    return cls[spec.kind](spec, rng, dtype)


@dataclass
class DaeModel:
    """Autoencoder: the first ``encoder_len`` layers encode, the rest decode."""

    layers: list
    encoder_len: int
    input_dim: int
    seed: int
    dtype: np.dtype
    training_stats: list = field(default_factory=list)

    def __post_init__(self):
        self._is_conv = self.layers[0].spec.kind != "dense"
        if self._is_conv:
            width = self.input_dim
            for layer in self.layers[:self.encoder_len]:
                width -= layer.spec.kernel_len - 1
            self.latent_shape = (self.layers[self.encoder_len - 1].spec.out_channels, width)
            self.latent_size = self.latent_shape[0] * self.latent_shape[1]
        else:
            self.latent_shape = None
            self.latent_size = self.layers[self.encoder_len - 1].spec.out_size

    # -- plumbing between flat vectors and layer-shaped activations

    def _to_input(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=self.dtype))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[1]}")
        return x[:, :, None] if self._is_conv else x

    def _latent_flat(self, h: np.ndarray) -> np.ndarray:
        if self._is_conv:
            return h.transpose(0, 2, 1).reshape(h.shape[0], -1)  # channel-major
        return h

    def _latent_unflat(self, lat: np.ndarray) -> np.ndarray:
        lat = np.atleast_2d(np.asarray(lat, dtype=self.dtype))
        if lat.shape[1] != self.latent_size:
            raise ValueError(f"expected latent dim {self.latent_size}, got {lat.shape[1]}")
        if self._is_conv:
            c, w = self.latent_shape
            return lat.reshape(lat.shape[0], c, w).transpose(0, 2, 1)
        return lat

    def _from_output(self, h: np.ndarray) -> np.ndarray:
        return h[:, :, 0] if self._is_conv else h

    def _run(self, layers, h, caches=None):
        for layer in layers:
            h, cache = layer.forward(h)
            if caches is not None:
                caches.append(cache)
        return h

    # -- public API

    def encode(self, x: np.ndarray) -> np.ndarray:
        h = self._run(self.layers[:self.encoder_len], self._to_input(x))
        return self._latent_flat(h)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        h = self._run(self.layers[self.encoder_len:], self._latent_unflat(latent))
        return self._from_output(h)

    def forward(self, x: np.ndarray):
        """Returns (reconstruction, flattened latent) for a batch or vector."""
        h = self._to_input(x)
        h = self._run(self.layers[:self.encoder_len], h)
        latent = self._latent_flat(h)
        h = self._run(self.layers[self.encoder_len:], h)
        return self._from_output(h), latent

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def parameters(self):
        for layer in self.layers:
            yield layer.w
            yield layer.b


def build_dae_f(input_dim: int = 301, seed: int = 0, dtype=np.float64) -> DaeModel:
    """Fully connected autoencoder with a 128-unit bottleneck.

    Hidden widths run 1024, 512, 256, 128, 256, 512, 1024 with relu;
    the output layer is linear.
    """
    if input_dim <= 0:
        raise ValueError("input_dim must be positive")
    widths = [input_dim, 1024, 512, 256, 128, 256, 512, 1024, input_dim]
    rng = np.random.default_rng(seed)
    layers = []
    for k in range(len(widths) - 1):
        act = "linear" if k == len(widths) - 2 else "relu"
        layers.append(_make_layer(
            LayerSpec("dense", act, in_size=widths[k], out_size=widths[k + 1]),
            rng, dtype))
    return DaeModel(layers, encoder_len=4, input_dim=input_dim, seed=seed,
                    dtype=np.dtype(dtype))


def build_dae_c(input_dim: int = 301, seed: int = 0, dtype=np.float64) -> DaeModel:
    """Convolutional autoencoder, valid convs down and transposed convs back up.

    Encoder filter counts 32/16/8 with kernels 4/3/3; the decoder mirrors
    them (kernels 3/3/4) and a final 1-tap layer maps back to one channel,
    so a width-301 input comes back as width 301.
    """
    if input_dim < 8:
        raise ValueError("input_dim must be at least 8 for three valid convolutions")
    enc = [(1, 32, 4), (32, 16, 3), (16, 8, 3)]
    dec = [(8, 8, 3), (8, 16, 3), (16, 32, 4), (32, 1, 1)]
    rng = np.random.default_rng(seed)
    layers = []
    for cin, cout, k in enc:
        layers.append(_make_layer(
            LayerSpec("conv1d", "relu", in_channels=cin, out_channels=cout, kernel_len=k),
            rng, dtype))
    for i, (cin, cout, k) in enumerate(dec):
        act = "linear" if i == len(dec) - 1 else "relu"
        layers.append(_make_layer(
            LayerSpec("deconv1d", act, in_channels=cin, out_channels=cout, kernel_len=k),
            rng, dtype))
    return DaeModel(layers, encoder_len=3, input_dim=input_dim, seed=seed,
                    dtype=np.dtype(dtype))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))


class _Adam:
    def __init__(self, params, lr: float):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - ADAM_BETA1 ** self.t
        b2c = 1.0 - ADAM_BETA2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * np.square(g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)


def _forward_backward(model: DaeModel, batch: np.ndarray):
    """One loss evaluation with gradients for every parameter."""
    caches = []
    h = batch
    for layer in model.layers:
        h, cache = layer.forward(h)
        caches.append(cache)
    diff = h - batch
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    g = (2.0 / diff.size) * diff
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        g, grads[i] = model.layers[i].backward(g, caches[i])
    flat = []
    for gw, gb in grads:
        flat.extend((gw, gb))
    return loss, flat


def train(model: DaeModel, data: np.ndarray, epochs: int = 300, lr: float = 1e-3,
          batch_size: int = 128, improve_tol: float = 1e-6,
          patience: int = 20) -> DaeModel:
    """Adam/MSE training of the autoencoder on its own inputs.

    Per-epoch mean squared error is appended to ``model.training_stats``.
    Stops early once the epoch MSE has not improved by ``improve_tol``
    for ``patience`` consecutive epochs. Raises on non-finite loss.
    """
    data = np.asarray(data, dtype=model.dtype)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("training data must be a nonempty (n, input_dim) matrix")
    n = data.shape[0]
    rng = np.random.default_rng(model.seed)
    params = list(model.parameters())
    opt = _Adam(params, lr)
    best = np.inf
    stale = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch = model._to_input(data[idx])
            loss, grads = _forward_backward(model, batch)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch + 1}")
            opt.step(params, grads)
            total += loss * idx.size
        epoch_mse = total / n
        model.training_stats.append(epoch_mse)
        if epoch_mse < best - improve_tol:
            best = epoch_mse
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return model


def gradient_check(model: DaeModel, x: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error of backprop against central finite differences.

    Perturbs every parameter of the model, so it is restricted to small
    (<= 10k parameter) float64 models.
    """
    if model.n_params() > 10_000:
        raise ValueError("gradient_check is limited to models with <= 10k parameters")
    if model.dtype != np.float64:
        raise ValueError("gradient_check requires a float64 model")
    batch = model._to_input(x)
    _, analytic = _forward_backward(model, batch)

    def loss_at() -> float:
        h = batch
        for layer in model.layers:
            h, _ = layer.forward(h)
        return float(np.mean((h - batch) ** 2))

    worst = 0.0
    params = list(model.parameters())
    for p, g in zip(params, analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            up = loss_at()
            flat_p[i] = orig - step
            dn = loss_at()
            flat_p[i] = orig
            fd = (up - dn) / (2.0 * step)
            denom = max(abs(fd), abs(flat_g[i]), 1e-5)
            worst = max(worst, abs(fd - flat_g[i]) / denom)
    return worst


MAGIC = b"PDAE"
FORMAT_VERSION = 1


def save_model(model: DaeModel, path) -> None:
    """Write the documented binary checkpoint (always float64 blocks)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<q", model.seed))
        fh.write(struct.pack("<III", model.encoder_len, model.input_dim,
                             len(model.layers)))
        for layer in model.layers:
            s = layer.spec
            dims = ((s.in_size, s.out_size, 0, 0) if s.kind == "dense"
                    else (s.in_channels, s.out_channels, s.kernel_len, 0))
            fh.write(struct.pack("<BB4I", _KIND_CODE[s.kind],
                                 _ACT_CODE[s.activation], *dims))
        for layer in model.layers:
            fh.write(np.ascontiguousarray(layer.w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())


def load_model(path, dtype=np.float64) -> DaeModel:
    """Read a checkpoint written by ``save_model``."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path!r} is not a model checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (seed,) = struct.unpack("<q", fh.read(8))
        encoder_len, input_dim, n_layers = struct.unpack("<III", fh.read(12))
        specs = []
        for _ in range(n_layers):
            kind, act, d0, d1, d2, _ = struct.unpack("<BB4I", fh.read(18))
            name = _KIND_NAME[kind]
            if name == "dense":
                specs.append(LayerSpec(name, _ACT_NAME[act], in_size=d0, out_size=d1))
            else:
                specs.append(LayerSpec(name, _ACT_NAME[act], in_channels=d0,
                                       out_channels=d1, kernel_len=d2))
        rng = np.random.default_rng(seed)
        layers = [_make_layer(spec, rng, dtype) for spec in specs]
        for layer in layers:
            for attr in ("w", "b"):
                shape = getattr(layer, attr).shape
                count = int(np.prod(shape))
                block = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
                setattr(layer, attr, block.reshape(shape).astype(dtype))
    return DaeModel(layers, encoder_len=encoder_len, input_dim=input_dim,
                    seed=seed, dtype=np.dtype(dtype))
