"""From-scratch 1D convolution/transposed-convolution network with backprop.

All arithmetic is 64-bit. Convolution uses the cross-correlation convention
(no kernel flip) with zero padding; gradients are exact, and the transposed
layer is the adjoint of the convolution with the mirrored length formula.
Heavy paths reshape windows into matrices so the work lands in BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core_types import ComponentId

WINDOW = 100


class Strategy(Enum):
    DIRECT = "direct"
    NOISE_RESIDUAL = "noise_residual"


# ---------------------------------------------------------------------------
# Layers


@dataclass
class Conv1dLayer:
    """Strided 1D cross-correlation with zero padding.

    kernel has shape (out_ch, in_ch, k); output length is
    floor((L_in + 2*padding - k) / stride) + 1.
    """

    in_ch: int
    out_ch: int
    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    kind = "conv"

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        shape = self.kernel.shape
        if len(shape) != 3 or shape[0] != self.out_ch or shape[1] != self.in_ch:
            raise ValueError(f"kernel shape {shape} inconsistent with channels")
        if self.bias.shape != (self.out_ch,):
            raise ValueError(f"bias shape {self.bias.shape} != ({self.out_ch},)")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")

    @property
    def k(self) -> int:
        return self.kernel.shape[2]

    def out_len(self, length: int) -> int:
        n = (length + 2 * self.padding - self.k) // self.stride + 1
        if n < 1:
            raise ValueError(f"input length {length} too short for this layer")
        return n


@dataclass
class TConv1dLayer:
    """Transposed counterpart of Conv1dLayer.

    Output length is (L_in - 1)*stride - 2*padding + k + output_padding.
    """

    in_ch: int
    out_ch: int
    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    output_padding: int = 0

    kind = "tconv"

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        k = self.kernel.shape
        if len(k) != 3 or k[0] != self.out_ch or k[1] != self.in_ch:
            raise ValueError(f"kernel shape {k} inconsistent with channels")
        if self.bias.shape != (self.out_ch,):
            raise ValueError(f"bias shape {self.bias.shape} != ({self.out_ch},)")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        if not (0 <= self.output_padding < self.stride):
            raise ValueError("output_padding must lie in [0, stride)")

    @property
    def k(self) -> int:
        return self.kernel.shape[2]

    def out_len(self, length: int) -> int:
        n = (length - 1) * self.stride - 2 * self.padding + self.k + self.output_padding
        if n < 1:
            raise ValueError(f"input length {length} too short for this layer")
        return n


# ---------------------------------------------------------------------------
# Batched kernels (B, ch, L); the public single-example ops wrap these.


def _conv_cols(layer: Conv1dLayer, x: np.ndarray) -> np.ndarray:
    """im2col matrix of shape (B * L_out, in_ch * k)."""
    b, _, length = x.shape
    n_out = layer.out_len(length)
    xp = np.pad(x, ((0, 0), (0, 0), (layer.padding, layer.padding)))
    win = sliding_window_view(xp, layer.k, axis=2)[:, :, :: layer.stride, :]
    win = win[:, :, :n_out, :]
    return win.transpose(0, 2, 1, 3).reshape(b * n_out, layer.in_ch * layer.k)


def _conv_forward(layer: Conv1dLayer, x: np.ndarray):
    b, _, length = x.shape
    n_out = layer.out_len(length)
    cols = _conv_cols(layer, x)
    w = layer.kernel.reshape(layer.out_ch, -1)
    y = cols @ w.T
    y = y.reshape(b, n_out, layer.out_ch).transpose(0, 2, 1) + layer.bias[None, :, None]
    return y, cols


def _conv_backward(layer: Conv1dLayer, x_shape, cols, grad_out):
    b, _, length = x_shape
    n_out = grad_out.shape[2]
    g2 = grad_out.transpose(0, 2, 1).reshape(b * n_out, layer.out_ch)
    grad_bias = grad_out.sum(axis=(0, 2))
    grad_kernel = (g2.T @ cols).reshape(layer.kernel.shape)
    gcols = (g2 @ layer.kernel.reshape(layer.out_ch, -1)).reshape(
        b, n_out, layer.in_ch, layer.k
    )
    gcols = gcols.transpose(0, 2, 1, 3)
    gxp = np.zeros((b, layer.in_ch, length + 2 * layer.padding))
    span = (n_out - 1) * layer.stride + 1
    for t in range(layer.k):
        gxp[:, :, t : t + span : layer.stride] += gcols[:, :, :, t]
    grad_input = gxp[:, :, layer.padding : layer.padding + length]
    return grad_input, grad_kernel, grad_bias


def _tconv_full_len(layer: TConv1dLayer, length: int) -> int:
    return (length - 1) * layer.stride + layer.k


def _tconv_forward(layer: TConv1dLayer, x: np.ndarray):
    b, _, length = x.shape
    n_out = layer.out_len(length)
    full_len = _tconv_full_len(layer, length)
    x2 = x.transpose(0, 2, 1).reshape(b * length, layer.in_ch)
    kt = layer.kernel.transpose(1, 0, 2).reshape(layer.in_ch, layer.out_ch * layer.k)
    contrib = (x2 @ kt).reshape(b, length, layer.out_ch, layer.k).transpose(0, 2, 1, 3)
    full = np.zeros((b, layer.out_ch, full_len))
    span = (length - 1) * layer.stride + 1
    for t in range(layer.k):
        full[:, :, t : t + span : layer.stride] += contrib[:, :, :, t]
    y = np.zeros((b, layer.out_ch, n_out))
    avail = min(full_len - layer.padding, n_out)
    if avail > 0:
        y[:, :, :avail] = full[:, :, layer.padding : layer.padding + avail]
    y += layer.bias[None, :, None]
    return y, x2


def _tconv_grad_full(layer: TConv1dLayer, length: int, grad_out: np.ndarray) -> np.ndarray:
    """grad_out moved into the unpadded scatter buffer coordinates."""
    b = grad_out.shape[0]
    full_len = _tconv_full_len(layer, length)
    g_full = np.zeros((b, layer.out_ch, full_len))
    avail = min(full_len - layer.padding, grad_out.shape[2])
    if avail > 0:
        g_full[:, :, layer.padding : layer.padding + avail] = grad_out[:, :, :avail]
    return g_full


def _tconv_backward(layer: TConv1dLayer, x2, x_shape, grad_out):
    b, _, length = x_shape
    g_full = _tconv_grad_full(layer, length, grad_out)
    gwin = sliding_window_view(g_full, layer.k, axis=2)[:, :, :: layer.stride, :]
    gwin = gwin[:, :, :length, :]
    gcols = gwin.transpose(0, 2, 1, 3).reshape(b * length, layer.out_ch * layer.k)
    kt = layer.kernel.transpose(1, 0, 2).reshape(layer.in_ch, layer.out_ch * layer.k)
    grad_input = (gcols @ kt.T).reshape(b, length, layer.in_ch).transpose(0, 2, 1)
    grad_kernel = (x2.T @ gcols).reshape(
        layer.in_ch, layer.out_ch, layer.k
    ).transpose(1, 0, 2)
    grad_bias = grad_out.sum(axis=(0, 2))
    return grad_input, grad_kernel, grad_bias


# ---------------------------------------------------------------------------
# Spec surface: single-example operations


def _check_single(layer, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != layer.in_ch:
        raise ValueError(f"input shape {x.shape} != ({layer.in_ch}, L)")
    return x


def conv1d_forward(layer: Conv1dLayer, x) -> np.ndarray:
    x = _check_single(layer, x)
    y, _ = _conv_forward(layer, x[None])
    return y[0]


def conv1d_backward(layer: Conv1dLayer, x, grad_out):
    x = _check_single(layer, x)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    expected = (layer.out_ch, layer.out_len(x.shape[1]))
    if grad_out.shape != expected:
        raise ValueError(f"grad_out shape {grad_out.shape} != {expected}")
    cols = _conv_cols(layer, x[None])
    gx, gk, gb = _conv_backward(layer, (1,) + x.shape, cols, grad_out[None])
    return gx[0], gk, gb


def tconv1d_forward(layer: TConv1dLayer, x) -> np.ndarray:
    x = _check_single(layer, x)
    y, _ = _tconv_forward(layer, x[None])
    return y[0]


def tconv1d_backward(layer: TConv1dLayer, x, grad_out):
    x = _check_single(layer, x)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    expected = (layer.out_ch, layer.out_len(x.shape[1]))
    if grad_out.shape != expected:
        raise ValueError(f"grad_out shape {grad_out.shape} != {expected}")
    xb = x[None]
    x2 = xb.transpose(0, 2, 1).reshape(-1, layer.in_ch)
    gx, gk, gb = _tconv_backward(layer, x2, xb.shape, grad_out[None])
    return gx[0], gk, gb


# ---------------------------------------------------------------------------
# Network


@dataclass
class DenoiserNetwork:
    """Fully convolutional encoder/decoder: three conv then three tconv layers.

    ReLU follows every layer except the last; a 1 x WINDOW input maps to a
    1 x WINDOW output.
    """

    layers: list
    channel_plan: tuple
    kernel_size: int

    def forward(self, window) -> np.ndarray:
        x = np.asarray(window, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape != (1, WINDOW):
            raise ValueError(f"expected input shape (1, {WINDOW}), got {x.shape}")
        return self.forward_batch(x[None])[0]

    def forward_batch(self, xb: np.ndarray) -> np.ndarray:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv":
                xb, _ = _conv_forward(layer, xb)
            else:
                xb, _ = _tconv_forward(layer, xb)
            if i != last:
                np.maximum(xb, 0.0, out=xb)
        return xb

    def forward_batch_cached(self, xb: np.ndarray):
        """Forward pass keeping what the backward pass needs per layer."""
        caches = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x_shape = xb.shape
            if layer.kind == "conv":
                cols = _conv_cols(layer, xb)
                w = layer.kernel.reshape(layer.out_ch, -1)
                y = cols @ w.T
                b, n_out = x_shape[0], layer.out_len(x_shape[2])
                y = y.reshape(b, n_out, layer.out_ch).transpose(0, 2, 1)
                y = y + layer.bias[None, :, None]
                caches.append(("conv", x_shape, cols, None))
            else:
                y, x2 = _tconv_forward(layer, xb)
                caches.append(("tconv", x_shape, None, x2))
            if i != last:
                mask = y > 0.0
                y = np.where(mask, y, 0.0)
                caches[-1] = caches[-1] + (mask,)
            else:
                caches[-1] = caches[-1] + (None,)
            xb = y
        return xb, caches

    def backward_batch(self, caches, grad_out: np.ndarray):
        """Gradients of each layer's (kernel, bias) for the cached forward pass."""
        grads = [None] * len(self.layers)
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            kind, x_shape, cols, x2, mask = caches[i]
            if mask is not None:
                g = g * mask
            layer = self.layers[i]
            if kind == "conv":
                g, gk, gb = _conv_backward(layer, x_shape, cols, g)
            else:
                g, gk, gb = _tconv_backward(layer, x2, x_shape, g)
            grads[i] = (gk, gb)
        return grads

    def parameters(self):
        return [(layer.kernel, layer.bias) for layer in self.layers]

    def set_parameters(self, params):
        for layer, (kernel, bias) in zip(self.layers, params):
            layer.kernel = kernel.copy()
            layer.bias = bias.copy()


def network_forward(net: DenoiserNetwork, window) -> np.ndarray:
    return net.forward(window)


def build_network(channel_plan, kernel_size: int = 10, seed=0, window: int = WINDOW) -> DenoiserNetwork:
    """Seeded network with stride-2 layers sized to round-trip the window length.

    Weights are uniform in +/- sqrt(1/(in_ch * k)); biases start at zero.
    Transposed-stage output paddings are derived from the encoder lengths.
    """
    c1, c2, c3 = channel_plan
    if min(c1, c2, c3) < 1 or kernel_size < 1:
        raise ValueError("channel plan and kernel size must be positive")
    stride = 2
    padding = (kernel_size - 1) // 2
    rng = np.random.default_rng(seed)

    def init(in_ch, out_ch):
        bound = np.sqrt(1.0 / (in_ch * kernel_size))
        kernel = rng.uniform(-bound, bound, size=(out_ch, in_ch, kernel_size))
        return kernel, np.zeros(out_ch)

    channels = [1, c1, c2, c3]
    lengths = [window]
    conv_layers = []
    for i in range(3):
        kernel, bias = init(channels[i], channels[i + 1])
        layer = Conv1dLayer(
            in_ch=channels[i], out_ch=channels[i + 1], kernel=kernel, bias=bias,
            stride=stride, padding=padding,
        )
        lengths.append(layer.out_len(lengths[-1]))
        conv_layers.append(layer)

    tconv_layers = []
    for i in range(3):
        in_ch, out_ch = channels[3 - i], channels[2 - i]
        target = lengths[2 - i]
        base = (lengths[3 - i] - 1) * stride - 2 * padding + kernel_size
        output_padding = target - base
        if not (0 <= output_padding < stride):
            raise ValueError(
                f"cannot invert encoder lengths with kernel {kernel_size}: "
                f"needed output_padding {output_padding}"
            )
        kernel, bias = init(in_ch, out_ch)
        tconv_layers.append(
            TConv1dLayer(
                in_ch=in_ch, out_ch=out_ch, kernel=kernel, bias=bias,
                stride=stride, padding=padding, output_padding=output_padding,
            )
        )
    return DenoiserNetwork(
        layers=conv_layers + tconv_layers,
        channel_plan=(c1, c2, c3),
        kernel_size=kernel_size,
    )


# ---------------------------------------------------------------------------
# Loss and optimizer


def loss(pred, target, net: DenoiserNetwork | None = None, l2: float = 0.0) -> float:
    """Mean squared error plus l2 * sum of squared kernel weights (biases exempt)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    value = float(np.mean((pred - target) ** 2))
    if l2 > 0.0 and net is not None:
        value += l2 * sum(float(np.sum(layer.kernel**2)) for layer in net.layers)
    return value


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params) -> AdamState:
    flat = [np.zeros_like(p) for pair in params for p in pair]
    return AdamState(m=flat, v=[np.zeros_like(p) for pair in params for p in pair])


def adam_step(params, grads, state: AdamState, lr: float) -> None:
    """Bias-corrected ADAM update, applied in place."""
    flat_p = [p for pair in params for p in pair]
    flat_g = [g for pair in grads for g in pair]
    if len(flat_p) != len(state.m):
        raise ValueError("parameter/state size mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(flat_p, flat_g, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainingConfig:
    strategy: Strategy = Strategy.DIRECT
    lr0: float = 0.005
    epochs: int = 500
    l2: float = 0.001
    kernel_size: int = 10
    channel_plan: tuple = (16, 32, 64)
    batch_size: int = 32
    lr_decay_factor: float = 0.9
    lr_decay_every: int = 50
    early_stop_patience: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0 or self.epochs < 1 or self.l2 < 0:
            raise ValueError("need lr0 > 0, epochs >= 1, l2 >= 0")
        if self.batch_size < 1 or self.early_stop_patience < 0:
            raise ValueError("need batch_size >= 1 and early_stop_patience >= 0")
        object.__setattr__(self, "channel_plan", tuple(self.channel_plan))
        if isinstance(self.strategy, str):
            object.__setattr__(self, "strategy", Strategy(self.strategy))


@dataclass
class TrainingHistory:
    train_loss: list
    val_rmse: list
    best_epoch: int
    epochs_run: int


def _stack(examples):
    inputs = np.stack([np.asarray(e.input, dtype=np.float64) for e in examples])
    targets = np.stack([np.asarray(e.target, dtype=np.float64) for e in examples])
    return inputs, targets


def _denoised(pred_scaled, inputs_raw, scale, strategy):
    if strategy is Strategy.DIRECT:
        return scale * pred_scaled
    return inputs_raw + scale * pred_scaled


def train(train_examples, val_examples, cfg: TrainingConfig, scale: float = 1.0):
    """Minibatch ADAM training with step-decayed learning rate and early stopping.

    Inputs and targets are divided by ``scale``; validation RMSE is tracked in
    original units on the denoised output, and the weights of the best
    validation epoch are returned. The recorded training loss for an epoch is
    evaluated before that epoch's updates, so the first entry reflects the
    initial weights.
    """
    if len(train_examples) < 1 or len(val_examples) < 1:
        raise ValueError("need at least one training and one validation example")
    if not (scale > 0):
        raise ValueError(f"scale must be positive, got {scale}")

    x_raw, r_raw = _stack(train_examples)
    xv_raw, rv_raw = _stack(val_examples)
    x = x_raw / scale
    xv = xv_raw / scale
    if cfg.strategy is Strategy.DIRECT:
        t = r_raw / scale
    else:
        t = (r_raw - x_raw) / scale
    xb = x[:, None, :]
    tb = t[:, None, :]
    xvb = xv[:, None, :]

    ss = np.random.SeedSequence(cfg.seed)
    init_ss, shuffle_ss = ss.spawn(2)
    net = build_network(cfg.channel_plan, cfg.kernel_size, seed=init_ss)
    rng = np.random.default_rng(shuffle_ss)
    state = init_adam(net.parameters())

    n = xb.shape[0]
    train_loss_hist = []
    val_rmse_hist = []
    best_rmse = np.inf
    best_params = None
    best_epoch = -1
    bad_epochs = 0
    epochs_run = 0

    def full_train_loss() -> float:
        total = 0.0
        for lo in range(0, n, 2048):
            pred = net.forward_batch(xb[lo : lo + 2048])
            total += float(np.sum((pred - tb[lo : lo + 2048]) ** 2))
        value = total / tb.size
        value += cfg.l2 * sum(float(np.sum(layer.kernel**2)) for layer in net.layers)
        return value

    def val_rmse() -> float:
        pred = net.forward_batch(xvb)[:, 0, :]
        den = _denoised(pred, xv_raw, scale, cfg.strategy)
        return float(np.sqrt(np.mean((den - rv_raw) ** 2)))

    for epoch in range(cfg.epochs):
        lr = cfg.lr0 * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)
        train_loss_hist.append(full_train_loss())
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            batch_x = xb[idx]
            batch_t = tb[idx]
            pred, caches = net.forward_batch_cached(batch_x)
            err = pred - batch_t
            batch_loss = float(np.mean(err**2))
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch} "
                    f"(lr={lr}, batch of {len(idx)}); aborting"
                )
            grad = (2.0 / err.size) * err
            grads = net.backward_batch(caches, grad)
            if cfg.l2 > 0.0:
                for layer, (gk, gb) in zip(net.layers, grads):
                    gk += 2.0 * cfg.l2 * layer.kernel
            adam_step(net.parameters(), grads, state, lr)
        epochs_run = epoch + 1

        rmse = val_rmse()
        if not np.isfinite(rmse):
            raise RuntimeError(f"non-finite validation RMSE at epoch {epoch}; aborting")
        val_rmse_hist.append(rmse)
        if rmse < best_rmse:
            best_rmse = rmse
            best_epoch = epoch
            best_params = [(k.copy(), b.copy()) for k, b in net.parameters()]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= max(cfg.early_stop_patience, 1):
                break

    if best_params is not None:
        net.set_parameters(best_params)
    history = TrainingHistory(
        train_loss=train_loss_hist,
        val_rmse=val_rmse_hist,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
    )
    return net, history


# ---------------------------------------------------------------------------
# Model files


MODEL_FORMAT_VERSION = 1


def model_to_dict(
    net: DenoiserNetwork, component: ComponentId, strategy: Strategy, scale: float
) -> dict:
    layers = []
    for layer in net.layers:
        layers.append(
            {
                "kind": layer.kind,
                "in_ch": layer.in_ch,
                "out_ch": layer.out_ch,
                "k": layer.k,
                "stride": layer.stride,
                "padding": layer.padding,
                "output_padding": getattr(layer, "output_padding", 0),
                "weights": [float(v) for v in layer.kernel.reshape(-1)],
                "bias": [float(v) for v in layer.bias],
            }
        )
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "component": component.value,
        "strategy": strategy.value,
        "window": WINDOW,
        "kernel_size": net.kernel_size,
        "channel_plan": list(net.channel_plan),
        "normalization": {"scale": float(scale)},
        "layers": layers,
    }


def model_from_dict(doc: dict):
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError("unsupported model format_version")
    if doc.get("window") != WINDOW:
        raise ValueError(f"model window {doc.get('window')} != {WINDOW}")
    layers = []
    for entry in doc["layers"]:
        kernel = np.array(entry["weights"], dtype=np.float64).reshape(
            entry["out_ch"], entry["in_ch"], entry["k"]
        )
        bias = np.array(entry["bias"], dtype=np.float64)
        if entry["kind"] == "conv":
            layers.append(
                Conv1dLayer(
                    in_ch=entry["in_ch"], out_ch=entry["out_ch"], kernel=kernel,
                    bias=bias, stride=entry["stride"], padding=entry["padding"],
                )
            )
        elif entry["kind"] == "tconv":
            layers.append(
                TConv1dLayer(
                    in_ch=entry["in_ch"], out_ch=entry["out_ch"], kernel=kernel,
                    bias=bias, stride=entry["stride"], padding=entry["padding"],
                    output_padding=entry["output_padding"],
                )
            )
        else:
            raise ValueError(f"unknown layer kind {entry['kind']!r}")
    net = DenoiserNetwork(
        layers=layers,
        channel_plan=tuple(doc["channel_plan"]),
        kernel_size=doc["kernel_size"],
    )
    component = ComponentId(doc["component"])
    strategy = Strategy(doc["strategy"])
    scale = float(doc["normalization"]["scale"])
    return net, component, strategy, scale
