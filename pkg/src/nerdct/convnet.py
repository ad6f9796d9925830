"""Small convolutional noise predictor with hand-written backward passes.

Architecture: three 3x3 same-padding conv layers over the image channels
1 -> 8 -> 8 -> 1 with ReLU between them.  Time conditioning concatenates a
constant channel equal to sqrt(1 - alpha_bar_t) to the input, so the first
kernel sees 2 input channels.  The network predicts the noise eps_hat; the
denoised image is the residual form (x_t - sqrt(1-a)*eps_hat) / sqrt(a).

Forward, input-gradient, and weight-gradient passes are explicit numpy so
they can be checked directly against finite differences.
"""

import json

import numpy as np

from .optim import AdamState, adam_step
from .priors import DenoiserPrior
from .rng import Xoshiro256PP
from .schedule import tweedie_denoise

KERNEL = 3
CHANNELS = (2, 8, 8, 1)  # image + time channel in, eps out


def conv2d(x, weight, bias):
    """3x3 stride-1 conv with zero same-padding; x is (Cin, H, W)."""
    c_in, height, width = x.shape
    c_out = weight.shape[0]
    padded = np.zeros((c_in, height + 2, width + 2))
    padded[:, 1:-1, 1:-1] = x
    out = np.zeros((c_out, height, width))
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            patch = padded[:, dy:dy + height, dx:dx + width]
            out += np.tensordot(weight[:, :, dy, dx], patch, axes=1)
    return out + bias[:, None, None]


def conv2d_input_grad(grad_out, weight):
    """Gradient w.r.t. the conv input (transposed conv, same kernel)."""
    c_out, height, width = grad_out.shape
    c_in = weight.shape[1]
    acc = np.zeros((c_in, height + 2, width + 2))
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            acc[:, dy:dy + height, dx:dx + width] += np.tensordot(
                weight[:, :, dy, dx].T, grad_out, axes=1
            )
    return acc[:, 1:-1, 1:-1]


def conv2d_weight_grad(grad_out, x):
    """Gradients w.r.t. kernel and bias for one input."""
    c_in, height, width = x.shape
    c_out = grad_out.shape[0]
    padded = np.zeros((c_in, height + 2, width + 2))
    padded[:, 1:-1, 1:-1] = x
    grad_w = np.zeros((c_out, c_in, KERNEL, KERNEL))
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            patch = padded[:, dy:dy + height, dx:dx + width]
            grad_w[:, :, dy, dx] = np.tensordot(
                grad_out, patch, axes=([1, 2], [1, 2])
            )
    return grad_w, grad_out.sum(axis=(1, 2))


def init_weights(seed):
    """He-normal kernels, zero biases, drawn from the documented stream.

    Draw order: for each layer, kernel entries in C order, then biases.
    """
    rng = Xoshiro256PP(seed)
    layers = []
    for c_in, c_out in zip(CHANNELS[:-1], CHANNELS[1:]):
        scale = np.sqrt(2.0 / (c_in * KERNEL * KERNEL))
        weight = scale * rng.normal_array((c_out, c_in, KERNEL, KERNEL))
        bias = np.zeros(c_out)
        layers.append((weight, bias))
    return layers


def _time_stack(x2d, t, schedule):
    a = schedule.alpha_bar[t]
    return np.stack([x2d, np.full_like(x2d, np.sqrt(1.0 - a))])


def _forward_cache(x2d, t, weights, schedule):
    act = _time_stack(x2d, t, schedule)
    inputs, pre_acts = [], []
    last = len(weights) - 1
    for i, (kernel, bias) in enumerate(weights):
        inputs.append(act)
        z = conv2d(act, kernel, bias)
        pre_acts.append(z)
        act = np.maximum(z, 0.0) if i < last else z
    return act[0], inputs, pre_acts


def conv_forward(x2d, t, weights, schedule):
    """Predicted noise eps_hat for one 2D slice."""
    eps_hat, _, _ = _forward_cache(x2d, t, weights, schedule)
    return eps_hat


def _backward(grad_eps, weights, inputs, pre_acts):
    grad = grad_eps[None]
    weight_grads = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        weight_grads[i] = conv2d_weight_grad(grad, inputs[i])
        grad = conv2d_input_grad(grad, weights[i][0])
        if i > 0:
            grad = grad * (pre_acts[i - 1] > 0.0)
    return grad, weight_grads


def conv_input_vjp(x2d, t, weights, schedule, cotangent):
    """d<cotangent, eps_hat>/d x2d (image channel only; t channel is constant)."""
    _, inputs, pre_acts = _forward_cache(x2d, t, weights, schedule)
    grad_in, _ = _backward(cotangent, weights, inputs, pre_acts)
    return grad_in[0]


def conv_weight_grad(x2d, t, weights, schedule, cotangent):
    """Per-layer (kernel, bias) gradients of <cotangent, eps_hat>."""
    _, inputs, pre_acts = _forward_cache(x2d, t, weights, schedule)
    _, weight_grads = _backward(cotangent, weights, inputs, pre_acts)
    return weight_grads


def pack_weights(weights):
    """Flatten layers to one vector: kernel then bias, layer by layer."""
    return np.concatenate(
        [np.concatenate([w.ravel(), b.ravel()]) for w, b in weights]
    )


def unpack_weights(flat):
    layers, offset = [], 0
    for c_in, c_out in zip(CHANNELS[:-1], CHANNELS[1:]):
        n_w = c_out * c_in * KERNEL * KERNEL
        weight = flat[offset:offset + n_w].reshape(c_out, c_in, KERNEL, KERNEL)
        offset += n_w
        bias = flat[offset:offset + c_out]
        offset += c_out
        layers.append((weight.copy(), bias.copy()))
    if offset != len(flat):
        raise ValueError(f"weight vector length {len(flat)} != expected {offset}")
    return layers


class ConvDenoiserPrior(DenoiserPrior):
    """Denoiser prior backed by the conv noise predictor, applied per slice."""

    def __init__(self, schedule, weights):
        self.schedule = schedule
        self.weights = weights

    def _eps_volume(self, x_t, t):
        eps = np.empty_like(x_t)
        for k in range(x_t.shape[0]):
            eps[k] = conv_forward(x_t[k], t, self.weights, self.schedule)
        return eps

    def denoise(self, x_t, t):
        return tweedie_denoise(x_t, t, self._eps_volume(x_t, t), self.schedule)

    def input_vjp(self, x_t, t, cotangent):
        a = self.schedule.alpha_bar[t]
        out = np.empty_like(x_t)
        for k in range(x_t.shape[0]):
            eps_vjp = conv_input_vjp(
                x_t[k], t, self.weights, self.schedule, cotangent[k]
            )
            out[k] = (cotangent[k] - np.sqrt(1.0 - a) * eps_vjp) / np.sqrt(a)
        return out


def denoising_loss(x2d, t, weights, schedule, eps):
    """Mean squared noise-prediction error and its weight gradients."""
    a = schedule.alpha_bar[t]
    noisy = np.sqrt(a) * x2d + np.sqrt(1.0 - a) * eps
    eps_hat, inputs, pre_acts = _forward_cache(noisy, t, weights, schedule)
    diff = eps_hat - eps
    loss = float(np.mean(diff**2))
    _, weight_grads = _backward(2.0 * diff / diff.size, weights, inputs, pre_acts)
    return loss, weight_grads


def _holdout_losses(slices, pairs, weights, schedule):
    """Noise-prediction loss of the net and of the identity map eps_hat = x_t."""
    net_total, identity_total = 0.0, 0.0
    for x2d, (t, eps) in zip(slices, pairs):
        a = schedule.alpha_bar[t]
        noisy = np.sqrt(a) * x2d + np.sqrt(1.0 - a) * eps
        eps_hat = conv_forward(noisy, t, weights, schedule)
        net_total += float(np.mean((eps_hat - eps) ** 2))
        identity_total += float(np.mean((noisy - eps) ** 2))
    return net_total / len(pairs), identity_total / len(pairs)


def train_denoiser(slices, schedule, epochs, seed, lr=1e-3, holdout_fraction=0.2):
    """Train the noise predictor on 2D slices with the denoising objective.

    Per sample: draw t uniform over [1, T] and fresh noise, form the noisy
    slice, and take one Adam step on the mean squared noise-prediction
    error.  The trailing `holdout_fraction` of the slices is held out and
    scored with draws fixed before training, so the held-out loss depends
    only on the final weights.  Returns (weights, record) where the record
    carries per-epoch training means and the held-out/identity losses.
    """
    slices = np.asarray(slices, dtype=np.float64)
    if slices.ndim != 3:
        raise ValueError(f"expected (n_slices, H, W), got shape {slices.shape}")
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    n_holdout = max(1, int(round(holdout_fraction * len(slices))))
    if n_holdout >= len(slices):
        raise ValueError(f"not enough slices ({len(slices)}) to hold out {n_holdout}")
    train, holdout = slices[:-n_holdout], slices[-n_holdout:]

    weights = init_weights(seed)
    rng = Xoshiro256PP(seed)
    num_t = schedule.num_train_steps
    eval_pairs = [
        (rng.integers(1, num_t, 1)[0], rng.normal_array(holdout.shape[1:]))
        for _ in range(n_holdout)
    ]

    adam = AdamState(lr=lr)
    flat = pack_weights(weights)
    epoch_losses = []
    for _ in range(epochs):
        total = 0.0
        for x2d in train:
            t = rng.integers(1, num_t, 1)[0]
            eps = rng.normal_array(x2d.shape)
            loss, grads = denoising_loss(x2d, t, weights, schedule, eps)
            total += loss
            flat = adam_step(adam, flat, pack_weights(grads))
            weights = unpack_weights(flat)
        epoch_losses.append(total / len(train))

    holdout_loss, identity_loss = _holdout_losses(holdout, eval_pairs, weights, schedule)
    record = {
        "epochs": epochs,
        "n_train": len(train),
        "n_holdout": n_holdout,
        "train_epoch_losses": epoch_losses,
        "holdout_loss": holdout_loss,
        "identity_baseline_loss": identity_loss,
    }
    return weights, record


def save_weights(path, weights, schedule, record=None):
    """Raw float64 weight vector plus a JSON descriptor at path + '.json'."""
    flat = pack_weights(weights)
    flat.astype("<f8").tofile(path)
    descriptor = {
        "kernel": KERNEL,
        "channels": list(CHANNELS),
        "n_parameters": int(flat.size),
        "dtype": "<f8",
        "layout": "per layer: kernel C-order then bias",
        "schedule": {
            "num_train_steps": schedule.num_train_steps,
            "alpha_bar_last": float(schedule.alpha_bar[-1]),
        },
        "training": record or {},
    }
    with open(path + ".json", "w") as fh:
        json.dump(descriptor, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_weights(path):
    """Load weights written by save_weights; returns (weights, descriptor)."""
    with open(path + ".json") as fh:
        descriptor = json.load(fh)
    flat = np.fromfile(path, dtype="<f8")
    if flat.size != descriptor["n_parameters"]:
        raise ValueError(
            f"{path}: {flat.size} parameters, descriptor says "
            f"{descriptor['n_parameters']}"
        )
    return unpack_weights(flat), descriptor
