"""Sparse one-hidden-layer classifier head: decoding, SGD training, inference.

A mask decodes to a dense head whose input weight rows for pruned features
are identically zero. Training feeds mask-filtered features, so those rows
receive zero gradient and stay zero without any special casing in the
update rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datamodel import ArchSpec, EvolutionConfig, PruningMask, Split, active_count


@dataclass
class TrainedHead:
    """Head parameters plus training provenance.

    input_weights is (P, H) with pruned rows zero, hidden_bias is (H,),
    output_weights is (H, Y), output_bias is (Y,). best_train_accuracy is
    None until the head has been through train_head.
    """

    arch: ArchSpec
    mask: PruningMask
    input_weights: np.ndarray
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: np.ndarray
    best_train_accuracy: float | None = None
    epochs_run: int = 0
    best_epoch: int = 0
    accuracy_history: tuple[float, ...] = ()

    def param_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.input_weights, self.hidden_bias,
                self.output_weights, self.output_bias)


def decode(mask: PruningMask, arch: ArchSpec, seed: int) -> TrainedHead:
    """Materialize an untrained head for a mask.

    Weights draw from a uniform range scaled by fan-in and fan-out; the
    input layer's fan-in counts only active inputs. Pruned rows are zeroed
    after sampling so the draw sequence, and hence every other weight, does
    not depend on the mask. Biases start at zero.
    """
    if len(mask) != arch.feature_dim:
        raise ValueError(
            f"mask length {len(mask)} does not match feature_dim {arch.feature_dim}"
        )
    rng = np.random.default_rng(seed)
    p, h, y = arch.feature_dim, arch.hidden_units, arch.num_classes
    fan_in = active_count(mask)
    lim_in = math.sqrt(6.0 / (fan_in + h))
    lim_out = math.sqrt(6.0 / (h + y))
    w_in = rng.uniform(-lim_in, lim_in, size=(p, h))
    w_in *= mask.bits[:, None]
    w_out = rng.uniform(-lim_out, lim_out, size=(h, y))
    return TrainedHead(
        arch=arch,
        mask=mask,
        input_weights=w_in,
        hidden_bias=np.zeros(h),
        output_weights=w_out,
        output_bias=np.zeros(y),
    )


def predict_logits(head: TrainedHead, features: np.ndarray) -> np.ndarray:
    """Forward pass. Accepts one (P,) vector or an (N, P) batch and returns
    logits of matching rank. Pruned features cannot influence the result
    because their weight rows are zero."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != head.arch.feature_dim:
        raise ValueError(
            f"feature width {x.shape[1]} does not match head ({head.arch.feature_dim})"
        )
    hidden = np.maximum(x @ head.input_weights + head.hidden_bias, 0.0)
    logits = hidden @ head.output_weights + head.output_bias
    return logits[0] if single else logits


def accuracy(head: TrainedHead, split: Split) -> float:
    """Fraction of rows whose argmax logit matches the label. Ties resolve
    to the lowest class index."""
    if len(split) == 0:
        raise ValueError("cannot score an empty split")
    preds = np.argmax(predict_logits(head, split.x), axis=1)
    return float(np.mean(preds == split.y))


def _forward_loss(params, xm: np.ndarray, y: np.ndarray):
    w_in, b_h, w_out, b_out = params
    z1 = xm @ w_in + b_h
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w_out + b_out
    z2 = z2 - z2.max(axis=1, keepdims=True)
    log_den = np.log(np.exp(z2).sum(axis=1))
    loss = float(np.mean(log_den - z2[np.arange(len(y)), y]))
    return loss, z1, a1, z2, log_den


def loss_and_grads(head: TrainedHead, features: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradients for one batch.

    Features are mask-filtered before the forward pass, which is what makes
    the input-weight gradient rows of pruned features exactly zero.
    Returns (loss, dict of gradients keyed by parameter name).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],) or x.shape[0] == 0:
        raise ValueError("need a non-empty (N, P) batch with N labels")
    xm = x * head.mask.bits
    params = head.param_arrays()
    loss, z1, a1, z2, log_den = _forward_loss(params, xm, y)
    n = x.shape[0]
    probs = np.exp(z2 - log_den[:, None])
    d_z2 = probs
    d_z2[np.arange(n), y] -= 1.0
    d_z2 /= n
    d_w_out = a1.T @ d_z2
    d_b_out = d_z2.sum(axis=0)
    d_a1 = d_z2 @ params[2].T
    d_z1 = d_a1 * (z1 > 0.0)
    d_w_in = xm.T @ d_z1
    d_b_h = d_z1.sum(axis=0)
    return loss, {
        "input_weights": d_w_in,
        "hidden_bias": d_b_h,
        "output_weights": d_w_out,
        "output_bias": d_b_out,
    }


def _train_accuracy(params, xm: np.ndarray, y: np.ndarray) -> float:
    w_in, b_h, w_out, b_out = params
    hidden = np.maximum(xm @ w_in + b_h, 0.0)
    preds = np.argmax(hidden @ w_out + b_out, axis=1)
    return float(np.mean(preds == y))


def train_head(head: TrainedHead, train: Split, cfg: EvolutionConfig, seed: int) -> TrainedHead:
    """Mini-batch SGD with per-epoch accuracy snapshots.

    Keeps the parameter snapshot with the highest train accuracy seen so
    far (strict improvement only; the untrained head is the epoch-0
    candidate) and stops after early_stop_patience consecutive epochs
    without improvement, or at max_epochs. With max_epochs == 0 the input
    head comes back unchanged apart from its recorded accuracy.
    """
    if len(train) == 0:
        raise ValueError("cannot train on an empty split")
    if train.x.shape[1] != head.arch.feature_dim:
        raise ValueError("training rows do not match the head's feature width")
    rng = np.random.default_rng(seed)
    xm = train.x * head.mask.bits
    y = train.y
    n = len(train)
    lr = cfg.learning_rate

    params = [a.copy() for a in head.param_arrays()]
    best_acc = _train_accuracy(params, xm, y)
    best_params = [a.copy() for a in params]
    best_epoch = 0
    history = [best_acc]
    stall = 0
    epochs_run = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = xm[idx], y[idx]
            bsz = len(idx)
            z1 = xb @ params[0] + params[1]
            a1 = np.maximum(z1, 0.0)
            z2 = a1 @ params[2] + params[3]
            z2 -= z2.max(axis=1, keepdims=True)
            probs = np.exp(z2)
            probs /= probs.sum(axis=1, keepdims=True)
            probs[np.arange(bsz), yb] -= 1.0
            probs /= bsz
            d_w_out = a1.T @ probs
            d_b_out = probs.sum(axis=0)
            d_z1 = (probs @ params[2].T) * (z1 > 0.0)
            params[2] -= lr * d_w_out
            params[3] -= lr * d_b_out
            params[0] -= lr * (xb.T @ d_z1)
            params[1] -= lr * d_z1.sum(axis=0)
        epochs_run = epoch
        acc = _train_accuracy(params, xm, y)
        history.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_params = [a.copy() for a in params]
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if cfg.early_stop_patience > 0 and stall >= cfg.early_stop_patience:
                break

    return TrainedHead(
        arch=head.arch,
        mask=head.mask,
        input_weights=best_params[0],
        hidden_bias=best_params[1],
        output_weights=best_params[2],
        output_bias=best_params[3],
        best_train_accuracy=best_acc,
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        accuracy_history=tuple(history),
    )


def dump_weights(head: TrainedHead, path) -> None:
    """Write head parameters as a flat text tensor file for debugging."""
    names = ("input_weights", "hidden_bias", "output_weights", "output_bias")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, arr in zip(names, head.param_arrays()):
            shape = " ".join(str(d) for d in arr.shape)
            fh.write(f"# {name} {shape}\n")
            for v in arr.ravel():
                fh.write(repr(float(v)) + "\n")
