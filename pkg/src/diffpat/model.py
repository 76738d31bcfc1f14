"""Binarized autoencoder with a linear classification head.

Continuous encoder weights in [0,1] are sampled to binary matrices during
training (one Bernoulli draw per value) and thresholded deterministically
for pattern extraction. The decoder reuses the transposed sampled encoder
matrix, so a firing hidden neuron writes its whole weight row into the
reconstruction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DIFFPAT\x00"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


class CheckpointError(ModelError):
    pass


@dataclass
class ModelParams:
    """Trainable state: encoder weights, per-neuron bias, classifier weights.

    Invariants kept by every optimizer step: W_E and W_C entries in [0,1],
    bias entries <= -1.
    """

    W_E: np.ndarray  # (h, m) float32, entries in [0, 1]
    bias: np.ndarray  # (h,)   float32, entries <= -1
    W_C: np.ndarray  # (K, h) float32, entries in [0, 1]

    @property
    def h(self) -> int:
        return self.W_E.shape[0]

    @property
    def m(self) -> int:
        return self.W_E.shape[1]

    @property
    def K(self) -> int:
        return self.W_C.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.W_E.copy(), self.bias.copy(), self.W_C.copy())

    def check(self) -> None:
        if self.W_E.shape != (self.h, self.m) or self.bias.shape != (self.h,):
            raise ModelError("parameter shape mismatch")
        if self.W_C.shape[1] != self.h:
            raise ModelError("classifier width must equal the hidden width")
        if self.W_E.min() < 0 or self.W_E.max() > 1:
            raise ModelError("encoder weights out of [0, 1]")
        if self.W_C.min() < 0 or self.W_C.max() > 1:
            raise ModelError("classifier weights out of [0, 1]")
        if self.bias.max() > -1:
            raise ModelError("bias above -1")


@dataclass
class ForwardTrace:
    """One stochastic forward pass; consumed by the backward pass."""

    W_Eb: np.ndarray  # sampled binary encoder matrix (h, m)
    x: np.ndarray  # input row(s)
    pre_enc: np.ndarray  # integer-valued encoder pre-activations
    z: np.ndarray  # binary hidden activations
    pre_dec: np.ndarray  # integer-valued decoder pre-activations
    x_hat: np.ndarray  # binary reconstruction
    y_hat: np.ndarray  # class probabilities


def init_params(h: int, m: int, K: int, rng: np.random.Generator,
                init_lo: float = 0.0, init_hi: float = 0.1) -> ModelParams:
    """Uniform small encoder weights, bias -1, classifier uniform scaled by 1/h."""
    if h < 1 or m < 2 or K < 2:
        raise ModelError(f"invalid shapes h={h}, m={m}, K={K}")
    W_E = rng.uniform(init_lo, init_hi, size=(h, m)).astype(np.float32)
    bias = np.full(h, -1.0, dtype=np.float32)
    W_C = (rng.uniform(0.0, 1.0, size=(K, h)) / h).astype(np.float32)
    return ModelParams(W_E, bias, W_C)


def stochastic_binarize(W: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draw per entry with the entry as its probability."""
    if W.min() < 0 or W.max() > 1:
        raise ModelError("stochastic binarization requires entries in [0, 1]")
    return (rng.random(W.shape) < W).astype(np.float32)


def deterministic_binarize(W: np.ndarray, tau: float) -> np.ndarray:
    """Entry 1 iff strictly above the threshold."""
    if not 0 <= tau < 1:
        raise ModelError("threshold must lie in [0, 1)")
    return (W > tau).astype(np.float32)


def encode(x: np.ndarray, W_Eb: np.ndarray, bias: np.ndarray):
    """Step activation: neuron fires iff dot(W_Eb_row, x) + ceil(bias) >= 1.

    With the bias clamped at -1 this means at least two of the neuron's
    features must be present. Accepts a single row (m,) or a batch (B, m).
    """
    pre = x @ W_Eb.T
    z = (pre + np.ceil(bias) >= 1).astype(np.float32)
    return z, pre


def decode(z: np.ndarray, W_Eb: np.ndarray):
    """Transposed encoder pass, clamped to [0,1] and rounded.

    Pre-activations are nonnegative integers, so the clamp-and-round
    reduces to x_hat = 1 iff pre_dec >= 1.
    """
    pre = z @ W_Eb
    x_hat = np.rint(np.clip(pre, 0.0, 1.0)).astype(np.float32)
    return x_hat, pre


def classify(z: np.ndarray, W_C: np.ndarray) -> np.ndarray:
    """Softmax over the linear read-out of the hidden activations."""
    logits = (z @ W_C.T).astype(np.float64)
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def forward(x: np.ndarray, params: ModelParams, rng: np.random.Generator) -> ForwardTrace:
    """Sample one binary weight matrix and push `x` through the network.

    The same sample serves encoder and decoder. `x` may be a batch; all
    rows then share the sample.
    """
    W_Eb = stochastic_binarize(params.W_E, rng)
    z, pre_enc = encode(x, W_Eb, params.bias)
    x_hat, pre_dec = decode(z, W_Eb)
    y_hat = classify(z, params.W_C)
    return ForwardTrace(W_Eb, x, pre_enc, z, pre_dec, x_hat, y_hat)


def save_checkpoint(params: ModelParams, path) -> None:
    """Magic + version + (h, m, K) header, then little-endian float32 blocks."""
    header = MAGIC + struct.pack("<IIII", CHECKPOINT_VERSION,
                                 params.h, params.m, params.K)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.W_E.astype("<f4").tobytes(order="C"))
        fh.write(params.bias.astype("<f4").tobytes(order="C"))
        fh.write(params.W_C.astype("<f4").tobytes(order="C"))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a model checkpoint")
    off = len(MAGIC)
    version, h, m, K = struct.unpack_from("<IIII", blob, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off += 16
    need = off + 4 * (h * m + h + K * h)
    if len(blob) != need:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(blob)} of {need} bytes)")
    W_E = np.frombuffer(blob, dtype="<f4", count=h * m, offset=off).reshape(h, m).copy()
    off += 4 * h * m
    bias = np.frombuffer(blob, dtype="<f4", count=h, offset=off).copy()
    off += 4 * h
    W_C = np.frombuffer(blob, dtype="<f4", count=K * h, offset=off).reshape(K, h).copy()
    params = ModelParams(W_E, bias, W_C)
    params.check()
    return params
