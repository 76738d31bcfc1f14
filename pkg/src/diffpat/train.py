"""Multi-task objective, custom backward pass, and the epoch loop.

The loss combines a sparsity-weighted reconstruction error, a cross-entropy
classification term, a squared row-sum penalty that keeps patterns short,
and a W-shaped elastic-net penalty that pushes weights toward {0, 1}.
Gradients flow through the binarization and step activations via
straight-through estimators; the hidden activation uses the gated variant
that blocks negative gradients into inactive neurons.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import LabeledDataset, density
from .model import ModelParams, ForwardTrace, forward, init_params

EPS_LOG = 1e-12


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    h: int = 100
    lambda_c: float = 1.0
    kappa0: float = 1e-4
    lambda0: float = 1e-4
    sched_gamma: float = 1.05
    lr: float = 0.005
    batch_size: int = 128
    epochs: int = 60
    seed: int = 0
    init_lo: float = 0.0
    init_hi: float = 0.02
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.h < 1 or self.batch_size < 1 or self.epochs < 0:
            raise TrainError("h and batch_size must be >= 1, epochs >= 0")
        if self.lambda_c < 0 or self.kappa0 < 0 or self.lambda0 < 0:
            raise TrainError("loss weights must be nonnegative")
        if self.sched_gamma <= 0 or self.lr <= 0:
            raise TrainError("sched_gamma and lr must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise TrainError(f"unknown optimizer {self.optimizer!r}")
        if not self.init_lo <= self.init_hi or self.init_lo < 0 or self.init_hi > 1:
            raise TrainError("init range must satisfy 0 <= lo <= hi <= 1")


@dataclass
class Gradients:
    g_WE: np.ndarray
    g_bias: np.ndarray
    g_WC: np.ndarray


@dataclass
class EpochStats:
    epoch: int
    recon_loss: float
    class_loss: float
    r_s: float
    r_b: float
    kappa: float
    lam: float
    seconds: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    clamped_log: int = 0  # times the cross-entropy hit the eps floor

    def to_json(self) -> str:
        return json.dumps(
            {"epochs": [asdict(e) for e in self.epochs], "clamped_log": self.clamped_log},
            indent=2,
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "recon_loss", "class_loss", "r_s", "r_b",
                        "kappa", "lambda", "seconds"])
            for e in self.epochs:
                w.writerow([e.epoch, repr(e.recon_loss), repr(e.class_loss),
                            repr(e.r_s), repr(e.r_b), repr(e.kappa), repr(e.lam),
                            repr(e.seconds)])


# --------------------------------------------------------------------------
# loss components
# --------------------------------------------------------------------------

def recon_loss(x: np.ndarray, x_hat: np.ndarray, alpha: float) -> float:
    """Sparsity-weighted L1: a missed 1 costs (1 - alpha), a false 1 costs alpha.

    Accepts batches; returns the sum over all rows.
    """
    if not 0 < alpha < 1:
        raise TrainError(f"density alpha={alpha} is degenerate")
    w = (1.0 - x) * alpha + x * (1.0 - alpha)
    return float(np.sum(w * np.abs(x - x_hat)))


def class_loss(y: int, y_hat: np.ndarray) -> float:
    """Negative log-likelihood of the true class, floored at EPS_LOG."""
    return -float(np.log(max(float(y_hat[y]), EPS_LOG)))


def _batch_class_loss(y: np.ndarray, y_hat: np.ndarray) -> tuple[float, int]:
    picked = y_hat[np.arange(len(y)), y]
    clamped = int(np.count_nonzero(picked < EPS_LOG))
    return float(-np.log(np.maximum(picked, EPS_LOG)).sum()), clamped


def reg_pattern_length(W: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared per-neuron row sums; gradient gated off below row sum 1.

    Expects the caller to have applied the -1/m offset already.
    """
    row = W.sum(axis=1)
    value = float(np.sum(row ** 2))
    grad = np.broadcast_to((2.0 * row)[:, None], W.shape).copy()
    grad[row < 1.0] = 0.0
    return value, grad


def reg_w_shape(W: np.ndarray, kappa: float, lam: float) -> tuple[float, np.ndarray]:
    """Elementwise min of elastic nets centered at 0 and at 1.

    Zero exactly on {0, 1}; peaks at w = 0.5 with value kappa/2 + lam/4
    (0.75 for kappa = lam = 1). At the branch tie w = 0.5 the 0-branch is
    taken.
    """
    r0 = kappa * np.abs(W) + lam * W ** 2
    r1 = kappa * np.abs(W - 1.0) + lam * (W - 1.0) ** 2
    g0 = kappa * np.sign(W) + 2.0 * lam * W
    g1 = kappa * np.sign(W - 1.0) + 2.0 * lam * (W - 1.0)
    take0 = r0 <= r1
    value = float(np.where(take0, r0, r1).sum())
    grad = np.where(take0, g0, g1)
    return value, grad


def offset_weights(W: np.ndarray, m: int) -> np.ndarray:
    """Shift by -1/m and floor at 0, the dead-neuron guard for the regularizers."""
    return np.maximum(W - 1.0 / m, 0.0)


def regularizer_terms(params: ModelParams, kappa: float, lam: float):
    """Values and parameter gradients of both penalties on the current weights.

    The row-sum penalty and the W-shape penalty see the offset encoder
    weights; the classifier enters the W-shape penalty unshifted. The chain
    rule through the offset zeroes gradients at entries at or below 1/m.
    """
    W_off = offset_weights(params.W_E, params.m)
    mask = (params.W_E > 1.0 / params.m).astype(params.W_E.dtype)
    rs_val, rs_grad = reg_pattern_length(W_off)
    rb_e_val, rb_e_grad = reg_w_shape(W_off, kappa, lam)
    rb_c_val, rb_c_grad = reg_w_shape(params.W_C, kappa, lam)
    g_WE = (rs_grad + rb_e_grad) * mask
    return rs_val, rb_e_val + rb_c_val, g_WE, rb_c_grad


def total_loss(X: np.ndarray, y: np.ndarray, params: ModelParams,
               trace: ForwardTrace, lambda_c: float, kappa: float, lam: float,
               alpha: float):
    """Batch objective: data terms summed over rows plus the regularizers once.

    Returns (total, dict of components).
    """
    rec = recon_loss(X, trace.x_hat, alpha)
    cls, _ = _batch_class_loss(np.asarray(y), np.atleast_2d(trace.y_hat))
    rs_val, rb_val, _, _ = regularizer_terms(params, kappa, lam)
    total = rec + lambda_c * cls + rs_val + rb_val
    return total, {"recon": rec, "class": cls, "r_s": rs_val, "r_b": rb_val}


# --------------------------------------------------------------------------
# backward pass
# --------------------------------------------------------------------------

def backward(X: np.ndarray, y: np.ndarray, params: ModelParams,
             trace: ForwardTrace, lambda_c: float, kappa: float, lam: float,
             alpha: float, reg_scale: float = 1.0) -> Gradients:
    """Assemble parameter gradients for one batch.

    Straight-through substitutions: linear layers use g_u x^T for weights
    and the continuous encoder matrix for input gradients; the decoder
    activation is an identity pass; the hidden step activation gates by
    activity (inactive neurons receive bias gradient 0 and only the
    nonnegative part of the input gradient). The classifier head is exact.
    `reg_scale` lets the epoch loop spread the dataset-level regularizer
    over its batches.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float32))
    y = np.atleast_1d(np.asarray(y))
    Z = np.atleast_2d(trace.z)
    x_hat = np.atleast_2d(trace.x_hat)
    y_hat = np.atleast_2d(trace.y_hat)
    B = X.shape[0]

    # reconstruction: d|x - x_hat|/dx_hat through the identity STE of the
    # decoder activation; zero where already correct
    w = (1.0 - X) * alpha + X * (1.0 - alpha)
    g_pre_dec = (w * np.sign(x_hat - X)).astype(np.float32)

    # decoder linear layer (weights are the transposed encoder sample)
    g_WE_dec = Z.T @ g_pre_dec
    g_z_dec = g_pre_dec @ params.W_E.T

    # classifier head, exact softmax + NLL
    onehot = np.zeros_like(y_hat)
    onehot[np.arange(B), y] = 1.0
    g_logits = lambda_c * (y_hat - onehot)
    g_WC = g_logits.T @ Z
    g_z_cls = g_logits @ params.W_C

    g_z = (g_z_dec + g_z_cls).astype(np.float32)

    # gated STE at the hidden step activation
    active = Z > 0
    g_bias = np.where(active, g_z, 0.0).sum(axis=0)
    g_pre_enc = np.where(active, g_z, np.maximum(g_z, 0.0))

    g_WE = g_pre_enc.T @ X + g_WE_dec

    if reg_scale != 0.0:
        _, _, g_WE_reg, g_WC_reg = regularizer_terms(params, kappa, lam)
        g_WE = g_WE + reg_scale * g_WE_reg
        g_WC = g_WC + reg_scale * g_WC_reg

    grads = Gradients(g_WE.astype(np.float32), g_bias.astype(np.float32),
                      g_WC.astype(np.float32))
    for g in (grads.g_WE, grads.g_bias, grads.g_WC):
        if not np.isfinite(g).all():
            raise TrainError("non-finite gradient")
    return grads


# --------------------------------------------------------------------------
# optimizers
# --------------------------------------------------------------------------

class _Optimizer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, params: ModelParams, grads: Gradients) -> None:
        raise NotImplementedError


class _SGD(_Optimizer):
    def step(self, params, grads):
        lr = self.cfg.lr
        params.W_E -= lr * grads.g_WE
        params.bias -= lr * grads.g_bias
        params.W_C -= lr * grads.g_WC


class _Adam(_Optimizer):
    def __init__(self, cfg, params: ModelParams):
        super().__init__(cfg)
        self.t = 0
        self.m = [np.zeros_like(a) for a in (params.W_E, params.bias, params.W_C)]
        self.v = [np.zeros_like(a) for a in (params.W_E, params.bias, params.W_C)]

    def step(self, params, grads):
        cfg = self.cfg
        self.t += 1
        arrays = (params.W_E, params.bias, params.W_C)
        gs = (grads.g_WE, grads.g_bias, grads.g_WC)
        for i, (a, g) in enumerate(zip(arrays, gs)):
            self.m[i] = cfg.adam_beta1 * self.m[i] + (1 - cfg.adam_beta1) * g
            self.v[i] = cfg.adam_beta2 * self.v[i] + (1 - cfg.adam_beta2) * g ** 2
            m_hat = self.m[i] / (1 - cfg.adam_beta1 ** self.t)
            v_hat = self.v[i] / (1 - cfg.adam_beta2 ** self.t)
            a -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def make_optimizer(cfg: TrainConfig, params: ModelParams) -> _Optimizer:
    if cfg.optimizer == "adam":
        return _Adam(cfg, params)
    return _SGD(cfg)


def clip_params(params: ModelParams) -> None:
    """Projection applied after every update: weights to [0,1], bias to <= -1."""
    np.clip(params.W_E, 0.0, 1.0, out=params.W_E)
    np.clip(params.W_C, 0.0, 1.0, out=params.W_C)
    np.minimum(params.bias, -1.0, out=params.bias)


def apply_step(params: ModelParams, grads: Gradients, opt: _Optimizer) -> ModelParams:
    for g in (grads.g_WE, grads.g_bias, grads.g_WC):
        if not np.isfinite(g).all():
            raise TrainError("non-finite gradient; aborting step")
    opt.step(params, grads)
    clip_params(params)
    return params


# --------------------------------------------------------------------------
# epoch loop
# --------------------------------------------------------------------------

def train(D: LabeledDataset, cfg: TrainConfig,
          initial: ModelParams | None = None) -> tuple[ModelParams, TrainReport]:
    """Shuffled mini-batch training with one weight sample per batch.

    After each epoch the elastic-net coefficients are multiplied by
    `sched_gamma`. The regularizer gradient is scaled per batch by
    batch_size / n so one epoch applies it exactly once, matching the
    dataset-level objective.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if initial is not None:
        params = initial.copy()
        if (params.m, params.K) != (D.m, D.K):
            raise TrainError("initial parameters do not match dataset shape")
    else:
        params = init_params(cfg.h, D.m, D.K, rng, cfg.init_lo, cfg.init_hi)
    report = TrainReport()
    if cfg.epochs == 0:
        return params, report

    X = D.data.to_dense(np.float32)
    y = D.labels
    alpha = density(D.data)
    opt = make_optimizer(cfg, params)
    kappa, lam = cfg.kappa0, cfg.lambda0
    n = D.n

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        rec_sum = 0.0
        cls_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            trace = forward(Xb, params, rng)
            rec = recon_loss(Xb, trace.x_hat, alpha)
            cls, clamped = _batch_class_loss(yb, trace.y_hat)
            report.clamped_log += clamped
            if not np.isfinite(rec + cls):
                raise TrainError(f"non-finite loss in epoch {epoch}")
            rec_sum += rec
            cls_sum += cls
            grads = backward(Xb, yb, params, trace, cfg.lambda_c, kappa, lam,
                             alpha, reg_scale=len(idx) / n)
            apply_step(params, grads, opt)
        rs_val, rb_val, _, _ = regularizer_terms(params, kappa, lam)
        report.epochs.append(EpochStats(
            epoch=epoch,
            recon_loss=rec_sum / n,
            class_loss=cls_sum / n,
            r_s=rs_val,
            r_b=rb_val,
            kappa=kappa,
            lam=lam,
            seconds=time.perf_counter() - t0,
        ))
        kappa *= cfg.sched_gamma
        lam *= cfg.sched_gamma
    return params, report
