"""Turning trained continuous weights into discrete per-class pattern sets.

Encoder rows thresholded at tau_e become candidate patterns; the
thresholded classifier matrix assigns them to classes. The threshold pair
is picked by grid search on the error of the fully discretized network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, Pattern, density
from .model import ModelParams, deterministic_binarize
from .train import recon_loss, EPS_LOG

UNASSIGNED = -1


@dataclass
class DifferentialPatterns:
    """Per-class neuron patterns plus the thresholds that produced them.

    A neuron may appear under several classes when its classifier weight
    clears tau_c for each; patterns above tau_e but below tau_c everywhere
    are kept as orphans for diagnosis.
    """

    per_class: dict[int, list[tuple[int, Pattern]]]
    tau_e: float
    tau_c: float
    orphans: list[tuple[int, Pattern]] = field(default_factory=list)

    def total_patterns(self) -> int:
        return sum(len(v) for v in self.per_class.values())

    def class_patterns(self, k: int) -> list[Pattern]:
        return [p for _, p in self.per_class.get(k, [])]

    def to_json(self) -> str:
        return json.dumps({
            "thresholds": {"tau_e": self.tau_e, "tau_c": self.tau_c},
            "classes": {str(k): [list(p.features) for _, p in v]
                        for k, v in sorted(self.per_class.items())},
            "neurons": {str(k): [i for i, _ in v]
                        for k, v in sorted(self.per_class.items())},
            "orphans": [list(p.features) for _, p in self.orphans],
        }, indent=2)

    def to_text(self) -> str:
        lines = []
        for k in sorted(self.per_class):
            for _, p in self.per_class[k]:
                lines.append(f"{k}: " + " ".join(str(j) for j in p.features))
        for _, p in self.orphans:
            lines.append(f"{UNASSIGNED}: " + " ".join(str(j) for j in p.features))
        return "\n".join(lines) + ("\n" if lines else "")

    @staticmethod
    def from_json(text: str) -> "DifferentialPatterns":
        obj = json.loads(text)
        per_class = {}
        for k, pats in obj["classes"].items():
            neurons = obj.get("neurons", {}).get(k, list(range(len(pats))))
            per_class[int(k)] = [(int(i), Pattern(p)) for i, p in zip(neurons, pats)]
        orphans = [(UNASSIGNED, Pattern(p)) for p in obj.get("orphans", [])]
        th = obj["thresholds"]
        return DifferentialPatterns(per_class, float(th["tau_e"]), float(th["tau_c"]),
                                    orphans)


def extract_patterns(W_E: np.ndarray, tau_e: float) -> list[tuple[int, Pattern]]:
    """Per neuron, the features strictly above tau_e; empty rows are dropped."""
    Wb = deterministic_binarize(W_E, tau_e)
    out = []
    for i in range(Wb.shape[0]):
        feats = np.flatnonzero(Wb[i])
        if feats.size:
            out.append((i, Pattern(feats)))
    return out


def assign_classes(patterns: list[tuple[int, Pattern]], W_C: np.ndarray,
                   tau_c: float, tau_e: float = 0.0) -> DifferentialPatterns:
    """Multiplex patterns to every class whose classifier weight clears tau_c.

    Duplicated feature sets within one class keep the neuron with the
    largest classifier weight.
    """
    Cb = deterministic_binarize(W_C, tau_c)
    K = W_C.shape[0]
    per_class: dict[int, list[tuple[int, Pattern]]] = {k: [] for k in range(K)}
    orphans = []
    for i, p in patterns:
        ks = np.flatnonzero(Cb[:, i])
        if ks.size == 0:
            orphans.append((i, p))
        for k in ks:
            per_class[int(k)].append((i, p))
    for k in range(K):
        best: dict[tuple, tuple[int, Pattern]] = {}
        for i, p in per_class[k]:
            key = p.features
            if key not in best or W_C[k, i] > W_C[k, best[key][0]]:
                best[key] = (i, p)
        per_class[k] = sorted(best.values())
    return DifferentialPatterns(per_class, tau_e, tau_c, orphans)


def _discrete_forward(params: ModelParams, tau_e: float, X: np.ndarray):
    Wb = deterministic_binarize(params.W_E, tau_e)
    pre_enc = X @ Wb.T
    Z = (pre_enc + np.ceil(params.bias) >= 1).astype(np.float32)
    X_hat = (Z @ Wb >= 1).astype(np.float32)
    return Z, X_hat


def discretized_error(params: ModelParams, tau_e: float, tau_c: float,
                      D: LabeledDataset, lambda_c: float) -> float:
    """Mean error of the fully binarized network over the dataset.

    The discrete classifier scores a class by its count of active assigned
    neurons; the prediction (argmax, lowest class id on ties) is turned
    into a one-hot distribution and fed to the usual log loss, so a
    misclassified row costs -log(EPS_LOG).
    """
    X = D.data.to_dense(np.float32)
    alpha = density(D.data)
    Z, X_hat = _discrete_forward(params, tau_e, X)
    rec = recon_loss(X, X_hat, alpha) / D.n
    Cb = deterministic_binarize(params.W_C, tau_c)
    scores = Z @ Cb.T  # (n, K) active-assigned-neuron counts
    pred = scores.argmax(axis=1)  # argmax takes the lowest index on ties
    wrong = np.count_nonzero(pred != D.labels)
    cls = wrong * (-np.log(EPS_LOG)) / D.n
    return float(rec + lambda_c * cls)


def grid_search_thresholds(params: ModelParams, D: LabeledDataset,
                           grid_e=None, grid_c=None, lambda_c: float = 1.0,
                           ) -> tuple[float, float, DifferentialPatterns]:
    """Minimize the discretized error over the threshold grid.

    Ties break toward the smaller tau_e, then the smaller tau_c. The
    encoder-dependent work (hidden activations, reconstruction) is shared
    across the tau_c sweep of each tau_e.
    """
    if grid_e is None:
        grid_e = default_grid()
    if grid_c is None:
        grid_c = default_grid()
    grid_e = sorted(float(t) for t in grid_e)
    grid_c = sorted(float(t) for t in grid_c)
    if not grid_e or not grid_c:
        raise ValueError("threshold grids must be nonempty")
    for t in (*grid_e, *grid_c):
        if not 0 <= t < 1:
            raise ValueError(f"threshold {t} outside [0, 1)")

    X = D.data.to_dense(np.float32)
    alpha = density(D.data)
    wrong_cost = -np.log(EPS_LOG)
    best = (np.inf, None, None)
    for te in grid_e:
        Z, X_hat = _discrete_forward(params, te, X)
        rec = recon_loss(X, X_hat, alpha) / D.n
        for tc in grid_c:
            Cb = deterministic_binarize(params.W_C, tc)
            pred = (Z @ Cb.T).argmax(axis=1)
            cls = np.count_nonzero(pred != D.labels) * wrong_cost / D.n
            err = float(rec + lambda_c * cls)
            if err < best[0]:
                best = (err, te, tc)
    _, te, tc = best
    pats = extract_patterns(params.W_E, te)
    return te, tc, assign_classes(pats, params.W_C, tc, te)


def default_grid() -> list[float]:
    """tau in {0.05, 0.10, ..., 0.95}."""
    return [round(0.05 * i, 2) for i in range(1, 20)]
