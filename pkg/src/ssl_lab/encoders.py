"""Encoder primitives: affine maps, activations, batch norm, normalization.

An encoder is ``h(a) = act(W a + b)`` with ``act`` one of linear / relu /
srelu, optionally with batch normalization between the affine map and the
activation. The symmetric relu is ``srelu_b(x) = relu(x - b) - relu(-x - b)``
per coordinate: identity shrunk toward zero by the (nonnegative) bias b,
exactly zero on ``|x| <= b``. A predictor is a plain affine head.

Batch conventions match :mod:`ssl_lab.data`: batches are (n, dim) rows;
single vectors are accepted where documented and returned as vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .errors import (DegenerateInputError, DimensionError, ParameterError)

ACTIVATIONS = ("linear", "relu", "srelu")
ZERO_NORM_TOL = 1e-30
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

_FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderState:
    """Weights of one encoder branch (functional updates via replace())."""

    W: np.ndarray                      # (m, p)
    b: np.ndarray                      # (m,)
    activation: str = "linear"
    srelu_bias: np.ndarray | None = None   # (m,), required iff activation=srelu

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2:
            raise DimensionError("encoder W must be 2-D (m, p)")
        if b.shape != (W.shape[0],):
            raise DimensionError(
                f"encoder bias shape {b.shape} does not match W rows {W.shape[0]}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        sb = self.srelu_bias
        if self.activation == "srelu":
            if sb is None:
                raise ParameterError("srelu activation requires srelu_bias")
            sb = np.asarray(sb, dtype=np.float64)
            if sb.shape != (W.shape[0],):
                raise DimensionError(
                    f"srelu_bias shape {sb.shape} does not match W rows {W.shape[0]}")
            if (sb < 0).any():
                raise ParameterError("srelu_bias entries must be >= 0")
        elif sb is not None:
            raise ParameterError(
                f"srelu_bias only applies to srelu activation, not {self.activation!r}")
        object.__setattr__(self, "W", np.ascontiguousarray(W))
        object.__setattr__(self, "b", np.ascontiguousarray(b))
        if sb is not None:
            object.__setattr__(self, "srelu_bias", np.ascontiguousarray(sb))

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class PredictorState:
    """Affine prediction head g(h) = Wp h + bp."""

    W: np.ndarray                      # (k, m)
    b: np.ndarray                      # (k,)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise DimensionError("predictor needs W (k, m) and b (k,)")
        object.__setattr__(self, "W", np.ascontiguousarray(W))
        object.__setattr__(self, "b", np.ascontiguousarray(b))


@dataclass
class BatchNormState:
    """Per-feature batch normalization (the one deliberately mutable state).

    Train mode standardizes with the batch mean and *biased* batch variance
    and, when asked, folds them into the running statistics with momentum 0.1
    (running <- (1 - momentum) * running + momentum * batch). Eval mode uses
    the running statistics.
    """

    gamma: np.ndarray                  # (m,)
    beta: np.ndarray                   # (m,)
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM
    running_mean: np.ndarray = None    # type: ignore[assignment]
    running_var: np.ndarray = None     # type: ignore[assignment]

    def __post_init__(self):
        self.gamma = np.ascontiguousarray(np.asarray(self.gamma, dtype=np.float64))
        self.beta = np.ascontiguousarray(np.asarray(self.beta, dtype=np.float64))
        if self.gamma.ndim != 1 or self.gamma.shape != self.beta.shape:
            raise DimensionError("batch norm gamma/beta must be matching vectors")
        if self.eps <= 0:
            raise ParameterError(f"batch norm eps must be > 0, got {self.eps}")
        if not 0.0 < self.momentum <= 1.0:
            raise ParameterError(
                f"batch norm momentum must be in (0, 1], got {self.momentum}")
        m = self.gamma.shape[0]
        if self.running_mean is None:
            self.running_mean = np.zeros(m)
        if self.running_var is None:
            self.running_var = np.ones(m)
        self.running_mean = np.ascontiguousarray(np.asarray(self.running_mean, dtype=np.float64))
        self.running_var = np.ascontiguousarray(np.asarray(self.running_var, dtype=np.float64))
        if self.running_mean.shape != (m,) or self.running_var.shape != (m,):
            raise DimensionError("running stats must match gamma shape")

    @property
    def m(self) -> int:
        return self.gamma.shape[0]

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.gamma.copy(), self.beta.copy(), self.eps,
                              self.momentum, self.running_mean.copy(),
                              self.running_var.copy())


def fresh_batch_norm(m: int) -> BatchNormState:
    """Identity-initialized batch norm (gamma=1, beta=0)."""
    return BatchNormState(np.ones(m), np.zeros(m))


# ---------------------------------------------------------------------------
# forward maps
# ---------------------------------------------------------------------------

def _as_batch(a: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    a = np.ascontiguousarray(np.atleast_2d(a))
    if a.shape[1] != dim:
        raise DimensionError(f"{what}: expected width {dim}, got {a.shape[1]}")
    return a, single


def apply_activation(kind: str, Y: np.ndarray,
                     srelu_bias: np.ndarray | None = None) -> np.ndarray:
    """Apply an activation to a (n, m) pre-activation batch."""
    if kind == "linear":
        return Y
    if kind == "relu":
        return backend.relu_forward(Y)
    if kind == "srelu":
        if srelu_bias is None:
            raise ParameterError("srelu needs a bias vector")
        return backend.srelu_forward(Y, np.ascontiguousarray(srelu_bias, dtype=np.float64))
    raise ParameterError(f"unknown activation {kind!r}")


def activation_grad_mask(kind: str, Y: np.ndarray,
                         srelu_bias: np.ndarray | None = None) -> np.ndarray:
    """Derivative of the activation at Y (subgradient 0 exactly at kinks)."""
    if kind == "linear":
        return np.ones_like(Y)
    if kind == "relu":
        return backend.relu_grad_mask(Y)
    if kind == "srelu":
        if srelu_bias is None:
            raise ParameterError("srelu needs a bias vector")
        return backend.srelu_grad_mask(Y, np.ascontiguousarray(srelu_bias, dtype=np.float64))
    raise ParameterError(f"unknown activation {kind!r}")


def srelu(x: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Symmetric relu on a vector or batch; bias entries must be >= 0."""
    bias = np.asarray(bias, dtype=np.float64)
    if (bias < 0).any():
        raise ParameterError("srelu bias entries must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.ascontiguousarray(np.atleast_2d(x))
    # broadcast_to yields a read-only view; the kernels need an owned buffer
    full_bias = np.array(np.broadcast_to(bias, X.shape[1:]), dtype=np.float64)
    out = backend.srelu_forward(X, full_bias)
    return out[0] if single else out


def encoder_forward(enc: EncoderState, a: np.ndarray) -> np.ndarray:
    """h = act(W a + b) for a single view (p,) or a batch (n, p)."""
    A, single = _as_batch(a, enc.p, "encoder input")
    H = apply_activation(enc.activation, A @ enc.W.T + enc.b, enc.srelu_bias)
    return H[0] if single else H


def predictor_forward(pred: PredictorState, h: np.ndarray) -> np.ndarray:
    """g = Wp h + bp for a single representation or a batch."""
    H, single = _as_batch(h, pred.W.shape[1], "predictor input")
    G = H @ pred.W.T + pred.b
    return G[0] if single else G


def batch_norm_forward(bn: BatchNormState, batch: np.ndarray, mode: str = "train",
                       update_running: bool | None = None) -> np.ndarray:
    """Normalize a batch; train mode needs n >= 2 and updates running stats."""
    out, _ = _batch_norm_forward_cache(bn, batch, mode, update_running)
    return out


def _batch_norm_forward_cache(bn: BatchNormState, batch: np.ndarray, mode: str = "train",
                              update_running: bool | None = None):
    if mode not in ("train", "eval"):
        raise ParameterError(f"batch norm mode must be train|eval, got {mode!r}")
    Y, single = _as_batch(batch, bn.m, "batch norm input")
    if mode == "eval":
        inv_std = 1.0 / np.sqrt(bn.running_var + bn.eps)
        xhat = (Y - bn.running_mean) * inv_std
        out = bn.gamma * xhat + bn.beta
        cache = (xhat, inv_std)
        return (out[0] if single else out), cache
    if Y.shape[0] < 2:
        raise DegenerateInputError(
            f"batch norm train mode needs a batch of >= 2 rows, got {Y.shape[0]}")
    out, xhat, inv_std, mean, var = backend.batchnorm_train_forward(
        Y, bn.gamma, bn.beta, bn.eps)
    if update_running is None:
        update_running = True
    if update_running:
        bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * mean
        bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * var
    return out, (xhat, inv_std)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def l2_normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v|| for a single vector; zero norm is an error, not a skip."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError("l2_normalize expects a single vector")
    n = float(np.linalg.norm(v))
    if n <= ZERO_NORM_TOL:
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / n


def normalize_rows(enc: EncoderState) -> EncoderState:
    """New encoder state with unit-norm weight rows."""
    norms = backend.row_norms(enc.W)
    if (norms <= ZERO_NORM_TOL).any():
        bad = int(np.argmin(norms))
        raise DegenerateInputError(f"encoder row {bad} has zero norm")
    return replace(enc, W=enc.W / norms[:, None])


def normalize_columns(enc: EncoderState) -> EncoderState:
    """New encoder state with unit-norm weight columns."""
    norms = backend.row_norms(np.ascontiguousarray(enc.W.T))
    if (norms <= ZERO_NORM_TOL).any():
        bad = int(np.argmin(norms))
        raise DegenerateInputError(f"encoder column {bad} has zero norm")
    return replace(enc, W=enc.W / norms[None, :])


def normalize_batch_rows(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalize each row of a representation batch; returns (U, norms)."""
    H = np.ascontiguousarray(np.atleast_2d(np.asarray(H, dtype=np.float64)))
    norms = backend.row_norms(H)
    if (norms <= ZERO_NORM_TOL).any():
        bad = int(np.argmin(norms))
        raise DegenerateInputError(
            f"representation {bad} has zero norm and cannot be normalized")
    return H / norms[:, None], norms


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_matrix_csv(path, arr: np.ndarray, name: str) -> None:
    """Write one matrix as CSV with a `rows,cols,name` header line."""
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    if "," in name or "\n" in name:
        raise ParameterError(f"matrix name may not contain commas/newlines: {name!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{arr.shape[0]},{arr.shape[1]},{name}\n")
        for row in arr:
            fh.write(",".join(_FLOAT_FMT % v for v in row) + "\n")


def load_matrix_csv(path) -> tuple[np.ndarray, str]:
    """Inverse of :func:`save_matrix_csv`; round-trips at full precision."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        parts = header.split(",")
        if len(parts) != 3:
            raise ParameterError(f"bad checkpoint header {header!r}")
        rows, cols, name = int(parts[0]), int(parts[1]), parts[2]
        arr = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
    if arr.shape != (rows, cols):
        raise DimensionError(
            f"checkpoint body {arr.shape} does not match header ({rows}, {cols})")
    return arr, name
