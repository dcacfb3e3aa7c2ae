"""Loss zoo for masked two-view training, with hand-derived gradients.

Views are built by :mod:`ssl_lab.data` masking; each loss consumes one or two
view batches and a parameter bundle (:class:`ModelParams`). Gradients are
exact batch gradients (means over the batch), derived by hand and checked
against central finite differences in the test suite — no autograd anywhere.

Loss kinds
----------
``ncl_l2``            mean || n(h_o(a1)) - SG(n(h_t(a2))) ||^2 over the batch,
                      with n(.) the per-sample L2 normalization.
``ncl_l2_pred``       same, with an affine predictor on the online branch
                      inside the normalization: n(g(h_o(a1))).
``ncl_inner``         2 - 2 * mean < h_o(a1), SG(h_t(a2)) > (unnormalized
                      unless ``output_normalize`` is set on the params).
``ncl_inner_pred``    2 - 2 * mean < g(h_o(a1)), SG(h_t(a2)) >.
``linear_ncl``        2 - 2 * mean < W_o a1, W_t a2 >, both branches trained.
``linear_ncl_wd``     linear_ncl plus the ridge
                      ((1 - lam)/2) (||W_o||_F^2 + ||W_t||_F^2).
``cl_infonce``        -mean log( e^{tau s+} / sum_j e^{tau s_j} ) with one
                      shared encoder; similarities are raw inner products by
                      default, cosine via ``similarity='cosine'``. Negatives
                      are the other samples' second views unless an explicit
                      negative array is given.
``cl_infinite_batch`` the deterministic infinite-batch surrogate of the
                      contrastive loss for one-hot latents with M = I; a
                      function of the weight matrix alone (see
                      :func:`cl_infinite_batch_loss`).
``neg_cosine_simsiam`` symmetrized negative cosine with a shared encoder,
                      predictor on the live side, stop-gradient on the other.

Stop-gradient is a first-class flag: kinds with a target branch default to
stopping it, and ``stop_gradient=False`` turns the target into a trained
branch (used by the linear kinds, whose closed-form analysis trains both).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .data import DictionaryMatrix
from .encoders import (BatchNormState, EncoderState, PredictorState,
                       _batch_norm_forward_cache, activation_grad_mask,
                       apply_activation)
from .errors import DimensionError, ParameterError

LOSS_KINDS = (
    "ncl_l2", "ncl_l2_pred", "ncl_inner", "ncl_inner_pred",
    "linear_ncl", "linear_ncl_wd",
    "cl_infonce", "cl_infinite_batch", "neg_cosine_simsiam",
)

_TWO_BRANCH = {"ncl_l2", "ncl_l2_pred", "ncl_inner", "ncl_inner_pred",
               "linear_ncl", "linear_ncl_wd"}
_NEEDS_PREDICTOR = {"ncl_l2_pred", "ncl_inner_pred", "neg_cosine_simsiam"}
_SHARED = {"cl_infonce", "neg_cosine_simsiam"}


@dataclass(frozen=True)
class LossSpec:
    """Which loss to optimize, plus its scalar knobs.

    ``weight_decay`` is the decay *factor* lam in (0, 1] of linear_ncl_wd.
    ``stop_gradient`` of None means the kind's default (see module docs).
    ``similarity`` applies to cl_infonce only: 'inner' (default) or 'cosine'.
    """

    kind: str
    tau: float | None = None
    weight_decay: float | None = None
    neg_batch: int | None = None
    stop_gradient: bool | None = None
    similarity: str = "inner"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ParameterError(f"unknown loss kind {self.kind!r}")
        needs_tau = self.kind in ("cl_infonce", "cl_infinite_batch")
        if needs_tau:
            if self.tau is None or not self.tau > 0:
                raise ParameterError(f"{self.kind} needs temperature tau > 0")
        elif self.tau is not None:
            raise ParameterError(f"{self.kind} does not take tau")
        if self.kind == "linear_ncl_wd":
            if self.weight_decay is None or not 0.0 < self.weight_decay <= 1.0:
                raise ParameterError(
                    "linear_ncl_wd needs a decay factor weight_decay in (0, 1]")
        elif self.weight_decay is not None:
            raise ParameterError(f"{self.kind} does not take weight_decay")
        if self.neg_batch is not None:
            if self.kind != "cl_infonce":
                raise ParameterError("neg_batch applies to cl_infonce only")
            if self.neg_batch < 1:
                raise ParameterError(f"neg_batch must be >= 1, got {self.neg_batch}")
        if self.similarity not in ("inner", "cosine"):
            raise ParameterError(f"similarity must be inner|cosine, got {self.similarity!r}")
        if self.similarity == "cosine" and self.kind != "cl_infonce":
            raise ParameterError("similarity='cosine' applies to cl_infonce only")

    @property
    def stops_target_gradient(self) -> bool:
        if self.stop_gradient is not None:
            return self.stop_gradient
        return self.kind not in ("linear_ncl", "linear_ncl_wd")


@dataclass
class EncoderBlock:
    """One affine(+batch norm)+activation stage of an encoder stack."""

    enc: EncoderState
    bn: BatchNormState | None = None


@dataclass
class ModelParams:
    """Everything a loss evaluation needs besides the views.

    ``online`` / ``target`` are encoder stacks (usually one block; the
    stacked two-block variant exists for one experiment preset). Shared-
    encoder kinds (cl_*, simsiam) require ``target=None``. The predictor is
    the online-side affine head for the *_pred / simsiam kinds and acts as a
    shared projector when present with cl_infonce.
    """

    online: list[EncoderBlock]
    target: list[EncoderBlock] | None = None
    predictor: PredictorState | None = None
    output_normalize: bool = False
    bn_mode: str = "train"


@dataclass
class BlockGrads:
    dW: np.ndarray
    db: np.ndarray
    dgamma: np.ndarray | None = None
    dbeta: np.ndarray | None = None


@dataclass
class GradientSet:
    """Batch gradients, aligned with the ModelParams layout.

    ``online``/``target`` hold one BlockGrads per encoder block (target is
    None under stop-gradient). Single-block convenience views are exposed as
    dW_online / db_online / dW_target / db_target.
    """

    online: list[BlockGrads]
    target: list[BlockGrads] | None = None
    dW_pred: np.ndarray | None = None
    db_pred: np.ndarray | None = None

    @property
    def dW_online(self) -> np.ndarray:
        return self.online[0].dW

    @property
    def db_online(self) -> np.ndarray:
        return self.online[0].db

    @property
    def dW_target(self) -> np.ndarray | None:
        return None if self.target is None else self.target[0].dW

    @property
    def db_target(self) -> np.ndarray | None:
        return None if self.target is None else self.target[0].db


# ---------------------------------------------------------------------------
# branch forward / backward
# ---------------------------------------------------------------------------

def _forward_stack(blocks, A, bn_mode, update_running):
    """Run an encoder stack; returns (H, caches) with one cache per block."""
    H = np.ascontiguousarray(np.atleast_2d(np.asarray(A, dtype=np.float64)))
    caches = []
    for block in blocks:
        enc = block.enc
        if H.shape[1] != enc.p:
            raise DimensionError(
                f"view width {H.shape[1]} does not match encoder width {enc.p}")
        A_in = H
        Y = A_in @ enc.W.T + enc.b
        if block.bn is not None:
            Yb, (xhat, inv_std) = _batch_norm_forward_cache(
                block.bn, Y, bn_mode, update_running)
        else:
            Yb, xhat, inv_std = Y, None, None
        mask = activation_grad_mask(enc.activation, Yb, enc.srelu_bias)
        H = apply_activation(enc.activation, Yb, enc.srelu_bias)
        caches.append((A_in, mask, xhat, inv_std))
    return H, caches


def _backward_stack(blocks, caches, dH):
    """Backprop through an encoder stack; returns per-block grads."""
    grads: list[BlockGrads | None] = [None] * len(blocks)
    for k in range(len(blocks) - 1, -1, -1):
        enc = blocks[k].enc
        A_in, mask, xhat, inv_std = caches[k]
        dYb = dH * mask
        if blocks[k].bn is not None:
            dY, dgamma, dbeta = backend.batchnorm_backward(
                np.ascontiguousarray(dYb), xhat, inv_std, blocks[k].bn.gamma)
        else:
            dY, dgamma, dbeta = dYb, None, None
        grads[k] = BlockGrads(dW=dY.T @ A_in, db=dY.sum(axis=0),
                              dgamma=dgamma, dbeta=dbeta)
        if k > 0:
            dH = dY @ enc.W
    return grads  # type: ignore[return-value]


_NORM_GUARD = 1e-12


def _normalize_rows_safe(P):
    """Row-normalize with the norm floored at ``_NORM_GUARD``.

    Collapse dynamics can drive every unit of a sample's representation
    into the flat part of the activation, leaving an exactly-zero row.
    The batch losses follow the usual framework convention — divide by
    ``max(norm, eps)`` — so such a row contributes a bounded loss term
    instead of aborting the step (with a dead activation row the backward
    mask then zeroes its gradient too).  Exact-expectation code keeps the
    strict :func:`ssl_lab.encoders.normalize_batch_rows` check instead.
    """
    norms = np.maximum(np.sqrt(np.einsum("ij,ij->i", P, P)), _NORM_GUARD)
    return P / norms[:, None], norms


def _forward_head(params, H, use_predictor, normalize):
    """Optional predictor then optional row normalization; returns (U, cache)."""
    if use_predictor:
        pred = params.predictor
        P = H @ pred.W.T + pred.b
    else:
        P = H
    if normalize:
        U, norms = _normalize_rows_safe(P)
    else:
        U, norms = P, None
    return U, (H, U, norms)


def _backward_head(params, cache, dU, use_predictor):
    """Backprop the head; returns (dH, dWp, dbp)."""
    H, U, norms = cache
    if norms is not None:
        dP = (dU - U * np.einsum("ij,ij->i", U, dU)[:, None]) / norms[:, None]
    else:
        dP = dU
    if use_predictor:
        pred = params.predictor
        dWp = dP.T @ H
        dbp = dP.sum(axis=0)
        dH = dP @ pred.W
        return dH, dWp, dbp
    return dP, None, None


def _accumulate(dst: list[BlockGrads], src: list[BlockGrads]) -> None:
    for a, b in zip(dst, src):
        a.dW += b.dW
        a.db += b.db
        if a.dgamma is not None:
            a.dgamma += b.dgamma
            a.dbeta += b.dbeta


def _plan(spec: LossSpec, params: ModelParams):
    """Resolve per-kind branch roles; raises on inconsistent params."""
    kind = spec.kind
    if kind == "cl_infinite_batch":
        raise ParameterError(
            "cl_infinite_batch is a deterministic surrogate; use "
            "cl_infinite_batch_loss/gradient instead of the batch API")
    if kind in _SHARED:
        if params.target is not None:
            raise ParameterError(f"{kind} uses one shared encoder; target must be None")
    else:
        if params.target is None:
            raise ParameterError(f"{kind} needs a target branch")
    if kind in _NEEDS_PREDICTOR:
        if params.predictor is None:
            raise ParameterError(f"{kind} needs a predictor")
    elif params.predictor is not None and kind != "cl_infonce":
        raise ParameterError(f"{kind} does not use a predictor")
    if kind in ("linear_ncl", "linear_ncl_wd"):
        for side in (params.online, params.target):
            if len(side) != 1 or side[0].enc.activation != "linear" or side[0].bn is not None:
                raise ParameterError(
                    f"{kind} is defined for a single plain linear block per branch")
        if params.output_normalize:
            raise ParameterError(f"{kind} does not support output normalization")
    if kind in ("ncl_l2", "ncl_l2_pred"):
        normalize = True
    elif kind == "cl_infonce":
        normalize = spec.similarity == "cosine"
    elif kind == "neg_cosine_simsiam":
        normalize = True  # cosine is definitional here
    else:
        normalize = params.output_normalize
    online_pred = kind in ("ncl_l2_pred", "ncl_inner_pred")
    return normalize, online_pred


def _check_views(views1, views2):
    v1 = np.ascontiguousarray(np.atleast_2d(np.asarray(views1, dtype=np.float64)))
    v2 = np.ascontiguousarray(np.atleast_2d(np.asarray(views2, dtype=np.float64)))
    if v1.shape != v2.shape:
        raise DimensionError(f"view batches disagree: {v1.shape} vs {v2.shape}")
    if v1.shape[0] < 1:
        raise DimensionError("empty view batch")
    return v1, v2


def _ridge(spec: LossSpec, params: ModelParams) -> float:
    lam = spec.weight_decay
    Wo = params.online[0].enc.W
    Wt = params.target[0].enc.W
    return 0.5 * (1.0 - lam) * (float(np.sum(Wo * Wo)) + float(np.sum(Wt * Wt)))


# ---------------------------------------------------------------------------
# the empirical losses
# ---------------------------------------------------------------------------

def loss_and_gradient(spec: LossSpec, params: ModelParams, views1, views2,
                      negatives=None, compute_grad: bool = True,
                      update_running: bool | None = None):
    """Evaluate one loss on a batch of view pairs; optionally its gradients.

    Returns ``(loss, GradientSet | None)``. ``negatives`` applies to
    cl_infonce only: an (n, B, p) array of negative views, or None for
    in-batch negatives.
    """
    normalize, online_pred = _plan(spec, params)
    kind = spec.kind
    if negatives is not None and kind != "cl_infonce":
        raise ParameterError(f"{kind} does not take negatives")

    if kind == "cl_infonce":
        return _infonce(spec, params, views1, views2, negatives, normalize,
                        compute_grad, update_running)
    if kind == "neg_cosine_simsiam":
        return _simsiam(spec, params, views1, views2, compute_grad, update_running)

    v1, v2 = _check_views(views1, views2)
    n = v1.shape[0]
    U, o_caches = _forward_stack(params.online, v1, params.bn_mode, update_running)
    U, o_head = _forward_head(params, U, online_pred, normalize)
    V, t_caches = _forward_stack(params.target, v2, params.bn_mode, update_running)
    V, t_head = _forward_head(params, V, False, normalize)

    if kind in ("ncl_l2", "ncl_l2_pred"):
        diff = U - V
        loss = float(np.einsum("ij,ij->", diff, diff)) / n
        dU = (2.0 / n) * diff
        dV = -(2.0 / n) * diff
    else:  # inner-product family
        loss = 2.0 - 2.0 * float(np.einsum("ij,ij->", U, V)) / n
        dU = -(2.0 / n) * V
        dV = -(2.0 / n) * U
        if kind == "linear_ncl_wd":
            loss += _ridge(spec, params)

    if not compute_grad:
        return loss, None

    dH, dWp, dbp = _backward_head(params, o_head, dU, online_pred)
    online_grads = _backward_stack(params.online, o_caches, dH)
    target_grads = None
    if not spec.stops_target_gradient:
        dHt, _, _ = _backward_head(params, t_head, dV, False)
        target_grads = _backward_stack(params.target, t_caches, dHt)
    if kind == "linear_ncl_wd":
        lam = spec.weight_decay
        online_grads[0].dW += (1.0 - lam) * params.online[0].enc.W
        if target_grads is None:
            target_grads = [BlockGrads(dW=np.zeros_like(params.target[0].enc.W),
                                       db=np.zeros_like(params.target[0].enc.b))]
        target_grads[0].dW += (1.0 - lam) * params.target[0].enc.W
    return loss, GradientSet(online=online_grads, target=target_grads,
                             dW_pred=dWp, db_pred=dbp)


def _infonce(spec, params, views1, views2, negatives, normalize,
             compute_grad, update_running):
    v1, v2 = _check_views(views1, views2)
    n = v1.shape[0]
    use_proj = params.predictor is not None
    tau = spec.tau

    U, a_caches = _forward_stack(params.online, v1, params.bn_mode, update_running)
    U, a_head = _forward_head(params, U, use_proj, normalize)
    V, p_caches = _forward_stack(params.online, v2, params.bn_mode, update_running)
    V, p_head = _forward_head(params, V, use_proj, normalize)

    if negatives is None:
        # In-batch negatives: anchor i scores against the B partner
        # representations that follow it cyclically.  Every score is an
        # entry of U @ V.T, so similarities and gradients reduce to (n, n)
        # matrix products instead of an (n, B, m) gather.
        B = spec.neg_batch if spec.neg_batch is not None else n - 1
        if not 1 <= B <= n - 1:
            raise ParameterError(
                f"in-batch negatives need 1 <= neg_batch <= batch-1, got {B} "
                f"with batch {n}")
        rows = np.arange(n)
        idx = (rows[:, None] + 1 + np.arange(B)[None, :]) % n
        S = U @ V.T
        s_pos = S[rows, rows]
        s_neg = S[rows[:, None], idx]
        NEG = neg_caches = neg_head = None
    else:
        negatives = np.asarray(negatives, dtype=np.float64)
        if negatives.ndim != 3 or negatives.shape[0] != n or negatives.shape[2] != v1.shape[1]:
            raise DimensionError(
                f"negatives must be (batch, B, p), got {negatives.shape}")
        B = negatives.shape[1]
        flat = np.ascontiguousarray(negatives.reshape(n * B, -1))
        NW, neg_caches = _forward_stack(params.online, flat, params.bn_mode, update_running)
        NW, neg_head = _forward_head(params, NW, use_proj, normalize)
        NEG = NW.reshape(n, B, -1)
        s_pos = np.einsum("ij,ij->i", U, V)            # (n,)
        s_neg = np.einsum("ij,ikj->ik", U, NEG)        # (n, B)

    logits = tau * np.concatenate([s_pos[:, None], s_neg], axis=1)
    mx = logits.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
    loss = float(np.mean(lse - logits[:, 0]))
    if not compute_grad:
        return loss, None

    probs = np.exp(logits - lse[:, None])              # (n, 1+B)
    dlog = probs / n
    dlog[:, 0] -= 1.0 / n                              # d loss / d logits

    if NEG is None:
        # Scatter the logit gradients into an (n, n) pair-weight matrix:
        # dU = tau * Wmat @ V and dV = tau * Wmat.T @ U cover the positive
        # and every negative role of each representation in one pass.
        Wmat = np.zeros((n, n))
        Wmat[rows[:, None], idx] = dlog[:, 1:]
        Wmat[rows, rows] = dlog[:, 0]
        dU = tau * (Wmat @ V)
        dV = tau * (Wmat.T @ U)
        dH_a, dWp, dbp = _backward_head(params, a_head, dU, use_proj)
        grads = _backward_stack(params.online, a_caches, dH_a)
        dH_p, dWp2, dbp2 = _backward_head(params, p_head, dV, use_proj)
        _accumulate(grads, _backward_stack(params.online, p_caches, dH_p))
        if use_proj:
            dWp += dWp2
            dbp += dbp2
    else:
        dU = tau * (dlog[:, :1] * V + np.einsum("ik,ikj->ij", dlog[:, 1:], NEG))
        dV = tau * dlog[:, :1] * U
        dNEG = tau * dlog[:, 1:, None] * U[:, None, :]     # (n, B, m)
        dH_a, dWp, dbp = _backward_head(params, a_head, dU, use_proj)
        grads = _backward_stack(params.online, a_caches, dH_a)
        dH_p, dWp2, dbp2 = _backward_head(params, p_head, dV, use_proj)
        _accumulate(grads, _backward_stack(params.online, p_caches, dH_p))
        dH_n, dWp3, dbp3 = _backward_head(
            params, neg_head, dNEG.reshape(n * B, -1), use_proj)
        _accumulate(grads, _backward_stack(params.online, neg_caches, dH_n))
        if use_proj:
            dWp += dWp2 + dWp3
            dbp += dbp2 + dbp3

    return loss, GradientSet(online=grads, target=None, dW_pred=dWp, db_pred=dbp)


def _simsiam(spec, params, views1, views2, compute_grad, update_running):
    v1, v2 = _check_views(views1, views2)
    n = v1.shape[0]
    pred = params.predictor

    H1, c1 = _forward_stack(params.online, v1, params.bn_mode, update_running)
    H2, c2 = _forward_stack(params.online, v2, params.bn_mode, update_running)
    P1 = H1 @ pred.W.T + pred.b
    P2 = H2 @ pred.W.T + pred.b
    P1n, p1norm = _normalize_rows_safe(P1)
    P2n, p2norm = _normalize_rows_safe(P2)
    H1n, _ = _normalize_rows_safe(H1)
    H2n, _ = _normalize_rows_safe(H2)

    loss = -0.5 / n * float(np.einsum("ij,ij->", P1n, H2n)
                            + np.einsum("ij,ij->", P2n, H1n))
    if not compute_grad:
        return loss, None

    def through_norm(dUn, Un, norms):
        return (dUn - Un * np.einsum("ij,ij->i", Un, dUn)[:, None]) / norms[:, None]

    # stop-gradient on the normalized encoder targets H2n / H1n
    dP1 = through_norm(-0.5 / n * H2n, P1n, p1norm)
    dP2 = through_norm(-0.5 / n * H1n, P2n, p2norm)
    dWp = dP1.T @ H1 + dP2.T @ H2
    dbp = dP1.sum(axis=0) + dP2.sum(axis=0)
    grads = _backward_stack(params.online, c1, dP1 @ pred.W)
    _accumulate(grads, _backward_stack(params.online, c2, dP2 @ pred.W))
    return loss, GradientSet(online=grads, target=None, dW_pred=dWp, db_pred=dbp)


# ---------------------------------------------------------------------------
# named conveniences + per-sample terms
# ---------------------------------------------------------------------------

def loss_value(spec: LossSpec, params: ModelParams, views1, views2,
               negatives=None) -> float:
    """Loss only (no gradient, no running-stat update)."""
    loss, _ = loss_and_gradient(spec, params, views1, views2, negatives,
                                compute_grad=False, update_running=False)
    return loss


def empirical_gradient(spec: LossSpec, params: ModelParams, views1, views2,
                       negatives=None):
    """Alias of :func:`loss_and_gradient` with gradients on."""
    return loss_and_gradient(spec, params, views1, views2, negatives,
                             compute_grad=True)


def ncl_l2_loss(params: ModelParams, views1, views2) -> float:
    return loss_value(LossSpec("ncl_l2"), params, views1, views2)


def ncl_inner_loss(params: ModelParams, views1, views2) -> float:
    return loss_value(LossSpec("ncl_inner"), params, views1, views2)


def linear_ncl_loss(params: ModelParams, views1, views2,
                    weight_decay: float | None = None) -> float:
    spec = (LossSpec("linear_ncl") if weight_decay is None
            else LossSpec("linear_ncl_wd", weight_decay=weight_decay))
    return loss_value(spec, params, views1, views2)


def cl_infonce_loss(params: ModelParams, views1, views2, tau: float,
                    negatives=None, similarity: str = "inner") -> float:
    return loss_value(LossSpec("cl_infonce", tau=tau, similarity=similarity),
                      params, views1, views2, negatives)


def neg_cosine_loss(params: ModelParams, views1, views2) -> float:
    return loss_value(LossSpec("neg_cosine_simsiam"), params, views1, views2)


def per_sample_loss(spec: LossSpec, params: ModelParams, views1, views2,
                    negatives=None) -> tuple[np.ndarray, float]:
    """Per-sample loss contributions plus a deterministic addend.

    ``loss == mean(terms) + addend`` exactly; used by Monte Carlo checks.
    """
    normalize, online_pred = _plan(spec, params)
    kind = spec.kind
    v1, v2 = _check_views(views1, views2)
    n = v1.shape[0]
    if kind == "cl_infonce":
        U, _ = _forward_stack(params.online, v1, params.bn_mode, False)
        U, _ = _forward_head(params, U, params.predictor is not None, normalize)
        V, _ = _forward_stack(params.online, v2, params.bn_mode, False)
        V, _ = _forward_head(params, V, params.predictor is not None, normalize)
        if negatives is None:
            B = spec.neg_batch if spec.neg_batch is not None else n - 1
            idx = (np.arange(n)[:, None] + 1 + np.arange(B)[None, :]) % n
            NEG = V[idx]
        else:
            negatives = np.asarray(negatives, dtype=np.float64)
            flat = np.ascontiguousarray(negatives.reshape(-1, negatives.shape[2]))
            NW, _ = _forward_stack(params.online, flat, params.bn_mode, False)
            NW, _ = _forward_head(params, NW, params.predictor is not None, normalize)
            NEG = NW.reshape(n, negatives.shape[1], -1)
        logits = spec.tau * np.concatenate(
            [np.einsum("ij,ij->i", U, V)[:, None],
             np.einsum("ij,ikj->ik", U, NEG)], axis=1)
        mx = logits.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
        return lse - logits[:, 0], 0.0
    if kind == "neg_cosine_simsiam":
        H1, _ = _forward_stack(params.online, v1, params.bn_mode, False)
        H2, _ = _forward_stack(params.online, v2, params.bn_mode, False)
        pred = params.predictor
        P1n, _ = _normalize_rows_safe(H1 @ pred.W.T + pred.b)
        P2n, _ = _normalize_rows_safe(H2 @ pred.W.T + pred.b)
        H1n, _ = _normalize_rows_safe(H1)
        H2n, _ = _normalize_rows_safe(H2)
        terms = -0.5 * (np.einsum("ij,ij->i", P1n, H2n)
                        + np.einsum("ij,ij->i", P2n, H1n))
        return terms, 0.0
    U, _ = _forward_stack(params.online, v1, params.bn_mode, False)
    U, _ = _forward_head(params, U, online_pred, normalize)
    V, _ = _forward_stack(params.target, v2, params.bn_mode, False)
    V, _ = _forward_head(params, V, False, normalize)
    if kind in ("ncl_l2", "ncl_l2_pred"):
        diff = U - V
        return np.einsum("ij,ij->i", diff, diff), 0.0
    terms = 2.0 - 2.0 * np.einsum("ij,ij->i", U, V)
    addend = _ridge(spec, params) if kind == "linear_ncl_wd" else 0.0
    return terms, addend


# ---------------------------------------------------------------------------
# infinite-batch contrastive surrogate (deterministic in W)
# ---------------------------------------------------------------------------

def _surrogate_setup(W, alpha, tau):
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionError("surrogate expects a weight matrix (m, d)")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if not tau > 0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    d = W.shape[1]
    if d > 20:
        raise ParameterError(
            f"surrogate enumerates 2^d mask patterns; d={d} is too large")
    R = np.maximum(W, 0.0)
    G = R.T @ R                                        # (d, d) gram of relu'd columns
    # all 2^d diagonal mask patterns for the second view, with probabilities
    patterns = ((np.arange(2 ** d)[:, None] >> np.arange(d)[None, :]) & 1
                ).astype(np.float64)                   # (2^d, d)
    k = patterns.sum(axis=1)
    with np.errstate(divide="ignore"):
        logw = k * np.log(alpha) if alpha > 0 else np.where(k == 0, 0.0, -np.inf)
        if alpha < 1:
            logw = logw + (d - k) * np.log1p(-alpha)
        else:
            logw = np.where(k == d, logw, -np.inf)
    weights = np.exp(logw)
    return W, R, G, patterns, weights, d


def cl_infinite_batch_loss(W, alpha: float, tau: float) -> float:
    """Infinite-batch contrastive surrogate for one-hot latents, M = I.

    For each anchor coordinate i the positive logit is
    tau * D1_ii * D2_ii * <relu(W_i), relu(W_i)> and coordinate j contributes
    the denominator term tau * D1_ii * D2_jj * <relu(W_i), relu(W_j)> under
    one shared mask pair; the loss sums -E log softmax over the d anchors.
    """
    _, _, G, patterns, weights, d = _surrogate_setup(W, alpha, tau)
    total = 0.0
    for i in range(d):
        logits = tau * patterns * G[i]                 # (2^d, d), D1_ii = 1
        mx = logits.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
        pos = logits[:, i]
        term_live = float(weights @ (lse - pos))       # D1_ii = 1, prob alpha
        term_dead = float(np.log(d))                   # all logits zero
        total += alpha * term_live + (1.0 - alpha) * term_dead
    return total


def cl_infinite_batch_gradient(W, alpha: float, tau: float) -> np.ndarray:
    """Gradient of :func:`cl_infinite_batch_loss` in W (subgradient 0 at kinks)."""
    W, R, G, patterns, weights, d = _surrogate_setup(W, alpha, tau)
    dG = np.zeros((d, d))
    for i in range(d):
        logits = tau * patterns * G[i]
        mx = logits.max(axis=1, keepdims=True)
        probs = np.exp(logits - mx)
        probs /= probs.sum(axis=1, keepdims=True)
        dlogit = probs.copy()
        dlogit[:, i] -= 1.0
        # d logits_{.,j} / d G_{i,j} = tau * D2_jj, weighted over patterns
        dG[i] += alpha * tau * ((weights[:, None] * dlogit) * patterns).sum(axis=0)
    dR = R @ (dG + dG.T)
    return np.where(W > 0.0, dR, 0.0)


# ---------------------------------------------------------------------------
# population losses / gradients (independent masks)
# ---------------------------------------------------------------------------

def _pop_args(M, alpha, kappa, sigma0):
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if not 0.0 < kappa <= 1.0:
        raise ParameterError(f"kappa must be in (0, 1], got {kappa}")
    if sigma0 < 0:
        raise ParameterError(f"sigma0 must be >= 0, got {sigma0}")
    return M


def population_loss_linear(W_online, W_target, M, alpha: float, kappa: float,
                           sigma0: float, weight_decay: float | None = None) -> float:
    """Exact expectation of the linear matching loss under independent masks.

    2 - 2 alpha^2 (kappa tr(W_o M M^T W_t^T) + sigma0^2 tr(W_o W_t^T)), plus
    the ridge ((1 - lam)/2)(||W_o||^2 + ||W_t||^2) when a decay factor is
    given. Uses E[D1 A D2] = alpha^2 A and E[x x^T] = kappa M M^T + sigma0^2 I
    for symmetric sparse latents.
    """
    M = _pop_args(M, alpha, kappa, sigma0)
    Wo = np.asarray(W_online, dtype=np.float64)
    Wt = np.asarray(W_target, dtype=np.float64)
    WoM = Wo @ M.entries
    WtM = Wt @ M.entries
    val = 2.0 - 2.0 * alpha ** 2 * (kappa * float(np.sum(WoM * WtM))
                                    + sigma0 ** 2 * float(np.sum(Wo * Wt)))
    if weight_decay is not None:
        val += 0.5 * (1.0 - weight_decay) * (float(np.sum(Wo * Wo))
                                             + float(np.sum(Wt * Wt)))
    return val


def population_gradient_linear(online: EncoderState, target: EncoderState, M,
                               alpha: float, kappa: float, sigma0: float,
                               weight_decay: float | None = None) -> GradientSet:
    """Gradient of :func:`population_loss_linear` w.r.t. both branches."""
    M = _pop_args(M, alpha, kappa, sigma0)
    MMt = M.entries @ M.entries.T
    Wo, Wt = online.W, target.W

    def grad(W_self, W_other):
        g = -2.0 * alpha ** 2 * (kappa * W_other @ MMt + sigma0 ** 2 * W_other)
        if weight_decay is not None:
            g = g + (1.0 - weight_decay) * W_self
        return g

    zo = np.zeros_like(online.b)
    zt = np.zeros_like(target.b)
    return GradientSet(online=[BlockGrads(dW=grad(Wo, Wt), db=zo)],
                       target=[BlockGrads(dW=grad(Wt, Wo), db=zt)])


def population_loss_srelu_warm(online: EncoderState, target: EncoderState,
                               alpha: float, kappa: float, sigma0: float,
                               validate: bool = True) -> float:
    """Exact expectation of the symmetric-relu matching loss near identity.

    Valid for M = I, W = I + Delta with small Delta and biases inside their
    admissible window (checked when ``validate``):

    2 - 2 a^2 k sum_i [ (1 + D^o_ii - b^o_i)(1 + D^t_ii - b^t_i)
                        + s0^2 (1 + D^o_ii)(1 + D^t_ii)
                        + a^2 (k + s0^2) sum_{j != i} D^o_ij D^t_ij ].
    """
    Do, Dt, bo, bt = _warm_setup(online, target, alpha, kappa, sigma0, validate)
    d = Do.shape[0]
    diag_o = np.diag(Do)
    diag_t = np.diag(Dt)
    off = np.sum(Do * Dt) - float(np.sum(diag_o * diag_t))
    s = float(np.sum((1 + diag_o - bo) * (1 + diag_t - bt)
                     + sigma0 ** 2 * (1 + diag_o) * (1 + diag_t)))
    s += alpha ** 2 * (kappa + sigma0 ** 2) * off
    return 2.0 - 2.0 * alpha ** 2 * kappa * s


def population_gradient_srelu_warm(online: EncoderState, target: EncoderState,
                                   alpha: float, kappa: float, sigma0: float,
                                   validate: bool = True) -> GradientSet:
    """Gradient of :func:`population_loss_srelu_warm` w.r.t. both weight matrices.

    Diagonal: -2 a^2 k ((1 + s0^2)(1 + D_other_ii) - b_other_i); off-diagonal:
    -2 a^2 k * a^2 (k + s0^2) * D_other_ij. Biases are fixed (not trained).
    """
    Do, Dt, bo, bt = _warm_setup(online, target, alpha, kappa, sigma0, validate)

    def grad(D_other, b_other):
        g = -2.0 * alpha ** 2 * kappa * alpha ** 2 * (kappa + sigma0 ** 2) * D_other
        diag = -2.0 * alpha ** 2 * kappa * (
            (1.0 + sigma0 ** 2) * (1.0 + np.diag(D_other)) - b_other)
        np.fill_diagonal(g, diag)
        return g

    return GradientSet(
        online=[BlockGrads(dW=grad(Dt, bt), db=np.zeros_like(online.b))],
        target=[BlockGrads(dW=grad(Do, bo), db=np.zeros_like(target.b))])


def _warm_setup(online, target, alpha, kappa, sigma0, validate):
    if online.activation != "srelu" or target.activation != "srelu":
        raise ParameterError("warm-start population formulas need srelu encoders")
    Wo, Wt = online.W, target.W
    if Wo.shape != Wt.shape or Wo.shape[0] != Wo.shape[1]:
        raise DimensionError("warm-start formulas need square, equal-shape weights")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if not 0.0 < kappa <= 1.0:
        raise ParameterError(f"kappa must be in (0, 1], got {kappa}")
    if sigma0 < 0:
        raise ParameterError(f"sigma0 must be >= 0, got {sigma0}")
    d = Wo.shape[0]
    Do = Wo - np.eye(d)
    Dt = Wt - np.eye(d)
    if validate:
        from .errors import AssumptionError
        from .oracles import check_assumptions
        report = check_assumptions(online, target, sigma0, kappa=kappa)
        if not report.all_passed:
            failed = [name for name, entry in report.entries.items()
                      if not entry.passed]
            raise AssumptionError(
                f"warm-start assumptions violated: {', '.join(failed)}; "
                f"details: {report.summary()}")
    return Do, Dt, online.srelu_bias, target.srelu_bias


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

def verify_gradients(spec: LossSpec, params: ModelParams, views1, views2,
                     negatives=None, step: float = 1e-6) -> dict[str, float]:
    """Central-difference check of every gradient block.

    Returns {block_name: relative_error} plus the overall 'max'. Per block the
    error is ||analytic - fd||_inf over a robust scale: the block's own
    magnitude, floored at 1e-3 of the largest block, so parameters whose true
    gradient is identically zero (e.g. an affine bias swallowed by batch-norm
    mean subtraction) measure FD roundoff against the real gradient scale
    instead of against zero. Batch norm states are copied for every probe so
    running stats never move.

    neg_cosine_simsiam shares one encoder between a live branch and a
    stop-gradient branch, so its probes evaluate the stop-respecting
    objective: the normalized encoder targets are frozen at their base
    values, which is exactly the function the analytic gradient
    differentiates (and the function SGD descends).
    """
    import copy

    base_params = params
    _, grads = loss_and_gradient(spec, base_params, views1, views2, negatives,
                                 compute_grad=True, update_running=False)

    if spec.kind == "neg_cosine_simsiam":
        v1c, v2c = _check_views(views1, views2)
        nb = v1c.shape[0]
        Hb1, _ = _forward_stack(base_params.online, v1c, base_params.bn_mode, False)
        Hb2, _ = _forward_stack(base_params.online, v2c, base_params.bn_mode, False)
        H1n_base, _ = _normalize_rows_safe(Hb1)
        H2n_base, _ = _normalize_rows_safe(Hb2)

        def eval_loss(p):
            H1, _ = _forward_stack(p.online, v1c, p.bn_mode, False)
            H2, _ = _forward_stack(p.online, v2c, p.bn_mode, False)
            P1n, _ = _normalize_rows_safe(H1 @ p.predictor.W.T + p.predictor.b)
            P2n, _ = _normalize_rows_safe(H2 @ p.predictor.W.T + p.predictor.b)
            return -0.5 / nb * float(np.einsum("ij,ij->", P1n, H2n_base)
                                     + np.einsum("ij,ij->", P2n, H1n_base))
    else:
        def eval_loss(p):
            loss, _ = loss_and_gradient(spec, p, views1, views2, negatives,
                                        compute_grad=False, update_running=False)
            return loss

    def fd_on(get_arr, set_arr, shape):
        g = np.zeros(shape)
        flat = g.ravel()
        for k in range(flat.size):
            p_plus = copy.deepcopy(base_params)
            arr = get_arr(p_plus).copy()
            arr.ravel()[k] += step
            set_arr(p_plus, arr)
            lp = eval_loss(p_plus)
            p_minus = copy.deepcopy(base_params)
            arr = get_arr(p_minus).copy()
            arr.ravel()[k] -= step
            set_arr(p_minus, arr)
            lm = eval_loss(p_minus)
            flat[k] = (lp - lm) / (2 * step)
        return g

    from dataclasses import replace as dc_replace

    report: dict[str, float] = {}
    pending: list[tuple[str, np.ndarray, np.ndarray]] = []

    def compare(name, analytic, fd):
        pending.append((name, np.asarray(analytic, dtype=np.float64),
                        np.asarray(fd, dtype=np.float64)))

    def block_accessors(side_name, side_getter, k, field_name):
        def get_arr(p):
            block = side_getter(p)[k]
            if field_name == "W":
                return block.enc.W
            if field_name == "b":
                return block.enc.b
            return getattr(block.bn, field_name)

        def set_arr(p, arr):
            block = side_getter(p)[k]
            if field_name in ("W", "b"):
                side_getter(p)[k] = EncoderBlock(
                    enc=dc_replace(block.enc, **{field_name: arr}), bn=block.bn)
            else:
                setattr(block.bn, field_name, arr)
        return get_arr, set_arr

    side_grads = [("online", lambda p: p.online, params.online, grads.online)]
    if grads.target is not None:
        side_grads.append(("target", lambda p: p.target, params.target, grads.target))
    for side_name, getter, blocks, blist in side_grads:
        for k, (block, bg) in enumerate(zip(blocks, blist)):
            for field_name, analytic in (("W", bg.dW), ("b", bg.db),
                                         ("gamma", bg.dgamma), ("beta", bg.dbeta)):
                if analytic is None:
                    continue
                get_arr, set_arr = block_accessors(side_name, getter, k, field_name)
                fd = fd_on(get_arr, set_arr, analytic.shape)
                compare(f"{side_name}[{k}].{field_name}", analytic, fd)
    if grads.dW_pred is not None:
        fd = fd_on(lambda p: p.predictor.W,
                   lambda p, a: setattr(p, "predictor", dc_replace(p.predictor, W=a)),
                   grads.dW_pred.shape)
        compare("predictor.W", grads.dW_pred, fd)
        fd = fd_on(lambda p: p.predictor.b,
                   lambda p, a: setattr(p, "predictor", dc_replace(p.predictor, b=a)),
                   grads.db_pred.shape)
        compare("predictor.b", grads.db_pred, fd)
    scale = max((max(float(np.max(np.abs(a))), float(np.max(np.abs(fd))))
                 for _, a, fd in pending), default=0.0)
    for name, analytic, fd in pending:
        denom = max(float(np.max(np.abs(fd))), float(np.max(np.abs(analytic))),
                    1e-3 * scale, 1e-12)
        report[name] = float(np.max(np.abs(analytic - fd))) / denom
    report["max"] = max(report.values()) if report else 0.0
    return report
