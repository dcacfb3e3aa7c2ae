"""Training loops: minibatch SGD over masked view pairs, population-gradient
descent for the closed-form regimes, and the alternating row-normalized solver.

The empirical path follows one fixed protocol: a finite dataset is sampled
once, every step draws a fresh minibatch (with replacement) and fresh masks,
the two branches of the non-contrastive losses swap roles every
``alternate_every`` steps, and per-epoch rows of loss + max-cosine statistics
are recorded. The population path replaces minibatch gradients with the
exact-expectation gradients (one step per epoch) and exists for the regimes
with closed-form references: the linear matching loss with decay, and the
warm-start symmetric-relu loss.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .data import (DictionaryMatrix, LatentSpec, LATENT_KINDS, MASK_SCHEMES,
                   DICTIONARY_MODES, apply_masks, default_noise_variance,
                   generate_dictionary, rng_streams, sample_latents,
                   sample_mask_pairs, sample_observations)
from .encoders import (EncoderState, PredictorState, fresh_batch_norm,
                       normalize_columns, normalize_rows)
from .errors import (AssumptionError, ConvergenceError, DimensionError,
                     DivergenceError, ParameterError)
from .losses import (EncoderBlock, LossSpec, ModelParams, loss_and_gradient,
                     population_gradient_linear,
                     population_gradient_srelu_warm, population_loss_linear,
                     population_loss_srelu_warm)
from .metrics import max_cosine_stats

NORMALIZATION_HOOKS = ("none", "rows", "columns")
GRADIENT_MODES = ("empirical", "population")
INIT_SCHEMES = ("gaussian_random", "warm_start")

RUN_CSV_HEADER = "epoch,loss,min_max_cosine,median_max_cosine,max_max_cosine,seconds"

_POPULATION_KINDS = ("linear_ncl_wd", "ncl_inner")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataConfig:
    """Synthetic-dataset knobs (defaults follow the empirical protocol)."""

    p: int = 50
    d: int = 10
    n_samples: int = 1000
    latent: str = "symmetric"
    sparsity: float = 0.1
    alpha: float = 0.5
    mask_scheme: str = "independent"
    noise_variance: float | None = None   # None -> log(d)/d
    dictionary: str = "qr_gaussian"
    reject_all_zero: bool = True

    def __post_init__(self):
        if self.p < 1 or self.d < 1 or self.p < self.d:
            raise DimensionError(f"need p >= d >= 1, got p={self.p}, d={self.d}")
        if self.n_samples < 1:
            raise ParameterError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.latent not in LATENT_KINDS:
            raise ParameterError(f"unknown latent kind {self.latent!r}")
        if self.mask_scheme not in MASK_SCHEMES:
            raise ParameterError(f"unknown mask scheme {self.mask_scheme!r}")
        if self.dictionary not in DICTIONARY_MODES:
            raise ParameterError(f"unknown dictionary mode {self.dictionary!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.noise_variance is not None and self.noise_variance < 0:
            raise ParameterError(
                f"noise_variance must be >= 0, got {self.noise_variance}")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs: width, activation, batch norm, predictor, depth."""

    m: int = 50
    activation: str = "srelu"
    srelu_bias: float = 0.5
    batch_norm: bool = True
    predictor: bool = False
    hidden: int | None = None          # adds a first block of this width
    bias_trainable: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise DimensionError(f"m must be >= 1, got {self.m}")
        if self.hidden is not None and self.hidden < 1:
            raise DimensionError(f"hidden must be >= 1, got {self.hidden}")
        if self.activation == "srelu" and self.srelu_bias < 0:
            raise ParameterError(
                f"srelu_bias must be >= 0, got {self.srelu_bias}")


@dataclass(frozen=True)
class TrainConfig:
    """One training run: loss, schedule, and the update-rule switches.

    ``weight_decay`` is a decoupled multiplicative factor applied to the
    weight matrices before each gradient step (W <- wd * W - eta * dW); the
    linear_ncl_wd loss carries its own ridge, so combining the two is
    rejected. ``learning_rate`` 0 is allowed and performs exact no-op steps.
    """

    loss: LossSpec
    epochs: int = 8000
    batch_size: int = 512
    learning_rate: float = 0.025
    weight_decay: float | None = None
    normalization_hook: str = "none"
    output_normalize: bool = False
    alternate_every: int = 1
    gradient_mode: str = "empirical"
    init: str = "gaussian_random"
    warm_c: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ParameterError(
                f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.normalization_hook not in NORMALIZATION_HOOKS:
            raise ParameterError(
                f"unknown normalization hook {self.normalization_hook!r}")
        if self.alternate_every < 1:
            raise ParameterError(
                f"alternate_every must be >= 1, got {self.alternate_every}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ParameterError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.init not in INIT_SCHEMES:
            raise ParameterError(f"unknown init scheme {self.init!r}")
        if self.weight_decay is not None:
            if not 0.0 < self.weight_decay <= 1.0:
                raise ParameterError(
                    f"weight_decay factor must be in (0, 1], got {self.weight_decay}")
            if self.loss.kind == "linear_ncl_wd":
                raise ParameterError(
                    "linear_ncl_wd already carries its decay factor; leave "
                    "TrainConfig.weight_decay unset")
        if self.gradient_mode == "population" and self.loss.kind not in _POPULATION_KINDS:
            raise ParameterError(
                "population gradients exist for linear_ncl_wd and the "
                f"warm-start srelu matching loss only, not {self.loss.kind}")


@dataclass(frozen=True)
class TrainRecord:
    """One per-epoch row of the run log."""

    epoch: int
    loss: float
    min_max_cosine: float
    median_max_cosine: float
    max_max_cosine: float
    seconds: float
    seed: int


@dataclass
class TrainData:
    """A sampled dataset bundle: dictionary, latents, observations, masking."""

    M: DictionaryMatrix
    X: np.ndarray
    Z: np.ndarray
    latent_spec: LatentSpec
    alpha: float
    mask_scheme: str
    noise_sigma: float


@dataclass
class TrainResult:
    records: list[TrainRecord]
    params: ModelParams          # final parameters, online branch in role
    data: TrainData


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init_random(m: int, p: int, d: int, seed, activation: str = "linear",
                srelu_bias: float | None = None) -> EncoderState:
    """Encoder with iid N(0, 1/(p d)) weights and zero bias."""
    rng = _as_rng(seed)
    W = rng.standard_normal((m, p)) / math.sqrt(p * d)
    return _with_activation(W, activation, srelu_bias)


def init_warm(M: DictionaryMatrix, m: int, c: float, seed,
              activation: str = "linear",
              srelu_bias: float | None = None) -> EncoderState:
    """Encoder rows = random dictionary columns + N(0, sigma^2), sigma = p^(-c/2)."""
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    rng = _as_rng(seed)
    sigma = M.p ** (-c / 2.0)
    cols = rng.integers(0, M.d, size=m)
    W = M.entries.T[cols] + sigma * rng.standard_normal((m, M.p))
    return _with_activation(W, activation, srelu_bias)


def _with_activation(W, activation, srelu_bias) -> EncoderState:
    m = W.shape[0]
    sb = None
    if activation == "srelu":
        sb = np.full(m, 0.0 if srelu_bias is None else float(srelu_bias))
    return EncoderState(W=W, b=np.zeros(m), activation=activation, srelu_bias=sb)


def prepare_data(cfg: DataConfig, master_seed: int) -> TrainData:
    """Sample dictionary, latents, and observations from dedicated rng streams."""
    streams = rng_streams(master_seed)
    M = generate_dictionary(cfg.p, cfg.d, cfg.dictionary, streams["dictionary"])
    spec = LatentSpec(cfg.latent, cfg.d, sparsity=cfg.sparsity,
                      reject_all_zero=cfg.reject_all_zero)
    Z = sample_latents(spec, cfg.n_samples, streams["latents"])
    var = (default_noise_variance(cfg.d) if cfg.noise_variance is None
           else cfg.noise_variance)
    sigma = math.sqrt(var)
    X = sample_observations(M, Z, sigma, streams["noise"])
    return TrainData(M=M, X=X, Z=Z, latent_spec=spec, alpha=cfg.alpha,
                     mask_scheme=cfg.mask_scheme, noise_sigma=sigma)


def _init_stack(model: ModelConfig, p: int, d: int, train: TrainConfig,
                M: DictionaryMatrix, rng) -> list[EncoderBlock]:
    """Build one encoder branch per the architecture config.

    A two-layer encoder is a plain linear hidden block feeding one block
    with the configured batch norm and activation: deepening stays linear,
    and the head keeps the usual nonlinearity. (A symmetric-relu dead zone
    after every layer would make exactly-zero representations a
    positive-probability event, which the normalizing losses treat as a
    hard error.)
    """
    if train.init == "warm_start" and model.hidden is not None:
        raise ParameterError("warm start is defined for single-block encoders")
    blocks = []
    if model.hidden is not None:
        enc = init_random(model.hidden, p, d, rng, "linear", None)
        blocks.append(EncoderBlock(enc=enc, bn=None))
        p_in = model.hidden
    else:
        p_in = p
    if train.init == "warm_start":
        enc = init_warm(M, model.m, train.warm_c, rng, model.activation,
                        model.srelu_bias)
    else:
        enc = init_random(model.m, p_in, d, rng, model.activation,
                          model.srelu_bias)
    bn = fresh_batch_norm(model.m) if model.batch_norm else None
    blocks.append(EncoderBlock(enc=enc, bn=bn))
    return blocks


def _build_branches(train: TrainConfig, model: ModelConfig, data: TrainData,
                    rng) -> tuple[list, list | None, PredictorState | None]:
    kind = train.loss.kind
    two_branch = kind in ("ncl_l2", "ncl_l2_pred", "ncl_inner", "ncl_inner_pred",
                          "linear_ncl", "linear_ncl_wd")
    needs_pred = kind in ("ncl_l2_pred", "ncl_inner_pred", "neg_cosine_simsiam")
    if kind in ("linear_ncl", "linear_ncl_wd"):
        if model.activation != "linear" or model.batch_norm or model.hidden:
            raise ParameterError(
                f"{kind} is analyzed for a plain single linear block; set "
                "activation='linear', batch_norm=False, hidden=None")
    if model.predictor and not needs_pred and kind != "cl_infonce":
        raise ParameterError(f"{kind} does not use a predictor")
    p, d = data.M.p, data.M.d
    blocks_a = _init_stack(model, p, d, train, data.M, rng)
    blocks_b = _init_stack(model, p, d, train, data.M, rng) if two_branch else None
    predictor = None
    if needs_pred or (kind == "cl_infonce" and model.predictor):
        m = model.m
        Wp = rng.standard_normal((m, m)) / math.sqrt(p * d)
        predictor = PredictorState(W=Wp, b=np.zeros(m))
    return blocks_a, blocks_b, predictor


# ---------------------------------------------------------------------------
# the SGD loop
# ---------------------------------------------------------------------------

def _apply_hook(hook: str, blocks) -> None:
    if hook == "none" or blocks is None:
        return
    for block in blocks:
        if hook == "rows":
            block.enc = normalize_rows(block.enc)
        else:
            block.enc = normalize_columns(block.enc)


def _sgd_step(blocks, grads, eta: float, wd: float | None,
              bias_trainable: bool) -> None:
    for block, g in zip(blocks, grads):
        W = block.enc.W
        if wd is not None:
            W = wd * W
        W = W - eta * g.dW
        b = block.enc.b - eta * g.db if bias_trainable else block.enc.b
        block.enc = replace(block.enc, W=W, b=b)
        if block.bn is not None and g.dgamma is not None:
            block.bn.gamma = block.bn.gamma - eta * g.dgamma
            block.bn.beta = block.bn.beta - eta * g.dbeta


def train(train_cfg: TrainConfig, model_cfg: ModelConfig,
          data: TrainData) -> TrainResult:
    """Run one training run and return per-epoch records plus final params.

    Empirical mode: ceil(n / batch) minibatch steps per epoch, sampled with
    replacement, fresh masks every step; two-branch losses swap the online/
    target roles every ``alternate_every`` steps; the normalization hook
    re-normalizes every updated encoder weight matrix after each step. A
    non-finite loss raises DivergenceError before any corrupt record is
    written. Population mode runs one exact-gradient step per epoch.
    """
    if train_cfg.gradient_mode == "population":
        return _train_population(train_cfg, model_cfg, data)

    streams = rng_streams(train_cfg.seed)
    rng_init = streams["init"]
    rng_masks = streams["masks"]
    rng_batches = streams["batches"]
    blocks_a, blocks_b, predictor = _build_branches(
        train_cfg, model_cfg, data, rng_init)
    _apply_hook(train_cfg.normalization_hook, blocks_a)
    _apply_hook(train_cfg.normalization_hook, blocks_b)

    spec = train_cfg.loss
    kind = spec.kind
    two_branch = blocks_b is not None
    n = data.X.shape[0]
    p = data.X.shape[1]
    steps_per_epoch = math.ceil(n / train_cfg.batch_size)
    eta = train_cfg.learning_rate
    records: list[TrainRecord] = []
    start = time.perf_counter()
    step_count = 0

    def current_params(swap: bool) -> ModelParams:
        if not two_branch:
            return ModelParams(online=blocks_a, target=None, predictor=predictor,
                               output_normalize=train_cfg.output_normalize)
        online, target = (blocks_b, blocks_a) if swap else (blocks_a, blocks_b)
        return ModelParams(online=online, target=target, predictor=predictor,
                           output_normalize=train_cfg.output_normalize)

    def record(epoch: int, loss_val: float) -> None:
        params = current_params(swap=two_branch and
                                ((step_count // train_cfg.alternate_every) % 2 == 1))
        stats = max_cosine_stats(params.online[0].enc.W, data.M)
        records.append(TrainRecord(
            epoch=epoch, loss=loss_val,
            min_max_cosine=stats.min, median_max_cosine=stats.median,
            max_max_cosine=stats.max,
            seconds=time.perf_counter() - start, seed=train_cfg.seed))

    def eval_full_loss(params: ModelParams) -> float:
        d1, d2 = sample_mask_pairs(data.mask_scheme, data.alpha, p, n, rng_masks)
        v1, v2 = apply_masks(data.mask_scheme, d1, d2, data.X)
        loss, _ = loss_and_gradient(spec, params, v1, v2, compute_grad=False,
                                    update_running=False)
        return loss

    record(0, eval_full_loss(current_params(swap=False)))

    for epoch in range(1, train_cfg.epochs + 1):
        epoch_losses = np.empty(steps_per_epoch)
        for s in range(steps_per_epoch):
            swap = two_branch and ((step_count // train_cfg.alternate_every) % 2 == 1)
            params = current_params(swap)
            idx = rng_batches.integers(0, n, size=train_cfg.batch_size)
            Xb = data.X[idx]
            d1, d2 = sample_mask_pairs(data.mask_scheme, data.alpha, p,
                                       train_cfg.batch_size, rng_masks)
            v1, v2 = apply_masks(data.mask_scheme, d1, d2, Xb)
            loss, grads = loss_and_gradient(spec, params, v1, v2)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, step {s} "
                    f"(kind={kind}, lr={eta})")
            _sgd_step(params.online, grads.online, eta, train_cfg.weight_decay,
                      model_cfg.bias_trainable)
            _apply_hook(train_cfg.normalization_hook, params.online)
            if grads.target is not None:
                _sgd_step(params.target, grads.target, eta,
                          train_cfg.weight_decay, model_cfg.bias_trainable)
                _apply_hook(train_cfg.normalization_hook, params.target)
            if grads.dW_pred is not None:
                Wp = predictor.W
                if train_cfg.weight_decay is not None:
                    Wp = train_cfg.weight_decay * Wp
                predictor = PredictorState(W=Wp - eta * grads.dW_pred,
                                           b=predictor.b - eta * grads.db_pred)
            epoch_losses[s] = loss
            step_count += 1
        record(epoch, float(epoch_losses.mean()))

    final = current_params(swap=two_branch and
                           ((step_count // train_cfg.alternate_every) % 2 == 1))
    return TrainResult(records=records, params=final, data=data)


# ---------------------------------------------------------------------------
# population-gradient descent
# ---------------------------------------------------------------------------

def simulate_linear_population_gd(W0_online, W0_target, M, lam: float,
                                  eta_schedule, alpha: float, kappa: float,
                                  sigma0: float, steps: int
                                  ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Decayed population GD on the linear matching loss, both branches at once.

    Update: W <- lam * W - eta_t * grad_data, with the exact-expectation data
    gradient (no ridge term; the decay factor realizes it). Returns the
    trajectory [(W_o, W_t)] including the initial point, steps+1 entries.
    """
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    if not 0.0 < lam <= 1.0:
        raise ParameterError(f"decay factor lam must be in (0, 1], got {lam}")
    etas = np.asarray(eta_schedule, dtype=np.float64)
    if etas.ndim == 0:
        etas = np.full(steps, float(etas))
    if etas.size < steps:
        raise ParameterError(f"eta schedule has {etas.size} entries for {steps} steps")
    Wo = np.array(W0_online, dtype=np.float64)
    Wt = np.array(W0_target, dtype=np.float64)
    m = Wo.shape[0]
    out = [(Wo.copy(), Wt.copy())]
    for t in range(steps):
        online = EncoderState(W=Wo, b=np.zeros(m))
        target = EncoderState(W=Wt, b=np.zeros(m))
        g = population_gradient_linear(online, target, M, alpha, kappa, sigma0)
        Wo = lam * Wo - etas[t] * g.dW_online
        Wt = lam * Wt - etas[t] * g.dW_target
        out.append((Wo.copy(), Wt.copy()))
    return out


def _train_population(train_cfg: TrainConfig, model_cfg: ModelConfig,
                      data: TrainData) -> TrainResult:
    spec = train_cfg.loss
    streams = rng_streams(train_cfg.seed)
    blocks_a, blocks_b, predictor = _build_branches(
        train_cfg, model_cfg, data, streams["init"])
    if predictor is not None:
        raise ParameterError("population mode has no predictor dynamics")
    kappa = (1.0 / data.M.d if data.latent_spec.kind == "one_hot"
             else data.latent_spec.sparsity)
    sigma0 = data.noise_sigma
    alpha = data.alpha
    eta = train_cfg.learning_rate
    records: list[TrainRecord] = []
    start = time.perf_counter()

    if spec.kind == "linear_ncl_wd":
        if train_cfg.normalization_hook != "none":
            raise ParameterError(
                "the decayed linear analysis has no normalization hook")
        lam = spec.weight_decay
        Wo = blocks_a[0].enc.W
        Wt = blocks_b[0].enc.W
        traj = simulate_linear_population_gd(
            Wo, Wt, data.M, lam, eta, alpha, kappa, sigma0, train_cfg.epochs)
        for t, (wo, wt) in enumerate(traj):
            loss = population_loss_linear(wo, wt, data.M, alpha, kappa, sigma0,
                                          weight_decay=lam)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite population loss at step {t}")
            stats = max_cosine_stats(wo, data.M)
            records.append(TrainRecord(t, loss, stats.min, stats.median,
                                       stats.max, time.perf_counter() - start,
                                       train_cfg.seed))
        m = Wo.shape[0]
        wo, wt = traj[-1]
        final = ModelParams(
            online=[EncoderBlock(EncoderState(W=wo, b=np.zeros(m)))],
            target=[EncoderBlock(EncoderState(W=wt, b=np.zeros(m)))])
        return TrainResult(records=records, params=final, data=data)

    # warm-start srelu matching loss: stop-gradient GD with role alternation
    if model_cfg.activation != "srelu" or model_cfg.batch_norm or model_cfg.hidden:
        raise ParameterError(
            "the warm-start population loss needs a single plain srelu block")
    if data.mask_scheme != "independent":
        raise ParameterError("the warm-start population loss assumes "
                             "independent masking")
    ident = np.eye(data.M.p)
    if data.M.p != data.M.d or np.max(np.abs(data.M.entries - ident)) != 0.0:
        raise ParameterError("the warm-start population loss is derived "
                             "for M = I (use dictionary='identity')")

    def rec(epoch, online_enc, target_enc):
        loss = population_loss_srelu_warm(
            online_enc, target_enc, alpha, kappa, sigma0, validate=False)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite population loss at epoch {epoch}")
        stats = max_cosine_stats(online_enc.W, data.M)
        records.append(TrainRecord(epoch, loss, stats.min, stats.median,
                                   stats.max, time.perf_counter() - start,
                                   train_cfg.seed))

    # one validated call up front surfaces assumption violations loudly
    population_loss_srelu_warm(blocks_a[0].enc, blocks_b[0].enc, alpha, kappa,
                               sigma0, validate=True)
    rec(0, blocks_a[0].enc, blocks_b[0].enc)
    for epoch in range(1, train_cfg.epochs + 1):
        swap = ((epoch - 1) // train_cfg.alternate_every) % 2 == 1
        live, frozen = (blocks_b, blocks_a) if swap else (blocks_a, blocks_b)
        g = population_gradient_srelu_warm(live[0].enc, frozen[0].enc,
                                           alpha, kappa, sigma0, validate=False)
        live[0].enc = replace(live[0].enc, W=live[0].enc.W - eta * g.dW_online)
        _apply_hook(train_cfg.normalization_hook, live)
        online_now, target_now = (blocks_b, blocks_a) if swap else (blocks_a, blocks_b)
        rec(epoch, online_now[0].enc, target_now[0].enc)
    final = ModelParams(online=blocks_a, target=blocks_b)
    return TrainResult(records=records, params=final, data=data)


# ---------------------------------------------------------------------------
# alternating solve (warm-start symmetric-relu regime)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InnerSolve:
    """Trace row for one inner solve (one branch driven to its fixed point)."""

    outer_round: int
    branch: str                # "online" | "target"
    inner_iters: int
    final_delta: float
    offdiag_max: float         # of the solved branch, after the solve
    a_bound: float             # max_i a_i of the *fixed* branch during the solve


@dataclass
class AlternatingResult:
    online: EncoderState
    target: EncoderState
    trace: list[InnerSolve]
    outer_rounds: int
    converged: bool


def warm_proportionality(fixed: EncoderState, alpha: float, kappa: float,
                         sigma0: float) -> np.ndarray:
    """Per-row ratio a_i between off-diagonal and diagonal gradient entries.

    a_i = alpha^2 (kappa + sigma0^2) / ((1 + sigma0^2)(1 + Delta_ii) - b_i),
    computed from the branch held fixed; each a_i lies in (0, 1) whenever the
    warm-start preconditions hold.
    """
    d = fixed.W.shape[0]
    diag = np.diag(fixed.W) - 1.0
    denom = (1.0 + sigma0 ** 2) * (1.0 + diag) - fixed.srelu_bias
    if (denom <= 0).any():
        raise AssumptionError(
            "proportionality denominator not positive; warm-start "
            "preconditions are violated")
    return alpha ** 2 * (kappa + sigma0 ** 2) / denom


def _offdiag_max(W: np.ndarray) -> float:
    A = np.abs(W - np.diag(np.diag(W)))
    return float(A.max())


def alternating_optimize(online: EncoderState, target: EncoderState,
                         alpha: float, kappa: float, sigma0: float,
                         eta: float = 10.0, normalization: str = "rows",
                         inner_tol: float = 1e-10, outer_tol: float = 1e-8,
                         max_inner: int = 10_000, max_outer: int = 1_000,
                         check: bool = True) -> AlternatingResult:
    """Alternate exact-gradient inner solves with row normalization.

    Each inner solve holds one branch fixed and iterates
    W <- row_normalize(W - eta * grad) on the other until the ∞-norm change
    drops below ``inner_tol`` (the gradient depends only on the fixed branch,
    so each iteration adds a constant direction and re-normalizes — a
    geometric contraction). The outer loop alternates branches until the
    joint round-to-round change is below ``outer_tol``. Off-diagonals of the
    solved branch shrink by (roughly) the product of the two branches'
    proportionality bounds per round, driving both weights to the identity.

    The default step size is deliberately large: the per-iteration increment
    scales with eta, and the contraction factor improves with it. Exceeding
    an iteration cap raises ConvergenceError whose ``deltas`` attribute maps
    branch names to their final step sizes.
    """
    if normalization != "rows":
        raise ParameterError(
            "the alternating solve is analyzed for row normalization only")
    if eta <= 0:
        raise ParameterError(f"eta must be > 0, got {eta}")
    if inner_tol <= 0 or outer_tol <= 0:
        raise ParameterError("tolerances must be > 0")
    if check:
        from .oracles import check_assumptions
        report = check_assumptions(online, target, sigma0, kappa=kappa)
        if not report.all_passed:
            raise AssumptionError(
                f"warm-start preconditions violated: {report.summary()}")

    online = normalize_rows(online)
    target = normalize_rows(target)
    trace: list[InnerSolve] = []

    def inner_solve(live: EncoderState, fixed: EncoderState, rnd: int,
                    name: str) -> EncoderState:
        a_bound = float(warm_proportionality(fixed, alpha, kappa, sigma0).max())
        delta = np.inf
        for it in range(1, max_inner + 1):
            g = population_gradient_srelu_warm(live, fixed, alpha, kappa,
                                               sigma0, validate=False)
            stepped = normalize_rows(replace(live, W=live.W - eta * g.dW_online))
            delta = float(np.max(np.abs(stepped.W - live.W)))
            live = stepped
            if delta < inner_tol:
                trace.append(InnerSolve(rnd, name, it, delta,
                                        _offdiag_max(live.W), a_bound))
                return live
        raise ConvergenceError(
            f"inner solve for the {name} branch did not reach {inner_tol} "
            f"within {max_inner} iterations (round {rnd})",
            deltas={name: delta})

    converged = False
    rounds = 0
    for rnd in range(1, max_outer + 1):
        prev_o, prev_t = online.W.copy(), target.W.copy()
        online = inner_solve(online, target, rnd, "online")
        target = inner_solve(target, online, rnd, "target")
        rounds = rnd
        joint = max(float(np.max(np.abs(online.W - prev_o))),
                    float(np.max(np.abs(target.W - prev_t))))
        if joint < outer_tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"alternating solve did not converge within {max_outer} rounds",
            deltas={"joint": joint})
    return AlternatingResult(online=online, target=target, trace=trace,
                             outer_rounds=rounds, converged=True)


# ---------------------------------------------------------------------------
# run CSV
# ---------------------------------------------------------------------------

def write_run_csv(path, records) -> None:
    """Write per-epoch records with the fixed run header.

    All columns except ``seconds`` are deterministic for a fixed seed; the
    median column is the lower median of the per-column best cosines.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RUN_CSV_HEADER + "\n")
        for r in records:
            fh.write(f"{r.epoch},{r.loss:.17g},{r.min_max_cosine:.17g},"
                     f"{r.median_max_cosine:.17g},{r.max_max_cosine:.17g},"
                     f"{r.seconds:.6f}\n")


def load_run_csv(path) -> np.ndarray:
    """Read a run CSV back as a (rows, 6) float array (validates the header)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != RUN_CSV_HEADER:
            raise ParameterError(
                f"unexpected run CSV header {header!r} in {path}")
        rows = [line.split(",") for line in fh.read().split("\n") if line]
    arr = np.asarray(rows, dtype=np.float64)
    if arr.size and arr.shape[1] != 6:
        raise DimensionError(f"run CSV {path} has {arr.shape[1]} columns")
    return arr
