"""Independent reference computations: closed forms, certifications, enumeration.

Everything here is a *second route* to a quantity the trainer or the loss
code produces some other way: closed-form weight trajectories for the linear
matching loss with decay, the fixed point and contraction factor of the
normalize-after-additive-update iteration, brute-force exact-expectation
losses over all (latent, mask, mask) combinations, landscape certifications,
and worst-case checks of the warm-start preconditions. The enumeration path
deliberately reimplements the representation math with plain numpy (no shared
kernels) so the two routes stay independent.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from .data import DictionaryMatrix, LatentSpec
from .encoders import EncoderState
from .errors import (DegenerateInputError, DimensionError, ParameterError)
from .losses import (EncoderBlock, LossSpec, ModelParams,
                     cl_infinite_batch_loss, _plan)

ENUMERATION_MAX_P = 12
_INFONCE_MAX_ANCHOR_CONFIGS = 4096


# ---------------------------------------------------------------------------
# closed-form linear dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicsPrediction:
    """Predicted projected weights after ``step`` decayed-GD updates."""

    step: int
    c1: float
    c2: float
    w_online_m: np.ndarray
    w_target_m: np.ndarray


def closed_form_linear_dynamics(W0_online, W0_target, M, lam: float,
                                eta_schedule, alpha: float, kappa: float,
                                sigma0: float, steps: int) -> list[DynamicsPrediction]:
    """Closed-form trajectory of W_t M for decayed GD on the linear matching loss.

    With c_i = 2 eta_i alpha^2 (kappa + sigma0^2) (each required in (0, lam)):

        W^o_t M = C1_t W^o_0 M + C2_t (W^o_0 M + W^t_0 M),   symmetric in o/t,
        C1_t = prod_{i<t} (lam - c_i),
        C2_t = sum_{j<t} c_j prod_{i=j+1}^{t-1} (lam - c_i) prod_{i<j} (lam + c_i),

    evaluated through the equivalent recursion C1 <- (lam - c_t) C1,
    C2 <- (lam + c_t) C2 + c_t C1. C1_t stays in (0, 1) and strictly
    decreases; C2_t > 0 for t >= 1.
    """
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    if not 0.0 < lam <= 1.0:
        raise ParameterError(f"decay factor lam must be in (0, 1], got {lam}")
    if steps < 0:
        raise ParameterError(f"steps must be >= 0, got {steps}")
    etas = np.asarray(eta_schedule, dtype=np.float64)
    if etas.ndim == 0:
        etas = np.full(steps, float(etas))
    if etas.size < steps:
        raise ParameterError(
            f"eta schedule has {etas.size} entries for {steps} steps")
    cs = 2.0 * etas[:steps] * alpha ** 2 * (kappa + sigma0 ** 2)
    bad = np.where((cs <= 0) | (cs >= lam))[0]
    if bad.size:
        i = int(bad[0])
        raise ParameterError(
            f"learning-rate condition violated at step {i}: "
            f"c={cs[i]:.6g} must lie in (0, lam={lam})")
    A0 = np.asarray(W0_online, dtype=np.float64) @ M.entries
    B0 = np.asarray(W0_target, dtype=np.float64) @ M.entries
    S0 = A0 + B0
    out = [DynamicsPrediction(0, 1.0, 0.0, A0.copy(), B0.copy())]
    c1, c2 = 1.0, 0.0
    for t in range(steps):
        c1, c2 = (lam - cs[t]) * c1, (lam + cs[t]) * c2 + cs[t] * c1
        out.append(DynamicsPrediction(t + 1, c1, c2,
                                      c1 * A0 + c2 * S0, c1 * B0 + c2 * S0))
    return out


def subspace_residual(W, W0_online, W0_target, M) -> float:
    """Relative distance of W M from span{W^o_0 M, W^t_0 M}.

    Matrices are flattened; the residual of the least-squares projection is
    divided by ||W M||_F (a zero W M has residual 0). Trajectories of the
    decayed linear dynamics stay in this two-dimensional span.
    """
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    w = (np.asarray(W, dtype=np.float64) @ M.entries).ravel()
    b1 = (np.asarray(W0_online, dtype=np.float64) @ M.entries).ravel()
    b2 = (np.asarray(W0_target, dtype=np.float64) @ M.entries).ravel()
    norm_w = float(np.linalg.norm(w))
    if norm_w == 0.0:
        return 0.0
    basis = np.stack([b1, b2], axis=1)
    coef, _, _, _ = np.linalg.lstsq(basis, w, rcond=None)
    return float(np.linalg.norm(w - basis @ coef)) / norm_w


# ---------------------------------------------------------------------------
# normalize-after-additive-update iteration (technical lemma)
# ---------------------------------------------------------------------------

def lemma_a1_fixed_point(a: float, d: int) -> np.ndarray:
    """(1, a, ..., a) / sqrt(1 + (d-1) a^2)."""
    if d < 2:
        raise DimensionError(f"need d >= 2, got {d}")
    v = np.full(d, a)
    v[0] = 1.0
    return v / np.sqrt(1.0 + (d - 1) * a * a)


def lemma_a1_contraction_factor(a: float, d: int, c: float) -> float:
    """gamma = 1 / sqrt(1 + (1 + (d-1) a^2) c^2) for per-step increments > c."""
    if d < 2:
        raise DimensionError(f"need d >= 2, got {d}")
    if c <= 0:
        raise ParameterError(f"c must be > 0, got {c}")
    return 1.0 / np.sqrt(1.0 + (1.0 + (d - 1) * a * a) * c * c)


def lemma_a1_iterate(v0, a: float, c_schedule) -> np.ndarray:
    """Run v <- normalize(v + c_t (1, a, .., a)); returns all iterates.

    Preconditions: ||v0|| = 1 (within 1e-12), every increment c_t > 0, and
    the positivity condition v0_1 + a sum_{i>=2} v0_i > 0. The trajectory
    converges to :func:`lemma_a1_fixed_point`, with |v_i - a v_1| shrinking
    at least by :func:`lemma_a1_contraction_factor` per step.
    """
    v0 = np.asarray(v0, dtype=np.float64)
    if v0.ndim != 1 or v0.size < 2:
        raise DimensionError("v0 must be a vector of length >= 2")
    if abs(float(np.linalg.norm(v0)) - 1.0) > 1e-12:
        raise ParameterError("v0 must be unit norm")
    cs = np.atleast_1d(np.asarray(c_schedule, dtype=np.float64))
    if (cs <= 0).any():
        raise ParameterError("every increment c_t must be > 0")
    if not v0[0] + a * float(v0[1:].sum()) > 0:
        raise ParameterError(
            "positivity condition v0_1 + a sum_i v0_i > 0 violated")
    direction = np.full(v0.size, a)
    direction[0] = 1.0
    out = np.empty((cs.size + 1, v0.size))
    out[0] = v0
    v = v0.copy()
    for t, c in enumerate(cs):
        v = v + c * direction
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise DegenerateInputError(f"iterate collapsed to zero at step {t}")
        v = v / n
        out[t + 1] = v
    return out


# ---------------------------------------------------------------------------
# warm-start precondition checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionEntry:
    passed: bool
    value: float
    threshold: float
    worst_index: tuple | None
    message: str


@dataclass(frozen=True)
class AssumptionReport:
    """Worst-case verdicts for the warm-start closed-form preconditions."""

    entries: dict[str, AssumptionEntry]

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def summary(self) -> str:
        parts = []
        for name, e in self.entries.items():
            state = "pass" if e.passed else "FAIL"
            parts.append(f"{name}: {state} ({e.message})")
        return "; ".join(parts)


def check_assumptions(online: EncoderState, target: EncoderState,
                      sigma0: float, kappa: float | None = None) -> AssumptionReport:
    """Worst-case validity checks for the warm-start srelu closed forms.

    * latent_sparsity:    0 < kappa < 1 (skipped when kappa is None);
    * warm_start_radius:  every |Delta| entry < 1/(10 d), Delta = W - I;
    * noise_scale:        sigma0 sqrt(p) <= min |Delta| entry (0 passes);
    * bias_window:        per row, c_b = sum_{l != i} |Delta_il| +
      eps_bound * sum_j |W_ij| must satisfy c_b < b_i < 1 - c_b together with
      b_i in (0, 1), where eps_bound is the largest per-coordinate noise the
      noise_scale condition permits (0 when sigma0 = 0, else min |Delta|).

    All bounds take the worst case over latent/mask/noise realizations.
    """
    if online.activation != "srelu" or target.activation != "srelu":
        raise ParameterError("assumption checks apply to srelu encoders")
    Wo, Wt = online.W, target.W
    if Wo.shape != Wt.shape or Wo.shape[0] != Wo.shape[1]:
        raise DimensionError("warm-start checks need square, equal-shape weights")
    if sigma0 < 0:
        raise ParameterError(f"sigma0 must be >= 0, got {sigma0}")
    d = Wo.shape[0]
    eye = np.eye(d)
    deltas = {"online": Wo - eye, "target": Wt - eye}
    biases = {"online": online.srelu_bias, "target": target.srelu_bias}
    entries: dict[str, AssumptionEntry] = {}

    if kappa is None:
        entries["latent_sparsity"] = AssumptionEntry(
            True, np.nan, np.nan, None, "kappa not supplied; skipped")
    else:
        ok = 0.0 < kappa < 1.0
        entries["latent_sparsity"] = AssumptionEntry(
            ok, float(kappa), 1.0, None,
            f"kappa={kappa} {'in' if ok else 'outside'} (0, 1)")

    radius = 1.0 / (10.0 * d)
    worst_val, worst_idx = -1.0, None
    for branch, delta in deltas.items():
        idx = np.unravel_index(np.argmax(np.abs(delta)), delta.shape)
        if abs(delta[idx]) > worst_val:
            worst_val, worst_idx = abs(float(delta[idx])), (branch, *map(int, idx))
    ok = worst_val < radius
    entries["warm_start_radius"] = AssumptionEntry(
        ok, worst_val, radius, worst_idx,
        f"max |Delta| = {worst_val:.6g} vs 1/(10d) = {radius:.6g} at {worst_idx}")

    min_delta = min(float(np.min(np.abs(delta))) for delta in deltas.values())
    noise_val = sigma0 * np.sqrt(d)
    ok = noise_val <= min_delta
    entries["noise_scale"] = AssumptionEntry(
        ok, float(noise_val), min_delta, None,
        f"sigma0*sqrt(p) = {noise_val:.6g} vs min |Delta| = {min_delta:.6g}")

    eps_bound = 0.0 if sigma0 == 0 else min_delta
    worst_margin, worst_idx = np.inf, None
    detail = ""
    for branch, delta in deltas.items():
        b = biases[branch]
        W = deltas[branch] + eye
        off = np.sum(np.abs(delta), axis=1) - np.abs(np.diag(delta))
        cb = off + eps_bound * np.sum(np.abs(W), axis=1)
        margins = np.minimum.reduce([b - cb, 1.0 - cb - b, b, 1.0 - b])
        i = int(np.argmin(margins))
        if margins[i] < worst_margin:
            worst_margin, worst_idx = float(margins[i]), (branch, i)
            detail = (f"row {i} ({branch}): c_b = {cb[i]:.6g}, b = {b[i]:.6g}, "
                      f"window ({cb[i]:.6g}, {1 - cb[i]:.6g})")
    ok = worst_margin > 0
    entries["bias_window"] = AssumptionEntry(
        ok, worst_margin, 0.0, worst_idx,
        detail + ("" if ok else " violated"))

    return AssumptionReport(entries)


# ---------------------------------------------------------------------------
# exact-expectation losses by brute-force enumeration
# ---------------------------------------------------------------------------

def _enumerate_latents(spec: LatentSpec) -> tuple[np.ndarray, np.ndarray]:
    d = spec.d
    if spec.kind == "one_hot":
        return np.eye(d), np.full(d, 1.0 / d)
    if spec.kind == "zero_one":
        grid = ((np.arange(2 ** d)[:, None] >> np.arange(d)[None, :]) & 1
                ).astype(np.float64)
        probs = np.prod(np.where(grid == 1.0, spec.sparsity, 1.0 - spec.sparsity),
                        axis=1)
    else:  # symmetric
        digits = (np.arange(3 ** d)[:, None] // (3 ** np.arange(d))[None, :]) % 3
        grid = np.array([0.0, 1.0, -1.0])[digits]
        probs = np.prod(np.where(grid == 0.0, 1.0 - spec.sparsity,
                                 spec.sparsity / 2.0), axis=1)
    if spec.reject_all_zero:
        keep = grid.any(axis=1)
        grid, probs = grid[keep], probs[keep]
        total = probs.sum()
        if total <= 0:
            raise DegenerateInputError("all latent mass sits on the zero vector")
        probs = probs / total
    return grid, probs


def _mask_patterns(p: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    grid = ((np.arange(2 ** p)[:, None] >> np.arange(p)[None, :]) & 1
            ).astype(np.float64)
    probs = np.prod(np.where(grid == 1.0, alpha, 1.0 - alpha), axis=1)
    return grid, probs


def _enum_reps(blocks, predictor, normalize, A):
    """Plain-numpy branch forward used only by the enumeration oracle."""
    H = A
    for block in blocks:
        enc = block.enc
        Y = H @ enc.W.T + enc.b
        if enc.activation == "relu":
            H = np.maximum(Y, 0.0)
        elif enc.activation == "srelu":
            H = np.sign(Y) * np.maximum(np.abs(Y) - enc.srelu_bias, 0.0)
        else:
            H = Y
    if predictor is not None:
        H = H @ predictor.W.T + predictor.b
    if normalize:
        norms = np.sqrt((H * H).sum(axis=1))
        if (norms <= 1e-30).any():
            raise DegenerateInputError(
                "a masked view produced a zero-norm representation; the "
                "normalized losses are undefined on this instance")
        H = H / norms[:, None]
    return H


def exact_loss_enumeration(spec: LossSpec, params: ModelParams, M, alpha: float,
                           latent_spec: LatentSpec,
                           mask_scheme: str = "independent") -> float:
    """Exact population loss as a finite weighted sum over (z, D1, D2).

    Noiseless by construction; needs p <= 12 (mask patterns grow as 2^p) and
    batch-norm-free params (per-sample batch norm is undefined). cl_infonce
    enumerates one negative (neg_batch 1) under independent masking only;
    cl_infinite_batch delegates to its closed surrogate. A cost estimate is
    printed to stderr before any heavy work ("fail loudly rather than hang").
    """
    if not isinstance(M, DictionaryMatrix):
        M = DictionaryMatrix(np.asarray(M, dtype=np.float64))
    p, d = M.p, M.d
    if p > ENUMERATION_MAX_P:
        raise ParameterError(
            f"enumeration is capped at p <= {ENUMERATION_MAX_P} "
            f"(2^p mask patterns); got p = {p}")
    if latent_spec.d != d:
        raise DimensionError(
            f"latent d={latent_spec.d} does not match dictionary d={d}")
    if mask_scheme not in ("independent", "dependent"):
        raise ParameterError(f"unknown mask scheme {mask_scheme!r}")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    for side in (params.online, params.target or []):
        for block in side:
            if block.bn is not None:
                raise ParameterError(
                    "enumeration requires batch-norm-free params")

    if spec.kind == "cl_infinite_batch":
        blk = params.online[0]
        if (latent_spec.kind != "one_hot" or p != d
                or len(params.online) != 1 or params.target is not None
                or blk.enc.activation != "relu" or np.any(blk.enc.b != 0)
                or np.max(np.abs(M.entries - np.eye(d))) != 0):
            raise ParameterError(
                "the infinite-batch surrogate is defined for one-hot latents, "
                "M = I and a bias-free relu encoder")
        return cl_infinite_batch_loss(blk.enc.W, alpha, spec.tau)

    normalize, online_pred = _plan(spec, params)
    Z, qz = _enumerate_latents(latent_spec)
    X = Z @ M.entries.T
    masks, wm = _mask_patterns(p, alpha)
    n_mask = masks.shape[0]

    if spec.kind == "cl_infonce":
        if mask_scheme != "independent":
            raise ParameterError(
                "cl_infonce enumeration supports independent masking only")
        if spec.neg_batch not in (None, 1):
            raise ParameterError(
                "cl_infonce enumeration supports exactly one negative")
        n_configs = Z.shape[0] * n_mask
        if n_configs > _INFONCE_MAX_ANCHOR_CONFIGS:
            raise ParameterError(
                f"cl_infonce enumeration needs (latents x masks)^2 work; "
                f"{n_configs}^2 pair evaluations exceed the "
                f"{_INFONCE_MAX_ANCHOR_CONFIGS}^2 cap")
        print(f"[ssl-lab] exact enumeration (cl_infonce): {Z.shape[0]} latents, "
              f"{n_mask} mask patterns, ~{n_configs ** 2 * n_mask:.2e} pair terms",
              file=sys.stderr)
        use_proj = params.predictor is not None
        reps = []
        for x in X:
            reps.append(_enum_reps(params.online, params.predictor if use_proj else None,
                                   normalize, masks * x))
        R = np.concatenate(reps, axis=0)              # (Nz * 2^p, m)
        w_all = (qz[:, None] * wm[None, :]).ravel()   # anchor/negative weights
        tau = spec.tau
        total = 0.0
        for zi in range(Z.shape[0]):
            Rz = reps[zi]                              # (2^p, m) same-latent reps
            for ai in range(n_mask):
                u = Rz[ai]
                s_pos = tau * (Rz @ u)                 # over D2 patterns
                s_neg = tau * (R @ u)                  # over (z', D') configs
                hi = np.maximum(s_pos[:, None], s_neg[None, :])
                val = (hi + np.log(np.exp(s_pos[:, None] - hi)
                                   + np.exp(s_neg[None, :] - hi))
                       - s_pos[:, None])
                inner = wm @ val @ w_all
                total += qz[zi] * wm[ai] * float(inner)
        return total

    work = Z.shape[0] * n_mask
    print(f"[ssl-lab] exact enumeration: {Z.shape[0]} latents, {n_mask} mask "
          f"patterns, ~{2 * work * params.online[0].enc.W.size:.2e} kernel mults",
          file=sys.stderr)

    simsiam = spec.kind == "neg_cosine_simsiam"
    shared = params.target is None
    target_blocks = params.online if shared else params.target

    def pair(F1, F2):
        if mask_scheme == "independent":
            return float(np.dot(wm @ F1, wm @ F2))
        return float(np.einsum("i,ij,ij->", wm, F1, F2))

    acc = 0.0
    for zi, x in enumerate(X):
        if mask_scheme == "independent":
            V1 = masks * x
            V2 = V1
        else:
            V1 = 2.0 * masks * x
            V2 = 2.0 * (1.0 - masks) * x
        if simsiam:
            # both symmetrized cross terms (they differ under dependent masks)
            P1 = _enum_reps(params.online, params.predictor, True, V1)
            P2 = _enum_reps(params.online, params.predictor, True, V2)
            H1 = _enum_reps(params.online, None, True, V1)
            H2 = _enum_reps(params.online, None, True, V2)
            val = 0.5 * (pair(P1, H2) + pair(P2, H1))
        else:
            F1 = _enum_reps(params.online,
                            params.predictor if online_pred else None,
                            normalize, V1)
            F2 = _enum_reps(target_blocks, None, normalize, V2)
            val = pair(F1, F2)
        acc += qz[zi] * val

    if simsiam:
        return -acc
    loss = 2.0 - 2.0 * acc
    if spec.kind == "linear_ncl_wd":
        lam = spec.weight_decay
        Wo = params.online[0].enc.W
        Wt = params.target[0].enc.W
        loss += 0.5 * (1.0 - lam) * (float(np.sum(Wo * Wo)) + float(np.sum(Wt * Wt)))
    return loss


# ---------------------------------------------------------------------------
# landscape certifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LandscapeVerdict:
    """Outcome of certifying one candidate weight matrix."""

    loss: float
    reference: float
    margin: float
    is_global_min: bool
    violated: str | None
    detail: str


def _check_unit_columns(W, tol=1e-8):
    norms = np.sqrt((W * W).sum(axis=0))
    err = float(np.max(np.abs(norms - 1.0)))
    if err > tol:
        raise ParameterError(
            f"candidate must have unit columns (max deviation {err:.3e})")


def ncl_landscape_certify(W, alpha: float, tolerance: float = 1e-9) -> LandscapeVerdict:
    """Certify a unit-column W against the matching-loss global minimum.

    The exact-expectation inner matching loss of a bias-free relu encoder
    pair (both = W) under one-hot latents and M = I attains its minimum
    2 - 2 alpha^2 exactly on entrywise-nonnegative unit-column matrices;
    any negative entry forces a strictly positive margin.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionError("candidate must be a matrix")
    _check_unit_columns(W)
    m, d = W.shape
    enc = EncoderState(W=W, b=np.zeros(m), activation="relu")
    params = ModelParams(online=[EncoderBlock(enc)], target=[EncoderBlock(enc)])
    loss = exact_loss_enumeration(
        LossSpec("ncl_inner"), params, DictionaryMatrix(np.eye(d)), alpha,
        LatentSpec("one_hot", d))
    reference = 2.0 - 2.0 * alpha ** 2
    margin = loss - reference
    neg = np.argwhere(W < 0.0)
    if neg.size:
        i, j = map(int, neg[np.argmin(W[tuple(neg.T)])])
        violated = "nonnegativity"
        detail = f"{neg.shape[0]} negative entries; most negative W[{i},{j}] = {W[i, j]:.6g}"
    else:
        violated = None
        detail = "entrywise nonnegative with unit columns"
    return LandscapeVerdict(loss=loss, reference=reference, margin=margin,
                            is_global_min=abs(margin) <= tolerance,
                            violated=violated, detail=detail)


def cl_landscape_certify(W, alpha: float, tau: float,
                         tolerance: float = 1e-9) -> LandscapeVerdict:
    """Certify a unit-column W against the contrastive surrogate minimum.

    Reference value: the surrogate at the identity (all permutation matrices
    score the same by symmetry). The structural test reports, in order, a
    negative entry, non-orthonormal columns, or a column supported on more
    than one coordinate — any of which excludes a permutation matrix.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionError("candidate must be a matrix")
    _check_unit_columns(W)
    m, d = W.shape
    loss = cl_infinite_batch_loss(W, alpha, tau)
    reference = cl_infinite_batch_loss(np.eye(d), alpha, tau)
    margin = loss - reference

    violated = None
    detail = "permutation structure"
    if float(W.min()) < -1e-12:
        i, j = map(int, np.unravel_index(np.argmin(W), W.shape))
        violated = "nonnegativity"
        detail = f"W[{i},{j}] = {W[i, j]:.6g} < 0"
    else:
        gram_err = float(np.max(np.abs(W.T @ W - np.eye(d))))
        if gram_err > 1e-8:
            violated = "orthonormality"
            detail = f"max |W^T W - I| = {gram_err:.3e}"
        else:
            support = np.abs(W) > 1e-8
            per_col = support.sum(axis=0)
            if m != d or (per_col != 1).any() or (support.sum(axis=1) > 1).any():
                violated = "single_support"
                detail = (f"columns carry {per_col.min()}..{per_col.max()} "
                          "nonzero entries (permutations carry exactly 1)")
    return LandscapeVerdict(loss=loss, reference=reference, margin=margin,
                            is_global_min=abs(margin) <= tolerance,
                            violated=violated, detail=detail)


# ---------------------------------------------------------------------------
# certification CSV
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertRow:
    check: str
    instance: str
    value: float
    expected: float
    margin: float
    passed: bool


def write_certification_csv(path, rows) -> None:
    """Write `check,instance,value,expected,margin,pass` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("check,instance,value,expected,margin,pass\n")
        for r in rows:
            fh.write(f"{r.check},{r.instance},{r.value:.17g},{r.expected:.17g},"
                     f"{r.margin:.17g},{'true' if r.passed else 'false'}\n")
