"""Sparse dictionary data: dictionary matrices, sparse latents, masked views.

Generative model: an observation is ``x = M z + noise_sigma * eps`` with a
column-orthonormal dictionary ``M`` (p x d), a sparse latent ``z`` and iid
standard normal ``eps``. Augmented views are produced by coordinate masking,
either two independent Bernoulli masks ``(D1 x, D2 x)`` or a complementary
pair ``(2 D x, 2 (I - D) x)`` whose sum reconstructs ``2x`` exactly.

Conventions
-----------
- All arrays are float64; batches are row-major ``(n, dim)``.
- Sampling functions take an explicit ``numpy.random.Generator``; use
  :func:`rng_streams` to derive one independent stream per randomness source
  from a single master seed (so e.g. changing how many batches are drawn
  never perturbs the dictionary).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, ParameterError

ORTHONORMALITY_TOL = 1e-10
MAX_REJECTION_RETRIES = 10 ** 6

RNG_STREAM_NAMES = ("dictionary", "latents", "noise", "masks", "init", "batches")

LATENT_KINDS = ("one_hot", "zero_one", "symmetric")
MASK_SCHEMES = ("independent", "dependent")
DICTIONARY_MODES = ("qr_gaussian", "identity")

_FLOAT_FMT = "%.17g"


def rng_streams(master_seed: int) -> dict[str, np.random.Generator]:
    """One independent generator per logical randomness source.

    Streams: dictionary, latents, noise, masks, init, batches.
    """
    children = np.random.SeedSequence(master_seed).spawn(len(RNG_STREAM_NAMES))
    return {name: np.random.default_rng(seq)
            for name, seq in zip(RNG_STREAM_NAMES, children)}


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C", copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# dictionary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DictionaryMatrix:
    """Column-orthonormal p x d matrix; validated at construction."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2:
            raise DimensionError("dictionary must be a 2-D array")
        p, d = entries.shape
        if p < d:
            raise DimensionError(
                f"dictionary needs at least as many rows as columns, got {p} x {d}")
        gram_err = np.max(np.abs(entries.T @ entries - np.eye(d)))
        if gram_err > ORTHONORMALITY_TOL:
            raise DegenerateInputError(
                f"dictionary columns are not orthonormal: max |M^T M - I| = {gram_err:.3e}"
                f" exceeds {ORTHONORMALITY_TOL:.0e}")
        object.__setattr__(self, "entries", _freeze(entries))

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]


def generate_dictionary(p: int, d: int, mode: str = "qr_gaussian",
                        seed=0) -> DictionaryMatrix:
    """Draw a column-orthonormal dictionary.

    ``qr_gaussian``: QR of a p x d standard normal matrix, with each column's
    sign fixed so the corresponding diagonal entry of R is positive (makes the
    draw unique and seed-stable). ``identity`` requires ``p == d``. ``seed``
    may be an int or an already-seeded Generator (e.g. a dedicated stream).
    """
    if mode not in DICTIONARY_MODES:
        raise ParameterError(f"unknown dictionary mode {mode!r}")
    if p < d:
        raise DimensionError(f"need p >= d, got p={p} d={d}")
    if mode == "identity":
        if p != d:
            raise DimensionError(f"identity dictionary needs p == d, got p={p} d={d}")
        return DictionaryMatrix(np.eye(d))
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
    g = rng.standard_normal((p, d))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return DictionaryMatrix(q * signs)


# ---------------------------------------------------------------------------
# latents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatentSpec:
    """Distribution of the sparse latent.

    kind:
        ``one_hot``   — a uniformly random standard basis vector;
        ``zero_one``  — iid coordinates, 1 with probability ``sparsity``;
        ``symmetric`` — iid coordinates, +-1 each with probability
        ``sparsity / 2``, otherwise 0.
    sparsity:
        Per-coordinate activation probability, in (0, 1]; ignored by one_hot.
    reject_all_zero:
        Resample any all-zero draw (capped at 10**6 retries per sample).
    """

    kind: str
    d: int
    sparsity: float = 0.5
    reject_all_zero: bool = False

    def __post_init__(self):
        if self.kind not in LATENT_KINDS:
            raise ParameterError(f"unknown latent kind {self.kind!r}")
        if self.d < 1:
            raise DimensionError(f"latent dimension must be >= 1, got {self.d}")
        if self.kind != "one_hot" and not 0.0 < self.sparsity <= 1.0:
            raise ParameterError(
                f"sparsity must be in (0, 1], got {self.sparsity}")


def sample_latents(spec: LatentSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` latents as an (n, d) float64 array."""
    if n < 0:
        raise ParameterError(f"n must be >= 0, got {n}")
    d = spec.d
    if spec.kind == "one_hot":
        z = np.zeros((n, d))
        z[np.arange(n), rng.integers(0, d, size=n)] = 1.0
        return z

    def draw(k: int) -> np.ndarray:
        if spec.kind == "zero_one":
            return (rng.random((k, d)) < spec.sparsity).astype(np.float64)
        u = rng.random((k, d))
        return np.where(u < spec.sparsity / 2, -1.0,
                        np.where(u < spec.sparsity, 1.0, 0.0))

    z = draw(n)
    if spec.reject_all_zero and n > 0:
        for _ in range(MAX_REJECTION_RETRIES):
            dead = ~z.any(axis=1)
            if not dead.any():
                break
            z[dead] = draw(int(dead.sum()))
        else:
            raise DegenerateInputError(
                "all-zero rejection did not terminate within "
                f"{MAX_REJECTION_RETRIES} retries (sparsity too small?)")
    return z


def sample_latent(spec: LatentSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw a single latent vector of length d."""
    return sample_latents(spec, 1, rng)[0]


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

def sample_observations(M: DictionaryMatrix, Z: np.ndarray, noise_sigma: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Map latents through the dictionary and add isotropic Gaussian noise.

    Z is (n, d); returns X = Z M^T + noise_sigma * N(0, I), shape (n, p).
    """
    if noise_sigma < 0:
        raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != M.d:
        raise DimensionError(
            f"latent dimension {Z.shape[1]} does not match dictionary d={M.d}")
    X = Z @ M.entries.T
    if noise_sigma > 0:
        X = X + noise_sigma * rng.standard_normal(X.shape)
    return X


def sample_observation(M: DictionaryMatrix, z: np.ndarray, noise_sigma: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Single-sample version of :func:`sample_observations`."""
    return sample_observations(M, np.asarray(z)[None, :], noise_sigma, rng)[0]


def default_noise_variance(d: int) -> float:
    """Empirical-protocol noise variance log(d) / d."""
    if d < 1:
        raise DimensionError(f"d must be >= 1, got {d}")
    return float(np.log(d) / d)


# ---------------------------------------------------------------------------
# masking
# ---------------------------------------------------------------------------

def sample_mask_pairs(scheme: str, alpha: float, p: int, n: int,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` mask pairs, each side an (n, p) 0/1 float array.

    ``independent``: both masks iid Bernoulli(alpha) per coordinate.
    ``dependent``:   second mask is the complement of the first
    (first is Bernoulli(alpha)).
    """
    if scheme not in MASK_SCHEMES:
        raise ParameterError(f"unknown mask scheme {scheme!r}")
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    d1 = (rng.random((n, p)) < alpha).astype(np.float64)
    if scheme == "independent":
        d2 = (rng.random((n, p)) < alpha).astype(np.float64)
    else:
        d2 = 1.0 - d1
    return d1, d2


def sample_mask_pair(scheme: str, alpha: float, p: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Single mask pair, each side a length-p 0/1 vector."""
    d1, d2 = sample_mask_pairs(scheme, alpha, p, 1, rng)
    return d1[0], d2[0]


def apply_masks(scheme: str, d1: np.ndarray, d2: np.ndarray,
                X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Build the two augmented views of X under a mask pair.

    independent: (D1 x, D2 x); dependent: (2 D x, 2 (I - D) x), so the two
    views sum to 2x coordinate-wise.
    """
    if scheme not in MASK_SCHEMES:
        raise ParameterError(f"unknown mask scheme {scheme!r}")
    X = np.asarray(X, dtype=np.float64)
    if d1.shape != X.shape or d2.shape != X.shape:
        raise DimensionError(
            f"mask shape {d1.shape}/{d2.shape} does not match views {X.shape}")
    scale = 1.0 if scheme == "independent" else 2.0
    return scale * d1 * X, scale * d2 * X


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def export_dataset_csv(path, Z: np.ndarray, X: np.ndarray) -> None:
    """Write samples as rows ``sample_id, z_0.., x_0..`` with a header."""
    Z = np.atleast_2d(Z)
    X = np.atleast_2d(X)
    if Z.shape[0] != X.shape[0]:
        raise DimensionError(
            f"latents ({Z.shape[0]}) and observations ({X.shape[0]}) disagree")
    d, p = Z.shape[1], X.shape[1]
    header = ",".join(["sample_id"]
                      + [f"z_{j}" for j in range(d)]
                      + [f"x_{j}" for j in range(p)])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(Z.shape[0]):
            row = [str(i)] + [_FLOAT_FMT % v for v in Z[i]] + [_FLOAT_FMT % v for v in X[i]]
            fh.write(",".join(row) + "\n")


def export_dictionary_csv(path, M: DictionaryMatrix) -> None:
    """Write the dictionary as p rows x d comma-separated full-precision values."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(M.p):
            fh.write(",".join(_FLOAT_FMT % v for v in M.entries[i]) + "\n")


def load_dictionary_csv(path) -> DictionaryMatrix:
    """Inverse of :func:`export_dictionary_csv`."""
    entries = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return DictionaryMatrix(entries)
