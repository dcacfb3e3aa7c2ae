"""Training loops: configs, init schemes, the SGD protocol, population GD,
and the alternating row-normalized solver."""

import math

import numpy as np
import pytest

from ssl_lab.data import DictionaryMatrix, rng_streams
from ssl_lab.encoders import EncoderState
from ssl_lab.errors import (AssumptionError, ConvergenceError, DimensionError,
                            DivergenceError, ParameterError)
from ssl_lab.losses import LossSpec, population_loss_linear
from ssl_lab.trainer import (DataConfig, ModelConfig, TrainConfig,
                             alternating_optimize, init_random, init_warm,
                             load_run_csv, prepare_data,
                             simulate_linear_population_gd, train,
                             warm_proportionality, write_run_csv,
                             RUN_CSV_HEADER)


# ---------------------------------------------------------------------------
# configuration validation
# ---------------------------------------------------------------------------

def test_data_config_validation():
    with pytest.raises(DimensionError):
        DataConfig(p=3, d=5)
    with pytest.raises(ParameterError):
        DataConfig(n_samples=0)
    with pytest.raises(ParameterError):
        DataConfig(latent="spike_slab")
    with pytest.raises(ParameterError):
        DataConfig(mask_scheme="correlated")
    with pytest.raises(ParameterError):
        DataConfig(dictionary="hadamard")
    with pytest.raises(ParameterError):
        DataConfig(alpha=1.5)
    with pytest.raises(ParameterError):
        DataConfig(noise_variance=-0.1)
    # the endpoints of the mask rate are legal
    DataConfig(alpha=0.0)
    DataConfig(alpha=1.0)


def test_model_config_validation():
    with pytest.raises(DimensionError):
        ModelConfig(m=0)
    with pytest.raises(DimensionError):
        ModelConfig(hidden=0)
    with pytest.raises(ParameterError):
        ModelConfig(activation="srelu", srelu_bias=-0.2)


def test_train_config_validation():
    spec = LossSpec("ncl_inner")
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, epochs=0)
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, batch_size=0)
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, learning_rate=-1e-3)
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, normalization_hook="spectral")
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, alternate_every=0)
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, gradient_mode="stochastic_average")
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, init="orthogonal")
    with pytest.raises(ParameterError):
        TrainConfig(loss=spec, weight_decay=0.0)
    with pytest.raises(ParameterError, match="leave"):
        TrainConfig(loss=LossSpec("linear_ncl_wd", weight_decay=0.9),
                    weight_decay=0.99)
    with pytest.raises(ParameterError, match="population"):
        TrainConfig(loss=LossSpec("ncl_l2"), gradient_mode="population")
    # learning rate 0 is an explicit no-op mode
    TrainConfig(loss=spec, learning_rate=0.0)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def test_init_random_statistics_and_determinism():
    enc = init_random(40, 30, 10, 7)
    assert enc.W.shape == (40, 30)
    assert np.all(enc.b == 0.0)
    assert enc.activation == "linear" and enc.srelu_bias is None
    # iid N(0, 1/(p d)) weights
    assert enc.W.std() == pytest.approx(1 / math.sqrt(30 * 10), rel=0.1)
    again = init_random(40, 30, 10, 7)
    assert np.array_equal(enc.W, again.W)
    srelu = init_random(4, 6, 2, 0, activation="srelu", srelu_bias=0.3)
    assert np.array_equal(srelu.srelu_bias, np.full(4, 0.3))


def test_init_warm_rows_hug_dictionary_columns(rng):
    from ssl_lab.data import generate_dictionary
    M = generate_dictionary(30, 5, "qr_gaussian", 3)
    enc = init_warm(M, 12, c=2.0, seed=11)
    assert enc.W.shape == (12, 30)
    U = enc.W / np.linalg.norm(enc.W, axis=1, keepdims=True)
    best = np.max(np.abs(U @ M.entries), axis=1)
    assert np.all(best >= 0.9)
    again = init_warm(M, 12, c=2.0, seed=11)
    assert np.array_equal(enc.W, again.W)


def test_prepare_data_determinism_and_noise():
    cfg = DataConfig(p=8, d=4, n_samples=32)
    a = prepare_data(cfg, master_seed=5)
    b = prepare_data(cfg, master_seed=5)
    assert np.array_equal(a.M.entries, b.M.entries)
    assert np.array_equal(a.Z, b.Z)
    assert np.array_equal(a.X, b.X)
    c = prepare_data(cfg, master_seed=6)
    assert not np.array_equal(a.X, c.X)
    assert a.noise_sigma == pytest.approx(math.sqrt(math.log(4) / 4))
    assert a.alpha == cfg.alpha and a.mask_scheme == cfg.mask_scheme

    clean = prepare_data(DataConfig(p=8, d=4, n_samples=16, noise_variance=0.0),
                         master_seed=5)
    assert np.array_equal(clean.X, clean.Z @ clean.M.entries.T)


def _replay_init(seed, m, p, d, count):
    """Re-draw the encoder weights exactly as the trainer's init stream does."""
    rng = rng_streams(seed)["init"]
    return [init_random(m, p, d, rng).W for _ in range(count)]


# ---------------------------------------------------------------------------
# the SGD loop
# ---------------------------------------------------------------------------

def _tiny_data(**kw):
    base = dict(p=6, d=3, n_samples=8, latent="symmetric", sparsity=0.5,
                alpha=0.5)
    base.update(kw)
    return prepare_data(DataConfig(**base), master_seed=21)


def test_zero_learning_rate_is_a_bitwise_noop():
    data = _tiny_data()
    model = ModelConfig(m=4, activation="linear", batch_norm=False)
    cfg = TrainConfig(loss=LossSpec("linear_ncl"), epochs=2, batch_size=8,
                      learning_rate=0.0, seed=13)
    result = train(cfg, model, data)
    Wa, Wb = _replay_init(13, 4, 6, 3, 2)
    assert np.array_equal(result.params.online[0].enc.W, Wa)
    assert np.array_equal(result.params.target[0].enc.W, Wb)


def test_records_shape_and_epoch_numbering():
    data = _tiny_data(n_samples=10)
    model = ModelConfig(m=4, activation="linear", batch_norm=False)
    cfg = TrainConfig(loss=LossSpec("linear_ncl"), epochs=3, batch_size=4,
                      learning_rate=0.01, seed=2)
    result = train(cfg, model, data)
    recs = result.records
    assert [r.epoch for r in recs] == [0, 1, 2, 3]
    assert all(np.isfinite(r.loss) for r in recs)
    secs = [r.seconds for r in recs]
    assert all(s2 >= s1 for s1, s2 in zip(secs, secs[1:]))
    assert all(r.seed == 2 for r in recs)
    for r in recs:
        assert 0.0 <= r.min_max_cosine <= r.median_max_cosine \
            <= r.max_max_cosine <= 1.0


def test_single_branch_kinds_have_no_target():
    data = _tiny_data(n_samples=12)
    model = ModelConfig(m=4)
    cfg = TrainConfig(loss=LossSpec("cl_infonce", tau=1.0), epochs=1,
                      batch_size=6, learning_rate=0.01, seed=3)
    result = train(cfg, model, data)
    assert result.params.target is None


def test_hidden_block_structure():
    data = _tiny_data(n_samples=12)
    model = ModelConfig(m=4, hidden=5, activation="srelu", srelu_bias=0.5,
                        batch_norm=True)
    cfg = TrainConfig(loss=LossSpec("ncl_inner"), epochs=1, batch_size=6,
                      learning_rate=0.005, seed=4)
    result = train(cfg, model, data)
    blocks = result.params.online
    assert len(blocks) == 2
    assert blocks[0].enc.activation == "linear" and blocks[0].bn is None
    assert blocks[0].enc.W.shape == (5, 6)
    assert blocks[1].enc.W.shape == (4, 5)
    assert blocks[1].bn is not None


def test_warm_start_rejects_hidden_blocks():
    data = _tiny_data()
    model = ModelConfig(m=4, hidden=5, activation="linear", batch_norm=False)
    cfg = TrainConfig(loss=LossSpec("ncl_inner"), epochs=1, batch_size=8,
                      init="warm_start", seed=0)
    with pytest.raises(ParameterError, match="single-block"):
        train(cfg, model, data)


def test_predictor_gating():
    data = _tiny_data(n_samples=12)
    with pytest.raises(ParameterError, match="predictor"):
        train(TrainConfig(loss=LossSpec("ncl_inner"), epochs=1, batch_size=6),
              ModelConfig(m=4, predictor=True), data)
    cfg = TrainConfig(loss=LossSpec("cl_infonce", tau=1.0), epochs=2,
                      batch_size=6, learning_rate=0.05, seed=5)
    result = train(cfg, ModelConfig(m=4, predictor=True), data)
    assert result.params.predictor is not None
    assert np.any(result.params.predictor.b != 0.0)


def test_linear_kinds_demand_plain_linear_blocks():
    data = _tiny_data()
    cfg = TrainConfig(loss=LossSpec("linear_ncl"), epochs=1, batch_size=8)
    with pytest.raises(ParameterError, match="plain single linear"):
        train(cfg, ModelConfig(m=4, activation="srelu"), data)
    with pytest.raises(ParameterError, match="plain single linear"):
        train(cfg, ModelConfig(m=4, activation="linear", batch_norm=True), data)


def test_alternation_freezes_the_off_branch():
    # stop-gradient kinds update only the online role, so a horizon-length
    # alternation period leaves the second branch at its initialization
    data = _tiny_data()
    model = ModelConfig(m=4, activation="linear", batch_norm=False)
    cfg = TrainConfig(loss=LossSpec("ncl_inner"), epochs=2, batch_size=4,
                      learning_rate=0.05, alternate_every=10 ** 6, seed=17)
    result = train(cfg, model, data)
    Wa, Wb = _replay_init(17, 4, 6, 3, 2)
    assert np.array_equal(result.params.target[0].enc.W, Wb)
    assert not np.array_equal(result.params.online[0].enc.W, Wa)

    stepwise = TrainConfig(loss=LossSpec("ncl_inner"), epochs=2, batch_size=4,
                           learning_rate=0.05, alternate_every=1, seed=17)
    result = train(stepwise, model, data)
    assert not np.array_equal(result.params.online[0].enc.W, Wa)
    assert not np.array_equal(result.params.target[0].enc.W, Wb)


def test_normalization_hooks_hold_after_training():
    data = _tiny_data(n_samples=12)
    model = ModelConfig(m=4, activation="srelu", srelu_bias=0.5,
                        batch_norm=True)
    rows_cfg = TrainConfig(loss=LossSpec("ncl_inner"), epochs=2, batch_size=6,
                           learning_rate=0.05, normalization_hook="rows",
                           seed=9)
    result = train(rows_cfg, model, data)
    for blocks in (result.params.online, result.params.target):
        W = blocks[0].enc.W
        assert np.max(np.abs(np.linalg.norm(W, axis=1) - 1.0)) <= 1e-12

    cols_cfg = TrainConfig(loss=LossSpec("ncl_inner"), epochs=2, batch_size=6,
                           learning_rate=0.05, normalization_hook="columns",
                           seed=9)
    result = train(cols_cfg, model, data)
    W = result.params.online[0].enc.W
    assert np.max(np.abs(np.linalg.norm(W, axis=0) - 1.0)) <= 1e-12


def test_bias_training_switch():
    data = _tiny_data(n_samples=12)
    cfg = TrainConfig(loss=LossSpec("ncl_inner"), epochs=2, batch_size=6,
                      learning_rate=0.05, seed=6)
    frozen = train(cfg, ModelConfig(m=4, activation="linear",
                                    batch_norm=False), data)
    assert np.all(frozen.params.online[0].enc.b == 0.0)
    live = train(cfg, ModelConfig(m=4, activation="linear", batch_norm=False,
                                  bias_trainable=True), data)
    assert np.any(live.params.online[0].enc.b != 0.0)


@pytest.mark.filterwarnings("ignore:overflow")
def test_divergence_is_caught():
    data = _tiny_data()
    model = ModelConfig(m=4, activation="linear", batch_norm=False)
    cfg = TrainConfig(loss=LossSpec("linear_ncl"), epochs=50, batch_size=8,
                      learning_rate=1e8, seed=1)
    with pytest.raises(DivergenceError, match="non-finite"):
        train(cfg, model, data)


# ---------------------------------------------------------------------------
# population-gradient descent
# ---------------------------------------------------------------------------

def test_population_linear_run_matches_exact_losses():
    data = _tiny_data(p=5, d=2, latent="symmetric", sparsity=0.4,
                      n_samples=4)
    model = ModelConfig(m=3, activation="linear", batch_norm=False)
    spec = LossSpec("linear_ncl_wd", weight_decay=0.95)
    cfg = TrainConfig(loss=spec, epochs=20, batch_size=4, learning_rate=0.1,
                      gradient_mode="population", seed=8)
    result = train(cfg, model, data)
    assert len(result.records) == 21
    Wa, Wb = _replay_init(8, 3, 5, 2, 2)
    expected0 = population_loss_linear(Wa, Wb, data.M, 0.5, 0.4,
                                       data.noise_sigma, weight_decay=0.95)
    assert result.records[0].loss == pytest.approx(expected0, rel=1e-14)
    assert all(np.isfinite(r.loss) for r in result.records)

    with pytest.raises(ParameterError, match="hook"):
        train(TrainConfig(loss=spec, epochs=1, gradient_mode="population",
                          normalization_hook="rows"), model, data)


def test_population_one_hot_kappa_is_one_over_d():
    data = _tiny_data(p=4, d=4, latent="one_hot", n_samples=4)
    model = ModelConfig(m=3, activation="linear", batch_norm=False)
    spec = LossSpec("linear_ncl_wd", weight_decay=0.9)
    cfg = TrainConfig(loss=spec, epochs=1, batch_size=4, learning_rate=0.05,
                      gradient_mode="population", seed=12)
    result = train(cfg, model, data)
    Wa, Wb = _replay_init(12, 3, 4, 4, 2)
    expected = population_loss_linear(Wa, Wb, data.M, 0.5, 0.25,
                                      data.noise_sigma, weight_decay=0.9)
    assert result.records[0].loss == pytest.approx(expected, rel=1e-14)


def test_population_warm_path_preconditions():
    spec = LossSpec("ncl_inner")
    base = dict(loss=spec, epochs=1, batch_size=4, gradient_mode="population")
    ident = _tiny_data(p=3, d=3, dictionary="identity", n_samples=4,
                       sparsity=0.3)
    with pytest.raises(ParameterError, match="srelu"):
        train(TrainConfig(**base), ModelConfig(m=3, activation="linear",
                                               batch_norm=False), ident)
    srelu_model = ModelConfig(m=3, activation="srelu", srelu_bias=0.5,
                              batch_norm=False)
    dep = _tiny_data(p=3, d=3, dictionary="identity", n_samples=4,
                     sparsity=0.3, mask_scheme="dependent")
    with pytest.raises(ParameterError, match="independent"):
        train(TrainConfig(**base), srelu_model, dep)
    rotated = _tiny_data(p=3, d=3, n_samples=4, sparsity=0.3)
    with pytest.raises(ParameterError, match="identity"):
        train(TrainConfig(**base), srelu_model, rotated)
    # a cold random init lands far outside the warm-start region
    with pytest.raises(AssumptionError, match="warm_start_radius"):
        train(TrainConfig(**base), srelu_model, ident)


def test_simulate_population_gd_validation(rng):
    W = rng.standard_normal((2, 3))
    M = np.eye(3)
    with pytest.raises(ParameterError, match="lam"):
        simulate_linear_population_gd(W, W, M, 0.0, 0.01, 0.5, 0.5, 0.0, 2)
    with pytest.raises(ParameterError, match="schedule"):
        simulate_linear_population_gd(W, W, M, 0.9, [0.01], 0.5, 0.5, 0.0, 2)
    traj = simulate_linear_population_gd(W, W, M, 0.9, 0.01, 0.5, 0.5, 0.0, 3)
    assert len(traj) == 4
    assert np.array_equal(traj[0][0], W)
    assert not np.shares_memory(traj[0][0], W)


# ---------------------------------------------------------------------------
# alternating row-normalized solver
# ---------------------------------------------------------------------------

def _warm_pair(rng, d, radius_frac=0.9, bias=0.5):
    r = radius_frac / (10 * d)
    mk = lambda: EncoderState(
        W=np.eye(d) + rng.uniform(-1.0, 1.0, (d, d)) * r,
        b=np.zeros(d), activation="srelu", srelu_bias=np.full(d, bias))
    return mk(), mk()


def test_warm_proportionality_formula(rng):
    d, alpha, kappa, sigma0 = 3, 0.5, 0.3, 0.2
    online, _ = _warm_pair(rng, d)
    a = warm_proportionality(online, alpha, kappa, sigma0)
    diag = np.diag(online.W) - 1.0
    expected = alpha ** 2 * (kappa + sigma0 ** 2) / (
        (1 + sigma0 ** 2) * (1 + diag) - 0.5)
    assert np.allclose(a, expected, rtol=1e-15)
    assert np.all((0 < a) & (a < 1))

    sunk = EncoderState(W=np.eye(d) * 1e-3, b=np.zeros(d),
                        activation="srelu", srelu_bias=np.full(d, 0.999))
    with pytest.raises(AssumptionError, match="denominator"):
        warm_proportionality(sunk, alpha, kappa, sigma0)


def test_alternating_optimize_reaches_identity(rng):
    d, alpha, kappa = 4, 0.5, 0.3
    online, target = _warm_pair(rng, d)
    result = alternating_optimize(online, target, alpha, kappa, 0.0)
    assert result.converged
    assert np.max(np.abs(result.online.W - np.eye(d))) <= 1e-4
    assert np.max(np.abs(result.target.W - np.eye(d))) <= 1e-4
    branches = [row.branch for row in result.trace]
    assert branches[:2] == ["online", "target"]
    assert all(0 < row.a_bound < 1 for row in result.trace)
    # the solved branch's off-diagonal mass shrinks round over round
    online_offs = [row.offdiag_max for row in result.trace
                   if row.branch == "online"]
    assert all(b <= a + 1e-12 for a, b in zip(online_offs, online_offs[1:]))
    assert online_offs[-1] <= 1e-6


def test_alternating_optimize_validation(rng):
    online, target = _warm_pair(rng, 3)
    with pytest.raises(ParameterError, match="row"):
        alternating_optimize(online, target, 0.5, 0.3, 0.0,
                             normalization="columns")
    with pytest.raises(ParameterError, match="eta"):
        alternating_optimize(online, target, 0.5, 0.3, 0.0, eta=0.0)
    with pytest.raises(ParameterError, match="tolerances"):
        alternating_optimize(online, target, 0.5, 0.3, 0.0, inner_tol=0.0)
    cold = EncoderState(W=np.eye(3) + 0.5, b=np.zeros(3), activation="srelu",
                        srelu_bias=np.full(3, 0.5))
    with pytest.raises(AssumptionError, match="preconditions"):
        alternating_optimize(cold, target, 0.5, 0.3, 0.0)


def test_alternating_optimize_iteration_caps(rng):
    online, target = _warm_pair(rng, 3)
    with pytest.raises(ConvergenceError) as exc:
        alternating_optimize(online, target, 0.5, 0.3, 0.0, eta=0.01,
                             max_inner=1)
    assert "online" in exc.value.deltas
    with pytest.raises(ConvergenceError) as exc:
        alternating_optimize(online, target, 0.5, 0.3, 0.0,
                             outer_tol=1e-300, max_outer=2)
    assert exc.value.deltas["joint"] > 0


# ---------------------------------------------------------------------------
# run CSV
# ---------------------------------------------------------------------------

def test_run_csv_round_trip(tmp_path):
    data = _tiny_data(n_samples=10)
    model = ModelConfig(m=4, activation="linear", batch_norm=False)
    cfg = TrainConfig(loss=LossSpec("linear_ncl"), epochs=2, batch_size=5,
                      learning_rate=0.01, seed=2)
    records = train(cfg, model, data).records
    path = tmp_path / "run.csv"
    write_run_csv(path, records)
    arr = load_run_csv(path)
    assert arr.shape == (3, 6)
    assert np.array_equal(arr[:, 0], [0.0, 1.0, 2.0])
    # %.17g columns round-trip float64 exactly; seconds is truncated to 1e-6
    for j, field in enumerate(("loss", "min_max_cosine", "median_max_cosine",
                               "max_max_cosine"), start=1):
        assert np.array_equal(arr[:, j], [getattr(r, field) for r in records])
    assert np.allclose(arr[:, 5], [r.seconds for r in records], atol=1e-6)

    bad = tmp_path / "bad.csv"
    bad.write_text("epoch,loss\n0,1.0\n")
    with pytest.raises(ParameterError, match="header"):
        load_run_csv(bad)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text(RUN_CSV_HEADER + "\n1,2,3,4,5\n")
    with pytest.raises(DimensionError):
        load_run_csv(ragged)
