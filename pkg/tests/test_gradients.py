"""Central-difference verification of every analytic gradient path."""

import numpy as np
import pytest

from ssl_lab.losses import LossSpec, loss_and_gradient, verify_gradients

from _helpers import GRAD_CONFIGS

FD_TOL = 1e-5


@pytest.mark.parametrize("name", sorted(GRAD_CONFIGS))
def test_gradients_match_finite_differences(name, rng):
    spec, params, v1, v2, negatives = GRAD_CONFIGS[name](rng)
    report = verify_gradients(spec, params, v1, v2, negatives)
    assert report["max"] <= FD_TOL, report


def test_report_structure(rng):
    spec, params, v1, v2, _ = GRAD_CONFIGS["ncl_l2/bn+srelu"](rng)
    report = verify_gradients(spec, params, v1, v2)
    assert "online[0].W" in report
    assert "online[0].b" in report
    assert "online[0].gamma" in report
    assert "online[0].beta" in report
    blocks = {k: v for k, v in report.items() if k != "max"}
    assert report["max"] == max(blocks.values())
    # stop-gradient default: no target entries in the report
    assert not any(k.startswith("target") for k in report)


def test_predictor_entries_present(rng):
    spec, params, v1, v2, negatives = GRAD_CONFIGS[
        "cl_infonce/cosine-explicit-proj"](rng)
    report = verify_gradients(spec, params, v1, v2, negatives)
    assert "predictor.W" in report and "predictor.b" in report
    assert report["max"] <= FD_TOL


def test_two_block_report_covers_both_blocks(rng):
    spec, params, v1, v2, _ = GRAD_CONFIGS["ncl_l2/two-block"](rng)
    report = verify_gradients(spec, params, v1, v2)
    assert "online[1].W" in report
    assert report["max"] <= FD_TOL


@pytest.mark.parametrize("kind,config", [
    ("ncl_inner", "ncl_inner/plain-srelu"),
    ("ncl_l2", "ncl_l2/bn+srelu"),
])
def test_target_gradients_without_stop(kind, config, rng):
    spec, params, v1, v2, _ = GRAD_CONFIGS[config](rng)
    live = LossSpec(kind, stop_gradient=False)
    report = verify_gradients(live, params, v1, v2)
    assert any(k.startswith("target[0]") for k in report)
    assert report["max"] <= FD_TOL


def test_linear_decay_gradient_both_branches(rng):
    spec, params, v1, v2, _ = GRAD_CONFIGS["linear_ncl_wd"](rng)
    report = verify_gradients(spec, params, v1, v2)
    assert "target[0].W" in report
    assert report["max"] <= FD_TOL


def test_verify_leaves_running_stats_alone(rng):
    spec, params, v1, v2, _ = GRAD_CONFIGS["ncl_l2/bn+srelu"](rng)
    bn = params.online[0].bn
    mean_before = bn.running_mean.copy()
    var_before = bn.running_var.copy()
    verify_gradients(spec, params, v1, v2)
    assert np.array_equal(bn.running_mean, mean_before)
    assert np.array_equal(bn.running_var, var_before)


def test_gradients_deterministic(rng):
    spec, params, v1, v2, _ = GRAD_CONFIGS["ncl_inner_pred/relu+bn"](rng)
    _, g1 = loss_and_gradient(spec, params, v1, v2, update_running=False)
    _, g2 = loss_and_gradient(spec, params, v1, v2, update_running=False)
    assert np.array_equal(g1.dW_online, g2.dW_online)
    assert np.array_equal(g1.dW_pred, g2.dW_pred)
