import math

import numpy as np
import pytest

from oracles import ctc_enumerate, numeric_grad, rel_error, rnnt_enumerate
from trlab.errors import ConfigError
from trlab.loss import ctc_loss, ctc_min_frames, ilm_loss_from_log_probs, joint_loss, rnnt_loss
from trlab.model import Model, ModelConfig
from trlab.numkit import log_softmax


def random_rnnt_case(rng):
    T = int(rng.integers(1, 5))
    U = int(rng.integers(0, 4))
    K = int(rng.integers(2, 6))
    y = [int(v) for v in rng.integers(1, K, size=U)]
    return log_softmax(rng.normal(size=(T, U + 1, K)) * 2), y


def random_ctc_case(rng):
    while True:
        T = int(rng.integers(1, 5))
        K = int(rng.integers(2, 6))
        y = [int(v) for v in rng.integers(1, K, size=int(rng.integers(0, 4)))]
        if ctc_min_frames(y) <= T:
            return log_softmax(rng.normal(size=(T, K)) * 2), y


def test_rnnt_matches_enumeration(backend):
    rng = np.random.default_rng(7)
    for _ in range(150):
        lat, y = random_rnnt_case(rng)
        assert rnnt_loss(lat, y).value == pytest.approx(-rnnt_enumerate(lat, y), abs=1e-9)


def test_ctc_matches_enumeration(backend):
    rng = np.random.default_rng(8)
    for _ in range(150):
        lp, y = random_ctc_case(rng)
        assert ctc_loss(lp, y).value == pytest.approx(-ctc_enumerate(lp, y), abs=1e-9)


def test_rnnt_uniform_single_frame_known_value():
    # T=1, U=1: one path, label then blank
    lat = np.log(np.full((1, 2, 4), 0.25))
    assert rnnt_loss(lat, [2]).value == pytest.approx(2 * math.log(4), abs=1e-12)


def test_ctc_repeated_label_needs_blank():
    lp = np.log(np.full((2, 3), 1 / 3))
    res = ctc_loss(lp, [1, 1])
    assert not res.admissible and math.isinf(res.value)
    assert ctc_min_frames([1, 1, 2]) == 4


def test_ctc_empty_target_is_all_blank():
    lp = log_softmax(np.random.default_rng(0).normal(size=(3, 4)))
    assert ctc_loss(lp, []).value == pytest.approx(-lp[:, 0].sum(), abs=1e-12)


def test_rnnt_rejects_bad_shapes():
    with pytest.raises(ValueError):
        rnnt_loss(np.zeros((0, 1, 3)), [])
    with pytest.raises(ValueError):
        rnnt_loss(np.zeros((2, 3, 3)), [1])


@pytest.mark.parametrize("seed", range(5))
def test_rnnt_gradient_finite_differences(backend, seed):
    rng = np.random.default_rng(seed)
    lat, y = random_rnnt_case(rng)
    lat = lat.copy()
    analytic = rnnt_loss(lat, y).grad
    assert rel_error(analytic, numeric_grad(lambda: rnnt_loss(lat, y).value, lat)) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_ctc_gradient_finite_differences(backend, seed):
    rng = np.random.default_rng(100 + seed)
    lp, y = random_ctc_case(rng)
    lp = lp.copy()
    analytic = ctc_loss(lp, y).grad
    assert rel_error(analytic, numeric_grad(lambda: ctc_loss(lp, y).value, lp)) < 1e-6


def test_rnnt_gradient_occupancy_sums_to_path_length():
    """Each alignment uses T+U lattice cells, so occupancies sum to T+U."""
    rng = np.random.default_rng(3)
    lat = log_softmax(rng.normal(size=(5, 4, 6)))
    y = [1, 2, 5]
    assert -rnnt_loss(lat, y).grad.sum() == pytest.approx(5 + 3, abs=1e-10)


def test_ilm_uniform_distribution():
    K1 = 6
    lp = np.log(np.full((3, K1), 1 / K1))
    assert ilm_loss_from_log_probs(lp, [1, 4, 6]).value == pytest.approx(math.log(K1), abs=1e-14)


def test_ilm_empty_sequence():
    assert ilm_loss_from_log_probs(np.zeros((0, 4)), []).value == 0.0


def _model(head="iam"):
    return Model(ModelConfig(mode="hat", ctc_head=head, vocab_size=5, feat_dim=3, hidden_dim=4,
                             joint_dim=4, enc_layers=1, stride=2), seed=3)


def test_joint_loss_is_weighted_sum(rng):
    m = _model()
    x = rng.normal(size=(8, 3))
    r, _ = joint_loss(m, x, [1, 2], 0.75, 0.1, need_grad=False)
    assert r.joint == pytest.approx(r.rnnt + 0.75 * r.ctc + 0.1 * r.ilm, abs=1e-12)


def test_joint_loss_zero_weights_equal_rnnt(rng):
    m = _model()
    x = rng.normal(size=(8, 3))
    r, _ = joint_loss(m, x, [1, 2], 0.0, 0.0, need_grad=False)
    assert r.joint == r.rnnt


def test_alpha_without_ctc_branch_rejected(rng):
    with pytest.raises(ConfigError):
        joint_loss(_model("none"), rng.normal(size=(4, 3)), [1], 0.5, 0.0)


def test_inadmissible_ctc_with_zero_alpha_stays_finite(rng):
    m = _model()
    r, grads = joint_loss(m, rng.normal(size=(2, 3)), [1, 1, 1], 0.0, 0.1)
    assert not r.ctc_admissible and math.isfinite(r.joint)
    assert all(np.isfinite(g).all() for g in grads.values())
