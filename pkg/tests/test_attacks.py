import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from signrobust import attacks, nn
from signrobust.attacks import AttackConfig
from signrobust.errors import ConfigError, LabelError, ShapeError
from signrobust.tensor import Rng, linf_distance

from conftest import tiny_model


def _input(model, seed):
    return Rng(seed).uniform(model.input_shape, -1, 1)


def test_config_validation():
    with pytest.raises(ConfigError):
        AttackConfig(epsilon=-0.1)
    with pytest.raises(ConfigError):
        AttackConfig(alpha=0)
    with pytest.raises(ConfigError):
        AttackConfig(steps=0)
    cfg = AttackConfig(0.1)
    assert (cfg.steps, cfg.alpha, cfg.random_start) == (10, 0.02, True)


def test_project_examples():
    np.testing.assert_array_equal(
        attacks.project_linf([0.5, -0.05], [0.0, 0.0], 0.1), [0.1, -0.05])
    inside = np.array([0.3, -0.2])
    assert attacks.project_linf(inside, [0.25, -0.25], 0.1).tobytes() == inside.tobytes()
    with pytest.raises(ShapeError):
        attacks.project_linf(np.zeros(2), np.zeros(3), 0.1)


@given(st.data())
def test_project_is_nearest_point_and_idempotent(data):
    n = data.draw(st.integers(1, 6))
    c = data.draw(hnp.arrays(np.float64, n, elements=st.floats(-3, 3)))
    x = data.draw(hnp.arrays(np.float64, n, elements=st.floats(-1, 1)))
    eps = data.draw(st.floats(0, 1))
    p = attacks.project_linf(c, x, eps)
    assert np.all(np.abs(p - x) <= eps + 1e-12)
    for i in range(n):
        grid = np.linspace(x[i] - eps, x[i] + eps, 2001)
        assert abs(p[i] - c[i]) <= np.abs(grid - c[i]).min() + 1e-12
    np.testing.assert_array_equal(attacks.project_linf(p, x, eps), p)


def test_fgsm_zero_budget_is_identity():
    m = tiny_model(1)
    x = _input(m, 2)
    adv = attacks.fgsm(m, x, 1, 0.0)
    assert adv.x_adv.tobytes() == x.tobytes()
    assert adv.predicted_label == nn.predict(m, x)
    assert adv.loss_before == adv.loss_after


def test_fgsm_interior_pixels_move_by_exactly_epsilon():
    m = tiny_model(3)
    x = _input(m, 4) * 0.5  # stays interior for eps = 0.1
    eps = 0.1
    adv = attacks.fgsm(m, x, 0, eps)
    _, g = nn.input_gradient(m, x, 0)
    moved = g != 0
    assert moved.any()
    np.testing.assert_array_equal(adv.x_adv, x + eps * np.sign(g))
    np.testing.assert_allclose(np.abs(adv.perturbation[moved]), eps, rtol=0, atol=1e-15)
    assert not adv.perturbation[~moved].any()


def test_fgsm_matches_linear_model_oracle():
    r = Rng(5)
    w, b = r.normal((3, 12)), r.normal(3)
    model = nn.ModelParams((nn.LayerSpec(nn.FLATTEN), nn.LayerSpec(nn.DENSE, 12, 3)), [w, b], 2, 3)
    x = r.uniform((3, 2, 2), -0.8, 0.8)
    eps, y = 0.15, 1
    z = w @ x.ravel() + b
    p = np.exp(z - z.max())
    p /= p.sum()
    direction = np.zeros(12)
    for k in range(3):
        direction += (p[k] - (k == y)) * w[k]
    expected = np.clip(x.ravel() + eps * np.sign(direction), -1, 1).reshape(x.shape)
    adv = attacks.fgsm(model, x, y, eps)
    np.testing.assert_array_equal(adv.x_adv, expected)
    assert adv.loss_after > adv.loss_before


def test_attack_errors_propagate():
    m = tiny_model(6)
    with pytest.raises(LabelError):
        attacks.fgsm(m, _input(m, 1), 5, 0.1)
    with pytest.raises(ShapeError):
        attacks.pgd(m, np.zeros((3, 4, 4)), 0, AttackConfig(0.1))


def test_pgd_zero_budget_is_identity():
    m = tiny_model(7)
    x = _input(m, 8)
    for rs in (True, False):
        adv = attacks.pgd(m, x, 2, AttackConfig(0.0, alpha=0.3, steps=4, random_start=rs, seed=3))
        assert adv.x_adv.tobytes() == x.tobytes()


def test_pgd_single_step_reduces_to_fgsm():
    m = tiny_model(9)
    x = _input(m, 10)
    cfg = AttackConfig(0.07, alpha=0.07, steps=1, random_start=False)
    assert attacks.pgd(m, x, 1, cfg).x_adv.tobytes() == attacks.fgsm(m, x, 1, 0.07).x_adv.tobytes()


def test_pgd_determinism_and_seed_dependence():
    m = tiny_model(11)
    x = _input(m, 12)
    cfg = AttackConfig(0.2, steps=3, seed=5)
    a, b = attacks.pgd(m, x, 0, cfg), attacks.pgd(m, x, 0, cfg)
    assert a.x_adv.tobytes() == b.x_adv.tobytes()
    c = attacks.pgd(m, x, 0, AttackConfig(0.2, steps=3, seed=6))
    assert c.x_adv.tobytes() != a.x_adv.tobytes()


def test_batch_seeds_follow_xor_rule():
    m = tiny_model(13)
    xs = Rng(14).uniform((3,) + m.input_shape, -1, 1)
    ys = np.array([0, 1, 2])
    cfg = AttackConfig(0.1, steps=2, seed=40)
    batch, _ = attacks.pgd_batch(m, xs, ys, cfg)
    for i in range(3):
        single = attacks.pgd(m, xs[i], int(ys[i]), AttackConfig(0.1, steps=2, seed=40 ^ i))
        np.testing.assert_allclose(batch[i], single.x_adv, atol=1e-12)


def test_gradient_evaluation_counts(monkeypatch):
    calls = []
    real = nn.input_gradient

    def counting(*args, **kwargs):
        calls.append(1)
        return real(*args, **kwargs)

    monkeypatch.setattr(nn, "input_gradient", counting)
    m = tiny_model(15)
    x = _input(m, 16)
    attacks.fgsm(m, x, 0, 0.1)
    assert len(calls) == 1
    calls.clear()
    attacks.pgd(m, x, 0, AttackConfig(0.1, steps=7))
    assert len(calls) == 7


@pytest.mark.slow
def test_pgd_loss_dominates_fgsm_on_desk_batch(desk_model, desk_split):
    _, test = desk_split
    idx = Rng(3).permutation(len(test))[:64]
    eps = 0.1
    wins = 0
    for i in idx:
        x, y = test.normalized()[i], int(test.labels[i])
        f = attacks.fgsm(desk_model, x, y, eps)
        p = attacks.pgd(desk_model, x, y, AttackConfig(eps, seed=int(i)))
        wins += p.loss_after >= f.loss_after
    assert wins >= 0.9 * len(idx)
