import numpy as np
import pytest
from ice_gan.losses import (LossWeights, PerceptualNet, l_cls,
                            l_cross_entropy, l_gan, l_ip, l_margin,
                            l_perceptual, l_pixel, l_rec, total_objective)
from ice_gan.tensor import Tensor


def test_l_pixel():
    x = np.full((2, 1, 4, 4), 0.25)
    assert l_pixel(x, x).item() == 0.0
    assert l_pixel(x, np.full_like(x, 0.75)).item() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        l_pixel(x, np.zeros((2, 1, 4, 3)))


def test_l_pixel_sample_weights():
    """Samples with weight 0 do not contribute."""
    x = np.zeros((2, 1, 2, 2))
    target = np.stack([np.full((1, 2, 2), 0.5), np.full((1, 2, 2), 9.0)])
    value = l_pixel(x, target, sample_weights=[1.0, 0.0]).item()
    assert value == pytest.approx(0.5)
    with pytest.raises(ValueError):
        l_pixel(x, target, sample_weights=[0.0, 0.0])


def test_l_perceptual():
    net = PerceptualNet(seed=3, widths=(2, 2, 2, 2))
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (1, 1, 16, 16))
    assert l_perceptual(x, x, net).item() == 0.0
    assert l_perceptual(x, -x, net).item() > 0.0
    assert net.registry.count_parameters() > 0
    assert not any(t.requires_grad for _, t in net.registry)


def test_l_ip_combines_terms():
    net = PerceptualNet(seed=3, widths=(2, 2, 2, 2))
    rng = np.random.default_rng(1)
    x_syn, apex, onset = (rng.uniform(-1, 1, (2, 1, 16, 16))
                          for _ in range(3))
    total, pixel, per = l_ip(x_syn, apex, onset, net, alpha=0.1)
    assert total.item() == pytest.approx(pixel.item() + 0.1 * per.item())


def test_l_margin():
    """Both hinges inactive, present hinge only, absent hinge only."""
    label = np.array([0])
    assert l_margin(Tensor([[0.9, 0.1, 0.1]]), label).item() == \
        pytest.approx(0.0)
    assert l_margin(Tensor([[0.0, 0.0, 0.0]]), label).item() == \
        pytest.approx(0.81)
    assert l_margin(Tensor([[0.9, 0.6, 0.1]]), label).item() == \
        pytest.approx(0.125)


def test_l_rec_and_l_cls():
    ones = np.ones((1, 1, 4, 4))
    assert l_rec(np.zeros_like(ones), ones).item() == pytest.approx(1.0)
    assert l_rec(ones, ones).item() == 0.0
    perfect = l_cls(Tensor(0.0), l_rec(ones, ones), 5e-4)
    assert perfect.item() == 0.0


def test_cross_entropy():
    probs = Tensor([[1.0, 0.0, 0.0], [0.5, 0.25, 0.25]])
    value = l_cross_entropy(probs, [0, 1]).item()
    assert value == pytest.approx(-0.5 * (np.log(1 - 1e-7) + np.log(0.25)))


def test_adversarial_terms():
    d_term, g_term = l_gan(Tensor([0.5, 0.5]), Tensor([0.5, 0.5]))
    assert d_term.item() == pytest.approx(2 * np.log(2))
    assert g_term.item() == pytest.approx(np.log(2))
    d_term, _ = l_gan(Tensor([1.0]), Tensor([0.0]))
    assert d_term.item() < 1e-6


def test_total_objective():
    weights = LossWeights(lambda_adv=0.0, lambda_mes=0.0, lambda_mer=0.0)
    assert total_objective(Tensor(3.0), Tensor(2.0), Tensor(1.0),
                           weights).item() == 0.0
    weights = LossWeights()
    value = total_objective(Tensor(1.0), None, Tensor(2.0), weights).item()
    assert value == pytest.approx(0.1 + 2.0)


def test_loss_weights_validation():
    assert LossWeights.from_dict(LossWeights().to_dict()) == LossWeights()
    with pytest.raises(ValueError):
        LossWeights(alpha=-1.0)
    with pytest.raises(ValueError):
        LossWeights(m_plus=0.1, m_minus=0.2)
    with pytest.raises(ValueError):
        LossWeights.from_dict({"gamma": 1.0})


def test_margin_loss_matches_naive_loops():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n, k = rng.integers(1, 5), 3
        lengths = rng.uniform(0.0, 1.0, (n, k))
        labels = rng.integers(0, k, n)
        expected = 0.0
        for i in range(n):
            for j in range(k):
                if j == labels[i]:
                    expected += max(0.0, 0.9 - lengths[i, j])**2
                else:
                    expected += 0.5 * max(0.0, lengths[i, j] - 0.1)**2
        expected /= n
        assert abs(l_margin(lengths, labels).item() - expected) < 1e-10


def test_adversarial_terms_match_naive_loops():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = rng.integers(1, 6)
        d_real = rng.uniform(0.01, 0.99, n)
        d_fake = rng.uniform(0.01, 0.99, n)
        real = sum(np.log(d) for d in d_real) / n
        fake = sum(np.log(1.0 - d) for d in d_fake) / n
        generator = -sum(np.log(d) for d in d_fake) / n
        d_term, g_term = l_gan(d_real, d_fake)
        assert abs(d_term.item() + real + fake) < 1e-10
        assert abs(g_term.item() - generator) < 1e-10
