import json
import os
import numpy as np
import pytest
import ice_gan
from ice_gan.discriminator import write_evaluation_dump
from ice_gan.gradcheck import gradcheck
from ice_gan.load_data import to_memory, toy_face_specs
from ice_gan.losses import LossWeights, l_rec

THIN = {"patch_widths": [2, 2, 2, 2],
        "num_primary_types": 2,
        "d_prim": 4,
        "d_adv": 4,
        "d_exp": 4,
        "recon_hidden": [4, 4],
        "head_width": 4,
        "size_match_d_exp": 4}


def _images(n, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, (n, 1, 128, 128))


def test_every_discriminator_kind():
    """All kinds give probabilities of the right shapes."""
    x = _images(2)
    for kind in ice_gan.get_available_discriminators():
        d = ice_gan.build_discriminator(kind, THIN, seed=0)
        assert d.kind == kind
        out = d.discriminate(x)
        assert out.adv.shape == (2,), kind
        assert out.exp_scores.shape == (2, 3), kind
        assert np.all((out.adv.data > 0) & (out.adv.data < 1)), kind
        assert np.all((out.exp_scores.data >= 0)
                      & (out.exp_scores.data < 1)), kind
        assert d.predict(x).shape == (2,)
        assert d.receptive_field() == 70
        assert d.count_parameters() == type(d).planned_parameter_count(THIN)
    with pytest.raises(ValueError):
        ice_gan.build_discriminator("transformer", THIN)


def test_discriminate_is_deterministic():
    d = ice_gan.build_discriminator("capsule", THIN, seed=1)
    x = _images(1, seed=3)
    a, b = d.discriminate(x), d.discriminate(x)
    np.testing.assert_array_equal(a.adv.data, b.adv.data)
    np.testing.assert_array_equal(a.exp_poses.data, b.exp_poses.data)


def test_couplings_belong_to_their_pass():
    d = ice_gan.build_discriminator("capsule", THIN, seed=1)
    first = d.discriminate(_images(1, seed=3))
    kept = [c.copy() for c in first.couplings["exp"]]
    second = d.discriminate(_images(2, seed=4))
    assert set(first.couplings) == {"adv", "exp"}
    assert len(first.couplings["exp"]) == 3
    for before, after in zip(kept, first.couplings["exp"]):
        np.testing.assert_array_equal(before, after)
    for c in second.couplings["exp"]:
        assert c.shape[:1] == (2,) and c.shape[-1] == 3
        np.testing.assert_allclose(c.sum(axis=-1), 1.0, atol=1e-12)
    assert second.coupling_entropies().shape == (2,)
    cnn = ice_gan.build_discriminator("cnn", THIN).discriminate(_images(1))
    assert cnn.couplings is None and cnn.coupling_entropies() is None


def test_discriminate_is_translation_sensitive():
    """Moving the class patch by 8 pixels changes the class capsules."""
    spec = toy_face_specs(1)[0]
    base = spec.base_face()
    patch = spec.class_patch("positive", 0.5)
    faces = [np.clip(base + p, 0.0, 1.0)
             for p in [patch, np.roll(patch, 8, axis=1)]]
    d = ice_gan.build_discriminator("capsule", THIN, seed=0)
    lengths = [d.discriminate(to_memory(face)[None, None]).exp_scores.data
               for face in faces]
    assert np.max(np.abs(lengths[0] - lengths[1])) > 1e-6


def test_capsule_outputs():
    d = ice_gan.build_discriminator("capsule", dict(THIN, d_exp=6))
    out = d.discriminate(_images(3))
    assert out.exp_poses.shape == (3, 3, 6)
    recon = d.reconstruct(out.exp_poses, [0, 1, 2])
    assert recon.shape == (3, 1, 128, 128)
    assert np.all((recon.data > 0) & (recon.data < 1))
    with pytest.raises(ValueError):
        d.reconstruct(out.exp_poses, [0, 1])
    with pytest.raises(ValueError):
        d.discriminate(np.zeros((1, 1, 64, 64)))


def test_classification_losses():
    x = _images(2)
    labels = np.array([0, 2])
    for kind in ice_gan.get_available_discriminators():
        d = ice_gan.build_discriminator(kind, THIN)
        loss, parts = d.classification_loss(d.discriminate(x), labels, x,
                                            LossWeights())
        assert set(parts) == {"l_margin", "l_rec"}
        assert np.isfinite(loss.item()) and loss.item() >= 0.0


def test_reconstruction_loss_gradcheck():
    """L_rec through the class mask and the reconstruction head."""
    d = ice_gan.build_discriminator("capsule", THIN, seed=2)
    x = _images(2, seed=5)
    poses = d.discriminate(x).exp_poses.detach()
    labels = np.array([1, 0])
    report = gradcheck(lambda p: l_rec(d.reconstruct(p, labels), x),
                       [poses], max_checks=12)
    assert report.passed, report


def test_size_matched_head():
    """The large CNN head is at least as big as the capsule head."""
    capsule = ice_gan.build_discriminator("capsule", THIN)
    large = ice_gan.build_discriminator("cnn_large", THIN)
    small = ice_gan.build_discriminator("cnn", THIN)
    assert large.count_parameters() >= capsule.count_parameters()
    assert small.count_parameters() < large.count_parameters()


def test_evaluation_dump(tmp_path):
    d = ice_gan.build_discriminator("capsule", THIN)
    out = d.discriminate(_images(2))
    fname = write_evaluation_dump(os.path.join(tmp_path, "eval.jsonl"),
                                  ["a", "b"], out, [0, 1])
    with open(fname) as f:
        records = [json.loads(line) for line in f]
    assert [r["sample_id"] for r in records] == ["a", "b"]
    assert len(records[0]["exp_lengths"]) == 3
    assert records[1]["true_class"] == 1
    assert 0.0 <= records[0]["exp_coupling_entropy"] <= np.log(3) + 1e-12
