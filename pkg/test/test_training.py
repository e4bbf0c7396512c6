import json
import os
import numpy as np
import pandas as pd
import pytest
from ice_gan.load_data import generate_toy_corpus
from ice_gan.loso import loso_folds
from ice_gan.metrics import evaluate_loso
from ice_gan.training import (LOSS_COLUMNS, Trainer, checkpoint_name,
                              loso_trainer_factory)

GENERATOR = {"channel_plan": [2, 2, 2, 2, 2, 2], "z_dim": 4}
DISCRIMINATOR = {"patch_widths": [2, 2, 2, 2],
                 "num_primary_types": 2,
                 "d_prim": 4,
                 "d_adv": 4,
                 "d_exp": 4,
                 "recon_hidden": [4, 4],
                 "head_width": 4,
                 "size_match_d_exp": 4}


def make_trainer(epochs=2, loss_weights=None, **training):
    kwargs = {"epochs": epochs, "batch_size": 4, "use_neighbors": False,
              "perceptual_widths": [2, 2, 2, 2], "checkpoint_every": 1,
              "debug_level": -1}
    kwargs.update(training)
    return Trainer(generator_kwargs=GENERATOR,
                   discriminator_kwargs=DISCRIMINATOR,
                   loss_weights=loss_weights, training_kwargs=kwargs)


def small_corpus():
    return generate_toy_corpus(n_subjects=3, samples_per_subject=3)


def parameters(trainer):
    return {f"{name}/{path}": tensor.data.copy()
            for name, registry in [("g", trainer.generator.registry),
                                   ("d", trainer.discriminator.registry)]
            for path, tensor in registry}


def test_zero_epochs_keeps_initial_weights(tmp_path):
    trainer = make_trainer(epochs=0)
    before = parameters(trainer)
    trainer.fit(small_corpus(), str(tmp_path))
    after = parameters(trainer)
    assert all(np.array_equal(before[k], after[k]) for k in before)
    assert os.path.exists(os.path.join(tmp_path, checkpoint_name(0)))
    assert os.path.exists(os.path.join(tmp_path, "final.iceg"))
    assert trainer.history == []


def test_zero_weights_leave_parameters_unchanged():
    """With every task weight at 0 the objectives have zero gradients."""
    weights = {"lambda_adv": 0.0, "lambda_mes": 0.0, "lambda_mer": 0.0}
    trainer = make_trainer(epochs=1, loss_weights=weights)
    before = parameters(trainer)
    trainer.fit(small_corpus())
    after = parameters(trainer)
    for key in before:
        np.testing.assert_array_equal(before[key], after[key])
    assert len(trainer.history) == 3


def test_training_updates_and_logs(tmp_path):
    corpus = small_corpus()
    trainer = make_trainer(epochs=2)
    before = parameters(trainer)
    trainer.fit(corpus, str(tmp_path))
    after = parameters(trainer)
    assert any(not np.array_equal(before[k], after[k]) for k in before)
    for epoch in range(3):
        assert os.path.exists(os.path.join(tmp_path, checkpoint_name(epoch)))
    frame = pd.read_csv(os.path.join(tmp_path, "losses.csv"))
    assert list(frame.columns) == LOSS_COLUMNS
    assert len(frame) == 6
    assert list(frame["epoch"].unique()) == [1, 2]
    assert np.all(np.isfinite(frame[["d_adv", "g_adv", "l_pixel"]].values))
    # cosine schedule: the second epoch runs at a lower rate
    assert frame["lr"].iloc[0] > frame["lr"].iloc[-1]
    with open(os.path.join(tmp_path, "diagnostics.json")) as f:
        diagnostics = json.load(f)
    assert set(diagnostics["collapse_l1"]) == {"0", "1", "2"}
    assert -1.0 <= diagnostics["embedding_similarity"] <= 1.0
    # toy samples carry the class patch of their subject
    assert set(diagnostics["patch_iou"]) == {"0", "1", "2"}
    assert all(0.0 <= iou <= 1.0 for iou in diagnostics["patch_iou"].values())
    assert trainer.predict(corpus).shape == (9,)
    report = trainer.evaluate(corpus)
    assert report.num_samples == 9


def test_each_step_updates_only_its_network(monkeypatch):
    """The D step leaves G bit-identical and the G step leaves D."""
    trainer = make_trainer(epochs=1)
    adam = trainer._adam
    updates = []

    def recording_adam(registry, lr):
        before = parameters(trainer)
        adam(registry, lr)
        updates.append((registry, before, parameters(trainer)))

    monkeypatch.setattr(trainer, "_adam", recording_adam)
    trainer.train_step(small_corpus()[:4], 1e-3, rng=0)
    assert [u[0] for u in updates] == [trainer.discriminator.registry,
                                       trainer.generator.registry]
    for (_, before, after), stepped in zip(updates, ["d/", "g/"]):
        frozen = [k for k in before if not k.startswith(stepped)]
        moved = [k for k in before if k.startswith(stepped)
                 and not np.array_equal(before[k], after[k])]
        assert frozen and moved
        for key in frozen:
            np.testing.assert_array_equal(before[key], after[key])


def test_training_is_deterministic():
    corpus = small_corpus()
    a = make_trainer(epochs=1).fit(corpus)
    b = make_trainer(epochs=1).fit(corpus)
    pa, pb = parameters(a), parameters(b)
    for key in pa:
        np.testing.assert_array_equal(pa[key], pb[key])
    assert a.history == b.history


def test_resume_replays_remaining_epochs(tmp_path):
    corpus = small_corpus()
    full = make_trainer(epochs=2).fit(corpus, str(tmp_path))
    resumed = make_trainer(epochs=2)
    resumed.load(os.path.join(tmp_path, checkpoint_name(1)),
                 os.path.join(tmp_path, "losses.csv"))
    assert resumed.epoch == 1
    assert len(resumed.history) == 3
    resumed.fit(corpus)
    pf, pr = parameters(full), parameters(resumed)
    for key in pf:
        np.testing.assert_allclose(pr[key], pf[key], rtol=1e-12, atol=1e-14)
    assert len(resumed.history) == 6


def test_neighbor_frames_enlarge_the_pool():
    corpus = small_corpus()
    assert len(make_trainer(use_neighbors=True).training_pool(corpus)) == 45
    assert len(make_trainer().training_pool(corpus)) == 9


def test_invalid_training_kwargs():
    with pytest.raises(ValueError):
        make_trainer(pixel_target="neighbor")
    with pytest.raises(ValueError):
        make_trainer(batch_size=0)
    with pytest.raises(ValueError):
        make_trainer(epochs=-1)
    with pytest.raises(ValueError):
        make_trainer(learning_rate=0.1)
    with pytest.raises(ValueError):
        make_trainer(loss_weights={"lambda_gan": 1.0})
    with pytest.raises(ValueError):
        make_trainer().fit([])
    with pytest.raises(ValueError):
        Trainer(generator_kwargs=dict(GENERATOR, image_size=256),
                discriminator_kwargs=DISCRIMINATOR)


def test_loso_with_trainer_factory(tmp_path):
    corpus = small_corpus()
    factory = loso_trainer_factory(
        {"generator_kwargs": GENERATOR,
         "discriminator_kwargs": DISCRIMINATOR,
         "training_kwargs": {"epochs": 0, "perceptual_widths": [2, 2, 2, 2],
                             "debug_level": -1}},
        run_root=str(tmp_path))
    report = evaluate_loso(factory, loso_folds(corpus), corpus)
    assert report.fold_count == 3
    assert report.num_samples == 9
    assert report.complete
    assert os.path.isdir(os.path.join(tmp_path, "fold_toy_s00"))
