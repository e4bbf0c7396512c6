import os
import numpy as np
import pytest
from ice_gan.load_data import (CLASS_NAMES, Sample, augment_corpus,
                               augment_neighbors, corpus_hash,
                               generate_toy_corpus, get_load_corpus_defaults,
                               ingest_real, load_corpus, load_corpus_h5,
                               read_pgm, save_corpus_h5,
                               separability_accuracy, to_disk, to_memory,
                               write_pgm)

SMALL = {"n_subjects": 4, "samples_per_subject": 4}


def test_toy_corpus_is_deterministic():
    a = generate_toy_corpus(seed=3, **SMALL)
    b = generate_toy_corpus(seed=3, **SMALL)
    c = generate_toy_corpus(seed=4, **SMALL)
    assert corpus_hash(a) == corpus_hash(b)
    assert corpus_hash(a) != corpus_hash(c)


def test_toy_corpus_layout():
    """Balanced classes per subject, shared onsets and bounded images."""
    corpus = generate_toy_corpus(**SMALL)
    assert len(corpus) == 16
    assert len({s.sample_id for s in corpus}) == 16
    for subject in {s.subject_id for s in corpus}:
        samples = [s for s in corpus if s.subject_id == subject]
        counts = [sum(s.label == name for s in samples)
                  for name in CLASS_NAMES]
        assert max(counts) - min(counts) <= 1
        for s in samples:
            np.testing.assert_array_equal(s.onset, samples[0].onset)
    for s in corpus:
        assert s.onset.shape == (1, 128, 128)
        assert s.dataset_id == "toy"
        assert np.all(np.abs(s.apex) <= 1.0)
        diff = np.abs(s.apex - s.onset)[0]
        assert diff[s.patch_mask].max() > diff[~s.patch_mask].max()


def test_toy_corpus_is_separable():
    corpus = generate_toy_corpus(n_subjects=6, samples_per_subject=6)
    assert separability_accuracy(corpus) >= 0.9


def test_augment_neighbors():
    sample = generate_toy_corpus(**SMALL)[0]
    group = augment_neighbors(sample)
    assert [s.apex_neighbor_index for s in group] == [0, -2, -1, 1, 2]
    assert len({s.sample_id for s in group}) == 5
    for s in group:
        assert s.label == sample.label
        assert s.subject_key == sample.subject_key
    # neighbors scale the apex-onset difference by up to 10%
    delta = np.abs(sample.apex - sample.onset).max()
    for s in group[1:]:
        assert np.abs(s.apex - sample.apex).max() <= 0.1 * delta + 1e-12
    with pytest.raises(ValueError):
        augment_neighbors(group[1])
    assert len(augment_corpus(generate_toy_corpus(**SMALL))) == 80


def test_pgm_files(tmp_path):
    image = np.linspace(0, 1, 12).reshape(3, 4)
    fname = write_pgm(os.path.join(tmp_path, "x.pgm"), image)
    restored = read_pgm(fname)
    assert restored.shape == (3, 4)
    np.testing.assert_allclose(restored, image, atol=1 / 255)
    np.testing.assert_allclose(to_disk(to_memory(image)), image)


def _write_pair(directory, name, size=128, value=0.5):
    onset = write_pgm(os.path.join(directory, f"{name}_on.pgm"),
                      np.full((size, size), value))
    apex = write_pgm(os.path.join(directory, f"{name}_ap.pgm"),
                     np.full((size, size), value + 0.2))
    return os.path.basename(onset), os.path.basename(apex)


def test_ingest_manifest(tmp_path):
    on, ap = _write_pair(tmp_path, "a")
    neighbors = ";".join([ap] * 4)
    manifest = os.path.join(tmp_path, "manifest.csv")
    with open(manifest, "w") as f:
        f.write("subject,dataset,class,onset_path,apex_path,neighbor_paths\n")
        f.write(f"sub01,CASME2,happiness,{on},{ap},{neighbors}\n")
        f.write(f"sub01,casme2,Disgust,{on},{ap},\n")
    samples = ingest_real(manifest)
    assert [s.label for s in samples] == ["positive", "negative"]
    assert samples[0].dataset_id == "casme2"
    assert len(samples[0].neighbor_frames) == 4
    assert samples[1].neighbor_frames == ()
    assert [s.sample_id for s in samples] == ["casme2_sub01_00",
                                              "casme2_sub01_01"]


def test_ingest_reports_every_problem(tmp_path):
    on, ap = _write_pair(tmp_path, "small", size=64)
    manifest = os.path.join(tmp_path, "manifest.csv")
    with open(manifest, "w") as f:
        f.write("subject,dataset,class,onset_path,apex_path\n")
        f.write(f"s1,smic,boredom,{on},{ap}\n")
        f.write("s2,smic,positive,missing.pgm,missing.pgm\n")
    with pytest.raises(ValueError) as err:
        ingest_real(manifest)
    message = str(err.value)
    assert "unknown class label" in message
    assert "geometry 64x64" in message
    assert "missing file" in message


def test_empty_manifest_warns(tmp_path):
    manifest = os.path.join(tmp_path, "empty.csv")
    with open(manifest, "w") as f:
        f.write("subject,dataset,class,onset_path,apex_path\n")
    with pytest.warns(UserWarning):
        assert ingest_real(manifest) == []
    with pytest.raises(FileNotFoundError):
        ingest_real(os.path.join(tmp_path, "nope.csv"))


def test_h5_cache(tmp_path):
    corpus = augment_corpus(generate_toy_corpus(**SMALL)[:2])
    fname = save_corpus_h5(corpus, os.path.join(tmp_path, "corpus.h5"))
    restored = load_corpus(origin="h5", fname=fname)
    assert corpus_hash(restored) == corpus_hash(corpus)
    np.testing.assert_array_equal(restored[0].patch_mask,
                                  corpus[0].patch_mask)
    with pytest.raises(FileNotFoundError):
        load_corpus_h5(os.path.join(tmp_path, "nope.h5"))


def test_load_corpus_checks():
    assert "image_size" in get_load_corpus_defaults("toy")
    corpus = load_corpus("toy", n_subjects=3, samples_per_subject=3)
    assert len(corpus) == 9
    with pytest.raises(ValueError):
        load_corpus("webcam")
    with pytest.raises(ValueError):
        load_corpus("toy", subjects=3)
    with pytest.raises(ValueError):
        load_corpus("manifest")
    with pytest.raises(ValueError):
        generate_toy_corpus(n_subjects=2)


def test_invalid_sample():
    image = np.zeros((1, 4, 4))
    with pytest.raises(ValueError, match="unknown class"):
        Sample("x", "s", "toy", "joy", image, image)
    with pytest.raises(ValueError, match="apex_neighbor_index"):
        Sample("x", "s", "toy", "positive", image, image,
               apex_neighbor_index=3)
