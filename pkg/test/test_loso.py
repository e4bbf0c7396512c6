import numpy as np
import pytest
from ice_gan.load_data import CLASS_NAMES, Sample
from ice_gan.loso import get_available_loso_modes, loso_folds


def make_corpus(subjects_per_dataset, per_subject=3):
    """Small samples spread over datasets, classes cycling per subject."""
    image = np.zeros((1, 4, 4))
    corpus = []
    for dataset, n_subjects in subjects_per_dataset.items():
        for i in range(n_subjects):
            for j in range(per_subject):
                corpus.append(Sample(f"{dataset}_s{i:02d}_{j:02d}",
                                     f"s{i:02d}", dataset,
                                     CLASS_NAMES[j % len(CLASS_NAMES)],
                                     image, image))
    return corpus


def test_one_fold_per_subject():
    """Each subject is held out exactly once and never trained on."""
    corpus = make_corpus({"toy": 20})
    folds = loso_folds(corpus)
    assert len(folds) == 20
    assert sorted(f.held_out for f in folds) == sorted(
        {s.subject_key for s in corpus})
    for fold in folds:
        train = fold.train_samples(corpus)
        test = fold.test_samples(corpus)
        assert len(test) == 3
        assert len(train) + len(test) == len(corpus)
        assert fold.held_out not in fold.train_subjects
        assert not {s.sample_id for s in train} & {s.sample_id for s in test}


def test_same_subject_name_in_two_datasets():
    """Subject ids are scoped by dataset."""
    corpus = make_corpus({"smic": 2, "casme2": 3})
    folds = loso_folds(corpus, mode="CDE")
    assert len(folds) == 5
    assert all(f.dataset is None for f in folds)
    assert "smic:s00" in folds[0].train_subjects + (folds[0].held_out,)


def test_single_dataset_folds():
    corpus = make_corpus({"smic": 2, "casme2": 3})
    folds = loso_folds(corpus, mode="SDE", dataset="casme2")
    assert len(folds) == 3
    for fold in folds:
        assert fold.mode == "SDE"
        assert fold.dataset == "casme2"
        assert all(s.dataset_id == "casme2"
                   for s in fold.train_samples(corpus))


def test_loso_errors():
    corpus = make_corpus({"toy": 3})
    for mode in get_available_loso_modes():
        assert loso_folds(corpus, mode=mode, dataset="toy")
    with pytest.raises(ValueError):
        loso_folds(corpus, mode="LOVO")
    with pytest.raises(ValueError):
        loso_folds(corpus, mode="SDE")
    with pytest.raises(ValueError):
        loso_folds(corpus, mode="SDE", dataset="samm")
    with pytest.raises(ValueError):
        loso_folds(make_corpus({"toy": 1}))
