"""Leave-one-subject-out splits."""
from dataclasses import dataclass
from .load_data import DATASETS


@dataclass(frozen=True)
class LosoSplit:
    """One LOSO fold.

    held_out: subject key ("dataset:subject") of the test subject.
    train_subjects: subject keys used for training.
    mode: "CDE" (all datasets pooled) or "SDE" (a single dataset).
    dataset: the dataset of an SDE fold, None for CDE.
    """
    held_out: str
    train_subjects: tuple
    mode: str = "CDE"
    dataset: str = None

    def train_samples(self, corpus):
        train = set(self.train_subjects)
        return [s for s in corpus if s.subject_key in train]

    def test_samples(self, corpus):
        return [s for s in corpus if s.subject_key == self.held_out]


def get_available_loso_modes():
    return ["CDE", "SDE"]


def loso_folds(corpus, mode="CDE", dataset=None):
    """One fold per subject, ordered by subject key.

    parameters:
    -----------
    corpus: list of Sample
    mode: str
        "CDE" pools all datasets; "SDE" keeps only `dataset`.
    dataset: str
        Dataset of an SDE evaluation. Required for SDE.

    returns:
    --------
    List of LosoSplit.
    """
    if mode not in get_available_loso_modes():
        raise ValueError(f"Unknown LOSO mode {mode!r}. Must be one of "
                         f"{get_available_loso_modes()}")
    if mode == "SDE":
        if dataset not in DATASETS:
            raise ValueError(f"SDE needs a dataset among {DATASETS}, got "
                             f"{dataset!r}")
        corpus = [s for s in corpus if s.dataset_id == dataset]
    else:
        dataset = None
    subjects = sorted({s.subject_key for s in corpus})
    if len(subjects) < 2:
        raise ValueError(f"LOSO needs at least 2 subjects, got "
                         f"{len(subjects)}")
    return [LosoSplit(held_out=subject,
                      train_subjects=tuple(s for s in subjects
                                           if s != subject),
                      mode=mode, dataset=dataset)
            for subject in subjects]
