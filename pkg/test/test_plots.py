import os
import numpy as np
import pandas as pd
import pytest
from ice_gan.load_data import generate_toy_corpus
from ice_gan.metrics import norm2_diff
from ice_gan.plots import (plot_class_triplet, plot_difference_map,
                           plot_loss_curves)
from ice_gan.training import LOSS_COLUMNS


def test_loss_curves(tmp_path):
    rows = [[epoch, step] + [0.5 + 0.1 * step] * 7 + [1e-3]
            for epoch in [1, 2] for step in range(3)]
    frame = pd.DataFrame(rows, columns=LOSS_COLUMNS)
    fname = os.path.join(tmp_path, "losses.pdf")
    plot_loss_curves(frame, fname, use_fancy_settings=False)
    assert os.path.exists(fname)


def test_class_triplet(tmp_path):
    onset = np.zeros((1, 16, 16))
    fname = os.path.join(tmp_path, "triplet.pdf")
    plot_class_triplet(onset, np.zeros((3, 1, 16, 16)), fname)
    assert os.path.exists(fname)
    with pytest.raises(ValueError):
        plot_class_triplet(onset, np.zeros((2, 1, 16, 16)))


def test_difference_map(tmp_path):
    """The toy patch is drawn over the map of a toy apex frame."""
    sample = generate_toy_corpus(n_subjects=3, samples_per_subject=3)[0]
    diff_map = norm2_diff(sample.apex, sample.onset)
    fname = os.path.join(tmp_path, "diff.pdf")
    plot_difference_map(diff_map, sample.patch_mask, fname)
    assert os.path.exists(fname)
    empty = norm2_diff(sample.onset, sample.onset)
    plot_difference_map(empty, fname=os.path.join(tmp_path, "empty.pdf"))
