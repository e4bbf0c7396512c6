"""Diagnostic plots of training runs and synthesized faces."""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from .load_data import CLASS_NAMES, to_disk
from .plot_settings import (colorsDict, figHeightsDict, figWidthsOneColDict,
                            figWidthsTwoColDict, labelsDict, lstyles,
                            use_fancy_plotsettings)


def save_debug_fig(fig, fname, fig_name=None, format="pdf"):
    """Save debug plots in fig using fname.

    parameters:
    -----------
    fig:
        fig object to use for saving the plots.
    fname:
        A path or file-like object, see `fname` in plt.savefig.
    fig_name:
        Name printed before saving. If None, fname is used, which then has
        to be a string.
    format:
        Format for saving the plot. Default is pdf.
    """
    if fig_name is None:
        if not isinstance(fname, str):
            raise Exception("fig_name cannot be None when fname is not a"
                            " string.")
        fig_name = fname
    print(f"Saving debug plot to {fig_name}")
    fig.savefig(fname, format=format)
    plt.close(fig)
    return fname


def plot_loss_curves(frame, fname=None, style="Notebook",
                     use_fancy_settings=True):
    """Epoch-averaged losses of a run.

    parameters:
    -----------
    frame: pandas.DataFrame
        Loss log with the columns of `training.LOSS_COLUMNS`.
    fname: str
        If given, the figure is saved there and closed.

    returns:
    --------
    fig, axes
    """
    if use_fancy_settings:
        use_fancy_plotsettings(style=style)
    per_epoch = frame.groupby("epoch").mean(numeric_only=True)
    fig, axes = plt.subplots(1, 2, figsize=(figWidthsTwoColDict[style],
                                            figHeightsDict[style]))
    for key in ["d_adv", "g_adv"]:
        axes[0].plot(per_epoch.index, per_epoch[key], c=colorsDict[key],
                     ls=lstyles[key], label=labelsDict[key])
    for key in ["l_pixel", "l_per", "l_cls"]:
        axes[1].plot(per_epoch.index, per_epoch[key], c=colorsDict[key],
                     ls=lstyles[key], label=labelsDict[key])
    for ax in axes:
        ax.set_xlabel(labelsDict["epoch"])
        ax.legend()
    axes[1].set_yscale("log")
    fig.tight_layout()
    if fname is not None:
        save_debug_fig(fig, fname)
    return fig, axes


def plot_class_triplet(onset, synthetic, fname=None, style="Notebook"):
    """Onset face next to one synthesized face per class.

    onset: (1, H, W) in [-1, 1]; synthetic: (3, 1, H, W) in [-1, 1].
    """
    synthetic = np.asarray(synthetic)
    if synthetic.shape[0] != len(CLASS_NAMES):
        raise ValueError(f"Expected {len(CLASS_NAMES)} synthetic faces, got "
                         f"{synthetic.shape[0]}")
    fig, axes = plt.subplots(1, 4, figsize=(figWidthsTwoColDict[style],
                                            figHeightsDict[style]))
    axes[0].imshow(np.squeeze(to_disk(onset)), cmap="gray", vmin=0, vmax=1)
    axes[0].set_title(labelsDict["onset"])
    for ax, name, image in zip(axes[1:], CLASS_NAMES, synthetic):
        ax.imshow(np.squeeze(to_disk(image)), cmap="gray", vmin=0, vmax=1)
        ax.set_title(labelsDict[name])
    for ax in axes:
        ax.set_axis_off()
    if fname is not None:
        save_debug_fig(fig, fname)
    return fig, axes


def plot_difference_map(diff_map, patch_mask=None, fname=None,
                        style="Notebook"):
    """Difference map with its top region and, optionally, the toy patch.

    diff_map: metrics.DifferenceMap
    patch_mask: boolean (H, W) or (1, H, W) ground-truth patch.
    """
    fig, ax = plt.subplots(figsize=(figWidthsOneColDict[style],
                                    figWidthsOneColDict[style]))
    ax.imshow(diff_map.values, cmap="magma", vmin=0, vmax=1)
    if not diff_map.empty:
        ax.contour(diff_map.region, levels=[0.5],
                   colors=[colorsDict["region"]])
        ax.plot(diff_map.centroid[1], diff_map.centroid[0], marker="+",
                c=colorsDict["region"])
    if patch_mask is not None:
        ax.contour(np.squeeze(patch_mask), levels=[0.5],
                   colors=[colorsDict["patch"]], linestyles="dashed")
    ax.set_title(labelsDict["diff"])
    ax.set_axis_off()
    if fname is not None:
        save_debug_fig(fig, fname)
    return fig, ax
