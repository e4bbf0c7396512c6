"""Fancy settings for plots."""
from matplotlib import rc
from cycler import cycler
from packaging import version

# Getting colormaps in matplotlib has changed from v3.5.0
import matplotlib
if version.parse(matplotlib.__version__) < version.parse("3.5.0"):
    from matplotlib import cm
    dark2 = cm.get_cmap("Dark2").colors
else:
    from matplotlib import colormaps
    dark2 = colormaps["Dark2"].colors

colorsDict = {
    "default": dark2[1],  # brown
    "d_adv": dark2[3],  # pink
    "g_adv": "tab:blue",
    "l_pixel": dark2[0],  # turquoise
    "l_per": dark2[2],  # purple
    "l_margin": dark2[5],  # orange
    "l_rec": dark2[4],  # olive
    "l_cls": dark2[7],  # gray
    "region": dark2[3],
    "patch": dark2[0],
    "positive": dark2[0],
    "negative": dark2[2],
    "surprise": dark2[5],
}

lstyles = {"d_adv": "solid",
           "g_adv": "dashed",
           "l_pixel": "solid",
           "l_per": "dashdot",
           "l_margin": "solid",
           "l_rec": "dotted",
           "l_cls": "dashed"}

figWidthsOneColDict = {
    "APS": 3.4,
    "IEEE": 3.5,
    "Presentation": 3,
    "Notebook": 6
}

figWidthsTwoColDict = {
    "APS": 7.0,
    "IEEE": 7.16,
    "Presentation": 4.5,
    "Notebook": 12
}

figHeightsDict = {
    "APS": 2,
    "IEEE": 2,
    "Presentation": 3.0,
    "Notebook": 4.0
}

ticklabelSizeDict = {"APS": 9.0,
                     "IEEE": 8.0,
                     "Presentation": 8.0,
                     "Notebook": 14.0}
labelSizeDict = {"APS": 9.0,
                 "IEEE": 8.0,
                 "Presentation": 8.0,
                 "Notebook": 18.0}
fontSizeDict = {"APS": 9.0,
                "IEEE": 8.0,
                "Presentation": 8.0,
                "Notebook": 14.0}


def use_fancy_plotsettings(usetex=False, style="Notebook"):
    """Use fancy plot settings."""
    if style not in fontSizeDict:
        raise ValueError(f"Unknown plot style {style}. Must be one of "
                         f"{list(fontSizeDict.keys())}")
    # Text
    if usetex:
        rc("text", usetex=usetex)
        rc("text.latex", preamble=r"\usepackage{amsmath}")
    # Axes
    rc("axes", prop_cycle=cycler(color=dark2))  # color cycler
    rc("axes", linewidth=0.6)
    rc("axes", labelsize=labelSizeDict[style])
    rc("axes", titlesize=fontSizeDict[style])
    # Ticks
    rc("xtick", labelsize=ticklabelSizeDict[style])
    rc("ytick", labelsize=ticklabelSizeDict[style])
    rc("xtick", direction="in")
    rc("ytick", direction="in")
    # Legend
    rc("legend", frameon=False)
    rc("legend", fontsize=fontSizeDict[style])
    # Fonts
    if usetex:
        rc("font", family="serif")
        rc("font", serif="times")
    rc("font", size=fontSizeDict[style])
    # Lines
    rc("lines", linewidth=1.0)


# Dictionary of labels to use in plots.
labelsDict = {
    "epoch": "Epoch",
    "step": "Step",
    "d_adv": r"$\mathcal{L}^{D}_{\mathrm{adv}}$",
    "g_adv": r"$\mathcal{L}^{G}_{\mathrm{adv}}$",
    "l_pixel": r"$\mathcal{L}_{\mathrm{pixel}}$",
    "l_per": r"$\mathcal{L}_{\mathrm{per}}$",
    "l_margin": r"$\mathcal{L}_{\mathrm{margin}}$",
    "l_rec": r"$\mathcal{L}_{\mathrm{rec}}$",
    "l_cls": r"$\mathcal{L}_{\mathrm{cls}}$",
    "lr": "Learning rate",
    "onset": r"$X_{\mathrm{on}}$",
    "diff": r"$\|X_{\mathrm{syn}} - X_{\mathrm{on}}\|^2$",
    "positive": "Positive",
    "negative": "Negative",
    "surprise": "Surprise",
}
