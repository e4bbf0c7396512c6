"""Useful functions for the project."""
import argparse
import warnings
import numpy as np


def check_kwargs_and_set_defaults(user_kwargs=None,
                                  default_kwargs=None,
                                  name="user given kwargs",
                                  location=None):
    """Sanity check user given dicionary of kwargs and set default values.

    Parameters
    ----------
    user_kwargs:
        Dictionary of kwargs by user.
    default_kwargs:
        Dictionary of default kwargs.
    name:
        string to represent the dictionary
    location:
        string pointing to where the defaults are defined

    Returns
    -------
    updated user_kwargs. The input dictionary is not modified; a new
    dictionary is returned.
    """
    # make user_kwargs iterable
    if user_kwargs is None:
        user_kwargs = {}
    user_kwargs = dict(user_kwargs)

    for kw in user_kwargs.keys():
        if kw not in default_kwargs:
            raise ValueError(f"Invalid key {kw} in {name}."
                             " Should be one of "
                             f"{list(default_kwargs.keys())}\n"
                             f"To add a new keyword, please modify {location}")

    for kw in default_kwargs.keys():
        if kw not in user_kwargs:
            user_kwargs[kw] = default_kwargs[kw]

    return user_kwargs


def raise_exception_if_none(kwargs, keys_to_check, name, location):
    """Raise exception if any key from `keys_to_check` has value None."""
    for kw in keys_to_check:
        if kwargs[kw] is None:
            raise ValueError(f"kw {kw} for {name} can not be None."
                             f" Check documentation of {location} for more"
                             " details.")


def check_choice(value, choices, name):
    """Raise ValueError if `value` is not one of `choices`."""
    if value not in choices:
        raise ValueError(f"Invalid {name} {value!r}. Must be one of "
                         f"{list(choices)}")
    return value


class SmartFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Smart Formatter for argparse helper strings.

    Stolen from https://stackoverflow.com/questions/3853722/how-to-insert-newlines-on-argparse-help-text.
    """

    def _split_lines(self, text, width):
        if text.startswith('R|'):
            return text[2:].splitlines()
        # this is the RawTextHelpFormatter._split_lines
        return argparse.HelpFormatter._split_lines(self, text, width)


def get_rng(seed_or_rng=None):
    """Get a numpy Generator from a seed, an existing Generator or None."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def one_hot(labels, num_classes):
    """One-hot encode integer class labels.

    Parameters
    ----------
    labels:
        Integer label or 1d array of integer labels in [0, num_classes).
    num_classes:
        Number of classes.

    Returns
    -------
    2d float64 array of shape (len(labels), num_classes).
    """
    labels = np.atleast_1d(np.asarray(labels))
    if labels.dtype.kind not in "iu":
        raise ValueError(f"Class labels must be integers, got {labels}.")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError(f"Invalid class index in {labels.tolist()}. "
                         f"Must be in [0, {num_classes}).")
    encoded = np.zeros((len(labels), num_classes))
    encoded[np.arange(len(labels)), labels] = 1.0
    return encoded


def check_one_hot(c):
    """Raise ValueError unless every row of `c` is a one-hot vector."""
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    is_binary = np.all((c == 0.0) | (c == 1.0))
    if not is_binary or not np.all(c.sum(axis=1) == 1.0):
        raise ValueError("Class condition must be one-hot in every row, got "
                         f"{c.tolist()}")
    return c


def debug_message(message, debug_level, important=True):
    """Show message based on debug_level.

    parameters
    ----------
    message: str
        Message to display.

    debug_level: int
        Indicator for level of debug message. Based on it, one of the
        following actions if performed:
        -1: No action is performed and hence no message is displayed.
        0: Warning is issued with the input message only if important=True
        1: Warning is issued with the input message.
        2: Exception is raised with the input message.

    important: bool
        Only if True, the message gets printed when debug_level=0. For
        other debug_levels, this does nothing.
        Default is True.
    """
    debug_levels = [-1, 0, 1, 2]
    if debug_level not in debug_levels:
        raise ValueError(
            f"Unknown debug_level {debug_level}. Should one "
            f"of {debug_levels}. See "
            "`ice_gan.utils.debug_message` for action "
            "performed with each debug level.")
    if debug_level == -1:
        # Do nothing
        return
    if (debug_level == 0 and important) or debug_level == 1:
        # Issue warning. Use stacklevel=2 to point to actual line number
        # causing this warning instead of pointing to here.
        warnings.warn(message, stacklevel=2)
    if debug_level == 2:
        # raise Exception
        raise Exception(message)


def progress_message(message, verbose):
    """Print a progress message when verbose is True."""
    if verbose:
        print(message, flush=True)
