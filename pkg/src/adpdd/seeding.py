"""Labelled random substreams derived from one root seed."""

import zlib

import numpy as np


def substream(seed, label):
    """Independent generator for ``label`` under root ``seed``.

    The same ``(seed, label)`` always yields the same stream, and streams
    for different labels do not overlap.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))
