import numpy as np
import pytest

from revmatch.signals import default_stft_config


@pytest.fixture(scope="session")
def cfg():
    return default_stft_config()


def pad_to_common_frames(a, b):
    """Zero-pad two (F, T) grids to a common frame count."""
    f_bins = a.shape[0]
    t = max(a.shape[1], b.shape[1])
    pa = np.zeros((f_bins, t), dtype=complex)
    pa[:, :a.shape[1]] = a
    pb = np.zeros((f_bins, t), dtype=complex)
    pb[:, :b.shape[1]] = b
    return pa, pb


def rel_frame_error(a, b):
    """Relative Frobenius error between frame grids, padded to match."""
    pa, pb = pad_to_common_frames(a, b)
    return np.linalg.norm(pa - pb) / np.linalg.norm(pb)
