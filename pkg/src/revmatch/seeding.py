"""Counter-based seed derivation.

Every random draw in the package derives from a global integer seed plus a
fixed stream id and counter path, so Monte-Carlo results are independent of
evaluation order and of how work is split across workers.
"""

import numpy as np

# stream ids; one per independent consumer of randomness
STREAM_LOSS_DRAWS = 0      # RIR draws inside a single loss evaluation
STREAM_SOLVER_ITERS = 1    # per-iteration resampling in the solver
STREAM_DRR_GRID = 2        # grid points of the blind DRR search
STREAM_CLI_TASKS = 3       # per-file tasks in CLI batch commands
STREAM_SYNTH = 4           # synthetic data generation


def as_path(seed):
    """Normalize a seed (int or tuple of ints) to a tuple path."""
    if isinstance(seed, tuple):
        return seed
    return (int(seed),)


def derive_rng(seed, *path):
    """Return a Generator for (seed, *path).

    ``seed`` may itself be a tuple path. The same (seed, path) always yields
    the same stream; distinct paths are statistically independent.
    """
    entropy = [int(p) & 0xFFFFFFFFFFFFFFFF for p in as_path(seed)]
    entropy.extend(int(p) & 0xFFFFFFFFFFFFFFFF for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy))
