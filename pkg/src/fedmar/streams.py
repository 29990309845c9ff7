"""Keyed random number streams.

Every random draw in the package flows from an explicit 64-bit master seed
plus an integer key path, so independent consumers (clients, rounds, attack
draws) get decorrelated streams and a rerun reproduces every draw bit-exactly.
"""

import numpy as np

# Key-path domains; keep values stable, they are part of the reproducibility
# contract of saved experiment outputs.
DOMAIN_PARAM_SAMPLE = 1
DOMAIN_INIT_MODEL = 2
DOMAIN_SELECTION = 3
DOMAIN_MALICIOUS = 4
DOMAIN_TRAIN = 5
DOMAIN_ATTACK = 6
DOMAIN_DATA = 7
DOMAIN_DNC = 8


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return a generator keyed by (master_seed, *path)."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), *map(int, path))))
