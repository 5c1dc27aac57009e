"""Deterministic seed derivation for experiment cells.

A single master seed is split into per-(stage, n, repetition) seeds by
hashing a textual tag.  The mixing function is fixed and recorded in the run
manifest so that any report row can be regenerated in isolation.
"""

import hashlib

SEED_MIXER_DOC = "blake2b-64(utf8('{master}:{stage}:{n}:{rep}'))"


def mix_seed(master: int, stage: str, n: int = 0, rep: int = 0) -> int:
    """Derive a 64-bit unsigned seed for one experiment cell.

    Parameters
    ----------
    master : int
        Master seed from the config / CLI.
    stage : str
        Stage tag, e.g. "cloud", "transport", "dictionary".
    n, rep : int
        Resolution and repetition index of the cell (0 when not applicable).
    """
    tag = f"{master}:{stage}:{n}:{rep}".encode()
    return int.from_bytes(hashlib.blake2b(tag, digest_size=8).digest(), "big")
