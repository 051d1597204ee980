"""Feature extraction and probe-based ground-truth gains.

Writes layer-wise feature packs in the engine's on-disk directory format and
trains the two-layer MLP probe that turns packs into transfer-gain tables.
Talks to the scoring engine only through its external contracts: the pack
directory layout and the gains CSV schema.
"""

__version__ = "0.1.0"
