"""Trajectory-divergence engine for ranking source-domain blends.

The package scores how well a blend of source domains is expected to
transfer to a target domain by comparing the distribution of layer-to-layer
geometric trajectory descriptors of within-domain sample pairs against
cross-domain pairs, all on frozen features.
"""

__version__ = "0.1.0"
