"""Truncated Fock-space toolkit for the beam-splitter channel with a classical jammer."""

__version__ = "0.1.0"

from .beamsplitter import ChannelConfig, apply_bs, apply_bs_semiclassical, build_block_unitary
from .capacity import closed_form_capacity, inner_min_jammer, outer_max_input
from .entropy import entropy_bits, gordon_g, gordon_g_inv, holevo_chi
from .fock import Constellation, DensityMatrix, JammerSpec

__all__ = [
    "ChannelConfig",
    "Constellation",
    "DensityMatrix",
    "JammerSpec",
    "apply_bs",
    "apply_bs_semiclassical",
    "build_block_unitary",
    "closed_form_capacity",
    "entropy_bits",
    "gordon_g",
    "gordon_g_inv",
    "holevo_chi",
    "inner_min_jammer",
    "outer_max_input",
]
