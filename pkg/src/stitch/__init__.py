"""Positional text-to-image control toolkit.

Plans object layouts from a prompt, generates each object in its box under
region-binding attention constraints, cuts tight foreground masks from a
designated attention head mid-generation, stitches the pieces into one
composite latent, and finishes unconstrained.  Ships with a toy
flow-matching transformer, an adapter interface for real backbones, and a
six-task positional benchmark generator and evaluator.
"""

__version__ = "0.1.0"
