"""Volumetric Compton-camera imaging from a moving detector.

Simulate list-mode events along a robot trajectory, fuse them into a
world-frame voxel grid with backprojection or list-mode MLEM, and score
the resulting peaks against ground-truth source positions.
"""

__version__ = "0.1.0"
