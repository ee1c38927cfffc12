"""Heralded dual-rail states stored in phase-locked optical memories.

Simulation of heralded generation, lossy/dephasing storage and timed release,
plus two-mode homodyne tomography and the estimators used to characterize
the released states.
"""

__version__ = "0.1.0"
