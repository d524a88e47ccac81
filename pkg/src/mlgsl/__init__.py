"""Maximum-likelihood grasp sampling loss for dense planar grasp networks."""

__version__ = "0.1.0"
