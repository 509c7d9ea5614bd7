"""rlal: a desk-scale lab for adversarial attacks on small pixel RL agents."""

__version__ = "0.1.0"
