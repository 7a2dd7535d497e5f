"""goalforge: physics-filtered goal imagination for desk-scale goal-conditioned RL."""

__version__ = "0.1.0"
