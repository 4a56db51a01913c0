"""Two-time Bohmian trajectories, equilibrium checks, and the multitime measurement formalism."""

__version__ = "0.1.0"
