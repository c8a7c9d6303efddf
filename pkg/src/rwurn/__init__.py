"""Random-walk Pólya urns, branching random walks on recursive trees, and
exact moment oracles for checking them by Monte Carlo."""

__version__ = "0.1.0"
