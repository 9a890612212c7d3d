"""Multi-agent posterior-sampling reinforcement learning for dyadic adherence interventions."""

__version__ = "0.1.0"
