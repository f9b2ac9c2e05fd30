"""Independent Q-learners playing the repeated Prisoner's Dilemma, with and
without the ability to choose their partners."""

__version__ = "0.1.0"
