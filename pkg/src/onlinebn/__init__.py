"""Online learning of Bayesian networks over tree and chordal-skeleton structure families."""

__version__ = "0.1.0"
