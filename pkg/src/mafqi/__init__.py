"""Multi-agent fitted Q-iteration on cooperative Markov games, with
brute-force tabular oracles and statistical bound checkers."""

__version__ = "0.1.0"
