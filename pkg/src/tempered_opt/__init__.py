"""Tempered-likelihood optimization: pseudo-likelihood MCMC, genetic search and their hybrids,
with navigation, tic-tac-toe, blackjack and classification testbeds."""

__version__ = "0.1.0"
