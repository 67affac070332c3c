"""Interactive music recommendation with Bayesian bandits.

The package models a listener's rating of a song as the product of a
content preference (linear in song features) and a novelty factor that
recovers with time since the song was last played.  Posterior inference
over that model (exact MCMC or a variational approximation) drives a
Bayes-UCB recommendation policy; baseline policies, a simulation
harness, and an HTTP rating service round out the toolkit.
"""

from __future__ import annotations

__version__ = "0.1.0"
