"""Socioeconomic stratification of consumption on a social network.

From interaction and card-transaction logs: equal-sum wealth classes, class
spending profiles, a degree-preserving null model for tie similarity,
merchant-category co-spending networks with Louvain communities, and
demographic feature clustering. A synthetic generator supplies populations
with known structure.
"""

__version__ = "0.1.0"
