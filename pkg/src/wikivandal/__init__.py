"""Streaming vandalism detection for Wikidata-style revision dumps.

Revisions are parsed from XML dumps, turned into page/user/comment tokens,
hashed into a fixed-size binary feature space and scored by L1-regularized
linear SVMs, either in batch or over a TCP socket.
"""

__version__ = "0.1.0"
