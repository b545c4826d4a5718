"""motifsieve: find and exactly count vertex-colored subtrees in colored graphs.

Queries are compiled to arithmetic circuits and answered either by a
randomized multilinear-detection sieve over GF(2^64) or by an exact
inclusion-exclusion count over the integers.
"""

__version__ = "0.1.0"
