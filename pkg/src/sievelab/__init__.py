"""Bernoulli sieve, nonincreasing Markov chains and renewal shot noise.

Simulators, analytic centering/norming functions and goodness-of-fit
helpers for checking limit theorems on the number of empty boxes.
"""

__version__ = "0.1.0"
