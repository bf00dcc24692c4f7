"""nlcert: certified lower bounds for transcendental and semialgebraic functions.

The package combines maxplus / minimax template approximations with the
Lasserre sums-of-squares hierarchy and branch-and-bound subdivision.
"""

__version__ = "0.1.0"
