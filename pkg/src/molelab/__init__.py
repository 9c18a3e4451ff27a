"""molelab: a virtual laboratory for exploring stochastic geographic simulation models.

Two embedded models (the SimpopLocal settlement model and a city-system
interaction model) and the methods to explore them: direct sampling, NSGA-II
calibration with an island scheme, calibration profiles, pattern space
exploration and causality-regime classification.
"""

__version__ = "0.1.0"
