"""County-level newspaper count modeling.

Poisson log-link GLMs with population-segment interactions, penalized
benchmarks, desert-probability forecasts with risk modes, and choropleth
emission. See README.md for the pipeline walkthrough.
"""

__version__ = "0.1.0"
