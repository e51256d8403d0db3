"""popforge: synthetic population and ecosystem generation.

Builds per-region synthetic households, persons, and environmental-component
assignments from population counts, geographies, microdata, and optional
marginal tables, then verifies the output with automated diagnostics.
"""

__version__ = "0.1.0"
