"""Stratified risk-limiting audit engine.

Measures audit risk from stratified samples with betting
supermartingales, pools evidence across strata by Fisher's method or
intersection supermartingales, maximizes over the union of intersection
nulls by grid search or linear programming, and supports adaptive
stratum selection.
"""

__version__ = "0.1.0"
