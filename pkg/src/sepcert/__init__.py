"""Entanglement certification toolkit.

Separability testing through hierarchies of semidefinite feasibility problems
(symmetric extensions with positive partial transposes), entanglement witness
extraction from infeasibility certificates, witness decomposability analysis,
and positivity certification for linear maps on operators.
"""

__version__ = "0.1.0"
