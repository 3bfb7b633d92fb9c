"""Isogeometric four-field solver for Biot consolidation.

B-spline mixed discretizations of the quasi-static poroelasticity system in
displacement / solid-pressure / flux / fluid-pressure form, with implicit
time stepping and a verification harness for convergence, parameter
robustness, inf-sup stability and pressure-oscillation studies.
"""

__version__ = "0.1.0"
