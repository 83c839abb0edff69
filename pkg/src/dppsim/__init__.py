"""Double porosity/permeability flow: P3-P1 mixed finite elements, backward Euler, stability diagnostics."""

__version__ = "0.1.0"
