"""Clinical-note mining for HPO phenotype and ORPHA rare-disease codes.

A retrieve -> extract -> verify/imply -> match pipeline over a pluggable
language-model backend, plus dataset refinement with a human review queue.
"""

__version__ = "0.1.0"
