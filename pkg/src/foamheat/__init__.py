"""Heat-transfer state-space models on open-cell foam complexes.

Pipeline: generate or load a foam graph, build the classified primal
3-complex, construct the barycentric dual with its geometry tables,
assemble the two-phase state-space model, then simulate and fit.
"""

__version__ = "0.1.0"
