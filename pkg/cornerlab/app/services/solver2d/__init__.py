"""
Finite-element solver for the corner eigenproblem on the half-period domain.

Modules:
    profile  - surface profiles and the straightened model surface
    mesh     - corner-graded triangulations from a transfinite map
    space    - enriched P1/P2 spaces, singular function, assembly
    eigen    - negative-spectrum solves, ladder fits, eigenfunction analysis
    dtn      - Dirichlet-to-Neumann coefficient from the outer problem
    compare  - curved domain against its straightened model
"""
