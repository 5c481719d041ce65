"""Quantum feedback driven by continuous joint homodyne measurement of two field modes.

Modules
-------
qops       operators, states and entanglement/squeezing metrics
noise      squeezed-input statistics and correlated Wiener increments
master     Liouvillians, time evolution, steady states, dissipator matrices
sme        conditional master equations, trajectories and ensembles
feedback   unconditional feedback master equations
protocols  teleportation, entanglement swapping, optomechanical squeezing
cli        command-line front end (``bellflow``)
"""

__version__ = "0.1.0"
