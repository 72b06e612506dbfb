"""Algorithm drivers: tabular auto-exploration, SPMD+CTD, the gap certificate and the parameter-free loop.

Import the submodules directly; `drivers.paramfree` depends on `nodes`, which depends on the other drivers.
"""
