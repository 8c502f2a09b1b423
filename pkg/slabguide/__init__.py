"""slabguide -- Green's-function machinery for 2-D open slab waveguides.

Modal analysis of the transverse problem, evaluation of the Green's function
and its guided / radiation / evanescent parts, field synthesis on grids, the
first-order perturbation fields of slightly deformed guides, and the
constants of the existence estimates.
"""

__version__ = "0.1.0"
