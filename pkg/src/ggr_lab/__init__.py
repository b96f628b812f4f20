"""Fermionic GGR cluster-expansion toolkit.

Free Fermi gas thermodynamics, p-wave scattering and Jastrow factors,
diagram enumeration with two independent evaluation engines, an exact
Fock-space oracle for small lattice systems, and the assembled pressure
bound envelopes.
"""

__version__ = "0.1.0"
