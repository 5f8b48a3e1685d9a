"""Quantum Navier-Stokes stationary states and decay toward them on the periodic box."""
