"""Randomized preconditioning solvers for SDD and graph Laplacian systems."""
