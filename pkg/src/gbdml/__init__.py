"""Generalized Benders decomposition with learned cut filtering."""
