"""Compressive PCA for low-rank matrices on graphs."""
