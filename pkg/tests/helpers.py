import numpy as np


def nan_outside_unit_box(X):
    return np.where(np.abs(X).max(axis=1) > 1.0, np.nan, np.sum(X * X, axis=1))


def exploding_diffusion(u):
    return np.full((u.shape[0], u.shape[0]), np.inf)
