"""Midpoint grids over unit boxes, shared by quadrature and discretization."""

import numpy as np


def midpoint_axis(resolution):
    """Midpoints of `resolution` equal cells on [0, 1]."""
    return (np.arange(resolution) + 0.5) / resolution


def midpoint_grid(resolution, dim):
    """All midpoint nodes of the `resolution`^dim cell grid on [0,1]^dim.

    Returns an array of shape (resolution**dim, dim), ordered row-major
    (first dimension varies slowest).
    """
    axis = midpoint_axis(resolution)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
