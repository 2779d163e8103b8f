"""Invariant features for symmetric matrices and point clouds."""
