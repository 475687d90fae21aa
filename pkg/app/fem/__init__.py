"""Spatial discretization: quadrilateral continuum elements and Winkler beams."""
