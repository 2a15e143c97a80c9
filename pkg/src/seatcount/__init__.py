"""Stationary crowd counting from motion-induced RF bandwidth."""
