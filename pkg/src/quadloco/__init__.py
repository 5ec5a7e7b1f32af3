"""Quadruped locomotion learning from weak inertial sensing."""

__version__ = "0.1.0"
