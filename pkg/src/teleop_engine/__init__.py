"""Plug-and-play teleoperation engine for multi-limb kinematic robots.

Maps commands from heterogeneous leader devices (virtual puppeteers, offline
trajectories, an operator console) onto arbitrary simulated followers, with
damped weighted inverse kinematics, safety filtering and bilateral force
feedback.
"""

__version__ = "0.1.0"
