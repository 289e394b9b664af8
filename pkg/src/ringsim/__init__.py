"""Packet-level discrete-event simulator of ring-based collective operations.

The simulator models a leaf-spine datacenter fabric carrying ring
collectives (reduce-scatter + all-gather pipelines), DCQCN-style rate
control reacting to ECN marks, and an in-network mechanism that tracks
per-job pipeline progress at each switch and selectively marks packets of
flows running ahead of the job's slowest step, so lagging flows can catch
up and step misalignment stays bounded.
"""

__version__ = "0.1.0"
