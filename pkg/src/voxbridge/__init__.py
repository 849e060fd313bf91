"""Desk-scale human-drone interaction loop.

A simulated drone explores a synthetic voxel world, streams its occupancy
map and odometry over a broadcast websocket protocol, and accepts 3D target
commands. Interaction quality is measured with Hausdorff-based error,
completion time and command count.
"""

__version__ = "0.1.0"
