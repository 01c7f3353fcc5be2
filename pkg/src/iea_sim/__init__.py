"""Distributed roadside-camera autonomy simulator.

Roadside camera nodes (MSSPs) estimate a vehicle's position from synthetic
overhead imagery and publish it over a datagram network; the vehicle node
fuses estimates across overlapping camera cells and drives itself along
waypoints in closed loop. Runs either in deterministic single-process
lockstep or distributed over real UDP sockets.
"""

__version__ = "0.1.0"
