"""Three-tier cloud-edge-terminal sensing/offloading network simulator.

Binary task-offloading decisions and transmit beamformers are jointly
optimized to minimize average sensing-task execution latency under power,
edge-capacity and echo-SINR constraints; a Monte-Carlo harness reproduces
the comparison experiments.
"""

__version__ = "0.1.0"
