"""memchan: a memory-usage covert channel toolkit.

Transmit bits by modulating total system memory usage, recover them from
usage traces, detect active channels with windowed classifiers, and jam
them with targeted noise. A deterministic simulated medium makes every
experiment reproducible without touching the live system.
"""

__version__ = "0.1.0"
