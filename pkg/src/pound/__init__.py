"""Priority message transport over a single datagram channel.

Subpackages: `wire` (fragment codec), `core` (queue, pacing, reassembly),
`netsim` (wireless chain simulator), `udpnet` (real sockets), `bench`
(statistics and experiment drivers), `control` (networked RLC loop).
"""

__version__ = "0.1.0"
