"""Discovery suite for distributed HTTP cache servers.

Cache hosts advertise themselves with periodic heartbeats routed through an
exchange/queue broker layer. A central service keeps the active set in
volatile memory and answers clients with the geographically nearest caches,
ranked by distance and load, over a REST interface with WPAD support.
"""

__version__ = "0.1.0"
