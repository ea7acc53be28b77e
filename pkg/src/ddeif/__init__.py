"""Distributed, decentralized extended information filter for a slung payload
observed by several camera-carrying quadrotors, with the simulation harness
used to evaluate it."""

__version__ = "0.1.0"
