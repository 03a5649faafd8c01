"""Netlist diversification via synthesis-style passes, with PPA dedup and
register-grouping evaluation."""

__version__ = "0.1.0"
