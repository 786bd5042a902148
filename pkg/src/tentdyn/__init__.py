"""Symbolic dynamics of tent maps: itineraries, kneading theory, chain
transitivity and omega-limit sets."""

__version__ = "0.1.0"
