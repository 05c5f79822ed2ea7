"""BTI aging toolkit: trap-ensemble simulation, empirical model fits, TTF projection."""

__version__ = "0.1.0"
