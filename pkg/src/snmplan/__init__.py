"""Non-linearity measures and switching planners for belief-space motion planning."""

__version__ = "0.1.0"
