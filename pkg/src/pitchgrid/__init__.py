"""Adaptive sensorless pitch control of wind turbines on a reduced-order grid."""

__version__ = "0.1.0"
