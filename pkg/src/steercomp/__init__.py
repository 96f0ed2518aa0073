"""Data-driven feedforward steering compensation.

Simulates a delayed, disturbed steering plant on a double-lane-change
course, identifies the actuator delay, ranks logged channels by PCA,
trains a time-delay network to forecast the steering error and closes the
loop with a switching PI/PD compensator.
"""

__version__ = "0.1.0"
