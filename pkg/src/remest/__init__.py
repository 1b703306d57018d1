"""Radio resource allocation for multi-sensor remote state estimation.

Simulator, stability certifier and a from-scratch PPO trainer for N sensors
sharing M subcarriers over finite-state Markov fading channels, under OMA,
SIC-based NOMA and multi-round IRC-SIC NOMA.
"""

__version__ = "0.1.0"
