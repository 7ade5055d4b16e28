"""Electro-optically tunable microcavities coupled to rare-earth emitters.

Submodules
----------
units     parameter types and unit conversions
cqed      steady-state cooperativity, beta factor, branching
dynamics  actuator-limited detuning and time-dependent decay
spectra   Monte Carlo PLE and spectral-hole-burning synthesis
fitting   Levenberg-Marquardt lineshape/decay fits, peak detection
budget    single-ion photon budget
config    device configuration files and presets
cli       command-line entry point
"""

__version__ = "0.1.0"
