"""Contact-aware pushing with an omnidirectional base: simulation, perception and control.

Submodules: geometry, world, sensors, descriptor, cpm, rps, pipeline, config, cli.
"""
__version__ = "0.1.0"
