# Do not modify this file directly - it is updated automatically on bumps

__version__ = "0.1.0"
