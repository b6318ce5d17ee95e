"""Operator surface: command-line app, server and wire format."""
