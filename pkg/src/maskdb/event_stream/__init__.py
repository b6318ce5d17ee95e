"""Transcript streams.

A transcript stream receives the leakage transcript of every processed
query and hands it back by id for audits. Backends are picked by uri
scheme: ``memory://``, ``log://`` or ``redis://`` (``redis`` extra).

"""
