"""Toolchain for failure-aware quality choreographies.

Parse, type-check, execute and project choreographies with quality
predicates and capability annotations, then validate the projection by
co-simulation against the global semantics.
"""

__version__ = "0.1.0"
