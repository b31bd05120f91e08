"""Exception hierarchy shared by all modules."""

from __future__ import annotations

from typing import Optional


class CadsimError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(CadsimError):
    """Input file does not parse, or does not match its JSON schema.

    Attributes:
        line: 1-based line number of a JSON syntax error, if known.
        field: slash-separated path to the offending field, if known.
    """

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(CadsimError):
    """Input is well-formed but violates a data-model invariant.

    Attributes:
        agent_id: offending agent, or None for scenario-level rules.
        rule: short machine-readable rule name.
    """

    def __init__(self, message: str, agent_id: Optional[int] = None, rule: str = ""):
        self.agent_id = agent_id
        self.rule = rule
        super().__init__(message)


class PredictorError(CadsimError):
    """A motion predictor failed; carries the group it was serving."""

    def __init__(self, message: str, group_tag: Optional[str] = None):
        self.group_tag = group_tag
        super().__init__(f"[{group_tag}] {message}" if group_tag else message)


class RolloutError(CadsimError):
    """simulate_batch aborted because one rollout failed."""

    def __init__(self, message: str, rollout_index: int):
        self.rollout_index = rollout_index
        super().__init__(f"rollout {rollout_index}: {message}")
