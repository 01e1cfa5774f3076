# app/errors.py
from typing import List, Optional


class ConfigError(ValueError):
    """Scenario or fit-problem configuration rejected before any compute.

    `field_errors` holds one `path: message` line per offending field.
    """

    def __init__(self, message: str, field_errors: Optional[List[str]] = None):
        self.field_errors = list(field_errors or [])
        detail = message
        if self.field_errors:
            detail = message + "\n" + "\n".join(f"  {line}" for line in self.field_errors)
        super().__init__(detail)

    @classmethod
    def from_validation_error(cls, exc, source: str = "config") -> "ConfigError":
        """Builds field-level diagnostics from a pydantic ValidationError."""
        lines = []
        for err in exc.errors():
            path = ".".join(str(part) for part in err.get("loc", ())) or "<root>"
            lines.append(f"{path}: {err.get('msg', 'invalid value')}")
        return cls(f"Invalid {source}", lines)


class InsufficientStatisticsError(ValueError):
    """An estimator had nothing to normalise by (no heralds, no accidentals, empty window)."""
