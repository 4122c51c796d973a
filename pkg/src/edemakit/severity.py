"""Ordinal pulmonary edema severity levels."""

from __future__ import annotations

from enum import IntEnum


class Severity(IntEnum):
    NONE = 0
    VASCULAR_CONGESTION = 1
    INTERSTITIAL_EDEMA = 2
    ALVEOLAR_EDEMA = 3

    @classmethod
    def parse(cls, value) -> "Severity":
        """Coerce an int or a digit string to a Severity, raising ValueError otherwise."""
        if isinstance(value, str):
            value = value.strip()
            if not value.isdigit():
                raise ValueError(f"severity must be an integer 0-3, got {value!r}")
            value = int(value)
        if isinstance(value, bool) or int(value) != value:
            raise ValueError(f"severity must be an integer 0-3, got {value!r}")
        try:
            return cls(int(value))
        except ValueError:
            raise ValueError(f"severity must be in 0-3, got {value!r}") from None


SEVERITY_NAMES = {
    Severity.NONE: "none",
    Severity.VASCULAR_CONGESTION: "vascular congestion",
    Severity.INTERSTITIAL_EDEMA: "interstitial edema",
    Severity.ALVEOLAR_EDEMA: "alveolar edema",
}

N_LEVELS = len(Severity)
