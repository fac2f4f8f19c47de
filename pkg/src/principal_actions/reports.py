"""Structured pass/fail results shared by the verification routines and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class VerificationReport:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "params": self.params, "details": self.details}
