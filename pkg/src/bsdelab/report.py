"""Shared pass/fail record for sampled checks."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["VerificationReport", "PASS", "FAIL", "INCONCLUSIVE"]

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one sampled check.

    ``violation`` is the worst signed margin (positive means the checked
    inequality failed somewhere); ``location`` pins the worst point.  A
    report is a failure exactly when ``violation > tolerance``;
    ``inconclusive`` is reserved for checks whose own preconditions (a
    certificate, a premise) failed first.
    """

    name: str
    claim: str
    status: str
    violation: float
    location: dict = field(default_factory=dict)
    tolerance: float = 0.0
    notes: tuple = ()

    def __post_init__(self):
        if self.status not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"bad status {self.status!r}")
        if self.status != INCONCLUSIVE:
            expected = FAIL if self.violation > self.tolerance else PASS
            if self.status != expected:
                raise ValueError(
                    f"status {self.status!r} inconsistent with violation "
                    f"{self.violation!r} at tolerance {self.tolerance!r}"
                )

    @property
    def passed(self):
        return self.status == PASS

    @classmethod
    def from_violation(cls, name, claim, violation, location=None, tolerance=0.0, notes=()):
        status = FAIL if violation > tolerance else PASS
        return cls(name, claim, status, float(violation), location or {}, tolerance, tuple(notes))

    @classmethod
    def inconclusive(cls, name, claim, reason, location=None):
        return cls(name, claim, INCONCLUSIVE, float("nan"), location or {}, 0.0, (reason,))

    def as_record(self):
        return {
            "name": self.name,
            "claim": self.claim,
            "status": self.status,
            "violation": self.violation,
            "location": self.location,
            "tolerance": self.tolerance,
            "notes": list(self.notes),
        }
