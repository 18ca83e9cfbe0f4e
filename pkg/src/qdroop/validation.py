"""Named pass/fail items for matrix property checks."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ValidationItem:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    """Ordered collection of named checks with an overall verdict."""

    items: list[ValidationItem] = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.items.append(ValidationItem(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    def failures(self) -> list[ValidationItem]:
        return [item for item in self.items if not item.passed]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "items": [
                {"name": it.name, "passed": it.passed, "detail": it.detail}
                for it in self.items
            ],
        }

    def __str__(self) -> str:
        lines = []
        for it in self.items:
            mark = "pass" if it.passed else "FAIL"
            suffix = f" ({it.detail})" if it.detail else ""
            lines.append(f"[{mark}] {it.name}{suffix}")
        return "\n".join(lines)
