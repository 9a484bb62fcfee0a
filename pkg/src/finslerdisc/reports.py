"""Report objects emitted by the audit/check operations.

Every check returns a `Report` rather than raising, so callers can
aggregate margins and the CLI can serialize everything as key=value
blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Report:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)

    def lines(self):
        out = [f"report={self.name}", f"passed={int(self.passed)}"]
        for k, v in self.values.items():
            if isinstance(v, float):
                out.append(f"{k}={v:.12g}")
            else:
                out.append(f"{k}={v}")
        return out

    def as_text(self):
        return "\n".join(self.lines()) + "\n"

    def __getitem__(self, key):
        return self.values[key]


def merge_reports(name, reports):
    """Aggregate sub-reports; passes iff all sub-reports pass."""
    values = {}
    for r in reports:
        for k, v in r.values.items():
            values[f"{r.name}.{k}"] = v
        values[f"{r.name}.passed"] = int(r.passed)
    return Report(name, all(r.passed for r in reports), values)
