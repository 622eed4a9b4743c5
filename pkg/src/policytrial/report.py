"""Collects exclusion and suppression notes for the run report."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field


@dataclass
class Report:
    lines: list[tuple[str, str, str]] = field(default_factory=list)

    def add(self, kind: str, subject: str, reason: str) -> None:
        self.lines.append((kind, subject, reason))

    def of_kind(self, kind: str) -> list[tuple[str, str]]:
        return [(s, r) for k, s, r in self.lines if k == kind]

    def __len__(self):
        return len(self.lines)

    def render(self) -> str:
        return "".join(f"{k}\t{s}\t{r}\n" for k, s, r in self.lines)

    def write(self, path=None) -> None:
        if path is None:
            sys.stderr.write(self.render())
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(self.render())
