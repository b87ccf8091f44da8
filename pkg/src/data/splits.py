"""
Split lists: one `relative/path label` entry per line, `#` comments allowed
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Union

from core.exceptions import ConfigError, SplitFormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitEntry:
    path: str
    label: int


@dataclass
class SplitList:
    entries: List[SplitEntry] = field(default_factory=list)
    name: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[SplitEntry]:
        return iter(self.entries)

    def paths(self) -> List[str]:
        return [e.path for e in self.entries]

    def labels(self) -> List[int]:
        return [e.label for e in self.entries]


def load_split(path: Union[str, Path], num_classes: Optional[int] = None) -> SplitList:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Split file not found: {path}")
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SplitFormatError(line_number, line, "expected `path label`")
            try:
                label = int(parts[1])
            except ValueError:
                raise SplitFormatError(line_number, line, "label is not an integer") from None
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise SplitFormatError(line_number, line, "label outside the class range")
            entries.append(SplitEntry(parts[0], label))
    logger.debug(f"Loaded {len(entries)} entries from {path}")
    return SplitList(entries, path.stem)


def write_split(path: Union[str, Path], split: SplitList, header: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {line}" for line in (header or "").splitlines()]
    lines += [f"{e.path} {e.label}" for e in split.entries]
    path.write_text("\n".join(lines) + "\n")
    return path


def check_disjoint(train: SplitList, test: SplitList):
    shared = set(train.paths()) & set(test.paths())
    if shared:
        raise ConfigError(f"{len(shared)} videos appear in both splits, e.g. {sorted(shared)[0]}")
