import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from exactk.core.errors import ConfigurationError, DataError, SampleParseError


HEADER = ("user", "card", "candidates", "label", "positive_item")
ABSENT = "-"


@dataclass(frozen=True)
class DatasetSpec:
    k: int
    n: int
    split_ratio: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        if self.k <= 0 or self.n <= 0:
            raise ConfigurationError(f"K and N must be positive (K={self.k}, N={self.n})")
        if self.k >= self.n:
            raise ConfigurationError(f"K must be < N (K={self.k}, N={self.n})")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigurationError(f"split ratio must be in (0, 1), got {self.split_ratio}")


@dataclass(frozen=True)
class Sample:
    user_id: int
    card: Tuple[int, ...]
    candidates: Tuple[int, ...]
    label: int
    positive_item: Optional[int] = None

    @property
    def k(self) -> int:
        return len(self.card)

    @property
    def n(self) -> int:
        return len(self.candidates)

    def node_of(self) -> Dict[int, int]:
        """Item id -> position in the candidate list."""
        return {item: node for node, item in enumerate(self.candidates)}

    def card_nodes(self) -> List[int]:
        index = self.node_of()
        return [index[item] for item in self.card]

    def problems(self, k: Optional[int] = None, n: Optional[int] = None) -> List[str]:
        found = []
        if k is not None and len(self.card) != k:
            found.append(f"card has {len(self.card)} items, expected K={k}")
        if n is not None and len(self.candidates) != n:
            found.append(f"candidate set has {len(self.candidates)} items, expected N={n}")
        if len(set(self.card)) != len(self.card):
            found.append("card items are not distinct")
        if len(set(self.candidates)) != len(self.candidates):
            found.append("candidate items are not distinct")
        if not set(self.card) <= set(self.candidates):
            found.append("card is not a subset of the candidates")
        if self.label not in (0, 1):
            found.append(f"label must be 0 or 1, got {self.label}")
        has_positive = self.positive_item is not None and self.positive_item in self.card
        if self.label == 1 and not has_positive:
            found.append("label 1 requires a positive item inside the card")
        if self.label == 0 and self.positive_item is not None:
            found.append("label 0 cards carry no positive item")
        return found

    def validate(self, k: Optional[int] = None, n: Optional[int] = None) -> None:
        found = self.problems(k, n)
        if found:
            raise DataError(f"invalid sample for user {self.user_id}: {'; '.join(found)}")


def format_sample(sample: Sample) -> str:
    positive = ABSENT if sample.positive_item is None else str(sample.positive_item)
    return "\t".join(
        [
            str(sample.user_id),
            ",".join(str(i) for i in sample.card),
            ",".join(str(i) for i in sample.candidates),
            str(sample.label),
            positive,
        ]
    )


def _ids(field: str, column: str, line: int, path: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in field.split(","))
    except ValueError:
        raise SampleParseError(f"non-integer id in {column} column: {field!r}", line, path) from None


def parse_sample(row: str, line: int = 0, path: str = "") -> Sample:
    fields = row.rstrip("\r\n").split("\t")
    if len(fields) != len(HEADER):
        raise SampleParseError(f"expected {len(HEADER)} columns, got {len(fields)}", line, path)

    user_field, card_field, cand_field, label_field, positive_field = fields
    try:
        user_id = int(user_field)
    except ValueError:
        raise SampleParseError(f"non-integer user id {user_field!r}", line, path) from None
    card = _ids(card_field, "card", line, path)
    candidates = _ids(cand_field, "candidates", line, path)
    if label_field not in ("0", "1"):
        raise SampleParseError(f"label must be 0 or 1, got {label_field!r}", line, path)

    positive: Optional[int] = None
    if positive_field != ABSENT:
        try:
            positive = int(positive_field)
        except ValueError:
            raise SampleParseError(f"non-integer positive item {positive_field!r}", line, path) from None

    sample = Sample(user_id, card, candidates, int(label_field), positive)
    found = sample.problems()
    if found:
        raise SampleParseError("; ".join(found), line, path)
    return sample


def read_samples(path: str) -> List[Sample]:
    samples: List[Sample] = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\r\n")
        if tuple(header.split("\t")) != HEADER:
            raise SampleParseError(f"missing header, expected {'<TAB>'.join(HEADER)}", 1, path)
        for number, row in enumerate(f, start=2):
            if not row.strip():
                continue
            samples.append(parse_sample(row, number, path))
    return samples


def write_samples(samples: Iterable[Sample], path: str) -> None:
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(HEADER) + "\n")
        for sample in samples:
            f.write(format_sample(sample) + "\n")
    os.replace(tmp_path, path)


def demonstrations(samples: Iterable[Sample]) -> List[Sample]:
    """Clicked cards only: the supervised demonstration set."""
    return [s for s in samples if s.label == 1]
