"""
Patent corpus ingestion: parsing raw exports, normalization, deduplication
and stratified train/validation/test splitting.

Records move through three stages:

    raw bytes --parse_records--> raw maps --normalize_record--> PatentRecord
                                                           +--> RejectedRecord

Canonical interchange format is JSONL keyed by snake_case field names.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import unicodedata
from dataclasses import dataclass
from datetime import date, datetime
from enum import Enum
from typing import IO, Any, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import EmptyCorpus, UnknownFormat, UnreadableSource

FIELDS = (
    "application_number",
    "title",
    "abstract",
    "application_date",
    "status",
    "publication_number",
    "publication_type",
    "field_of_invention",
    "ipc_codes",
    "inventors",
    "background",
)

# header spellings seen in exports -> canonical key (matched after snake-casing)
_ALIASES = {
    "application_no": "application_number",
    "app_number": "application_number",
    "id": "application_number",
    "date": "application_date",
    "filing_date": "application_date",
    "ipc": "ipc_codes",
    "ipc_code": "ipc_codes",
    "classification_ipc": "ipc_codes",
    "classification": "ipc_codes",
    "inventor": "inventors",
    "inventor_information": "inventors",
    "domain": "field_of_invention",
    "technical_domain": "field_of_invention",
    "background_of_invention": "background",
    "invention_background": "background",
}

IPC_PATTERN = re.compile(r"^[A-H]\d{2}[A-Z]\d+/\d+$")
UNCLASSIFIED = "unclassified"

_DATE_FORMATS = ("%Y-%m-%d", "%m/%d/%Y", "%d.%m.%Y")
_WS_RE = re.compile(r"\s+")
_PUNCT_RUN_RE = re.compile(r"([^\w\s])\1+")
_LIST_SPLIT_RE = re.compile(r"[;|\n]")


def canonical_key(name: str) -> str:
    """Map a header such as ``"Field Of Invention"`` to ``field_of_invention``."""
    key = re.sub(r"[^0-9a-z]+", "_", name.strip().lower()).strip("_")
    return _ALIASES.get(key, key)


class RejectReason(str, Enum):
    MissingRequiredField = "MissingRequiredField"
    InvalidDate = "InvalidDate"
    DuplicateKey = "DuplicateKey"
    Inconsistent = "Inconsistent"


@dataclass(frozen=True)
class ParseError:
    line: int
    message: str


@dataclass(frozen=True)
class RejectedRecord:
    raw_payload: str
    reason: RejectReason
    detail: str = ""

    def to_dict(self) -> dict:
        return {"reason": self.reason.value, "detail": self.detail, "raw_payload": self.raw_payload}


@dataclass(frozen=True)
class PatentRecord:
    application_number: str
    title: str
    application_date: str
    abstract: str = ""
    status: str = ""
    publication_number: Optional[str] = None
    publication_type: Optional[str] = None
    field_of_invention: str = UNCLASSIFIED
    ipc_codes: tuple[str, ...] = ()
    inventors: tuple[str, ...] = ()
    background: Optional[str] = None

    @property
    def missing_abstract(self) -> bool:
        return not self.abstract

    def to_dict(self) -> dict:
        return {
            "application_number": self.application_number,
            "title": self.title,
            "abstract": self.abstract,
            "application_date": self.application_date,
            "status": self.status,
            "publication_number": self.publication_number,
            "publication_type": self.publication_type,
            "field_of_invention": self.field_of_invention,
            "ipc_codes": list(self.ipc_codes),
            "inventors": list(self.inventors),
            "background": self.background,
        }


@dataclass(frozen=True)
class CorpusSplit:
    train_ids: list[str]
    validation_ids: list[str]
    test_ids: list[str]
    seed: int
    ratios: tuple[int, int, int] = (8, 1, 1)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train_ids": self.train_ids,
            "validation_ids": self.validation_ids,
            "test_ids": self.test_ids,
        }


# --------------------------------------------------------------------------
# parsing


def _read_text(source: Union[bytes, str, IO]) -> str:
    try:
        if isinstance(source, bytes):
            data = source
        elif isinstance(source, str):
            with open(source, "rb") as fh:
                data = fh.read()
        else:
            data = source.read()
            if isinstance(data, str):
                return data
        return data.decode("utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableSource(str(exc)) from exc


def parse_records(source: Union[bytes, str, IO], format: str) -> tuple[list[dict], list[ParseError]]:
    """Parse a CSV or JSONL export into raw record maps.

    ``source`` is raw bytes, a path, or a binary file object. Header names
    are matched case-insensitively and mapped to snake_case keys. Malformed
    rows are returned as ``ParseError`` entries carrying 1-based line numbers.
    """
    fmt = format.lower()
    if fmt not in ("csv", "jsonl"):
        raise UnknownFormat(f"unsupported format {format!r} (expected csv or jsonl)")
    text = _read_text(source)
    if fmt == "jsonl":
        return _parse_jsonl(text)
    return _parse_csv(text)


def _parse_jsonl(text: str) -> tuple[list[dict], list[ParseError]]:
    records, errors = [], []
    # split on "\n" only: U+2028 and friends are legal inside JSON strings
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(ParseError(lineno, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            errors.append(ParseError(lineno, "line is not a JSON object"))
            continue
        records.append({canonical_key(k): v for k, v in obj.items()})
    return records, errors


def _parse_csv(text: str) -> tuple[list[dict], list[ParseError]]:
    records, errors = [], []
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader)
    except StopIteration:
        return records, errors
    except csv.Error as exc:
        return records, [ParseError(reader.line_num, f"malformed header: {exc}")]
    keys = [canonical_key(h) for h in header]
    while True:
        start = reader.line_num + 1
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            errors.append(ParseError(start, f"malformed row: {exc}"))
            continue
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(keys):
            errors.append(ParseError(start, f"expected {len(keys)} fields, got {len(row)}"))
            continue
        records.append(dict(zip(keys, row)))
    return records, errors


# --------------------------------------------------------------------------
# normalization


def clean_text(value: Any) -> str:
    """Trim, drop control/replacement characters, collapse whitespace and
    repeated punctuation (``"!!!"`` -> ``"!"``)."""
    if value is None:
        return ""
    text = str(value)
    text = "".join(
        ch for ch in text
        if ch != "\ufffd" and (ch.isspace() or unicodedata.category(ch) != "Cc")
    )
    text = _WS_RE.sub(" ", text).strip()
    return _PUNCT_RUN_RE.sub(r"\1", text)


def _clean_label(value: Any) -> str:
    return _WS_RE.sub(" ", str(value or "")).strip().lower()


def _optional(value: Any) -> Optional[str]:
    text = clean_text(value)
    return text or None


def _as_list(value: Any) -> list[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        items = [str(v) for v in value]
    else:
        items = _LIST_SPLIT_RE.split(str(value))
    return [i for i in items if i.strip()]


def normalize_ipc(code: str) -> str:
    return re.sub(r"\s+", "", code).upper()


def parse_date(value: Any) -> Optional[date]:
    text = str(value).strip()
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    return None


def _reject(raw: dict, reason: RejectReason, detail: str) -> RejectedRecord:
    payload = json.dumps(raw, sort_keys=True, ensure_ascii=False, default=str)
    return RejectedRecord(payload, reason, detail)


def normalize_record(raw: dict, today: Optional[date] = None) -> Union[PatentRecord, RejectedRecord]:
    """Turn one raw map into a ``PatentRecord`` or a ``RejectedRecord``.

    Rejection is a return value. ``today`` bounds application dates
    (defaults to the current date); later dates are ``Inconsistent``.
    """
    raw = {canonical_key(k): v for k, v in raw.items()}
    app_no = re.sub(r"\s+", "", str(raw.get("application_number") or "")).upper()
    title = clean_text(raw.get("title"))
    date_raw = raw.get("application_date")
    missing = [
        name
        for name, val in (("application_number", app_no), ("title", title),
                          ("application_date", str(date_raw or "").strip()))
        if not val
    ]
    if missing:
        return _reject(raw, RejectReason.MissingRequiredField, ", ".join(missing))

    filed = parse_date(date_raw)
    if filed is None:
        return _reject(raw, RejectReason.InvalidDate, f"unparseable date {date_raw!r}")
    if filed > (today or date.today()):
        return _reject(raw, RejectReason.Inconsistent, f"application date {filed} is in the future")

    ipc_codes: list[str] = []
    for code in _as_list(raw.get("ipc_codes")):
        for part in code.split(","):
            norm = normalize_ipc(part)
            if not norm:
                continue
            if not IPC_PATTERN.match(norm):
                return _reject(raw, RejectReason.Inconsistent, f"malformed IPC code {part.strip()!r}")
            if norm not in ipc_codes:
                ipc_codes.append(norm)

    inventors = tuple(clean_text(n) for n in _as_list(raw.get("inventors")))

    return PatentRecord(
        application_number=app_no,
        title=title,
        application_date=filed.isoformat(),
        abstract=clean_text(raw.get("abstract")),
        status=_clean_label(raw.get("status")),
        publication_number=_optional(raw.get("publication_number")),
        publication_type=_optional(raw.get("publication_type")),
        field_of_invention=_clean_label(raw.get("field_of_invention")) or UNCLASSIFIED,
        ipc_codes=tuple(ipc_codes),
        inventors=tuple(n for n in inventors if n),
        background=_optional(raw.get("background")),
    )


def normalize_all(raw_records: Iterable[dict], today: Optional[date] = None):
    """Normalize many raw maps; returns ``(accepted, rejected)``."""
    accepted, rejected = [], []
    for raw in raw_records:
        out = normalize_record(raw, today=today)
        (accepted if isinstance(out, PatentRecord) else rejected).append(out)
    return accepted, rejected


def deduplicate(records: Sequence[PatentRecord]) -> tuple[list[PatentRecord], list[RejectedRecord]]:
    seen: set[str] = set()
    kept, rejected = [], []
    for rec in records:
        if rec.application_number in seen:
            rejected.append(
                _reject(rec.to_dict(), RejectReason.DuplicateKey,
                        f"duplicate application_number {rec.application_number}")
            )
        else:
            seen.add(rec.application_number)
            kept.append(rec)
    return kept, rejected


# --------------------------------------------------------------------------
# splitting


def _stratum_rng(seed: int, stratum: str) -> np.random.Generator:
    digest = hashlib.sha256(stratum.encode("utf-8")).digest()
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little")])


def split_sizes(n: int, ratios: Sequence[int]) -> list[int]:
    """Floor of the proportional sizes; leftover records go one each to
    train, then validation, then test."""
    total = sum(ratios)
    sizes = [n * r // total for r in ratios]
    for i in range(n - sum(sizes)):
        sizes[i % len(sizes)] += 1
    return sizes


def stratified_split(records: Sequence[PatentRecord], ratios: tuple[int, int, int] = (8, 1, 1),
                     seed: int = 0) -> CorpusSplit:
    if not records:
        raise EmptyCorpus("cannot split an empty corpus")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive integers, got {ratios!r}")

    strata: dict[str, list[str]] = {}
    for rec in records:
        strata.setdefault(rec.field_of_invention, []).append(rec.application_number)

    parts: list[list[str]] = [[], [], []]
    for name in sorted(strata):
        ids = sorted(strata[name])
        order = _stratum_rng(seed, name).permutation(len(ids))
        shuffled = [ids[i] for i in order]
        start = 0
        for part, size in zip(parts, split_sizes(len(ids), ratios)):
            part.extend(shuffled[start:start + size])
            start += size
    return CorpusSplit(parts[0], parts[1], parts[2], seed=seed, ratios=tuple(ratios))


def compose_document_text(record: PatentRecord) -> str:
    lines = [
        f"TITLE: {record.title}",
        f"ABSTRACT: {record.abstract}",
        f"DOMAIN: {record.field_of_invention}",
    ]
    if record.background:
        lines.append(f"BACKGROUND: {record.background}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# JSONL I/O


def write_jsonl(items: Iterable[Any], path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            obj = item.to_dict() if hasattr(item, "to_dict") else item
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            n += 1
    return n


def load_corpus(path: str) -> list[PatentRecord]:
    """Read a normalized corpus written by ``write_jsonl``."""
    raw, errors = parse_records(path, "jsonl")
    if errors:
        raise UnreadableSource(f"{path}: line {errors[0].line}: {errors[0].message}")
    records = []
    for r in raw:
        rec = normalize_record(r, today=date.max)
        if isinstance(rec, RejectedRecord):
            raise UnreadableSource(f"{path}: record rejected on reload ({rec.reason.value}: {rec.detail})")
        records.append(rec)
    return records
