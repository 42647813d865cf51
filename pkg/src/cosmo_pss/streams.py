"""Domain model for page streams: labels, pages, books, and segments.

A book is an ordered stream of pages; each page carries one of five labels.
At segment level the derived first-page label folds into story blocks, so a
label sequence decodes deterministically into four-category segments.

Manifest files are line-delimited JSON, one book per line:

    {"book_id": "...", "pages": [{"page_id": "...", "index": 0,
      "vis_key": "...", "text_key": "...", "label": "cover"}, ...]}

``label``, ``vis_key``, and ``text_key`` may be null or absent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

from .errors import FormatError, ValidationError


class PageLabel(IntEnum):
    """Per-page semantic class. Integer ids are fixed and used in loss/metrics."""

    COVER = 0
    ADVERTISEMENT = 1
    STORY = 2
    TEXT_STORY = 3
    FIRST_PAGE = 4


class SegmentCategory(IntEnum):
    """Segment-level category. First-page is not a category: it marks story starts."""

    COVER = 0
    ADVERTISEMENT = 1
    STORY = 2
    TEXT_STORY = 3


N_CLASSES = len(PageLabel)

LABEL_NAMES = {
    PageLabel.COVER: "cover",
    PageLabel.ADVERTISEMENT: "advertisement",
    PageLabel.STORY: "story",
    PageLabel.TEXT_STORY: "textstory",
    PageLabel.FIRST_PAGE: "firstpage",
}
NAME_TO_LABEL = {name: label for label, name in LABEL_NAMES.items()}

CATEGORY_NAMES = {
    SegmentCategory.COVER: "cover",
    SegmentCategory.ADVERTISEMENT: "advertisement",
    SegmentCategory.STORY: "story",
    SegmentCategory.TEXT_STORY: "textstory",
}
NAME_TO_CATEGORY = {name: cat for cat, name in CATEGORY_NAMES.items()}


def label_to_category(label: PageLabel) -> SegmentCategory:
    """Map a page label to its segment category; first-page folds into story."""
    if label == PageLabel.FIRST_PAGE:
        return SegmentCategory.STORY
    return SegmentCategory(int(label))


def parse_label(name: str) -> PageLabel:
    try:
        return NAME_TO_LABEL[name]
    except KeyError:
        raise ValidationError(f"unknown label string {name!r}") from None


@dataclass(frozen=True)
class Segment:
    """Contiguous page interval [start, end] (inclusive) of one category."""

    category: SegmentCategory
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ValidationError(
                f"invalid segment bounds: start={self.start}, end={self.end}"
            )

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass
class Page:
    """One page of a book, identified by its 0-based position in the stream."""

    page_id: str
    index: int
    vis_key: str | None = None
    text_key: str | None = None
    gold_label: PageLabel | None = None

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValidationError(f"page {self.page_id!r}: negative index {self.index}")


@dataclass
class PageStream:
    """Ordered, non-empty sequence of pages of one book."""

    book_id: str
    pages: list[Page] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.pages:
            raise ValidationError(f"book {self.book_id!r}: empty stream")
        for k, page in enumerate(self.pages):
            if page.index != k:
                raise ValidationError(
                    f"book {self.book_id!r}: page index {page.index} at position {k}; "
                    "indices must be 0-based and contiguous"
                )

    def __len__(self) -> int:
        return len(self.pages)

    def gold_labels(self) -> list[PageLabel]:
        """All gold labels, raising if any page is unlabeled."""
        labels = []
        for page in self.pages:
            if page.gold_label is None:
                raise ValidationError(
                    f"book {self.book_id!r}: page {page.page_id!r} has no gold label"
                )
            labels.append(page.gold_label)
        return labels


def decode_segments(labels: list[PageLabel]) -> list[Segment]:
    """Decode a per-page label sequence into a full partition of segments.

    A new segment opens at page k when the mapped category changes from page
    k-1, or when the raw label is first-page (even inside a running story, so
    back-to-back stories split). First-page maps to the story category. The
    result covers [0, n) exactly, for every label sequence.
    """
    if not labels:
        raise ValidationError("empty stream")
    segments: list[Segment] = []
    start = 0
    prev_cat = label_to_category(labels[0])
    for k in range(1, len(labels)):
        cat = label_to_category(labels[k])
        if cat != prev_cat or labels[k] == PageLabel.FIRST_PAGE:
            segments.append(Segment(prev_cat, start, k - 1))
            start = k
            prev_cat = cat
    segments.append(Segment(prev_cat, start, len(labels) - 1))
    return segments


def validate_partition(segments: list[Segment], *, n_pages: int | None = None) -> int:
    """Check that segments are sorted, non-overlapping, and gap-free from page 0.

    Returns the covered page count. Raises ``ValidationError`` otherwise.
    """
    if not segments:
        raise ValidationError("invalid partition: no segments")
    expect = 0
    for seg in segments:
        if seg.start != expect:
            raise ValidationError(
                f"invalid partition: segment starts at {seg.start}, expected {expect}"
            )
        expect = seg.end + 1
    if n_pages is not None and expect != n_pages:
        raise ValidationError(
            f"invalid partition: covers {expect} pages, expected {n_pages}"
        )
    return expect


def encode_labels(segments: list[Segment]) -> list[PageLabel]:
    """Inverse of :func:`decode_segments` for canonical partitions.

    Story segments emit first-page followed by story on the remaining pages;
    other categories repeat their label. Adjacent segments sharing a
    non-story category are rejected: such a pair is indistinguishable from
    the merged segment, so it can never round-trip through decoding.
    """
    validate_partition(segments)
    for prev, cur in zip(segments, segments[1:]):
        if prev.category == cur.category and cur.category != SegmentCategory.STORY:
            raise ValidationError(
                "invalid partition: adjacent segments share category "
                f"{CATEGORY_NAMES[cur.category]!r} at page {cur.start}"
            )
    labels: list[PageLabel] = []
    for seg in segments:
        if seg.category == SegmentCategory.STORY:
            labels.append(PageLabel.FIRST_PAGE)
            labels.extend([PageLabel.STORY] * (len(seg) - 1))
        else:
            labels.extend([PageLabel(int(seg.category))] * len(seg))
    return labels


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------


def _page_to_record(page: Page) -> dict:
    return {
        "page_id": page.page_id,
        "index": page.index,
        "vis_key": page.vis_key,
        "text_key": page.text_key,
        "label": LABEL_NAMES[page.gold_label] if page.gold_label is not None else None,
    }


def _page_from_record(record: dict, book_id: str) -> Page:
    try:
        page_id = record["page_id"]
        index = int(record["index"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"book {book_id!r}: malformed page record: {exc}") from None
    label_name = record.get("label")
    label = parse_label(label_name) if label_name is not None else None
    return Page(
        page_id=str(page_id),
        index=index,
        vis_key=record.get("vis_key"),
        text_key=record.get("text_key"),
        gold_label=label,
    )


def save_manifest(streams: list[PageStream], path: str | Path) -> None:
    """Write one JSON record per book, in the given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for stream in streams:
            record = {
                "book_id": stream.book_id,
                "pages": [_page_to_record(p) for p in stream.pages],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> list[PageStream]:
    """Read a manifest file, validating stream invariants per book."""
    streams = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: not valid JSON: {exc}") from None
            book_id = record.get("book_id")
            if not book_id:
                raise FormatError(f"{path}:{lineno}: record has no book_id")
            pages = [_page_from_record(r, book_id) for r in record.get("pages", [])]
            streams.append(PageStream(book_id=book_id, pages=pages))
    if not streams:
        raise FormatError(f"{path}: manifest contains no books")
    return streams
