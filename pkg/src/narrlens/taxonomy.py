"""Two-level narrative taxonomy: loading, validation and prompt rendering.

The on-disk format is a UTF-8 TSV with a header row and eight columns, one
row per (narrative, sub-narrative) pair::

    main_id  main_def  main_example  main_meta  sub_id  sub_def  sub_example  sub_meta
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

COLUMNS = (
    "main_id",
    "main_def",
    "main_example",
    "main_meta",
    "sub_id",
    "sub_def",
    "sub_example",
    "sub_meta",
)

DOMAINS = ("CC", "URW")

# Shared-task catch-all label, valid at both levels.
OTHER = "Other"


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True)
class TaxonomyEntry:
    main_id: str
    main_definition: str
    main_example: str
    main_metadata: str
    sub_id: str
    sub_definition: str
    sub_example: str
    sub_metadata: str

    def as_row(self) -> tuple[str, ...]:
        return (
            self.main_id,
            self.main_definition,
            self.main_example,
            self.main_metadata,
            self.sub_id,
            self.sub_definition,
            self.sub_example,
            self.sub_metadata,
        )


@dataclass(frozen=True)
class Violation:
    kind: str  # "unknown-narrative" | "unknown-sub" | "orphan-sub"
    label: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}: {self.label}" + (f" ({self.detail})" if self.detail else "")


@dataclass(frozen=True)
class Taxonomy:
    """Immutable two-level taxonomy.

    ``domain`` is ``None`` for a taxonomy merged across domains.
    """

    domain: str | None
    entries: tuple[TaxonomyEntry, ...]
    narrative_index: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)
    _parents: dict[str, str] = field(init=False, repr=False, compare=False)
    _mains: dict[str, TaxonomyEntry] = field(init=False, repr=False, compare=False)
    _subs: dict[str, TaxonomyEntry] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.domain is not None and self.domain not in DOMAINS:
            raise TaxonomyError(f"unknown domain {self.domain!r}")
        if not self.entries:
            raise TaxonomyError("empty taxonomy")
        index: dict[str, list[str]] = {}
        parents: dict[str, str] = {}
        mains: dict[str, TaxonomyEntry] = {}
        subs: dict[str, TaxonomyEntry] = {}
        for entry in self.entries:
            if not entry.main_id or not entry.sub_id:
                raise TaxonomyError(f"empty identifier in row {entry.as_row()!r}")
            if entry.sub_id in parents:
                raise TaxonomyError(
                    f"duplicate sub-narrative {entry.sub_id!r} "
                    f"(under {parents[entry.sub_id]!r} and {entry.main_id!r})"
                )
            parents[entry.sub_id] = entry.main_id
            subs[entry.sub_id] = entry
            mains.setdefault(entry.main_id, entry)
            index.setdefault(entry.main_id, []).append(entry.sub_id)
        object.__setattr__(self, "narrative_index", {k: tuple(v) for k, v in index.items()})
        object.__setattr__(self, "_parents", parents)
        object.__setattr__(self, "_mains", mains)
        object.__setattr__(self, "_subs", subs)

    @property
    def narratives(self) -> list[str]:
        return list(self.narrative_index)

    @property
    def sub_narratives(self) -> list[str]:
        return [e.sub_id for e in self.entries]

    def has_narrative(self, label: str) -> bool:
        return label in self._mains

    def has_sub(self, label: str) -> bool:
        return label in self._subs

    def main_entry(self, label: str) -> TaxonomyEntry:
        try:
            return self._mains[label]
        except KeyError:
            raise TaxonomyError(f"unknown narrative {label!r}") from None

    def sub_entry(self, label: str) -> TaxonomyEntry:
        try:
            return self._subs[label]
        except KeyError:
            raise TaxonomyError(f"unknown sub-narrative {label!r}") from None

    def parent_of(self, sub_id: str) -> str:
        sub_id = sub_id.strip()
        if sub_id in self._parents:
            return self._parents[sub_id]
        if sub_id == OTHER:
            return OTHER
        raise TaxonomyError(f"unknown sub-narrative {sub_id!r}")

    def validate_labelset(self, narratives: Iterable[str], subs: Iterable[str]) -> list[Violation]:
        """Check a prediction or annotation against the hierarchy.

        Returns an empty list when every label is known and every
        sub-narrative's parent is among ``narratives``.
        """
        narratives = [n.strip() for n in narratives]
        present = set(narratives)
        violations = []
        for label in narratives:
            if label != OTHER and label not in self._mains:
                violations.append(Violation("unknown-narrative", label))
        for label in (s.strip() for s in subs):
            if label not in self._parents and label != OTHER:
                violations.append(Violation("unknown-sub", label))
                continue
            parent = self.parent_of(label)
            if parent not in present:
                violations.append(Violation("orphan-sub", label, f"parent {parent!r} absent"))
        return violations

    def render_block(self, labels: Sequence[str], level: str) -> str:
        """Render definitions/examples/metadata for ``labels`` in input order."""
        if level not in ("main", "sub"):
            raise ValueError(f"level must be 'main' or 'sub', got {level!r}")
        stanzas = []
        for label in labels:
            if level == "main":
                e = self.main_entry(label)
                body = (e.main_id, e.main_definition, e.main_example, e.main_metadata)
            else:
                e = self.sub_entry(label)
                body = (e.sub_id, e.sub_definition, e.sub_example, e.sub_metadata)
            ident, definition, example, meta = body
            stanzas.append(
                f"[{ident}]\n"
                f"Definition: {definition}\n"
                f"Example: {example}\n"
                f"Metadata: {meta}"
            )
        return "\n\n".join(stanzas)

    def to_rows(self) -> list[tuple[str, ...]]:
        return [e.as_row() for e in self.entries]

    def dump(self, path: str | Path) -> None:
        lines = ["\t".join(COLUMNS)] + ["\t".join(r) for r in self.to_rows()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_taxonomy(text: str, domain: str | None, source: str = "<string>") -> Taxonomy:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TaxonomyError(f"empty taxonomy: {source}")
    header = [c.strip() for c in lines[0].split("\t")]
    if tuple(header) != COLUMNS:
        raise TaxonomyError(f"{source}: bad header {header!r}")
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(COLUMNS):
            raise TaxonomyError(
                f"{source}:{lineno}: malformed row, expected {len(COLUMNS)} columns, got {len(cells)}"
            )
        cells = [c.strip() for c in cells]
        if not cells[0] or not cells[4]:
            raise TaxonomyError(f"{source}:{lineno}: empty identifier")
        entries.append(TaxonomyEntry(*cells))
    if not entries:
        raise TaxonomyError(f"empty taxonomy: {source}")
    return Taxonomy(domain, tuple(entries))


def load_taxonomy(path: str | Path, domain: str | None) -> Taxonomy:
    path = Path(path)
    if not path.is_file():
        raise TaxonomyError(f"taxonomy file not found: {path}")
    return parse_taxonomy(path.read_text(encoding="utf-8"), domain, source=str(path))


def merge_taxonomies(*taxonomies: Taxonomy) -> Taxonomy:
    """Combine per-domain taxonomies for articles of unknown domain.

    A sub-narrative appearing in several inputs under the same parent (the
    ``Other`` row, typically) is kept once.
    """
    seen: dict[str, str] = {}
    entries = []
    for tax in taxonomies:
        for e in tax.entries:
            if e.sub_id in seen and seen[e.sub_id] == e.main_id:
                continue
            seen[e.sub_id] = e.main_id
            entries.append(e)
    return Taxonomy(None, tuple(entries))


def domain_of_label(label: str) -> str | None:
    for d in DOMAINS:
        if label.startswith(d + ":"):
            return d
    return None
