"""Article and annotation ingestion, train/validation split, label encoding."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .taxonomy import OTHER, Taxonomy, domain_of_label

log = logging.getLogger(__name__)

LANGUAGES = ("BG", "EN", "HI", "PT", "RU")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Article:
    id: str
    language: str
    domain: str  # "CC" | "URW" | "unknown"
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"article {self.id!r} is empty")
        if self.language not in LANGUAGES:
            raise CorpusError(f"article {self.id!r}: unsupported language {self.language!r}")


@dataclass(frozen=True)
class GoldAnnotation:
    article_id: str
    narratives: tuple[str, ...]
    sub_narratives: tuple[str, ...]

    def labels(self, level: str) -> tuple[str, ...]:
        if level == "main":
            return self.narratives
        if level == "sub":
            return self.sub_narratives
        raise ValueError(f"level must be 'main' or 'sub', got {level!r}")


@dataclass
class Dataset:
    articles: list[Article]
    gold: dict[str, GoldAnnotation] = field(default_factory=dict)
    issues: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.articles)

    def __iter__(self):
        return iter(self.articles)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        arts = [self.articles[i] for i in indices]
        return Dataset(arts, {a.id: self.gold[a.id] for a in arts if a.id in self.gold})

    def by_domain(self, domain: str, include_unknown: bool = True) -> "Dataset":
        keep = [
            i for i, a in enumerate(self.articles)
            if a.domain == domain or (include_unknown and a.domain == "unknown")
        ]
        return self.subset(keep)


@dataclass
class LabelMatrix:
    rows: list[str]
    columns: list[str]
    values: np.ndarray  # int8, shape (len(rows), len(columns))
    unencoded: list[tuple[str, str]] = field(default_factory=list)


def _dedup(items) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


def parse_label_list(field_text: str) -> tuple[str, ...]:
    labels = _dedup(s.strip() for s in field_text.split(";") if s.strip())
    return labels or (OTHER,)


def infer_domain(labels) -> str:
    """CC/URW when every prefixed label agrees, otherwise ``unknown``."""
    domains = {domain_of_label(lab) for lab in labels if lab != OTHER}
    if len(domains) == 1 and None not in domains:
        return domains.pop()
    return "unknown"


def language_from_name(name: str, default: str = "EN") -> str:
    prefix = name.split("_", 1)[0].upper()
    return prefix if prefix in LANGUAGES and "_" in name else default


def read_annotations(path: str | Path) -> list[tuple[str, GoldAnnotation]]:
    """Parse ``<filename>\\t<narratives>\\t<subs>`` lines, in file order."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"annotations file not found: {path}")
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) != 3:
            raise CorpusError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(cells)}")
        fname = cells[0].strip()
        out.append((fname, GoldAnnotation(Path(fname).stem, parse_label_list(cells[1]),
                                          parse_label_list(cells[2]))))
    return out


def write_annotations(path: str | Path, rows) -> None:
    """Write ``(filename, narratives, subs)`` triples in the annotations format."""
    lines = []
    for fname, narrs, subs in rows:
        lines.append(f"{fname}\t{';'.join(narrs) or OTHER}\t{';'.join(subs) or OTHER}")
    Path(path).write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")


def read_article(path: Path, default_language: str = "EN", domain: str = "unknown") -> Article:
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read article {path.name}: {exc}") from exc
    if not text.strip():
        raise CorpusError(f"article {path.name} is empty")
    return Article(path.stem, language_from_name(path.name, default_language), domain, text)


def load_corpus(articles_dir, annotations, taxonomy_cc: Taxonomy, taxonomy_urw: Taxonomy,
                default_language: str = "EN") -> Dataset:
    articles_dir = Path(articles_dir)
    taxonomies = {"CC": taxonomy_cc, "URW": taxonomy_urw}
    articles, gold, issues = [], {}, []
    for fname, ann in read_annotations(annotations):
        path = articles_dir / fname
        if not path.is_file():
            raise CorpusError(f"annotation references missing article file {fname}")
        domain = infer_domain(ann.narratives + ann.sub_narratives)
        art = read_article(path, default_language, domain)
        if domain in taxonomies:
            for v in taxonomies[domain].validate_labelset(ann.narratives, ann.sub_narratives):
                issues.append(f"{fname}: {v}")
        articles.append(art)
        gold[art.id] = ann
    for msg in issues:
        log.warning("label issue: %s", msg)
    return Dataset(articles, gold, issues)


def load_articles(articles_dir, default_language: str = "EN") -> list[Article]:
    """Unannotated articles (``*.txt``) for inference, sorted by filename."""
    articles_dir = Path(articles_dir)
    if not articles_dir.is_dir():
        raise CorpusError(f"articles directory not found: {articles_dir}")
    paths = sorted(articles_dir.glob("*.txt"))
    if not paths:
        raise CorpusError(f"no .txt articles in {articles_dir}")
    return [read_article(p, default_language) for p in paths]


def split(d: Dataset, ratio: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then prefix split; each part keeps dataset order."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n = len(d)
    if n == 0:
        raise CorpusError("cannot split an empty dataset")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    n_train = int(math.floor(ratio * n + 0.5))
    train_idx = sorted(order[:n_train])
    val_idx = sorted(order[n_train:])
    if not train_idx or not val_idx:
        log.warning("split of %d articles at %.2f leaves an empty partition", n, ratio)
    return d.subset(train_idx), d.subset(val_idx)


def encode_labels(d: Dataset, vocab: Sequence[str], level: str) -> LabelMatrix:
    vocab = list(vocab)
    if not vocab:
        raise ValueError("empty vocabulary")
    if len(set(vocab)) != len(vocab):
        raise ValueError("duplicate vocabulary entries")
    col = {lab: j for j, lab in enumerate(vocab)}
    values = np.zeros((len(d), len(vocab)), dtype=np.int8)
    unencoded = []
    for i, art in enumerate(d.articles):
        ann = d.gold.get(art.id)
        for lab in ann.labels(level) if ann else ():
            if lab in col:
                values[i, col[lab]] = 1
            else:
                unencoded.append((art.id, lab))
    return LabelMatrix([a.id for a in d.articles], vocab, values, unencoded)
