"""Synthetic forum-post corpora for tests and demos.

Both generators plant class-specific marker words, so a model with any
capacity can separate the classes; the point is exercising the
pipeline, not the difficulty of the task.
"""

from __future__ import annotations

import csv

import numpy as np

from .corpus import RawPost
from .errors import ConfigurationError

_URGENT_MARKERS = ("deadline", "tomorrow", "blocked", "failing")
_CALM_MARKERS = ("thanks", "interesting", "sharing", "enjoyed")
_FILLER = (
    "the", "lecture", "quiz", "assignment", "video", "forum", "week",
    "question", "grade", "submit", "course", "page", "notes", "section",
)


def _compose(gen: np.random.Generator, markers: tuple[str, ...], length: int) -> str:
    words = list(gen.choice(_FILLER, size=length))
    words[int(gen.integers(0, length))] = str(gen.choice(markers))
    return " ".join(words)


def synthetic_posts(
    n: int,
    positive_fraction: float,
    seed: int = 0,
    min_words: int = 3,
    max_words: int = 9,
) -> list[RawPost]:
    """n posts, a positive_fraction of them urgent (urgency 6) and the
    rest calm (urgency 2), each carrying one class marker word."""
    if not 0.0 < positive_fraction < 1.0:
        raise ConfigurationError(
            f"positive_fraction must be in (0, 1), got {positive_fraction}"
        )
    if n < 2:
        raise ConfigurationError("need at least 2 posts")
    gen = np.random.default_rng(seed)
    n_pos = max(1, round(n * positive_fraction))
    posts = []
    for i in range(n):
        urgent = i < n_pos
        length = int(gen.integers(min_words, max_words + 1))
        text = _compose(gen, _URGENT_MARKERS if urgent else _CALM_MARKERS, length)
        posts.append(RawPost(text=text, urgency=6.0 if urgent else 2.0))
    order = gen.permutation(n)
    return [posts[i] for i in order]


def separable_corpus(n: int = 64, seed: int = 0) -> list[RawPost]:
    """Balanced corpus for the overfit check."""
    return synthetic_posts(n, positive_fraction=0.5, seed=seed)


def imbalanced_corpus(n: int = 2000, seed: int = 0) -> list[RawPost]:
    """19% positive, mirroring the roughly 1-in-5 urgency rate of real
    forum data."""
    return synthetic_posts(n, positive_fraction=0.19, seed=seed)


def write_posts_csv(path: str, posts: list[RawPost]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["text", "urgency", "course_id"])
        for p in posts:
            writer.writerow([p.text, p.urgency, p.course_id])
