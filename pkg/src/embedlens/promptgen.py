"""Combinatorial prompt grammar: one unique prompt per generated image.

A prompt is assembled from seven seeded draws over six modifier lists
(the extent list is drawn twice)::

    <looks>, <extent1> <typical>, <extent2> <size> <class_name>, <location>. <style>.

Empty options are legal in any slot; runs of whitespace left behind by an
empty slot collapse to a single space. The default lexicon ships as an
editable JSON config and deliberately contains no color, texture, or feel
adjectives, which would be inappropriate for some objects.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import ClassLabel
from .seeding import derive_rng, derive_seed
from .errors import IoFailure, LexiconTooSmall, ManifestParse, ValidationError

SLOT_NAMES = ("looks", "extent1", "typical", "extent2", "size", "location", "style")
LEXICON_FIELDS = ("looks", "extent", "typical", "size", "location", "style")

# Retries per record before concluding the lexicon cannot supply another
# distinct prompt (text collisions despite nominal capacity).
MAX_UNIQUENESS_RETRIES = 1000


@dataclass(frozen=True)
class ModifierLexicon:
    """Option lists for the six modifier slots (extent feeds two draws)."""

    looks: tuple[str, ...]
    extent: tuple[str, ...]
    typical: tuple[str, ...]
    size: tuple[str, ...]
    location: tuple[str, ...]
    style: tuple[str, ...]

    def __post_init__(self):
        for field in LEXICON_FIELDS:
            options = getattr(self, field)
            if not options:
                raise ValidationError(f"lexicon list '{field}' is empty")
            if len(set(options)) != len(options):
                raise ValidationError(f"lexicon list '{field}' has duplicate options")

    @property
    def slot_options(self) -> tuple[tuple[str, ...], ...]:
        return (
            self.looks, self.extent, self.typical, self.extent,
            self.size, self.location, self.style,
        )

    @property
    def combinations(self) -> int:
        """Number of distinct choice tuples (extent counted twice)."""
        total = 1
        for options in self.slot_options:
            total *= len(options)
        return total

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModifierLexicon":
        missing = [f for f in LEXICON_FIELDS if f not in data]
        if missing:
            raise ManifestParse(f"lexicon is missing lists: {missing}")
        kwargs = {}
        for field in LEXICON_FIELDS:
            options = data[field]
            if not isinstance(options, list) or not all(
                isinstance(o, str) for o in options
            ):
                raise ManifestParse(f"lexicon list '{field}' must be a string array")
            kwargs[field] = tuple(options)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {field: list(getattr(self, field)) for field in LEXICON_FIELDS}


def load_lexicon(path) -> ModifierLexicon:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read lexicon {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParse(f"{p} is not valid JSON: {exc}") from exc
    return ModifierLexicon.from_dict(data)


def default_lexicon() -> ModifierLexicon:
    text = (
        resources.files("embedlens").joinpath("data/default_lexicon.json").read_text()
    )
    return ModifierLexicon.from_dict(json.loads(text))


@dataclass(frozen=True)
class PromptRecord:
    """One generated prompt; the text is reproducible from
    (lexicon, class name, seed)."""

    class_id: int
    class_name: str
    seed: int
    prompt: str
    choices: tuple[str, ...]


def _collapse(text: str) -> str:
    return " ".join(text.split())


def assemble_prompt(class_name: str, choices: Sequence[str]) -> str:
    """Render a choice tuple through the grammar template."""
    if len(choices) != len(SLOT_NAMES):
        raise ValidationError(
            f"expected {len(SLOT_NAMES)} choices, got {len(choices)}"
        )
    looks, e1, typical, e2, size, location, style = choices
    raw = (
        f"{looks}, {e1} {typical}, {e2} {size} {class_name}, {location}. {style}."
    )
    return _collapse(raw)


def generate_prompt(
    class_name: str, lexicon: ModifierLexicon, seed: int, class_id: int = 0
) -> PromptRecord:
    """Draw one option per slot with a seeded generator and assemble."""
    if not class_name:
        raise ValidationError("class name must be non-empty")
    rng = derive_rng(seed)
    choices = tuple(
        options[int(rng.integers(len(options)))] for options in lexicon.slot_options
    )
    return PromptRecord(
        class_id, class_name, seed, assemble_prompt(class_name, choices), choices
    )


def _record_seed(master_seed: int, class_id: int, index: int, attempt: int) -> int:
    return derive_seed(master_seed, class_id, index, attempt)


def generate_prompt_set(
    labels: Sequence[ClassLabel],
    per_class: int,
    lexicon: ModifierLexicon,
    master_seed: int,
) -> list[PromptRecord]:
    """``per_class`` records per class, with distinct prompt text within
    each class.

    Record seeds derive from (master seed, class id, index); collisions
    are resolved by rejection sampling with a retry cap, after which
    LexiconTooSmall is raised. The capacity check up front compares
    ``per_class`` against the number of distinct choice tuples.
    """
    if per_class < 1:
        raise ValidationError(f"per_class must be >= 1, got {per_class}")
    if lexicon.combinations < per_class:
        raise LexiconTooSmall(
            f"lexicon yields {lexicon.combinations} distinct combinations, "
            f"fewer than the {per_class} requested per class"
        )
    records: list[PromptRecord] = []
    for label in labels:
        seen: set[str] = set()
        for index in range(per_class):
            for attempt in range(MAX_UNIQUENESS_RETRIES):
                record = generate_prompt(
                    label.name,
                    lexicon,
                    _record_seed(master_seed, label.id, index, attempt),
                    class_id=label.id,
                )
                if record.prompt not in seen:
                    break
            else:
                raise LexiconTooSmall(
                    f"could not produce {per_class} distinct prompts for class "
                    f"{label.id} ({len(seen)} found); grow the lexicon"
                )
            seen.add(record.prompt)
            records.append(record)
    return records


# Delimiter that follows each slot in the raw template; the last slot's
# class-name insertion is handled explicitly during parsing.
_SLOT_DELIMS = (", ", " ", ", ", " ", None, ". ", ".")


def parse_prompt(
    prompt: str, class_name: str, lexicon: ModifierLexicon
) -> tuple[str, ...]:
    """Recover the unique choice tuple that assembles into ``prompt``.

    Depth-first search over the slot options with prefix pruning; raises
    when the prompt does not parse or parses ambiguously under the
    lexicon.
    """
    matches: list[tuple[str, ...]] = []
    slot_options = lexicon.slot_options

    def descend(slot: int, raw: str, chosen: tuple[str, ...]) -> None:
        if slot == len(slot_options):
            if _collapse(raw) == prompt:
                matches.append(chosen)
            return
        for option in slot_options[slot]:
            delim = _SLOT_DELIMS[slot]
            if delim is None:
                piece = f"{option} {class_name}, "
            else:
                piece = option + delim
            extended = raw + piece
            if prompt.startswith(_collapse(extended)):
                descend(slot + 1, extended, chosen + (option,))

    descend(0, "", ())
    if not matches:
        raise ValidationError(
            f"prompt does not parse under the lexicon: {prompt!r}"
        )
    if len(matches) > 1:
        raise ValidationError(
            f"prompt parses ambiguously ({len(matches)} ways): {prompt!r}"
        )
    return matches[0]


def write_prompt_manifest(records: Sequence[PromptRecord], path) -> None:
    """Persist records as JSON lines:
    {class_id, class_name, seed, prompt, choices}."""
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w") as fh:
            for record in records:
                fh.write(json.dumps({
                    "class_id": record.class_id,
                    "class_name": record.class_name,
                    "seed": record.seed,
                    "prompt": record.prompt,
                    "choices": list(record.choices),
                }) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write prompt manifest {p}: {exc}") from exc


def read_prompt_manifest(path) -> list[PromptRecord]:
    p = Path(path)
    try:
        lines = p.read_text().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read prompt manifest {p}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            records.append(PromptRecord(
                int(data["class_id"]), str(data["class_name"]),
                int(data["seed"]), str(data["prompt"]),
                tuple(data["choices"]),
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ManifestParse(f"{p}:{lineno}: bad manifest row: {exc}") from exc
    return records
