"""Lexicon types and the sectioned text file format that feeds the generator.

The file format is deliberately plain so it can be edited by hand:

    # comment
    [nouns]             sg | pl
    [pp1] / [pp2]       sg | pl
    [verbs-agreement]   sg form | pl form
    [verbs-caus]        lemma | active | passive | intransitive
    [verbs-od]          lemma | active | passive | intransitive
    [agents]            one NP per line
    [patients]          one NP per line
    [p-nps]             one PP per line
    [da-nps]            one "da"-PP per line

Verb forms are stored fully inflected so no morphology lives in code; the
only surface rule applied by the generator is the "da" + article
contraction for agentive by-phrases (dal/dallo/dalla/dall'/dai/dagli/dalle).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

from .data import Role, Task


class LexiconError(ValueError):
    """Malformed lexicon file."""


class InadequateLexiconError(ValueError):
    """Lexicon lacks entries for a slot required by the requested task."""

    def __init__(self, task: Task, slot: str):
        self.task = task
        self.slot = slot
        super().__init__(f"lexicon has no entries for slot '{slot}' (needed by task {task.value})")


@dataclass(frozen=True)
class NounEntry:
    sg: str
    pl: str
    roles: tuple[str, ...] = ("NP-subj",)


@dataclass(frozen=True)
class PpModifier:
    sg: str
    pl: str
    slot: Role  # Role.PP1 or Role.PP2


@dataclass(frozen=True)
class AgreementVerb:
    sg_form: str
    pl_form: str


@dataclass(frozen=True)
class AlternationVerb:
    lemma: str
    verb_class: Task  # Task.CAUS or Task.OD
    active_form: str
    passive_form: str
    intransitive_form: str


@dataclass
class Lexicon:
    """All lexical material the generator can draw from."""

    nouns: list[NounEntry] = field(default_factory=list)
    pp_modifiers: list[PpModifier] = field(default_factory=list)
    agr_verbs: list[AgreementVerb] = field(default_factory=list)
    alt_verbs: list[AlternationVerb] = field(default_factory=list)
    agents: list[str] = field(default_factory=list)
    patients: list[str] = field(default_factory=list)
    p_nps: list[str] = field(default_factory=list)
    da_nps: list[str] = field(default_factory=list)

    def pp_for(self, slot: Role) -> list[PpModifier]:
        return [m for m in self.pp_modifiers if m.slot is slot]

    def alt_verbs_for(self, task: Task) -> list[AlternationVerb]:
        return [v for v in self.alt_verbs if v.verb_class is task]

    def validate_for(self, task: Task) -> None:
        """Raise InadequateLexiconError naming the first missing slot."""
        if task is Task.AGREEMENT:
            required = [
                ("nouns", self.nouns),
                ("pp1", self.pp_for(Role.PP1)),
                ("pp2", self.pp_for(Role.PP2)),
                ("verbs-agreement", self.agr_verbs),
            ]
        else:
            required = [
                (f"verbs-{task.value}", self.alt_verbs_for(task)),
                ("agents", self.agents),
                ("patients", self.patients),
                ("p-nps", self.p_nps),
                ("da-nps", self.da_nps),
            ]
        for slot, entries in required:
            if not entries:
                raise InadequateLexiconError(task, slot)


# Ordered by prefix length so "l'" wins over "la "/"lo " never applies.
_DA_CONTRACTIONS = [
    ("l'", "dall'"),
    ("il ", "dal "),
    ("lo ", "dallo "),
    ("la ", "dalla "),
    ("i ", "dai "),
    ("gli ", "dagli "),
    ("le ", "dalle "),
]


def contract_da(np_text: str) -> str:
    """Prefix an NP with the agentive "da", contracting with its article."""
    lowered = np_text.lower()
    for article, contracted in _DA_CONTRACTIONS:
        if lowered.startswith(article):
            return contracted + np_text[len(article):]
    return "da " + np_text


def _fields(line: str, n: int, path: str, lineno: int) -> list[str]:
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != n or any(not p for p in parts):
        raise LexiconError(f"{path}:{lineno}: expected {n} non-empty '|'-separated fields, got {line!r}")
    return parts


_SECTIONS = {
    "nouns", "pp1", "pp2", "verbs-agreement", "verbs-caus", "verbs-od",
    "agents", "patients", "p-nps", "da-nps",
}


def parse_lexicon(text: str, path: str = "<string>") -> Lexicon:
    lex = Lexicon()
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise LexiconError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise LexiconError(f"{path}:{lineno}: entry before any section header")
        if section == "nouns":
            sg, pl = _fields(line, 2, path, lineno)
            lex.nouns.append(NounEntry(sg, pl))
        elif section in ("pp1", "pp2"):
            sg, pl = _fields(line, 2, path, lineno)
            slot = Role.PP1 if section == "pp1" else Role.PP2
            lex.pp_modifiers.append(PpModifier(sg, pl, slot))
        elif section == "verbs-agreement":
            sg, pl = _fields(line, 2, path, lineno)
            lex.agr_verbs.append(AgreementVerb(sg, pl))
        elif section in ("verbs-caus", "verbs-od"):
            lemma, active, passive, intrans = _fields(line, 4, path, lineno)
            verb_class = Task.CAUS if section == "verbs-caus" else Task.OD
            lex.alt_verbs.append(AlternationVerb(lemma, verb_class, active, passive, intrans))
        elif section == "agents":
            lex.agents.append(line)
        elif section == "patients":
            lex.patients.append(line)
        elif section == "p-nps":
            lex.p_nps.append(line)
        elif section == "da-nps":
            lex.da_nps.append(line)
    return lex


def load_lexicon(path: str | Path) -> Lexicon:
    p = Path(path)
    return parse_lexicon(p.read_text(encoding="utf-8"), str(p))


def demo_lexicon() -> Lexicon:
    """The small Italian demonstration lexicon shipped with the package."""
    text = importlib.resources.files("blmkit").joinpath("lexica/demo.lex").read_text("utf-8")
    return parse_lexicon(text, "blmkit/lexica/demo.lex")
