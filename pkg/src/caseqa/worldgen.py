"""Seeded synthetic world generator: KB, aliases, and question datasets.

The world is drawn from a latent geometric model: every entity gets a latent
coordinate clustered by type, and every relation group gets a latent
translation; an edge connects each subject to its nearest object-pool
entities under the group's translation.  Relations that share a group share
the translation, which plants discoverable near-duplicate relations:

* split pairs - the subject pool is halved and each half is labeled with one
  member of the pair, so the partner label is always absent at a given
  subject (the revision benchmark corrupts gold forms toward the partner);
* parallel pairs - every subject carries both labels over the same objects;
  the incomplete KB drops the primary label for a sampled fraction of
  subjects, leaving the shadow label as the recovery route.

Edges are binary only; n-ary events are out of scope.  Everything is a pure
function of the config: the same seed yields byte-identical files.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .kb import EntityId, KnowledgeBase, Literal, RelationId, Triple
from .linker import Mention
from .logical_form import (
    LogicalForm,
    OrderLimit,
    TriplePattern,
    Variable,
    execute,
    find_assignments,
    format_lf,
    parse,
    relations_of,
)

__all__ = [
    "RelationSchema",
    "QuestionTemplate",
    "WorldConfig",
    "World",
    "WorldError",
    "DatasetExample",
    "SplitSpec",
    "Dataset",
    "generate_world",
    "generate_dataset",
    "make_injection_examples",
    "write_world",
    "write_dataset",
    "load_dataset",
    "load_examples",
    "answers_to_json",
    "answers_from_json",
]


class WorldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schema

@dataclass(frozen=True)
class RelationSchema:
    name: str
    subject_type: str
    object_type: str  # entity type, or literal kind when literal is set
    fanout: tuple[int, int]
    literal: Optional[str] = None  # "date" | "number"
    group: Optional[str] = None  # shared-translation group
    pairing: Optional[str] = None  # split_a | split_b | parallel_primary | parallel_shadow
    templates: tuple[str, ...] = ()

    @property
    def relation(self) -> RelationId:
        return RelationId(self.name)


DEFAULT_RELATIONS: tuple[RelationSchema, ...] = (
    # people
    RelationSchema(
        "people.person.sibling_s", "person", "person", (1, 3), group="sibling", pairing="split_a",
        templates=(
            "what is the sibling of {A}?",
            "which sibling does {A} have?",
        ),
    ),
    RelationSchema(
        "family.relatives.sibling_of", "person", "person", (1, 3), group="sibling", pairing="split_b",
        templates=(
            "what is the sibling of {A}?",
            "which sibling does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.place_of_birth", "person", "city", (1, 1), group="birthcity", pairing="parallel_primary",
        templates=(
            "what is the birth place of {A}?",
            "which birth place does {A} have?",
        ),
    ),
    RelationSchema(
        "biography.life_record.native_city", "person", "city", (1, 1), group="birthcity", pairing="parallel_shadow",
    ),
    RelationSchema(
        "people.person.profession", "person", "profession", (1, 2),
        templates=(
            "what is the profession of {A}?",
            "which profession does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.date_of_birth", "person", "date", (1, 1), literal="date",
        templates=(
            "what is the birth date of {A}?",
            "which birth date does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.spouse_s", "person", "person", (1, 1),
        templates=(
            "what is the spouse of {A}?",
            "which spouse does {A} have?",
        ),
    ),
    # countries
    RelationSchema(
        "location.country.languages_spoken", "country", "language", (1, 3),
        templates=(
            "what is the spoken language of {A}?",
            "which spoken language does {A} have?",
        ),
    ),
    RelationSchema(
        "location.country.capital", "country", "city", (1, 1),
        templates=(
            "what is the capital of {A}?",
            "which capital does {A} have?",
        ),
    ),
    RelationSchema(
        "location.country.currency_used", "country", "currency", (1, 1), group="tender", pairing="parallel_primary",
        templates=(
            "what is the currency of {A}?",
            "which currency does {A} have?",
        ),
    ),
    RelationSchema(
        "economy.national_economy.money_unit", "country", "currency", (1, 1), group="tender", pairing="parallel_shadow",
    ),
    RelationSchema(
        "location.country.borders", "country", "country", (1, 3), group="border", pairing="split_a",
        templates=(
            "what is the border of {A}?",
            "which border does {A} have?",
        ),
    ),
    RelationSchema(
        "geography.adjacency.shares_border_with", "country", "country", (1, 3), group="border", pairing="split_b",
        templates=(
            "what is the border of {A}?",
            "which border does {A} have?",
        ),
    ),
    # cities
    RelationSchema(
        "location.city.nation", "city", "country", (1, 1),
        templates=(
            "what is the nation of {A}?",
            "which nation does {A} have?",
        ),
    ),
    # films
    RelationSchema(
        "film.film.directed_by", "film", "person", (1, 1), group="director", pairing="split_a",
        templates=(
            "who directed {A}?",
            "which person directed {A}?",
        ),
    ),
    RelationSchema(
        "film.film.helmed_by", "film", "person", (1, 1), group="director", pairing="split_b",
        templates=(
            "who helmed {A}?",
            "which person helmed {A}?",
        ),
    ),
    RelationSchema(
        "film.film.starring", "film", "person", (1, 3), group="cast", pairing="split_a",
        templates=(
            "who is starring in {A}?",
            "name the people starring in {A}",
        ),
    ),
    RelationSchema(
        "film.film.cast_member", "film", "person", (1, 3), group="cast", pairing="split_b",
        templates=(
            "who is a cast member of {A}?",
            "which cast member appears in {A}?",
        ),
    ),
    RelationSchema(
        "film.film.release_year", "film", "number", (1, 1), literal="number",
        templates=(
            "what is the release year of {A}?",
            "which release year does {A} have?",
        ),
    ),
    # scholars
    RelationSchema(
        "academia.scholar.advisor", "scholar", "scholar", (1, 1),
        templates=(
            "what is the advisor of {A}?",
            "which advisor does {A} have?",
        ),
    ),
    RelationSchema(
        "academia.scholar.mentee", "scholar", "scholar", (1, 2),
        templates=(
            "what is the mentee of {A}?",
            "which mentee does {A} have?",
        ),
    ),
    RelationSchema(
        "academia.scholar.attends_school", "scholar", "university", (1, 1),
        templates=(
            "what is the school of {A}?",
            "which school does {A} have?",
        ),
    ),
    RelationSchema(
        "academia.scholar.research_area", "scholar", "field", (1, 1),
        templates=(
            "what is the research area of {A}?",
            "which research area does {A} have?",
        ),
    ),
    # single-hop only; these widen the relation vocabulary
    RelationSchema(
        "people.person.residence_city", "person", "city", (1, 1),
        templates=(
            "what is the residence of {A}?",
            "which residence does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.citizenship", "person", "country", (1, 1),
        templates=(
            "what is the country of {A}?",
            "which country does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.native_language", "person", "language", (1, 1),
        templates=(
            "what is the language of {A}?",
            "which language does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.employer", "person", "university", (1, 1),
        templates=(
            "what is the employer of {A}?",
            "which employer does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.burial_place", "person", "city", (1, 1),
        templates=(
            "what is the burial place of {A}?",
            "which burial place does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.godparent", "person", "person", (1, 1),
        templates=(
            "what is the godparent of {A}?",
            "which godparent does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.filming_location", "film", "city", (1, 1),
        templates=(
            "what is the filming site of {A}?",
            "which filming site does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.production_country", "film", "country", (1, 1),
        templates=(
            "what is the country of {A}?",
            "which country does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.dialogue_language", "film", "language", (1, 1),
        templates=(
            "what is the language of {A}?",
            "which language does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.prequel", "film", "film", (1, 1),
        templates=(
            "what is the prequel of {A}?",
            "which prequel does {A} have?",
        ),
    ),
    RelationSchema(
        "location.city.sister_city", "city", "city", (1, 1),
        templates=(
            "what is the sister city of {A}?",
            "which sister city does {A} have?",
        ),
    ),
    RelationSchema(
        "location.city.mayor", "city", "person", (1, 1),
        templates=(
            "what is the leader of {A}?",
            "which leader does {A} have?",
        ),
    ),
    RelationSchema(
        "location.country.largest_city", "country", "city", (1, 1),
        templates=(
            "what is the largest city of {A}?",
            "which largest city does {A} have?",
        ),
    ),
    RelationSchema(
        "location.country.head_of_state", "country", "person", (1, 1),
        templates=(
            "what is the leader of {A}?",
            "which leader does {A} have?",
        ),
    ),
    RelationSchema(
        "academia.scholar.thesis_topic", "scholar", "field", (1, 1),
        templates=(
            "what is the thesis topic of {A}?",
            "which thesis topic does {A} have?",
        ),
    ),
    RelationSchema(
        "academia.scholar.graduate_school", "scholar", "university", (1, 1),
        templates=(
            "what is the graduate institute of {A}?",
            "which graduate institute does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.hometown", "person", "city", (1, 1),
        templates=(
            "what is the hometown of {A}?",
            "which hometown does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.wedding_city", "person", "city", (1, 1),
        templates=(
            "what is the ceremony city of {A}?",
            "which ceremony city does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.cousin", "person", "person", (1, 1),
        templates=(
            "what is the cousin of {A}?",
            "which cousin does {A} have?",
        ),
    ),
    RelationSchema(
        "family.relatives.godmother", "person", "person", (1, 1),
        templates=(
            "what is the godmother of {A}?",
            "which godmother does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.alma_mater", "person", "university", (1, 1),
        templates=(
            "what is the alma mater of {A}?",
            "which alma mater does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.second_language", "person", "language", (1, 1),
        templates=(
            "what is the second language of {A}?",
            "which second language does {A} have?",
        ),
    ),
    RelationSchema(
        "people.person.debut_film", "person", "film", (1, 1),
        templates=(
            "what is the debut film of {A}?",
            "which debut film does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.sequel", "film", "film", (1, 1),
        templates=(
            "what is the sequel of {A}?",
            "which sequel does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.cinematographer", "film", "person", (1, 1),
        templates=(
            "what is the cinematographer of {A}?",
            "which cinematographer does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.composer", "film", "person", (1, 1),
        templates=(
            "what is the composer of {A}?",
            "which composer does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.editor", "film", "person", (1, 1),
        templates=(
            "what is the editor of {A}?",
            "which editor does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.premiere_city", "film", "city", (1, 1),
        templates=(
            "what is the ceremony city of {A}?",
            "which ceremony city does {A} have?",
        ),
    ),
    RelationSchema(
        "film.film.budget", "film", "number", (1, 1), literal="number",
        templates=(
            "what is the budget of {A}?",
            "which budget does {A} have?",
        ),
    ),
    RelationSchema(
        "location.city.founding_year", "city", "number", (1, 1), literal="number",
        templates=(
            "what is the founding year of {A}?",
            "which founding year does {A} have?",
        ),
    ),
    RelationSchema(
        "location.city.official_language", "city", "language", (1, 1),
        templates=(
            "what is the official language of {A}?",
            "which official language does {A} have?",
        ),
    ),
    RelationSchema(
        "location.city.twin_town", "city", "city", (1, 1),
        templates=(
            "what is the twin town of {A}?",
            "which twin town does {A} have?",
        ),
    ),
    RelationSchema(
        "location.country.founding_year", "country", "number", (1, 1), literal="number",
        templates=(
            "what is the founding year of {A}?",
            "which founding year does {A} have?",
        ),
    ),
    RelationSchema(
        "academia.scholar.department", "scholar", "field", (1, 1),
        templates=(
            "what is the department of {A}?",
            "which department does {A} have?",
        ),
    ),
    RelationSchema(
        "academia.scholar.undergrad_school", "scholar", "university", (1, 1),
        templates=(
            "what is the undergrad campus of {A}?",
            "which undergrad campus does {A} have?",
        ),
    ),
)

_TYPE_FRACTIONS = {
    "person": 0.45,
    "scholar": 0.10,
    "film": 0.125,
    "city": 0.11,
    "country": 0.05,
    "language": 0.04,
    "currency": 0.035,
    "profession": 0.025,
    "university": 0.035,
    "field": 0.03,
}

_TYPE_LETTER = {
    "person": "p", "scholar": "s", "film": "f", "city": "y", "country": "c",
    "language": "l", "currency": "u", "profession": "j", "university": "v", "field": "d",
}


@dataclass(frozen=True)
class QuestionTemplate:
    id: str
    kind: str  # hop1 | hop2 | conj | superlative
    text: str  # contains {A} and optionally {B}
    patterns: tuple[tuple[str, str, str], ...]  # terms: "A","B","?x","?y","?d" or relation names
    select: str = "?x"
    order: Optional[tuple[str, str, int]] = None  # (var, direction, limit)

    @property
    def anchor_slots(self) -> tuple[str, ...]:
        slots = []
        for p in self.patterns:
            for term in (p[0], p[2]):
                if term in ("A", "B") and term not in slots:
                    slots.append(term)
        return tuple(slots)

    def relation_names(self) -> frozenset[str]:
        return frozenset(p[1] for p in self.patterns)


def _hop1_templates(schemas: Sequence[RelationSchema]) -> list[QuestionTemplate]:
    out = []
    for schema in schemas:
        for i, text in enumerate(schema.templates):
            out.append(
                QuestionTemplate(
                    id=f"h1.{schema.name}.{i}",
                    kind="hop1",
                    text=text,
                    patterns=(("A", schema.name, "?x"),),
                )
            )
    return out


MULTI_TEMPLATES: tuple[QuestionTemplate, ...] = (
    QuestionTemplate(
        "h2.birth-country", "hop2",
        "what is the nation of the birth place of {A}?",
        (("A", "people.person.place_of_birth", "?y"), ("?y", "location.city.nation", "?x")),
    ),
    QuestionTemplate(
        "h2.starring-director", "hop2",
        "who directed the film starring {A}?",
        (("?y", "film.film.starring", "A"), ("?y", "film.film.directed_by", "?x")),
    ),
    QuestionTemplate(
        "h2.spouse-profession", "hop2",
        "what is the profession of the spouse of {A}?",
        (("A", "people.person.spouse_s", "?y"), ("?y", "people.person.profession", "?x")),
    ),
    QuestionTemplate(
        "h2.advisor-school", "hop2",
        "what is the school of the advisor of {A}?",
        (("A", "academia.scholar.advisor", "?y"), ("?y", "academia.scholar.attends_school", "?x")),
    ),
    QuestionTemplate(
        "h2.city-language", "hop2",
        "which language is spoken in the nation of {A}?",
        (("A", "location.city.nation", "?y"), ("?y", "location.country.languages_spoken", "?x")),
    ),
    QuestionTemplate(
        "h2.border-capital", "hop2",
        "what is the capital of the country that borders {A}?",
        (("A", "location.country.borders", "?y"), ("?y", "location.country.capital", "?x")),
    ),
    QuestionTemplate(
        "h2.mentee-area", "hop2",
        "what is the research area of the mentee of {A}?",
        (("A", "academia.scholar.mentee", "?y"), ("?y", "academia.scholar.research_area", "?x")),
    ),
    QuestionTemplate(
        "h2.mentee-school", "hop2",
        "what is the school of the mentee of {A}?",
        (("A", "academia.scholar.mentee", "?y"), ("?y", "academia.scholar.attends_school", "?x")),
    ),
    QuestionTemplate(
        "h2.residence-twin", "hop2",
        "what is the twin town of the residence of {A}?",
        (("A", "people.person.residence_city", "?y"), ("?y", "location.city.twin_town", "?x")),
    ),
    QuestionTemplate(
        "h2.sibling-profession", "hop2",
        "what is the profession of the sibling of {A}?",
        (("A", "people.person.sibling_s", "?y"), ("?y", "people.person.profession", "?x")),
    ),
    QuestionTemplate(
        "h2.spouse-birthdate", "hop2",
        "what is the date of birth of the spouse of {A}?",
        (("A", "people.person.spouse_s", "?y"), ("?y", "people.person.date_of_birth", "?x")),
    ),
    QuestionTemplate(
        "h2.residence-location", "hop2",
        "what is the nation of the residence of {A}?",
        (("A", "people.person.residence_city", "?y"), ("?y", "location.city.nation", "?x")),
    ),
    QuestionTemplate(
        "cj.profession-birth", "conj",
        "who has the profession {A} and the place of birth {B}?",
        (("?x", "people.person.profession", "A"), ("?x", "people.person.place_of_birth", "B")),
    ),
    QuestionTemplate(
        "cj.starring-director", "conj",
        "which film is starring {A} and directed by {B}?",
        (("?x", "film.film.starring", "A"), ("?x", "film.film.directed_by", "B")),
    ),
    QuestionTemplate(
        "cj.spouse-profession", "conj",
        "who is the spouse of {A} and practices the profession {B}?",
        (("?x", "people.person.spouse_s", "A"), ("?x", "people.person.profession", "B")),
    ),
    QuestionTemplate(
        "cj.school-area", "conj",
        "which scholar has the school {A} and the research area {B}?",
        (("?x", "academia.scholar.attends_school", "A"), ("?x", "academia.scholar.research_area", "B")),
    ),
    QuestionTemplate(
        "cj.school-topic", "conj",
        "which scholar has the school {A} and the thesis topic {B}?",
        (("?x", "academia.scholar.attends_school", "A"), ("?x", "academia.scholar.thesis_topic", "B")),
    ),
    QuestionTemplate(
        "cj.border-currency", "conj",
        "which country borders {A} and uses the currency {B}?",
        (("?x", "location.country.borders", "A"), ("?x", "location.country.currency_used", "B")),
    ),
    QuestionTemplate(
        "sup.oldest-sibling", "superlative",
        "who is the oldest sibling of {A}?",
        (("A", "people.person.sibling_s", "?x"), ("?x", "people.person.date_of_birth", "?d")),
        order=("?d", "asc", 1),
    ),
    QuestionTemplate(
        "sup.first-film-directed", "superlative",
        "which film directed by {A} has the earliest release year?",
        (("?x", "film.film.directed_by", "A"), ("?x", "film.film.release_year", "?d")),
        order=("?d", "asc", 1),
    ),
    QuestionTemplate(
        "sup.first-film-starring", "superlative",
        "which film starring {A} has the earliest release year?",
        (("?x", "film.film.starring", "A"), ("?x", "film.film.release_year", "?d")),
        order=("?d", "asc", 1),
    ),
)

# templates whose relation combination is reserved for the novel-combination
# test split; every component relation still occurs in training templates. The
# valid-reserved combo exists so generator weights can be tuned on a
# compositional signal without touching the test combinations.
NOVEL_TEST_PREFIXES = ("h2.birth-country", "cj.school-area", "sup.first-film-directed")
NOVEL_VALID_PREFIXES = ("h2.residence-twin",)

_NOUN_RE = re.compile(r"^what is the (.+) of \{A\}\?$")


def _object_noun(schema: RelationSchema) -> Optional[str]:
    """The noun phrase the schema's primary template uses for its object."""
    if not schema.templates:
        return None
    m = _NOUN_RE.match(schema.templates[0])
    return m.group(1) if m else None


def _auto_multi_templates(schemas: Sequence[RelationSchema]) -> list[QuestionTemplate]:
    """Chain and conjunction templates derived from the schema type system.

    Templates pair type-compatible relations whose object nouns are known.
    The pairing is capped rather than exhaustive: each relation chains into at
    most two tails, and conjunctions ring near neighbours of a subject type,
    so one relation combination lands in the corpus with a handful of dataset
    items.  That is big enough for retrieval to find an exact-combination
    cluster and small enough that no single cluster can fill a retrieval
    budget on its own.

    Pairs already covered by a hand-written template keep that wording, and
    combinations reserved for the novel-combination splits stay out entirely.
    Self-pairs are skipped too: a relation chained onto itself would be the
    one multi-pattern template left standing when a split holds out that
    single relation.
    """
    reserved = {
        t.relation_names()
        for t in MULTI_TEMPLATES
        if any(t.id.startswith(p) for p in NOVEL_TEST_PREFIXES + NOVEL_VALID_PREFIXES)
    }
    hand_chains = set()
    hand_conj = set()
    for t in MULTI_TEMPLATES:
        if t.kind == "hop2" and t.patterns[0][0] == "A":
            hand_chains.add((t.patterns[0][1], t.patterns[1][1]))
        elif t.kind == "conj":
            hand_conj.add(t.relation_names())

    def short(name: str) -> str:
        return name.rsplit(".", 1)[-1]

    nouns = {s.name: _object_noun(s) for s in schemas}
    by_subject: dict[str, list[RelationSchema]] = {}
    for s in schemas:
        if nouns[s.name] is not None:
            by_subject.setdefault(s.subject_type, []).append(s)

    out: list[QuestionTemplate] = []
    heads = [s for s in schemas if nouns[s.name] is not None and s.literal is None]
    for i, r1 in enumerate(heads):
        partners = by_subject.get(r1.object_type, ())
        n = len(partners)
        picked: list[RelationSchema] = []
        for j in range(n):
            # probe from two starts half the ring apart so tails spread
            off = (j // 2 + (n // 2 if j % 2 else 0)) % n
            r2 = partners[(i + off) % n]
            pair = (r1.name, r2.name)
            if r2.name == r1.name or r2 in picked:
                continue
            if pair in hand_chains or frozenset(pair) in reserved:
                continue
            picked.append(r2)
            if len(picked) == 2:
                break
        for r2 in picked:
            out.append(
                QuestionTemplate(
                    f"h2.auto.{short(r1.name)}-{short(r2.name)}",
                    "hop2",
                    f"what is the {nouns[r2.name]} of the {nouns[r1.name]} of {{A}}?",
                    (("A", r1.name, "?y"), ("?y", r2.name, "?x")),
                )
            )
    for stype in sorted(by_subject):
        rels = [s for s in by_subject[stype] if s.literal is None]
        n = len(rels)
        seen_pairs: set[frozenset[str]] = set()
        for offset in (1, 2):
            if n <= offset:
                continue
            for i, r1 in enumerate(rels):
                r2 = rels[(i + offset) % n]
                combo = frozenset((r1.name, r2.name))
                if len(combo) < 2 or combo in seen_pairs or combo in hand_conj or combo in reserved:
                    continue
                seen_pairs.add(combo)
                a, b = sorted((r1, r2), key=lambda s: s.name)
                out.append(
                    QuestionTemplate(
                        f"cj.auto.{short(a.name)}-{short(b.name)}",
                        "conj",
                        f"which {stype} has the {nouns[a.name]} {{A}} and the {nouns[b.name]} {{B}}?",
                        (("?x", a.name, "A"), ("?x", b.name, "B")),
                    )
                )
    return out


KIND_WEIGHTS = {"hop1": 0.40, "hop2": 0.32, "conj": 0.20, "superlative": 0.08}


# ---------------------------------------------------------------------------
# naming

_PERSON_FIRST = [
    "mara", "tovin", "selna", "dorel", "quira", "benlo", "farin", "welda", "rosko", "ilvan",
    "petra", "nolen", "vesta", "ormin", "lenna", "darvo", "sunel", "kiva", "talek", "runa",
    "melor", "janik", "orla", "brent", "silva", "tomar", "nelis", "varda", "kordo", "elin",
]
_PERSON_LAST = [
    "quellen", "varik", "soldano", "brevik", "mantell", "orissa", "fentor", "galber", "ruskin", "adlen",
    "morvan", "telsin", "dravec", "kohlman", "bastide", "ferrow", "lindqvist", "ostrev", "pallard", "wrenfield",
    "calloway", "durnham", "ellistone", "fairbrook", "grantham", "holloway", "iverson", "jarnevik", "kaldwell", "lombardi",
]
_SCHOLAR_FIRST = [
    "qirel", "vastin", "ombra", "zelik", "yorvan", "xanthe", "ulmer", "thessa", "rigel", "pavane",
    "norwin", "mirela", "lucan", "katrel", "jovan", "isolde", "hadrik", "gwenna", "ferris", "evandra",
]
_SCHOLAR_LAST = [
    "vasquelin", "tornquist", "skovgaard", "renquist", "pellerin", "ostrander", "norrgard", "mikkelson", "lindgren", "kovalenko",
    "jernberg", "ingstrom", "hallbeck", "grunewald", "fennimore", "ehrenfeld", "dagmarsen", "corvalan", "bernstrom", "almqvist",
]
_COUNTRY_BASE = [
    "norlav", "kest", "velmar", "ostan", "brivand", "calder", "drogh", "elvan", "fandor", "gastel",
    "hollern", "istrev", "jomark", "kranz", "luthen", "morvand", "nivell", "orsted", "pellam", "quoren",
]
_COUNTRY_SUFFIX = ["ia", "onia", "land", "mark"]
_CITY_BASE = [
    "velhaven", "tormouth", "briskgate", "calport", "dunmere", "eastwold", "fernburg", "glenholt", "harwick", "islemoor",
    "jutford", "kilbrook", "larkvale", "milldale", "netherby", "oxcombe", "pinmoor", "quayside", "redgate", "stonewick",
    "thornden", "ulverton", "violmere", "westfallow",
]
_CITY_SUFFIX = ["", " north", " south", " heights"]
_LANGUAGE_BASE = [
    "norlav", "kest", "velmar", "ostan", "brivand", "calder", "drogh", "elvan", "fandor", "gastel",
    "hollern", "istrev",
]
_LANGUAGE_SUFFIX = ["ic", "ish", "ese"]
_CURRENCY_BASE = ["velkan", "ostrel", "brimar", "caldic", "drovan", "elmish", "fandric", "gastan", "holric", "istral"]
_CURRENCY_SUFFIX = [" crown", " franc", " peso", " mark"]
_PROFESSIONS = [
    "architect", "cartographer", "diplomat", "engraver", "falconer", "glassblower", "historian", "illustrator",
    "jeweler", "locksmith", "milliner", "navigator", "organist", "printmaker", "surveyor", "tanner",
    "upholsterer", "weaver", "apothecary", "botanist",
]
_UNIVERSITY_BASE = ["torvel", "quenby", "marwick", "silvane", "ardmore", "bellwether", "cromlin", "dunhall", "eastmere", "foxhall"]
_UNIVERSITY_SUFFIX = [" institute", " college", " academy", " university"]
_FIELDS = [
    "aerostatics", "bryology", "cartology", "dendrochronology", "entomography", "fluviology", "glaciometrics",
    "heliophysics", "ichnology", "jurimetrics", "kinesiology", "limnology", "mycotaxonomy", "nephology",
    "oology", "paleobotany", "quasistatics", "rheology", "speleothemics", "tephrology", "uranography",
    "vexillology", "xylography", "zymurgy",
]
_FILM_ADJ = [
    "silent", "crimson", "wandering", "hollow", "gilded", "restless", "painted", "broken", "winter", "luminous",
    "forgotten", "iron", "paper", "midnight", "burning", "quiet", "distant", "velvet",
]
_FILM_NOUN = [
    "harbor", "orchard", "lantern", "compass", "meridian", "aviary", "carousel", "observatory", "archipelago", "ballroom",
    "furnace", "labyrinth", "monsoon", "pendulum", "quarry", "reservoir", "signal", "viaduct",
]


def _names_for(type_name: str, count: int) -> list[str]:
    if type_name == "person":
        pool = [(f, l) for l in _PERSON_LAST for f in _PERSON_FIRST]
        names = [f"{f} {l}" for f, l in pool]
    elif type_name == "scholar":
        names = [f"{f} {l}" for l in _SCHOLAR_LAST for f in _SCHOLAR_FIRST]
    elif type_name == "country":
        names = [b + s for s in _COUNTRY_SUFFIX for b in _COUNTRY_BASE]
    elif type_name == "city":
        names = [b + s for s in _CITY_SUFFIX for b in _CITY_BASE]
    elif type_name == "language":
        names = [b + s for s in _LANGUAGE_SUFFIX for b in _LANGUAGE_BASE]
    elif type_name == "currency":
        names = [b + s for s in _CURRENCY_SUFFIX for b in _CURRENCY_BASE]
    elif type_name == "profession":
        names = list(_PROFESSIONS)
    elif type_name == "university":
        names = [b + s for s in _UNIVERSITY_SUFFIX for b in _UNIVERSITY_BASE]
    elif type_name == "field":
        names = list(_FIELDS)
    elif type_name == "film":
        names = [f"the {a} {n}" for n in _FILM_NOUN for a in _FILM_ADJ]
    else:
        raise WorldError(f"unknown entity type {type_name!r}")
    if count > len(names):
        raise WorldError(f"not enough unique names for type {type_name!r}: need {count}, have {len(names)}")
    return names[:count]


# ---------------------------------------------------------------------------
# world

@dataclass(frozen=True)
class WorldConfig:
    seed: int = 7
    n_entities: int = 800
    drop_edge_rate: float = 0.15
    ambiguous_alias_fraction: float = 0.05
    latent_dim: int = 6

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "n_entities": self.n_entities,
            "drop_edge_rate": self.drop_edge_rate,
            "ambiguous_alias_fraction": self.ambiguous_alias_fraction,
            "latent_dim": self.latent_dim,
        }

    @staticmethod
    def from_json(obj: dict) -> "WorldConfig":
        return WorldConfig(**obj)


@dataclass
class World:
    config: WorldConfig
    kb_full: KnowledgeBase
    kb_incomplete: KnowledgeBase
    alias_pairs: tuple[tuple[EntityId, str], ...]
    entities: dict[str, tuple[EntityId, ...]]
    names: dict[EntityId, str]
    schemas: tuple[RelationSchema, ...]
    templates: tuple[QuestionTemplate, ...]
    split_partner: dict[str, str]
    parallel_partner: dict[str, str]
    dropped_subjects: dict[str, tuple[str, ...]]

    def alias_of(self, entity: EntityId) -> str:
        return self.names[entity]

    def type_of(self, entity: EntityId) -> str:
        return {v: k for k, vs in self.entities.items() for v in vs}[entity]

    def schema_by_name(self, name: str) -> RelationSchema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise KeyError(name)


def _allocate_counts(n_entities: int) -> dict[str, int]:
    counts = {t: int(n_entities * frac) for t, frac in _TYPE_FRACTIONS.items()}
    counts["person"] += n_entities - sum(counts.values())
    for t, c in counts.items():
        if c < 4:
            raise WorldError(f"infeasible schema: entity type {t!r} would get only {c} entities")
    return counts


def _date_for_index(i: int) -> str:
    day = 1 + i % 28
    month = 1 + (i // 28) % 12
    year = 1900 + i // (28 * 12)
    return f"{year:04d}-{month:02d}-{day:02d}"


def generate_world(config: WorldConfig, schemas: Sequence[RelationSchema] = DEFAULT_RELATIONS) -> World:
    """Build the full and incomplete KBs, the alias table, and templates."""
    rng = np.random.default_rng(config.seed)
    counts = _allocate_counts(config.n_entities)

    entities: dict[str, tuple[EntityId, ...]] = {}
    names: dict[EntityId, str] = {}
    index_of: dict[EntityId, int] = {}
    for type_name in _TYPE_FRACTIONS:
        n = counts[type_name]
        letter = _TYPE_LETTER[type_name]
        ids = tuple(EntityId(f"m.0{letter}{i:03d}") for i in range(n))
        entities[type_name] = ids
        for i, (eid, name) in enumerate(zip(ids, _names_for(type_name, n))):
            names[eid] = name
            index_of[eid] = i

    # latent geometry
    centers = {t: rng.normal(0.0, 3.0, config.latent_dim) for t in _TYPE_FRACTIONS}
    latents = {
        eid: centers[t] + rng.normal(0.0, 1.0, config.latent_dim)
        for t in _TYPE_FRACTIONS
        for eid in entities[t]
    }
    group_names = []
    for s in schemas:
        key = s.group or s.name
        if key not in group_names:
            group_names.append(key)
    offsets = {g: rng.normal(0.0, 1.5, config.latent_dim) for g in group_names}

    # split halves, shared per group
    split_half: dict[tuple[str, str], frozenset[EntityId]] = {}
    for s in schemas:
        if s.pairing in ("split_a", "split_b") and (s.group, "a") not in split_half:
            pool = list(entities[s.subject_type])
            perm = rng.permutation(len(pool))
            half = len(pool) // 2
            split_half[(s.group, "a")] = frozenset(pool[i] for i in perm[:half])
            split_half[(s.group, "b")] = frozenset(pool[i] for i in perm[half:])

    def targets_for(subject: EntityId, object_type: str, delta: np.ndarray, fanout: int) -> list[EntityId]:
        goal = latents[subject] + delta
        pool = entities[object_type]
        scored = sorted(
            (float(np.linalg.norm(latents[o] - goal)), o.name, o) for o in pool if o != subject
        )
        return [o for _, _, o in scored[:fanout]]

    triples: list[Triple] = []
    parallel_partner: dict[str, str] = {}
    split_partner: dict[str, str] = {}
    shadow_of: dict[str, RelationSchema] = {}
    for s in schemas:
        if s.pairing == "parallel_shadow":
            primaries = [p for p in schemas if p.group == s.group and p.pairing == "parallel_primary"]
            if len(primaries) != 1:
                raise WorldError(f"parallel group {s.group!r} needs exactly one primary")
            parallel_partner[primaries[0].name] = s.name
            shadow_of[primaries[0].name] = s
        if s.pairing == "split_a":
            partners = [p for p in schemas if p.group == s.group and p.pairing == "split_b"]
            if len(partners) != 1:
                raise WorldError(f"split group {s.group!r} needs exactly one split_b")
            split_partner[s.name] = partners[0].name
            split_partner[partners[0].name] = s.name

    for s in schemas:
        if s.pairing == "parallel_shadow":
            continue  # emitted with its primary
        subjects = list(entities[s.subject_type])
        if s.pairing == "split_a":
            subjects = [e for e in subjects if e in split_half[(s.group, "a")]]
        elif s.pairing == "split_b":
            subjects = [e for e in subjects if e in split_half[(s.group, "b")]]
        rel = s.relation
        if s.literal is not None:
            for subj in subjects:
                if s.literal == "date":
                    value = _date_for_index(index_of[subj])
                else:
                    value = str(1900 + index_of[subj])
                triples.append(Triple(subj, rel, Literal(s.literal, value)))
            continue
        if not entities.get(s.object_type):
            raise WorldError(f"infeasible schema: relation {s.name} has empty range {s.object_type!r}")
        delta = centers[s.object_type] - centers[s.subject_type] + offsets[s.group or s.name]
        shadow = shadow_of.get(s.name)
        for subj in subjects:
            fanout = int(rng.integers(s.fanout[0], s.fanout[1] + 1))
            for obj in targets_for(subj, s.object_type, delta, fanout):
                triples.append(Triple(subj, rel, obj))
                if shadow is not None:
                    triples.append(Triple(subj, shadow.relation, obj))

    kb_full = KnowledgeBase(triples)

    # incomplete KB: withhold the primary label for a sampled fraction of the
    # subjects that carry a parallel pair (the shadow label stays)
    eligible: list[tuple[EntityId, str]] = []
    for primary in sorted(parallel_partner):
        rel = RelationId(primary)
        subjects = sorted({s for s, _ in kb_full.relation_pairs(rel)})
        eligible.extend((subj, primary) for subj in subjects)
    n_drop = int(round(config.drop_edge_rate * len(eligible)))
    drop_idx = sorted(rng.choice(len(eligible), size=n_drop, replace=False)) if n_drop else []
    dropped = {eligible[i] for i in drop_idx}
    remaining = [
        t for t in triples if (t.subject, t.relation.name) not in dropped
    ]
    kb_incomplete = KnowledgeBase(remaining)
    dropped_subjects: dict[str, list[str]] = {}
    for subj, rel_name in sorted(dropped, key=lambda x: (x[1], x[0].name)):
        dropped_subjects.setdefault(rel_name, []).append(subj.name)

    # aliases: full name for everyone, plus ambiguous first-name aliases for
    # roughly the configured fraction of entities (persons sharing a first name)
    alias_pairs: list[tuple[EntityId, str]] = [(eid, names[eid]) for t in _TYPE_FRACTIONS for eid in entities[t]]
    by_first: dict[str, list[EntityId]] = {}
    for eid in entities["person"]:
        by_first.setdefault(names[eid].split()[0], []).append(eid)
    shared = [f for f, es in sorted(by_first.items()) if len(es) >= 2]
    target = int(np.ceil(config.ambiguous_alias_fraction * config.n_entities))
    covered = 0
    for f in (shared[i] for i in rng.permutation(len(shared))):
        if covered >= target:
            break
        for eid in by_first[f]:
            alias_pairs.append((eid, f))
        covered += len(by_first[f])

    templates = tuple(_hop1_templates(schemas) + list(MULTI_TEMPLATES) + _auto_multi_templates(schemas))
    return World(
        config=config,
        kb_full=kb_full,
        kb_incomplete=kb_incomplete,
        alias_pairs=tuple(alias_pairs),
        entities=entities,
        names=names,
        schemas=tuple(schemas),
        templates=templates,
        split_partner=split_partner,
        parallel_partner=parallel_partner,
        dropped_subjects={k: tuple(v) for k, v in dropped_subjects.items()},
    )


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True)
class DatasetExample:
    id: str
    question: str
    mentions: tuple[Mention, ...]
    lf: LogicalForm
    answers: frozenset

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "mentions": [m.to_json() for m in self.mentions],
            "sparql": format_lf(self.lf),
            "answers": answers_to_json(self.answers),
        }

    @staticmethod
    def from_json(obj: dict) -> "DatasetExample":
        return DatasetExample(
            id=obj["id"],
            question=obj["question"],
            mentions=tuple(Mention.from_json(m) for m in obj["mentions"]),
            lf=parse(obj["sparql"]),
            answers=answers_from_json(obj["answers"]),
        )


def answers_to_json(answers: frozenset) -> list[dict]:
    out = []
    for a in answers:
        if isinstance(a, EntityId):
            out.append({"kind": "entity", "value": a.name})
        else:
            out.append({"kind": a.kind, "value": a.value})
    out.sort(key=lambda d: (d["kind"], d["value"]))
    return out


def answers_from_json(items: list[dict]) -> frozenset:
    out = []
    for d in items:
        if d["kind"] == "entity":
            out.append(EntityId(d["value"]))
        else:
            out.append(Literal(d["kind"], d["value"]))
    return frozenset(out)


@dataclass(frozen=True)
class SplitSpec:
    kind: str  # standard | heldout_relation | novel_combination | mcd_like
    heldout_relations: tuple[str, ...] = ()
    test_only_templates: tuple[str, ...] = ()


@dataclass
class Dataset:
    train: tuple[DatasetExample, ...]
    valid: tuple[DatasetExample, ...]
    test: tuple[DatasetExample, ...]
    spec: SplitSpec

    def all_examples(self) -> Iterable[DatasetExample]:
        yield from self.train
        yield from self.valid
        yield from self.test


_VAR_NAMES = {"?x": Variable("?x"), "?y": Variable("?y"), "?d": Variable("?d")}
_ANCHOR_VARS = {"A": Variable("?anchor_a"), "B": Variable("?anchor_b")}


def _template_lf(template: QuestionTemplate, anchors: dict[str, EntityId]) -> LogicalForm:
    patterns = []
    for subj, rel, obj in template.patterns:
        s = anchors[subj] if subj in ("A", "B") else _VAR_NAMES[subj]
        o = anchors[obj] if obj in ("A", "B") else _VAR_NAMES[obj]
        patterns.append(TriplePattern(s, RelationId(rel), o))
    order = None
    if template.order is not None:
        var, direction, limit = template.order
        order = OrderLimit(_VAR_NAMES[var], direction, limit)
    return LogicalForm(_VAR_NAMES[template.select], tuple(patterns), order)


def _anchor_candidates(world: World, template: QuestionTemplate) -> list[tuple[EntityId, ...]]:
    """All anchor tuples for which the template's pattern block is satisfiable."""
    patterns = []
    for subj, rel, obj in template.patterns:
        s = _ANCHOR_VARS[subj] if subj in ("A", "B") else _VAR_NAMES[subj]
        o = _ANCHOR_VARS[obj] if obj in ("A", "B") else _VAR_NAMES[obj]
        patterns.append(TriplePattern(s, RelationId(rel), o))
    slots = template.anchor_slots
    combos = []
    seen = set()
    for binding in find_assignments(tuple(patterns), world.kb_full):
        combo = tuple(binding[_ANCHOR_VARS[s]] for s in slots)
        if any(not isinstance(e, EntityId) for e in combo):
            continue
        if combo not in seen:
            seen.add(combo)
            combos.append(combo)
    combos.sort(key=lambda c: tuple(e.name for e in c))
    return combos


_PLACEHOLDER_RE = re.compile(r"\{([AB])\}")

_FRAME_PREFIXES = (
    "tell me ",
    "please tell me ",
    "i want to know ",
    "i would like to know ",
    "according to the records ",
    "according to the kb ",
    "looking at the records ",
    "for the record ",
    "quick question ",
    "here is a question ",
    "can you tell me ",
    "checking the records ",
    "i am curious ",
    "out of curiosity ",
    "one more question ",
    "let me ask ",
    "per the records ",
    "per the kb ",
    "going by the records ",
    "checking one thing ",
    "sorry to bother you again but i must check ",
    "my colleague wants me to double check something ",
    "hoping you can help me settle a tiny dispute ",
    "the old printout is smudged so i will ask again ",
    "while we are at it can you also tell me ",
    "i keep forgetting so let me ask once more ",
    "this came up in the morning sync so checking ",
    "somebody upstairs wants to know ",
    "apologies if this is obvious but ",
    "just filling in the last row of my sheet here ",
    "bear with me one more time ",
    "before i sign off on this form i need to confirm ",
)
_FRAME_SUFFIXES = (
    " exactly",
    " as recorded",
    " according to the kb",
    " as listed in the records",
    " if you can",
    " for the record",
    " in the records",
    " per the kb",
    " per the records",
    " as noted",
    " as documented",
    " in the database",
    " going by the records",
    " if recorded",
    " when you check",
    " just to confirm",
    " because our notes seem to disagree on this one",
    " since the copy on my desk looks smudged",
    " whenever you get a moment thanks a bunch",
    " so i can finish filling in this sheet",
    " before the afternoon review wraps up",
    " as my handwriting from yesterday is unreadable",
    " even though i probably asked this before",
    " and then i promise to stop asking",
    " so we can put this argument to rest",
    " if the entry is there at all",
    " assuming the ledger is current",
    " as the sticky fell off my screen",
    " while i still remember to write it down",
    " given the mess in our shared folder",
    " unless it was purged from the archive",
    " though it is probably listed somewhere",
)

# chance a side of the frame stays bare
_FRAME_BARE = 0.2


def decorate_question(text: str, rng: np.random.Generator) -> str:
    """Wrap a question in one of the stock phrasing frames.

    Frames are drawn per item, so two questions about the same relation
    rarely share their full surface form.
    """
    prefix = "" if rng.random() < _FRAME_BARE else _FRAME_PREFIXES[int(rng.integers(len(_FRAME_PREFIXES)))]
    suffix = "" if rng.random() < _FRAME_BARE else _FRAME_SUFFIXES[int(rng.integers(len(_FRAME_SUFFIXES)))]
    core, mark = (text[:-1], "?") if text.endswith("?") else (text, "")
    return prefix + core + suffix + mark


def realize_question(
    text: str, substitutions: dict[str, tuple[str, EntityId]]
) -> tuple[str, tuple[Mention, ...]]:
    out: list[str] = []
    mentions: list[Mention] = []
    pos = 0
    length = 0
    for m in _PLACEHOLDER_RE.finditer(text):
        out.append(text[pos : m.start()])
        length += m.start() - pos
        alias, entity = substitutions[m.group(1)]
        mentions.append(Mention(length, length + len(alias), alias, entity))
        out.append(alias)
        length += len(alias)
        pos = m.end()
    out.append(text[pos:])
    return "".join(out), tuple(mentions)


def _superlative_is_unambiguous(lf: LogicalForm, kb: KnowledgeBase) -> bool:
    """True when the sort boundary is strict (no tie at the truncation edge)."""
    if lf.order_limit is None:
        return True
    assignments = find_assignments(lf.patterns, kb)
    keys = sorted(
        (("entity", v.name) if isinstance(v, EntityId) else (v.kind, float(v.value) if v.kind == "number" else v.value))
        for v in (a[lf.order_limit.sort_var] for a in assignments)
    )
    if lf.order_limit.direction == "desc":
        keys = keys[::-1]
    limit = lf.order_limit.limit
    if len(keys) <= limit:
        return True
    return keys[limit - 1] != keys[limit]


def _short_chain_sets(kb: KnowledgeBase, anchor: EntityId, banned: frozenset[str]):
    """Answer sets of 1- and 2-step chains from ``anchor``, skipping ``banned``.

    Covers the shapes a case-derived query can take around one bound entity:
    forward and reverse single edges, and a forward or reverse first step
    followed by a forward second step.
    """
    fwd = {r for r, _ in kb.out_edges(anchor) if r.name not in banned}
    rev = {r for r, _ in kb.in_edges(anchor) if r.name not in banned}
    starts: list[frozenset] = []
    for rel in sorted(fwd, key=lambda r: r.name):
        starts.append(frozenset(kb.objects_of(anchor, rel)))
    for rel in sorted(rev, key=lambda r: r.name):
        starts.append(frozenset(kb.subjects_of(anchor, rel)))
    for objs in starts:
        if objs:
            yield objs
        mids = [o for o in objs if isinstance(o, EntityId)]
        rels2 = {r for m in mids for r, _ in kb.out_edges(m) if r.name not in banned}
        for rel2 in sorted(rels2, key=lambda r: r.name):
            out = frozenset(o for m in mids for o in kb.objects_of(m, rel2))
            if out:
                yield out


def _heldout_answers_distinct(
    world: World,
    template: QuestionTemplate,
    lf: LogicalForm,
    answers: frozenset,
    banned: frozenset[str] = frozenset(),
) -> bool:
    """No logical form built without ``banned`` relations reproduces ``answers``.

    Guards the held-out experiment: before injection the generator composes
    only from trained cases, so every decoy it could produce must miss the
    gold answer set.  Checked decoys: same-shape relation substitutions, and
    the short chains around each bound entity (see _short_chain_sets); both
    run against the full and the incomplete KB.
    """
    subject_types = []
    for subj, rel, _ in template.patterns:
        schema = world.schema_by_name(rel)
        subject_types.append(schema.subject_type)
    options = []
    for stype, (pattern, (_, rel, _)) in zip(subject_types, zip(lf.patterns, template.patterns)):
        names = [s.name for s in world.schemas if s.subject_type == stype and s.literal is None]
        options.append([n for n in names if n] or [rel])
    from itertools import product

    gold_rels = tuple(p.relation.name for p in lf.patterns)
    for combo in product(*options):
        if combo == gold_rels:
            continue
        patterns = tuple(
            TriplePattern(p.subject, RelationId(name), p.object) for p, name in zip(lf.patterns, combo)
        )
        try:
            alt = LogicalForm(lf.select_var, patterns, lf.order_limit)
        except ValueError:
            continue
        for kb in (world.kb_full, world.kb_incomplete):
            alt_answers = execute(alt, kb)
            if alt_answers and alt_answers == answers:
                return False
    anchors = {t for p in lf.patterns for t in (p.subject, p.object) if isinstance(t, EntityId)}
    for kb in (world.kb_full, world.kb_incomplete):
        for anchor in sorted(anchors, key=lambda e: e.name):
            for chain_answers in _short_chain_sets(kb, anchor, banned):
                if chain_answers == answers:
                    return False
    return True


def generate_dataset(
    world: World,
    kind: str = "standard",
    seed: int = 0,
    sizes: tuple[int, int, int] = (2000, 300, 600),
    heldout_relations: tuple[str, ...] = ("academia.scholar.advisor",),
    heldout_quota: int = 60,
    novel_quota: Optional[int] = None,
) -> Dataset:
    """Generate a dataset and split it.

    Kinds: ``standard`` (random split), ``heldout_relation`` (no train LF
    contains a held-out relation; test carries a quota of them),
    ``novel_combination`` (test = reserved relation combinations whose parts
    all occur in training), ``mcd_like`` (greedy rare-compound-first test
    assignment).  Every gold LF executes nonempty on the full KB.
    """
    if kind not in ("standard", "heldout_relation", "novel_combination", "mcd_like"):
        raise WorldError(f"unknown split kind {kind!r}")
    rng = np.random.default_rng(seed)
    templates = list(world.templates)
    heldout_set = frozenset(heldout_relations) if kind == "heldout_relation" else frozenset()
    if kind == "heldout_relation":
        # a template mixing held-out and trained relations would plant nearby
        # executable decoys (its trained half) in the test questions; keep only
        # templates pure on one side of the split
        templates = [
            t for t in templates
            if not (t.relation_names() & heldout_set) or t.relation_names() <= heldout_set
        ]
        covered = set()
        for t in templates:
            covered |= set(t.relation_names())
        missing = sorted(heldout_set - covered)
        if missing:
            raise WorldError(f"split constraint unsatisfiable: no templates cover {missing}")

    by_kind: dict[str, list[QuestionTemplate]] = {}
    candidates: dict[str, list[tuple[EntityId, ...]]] = {}
    for t in templates:
        cands = _anchor_candidates(world, t)
        if cands:
            by_kind.setdefault(t.kind, []).append(t)
            candidates[t.id] = cands
    kinds = [k for k in KIND_WEIGHTS if k in by_kind]
    if not kinds:
        raise WorldError("no feasible question templates")
    weights = np.array([KIND_WEIGHTS[k] for k in kinds])
    weights = weights / weights.sum()

    examples: list[DatasetExample] = []
    seen_keys: set = set()
    seen_questions: set[str] = set()

    def try_realize(template: QuestionTemplate, combo: tuple[EntityId, ...], validate_heldout: bool) -> Optional[DatasetExample]:
        key = (template.id, combo)
        if key in seen_keys:
            return None
        anchors = dict(zip(template.anchor_slots, combo))
        lf = _template_lf(template, anchors)
        question, mentions = realize_question(
            decorate_question(template.text, rng),
            {slot: (world.alias_of(e), e) for slot, e in anchors.items()},
        )
        if question in seen_questions:
            return None
        answers = execute(lf, world.kb_full)
        if not answers:
            return None
        if template.order is not None and not _superlative_is_unambiguous(lf, world.kb_full):
            return None
        if validate_heldout and not _heldout_answers_distinct(world, template, lf, answers, heldout_set):
            return None
        seen_keys.add(key)
        seen_questions.add(question)
        ex = DatasetExample(f"ex-{len(examples):05d}", question, mentions, lf, answers)
        examples.append(ex)
        return ex

    def sample_from(pool: list[QuestionTemplate], n_target: int, validate_heldout: bool) -> int:
        made = 0
        attempts = 0
        max_attempts = n_target * 60
        while made < n_target and attempts < max_attempts:
            attempts += 1
            template = pool[int(rng.integers(len(pool)))]
            cands = candidates.get(template.id)
            if not cands:
                continue
            combo = cands[int(rng.integers(len(cands)))]
            if try_realize(template, combo, validate_heldout) is not None:
                made += 1
        return made

    total = sum(sizes)
    attempts = 0
    max_attempts = total * 60
    while len(examples) < total and attempts < max_attempts:
        attempts += 1
        k = kinds[int(rng.choice(len(kinds), p=weights))]
        pool = by_kind[k]
        template = pool[int(rng.integers(len(pool)))]
        combo_list = candidates[template.id]
        combo = combo_list[int(rng.integers(len(combo_list)))]
        needs_validation = kind == "heldout_relation" and bool(template.relation_names() & heldout_set)
        try_realize(template, combo, needs_validation)
    if len(examples) < total:
        raise WorldError(
            f"could not generate {total} distinct examples (got {len(examples)}); enlarge the world"
        )

    if kind == "heldout_relation":
        heldout_templates = [t for t in templates if t.relation_names() & heldout_set and t.id in candidates]
        if not heldout_templates:
            raise WorldError(f"split constraint unsatisfiable: no feasible templates for {sorted(heldout_set)}")
        have = sum(1 for e in examples if {r.name for r in relations_of(e.lf)} & heldout_set)
        if have < heldout_quota:
            sample_from(heldout_templates, heldout_quota - have, validate_heldout=True)

    spec = SplitSpec(kind, tuple(sorted(heldout_set)))
    train_n, valid_n, test_n = sizes

    if kind == "standard":
        order = rng.permutation(len(examples))
        shuffled = [examples[i] for i in order]
        ds = Dataset(
            tuple(shuffled[:train_n]),
            tuple(shuffled[train_n : train_n + valid_n]),
            tuple(shuffled[train_n + valid_n : train_n + valid_n + test_n]),
            spec,
        )
    elif kind == "heldout_relation":
        heldout_items = [e for e in examples if {r.name for r in relations_of(e.lf)} & heldout_set]
        rest = [e for e in examples if not ({r.name for r in relations_of(e.lf)} & heldout_set)]
        order = rng.permutation(len(rest))
        rest = [rest[i] for i in order]
        initial_n = max(test_n - len(heldout_items), 0)
        test = tuple(heldout_items + rest[:initial_n])
        remainder = rest[initial_n:]
        ds = Dataset(
            tuple(remainder[:train_n]),
            tuple(remainder[train_n : train_n + valid_n]),
            test,
            spec,
        )
        for e in ds.train:
            if {r.name for r in relations_of(e.lf)} & heldout_set:
                raise WorldError("internal error: held-out relation leaked into train")
    elif kind == "novel_combination":
        test_templates = tuple(
            t.id for t in templates if any(t.id.startswith(p) for p in NOVEL_TEST_PREFIXES)
        )
        valid_templates = tuple(
            t.id for t in templates if any(t.id.startswith(p) for p in NOVEL_VALID_PREFIXES)
        )
        spec = SplitSpec(kind, (), test_templates)

        def reserved_combos(ids):
            return {frozenset(t.relation_names()) for t in templates if t.id in ids}

        def take_reserved(ids, combos, quota):
            got = [e for e in examples if frozenset(r.name for r in relations_of(e.lf)) in combos]
            if len(got) < quota:
                pool = [t for t in templates if t.id in ids and t.id in candidates]
                before = len(examples)
                sample_from(pool, quota - len(got), validate_heldout=False)
                got += examples[before:]
            return got

        test_combos = reserved_combos(test_templates)
        valid_combos = reserved_combos(valid_templates)
        quota = novel_quota if novel_quota is not None else test_n
        novel_test = take_reserved(test_templates, test_combos, quota)
        # a third of valid carries the tuning combo, the rest stays ordinary
        novel_valid = take_reserved(valid_templates, valid_combos, valid_n // 3)
        reserved = test_combos | valid_combos
        rest = [e for e in examples if frozenset(r.name for r in relations_of(e.lf)) not in reserved]
        order = rng.permutation(len(rest))
        rest = [rest[i] for i in order]
        test = tuple(novel_test[:test_n])
        valid = tuple(novel_valid[: valid_n // 3])
        fill = valid_n - len(valid)
        ds = Dataset(
            tuple(rest[:train_n]),
            valid + tuple(rest[train_n : train_n + fill]),
            test,
            spec,
        )
        train_rel_sets = [frozenset(r.name for r in relations_of(e.lf)) for e in ds.train]
        train_atoms = set().union(*train_rel_sets) if train_rel_sets else set()
        for e in ds.test + valid:
            rels = frozenset(r.name for r in relations_of(e.lf))
            if any(rels <= s for s in train_rel_sets):
                raise WorldError(f"novel-combination violation: {sorted(rels)} is covered by a train LF")
            if not rels <= train_atoms:
                raise WorldError(f"novel-combination violation: {sorted(rels - train_atoms)} never trains")
    else:  # mcd_like
        combos: dict[frozenset, list[DatasetExample]] = {}
        for e in examples:
            combos.setdefault(frozenset(r.name for r in relations_of(e.lf)), []).append(e)
        rare_first = sorted(combos.items(), key=lambda kv: (len(kv[1]), sorted(kv[0])))
        test: list[DatasetExample] = []
        test_combos = set()
        for combo, items in rare_first:
            if len(test) >= test_n:
                break
            test_combos.add(combo)
            test.extend(items)
        rest = [e for e in examples if frozenset(r.name for r in relations_of(e.lf)) not in test_combos]
        atoms_in_rest = set()
        for e in rest:
            atoms_in_rest |= {r.name for r in relations_of(e.lf)}
        kept_test = []
        for e in test:
            rels = {r.name for r in relations_of(e.lf)}
            if rels <= atoms_in_rest:
                kept_test.append(e)
            else:
                rest.append(e)  # atom would vanish from train; keep coverage
        order = rng.permutation(len(rest))
        rest = [rest[i] for i in order]
        ds = Dataset(
            tuple(rest[:train_n]),
            tuple(rest[train_n : train_n + valid_n]),
            tuple(kept_test[:test_n]),
            spec,
        )

    for e in ds.all_examples():
        if not e.answers:
            raise WorldError(f"gold answers empty for {e.id}")
    return ds


def make_injection_examples(
    world: World,
    relation_names: Sequence[str],
    per_relation: int,
    seed: int = 0,
    used_questions: Optional[set[str]] = None,
) -> list[DatasetExample]:
    """Simple one-pattern cases for the given relations, for memory injection.

    Questions get the same phrasing frames as the generated corpus, so an
    injected case is no terser than its neighbours; a bare question encodes
    to a short high-cosine vector that bleeds into unrelated retrieval sets.
    Templates for a relation are cycled so every surface form is represented.
    """
    rng = np.random.default_rng(seed)
    used = set(used_questions or ())
    out: list[DatasetExample] = []
    for rel_name in relation_names:
        schema = world.schema_by_name(rel_name)
        if not schema.templates:
            raise WorldError(f"no question templates for relation {rel_name}")
        templates = [t for t in world.templates if t.kind == "hop1" and rel_name in t.relation_names()]
        cands = {t.id: _anchor_candidates(world, t) for t in templates}
        templates = [t for t in templates if cands[t.id]]
        if not templates:
            raise WorldError(f"no anchors available for relation {rel_name}")
        made = 0
        attempts = 0
        while made < per_relation and attempts < per_relation * 50:
            attempts += 1
            template = templates[made % len(templates)]
            pool = cands[template.id]
            combo = pool[int(rng.integers(len(pool)))]
            anchors = dict(zip(template.anchor_slots, combo))
            lf = _template_lf(template, anchors)
            question, mentions = realize_question(
                decorate_question(template.text, rng),
                {slot: (world.alias_of(e), e) for slot, e in anchors.items()},
            )
            if question in used:
                continue
            answers = execute(lf, world.kb_full)
            if not answers:
                continue
            used.add(question)
            out.append(
                DatasetExample(f"inject-{rel_name}-{made:03d}", question, mentions, lf, answers)
            )
            made += 1
        if made < per_relation:
            raise WorldError(f"could only build {made} injection cases for {rel_name}")
    return out


# ---------------------------------------------------------------------------
# files

def write_world(world: World, dirpath: str) -> None:
    import os

    os.makedirs(dirpath, exist_ok=True)
    from .kb import dump_kb

    dump_kb(world.kb_full, os.path.join(dirpath, "kb_full.tsv"))
    dump_kb(world.kb_incomplete, os.path.join(dirpath, "kb_incomplete.tsv"))
    with open(os.path.join(dirpath, "aliases.tsv"), "w", encoding="utf-8") as fh:
        for eid, alias in world.alias_pairs:
            fh.write(f"{eid.name}\t{alias}\n")
    meta = {
        "config": world.config.to_json(),
        "kb_full_hash": world.kb_full.content_hash(),
        "kb_incomplete_hash": world.kb_incomplete.content_hash(),
        "split_partner": world.split_partner,
        "parallel_partner": world.parallel_partner,
        "dropped_subjects": world.dropped_subjects,
        "entity_counts": {t: len(es) for t, es in world.entities.items()},
    }
    with open(os.path.join(dirpath, "world.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_world(dirpath: str) -> World:
    """Rebuild a world from its directory (regenerates from the stored config)."""
    import os

    with open(os.path.join(dirpath, "world.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    world = generate_world(WorldConfig.from_json(meta["config"]))
    if world.kb_full.content_hash() != meta["kb_full_hash"]:
        raise WorldError("world directory does not match its config (kb hash mismatch)")
    return world


def write_examples(examples: Iterable[DatasetExample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")


def load_examples(path: str) -> tuple[DatasetExample, ...]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(DatasetExample.from_json(json.loads(line)))
    return tuple(out)


def write_dataset(dataset: Dataset, dirpath: str) -> None:
    import os

    os.makedirs(dirpath, exist_ok=True)
    write_examples(dataset.train, os.path.join(dirpath, "train.jsonl"))
    write_examples(dataset.valid, os.path.join(dirpath, "valid.jsonl"))
    write_examples(dataset.test, os.path.join(dirpath, "test.jsonl"))
    with open(os.path.join(dirpath, "split.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "kind": dataset.spec.kind,
                "heldout_relations": list(dataset.spec.heldout_relations),
                "test_only_templates": list(dataset.spec.test_only_templates),
                "sizes": [len(dataset.train), len(dataset.valid), len(dataset.test)],
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


def load_dataset(dirpath: str) -> Dataset:
    import os

    with open(os.path.join(dirpath, "split.json"), encoding="utf-8") as fh:
        spec_obj = json.load(fh)
    spec = SplitSpec(
        spec_obj["kind"],
        tuple(spec_obj.get("heldout_relations", [])),
        tuple(spec_obj.get("test_only_templates", [])),
    )
    return Dataset(
        load_examples(os.path.join(dirpath, "train.jsonl")),
        load_examples(os.path.join(dirpath, "valid.jsonl")),
        load_examples(os.path.join(dirpath, "test.jsonl")),
        spec,
    )
