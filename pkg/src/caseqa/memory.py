"""Case memory: (question, logical form) pairs with cached dense vectors.

The memory is the system's only writable state.  Injecting a case costs one
encoder call plus one row append; nothing is retrained.  Snapshots use a
small self-describing format (documented in ``CaseMemory.snapshot``) that
round-trips bit-exactly, including provenance.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .kb import KnowledgeBase
from .linker import Mention
from .logical_form import LogicalForm, format_lf, parse, relations_of

logger = logging.getLogger(__name__)

_VEC_MARKER = b"#VEC\n"


class DuplicateCaseId(ValueError):
    pass


class UnknownCaseId(KeyError):
    pass


class SnapshotError(ValueError):
    """Corrupt snapshot; message includes the byte offset of the failure."""


class StaleMemoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class Provenance:
    kind: str  # "train" | "injected"
    author: Optional[str] = None
    timestamp: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("train", "injected"):
            raise ValueError(f"unknown provenance kind {self.kind!r}")

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.author is not None:
            out["author"] = self.author
        if self.timestamp is not None:
            out["timestamp"] = self.timestamp
        return out

    @staticmethod
    def from_json(obj: dict) -> "Provenance":
        return Provenance(obj["kind"], obj.get("author"), obj.get("timestamp"))


@dataclass(frozen=True)
class Case:
    id: str
    question: str
    mentions: tuple[Mention, ...]
    lf: LogicalForm
    provenance: Provenance

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "mentions": [m.to_json() for m in self.mentions],
            "sparql": format_lf(self.lf),
            "provenance": self.provenance.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "Case":
        return Case(
            id=obj["id"],
            question=obj["question"],
            mentions=tuple(Mention.from_json(m) for m in obj.get("mentions", [])),
            lf=parse(obj["sparql"]),
            provenance=Provenance.from_json(obj["provenance"]),
        )


class CaseMemory:
    FORMAT = "caseqa-memory"
    FORMAT_VERSION = 1

    def __init__(self, encoder_version: str, dim: int):
        self.encoder_version = encoder_version
        self.dim = dim
        self._order: list[str] = []
        self._cases: dict[str, Case] = {}
        self._rows: list[np.ndarray] = []
        self._matrix: Optional[np.ndarray] = None
        self._id_counter = 0

    # -- construction --------------------------------------------------------

    @classmethod
    def build(cls, cases: Iterable[Case], encoder) -> "CaseMemory":
        mem = cls(encoder.version(), encoder.dim)
        for case in cases:
            vec = encoder.encode(case.question, case.mentions)
            mem._append(case, vec)
        return mem

    def _append(self, case: Case, vector: np.ndarray) -> None:
        if case.id in self._cases:
            raise DuplicateCaseId(f"case id already present: {case.id}")
        if vector.shape != (self.dim,):
            raise ValueError(f"vector has shape {vector.shape}, expected ({self.dim},)")
        self._order.append(case.id)
        self._cases[case.id] = case
        self._rows.append(np.asarray(vector, dtype=np.float64))
        self._matrix = None

    # -- basic access ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, case_id: str) -> bool:
        return case_id in self._cases

    def get(self, case_id: str) -> Case:
        if case_id not in self._cases:
            raise UnknownCaseId(case_id)
        return self._cases[case_id]

    def cases(self) -> Iterator[Case]:
        for cid in self._order:
            yield self._cases[cid]

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            if self._rows:
                self._matrix = np.vstack(self._rows)
            else:
                self._matrix = np.zeros((0, self.dim))
        return self._matrix

    # -- mutation --------------------------------------------------------------

    def _fresh_id(self) -> str:
        while True:
            cid = f"inj-{self._id_counter:05d}"
            self._id_counter += 1
            if cid not in self._cases:
                return cid

    def inject(
        self,
        question: str,
        lf_text: str,
        encoder,
        mentions: Sequence[Mention] = (),
        case_id: Optional[str] = None,
        author: Optional[str] = None,
        timestamp: Optional[str] = None,
        kb: Optional[KnowledgeBase] = None,
    ) -> Case:
        """Parse, encode, and append one case; O(one encode + one append).

        The logical form must parse (syntax errors propagate); relations
        outside the KB vocabulary only log a warning, since a case may be
        meant for a future KB revision.
        """
        if self.encoder_version != encoder.version():
            raise StaleMemoryError(
                "memory was encoded with a different encoder; rebuild before injecting"
            )
        lf = parse(lf_text)
        if kb is not None:
            unknown = [r.name for r in relations_of(lf) if r not in kb.relation_vocab]
            if unknown:
                logger.warning("injected case uses relations outside the KB vocabulary: %s", unknown)
        cid = case_id if case_id is not None else self._fresh_id()
        case = Case(
            id=cid,
            question=question,
            mentions=tuple(mentions),
            lf=lf,
            provenance=Provenance("injected", author=author, timestamp=timestamp),
        )
        vec = encoder.encode(question, case.mentions)
        self._append(case, vec)
        return case

    def remove(self, case_id: str) -> Case:
        if case_id not in self._cases:
            raise UnknownCaseId(case_id)
        idx = self._order.index(case_id)
        case = self._cases.pop(case_id)
        self._order.pop(idx)
        self._rows.pop(idx)
        self._matrix = None
        return case

    # -- retrieval --------------------------------------------------------------

    def top_k(
        self, qvec: np.ndarray, k: int, exclude_ids: Iterable[str] = ()
    ) -> list[tuple[Case, float]]:
        """Exact nearest cases by dot product (vectors are unit length)."""
        if len(self) == 0 or k <= 0:
            return []
        excluded = set(exclude_ids)
        sims = self.matrix @ np.asarray(qvec, dtype=np.float64)
        ranked = sorted(
            (i for i in range(len(self._order)) if self._order[i] not in excluded),
            key=lambda i: (-sims[i], self._order[i]),
        )
        return [(self._cases[self._order[i]], float(sims[i])) for i in ranked[:k]]

    # -- persistence ---------------------------------------------------------------

    def snapshot(self, path: str) -> None:
        """Write the memory to ``path``.

        Layout: one JSON header line {format, version, encoder_version, d,
        count}; then ``count`` JSON case lines in row order; then the marker
        line ``#VEC``; then ``count * d`` little-endian float64 values, row
        major, in the same row order.  The injection id counter is not
        serialized.
        """
        header = json.dumps(
            {
                "format": self.FORMAT,
                "version": self.FORMAT_VERSION,
                "encoder_version": self.encoder_version,
                "d": self.dim,
                "count": len(self),
            },
            sort_keys=True,
        )
        with open(path, "wb") as fh:
            fh.write(header.encode() + b"\n")
            for case in self.cases():
                fh.write(json.dumps(case.to_json(), sort_keys=True).encode() + b"\n")
            fh.write(_VEC_MARKER)
            fh.write(self.matrix.astype("<f8").tobytes(order="C"))

    @staticmethod
    def load(path: str, encoder=None) -> tuple["CaseMemory", bool]:
        """Load a snapshot; returns (memory, reencoded).

        When ``encoder`` is provided and its version differs from the one in
        the snapshot, every vector is re-encoded (``reencoded=True``).
        Without an encoder a stale snapshot loads as-is and retrieval will
        refuse it.
        """
        with open(path, "rb") as fh:
            offset = fh.tell()
            header_line = fh.readline()
            try:
                header = json.loads(header_line.decode())
                if header.get("format") != CaseMemory.FORMAT:
                    raise ValueError(f"bad format tag {header.get('format')!r}")
                if header.get("version") != CaseMemory.FORMAT_VERSION:
                    raise ValueError(f"unsupported snapshot version {header.get('version')!r}")
                dim = int(header["d"])
                count = int(header["count"])
                encoder_version = header["encoder_version"]
            except (ValueError, KeyError, UnicodeDecodeError) as exc:
                raise SnapshotError(f"corrupt snapshot header at byte {offset}: {exc}") from None
            mem = CaseMemory(encoder_version, dim)
            cases = []
            for i in range(count):
                offset = fh.tell()
                line = fh.readline()
                try:
                    cases.append(Case.from_json(json.loads(line.decode())))
                except Exception as exc:
                    raise SnapshotError(f"corrupt case record {i} at byte {offset}: {exc}") from None
            offset = fh.tell()
            marker = fh.read(len(_VEC_MARKER))
            if marker != _VEC_MARKER:
                raise SnapshotError(f"missing vector marker at byte {offset}")
            offset = fh.tell()
            blob = fh.read()
        expected = count * dim * 8
        if len(blob) != expected:
            raise SnapshotError(
                f"vector block at byte {offset} has {len(blob)} bytes, expected {expected}"
            )
        vectors = np.frombuffer(blob, dtype="<f8").reshape(count, dim) if count else np.zeros((0, dim))
        reencoded = False
        if encoder is not None and encoder.version() != encoder_version:
            mem.encoder_version = encoder.version()
            reencoded = True
        for i, case in enumerate(cases):
            if reencoded:
                vec = encoder.encode(case.question, case.mentions)
            else:
                vec = np.array(vectors[i], dtype=np.float64)
            mem._append(case, vec)
        return mem, reencoded
