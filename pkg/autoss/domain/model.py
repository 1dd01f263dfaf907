from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

from autoss.core.errors import QueryError


class Mode(str, Enum):
    VS2 = "vs2"
    EVS2 = "evs2"


@dataclass(frozen=True)
class CorpusString:
    """
    A corpus string and its stable index. Corpora are kept sorted by φ, so after
    ingest the id is also the φ-rank.
    """
    id: int
    text: str


@dataclass(frozen=True)
class StringRange:
    """[lo, hi] under φ (dictionary order); lo == hi for a single string."""
    lo: str
    hi: str

    def is_valid(self) -> bool:
        return self.lo <= self.hi

    def contains(self, s: str) -> bool:
        return self.lo <= s <= self.hi

    def widen(self, s: str) -> "StringRange":
        return StringRange(min(self.lo, s), max(self.hi, s))


@dataclass(frozen=True)
class Query:
    q: str
    theta: float

    def __post_init__(self) -> None:
        if self.theta < 0:
            raise QueryError(f"theta must be >= 0, got {self.theta}")


@dataclass(frozen=True)
class TopKQuery:
    q: str
    k: int
    theta: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise QueryError(f"k must be >= 1, got {self.k}")
        if self.theta < 0:
            raise QueryError(f"theta must be >= 0, got {self.theta}")

    def as_query(self) -> Query:
        return Query(self.q, self.theta)


@dataclass(frozen=True)
class MultiQuery:
    strings: Tuple[str, ...]
    theta: float

    def __post_init__(self) -> None:
        if not self.strings:
            raise QueryError("multi-string query needs at least one string")
        if len(set(self.strings)) != len(self.strings):
            raise QueryError("multi-string query strings must be unique")
        if self.theta < 0:
            raise QueryError(f"theta must be >= 0, got {self.theta}")

    def query(self, i: int) -> Query:
        return Query(self.strings[i], self.theta)


# === Verification outcome ===

class VerificationStep(str, Enum):
    NONE = "none"
    STEP1 = "step1"
    STEP2 = "step2"
    STEP3 = "step3"
    STEP4 = "step4"


class Diagnosis(str, Enum):
    OK = "ok"
    TAMPERED = "tampered"
    OVERLAP_RANGE = "overlap_range"
    STRING_IN_NC_RANGE = "string_in_nc_range"
    SIGNATURE_MISMATCH = "signature_mismatch"
    SIMILAR_MISSING = "similar_missing"
    DISSIMILAR_RETURNED = "dissimilar_returned"
    CANDIDATE_CLAIMED_NC = "candidate_claimed_nc"
    DBH_NOT_DISTANT = "dbh_not_distant"
    POINT_NOT_IN_CLAIMED_DBH = "point_not_in_claimed_dbh"
    SIMILAR_INSIDE_DBH = "similar_inside_dbh"
    MALFORMED_VO = "malformed_vo"
    MISORDERED = "misordered"
    FORGED_EXEMPTION = "forged_exemption"
    UNVERIFIED_EXEMPTION = "unverified_exemption"


@dataclass
class Counters:
    """
    Client work. edit_ops counts DP evaluations against the query string
    (range bounds are charged RANGE_BOUND_COST each); embed_ops counts strings
    embedded by the client; euclid_ops counts query-to-rectangle distances.
    """
    edit_ops: int = 0
    euclid_ops: int = 0
    embed_ops: int = 0
    vo_bytes: int = 0


@dataclass
class ComponentCounts:
    n_R: int = 0
    n_C: int = 0
    n_F: int = 0
    n_MF: int = 0
    n_DBH: int = 0
    n_DS: int = 0


@dataclass
class VerificationReport:
    passed: bool
    failed_step: VerificationStep = VerificationStep.NONE
    diagnosis: Diagnosis = Diagnosis.OK
    detail: str = ""
    counters: Counters = field(default_factory=Counters)
    components: ComponentCounts = field(default_factory=ComponentCounts)

    def summary(self) -> str:
        if self.passed:
            return "PASS"
        return f"FAIL {self.failed_step.value} {self.diagnosis.value}: {self.detail}"
