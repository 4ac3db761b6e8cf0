"""Proof of possession: region index sets, hash-code sets and challenges.

A region is a slice of the file expressed in basis points of its length, so
the byte range depends only on ``(region, len(file))``::

    [floor(start_bp * L / 10000), floor(end_bp * L / 10000))
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import FileTooSmall, NonceMismatch, UnknownFile
from .rng import default_rng
from .symcrypto import hash as sha256

BP_SCALE = 10_000
MIN_WIDTH_BP = 50
MAX_WIDTH_BP = 500
MIN_FILE_BYTES = 10_000

DEFAULT_N = 16
DEFAULT_K = 8
DEFAULT_C = 3
NONCE_BYTES = 16


@dataclass(frozen=True, order=True)
class RegionIndex:
    start_bp: int
    end_bp: int

    def __post_init__(self):
        if not (0 <= self.start_bp < self.end_bp <= BP_SCALE):
            raise ValueError(f"bad region {self.start_bp}..{self.end_bp}")

    def byte_range(self, length: int) -> tuple[int, int]:
        return self.start_bp * length // BP_SCALE, self.end_bp * length // BP_SCALE

    def slice(self, data: bytes) -> bytes:
        lo, hi = self.byte_range(len(data))
        return data[lo:hi]


PossessionIndexSet = tuple  # tuple[RegionIndex, ...]
HashCodeSet = tuple  # tuple[bytes, ...], positionally aligned with the index set


def generate_index_set(rng=default_rng, n: int = DEFAULT_N) -> PossessionIndexSet:
    if n < 1:
        raise ValueError("need at least one region")
    seen: set[RegionIndex] = set()
    out: list[RegionIndex] = []
    while len(out) < n:
        width = MIN_WIDTH_BP + rng.below(MAX_WIDTH_BP - MIN_WIDTH_BP + 1)
        start = rng.below(BP_SCALE - width + 1)
        region = RegionIndex(start, start + width)
        if region not in seen:
            seen.add(region)
            out.append(region)
    return tuple(out)


def compute_hash_code_set(data: bytes, index_set: PossessionIndexSet) -> HashCodeSet:
    if len(data) < MIN_FILE_BYTES:
        raise FileTooSmall(f"files must be at least {MIN_FILE_BYTES} bytes")
    return tuple(sha256(region.slice(data)) for region in index_set)


def subsample(index_set, hash_codes, k: int = DEFAULT_K, rng=default_rng):
    """Keep ``k`` aligned (region, digest) pairs chosen without replacement."""
    if len(index_set) != len(hash_codes):
        raise ValueError("index set and hash codes are not aligned")
    if k > len(index_set):
        raise ValueError("cannot keep more regions than were supplied")
    picks = rng.sample(range(len(index_set)), k)
    return tuple(index_set[i] for i in picks), tuple(hash_codes[i] for i in picks)


@dataclass(frozen=True)
class Challenge:
    file_id: bytes
    nonce: bytes
    regions: tuple


@dataclass(frozen=True)
class ChallengeResponse:
    file_id: bytes
    nonce: bytes
    digests: tuple


def issue_challenge(record, rng=default_rng, c: int = DEFAULT_C) -> Challenge:
    """Draw ``c`` of the retained regions. ``record`` is a FileRecordPriv."""
    if record is None:
        raise UnknownFile("no such file")
    c = min(c, len(record.regions))
    picks = rng.sample(range(len(record.regions)), c)
    return Challenge(record.file_id, rng.bytes(NONCE_BYTES), tuple(record.regions[i] for i in picks))


def respond(data: bytes, challenge: Challenge) -> ChallengeResponse:
    if len(data) < MIN_FILE_BYTES:
        raise FileTooSmall(f"files must be at least {MIN_FILE_BYTES} bytes")
    return ChallengeResponse(
        challenge.file_id, challenge.nonce, tuple(sha256(r.slice(data)) for r in challenge.regions)
    )


def verify_response(record, challenge: Challenge, response: ChallengeResponse) -> bool:
    if record is None or record.file_id != challenge.file_id:
        raise UnknownFile("no such file")
    if response.nonce != challenge.nonce or response.file_id != challenge.file_id:
        raise NonceMismatch("response does not match the outstanding challenge")
    if len(response.digests) != len(challenge.regions):
        return False
    expected = dict(zip(record.regions, record.digests))
    ok = True
    for region, digest in zip(challenge.regions, response.digests):
        if expected.get(region) != digest:
            ok = False
    return ok
