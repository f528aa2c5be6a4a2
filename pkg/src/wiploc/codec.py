"""Orthogonal spreading codes, equidistant FEC codebooks and the 240-chip
location-reply payload.

An anchor ID ``n`` is first replaced by FEC codeword ``n``; every bit of that
word is then sent as orthogonal code ``n`` (bit 1) or its bitwise NOT (bit 0).
With the default order ``k=4`` this gives 15 blocks of 16 chips, i.e. a
30-byte payload.

Chips are held as ``uint8`` numpy arrays of 0/1 values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ORDER = 4
# despread ties (block distance exactly half the code length) resolve to this bit
TIE_BIT = 0


class CodecError(ValueError):
    """Invalid codec parameter or anchor ID."""


class MalformedPayloadError(CodecError):
    """Payload length does not match the codebooks."""


def _sylvester(k: int) -> np.ndarray:
    h = np.array([[1]], dtype=np.int8)
    h2 = np.array([[1, 1], [1, -1]], dtype=np.int8)
    for _ in range(k):
        h = np.kron(h2, h)
    return h


def _binary_hadamard(k: int) -> np.ndarray:
    """Order-2^k Sylvester Hadamard matrix with -1 mapped to 0."""
    return (_sylvester(k) > 0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class OrthogonalCodebook:
    k: int
    codes: np.ndarray  # shape (2^k, 2^k)

    @property
    def length(self) -> int:
        return self.codes.shape[1]

    def __len__(self) -> int:
        return self.codes.shape[0]


@dataclass(frozen=True, eq=False)
class FecCodebook:
    codewords: np.ndarray  # shape (N, L)
    d: int

    @property
    def length(self) -> int:
        return self.codewords.shape[1]

    def __len__(self) -> int:
        return self.codewords.shape[0]


@dataclass(frozen=True, eq=False)
class Payload:
    chips: np.ndarray

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=np.uint8)
        if chips.ndim != 1 or chips.size % 8:
            raise MalformedPayloadError(f"payload must be a whole number of bytes, got {chips.size} chips")
        if np.any(chips > 1):
            raise MalformedPayloadError("chips must be 0 or 1")
        chips.setflags(write=False)
        object.__setattr__(self, "chips", chips)

    def __len__(self) -> int:
        return self.chips.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Payload):
            return NotImplemented
        return np.array_equal(self.chips, other.chips)

    def __hash__(self) -> int:
        return hash(self.to_bytes())

    def to_bytes(self) -> bytes:
        # most-significant chip first within each byte
        return np.packbits(self.chips).tobytes()

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Payload":
        return cls(np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8)))

    @classmethod
    def from_hex(cls, text: str) -> "Payload":
        try:
            data = bytes.fromhex(text.strip())
        except ValueError as exc:
            raise MalformedPayloadError(f"invalid hex payload: {exc}") from None
        return cls.from_bytes(data)


@dataclass(frozen=True)
class DecodeResult:
    anchor_id: int
    d_c: int


def build_orthogonal_codebook(k: int = DEFAULT_ORDER) -> OrthogonalCodebook:
    """Binary Hadamard rows of order 2^k. Row 0 is all ones."""
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= 8:
        raise CodecError(f"order exponent k must be in [1, 8], got {k!r}")
    codes = _binary_hadamard(int(k))
    codes.setflags(write=False)
    return OrthogonalCodebook(int(k), codes)


def build_fec_codebook(k: int = DEFAULT_ORDER) -> FecCodebook:
    """Equidistant code from the order-2^k Hadamard rows with the constant
    first column removed: 2^k words of length 2^k - 1, distance 2^(k-1)."""
    if not isinstance(k, (int, np.integer)) or not 2 <= k <= 8:
        raise CodecError(f"order exponent k must be in [2, 8], got {k!r}")
    words = _binary_hadamard(int(k))[:, 1:].copy()
    words.setflags(write=False)
    return FecCodebook(words, 2 ** (int(k) - 1))


def hamming(a, b) -> int:
    return int(np.count_nonzero(np.asarray(a) != np.asarray(b)))


def payload_length(orth: OrthogonalCodebook, fec: FecCodebook) -> int:
    return fec.length * orth.length


def encode(anchor_id: int, orth: OrthogonalCodebook, fec: FecCodebook) -> Payload:
    n = min(len(orth), len(fec))
    if not 0 <= anchor_id < n:
        raise CodecError(f"anchor_id must be in [0, {n}), got {anchor_id}")
    code = orth.codes[anchor_id]
    word = fec.codewords[anchor_id]
    blocks = np.where(word[:, None] == 1, code[None, :], 1 - code[None, :])
    return Payload(blocks.reshape(-1).astype(np.uint8))


def _blocks(payload: Payload, orth: OrthogonalCodebook, n_blocks: int | None = None) -> np.ndarray:
    chips = payload.chips if isinstance(payload, Payload) else np.asarray(payload, dtype=np.uint8)
    if n_blocks is not None and chips.size != n_blocks * orth.length:
        raise MalformedPayloadError(f"payload has {chips.size} chips, expected {n_blocks * orth.length}")
    if chips.size % orth.length:
        raise MalformedPayloadError(f"payload has {chips.size} chips, not a multiple of {orth.length}")
    return chips.reshape(-1, orth.length)


def _bits_from_distances(dist: np.ndarray, half: int) -> np.ndarray:
    bits = np.full(dist.shape, TIE_BIT, dtype=np.uint8)
    bits[dist < half] = 1
    bits[dist > half] = 0
    return bits


def despread(payload: Payload, code_index: int, orth: OrthogonalCodebook, n_blocks: int | None = None):
    """Correlate each block with one code.

    Returns ``(word, distances)``: the recovered bit per block and the Hamming
    distance of each block to the code.
    """
    blocks = _blocks(payload, orth, n_blocks)
    dist = np.count_nonzero(blocks != orth.codes[code_index][None, :], axis=1)
    return _bits_from_distances(dist, orth.length // 2), dist


def decode(payload: Payload, orth: OrthogonalCodebook, fec: FecCodebook) -> list[DecodeResult]:
    """Try every code and keep the IDs whose despread word lies within d/2 of
    the matching FEC codeword. An empty list means nothing was decodable."""
    blocks = _blocks(payload, orth, fec.length)
    n = min(len(orth), len(fec))
    codes = orth.codes[:n]
    # dist[i, b]: distance of block b to code i
    dist = np.count_nonzero(blocks[None, :, :] != codes[:, None, :], axis=2)
    words = _bits_from_distances(dist, orth.length // 2)
    d_c = np.count_nonzero(words != fec.codewords[:n], axis=1)
    return [DecodeResult(int(i), int(d_c[i])) for i in range(n) if 2 * d_c[i] < fec.d]


def raw_payload(anchor_id: int, n_bytes: int = 30) -> Payload:
    """Uncoded reply: the ID as a big-endian 16-bit field, zero padded.
    Used only when the codec is disabled."""
    data = int(anchor_id).to_bytes(2, "big") + bytes(n_bytes - 2)
    return Payload.from_bytes(data)


def raw_id(payload: Payload) -> int:
    return int.from_bytes(payload.to_bytes()[:2], "big")


_DEFAULT: tuple[OrthogonalCodebook, FecCodebook] | None = None


def default_codebooks() -> tuple[OrthogonalCodebook, FecCodebook]:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = (build_orthogonal_codebook(DEFAULT_ORDER), build_fec_codebook(DEFAULT_ORDER))
    return _DEFAULT
