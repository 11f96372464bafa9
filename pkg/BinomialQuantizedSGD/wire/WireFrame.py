import logging
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Tuple

import numpy as np

from ..codec.BQCodec import BqConfig, QuantizedMessage
from ..const import (
    WIRE_HEADER_FORMAT,
    WIRE_MAGIC,
    WIRE_MAX_Q_DENOMINATOR,
    WIRE_VERSION,
)
from ..exceptions import (
    CorruptMessageException,
    InvalidInputException,
    UnsupportedFormatException,
)

_LOGGER = logging.getLogger(__name__)

HEADER_SIZE = struct.calcsize(WIRE_HEADER_FORMAT)

_U32_MAX = 2**32 - 1
_U64_MAX = 2**64 - 1


@dataclass(eq=False)
class WireFrame:
    """A decoded frame: header fields plus the message they describe."""

    message: QuantizedMessage
    round_index: int
    client_id: int
    version: int = WIRE_VERSION

    def __eq__(self, other) -> bool:
        if not isinstance(other, WireFrame):
            return NotImplemented
        return (
            self.message == other.message
            and self.round_index == other.round_index
            and self.client_id == other.client_id
            and self.version == other.version
        )


def code_width(alphabet_size: int) -> int:
    """ceil(log2(alphabet_size)) bits per coordinate."""
    if alphabet_size < 1:
        raise InvalidInputException(f"Alphabet size must be >= 1, got {alphabet_size}")
    return int(alphabet_size - 1).bit_length()


def frame_cost_bits(d: int, s: int, m: int) -> int:
    """Payload bits of one frame, header excluded."""
    return d * code_width(2 * s + m + 1)


def header_size_bits() -> int:
    return HEADER_SIZE * 8


def payload_size_bytes(d: int, width: int) -> int:
    return (d * width + 7) // 8


def _noise_prob_fraction(q: float) -> Fraction:
    return Fraction(q).limit_denominator(WIRE_MAX_Q_DENOMINATOR)


def _check_field(name: str, value: int, maximum: int) -> None:
    if not 0 <= value <= maximum:
        raise InvalidInputException(f"Header field {name}={value} does not fit the frame")


def encode_frame(message: QuantizedMessage, round_index: int, client_id: int) -> bytes:
    """
    Header followed by the shifted codes (code + s) packed at a fixed width.

    Multi-byte header fields are little-endian; code bits are written
    least-significant first and bytes fill from their low bit.
    """
    message.validate()
    config = message.config
    d, s, m = message.dimension, config.quant_level, config.noise_trials

    for name, value, maximum in (
        ("d", d, _U32_MAX),
        ("s", s, _U32_MAX),
        ("m", m, _U32_MAX),
        ("round", round_index, _U64_MAX),
        ("client_id", client_id, _U32_MAX),
    ):
        _check_field(name, int(value), maximum)

    q = _noise_prob_fraction(config.noise_prob)
    header = struct.pack(
        WIRE_HEADER_FORMAT,
        WIRE_MAGIC,
        WIRE_VERSION,
        d,
        s,
        m,
        q.numerator,
        q.denominator,
        float(config.clip_bound),
        int(round_index),
        int(client_id),
    )

    width = code_width(config.alphabet_size)
    if d == 0:
        return header

    shifted = (message.codes + s).astype(np.uint64)
    bits = (shifted[:, None] >> np.arange(width, dtype=np.uint64)) & np.uint64(1)
    payload = np.packbits(bits.astype(np.uint8).reshape(-1), bitorder="little")
    return header + payload.tobytes()


def _parse(data: bytes, offset: int = 0) -> Tuple[WireFrame, int]:
    if len(data) - offset < HEADER_SIZE:
        raise CorruptMessageException(
            f"Frame truncated: {len(data) - offset} bytes, header needs {HEADER_SIZE}"
        )

    (
        magic,
        version,
        d,
        s,
        m,
        q_numerator,
        q_denominator,
        clip_bound,
        round_index,
        client_id,
    ) = struct.unpack_from(WIRE_HEADER_FORMAT, data, offset)

    if magic != WIRE_MAGIC:
        raise UnsupportedFormatException(f"Bad frame magic {magic!r}")
    if version != WIRE_VERSION:
        raise UnsupportedFormatException(f"Unsupported frame version {version}")
    if q_denominator == 0:
        raise CorruptMessageException("Frame noise probability has a zero denominator")

    try:
        config = BqConfig(
            clip_bound=clip_bound,
            quant_level=s,
            noise_trials=m,
            noise_prob=q_numerator / q_denominator,
        )
    except InvalidInputException as e:
        raise CorruptMessageException(f"Frame header invalid: {e}") from e

    width = code_width(config.alphabet_size)
    start = offset + HEADER_SIZE
    end = start + payload_size_bytes(d, width)
    if len(data) < end:
        raise CorruptMessageException(
            f"Frame payload truncated: expected {end - start} bytes, got {len(data) - start}"
        )

    payload = np.frombuffer(data, dtype=np.uint8, count=end - start, offset=start)
    bits = np.unpackbits(payload, bitorder="little")
    if bits[d * width :].any():
        raise CorruptMessageException("Frame pad bits are not zero")

    code_bits = bits[: d * width].reshape(d, width).astype(np.uint64)
    shifted = (code_bits << np.arange(width, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)
    if d and int(shifted.max()) > 2 * s + m:
        raise CorruptMessageException(
            f"Frame code {int(shifted.max()) - s} outside alphabet [-{s}, {s + m}]"
        )

    message = QuantizedMessage(codes=shifted.astype(np.int64) - s, config=config)
    return WireFrame(message, int(round_index), int(client_id), int(version)), end


def parse_frame(data: bytes) -> WireFrame:
    frame, end = _parse(data)
    if end != len(data):
        raise CorruptMessageException(
            f"Frame has {len(data) - end} trailing bytes after the payload"
        )
    return frame


def decode_frame(data: bytes) -> QuantizedMessage:
    return parse_frame(data).message


def write_trace(path: str, frames: Iterable[bytes]) -> int:
    """Write frames back to back; returns the bytes written."""
    written = 0
    with open(path, "wb") as f:
        for frame in frames:
            f.write(frame)
            written += len(frame)
    return written


def read_trace(path: str) -> List[WireFrame]:
    with open(path, "rb") as f:
        data = f.read()

    frames = []
    offset = 0
    while offset < len(data):
        frame, offset = _parse(data, offset)
        frames.append(frame)
    return frames
