import numpy as np
import pytest

from ..codec.BQCodec import BqConfig, QuantizedMessage
from ..exceptions import (
    CorruptMessageException,
    InvalidInputException,
    UnsupportedFormatException,
)
from ..utils.utils import random_stream
from ..wire import (
    HEADER_SIZE,
    code_width,
    decode_frame,
    encode_frame,
    frame_cost_bits,
    header_size_bits,
    parse_frame,
    payload_size_bytes,
    read_trace,
    write_trace,
)


def _random_message(d: int, s: int, m: int, seed: int = 1, q: float = 0.5) -> QuantizedMessage:
    config = BqConfig(clip_bound=1.0, quant_level=s, noise_trials=m, noise_prob=q)
    rng = random_stream(seed, 0, 0, 0)
    return QuantizedMessage(codes=rng.integers(-s, s + m + 1, size=d), config=config)


def test_header_size():
    assert HEADER_SIZE == 45
    assert header_size_bits() == 360


@pytest.mark.parametrize(
    "alphabet,expected",
    [(2, 1), (3, 2), (4, 2), (5, 3), (256, 8), (257, 9), (1024, 10)],
)
def test_code_width(alphabet, expected):
    assert code_width(alphabet) == expected


def test_frame_cost_of_reference_plans():
    assert frame_cost_bits(3000, 2, 251) == 24000
    assert frame_cost_bits(30000, 13, 997) == 300000
    assert payload_size_bytes(3000, 8) == 3000
    assert payload_size_bytes(2, 3) == 1


def test_payload_bit_layout():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=3)
    frame = encode_frame(QuantizedMessage(codes=[-2, 5], config=config), 7, 9)

    assert len(frame) == HEADER_SIZE + 1
    assert frame[:4] == b"BQG1"
    assert frame[HEADER_SIZE:] == b"\x38"

    parsed = parse_frame(frame)
    assert parsed.round_index == 7
    assert parsed.client_id == 9
    np.testing.assert_array_equal(parsed.message.codes, [-2, 5])
    assert parsed.message.config == config


def test_header_only_frame():
    config = BqConfig(clip_bound=1.0, quant_level=1, noise_trials=1)
    frame = encode_frame(QuantizedMessage(codes=[], config=config), 0, 0)

    assert len(frame) == HEADER_SIZE
    assert decode_frame(frame).dimension == 0


def test_eight_bit_plan_payload_is_one_byte_per_coordinate():
    message = _random_message(3000, 2, 251)
    frame = encode_frame(message, 1, 0)

    assert len(frame) == HEADER_SIZE + 3000
    assert decode_frame(frame) == message


@pytest.mark.parametrize(
    "d,s,m,q",
    [(1000, 13, 997, 0.5), (777, 3, 10, 0.3), (5, 2**20, 0, 0.5)],
)
def test_frame_round_trip(d, s, m, q):
    message = _random_message(d, s, m, seed=d, q=q)
    frame = parse_frame(encode_frame(message, 2**40, 2**31))

    assert frame.message == message
    assert frame.message.config.noise_prob == q
    assert frame.round_index == 2**40
    assert frame.client_id == 2**31


def test_bad_magic_and_version_are_unsupported():
    frame = bytearray(encode_frame(_random_message(10, 2, 5), 1, 0))

    bad_magic = bytearray(frame)
    bad_magic[0:4] = b"XXXX"
    with pytest.raises(UnsupportedFormatException):
        parse_frame(bytes(bad_magic))

    bad_version = bytearray(frame)
    bad_version[4] = 2
    with pytest.raises(UnsupportedFormatException):
        parse_frame(bytes(bad_version))


def test_truncated_and_padded_frames_are_corrupt():
    frame = encode_frame(_random_message(10, 2, 5), 1, 0)

    with pytest.raises(CorruptMessageException):
        parse_frame(frame[: HEADER_SIZE - 1])
    with pytest.raises(CorruptMessageException):
        parse_frame(frame[:-1])
    with pytest.raises(CorruptMessageException):
        parse_frame(frame + b"\x00")


def test_nonzero_pad_bits_are_corrupt():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=3)
    frame = bytearray(encode_frame(QuantizedMessage(codes=[-2, 5], config=config), 0, 0))
    frame[-1] |= 0x80

    with pytest.raises(CorruptMessageException):
        parse_frame(bytes(frame))


def test_code_outside_alphabet_is_corrupt():
    # s = 1, m = 2: five codes in three bits, shifted value 7 is unused
    config = BqConfig(clip_bound=1.0, quant_level=1, noise_trials=2)
    frame = bytearray(encode_frame(QuantizedMessage(codes=[0], config=config), 0, 0))
    frame[-1] = 0x07

    with pytest.raises(CorruptMessageException):
        parse_frame(bytes(frame))


def test_header_fields_must_fit():
    message = _random_message(4, 1, 1)

    with pytest.raises(InvalidInputException):
        encode_frame(message, -1, 0)
    with pytest.raises(InvalidInputException):
        encode_frame(message, 0, 2**32)


def test_single_bit_flips_never_escape_the_format_errors():
    original = _random_message(50, 2, 251, seed=3)
    frame = encode_frame(original, 4, 1)
    reference = parse_frame(frame)

    parsed_payload = 0
    for bit in range(len(frame) * 8):
        corrupted = bytearray(frame)
        corrupted[bit // 8] ^= 1 << (bit % 8)
        try:
            flipped = parse_frame(bytes(corrupted))
        except (CorruptMessageException, UnsupportedFormatException):
            continue

        flipped.message.validate()
        if bit < HEADER_SIZE * 8:
            np.testing.assert_array_equal(flipped.message.codes, original.codes)
            assert flipped != reference, f"Header bit {bit} flipped without a visible change"
        else:
            changed = np.flatnonzero(flipped.message.codes != original.codes)
            assert changed.tolist() == [
                (bit - HEADER_SIZE * 8) // 8
            ], f"Payload bit {bit} - expected one changed code, got {changed.tolist()}"
            parsed_payload += 1

    # payload flips stay inside the 256-code alphabet unless they reach code 255
    assert parsed_payload >= 50 * 7


def test_random_frames_round_trip():
    rng = np.random.default_rng(20240)

    for _ in range(10_000):
        s = int(rng.integers(1, 2 ** int(rng.integers(1, 21)) + 1))
        m = int(rng.integers(0, 2 ** int(rng.integers(1, 14))))
        d = int(rng.integers(0, 65))
        denominator = int(rng.integers(2, 1001))
        q = int(rng.integers(1, denominator)) / denominator
        clip_bound = float(rng.uniform(1e-3, 1e3))
        round_index = int(rng.integers(0, 2**63))
        client_id = int(rng.integers(0, 2**32))

        config = BqConfig(clip_bound=clip_bound, quant_level=s, noise_trials=m, noise_prob=q)
        message = QuantizedMessage(codes=rng.integers(-s, s + m + 1, size=d), config=config)
        frame = encode_frame(message, round_index, client_id)

        assert len(frame) == HEADER_SIZE + payload_size_bytes(d, code_width(2 * s + m + 1))
        parsed = parse_frame(frame)
        assert parsed.message == message, f"Frame with d={d}, s={s}, m={m}, q={q} changed"
        assert (parsed.round_index, parsed.client_id) == (round_index, client_id)


def test_trace_round_trip(tmp_path):
    frames = [
        encode_frame(_random_message(20, 2, 251, seed=r), r, 3) for r in range(1, 4)
    ]
    path = str(tmp_path / "client_3.bqt")

    written = write_trace(path, frames)
    assert written == sum(len(frame) for frame in frames)

    parsed = read_trace(path)
    assert [frame.round_index for frame in parsed] == [1, 2, 3]
    assert all(frame.client_id == 3 for frame in parsed)
    assert parsed[1].message == decode_frame(frames[1])

    with open(path, "ab") as f:
        f.write(b"BQ")
    with pytest.raises(CorruptMessageException):
        read_trace(path)
