"""BQ wire frames"""
from .WireFrame import (
    HEADER_SIZE,
    WireFrame,
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
