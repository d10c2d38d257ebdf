"""Raw frame files and decoder-subprocess ingestion.

Frame file layout (little-endian):
    magic "TNSF" | u32 version=1 | u32 frame_count | u16 width | u16 height
    frame_count x height x width x 3 bytes of 8-bit RGB, row-major,
    frame-major

Ingestion shells out to any decoder that writes raw RGB24 frames of the
requested geometry to stdout (ffmpeg's rawvideo pipe, typically), so the
toolkit itself carries no codec dependencies.
"""

from __future__ import annotations

import shlex
import struct
import subprocess
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"TNSF"
VERSION = 1
HEADER = struct.Struct("<4sIIHH")


def write_frames(path: str | Path, frames: np.ndarray) -> None:
    """Write uint8 [frames, height, width, 3] RGB to a frame file."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[3] != 3 or frames.dtype != np.uint8:
        raise ValueError(f"expected uint8 [N,H,W,3] frames, got {frames.dtype} {frames.shape}")
    count, height, width, _ = frames.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, count, width, height))
        fh.write(np.ascontiguousarray(frames).tobytes())


def read_frames(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"{path}: truncated frame file header")
    magic, version, count, width, height = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, not a frame file")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported frame file version {version}")
    expected = HEADER.size + count * height * width * 3
    if len(data) != expected:
        raise FormatError(
            f"{path}: file size {len(data)} does not match header "
            f"({count} frames of {width}x{height} need {expected} bytes)"
        )
    payload = np.frombuffer(data, dtype=np.uint8, offset=HEADER.size)
    return payload.reshape(count, height, width, 3).copy()


def ingest(
    decoder_command: str | list[str],
    input_video: str,
    out_path: str | Path,
    width: int = 48,
    height: int = 27,
) -> int:
    """Run a decoder subprocess and wrap its raw RGB24 stream as a frame file.

    ``decoder_command`` may contain an ``{input}`` placeholder for the video
    path; without one the path is appended as the last argument. Returns the
    frame count.
    """
    if isinstance(decoder_command, str):
        argv = shlex.split(decoder_command)
    else:
        argv = list(decoder_command)
    if any("{input}" in arg for arg in argv):
        argv = [arg.replace("{input}", input_video) for arg in argv]
    else:
        argv = argv + [input_video]
    try:
        result = subprocess.run(argv, stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    except OSError as exc:
        raise FormatError(f"decoder {argv[0]!r} could not be run: {exc}") from exc
    if result.returncode != 0:
        tail = result.stderr.decode(errors="replace").strip().splitlines()[-3:]
        raise FormatError(
            f"decoder exited with status {result.returncode}: {' | '.join(tail)}"
        )
    stream = result.stdout
    frame_bytes = width * height * 3
    if len(stream) == 0:
        raise FormatError("decoder produced zero frames")
    if len(stream) % frame_bytes != 0:
        raise FormatError(
            f"decoder stream of {len(stream)} bytes contains a truncated frame "
            f"(frame size {frame_bytes})"
        )
    count = len(stream) // frame_bytes
    frames = np.frombuffer(stream, dtype=np.uint8).reshape(count, height, width, 3)
    write_frames(out_path, frames)
    return count
