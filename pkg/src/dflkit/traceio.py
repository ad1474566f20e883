"""Wire-frame codec and the trace file format.

Measurement frames are FLAG | CID | NID | DATA: one byte each for the
flag (0 data, 1 command), the channel number (11..26) and the sending
sensor id, then K-1 RSS code bytes for data frames (command frames
carry none). In a measurement round every sensor broadcasts once per
channel in id order and sensor 1's command frame switches the network
to the next channel; a full pass over all channels yields one sample of
every (link, channel) cell.

Trace files persist RSS tensors as line-oriented text with a fully
self-describing header (sensor/channel counts, channel numbers,
quantization mapping, role, position id), so any affine code-to-dBm
mapping can be ingested unambiguously.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from io import StringIO

import numpy as np

from .channelsim import ChannelPlan
from .errors import (
    FrameChannelError,
    FrameFlagError,
    FrameLengthError,
    FrameSensorIdError,
    IncompleteRoundError,
    ProtocolOrderWarning,
    TraceConsistencyError,
    TraceFormatError,
)
from .rss import QuantizationMap, RssTensor
from .scene import Scene

TRACE_MAGIC = "#dflkit-trace v1"
CHANNEL_MIN, CHANNEL_MAX = 11, 26

FLAG_DATA = 0
FLAG_COMMAND = 1


# ---------------------------------------------------------------------------
# frame codec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    flag: int
    cid: int  # channel number
    nid: int  # transmitting sensor id
    data: bytes = b""

    def is_command(self) -> bool:
        return self.flag == FLAG_COMMAND


def _validate_frame_fields(flag: int, cid: int, nid: int, k: int) -> None:
    if flag not in (FLAG_DATA, FLAG_COMMAND):
        raise FrameFlagError(f"flag must be 0 or 1, got {flag}")
    if not (CHANNEL_MIN <= cid <= CHANNEL_MAX):
        raise FrameChannelError(f"channel {cid} outside {CHANNEL_MIN}..{CHANNEL_MAX}")
    if not (1 <= nid <= k):
        raise FrameSensorIdError(f"sensor id {nid} outside 1..{k}")


def decode_frame(raw: bytes, k: int) -> Frame:
    """Parse one frame; every malformed input raises a typed FrameError."""
    if len(raw) < 3:
        raise FrameLengthError(f"frame needs at least 3 bytes, got {len(raw)}")
    flag = raw[0]
    if flag not in (FLAG_DATA, FLAG_COMMAND):
        raise FrameFlagError(f"flag must be 0 or 1, got {flag}")
    expected = 3 + (k - 1) if flag == FLAG_DATA else 3
    if len(raw) != expected:
        kind = "data" if flag == FLAG_DATA else "command"
        raise FrameLengthError(f"{kind} frame must be {expected} bytes for K={k}, got {len(raw)}")
    cid, nid = raw[1], raw[2]
    _validate_frame_fields(flag, cid, nid, k)
    return Frame(flag=flag, cid=cid, nid=nid, data=bytes(raw[3:]))


def encode_frame(frame: Frame, k: int) -> bytes:
    """Serialize a frame; decode_frame(encode_frame(f), K) == f."""
    _validate_frame_fields(frame.flag, frame.cid, frame.nid, k)
    if frame.flag == FLAG_COMMAND:
        if frame.data:
            raise FrameLengthError("command frames carry no data")
    elif len(frame.data) != k - 1:
        raise FrameLengthError(f"data frame needs {k - 1} RSS codes for K={k}, got {len(frame.data)}")
    return bytes([frame.flag, frame.cid, frame.nid]) + bytes(frame.data)


def iter_frames(raw: bytes, k: int):
    """Split a byte stream into frames (data-frame length is implied by K)."""
    pos = 0
    while pos < len(raw):
        flag = raw[pos]
        if flag not in (FLAG_DATA, FLAG_COMMAND):
            raise FrameFlagError(f"offset {pos}: flag must be 0 or 1, got {flag}")
        size = 3 + (k - 1) if flag == FLAG_DATA else 3
        yield decode_frame(raw[pos:pos + size], k)
        pos += size


# ---------------------------------------------------------------------------
# frames <-> tensor
# ---------------------------------------------------------------------------

def _peers(k: int, sender: int) -> list[int]:
    # DATA byte order: ascending peer id, sender skipped
    return [p for p in range(1, k + 1) if p != sender]


def frames_to_tensor(frames, scene: Scene, plan: ChannelPlan,
                     quantization: QuantizationMap = QuantizationMap()) -> RssTensor:
    """Aggregate a round-robin frame sequence into an RSS tensor.

    Sensor j's data frame on channel c reports the code it measured for
    each peer's transmission, so cell (link(i, j), c) averages the two
    directed reports i->j and j->i (in dBm, then re-quantized). Each
    complete pass over the channel plan appends one sample. A command
    frame arriving before every sensor has spoken, or a truncated
    stream, raises IncompleteRoundError naming the channel and sensor;
    out-of-order senders only warn.
    """
    k = scene.n_sensors
    channel_index = {c: i for i, c in enumerate(plan.numbers)}
    # directed[s][(tx, rx, ch_idx)] = code
    samples: list[dict] = [{}]
    seen: set[int] = set()
    last_nid = 0
    current = plan.numbers[0]

    def finish_channel():
        missing = sorted(set(range(1, k + 1)) - seen)
        if missing:
            raise IncompleteRoundError(current, missing[0])

    for frame in frames:
        if frame.is_command():
            finish_channel()
            seen.clear()
            last_nid = 0
            if frame.cid == plan.numbers[0]:
                samples.append({})
            elif frame.cid not in channel_index:
                raise TraceConsistencyError(f"command switches to channel {frame.cid} not in plan")
            current = frame.cid
            continue
        if frame.cid != current:
            raise IncompleteRoundError(current, sorted(set(range(1, k + 1)) - seen)[0])
        if frame.nid in seen or frame.nid < last_nid:
            warnings.warn(
                f"sensor {frame.nid} out of turn on channel {current}", ProtocolOrderWarning,
                stacklevel=2,
            )
        seen.add(frame.nid)
        last_nid = max(last_nid, frame.nid)
        ci = channel_index[current]
        for peer, code in zip(_peers(k, frame.nid), frame.data):
            samples[-1][(peer, frame.nid, ci)] = code  # receiver == frame sender
    finish_channel()

    n_links, n_channels = scene.n_links, plan.count
    dbm = np.empty((n_links, n_channels, len(samples)))
    for s, directed in enumerate(samples):
        for link in scene.links:
            for ci in range(n_channels):
                try:
                    fwd = directed[(link.i, link.j, ci)]
                    rev = directed[(link.j, link.i, ci)]
                except KeyError:
                    raise IncompleteRoundError(plan.numbers[ci], link.i) from None
                pair = quantization.dequantize_dbm(np.array([fwd, rev]))
                dbm[link.id - 1, ci, s] = pair.mean()
    return RssTensor(codes=quantization.quantize(dbm), quantization=quantization,
                     channels=plan.numbers)


def tensor_to_frames(tensor: RssTensor, scene: Scene, plan: ChannelPlan) -> list[Frame]:
    """Emit the round-robin frame sequence that reproduces ``tensor``.

    Both directed reports of a link carry the cell's code, so
    frames_to_tensor inverts this exactly. Mostly useful for tests and
    for exercising decoders without hardware.
    """
    k = scene.n_sensors
    code_of = {}
    for link in scene.links:
        for ci in range(plan.count):
            for s in range(tensor.n_samples):
                code_of[(link.i, link.j, ci, s)] = int(tensor.codes[link.id - 1, ci, s])
    frames = []
    for s in range(tensor.n_samples):
        for ci, channel in enumerate(plan.numbers):
            for sender in range(1, k + 1):
                data = bytes(
                    code_of[(min(sender, peer), max(sender, peer), ci, s)]
                    for peer in _peers(k, sender)
                )
                frames.append(Frame(flag=FLAG_DATA, cid=channel, nid=sender, data=data))
            last = s == tensor.n_samples - 1 and ci == plan.count - 1
            if not last:
                nxt = plan.numbers[(ci + 1) % plan.count]
                frames.append(Frame(flag=FLAG_COMMAND, cid=nxt, nid=1))
    return frames


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------

@dataclass
class TraceHeader:
    k: int
    channels: tuple[int, ...]
    quantization: QuantizationMap
    scene_ref: str = "-"
    role: str = "observation"  # "calibration" | "observation"
    position_id: str = "-"
    sample_count: int = 1

    @property
    def n_links(self) -> int:
        return self.k * (self.k - 1) // 2


@dataclass
class TraceFile:
    header: TraceHeader
    tensor: RssTensor


def write_trace(path, tensor: RssTensor, k: int, scene_ref: str = "-",
                role: str = "calibration", position_id: str = "-") -> None:
    if tensor.n_links != k * (k - 1) // 2:
        raise TraceConsistencyError(
            f"tensor has {tensor.n_links} links; K={k} implies {k * (k - 1) // 2}"
        )
    lines = [
        TRACE_MAGIC,
        f"k {k}",
        f"c {tensor.n_channels}",
        "channels " + " ".join(str(c) for c in tensor.channels),
        f"quant {tensor.quantization.offset_dbm} {tensor.quantization.step_db}",
        f"scene {scene_ref}",
        f"role {role}",
        f"position {position_id}",
        f"samples {tensor.n_samples}",
        "end-header",
    ]
    body = []
    for l in range(tensor.n_links):
        for c in range(tensor.n_channels):
            for s in range(tensor.n_samples):
                body.append(f"{l + 1} {tensor.channels[c]} {s} {tensor.codes[l, c, s]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        fh.write("\n".join(body) + "\n")


def read_trace(path) -> TraceFile:
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_MAGIC:
        raise TraceFormatError(f"{path}: missing or unsupported magic line (expected {TRACE_MAGIC!r})")
    fields: dict[str, str] = {}
    body_start = None
    for ln, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if stripped == "end-header":
            body_start = ln
            break
        if not stripped or stripped.startswith("#"):
            continue
        key, _, value = stripped.partition(" ")
        fields[key] = value.strip()
    if body_start is None:
        raise TraceFormatError(f"{path}: no end-header line")
    try:
        k = int(fields["k"])
        n_channels = int(fields["c"])
        channels = tuple(int(v) for v in fields["channels"].split())
        offset, step = (float(v) for v in fields["quant"].split())
        samples = int(fields["samples"])
        role = fields.get("role", "observation")
        scene_ref = fields.get("scene", "-")
        position_id = fields.get("position", "-")
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"{path}: bad header field: {exc}") from exc
    if len(channels) != n_channels:
        raise TraceConsistencyError(f"{path}: header says c={n_channels} but lists {len(channels)} channels")
    if role not in ("calibration", "observation"):
        raise TraceFormatError(f"{path}: role must be calibration or observation, got {role!r}")

    header = TraceHeader(k=k, channels=channels, quantization=QuantizationMap(offset, step),
                         scene_ref=scene_ref, role=role, position_id=position_id,
                         sample_count=samples)
    try:
        records = np.loadtxt(StringIO("\n".join(lines[body_start:])), dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise TraceConsistencyError(f"{path}: unparseable body: {exc}") from exc
    expected = header.n_links * n_channels * samples
    if records.size == 0 or records.shape[1] != 4 or records.shape[0] != expected:
        got = 0 if records.size == 0 else records.shape[0]
        raise TraceConsistencyError(f"{path}: body has {got} records, header implies {expected}")
    chan_index = {c: i for i, c in enumerate(channels)}
    codes = np.full((header.n_links, n_channels, samples), -1, dtype=np.int64)
    for link, channel, sample, code in records:
        if not (1 <= link <= header.n_links) or channel not in chan_index \
                or not (0 <= sample < samples) or not (0 <= code <= 255):
            raise TraceConsistencyError(
                f"{path}: record ({link} {channel} {sample} {code}) outside header ranges"
            )
        codes[link - 1, chan_index[channel], sample] = code
    if np.any(codes < 0):
        l, c, s = np.argwhere(codes < 0)[0]
        raise TraceConsistencyError(
            f"{path}: missing record for link {l + 1}, channel {channels[c]}, sample {s}"
        )
    tensor = RssTensor(codes=codes.astype(np.uint8), quantization=header.quantization,
                       channels=channels)
    return TraceFile(header=header, tensor=tensor)
