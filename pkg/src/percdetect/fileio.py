"""Image ingestion (PGM, CSV) and report serialization.

PGM samples are divided by maxval, so a full-intensity object pixel reads
as 1 and the noise scale sigma is expressed in units of maxval. CSV cells
are taken verbatim.
"""
from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .detector import DetectionReport
from .errors import ImageParseError, InvalidArgumentError
from .model import GrayImage

__all__ = [
    "RunManifest",
    "parse_pgm",
    "parse_csv",
    "read_image",
    "write_pgm",
    "write_csv",
    "round_sig",
    "report_document",
    "write_report",
    "read_report",
    "dumps",
]

_WS = b" \t\r\n\v\f"


def _header_tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens, skipping '#' comments.

    Returns ``[(token, offset), ...]`` and the offset just past the last token.
    """
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i] in _WS:
            i += 1
        if i >= n:
            raise ImageParseError("truncated PGM header", offset=i)
        if data[i] == ord("#"):
            while i < n and data[i] not in b"\r\n":
                i += 1
            continue
        start = i
        while i < n and data[i] not in _WS and data[i] != ord("#"):
            i += 1
        tokens.append((data[start:i], start))
    return tokens, i


def _header_int(tok: bytes, off: int, what: str) -> int:
    if not tok.isdigit():
        raise ImageParseError(f"PGM {what} is not a positive integer: {tok!r}", offset=off)
    return int(tok)


def parse_pgm(data: bytes) -> GrayImage:
    (magic, moff), = _header_tokens(data, 1)[0]
    if magic not in (b"P2", b"P5"):
        raise ImageParseError(f"not a PGM file (magic {magic!r})", offset=moff)
    toks, end = _header_tokens(data, 4)
    width = _header_int(*toks[1], "width")
    height = _header_int(*toks[2], "height")
    maxval = _header_int(*toks[3], "maxval")
    if width < 1 or height < 1:
        raise ImageParseError("PGM dimensions must be >= 1", offset=toks[1][1])
    if not 1 <= maxval <= 65535:
        raise ImageParseError(f"PGM maxval {maxval} outside 1..65535", offset=toks[3][1])
    count = width * height
    if magic == b"P5":
        if end >= len(data) or data[end] not in _WS:
            raise ImageParseError("missing whitespace after PGM maxval", offset=end)
        start = end + 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        nbytes = count * dtype.itemsize
        if len(data) - start < nbytes:
            raise ImageParseError(
                f"PGM raster too short: need {nbytes} bytes, have {len(data) - start}", offset=len(data)
            )
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=start).astype(np.int64)
        if raw.max(initial=0) > maxval:
            bad = int(np.argmax(raw > maxval))
            raise ImageParseError(f"sample exceeds maxval {maxval}", offset=start + bad * dtype.itemsize)
    else:
        vals = []
        i = end
        n = len(data)
        while i < n:
            c = data[i]
            if c in _WS:
                i += 1
            elif c == ord("#"):
                while i < n and data[i] not in b"\r\n":
                    i += 1
            else:
                s = i
                while i < n and data[i] not in _WS and data[i] != ord("#"):
                    i += 1
                tok = data[s:i]
                if not tok.isdigit():
                    raise ImageParseError(f"non-numeric PGM sample {tok!r}", offset=s)
                v = int(tok)
                if v > maxval:
                    raise ImageParseError(f"sample {v} exceeds maxval {maxval}", offset=s)
                vals.append(v)
        if len(vals) != count:
            raise ImageParseError(f"expected {count} PGM samples, found {len(vals)}", offset=n)
        raw = np.array(vals, dtype=np.int64)
    return GrayImage(raw.reshape(height, width) / maxval)


def parse_csv(text: str) -> GrayImage:
    rows = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(cell) for cell in line.split(",")]
        except ValueError as exc:
            raise ImageParseError(f"non-numeric cell: {exc}", offset=f"line {lineno}") from None
        if not all(math.isfinite(v) for v in row):
            raise ImageParseError("non-finite cell", offset=f"line {lineno}")
        if rows and len(row) != len(rows[0]):
            raise ImageParseError(
                f"row has {len(row)} cells, expected {len(rows[0])}", offset=f"line {lineno}"
            )
        rows.append(row)
    if not rows:
        raise ImageParseError("empty CSV image", offset="line 1")
    return GrayImage(np.array(rows, dtype=np.float64))


def read_image(path: Union[str, Path], format: Optional[str] = None) -> GrayImage:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "pgm":
        return parse_pgm(path.read_bytes())
    if fmt == "csv":
        return parse_csv(path.read_text())
    raise InvalidArgumentError(f"unknown image format {fmt!r} (expected pgm or csv)")


def write_pgm(path: Union[str, Path], samples: np.ndarray, maxval: int = 255, binary: bool = True) -> None:
    """Write integer samples in ``[0, maxval]`` as P5 (binary) or P2 (ASCII)."""
    a = np.asarray(samples)
    if a.ndim != 2 or np.any(a < 0) or np.any(a > maxval) or not 1 <= maxval <= 65535:
        raise InvalidArgumentError("samples must be a 2-D array within [0, maxval], maxval <= 65535")
    h, w = a.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii")
    if binary:
        body = a.astype(">u2" if maxval > 255 else "u1").tobytes()
    else:
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in a).encode("ascii") + b"\n"
    Path(path).write_bytes(header + body)


def write_csv(path: Union[str, Path], values: np.ndarray) -> None:
    a = np.asarray(values, dtype=np.float64)
    Path(path).write_text("".join(",".join(repr(float(v)) for v in row) + "\n" for row in a))


# -- reports --------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_echo: dict
    seed: int = 0
    artifact_version: str = ""
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))

    def __post_init__(self):
        if self.command not in ("detect", "simulate", "tail", "crossings", "calibrate"):
            raise InvalidArgumentError(f"unknown command {self.command!r}")
        if not self.artifact_version:
            from . import __version__

            object.__setattr__(self, "artifact_version", __version__)

    def as_dict(self) -> dict:
        return asdict(self)


def round_sig(obj, digits: int = 9):
    """Round every float in a nested structure to ``digits`` significant digits."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{digits}g}") if math.isfinite(x) else None
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [round_sig(v, digits) for v in obj]
    return obj


def dumps(doc: dict, indent: Optional[int] = 2) -> str:
    return json.dumps(round_sig(doc), indent=indent, sort_keys=True)


def report_document(report: DetectionReport, manifest: Optional[RunManifest] = None) -> dict:
    doc = {
        "decision": report.decision,
        "detected": report.detected,
        "theta": report.theta_used,
        "phi": report.phi_used,
        "p_out": report.p_out,
        "p_im": report.p_im,
        "largest_cluster_size": report.largest_cluster_size,
        "truncated": report.truncated,
        "threshold": report.selection.as_dict(),
        "witness": report.witness_pixels.tolist(),
        "timing": {"elapsed_s": report.elapsed_s, "pixels": report.pixels},
    }
    if manifest is not None:
        doc["manifest"] = manifest.as_dict()
    return doc


def write_report(report: DetectionReport, manifest: RunManifest, path: Union[str, Path]) -> None:
    """JSON key/value tree, sorted keys, floats at 9 significant digits."""
    text = dumps(report_document(report, manifest)) + "\n"
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def read_report(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text())
