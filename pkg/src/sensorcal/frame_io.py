"""Raw frame containers and bit-exact persistence.

Frames are 16-bit single-channel images in DN. On disk they are binary PGM
(P5, maxval 65535, big-endian samples) with an optional JSON sidecar
``<name>.pgm.json`` carrying CFA, exposure and ISO. Stacks are described by a
JSON manifest listing frame paths and acquisition metadata.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

CHANNELS = ("R", "G1", "G2", "B")
MANIFEST_FORMAT = "sensorcal-manifest"
STACK_KINDS = ("dark", "flat", "scene")


class FrameFormatError(ValueError):
    """Malformed frame file header or sidecar."""


class FrameSizeError(FrameFormatError):
    """Declared image size does not match the number of stored samples."""


class StackInconsistencyError(ValueError):
    """Frames in a stack disagree on geometry, CFA or bit depth."""


@dataclass(frozen=True)
class CfaLayout:
    """2x2 Bayer tile. ``pattern[row][col]`` is the tag at that tile position.

    The green sharing a row with red is ``G1``; the other is ``G2``.
    """

    pattern: tuple[tuple[str, str], tuple[str, str]] = (("R", "G1"), ("G2", "B"))

    def __post_init__(self):
        tags = [t for row in self.pattern for t in row]
        if len(self.pattern) != 2 or any(len(r) != 2 for r in self.pattern):
            raise ValueError("CFA pattern must be a 2x2 grid")
        if sorted(tags) != sorted(CHANNELS):
            raise ValueError(f"CFA pattern must hold R, G1, G2, B exactly once, got {tags}")

    @classmethod
    def from_string(cls, name: str) -> "CfaLayout":
        """Build from a Bayer code such as ``"RGGB"`` or ``"GRBG"``."""
        code = name.strip().upper()
        if len(code) != 4 or sorted(code) != sorted("RGGB"):
            raise ValueError(f"unknown CFA pattern {name!r}")
        tiles = [code[0:2], code[2:4]]
        red_row = 0 if "R" in tiles[0] else 1
        out = []
        for r, row in enumerate(tiles):
            tags = []
            for c in row:
                if c == "G":
                    tags.append("G1" if r == red_row else "G2")
                else:
                    tags.append(c)
            out.append(tuple(tags))
        return cls(tuple(out))

    @property
    def name(self) -> str:
        return "".join(t[0] for row in self.pattern for t in row)

    @property
    def origin(self) -> str:
        return self.pattern[0][0]

    def offset(self, tag: str) -> tuple[int, int]:
        """(row, col) of ``tag`` inside the 2x2 tile."""
        for r in range(2):
            for c in range(2):
                if self.pattern[r][c] == tag:
                    return r, c
        raise KeyError(f"channel {tag!r} not in CFA {self.name}")

    def shifted(self, x0: int, y0: int) -> "CfaLayout":
        """Layout seen by a crop whose top-left corner is at (x0, y0)."""
        p = self.pattern
        return CfaLayout(tuple(
            tuple(p[(r + y0) % 2][(c + x0) % 2] for c in range(2)) for r in range(2)
        ))

    def tag_map(self, height: int, width: int) -> np.ndarray:
        """Array of channel tags for every pixel of a ``height x width`` frame."""
        tile = np.array(self.pattern, dtype=object)
        reps = (-(-height // 2), -(-width // 2))
        return np.tile(tile, reps)[:height, :width]


@dataclass(frozen=True)
class Roi:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.x < 0 or self.y < 0:
            raise ValueError(f"invalid ROI {self}")

    @classmethod
    def parse(cls, text: str) -> "Roi":
        parts = [int(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"ROI must be X,Y,W,H, got {text!r}")
        return cls(*parts)

    @classmethod
    def centered(cls, frame_width: int, frame_height: int, width: int, height: int | None = None) -> "Roi":
        """Centered ROI clipped to the frame, origin snapped to the CFA period."""
        height = width if height is None else height
        w, h = min(width, frame_width), min(height, frame_height)
        x = ((frame_width - w) // 2) & ~1
        y = ((frame_height - h) // 2) & ~1
        return cls(x, y, w, h)

    def check_within(self, width: int, height: int) -> None:
        if self.x + self.width > width or self.y + self.height > height:
            raise ValueError(f"ROI {self} exceeds frame {width}x{height}")

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.width, self.height)


@dataclass(frozen=True, eq=False)
class Frame:
    """One raw frame. ``data`` is a read-only ``uint16`` array of shape (height, width)."""

    data: np.ndarray
    cfa: CfaLayout = field(default_factory=CfaLayout)
    exposure: float | None = None
    iso: int | None = None
    bit_depth: int = 16

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"frame data must be 2-D, got shape {data.shape}")
        if data.dtype != np.uint16:
            if data.size and (data.min() < 0 or data.max() > 65535):
                raise ValueError("frame data outside the 16-bit DN range")
            data = data.astype(np.uint16)
        if not 1 <= self.bit_depth <= 16:
            raise ValueError(f"bit depth must be in 1..16, got {self.bit_depth}")
        ceiling = (1 << self.bit_depth) - 1
        if data.size and int(data.max()) > ceiling:
            raise ValueError(f"DN {int(data.max())} exceeds {self.bit_depth}-bit ceiling {ceiling}")
        if self.exposure is not None and not self.exposure >= 0:
            raise ValueError(f"exposure must be >= 0, got {self.exposure}")
        data = data.copy() if data.flags.writeable else data
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "Frame":
        return replace(self, data=data)


@dataclass
class FrameStack:
    """Frames sharing geometry and CFA, grouped by exposure (ascending)."""

    frames: list[Frame]
    kind: str = "flat"
    exposure_normalization: float = 1.0

    def __post_init__(self):
        if self.kind not in STACK_KINDS:
            raise ValueError(f"stack kind must be one of {STACK_KINDS}, got {self.kind!r}")
        if self.frames:
            f0 = self.frames[0]
            for i, f in enumerate(self.frames[1:], 1):
                if f.data.shape != f0.data.shape:
                    raise StackInconsistencyError(
                        f"frame {i} is {f.width}x{f.height}, frame 0 is {f0.width}x{f0.height}")
                if f.cfa != f0.cfa:
                    raise StackInconsistencyError(f"frame {i} CFA {f.cfa.name} != {f0.cfa.name}")
                if f.bit_depth != f0.bit_depth:
                    raise StackInconsistencyError(f"frame {i} bit depth differs")
        if self.kind == "flat":
            for i, f in enumerate(self.frames):
                if f.exposure is None or f.exposure <= 0:
                    raise ValueError(f"flat frame {i} needs a strictly positive exposure")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].data.shape

    @property
    def cfa(self) -> CfaLayout:
        return self.frames[0].cfa

    @property
    def bit_depth(self) -> int:
        return self.frames[0].bit_depth

    @property
    def groups(self) -> dict[float | None, list[int]]:
        """Exposure -> frame indices, exposures ascending, dark (None) first."""
        out: dict[float | None, list[int]] = {}
        for i, f in enumerate(self.frames):
            out.setdefault(f.exposure, []).append(i)
        return dict(sorted(out.items(), key=lambda kv: -1.0 if kv[0] is None else kv[0]))

    @property
    def exposures(self) -> list[float | None]:
        return list(self.groups)

    def group(self, exposure: float | None) -> "FrameStack":
        idx = self.groups[exposure]
        return FrameStack([self.frames[i] for i in idx], kind=self.kind,
                          exposure_normalization=self.exposure_normalization)

    def cube(self, dtype=np.float64) -> np.ndarray:
        """All frames as an (n, height, width) array."""
        return np.stack([f.data for f in self.frames]).astype(dtype, copy=False)


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 PGM into a ``uint16`` array."""
    raw = Path(path).read_bytes()
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise FrameFormatError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FrameFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FrameFormatError(f"{path}: non-integer PGM header field") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FrameFormatError(f"{path}: bad PGM dimensions or maxval")
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise FrameFormatError(f"{path}: missing whitespace after PGM header")
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    payload = raw[pos:]
    expected = width * height * dtype.itemsize
    if len(payload) != expected:
        raise FrameSizeError(
            f"{path}: header declares {width}x{height} ({expected} bytes), file holds {len(payload)}")
    return np.frombuffer(payload, dtype=dtype).reshape(height, width).astype(np.uint16)


def write_pgm(path, data: np.ndarray, maxval: int = 65535) -> None:
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError("PGM data must be 2-D")
    if data.size and (data.min() < 0 or data.max() > maxval):
        raise ValueError(f"PGM samples must lie in 0..{maxval}")
    h, w = data.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(data.astype(dtype).tobytes())


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def load_frame(path, cfa: CfaLayout | None = None, exposure: float | None = None,
               iso: int | None = None, bit_depth: int | None = None) -> Frame:
    """Load a frame from ``.pgm`` or flat big-endian ``.raw`` plus sidecar.

    Explicit keyword arguments override sidecar values.
    """
    path = Path(path)
    meta = {}
    side = _sidecar(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FrameFormatError(f"{side}: invalid JSON sidecar") from exc
    if path.suffix.lower() in (".raw", ".bin"):
        if "width" not in meta or "height" not in meta:
            raise FrameFormatError(f"{path}: flat binary frames need width/height in the sidecar")
        payload = path.read_bytes()
        w, h = int(meta["width"]), int(meta["height"])
        if len(payload) != 2 * w * h:
            raise FrameSizeError(f"{path}: sidecar declares {w}x{h}, file holds {len(payload) // 2} samples")
        data = np.frombuffer(payload, dtype=">u2").reshape(h, w).astype(np.uint16)
    else:
        data = read_pgm(path)
    if cfa is None:
        cfa = CfaLayout.from_string(meta.get("cfa_pattern", "RGGB"))
    return Frame(
        data,
        cfa=cfa,
        exposure=exposure if exposure is not None else meta.get("exposure"),
        iso=iso if iso is not None else meta.get("iso"),
        bit_depth=bit_depth if bit_depth is not None else int(meta.get("bit_depth", 16)),
    )


def write_frame(path, frame: Frame, sidecar: bool = True) -> None:
    path = Path(path)
    if path.suffix.lower() in (".raw", ".bin"):
        path.write_bytes(frame.data.astype(">u2").tobytes())
        sidecar = True
    else:
        write_pgm(path, frame.data)
    if sidecar:
        meta = {
            "width": frame.width,
            "height": frame.height,
            "cfa_pattern": frame.cfa.name,
            "bit_depth": frame.bit_depth,
            "exposure": frame.exposure,
            "iso": frame.iso,
        }
        _sidecar(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------
def load_manifest(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FrameFormatError(f"{path}: manifest is not valid JSON") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("frames"), list):
        raise FrameFormatError(f"{path}: manifest needs a 'frames' list")
    return doc


def load_stack(manifest_path) -> FrameStack:
    """Load every frame listed in a manifest.

    Each frame entry has ``path`` and either ``exposure`` (relative units) or
    ``exposure_time`` (seconds, divided by the manifest-level
    ``exposure_normalization``). ``kind``, ``cfa_pattern``, ``bit_depth`` and
    ``iso`` may be set at manifest level and overridden per frame, but the
    resulting stack must be consistent.
    """
    manifest_path = Path(manifest_path)
    doc = load_manifest(manifest_path)
    base = manifest_path.parent
    norm = float(doc.get("exposure_normalization", 1.0))
    if norm <= 0:
        raise FrameFormatError("exposure_normalization must be positive")
    kinds = {doc.get("kind", "flat")}
    frames = []
    for i, entry in enumerate(doc["frames"]):
        if "path" not in entry:
            raise FrameFormatError(f"{manifest_path}: frame entry {i} has no path")
        fpath = base / entry["path"]
        if not fpath.exists():
            raise FileNotFoundError(f"{manifest_path}: frame {i} missing: {fpath}")
        kinds.add(entry.get("kind", doc.get("kind", "flat")))
        exposure = entry.get("exposure")
        if exposure is None and entry.get("exposure_time") is not None:
            exposure = float(entry["exposure_time"]) / norm
        cfa_name = entry.get("cfa_pattern", doc.get("cfa_pattern"))
        depth = entry.get("bit_depth", doc.get("bit_depth"))
        frames.append(load_frame(
            fpath,
            cfa=CfaLayout.from_string(cfa_name) if cfa_name else None,
            exposure=float(exposure) if exposure is not None else None,
            iso=entry.get("iso", doc.get("iso")),
            bit_depth=int(depth) if depth is not None else None,
        ))
    if len(kinds) != 1:
        raise StackInconsistencyError(f"{manifest_path}: mixed stack kinds {sorted(kinds)}")
    return FrameStack(frames, kind=kinds.pop(), exposure_normalization=norm)


def write_stack(directory, stack: FrameStack, prefix: str = "frame", extra: dict | None = None) -> Path:
    """Write frames as PGM plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, f in enumerate(stack.frames):
        name = f"{prefix}_{i:04d}.pgm"
        write_frame(directory / name, f, sidecar=False)
        entries.append({"path": name, "exposure": f.exposure, "iso": f.iso})
    doc = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "kind": stack.kind,
        "cfa_pattern": stack.cfa.name if stack.frames else "RGGB",
        "bit_depth": stack.bit_depth if stack.frames else 16,
        "exposure_normalization": stack.exposure_normalization,
    }
    if extra:
        doc.update(extra)
    doc["frames"] = entries
    out = directory / "manifest.json"
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return out


def subtract_blo(frame: Frame, blo: float) -> Frame:
    """Remove the black level offset, clamping at zero DN."""
    if blo < 0:
        raise ValueError(f"black level offset must be >= 0, got {blo}")
    if blo == 0:
        return frame
    out = np.clip(np.rint(frame.data.astype(np.float64) - blo), 0, None).astype(np.uint16)
    return frame.with_data(out)


# ---------------------------------------------------------------------------
# Float images (HDR output)
# ---------------------------------------------------------------------------
def write_float_image(path, data: np.ndarray, meta: dict | None = None) -> None:
    """32-bit little-endian float flat binary with a JSON sidecar."""
    path = Path(path)
    data = np.asarray(data, dtype="<f4")
    path.write_bytes(data.tobytes())
    side = {"width": int(data.shape[1]), "height": int(data.shape[0]), "dtype": "float32-le"}
    if meta:
        side.update(meta)
    _sidecar(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_float_image(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    w, h = int(meta["width"]), int(meta["height"])
    payload = path.read_bytes()
    if len(payload) != 4 * w * h:
        raise FrameSizeError(f"{path}: sidecar declares {w}x{h}, file holds {len(payload) // 4} floats")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64), meta
