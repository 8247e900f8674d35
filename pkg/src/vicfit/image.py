"""Physical image ingestion and subpixel sampling.

Images are normalized to luminance f in [0, 1] by a min-max map. The internal
convention is fiber brighter than background (matching the bright-centered
virtual profile); dark-fiber inputs are inverted on load. Pixel centers sit at
integer (col, row) coordinates -- no half-pixel offset -- so exported
coordinates match common viewers.

Subpixel access uses Catmull-Rom bicubic interpolation over the 4x4 pixel
neighborhood: it reproduces pixel values at the nodes and linear ramps
exactly, and is the standard interpolating cubic in subpixel DIC practice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

from .errors import DegenerateImage, DomainError, IoError, OutOfBounds
from .geometry import MeanLine, ShapeParams, mean_line
from .virtual_beam import VirtualBeam

FIBER_BRIGHT = "bright"
FIBER_DARK = "dark"

# Rec. 709 luma weights for color inputs
_LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass
class Raster:
    """Immutable grayscale image with normalized luminance."""

    width: int
    height: int
    f: np.ndarray = field(repr=False)
    polarity: str = FIBER_BRIGHT

    def __post_init__(self):
        self.f = np.ascontiguousarray(self.f, dtype=float)
        if self.f.shape != (self.height, self.width):
            raise ValueError(f"f shape {self.f.shape} != (height, width)")
        self.f.flags.writeable = False


def _read_pgm(path: str) -> np.ndarray:
    """Minimal P2/P5 PGM reader, maxval up to 65535."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    i = 0
    # header: magic, width, height, maxval, with '#' comments
    while len(tokens) < 4:
        if i >= len(data):
            raise IoError(f"{path}: truncated PGM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    magic = tokens[0].decode("ascii", "replace")
    if magic not in ("P2", "P5"):
        raise IoError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise IoError(f"{path}: bad PGM header") from exc
    if not (width > 0 and height > 0 and 0 < maxval < 65536):
        raise IoError(f"{path}: bad PGM dimensions/maxval")

    if magic == "P5":
        i += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        count = width * height
        if len(data) - i < count * dtype.itemsize:
            raise IoError(f"{path}: truncated PGM data")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=i)
    else:
        try:
            arr = np.array(data[i:].split(), dtype=np.uint32)
        except ValueError as exc:
            raise IoError(f"{path}: bad ASCII PGM data") from exc
        if arr.size < width * height:
            raise IoError(f"{path}: truncated PGM data")
        arr = arr[: width * height]
    return arr.astype(float).reshape(height, width)


def load(path: str, polarity: str = FIBER_BRIGHT) -> Raster:
    """Load an 8/16-bit grayscale PNG or PGM (P2/P5) and normalize it.

    Color PNGs are converted with Rec. 709 luma weights. Raises IoError for
    unreadable files and DegenerateImage for constant images.
    """
    if polarity not in (FIBER_BRIGHT, FIBER_DARK):
        raise DomainError(f"polarity must be '{FIBER_BRIGHT}' or '{FIBER_DARK}'")
    p = str(path)
    if p.lower().endswith((".pgm", ".pnm")):
        raw = _read_pgm(p)
    else:
        try:
            with PILImage.open(p) as img:
                img.load()
                if img.mode in ("RGB", "RGBA", "P"):
                    rgb = np.asarray(img.convert("RGB"), dtype=float)
                    raw = rgb @ _LUMA
                else:
                    raw = np.asarray(img, dtype=float)
        except Exception as exc:
            raise IoError(f"cannot read image {p}: {exc}") from exc
        if raw.ndim != 2:
            raise IoError(f"{p}: expected grayscale, got shape {raw.shape}")
    return from_array(raw, polarity)


def from_array(raw: np.ndarray, polarity: str = FIBER_BRIGHT) -> Raster:
    """Normalize a raw luminance array into a Raster (min-max to [0, 1])."""
    raw = np.asarray(raw, dtype=float)
    if polarity == FIBER_DARK:
        raw = -raw
    lo, hi = float(raw.min()), float(raw.max())
    if hi - lo <= 0:
        raise DegenerateImage("constant image: cannot normalize luminance")
    f = (raw - lo) / (hi - lo)
    return Raster(width=raw.shape[1], height=raw.shape[0], f=f, polarity=polarity)


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Kernel weights for the 4 neighbors at offsets -1, 0, 1, 2. Shape (4, n)."""
    t2 = t * t
    t3 = t2 * t
    return np.stack([
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ])


def sample(raster: Raster, X) -> np.ndarray | float:
    """Bicubic luminance at subpixel points X = (x1, x2) = (col, row).

    Accepts one point (2,) or many (n, 2). The 4x4 support must lie inside
    the image; otherwise OutOfBounds carries the first offending point.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    pts = X.reshape(-1, 2)
    col = pts[:, 0]
    row = pts[:, 1]
    c0 = np.floor(col).astype(np.int64)
    r0 = np.floor(row).astype(np.int64)
    bad = (c0 < 1) | (c0 + 2 > raster.width - 1) | (r0 < 1) | (r0 + 2 > raster.height - 1)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise OutOfBounds(pts[idx])
    tc = col - c0
    tr = row - r0
    wc = _catmull_rom_weights(tc)          # (4, n)
    wr = _catmull_rom_weights(tr)          # (4, n)
    f = raster.f
    out = np.zeros(len(pts))
    for i in range(4):
        rows = r0 + (i - 1)
        acc = np.zeros(len(pts))
        for j in range(4):
            acc += wc[j] * f[rows, c0 + (j - 1)]
        out += wr[i] * acc
    return float(out[0]) if single else out


@dataclass
class UnwrapResult:
    """Physical image resampled into the (s, r) frame of the virtual beam."""

    strip: np.ndarray       # (n_s, n_r), row i = station s_i, col j = offset r_j
    s: np.ndarray
    r: np.ndarray
    asymmetry: float


def unwrap(raster: Raster, p: ShapeParams, basis, beam: VirtualBeam,
           line: MeanLine | None = None) -> UnwrapResult:
    """Resample f over the beam mesh and measure mirror asymmetry in r.

    At a perfect fit the strip is symmetric about r = 0 whatever the fiber
    shape; the asymmetry metric is the RMS of strip(s, r) - strip(s, -r).
    """
    if line is None:
        line = mean_line(p, basis, beam.n_s)
    r = beam.r_grid()
    X = line.x[:, None, :] + r[None, :, None] * line.nu[:, None, :]
    strip = sample(raster, X.reshape(-1, 2)).reshape(beam.n_s, beam.n_r)
    asym = float(np.sqrt(np.mean((strip - strip[:, ::-1]) ** 2)))
    return UnwrapResult(strip=strip, s=line.s.copy(), r=r, asymmetry=asym)


def write_png(path, gray: np.ndarray) -> None:
    """Save a [0,1] float array as an 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(gray, dtype=float), 0.0, 1.0)
    PILImage.fromarray(np.round(arr * 255).astype(np.uint8), mode="L").save(path)
