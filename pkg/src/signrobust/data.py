"""Images, datasets, PPM I/O and the synthetic sign generator.

An image is a ``(H, W, 3)`` float64 array with values in [0, 1]. The network
consumes the planar normalized form ``(3, H, W)`` in [-1, 1] produced by
:func:`normalize`.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DecodeError, IngestionError, RangeError
from .tensor import DTYPE, Rng, derive_seed

PPM_SUFFIXES = (".ppm", ".pnm")


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, 3) in [0, 1]
    labels: np.ndarray  # (N,) int64
    class_names: list

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[-1] != 3:
            raise DataError(f"images must be (N, H, W, 3), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise DataError("images and labels differ in length")
        if np.any(self.labels < 0) or np.any(self.labels >= len(self.class_names)):
            raise DataError("label outside the class catalogue")

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.images, self.labels.tolist()))

    @property
    def side(self) -> int:
        return self.images.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], list(self.class_names))

    def normalized(self) -> np.ndarray:
        return normalize(self.images)


# --- normalization --------------------------------------------------------


def normalize(img) -> np.ndarray:
    """Map [0, 1] pixels to [-1, 1] via (p - 0.5) / 0.5, channel-last to planar.

    Works on one ``(H, W, 3)`` image or a stack ``(N, H, W, 3)``.
    """
    img = np.asarray(img, dtype=DTYPE)
    return np.ascontiguousarray(np.moveaxis((img - 0.5) / 0.5, -1, -3))


def denormalize(t) -> np.ndarray:
    t = np.asarray(t, dtype=DTYPE)
    if t.size and (t.min() < -1.0 or t.max() > 1.0):
        raise RangeError(f"normalized values outside [-1, 1]: [{t.min()}, {t.max()}]")
    return np.ascontiguousarray(np.moveaxis(t * 0.5 + 0.5, -3, -1))


# --- PPM ------------------------------------------------------------------

_WS = b" \t\n\r\v\f"


def _header_token(data: bytes, pos: int):
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch in _WS:
            pos += 1
        elif ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DecodeError("unexpected end of PPM header", start)
    return data[start:pos], start, pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary P6 stream with maxval 255 into an image."""
    if data[:2] != b"P6":
        raise DecodeError(f"bad magic {data[:2]!r}, expected b'P6'", 0)
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok, at, pos = _header_token(data, pos)
        if not tok.isdigit():
            raise DecodeError(f"{name} is not a decimal number: {tok!r}", at)
        fields.append((int(tok), at))
    (w, _), (h, _), (maxval, at) = fields
    if maxval != 255:
        raise DecodeError(f"maxval must be 255, got {maxval}", at)
    if w <= 0 or h <= 0:
        raise DecodeError(f"bad dimensions {w}x{h}", fields[0][1])
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise DecodeError("missing whitespace after maxval", pos)
    pos += 1
    need = w * h * 3
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise DecodeError(f"short pixel payload: {len(payload)} of {need} bytes", pos + len(payload))
    px = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return px.astype(DTYPE) / 255.0


def to_bytes8(img) -> np.ndarray:
    img = np.asarray(img, dtype=DTYPE)
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def encode_ppm(img) -> bytes:
    px = to_bytes8(img)
    h, w, _ = px.shape
    return b"P6\n%d %d\n255\n" % (w, h) + px.tobytes()


def write_ppm(img, path):
    Path(path).write_bytes(encode_ppm(img))


def read_image(path) -> np.ndarray:
    """Read a PPM natively; other formats go through Pillow if it is installed."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(path, exc) from exc
    if data[:2] == b"P6" or path.suffix.lower() in PPM_SUFFIXES:
        try:
            return decode_ppm(data)
        except DecodeError as exc:
            raise IngestionError(path, exc) from exc
    try:
        from PIL import Image as PILImage
    except ImportError as exc:
        raise IngestionError(path, "not a P6 PPM and Pillow is unavailable") from exc
    try:
        with PILImage.open(path) as im:
            px = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except Exception as exc:  # Pillow raises a zoo of types for bad input
        raise IngestionError(path, exc) from exc
    return px.astype(DTYPE) / 255.0


# --- resizing -------------------------------------------------------------


def _bilinear_axis(n_in, n_out):
    pos = (np.arange(n_out, dtype=DTYPE) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(img, out_h, out_w=None) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping."""
    img = np.asarray(img, dtype=DTYPE)
    out_w = out_h if out_w is None else out_w
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    r0, r1, fr = _bilinear_axis(h, out_h)
    c0, c1, fc = _bilinear_axis(w, out_w)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bot = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return np.clip(top * (1 - fr) + bot * fr, 0.0, 1.0)


# --- directory datasets ---------------------------------------------------


def load_directory(root, target_side: int) -> Dataset:
    """Load ``root/<class_name>/<image>`` files.

    Class ids follow the byte-wise sorted order of the class directory names;
    files inside a class are read in sorted order too. Hidden entries are
    skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(root, "not a directory")
    class_dirs = sorted((p for p in root.iterdir() if p.is_dir() and not p.name.startswith(".")),
                        key=lambda p: p.name.encode())
    if not class_dirs:
        raise IngestionError(root, "no class subdirectories")
    images, labels = [], []
    for cid, d in enumerate(class_dirs):
        files = sorted((p for p in d.iterdir() if p.is_file() and not p.name.startswith(".")),
                       key=lambda p: p.name.encode())
        if not files:
            warnings.warn(f"class directory {d} is empty", stacklevel=2)
        for f in files:
            images.append(resize_bilinear(read_image(f), target_side))
            labels.append(cid)
    names = [d.name for d in class_dirs]
    if not images:
        return Dataset(np.zeros((0, target_side, target_side, 3)), np.zeros(0, np.int64), names)
    return Dataset(np.stack(images), np.array(labels), names)


def save_directory(ds: Dataset, root):
    """Write ``ds`` as one PPM per example under ``root/<class_name>/``."""
    root = Path(root)
    width = max(5, len(str(len(ds))))
    for name in ds.class_names:
        (root / name).mkdir(parents=True, exist_ok=True)
    for i, (img, label) in enumerate(ds):
        write_ppm(img, root / ds.class_names[label] / f"{i:0{width}d}.ppm")


# --- splitting ------------------------------------------------------------


def stratified_split(ds: Dataset, test_fraction: float = 0.2, seed: int = 42):
    """Per-class seeded split; each class sends round(n_c * fraction) examples to test.

    A class with at least two examples contributes at least one test and one
    train example. Single-example classes stay entirely in train.
    """
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    test_idx = []
    for c in range(len(ds.class_names)):
        members = np.flatnonzero(ds.labels == c)
        n = len(members)
        if n == 1:
            warnings.warn(f"class {ds.class_names[c]!r} has a single example; kept in train",
                          stacklevel=2)
            continue
        if n == 0:
            continue
        k = min(max(int(np.floor(n * test_fraction + 0.5)), 1), n - 1)
        order = Rng(derive_seed(seed, c)).permutation(n)
        test_idx.extend(members[order[:k]].tolist())
    is_test = np.zeros(len(ds), dtype=bool)
    is_test[test_idx] = True
    return ds.subset(np.flatnonzero(~is_test)), ds.subset(np.flatnonzero(is_test))


# --- synthetic signs ------------------------------------------------------

# Fill colours come from a small sign palette and are shared between
# templates, so colour alone never identifies a class among the first four
# (all red) and shape has to carry the decision.
_RED = (0.80, 0.08, 0.08)
_YELLOW = (0.95, 0.85, 0.10)
_BLUE = (0.10, 0.30, 0.85)
_WHITE = (0.95, 0.95, 0.95)

# (name, fill colour)
TEMPLATES = [
    ("octagon", _RED),
    ("triangle", _RED),
    ("yield", _RED),
    ("circle", _RED),
    ("diamond", _YELLOW),
    ("pentagon", _YELLOW),
    ("square", _YELLOW),
    ("ring", _YELLOW),
    ("wide_rect", _WHITE),
    ("tall_rect", _WHITE),
    ("hexagon", _BLUE),
    ("cross", _BLUE),
]

_RADIUS = 0.32
_BORDER = 1.15


def _polygon_mask(px, py, cx, cy, r, n, rot):
    """Inside test for a regular convex polygon (vertices counter-clockwise)."""
    ang = rot + 2 * np.pi * np.arange(n) / n
    vx, vy = cx + r * np.cos(ang), cy + r * np.sin(ang)
    inside = np.ones(px.shape, dtype=bool)
    for i in range(n):
        ax, ay, bx, by = vx[i], vy[i], vx[(i + 1) % n], vy[(i + 1) % n]
        inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0
    return inside


def _shape_mask(name, px, py, cx, cy, r):
    dx, dy = px - cx, py - cy
    if name == "octagon":
        return _polygon_mask(px, py, cx, cy, r, 8, np.pi / 8)
    if name == "triangle":  # apex up (image y grows downward)
        return _polygon_mask(px, py, cx, cy, r, 3, -np.pi / 2)
    if name == "yield":
        return _polygon_mask(px, py, cx, cy, r, 3, np.pi / 2)
    if name == "circle":
        return dx * dx + dy * dy <= r * r
    if name == "square":
        return (np.abs(dx) <= 0.8 * r) & (np.abs(dy) <= 0.8 * r)
    if name == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    if name == "pentagon":
        return _polygon_mask(px, py, cx, cy, r, 5, -np.pi / 2)
    if name == "hexagon":
        return _polygon_mask(px, py, cx, cy, r, 6, 0.0)
    if name == "wide_rect":
        return (np.abs(dx) <= r) & (np.abs(dy) <= 0.5 * r)
    if name == "tall_rect":
        return (np.abs(dx) <= 0.5 * r) & (np.abs(dy) <= r)
    if name == "cross":
        arm = 0.33 * r
        return ((np.abs(dx) <= r) & (np.abs(dy) <= arm)) | ((np.abs(dx) <= arm) & (np.abs(dy) <= r))
    if name == "ring":
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.55 * r) ** 2)
    raise ConfigError(f"unknown template {name!r}")


def render_sign(class_id: int, side: int, rng: Rng) -> np.ndarray:
    name, fill = TEMPLATES[class_id]
    fill = np.array(fill)
    centre = 0.5 + rng.uniform(2, -0.1, 0.1)
    background = rng.uniform(3, 0.15, 0.85)
    brightness = float(rng.uniform((), 0.8, 1.2))
    noise = rng.normal((side, side, 3), std=0.02)

    coords = (np.arange(side) + 0.5) / side
    px, py = np.meshgrid(coords, coords)
    cx, cy = centre
    inner = _shape_mask(name, px, py, cx, cy, _RADIUS)
    outer = _shape_mask(name, px, py, cx, cy, _RADIUS * _BORDER)
    border = 0.05 if fill.mean() > 0.6 else 0.95

    img = np.empty((side, side, 3))
    img[:] = background
    img[outer] = border
    img[inner] = fill
    img = np.clip(img * brightness + noise, 0.0, 1.0)
    # quantise to 8-bit levels so datasets survive a PPM round trip exactly
    return to_bytes8(img).astype(DTYPE) / 255.0


def synth_signs(classes: int = 4, per_class: int = 200, side: int = 32, seed: int = 42) -> Dataset:
    """Seeded sign-like dataset, class-major order, one template per class."""
    if classes < 2 or classes > len(TEMPLATES):
        raise ConfigError(f"classes must be in [2, {len(TEMPLATES)}], got {classes}")
    if per_class < 1:
        raise ConfigError("per_class must be >= 1")
    if side < 16:
        raise ConfigError("side must be >= 16")
    images = np.empty((classes * per_class, side, side, 3))
    for c in range(classes):
        for i in range(per_class):
            images[c * per_class + i] = render_sign(c, side, Rng(derive_seed(seed, c, i)))
    labels = np.repeat(np.arange(classes), per_class)
    names = [f"{c:02d}_{TEMPLATES[c][0]}" for c in range(classes)]
    return Dataset(images, labels, names)


def parse_kv(tokens) -> dict:
    """Parse ``key=value`` tokens (used by the CLI's --synth)."""
    out = {}
    for tok in tokens:
        m = re.fullmatch(r"([A-Za-z_-]+)=(.+)", tok)
        if not m:
            raise ConfigError(f"expected key=value, got {tok!r}")
        out[m.group(1).replace("-", "_")] = m.group(2)
    return out
