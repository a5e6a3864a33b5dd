"""Synthetic font-classification dataset.

A font class is a :class:`FontSpec` (stroke width, slant, serif length)
applied to the shared glyph skeletons. Images are stored as binary PGM next
to a ``manifest.json``; the split holds out whole glyphs per class so test
characters are never seen in training for that class.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .errors import DatasetError
from .glyphs import GLYPH_IDS, SKELETONS

MANIFEST_VERSION = 1
# Skeleton unit square maps to [margin, 1 - margin] of the image.
MARGIN = 0.18
JITTER = 0.008

WIDTH_RANGE = (0.03, 0.13)
SLANT_RANGE = (-14.0, 14.0)
SERIF_RANGE = (0.0, 0.075)


@dataclass(frozen=True)
class FontSpec:
    font_id: int
    stroke_width: float
    slant: float
    serif_len: float
    jitter_seed: int

    def __post_init__(self):
        if not 0.02 <= self.stroke_width <= 0.15:
            raise ValueError(f"stroke_width {self.stroke_width} outside [0.02, 0.15]")
        if not -15.0 <= self.slant <= 15.0:
            raise ValueError(f"slant {self.slant} outside [-15, 15]")
        if not 0.0 <= self.serif_len <= 0.08:
            raise ValueError(f"serif_len {self.serif_len} outside [0, 0.08]")

    @property
    def style(self):
        return (self.stroke_width, self.slant, self.serif_len)


@dataclass(frozen=True)
class Sample:
    path: str
    font_id: int
    glyph_id: str


@dataclass
class DatasetManifest:
    image_size: int
    fonts: list
    samples: list
    split: dict = field(default_factory=dict)
    version: int = MANIFEST_VERSION
    root: Path | None = None

    @property
    def num_classes(self):
        return len(self.fonts)

    def indices(self, split):
        if split == "all":
            return list(range(len(self.samples)))
        if split not in ("train", "test"):
            raise DatasetError(f"unknown split {split!r}")
        if not self.split:
            raise DatasetError("manifest has no split assignment; run split_dataset first")
        return list(self.split[split])

    def to_json(self):
        doc = {
            "version": self.version,
            "image_size": self.image_size,
            "fonts": [asdict(f) for f in self.fonts],
            "samples": [asdict(s) for s in self.samples],
            "split": self.split,
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text, root=None):
        doc = json.loads(text)
        if doc.get("version") != MANIFEST_VERSION:
            raise DatasetError(f"unsupported manifest version {doc.get('version')!r}")
        return cls(
            image_size=int(doc["image_size"]),
            fonts=[FontSpec(**f) for f in doc["fonts"]],
            samples=[Sample(**s) for s in doc["samples"]],
            split=doc.get("split", {}),
            root=Path(root) if root is not None else None,
        )

    def save(self, out_dir=None):
        out_dir = Path(out_dir if out_dir is not None else self.root)
        (out_dir / "manifest.json").write_text(self.to_json(), encoding="utf-8")
        return out_dir / "manifest.json"


def load_manifest(data_dir):
    data_dir = Path(data_dir)
    path = data_dir / "manifest.json"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read manifest {path}: {exc.strerror}") from exc
    return DatasetManifest.from_json(text, root=data_dir)


# ---------------------------------------------------------------------------
# PGM

def write_pgm(path, image):
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read image {path}: {exc.strerror}") from exc
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DatasetError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise DatasetError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise DatasetError(f"{path}: maxval {maxval} unsupported, need 255")
    body = raw[pos : pos + w * h]
    if len(body) != w * h:
        raise DatasetError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


# ---------------------------------------------------------------------------
# Rendering

def _seed_for(*parts):
    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _segments(skeleton, spec, rng):
    """Unit-square segments of the glyph, jittered, with serif ticks."""
    segs = []
    for line in skeleton.strokes:
        pts = np.asarray(line, dtype=np.float64)
        pts = pts + rng.uniform(-JITTER, JITTER, size=pts.shape)
        segs.extend(zip(pts[:-1], pts[1:]))
        closed = np.allclose(line[0], line[-1])
        if spec.serif_len > 0 and not closed:
            for end, nxt in ((pts[0], pts[1]), (pts[-1], pts[-2])):
                d = end - nxt
                norm = math.hypot(*d)
                if norm == 0:
                    continue
                perp = np.array([-d[1], d[0]]) / norm
                # serif length is a fraction of the image; undo the glyph-box scale
                half = 0.5 * spec.serif_len / (1 - 2 * MARGIN)
                segs.append((end - half * perp, end + half * perp))
    return segs


def render_glyph(skeleton, spec, size=64):
    """Rasterize ``skeleton`` in ``spec``'s style to a size×size uint8 image.

    Ink is black (0) on white (255). Each pixel's value reflects coverage over
    a 2×2 grid of subsamples, each inked when within half a stroke width of a
    segment. Output is a pure function of the arguments.
    """
    if size < 16:
        raise ValueError(f"image size must be >= 16, got {size}")
    if not skeleton.strokes:
        raise ValueError(f"glyph {skeleton.glyph_id!r} has no strokes")
    rng = np.random.default_rng(_seed_for(spec.jitter_seed, skeleton.glyph_id))
    segs = np.asarray(_segments(skeleton, spec, rng))  # K×2×2, (x, y)
    segs = (MARGIN + (1 - 2 * MARGIN) * segs) * size
    shear = math.tan(math.radians(spec.slant))
    segs[..., 0] += shear * (size / 2 - segs[..., 1])

    sub = (np.arange(2 * size) + 0.5) / 2
    px, py = np.meshgrid(sub, sub)
    p = np.stack([px.ravel(), py.ravel()], axis=1)  # S×2
    a, b = segs[:, 0], segs[:, 1]
    ab = b - a
    denom = np.maximum((ab * ab).sum(axis=1), 1e-12)
    ap = p[:, None, :] - a[None]
    t = np.clip((ap * ab[None]).sum(axis=2) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    dist = np.sqrt(((p[:, None, :] - closest) ** 2).sum(axis=2)).min(axis=1)
    ink = (dist <= spec.stroke_width * size / 2).reshape(2 * size, 2 * size)
    coverage = ink.reshape(size, 2, size, 2).mean(axis=(1, 3))
    return np.round(255.0 * (1.0 - coverage)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Dataset generation

def _style_grid(n):
    """Smallest (width, slant, serif) level grid with at least ``n`` cells."""
    counts = [4, 3, 2]
    axis = 0
    while counts[0] * counts[1] * counts[2] < n:
        counts[axis] += 1
        axis = (axis + 1) % 3
    widths = np.linspace(*WIDTH_RANGE, counts[0])
    slants = np.linspace(*SLANT_RANGE, counts[1])
    serifs = np.linspace(*SERIF_RANGE, counts[2])
    grid = [(w, s, z) for w in widths for s in slants for z in serifs]
    steps = (
        (WIDTH_RANGE[1] - WIDTH_RANGE[0]) / (counts[0] - 1),
        (SLANT_RANGE[1] - SLANT_RANGE[0]) / (counts[1] - 1),
        (SERIF_RANGE[1] - SERIF_RANGE[0]) / (counts[2] - 1),
    )
    return grid, steps


def sample_font_specs(num_fonts, seed):
    """Draw ``num_fonts`` pairwise-distinct styles.

    Styles are distinct cells of a level grid, each nudged by at most a twentieth
    of the level spacing so classes stay separable.
    """
    if num_fonts < 2:
        raise ValueError(f"need at least 2 fonts, got {num_fonts}")
    rng = np.random.default_rng(_seed_for("fonts", seed))
    grid, steps = _style_grid(num_fonts)
    cells = rng.permutation(len(grid))[:num_fonts]
    specs = []
    for font_id, cell in enumerate(cells):
        w, s, z = grid[cell]
        nudge = rng.uniform(-0.05, 0.05, size=3) * steps
        specs.append(
            FontSpec(
                font_id=font_id,
                stroke_width=round(float(np.clip(w + nudge[0], 0.02, 0.15)), 5),
                slant=round(float(np.clip(s + nudge[1], -15, 15)), 3),
                serif_len=round(float(np.clip(z + abs(nudge[2]), 0.0, 0.08)) if z > 0 else 0.0, 5),
                jitter_seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return specs


def sample_path(font_id, glyph_id):
    return f"img/{font_id}_{glyph_id}.pgm"


def default_threads():
    return max(1, int(os.environ.get("HESUP_THREADS", "1")))


def generate_dataset(num_fonts, glyph_ids=GLYPH_IDS, size=64, seed=0, out_dir="data", threads=None):
    """Render every (font, glyph) pair under ``out_dir`` and write the manifest.

    The directory content is a pure function of the arguments other than
    ``threads``.
    """
    glyph_ids = list(glyph_ids)
    if num_fonts < 2:
        raise DatasetError(f"need at least 2 font classes, got {num_fonts}")
    if len(glyph_ids) < 2:
        raise DatasetError(f"need at least 2 glyphs, got {len(glyph_ids)}")
    unknown = [g for g in glyph_ids if g not in SKELETONS]
    if unknown:
        raise DatasetError(f"no skeleton for glyphs {unknown}")
    out_dir = Path(out_dir)
    try:
        (out_dir / "img").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out_dir}: {exc.strerror}") from exc

    fonts = sample_font_specs(num_fonts, seed)
    samples = [Sample(sample_path(f.font_id, g), f.font_id, g) for f in fonts for g in glyph_ids]

    def work(sample):
        img = render_glyph(SKELETONS[sample.glyph_id], fonts[sample.font_id], size)
        write_pgm(out_dir / sample.path, img)

    try:
        with ThreadPoolExecutor(max_workers=threads or default_threads()) as pool:
            list(pool.map(work, samples))
        manifest = DatasetManifest(size, fonts, samples, root=out_dir)
        manifest.save(out_dir)
    except OSError as exc:
        raise DatasetError(f"cannot write dataset under {out_dir}: {exc}") from exc
    return manifest


def split_dataset(manifest, holdout_k, seed=0):
    """Hold out ``holdout_k`` random glyphs per font class for testing."""
    by_font = {}
    for i, s in enumerate(manifest.samples):
        by_font.setdefault(s.font_id, []).append(i)
    if holdout_k < 0:
        raise DatasetError(f"holdout_k must be non-negative, got {holdout_k}")
    rng = np.random.default_rng(_seed_for("split", seed))
    test = []
    for font_id in sorted(by_font):
        idx = by_font[font_id]
        if holdout_k >= len(idx):
            raise DatasetError(
                f"holdout_k={holdout_k} must be smaller than the {len(idx)} glyphs of font {font_id}"
            )
        test.extend(int(i) for i in rng.choice(idx, size=holdout_k, replace=False))
    test = sorted(test)
    held = set(test)
    train = [i for i in range(len(manifest.samples)) if i not in held]
    split = {"holdout_k": int(holdout_k), "seed": int(seed), "train": train, "test": test}
    return replace(manifest, split=split)


def normalize(pixels):
    """uint8 pixels -> float32 in [-0.5, 0.5]."""
    return (np.asarray(pixels, dtype=np.float32) / np.float32(255.0)) - np.float32(0.5)


def load_batch(manifest, indices, size=None):
    """Images as an N×1×size×size float32 Tensor plus their font labels."""
    size = size or manifest.image_size
    root = Path(manifest.root) if manifest.root is not None else Path(".")
    batch = np.empty((len(indices), 1, size, size), dtype=np.float32)
    labels = np.empty(len(indices), dtype=np.int64)
    for row, i in enumerate(indices):
        s = manifest.samples[i]
        path = root / s.path
        if not path.exists():
            raise DatasetError(f"missing image file {path}")
        img = read_pgm(path)
        if img.shape != (size, size):
            raise DatasetError(f"{path}: image is {img.shape}, expected {size}×{size}")
        batch[row, 0] = normalize(img)
        labels[row] = s.font_id
    return Tensor(batch, dtype=np.float32), labels


def load_all(manifest, split="all"):
    """Every image of ``split`` in one array; small datasets only."""
    return load_batch(manifest, manifest.indices(split))
