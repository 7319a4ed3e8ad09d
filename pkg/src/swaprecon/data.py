"""Synthetic building scenes, mask rasterization, and file I/O.

Scenes are axis-aligned rectilinear footprints (rectangles with corner
notches) rendered into 64x64 grayscale rasters with exact corner/edge
annotations.  Generation is a pure function of (seed, index).

File formats owned by this package:
  * annotations: versioned JSON, schema {"version", "image_id", "corners",
    "edges"} with corners as [x, y] float pairs and edges as index pairs;
  * images: binary PGM (P5, 8-bit), scaled from [0, 1] floats;
  * overlays: SVG with the raster embedded as a PNG data URI, ground-truth
    edges in green and predicted edges in red.
"""
from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .sampler import PlanarGraph

ANNOTATION_VERSION = 1

IMAGES_SUBDIR = "images"
ANNOTATIONS_SUBDIR = "annotations"


class AnnotationFormatError(ValueError):
    """Raised when an annotation file cannot be parsed or validated."""


class ImageFormatError(ValueError):
    """Raised when a PGM file cannot be parsed."""


@dataclass
class AnnotationRecord:
    """Ground-truth corners and edges for one image."""

    image_id: str
    corners: np.ndarray
    edges: list

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=np.float64).reshape(-1, 2)
        self.edges = [(min(i, j), max(i, j)) for (i, j) in self.edges]

    def graph(self) -> PlanarGraph:
        return PlanarGraph(self.corners, set(self.edges))


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic scene generator."""

    seed: int = 42
    count: int = 200
    side: int = 64
    corners_min: int = 4
    corners_max: int = 12
    noise: float = 0.03

    def __post_init__(self):
        if self.side != 64:
            raise ValueError("scene side is fixed at 64 pixels")
        if not (4 <= self.corners_min <= self.corners_max <= 12):
            raise ValueError("corner range must lie within [4, 12]")
        if self.corners_min % 2 or self.corners_max % 2:
            raise ValueError("rectilinear footprints have even corner counts")


# Corner order of the base rectangle, cycled clockwise in image coords.
_RECT_CORNERS = ("tl", "tr", "br", "bl")


def _notched_rectangle(rng, side, n_cuts):
    """Corner cycle and fill boxes of a rectangle with up to 4 corner notches.

    Returns (corners, fill_boxes) where fill_boxes is the base rectangle
    followed by notch rectangles to subtract, each as (x0, y0, x1, y1).
    """
    x0 = int(rng.integers(4, 18))
    y0 = int(rng.integers(4, 18))
    x1 = int(rng.integers(x0 + 22, side - 3))
    y1 = int(rng.integers(y0 + 22, side - 3))
    width, height = x1 - x0, y1 - y0

    cut_at = set(rng.choice(4, size=n_cuts, replace=False).tolist()) if n_cuts else set()
    cuts = {}
    for c in cut_at:
        cw = int(rng.integers(4, width // 2 - 1))
        ch = int(rng.integers(4, height // 2 - 1))
        cuts[_RECT_CORNERS[c]] = (cw, ch)

    corners = []
    # clockwise cycle tl -> tr -> br -> bl; a notch replaces the corner
    # vertex with three vertices that trace around the removed rectangle
    if "tl" in cuts:
        cw, ch = cuts["tl"]
        corners += [(x0, y0 + ch), (x0 + cw, y0 + ch), (x0 + cw, y0)]
    else:
        corners.append((x0, y0))
    if "tr" in cuts:
        cw, ch = cuts["tr"]
        corners += [(x1 - cw, y0), (x1 - cw, y0 + ch), (x1, y0 + ch)]
    else:
        corners.append((x1, y0))
    if "br" in cuts:
        cw, ch = cuts["br"]
        corners += [(x1, y1 - ch), (x1 - cw, y1 - ch), (x1 - cw, y1)]
    else:
        corners.append((x1, y1))
    if "bl" in cuts:
        cw, ch = cuts["bl"]
        corners += [(x0 + cw, y1), (x0 + cw, y1 - ch), (x0, y1 - ch)]
    else:
        corners.append((x0, y1))

    boxes = [(x0, y0, x1, y1)]
    for name, (cw, ch) in cuts.items():
        if name == "tl":
            boxes.append((x0, y0, x0 + cw, y0 + ch))
        elif name == "tr":
            boxes.append((x1 - cw, y0, x1, y0 + ch))
        elif name == "br":
            boxes.append((x1 - cw, y1 - ch, x1, y1))
        else:
            boxes.append((x0, y1 - ch, x0 + cw, y1))
    return corners, boxes


def generate_synthetic_scene(cfg: SyntheticConfig, index: int):
    """One deterministic scene: (image as (1, 1, 64, 64) floats, annotation)."""
    rng = np.random.default_rng([cfg.seed, index])
    n_corners = int(rng.choice(np.arange(cfg.corners_min, cfg.corners_max + 1, 2)))
    corners, boxes = _notched_rectangle(rng, cfg.side, (n_corners - 4) // 2)

    fill = np.zeros((cfg.side, cfg.side), dtype=bool)
    bx0, by0, bx1, by1 = boxes[0]
    fill[by0:by1, bx0:bx1] = True
    for (cx0, cy0, cx1, cy1) in boxes[1:]:
        fill[cy0:cy1, cx0:cx1] = False

    background = rng.uniform(0.05, 0.2)
    building = rng.uniform(0.6, 0.9)
    image = np.where(fill, building, background)
    image = image + rng.uniform(-cfg.noise, cfg.noise, size=image.shape)
    image = np.clip(image, 0.0, 1.0)

    edges = [(i, (i + 1) % len(corners)) for i in range(len(corners))]
    record = AnnotationRecord(f"{index:04d}", np.array(corners, dtype=np.float64), edges)
    return image.reshape(1, 1, cfg.side, cfg.side), record


def generate_dataset(cfg: SyntheticConfig):
    """All scenes of a config as a list of (image, annotation)."""
    return [generate_synthetic_scene(cfg, i) for i in range(cfg.count)]


def bresenham_line(x0: int, y0: int, x1: int, y1: int) -> list:
    """Integer line pixels from (x0, y0) to (x1, y1), endpoints included."""
    points = []
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return points


def _dilate3(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1)
    out = mask.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out = np.maximum(out, padded[1 + dy:1 + dy + mask.shape[0],
                                         1 + dx:1 + dx + mask.shape[1]])
    return out


def rasterize_edges(graph: PlanarGraph, side: int = 64, dilation: int = 1) -> np.ndarray:
    """Binary edge mask: Bresenham lines, then `dilation` rounds of 3x3 max."""
    mask = np.zeros((side, side), dtype=np.float64)
    for (i, j) in sorted(graph.edges):
        (ax, ay), (bx, by) = graph.corners[i], graph.corners[j]
        if not (0 <= ax < side and 0 <= ay < side and 0 <= bx < side and 0 <= by < side):
            raise ValueError(f"edge ({i}, {j}) has out-of-frame endpoints")
        for (px, py) in bresenham_line(round(ax), round(ay), round(bx), round(by)):
            mask[py, px] = 1.0
    for _ in range(dilation):
        mask = _dilate3(mask)
    return mask


def save_annotation(record: AnnotationRecord, path) -> None:
    payload = {
        "version": ANNOTATION_VERSION,
        "image_id": record.image_id,
        "corners": [[float(x), float(y)] for (x, y) in record.corners],
        "edges": [list(e) for e in record.edges],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_annotation(path) -> AnnotationRecord:
    raw = Path(path).read_text()
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise AnnotationFormatError(
            f"{path}: invalid JSON at byte {exc.pos}: {exc.msg}"
        ) from exc
    try:
        version = payload["version"]
        if version != ANNOTATION_VERSION:
            raise AnnotationFormatError(
                f"{path}: unsupported annotation version {version}"
            )
        record = AnnotationRecord(
            payload["image_id"],
            np.array(payload["corners"], dtype=np.float64),
            [tuple(e) for e in payload["edges"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, AnnotationFormatError):
            raise
        raise AnnotationFormatError(f"{path}: malformed annotation: {exc}") from exc
    record.graph()  # validates edge indices and self-loops
    return record


def save_image(image: np.ndarray, path) -> None:
    """Write a [0, 1] float image as binary 8-bit PGM."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 4:
        image = image[0, 0]
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def load_image(path) -> np.ndarray:
    """Read a binary PGM into a (1, 1, h, w) float tensor in [0, 1]."""
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P5"):
        raise ImageFormatError(f"{path}: not a binary PGM (missing P5 magic)")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated header at byte {start}")
        try:
            fields.append(int(blob[start:pos]))
        except ValueError:
            raise ImageFormatError(
                f"{path}: bad header token at byte {start}: {blob[start:pos]!r}"
            ) from None
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace after maxval
    pixels = blob[pos:pos + width * height]
    if len(pixels) != width * height:
        raise ImageFormatError(
            f"{path}: expected {width * height} pixel bytes at byte {pos}, "
            f"found {len(pixels)}"
        )
    data = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
    return (data / 255.0).reshape(1, 1, height, width)


def dataset_paths(root, index: int):
    root = Path(root)
    return (
        root / IMAGES_SUBDIR / f"{index:04d}.pgm",
        root / ANNOTATIONS_SUBDIR / f"{index:04d}.json",
    )


def write_dataset(cfg: SyntheticConfig, root) -> int:
    """Generate cfg.count scenes under root/{images,annotations}/NNNN.*."""
    root = Path(root)
    (root / IMAGES_SUBDIR).mkdir(parents=True, exist_ok=True)
    (root / ANNOTATIONS_SUBDIR).mkdir(parents=True, exist_ok=True)
    for i in range(cfg.count):
        image, record = generate_synthetic_scene(cfg, i)
        img_path, ann_path = dataset_paths(root, i)
        save_image(image, img_path)
        save_annotation(record, ann_path)
    return cfg.count


def read_dataset(root):
    """Load every (image, annotation) pair from a dataset directory."""
    root = Path(root)
    ann_dir = root / ANNOTATIONS_SUBDIR
    if not ann_dir.is_dir():
        raise FileNotFoundError(f"{root} has no {ANNOTATIONS_SUBDIR}/ directory")
    pairs = []
    for ann_path in sorted(ann_dir.glob("*.json")):
        img_path = root / IMAGES_SUBDIR / (ann_path.stem + ".pgm")
        pairs.append((load_image(img_path), load_annotation(ann_path)))
    if not pairs:
        raise FileNotFoundError(f"{root}: no annotations found")
    return pairs


def _png_data_uri(image: np.ndarray) -> str:
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def render_svg(image: np.ndarray, predicted: PlanarGraph, truth: PlanarGraph,
               path, scale: int = 8) -> None:
    """Overlay predicted (red) and ground-truth (green) edges on the raster."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 4:
        image = image[0, 0]
    h, w = image.shape

    def lines(graph, stroke, css):
        parts = []
        for (i, j) in sorted(graph.edges):
            (ax, ay), (bx, by) = graph.corners[i], graph.corners[j]
            parts.append(
                f'  <line class="{css}" x1="{ax * scale:.2f}" y1="{ay * scale:.2f}" '
                f'x2="{bx * scale:.2f}" y2="{by * scale:.2f}" '
                f'stroke="{stroke}" stroke-width="2"/>'
            )
        return parts

    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * scale}" '
        f'height="{h * scale}" viewBox="0 0 {w * scale} {h * scale}">',
        f'  <image href="{_png_data_uri(image)}" x="0" y="0" '
        f'width="{w * scale}" height="{h * scale}" '
        'preserveAspectRatio="none" style="image-rendering:pixelated"/>',
    ]
    body += lines(truth, "#19c319", "truth")
    body += lines(predicted, "#e32222", "predicted")
    body.append("</svg>")
    Path(path).write_text("\n".join(body) + "\n")
