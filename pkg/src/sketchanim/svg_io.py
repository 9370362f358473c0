"""SVG ingestion and serialization for the supported path subset.

Supported input: ``path`` elements whose ``d`` attribute uses M/m, C/c, L/l,
Q/q. Lines and quadratics are degree-elevated to cubics at parse time so the
rest of the engine handles exactly one primitive. A single root-level
``translate``/``scale`` transform (on the svg child ``g``) is honored; any
other transform, command, or drawable element raises. Serialization emits
absolute-coordinate M/C only.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET

import numpy as np

from .errors import EmptySketchError, SvgParseError, UnsupportedSvgFeatureError
from .geometry import Sketch, Stroke

_SVG_NS = "http://www.w3.org/2000/svg"
_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_PATH_TOKEN = re.compile(r"([MmCcLlQqZzAaSsTtHhVv])|" + _NUMBER.pattern)
_SUPPORTED = set("MmCcLlQq")


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_length(raw: str | None) -> float | None:
    if raw is None:
        return None
    m = _NUMBER.match(raw.strip())
    if m is None:
        raise SvgParseError(f"cannot parse length {raw!r}")
    return float(m.group(0))


def _byte_offset(text: str, line: int, column: int) -> int:
    lines = text.split("\n")
    prefix = sum(len(l.encode()) + 1 for l in lines[: line - 1])
    return prefix + len(lines[line - 1][:column].encode())


def _tokenize_path(d: str) -> list[str | float]:
    tokens: list[str | float] = []
    pos = 0
    for m in _PATH_TOKEN.finditer(d):
        between = d[pos:m.start()]
        if between.strip(" ,\t\r\n"):
            raise SvgParseError(f"unexpected content in path data: {between.strip()!r}")
        pos = m.end()
        tokens.append(m.group(1) if m.group(1) else float(m.group(0)))
    if d[pos:].strip(" ,\t\r\n"):
        raise SvgParseError(f"unexpected content in path data: {d[pos:].strip()!r}")
    return tokens


class _PathReader:
    def __init__(self, d: str):
        self.tokens = _tokenize_path(d)
        self.i = 0

    def done(self) -> bool:
        return self.i >= len(self.tokens)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def command(self) -> str:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def number(self) -> float:
        if self.done() or isinstance(self.tokens[self.i], str):
            raise SvgParseError("path data ended while expecting a coordinate")
        val = self.tokens[self.i]
        self.i += 1
        return val

    def pair(self) -> np.ndarray:
        return np.array([self.number(), self.number()])


def _elevate_line(p0: np.ndarray, p1: np.ndarray) -> list[np.ndarray]:
    """Cubic control points for a line: interior points at thirds."""
    return [p0 + (p1 - p0) / 3.0, p0 + 2.0 * (p1 - p0) / 3.0, p1]


def _elevate_quadratic(p0: np.ndarray, q: np.ndarray, p1: np.ndarray) -> list[np.ndarray]:
    return [p0 + 2.0 / 3.0 * (q - p0), p1 + 2.0 / 3.0 * (q - p1), p1]


def _parse_path_d(d: str) -> list[list[np.ndarray]]:
    """Split path data into subpaths, each a list of cubic control points."""
    reader = _PathReader(d)
    subpaths: list[list[np.ndarray]] = []
    current: list[np.ndarray] = []
    pen = np.zeros(2)
    last_cmd: str | None = None

    while not reader.done():
        tok = reader.peek()
        if isinstance(tok, str):
            cmd = reader.command()
            if cmd not in _SUPPORTED:
                raise UnsupportedSvgFeatureError(f"path command {cmd!r}")
        else:
            if last_cmd is None:
                raise SvgParseError("path data must start with a moveto command")
            # implicit repetition; a moveto repeats as the matching lineto
            cmd = {"M": "L", "m": "l"}.get(last_cmd, last_cmd)
        relative = cmd.islower()
        base = pen if relative else np.zeros(2)

        if cmd in "Mm":
            pen = base + reader.pair()
            if len(current) > 1:
                subpaths.append(current)
            current = [pen]
        elif cmd in "Ll":
            if not current:
                raise SvgParseError("lineto before any moveto")
            target = base + reader.pair()
            current.extend(_elevate_line(pen, target))
            pen = target
        elif cmd in "Qq":
            if not current:
                raise SvgParseError("curveto before any moveto")
            q = base + reader.pair()
            target = base + reader.pair()
            current.extend(_elevate_quadratic(pen, q, target))
            pen = target
        else:  # C/c
            if not current:
                raise SvgParseError("curveto before any moveto")
            c1 = base + reader.pair()
            c2 = base + reader.pair()
            target = base + reader.pair()
            current.extend([c1, c2, target])
            pen = target
        last_cmd = cmd

    if len(current) > 1:
        subpaths.append(current)
    return subpaths


def _parse_transform(raw: str) -> tuple[np.ndarray, np.ndarray]:
    """Resolve a translate/scale-only transform into (scale, offset)."""
    scale = np.ones(2)
    offset = np.zeros(2)
    for m in re.finditer(r"(\w+)\s*\(([^)]*)\)", raw):
        name, args = m.group(1), [float(x) for x in _NUMBER.findall(m.group(2))]
        if name == "translate":
            tx = args[0]
            ty = args[1] if len(args) > 1 else 0.0
            offset = offset + scale * np.array([tx, ty])
        elif name == "scale":
            sx = args[0]
            sy = args[1] if len(args) > 1 else sx
            scale = scale * np.array([sx, sy])
        else:
            raise UnsupportedSvgFeatureError(f"transform {name!r}")
    return scale, offset


_DRAWABLES = {"rect", "circle", "ellipse", "line", "polyline", "polygon", "text", "image", "use"}


def parse_svg(svg_text: str) -> Sketch:
    """Parse an SVG document into a Sketch.

    Every subpath of every ``path`` element becomes one stroke. Canvas
    dimensions come from width/height attributes, falling back to the
    viewBox.
    """
    try:
        root = ET.fromstring(svg_text)
    except ET.ParseError as e:
        line, column = e.position
        raise SvgParseError(f"malformed XML: {e.msg}",
                            offset=_byte_offset(svg_text, line, column)) from e
    if _strip_ns(root.tag) != "svg":
        raise SvgParseError(f"root element is <{_strip_ns(root.tag)}>, expected <svg>")

    canvas_w = _parse_length(root.get("width"))
    canvas_h = _parse_length(root.get("height"))
    if canvas_w is None or canvas_h is None:
        viewbox = root.get("viewBox")
        if viewbox is None:
            raise SvgParseError("missing width/height and viewBox")
        parts = [float(x) for x in _NUMBER.findall(viewbox)]
        if len(parts) != 4:
            raise SvgParseError(f"malformed viewBox {viewbox!r}")
        canvas_w = canvas_w if canvas_w is not None else parts[2]
        canvas_h = canvas_h if canvas_h is not None else parts[3]

    strokes: list[Stroke] = []
    next_id = 0

    def walk(el, scale: np.ndarray, offset: np.ndarray, depth: int) -> None:
        nonlocal next_id
        for child in el:
            tag = _strip_ns(child.tag)
            if tag == "g":
                child_scale, child_offset = scale, offset
                raw = child.get("transform")
                if raw:
                    if depth > 0:
                        raise UnsupportedSvgFeatureError("transform on a nested group")
                    s, o = _parse_transform(raw)
                    child_scale = scale * s
                    child_offset = offset + scale * o
                walk(child, child_scale, child_offset, depth + 1)
            elif tag == "path":
                d = child.get("d", "")
                width = _parse_length(child.get("stroke-width")) or 1.0
                for sub in _parse_path_d(d):
                    pts = np.array(sub) * scale + offset
                    strokes.append(Stroke(id=next_id, points=pts,
                                          width=width * float(np.mean(np.abs(scale)))))
                    next_id += 1
            elif tag in _DRAWABLES:
                raise UnsupportedSvgFeatureError(f"element <{tag}>")
            else:
                walk(child, scale, offset, depth + 1)

    walk(root, np.ones(2), np.zeros(2), 0)
    if not strokes:
        raise EmptySketchError("no drawable path content found")
    return Sketch(strokes=tuple(strokes), canvas_w=canvas_w, canvas_h=canvas_h)


def _fmt(v: float) -> str:
    """Shortest exact decimal form of a float (round-trips bit-exactly)."""
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def serialize_svg(sketch: Sketch) -> str:
    """Emit the sketch as an SVG document with absolute M/C path data."""
    w, h = _fmt(sketch.canvas_w), _fmt(sketch.canvas_h)
    lines = [
        f'<svg xmlns="{_SVG_NS}" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
    ]
    for stroke in sketch.strokes:
        pts = stroke.points
        parts = [f"M {_fmt(pts[0, 0])} {_fmt(pts[0, 1])}"]
        for s in range(stroke.n_segments):
            c = pts[3 * s + 1: 3 * s + 4]
            parts.append("C " + " ".join(f"{_fmt(p[0])} {_fmt(p[1])}" for p in c))
        lines.append(
            f'  <path d="{" ".join(parts)}" fill="none" stroke="black" '
            f'stroke-width="{_fmt(stroke.width)}" stroke-linecap="round"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
