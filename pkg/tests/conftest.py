import numpy as np
import pytest

from sketchanim.svg_io import parse_svg


def make_clipasso_style_svg(n_paths: int = 32, canvas: float = 256.0,
                            seed: int = 11) -> str:
    """One cubic segment per path, the shape CLIPasso-style exports use."""
    rng = np.random.default_rng(seed)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{canvas}" height="{canvas}" '
        f'viewBox="0 0 {canvas} {canvas}">'
    ]
    for _ in range(n_paths):
        p = rng.uniform(canvas * 0.1, canvas * 0.9, size=(4, 2)).round(3)
        d = (f"M {p[0, 0]} {p[0, 1]} C {p[1, 0]} {p[1, 1]} "
             f"{p[2, 0]} {p[2, 1]} {p[3, 0]} {p[3, 1]}")
        lines.append(f'  <path d="{d}" fill="none" stroke="black" stroke-width="2.0"/>')
    lines.append("</svg>")
    return "\n".join(lines)


def make_two_object_svg(canvas: float = 256.0) -> str:
    """A ball-ish blob (strokes 0-1) and a hoop-ish arc (strokes 2-3)."""
    return f"""<svg xmlns="http://www.w3.org/2000/svg" width="{canvas}" height="{canvas}">
  <path d="M 60 180 C 70 160 90 160 100 180 C 90 200 70 200 60 180" stroke-width="2"/>
  <path d="M 70 175 C 75 170 85 170 90 175" stroke-width="2"/>
  <path d="M 170 60 C 180 80 200 80 210 60" stroke-width="2"/>
  <path d="M 170 60 L 170 100 L 210 100 L 210 60" stroke-width="2"/>
</svg>
"""


@pytest.fixture
def clipasso_svg() -> str:
    return make_clipasso_style_svg()


@pytest.fixture
def two_object_svg() -> str:
    return make_two_object_svg()


@pytest.fixture
def two_object_sketch(two_object_svg):
    return parse_svg(two_object_svg)
