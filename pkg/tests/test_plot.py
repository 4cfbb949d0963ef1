import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tsnoether.errors import EmptySeries
from tsnoether.plot import emit_svg, nice_ticks, render_svg

NS = {"svg": "http://www.w3.org/2000/svg"}


def polylines(svg):
    root = ET.fromstring(svg)
    return root.findall(".//svg:polyline", NS)


def vertices(poly):
    return [tuple(map(float, p.split(","))) for p in poly.get("points").split()]


def test_two_series_with_legend():
    t = np.linspace(1, 10, 50)
    svg = render_svg({"I": (t, np.full_like(t, 0.99)), "C": (t, 0.99 + 0.01 * np.sin(t))}, title="I vs C")
    lines = polylines(svg)
    assert len(lines) == 2
    assert [p.find("svg:title", NS).text for p in lines] == ["I", "C"]
    assert ">I<" in svg and ">C<" in svg
    ys = {y for _, y in vertices(lines[0])}
    assert len(ys) == 1                                  # I is flat


def test_constant_series_sits_mid_height():
    svg = render_svg({"q": ([0, 1, 2], [3.0, 3.0, 3.0])})
    ys = {y for _, y in vertices(polylines(svg)[0])}
    assert ys == {30 + (500 - 30 - 60) / 2}


def test_two_point_series():
    assert len(vertices(polylines(render_svg({"q": ([0, 1], [0, 1])}))[0])) == 2


def test_tick_labels_are_shortest_round_trip():
    svg = render_svg({"q": ([0, 1], [0, 0.3])})
    labels = re.findall(r'text-anchor="end">([^<]+)<', svg)
    assert labels and all(repr(float(s)) == s for s in labels)
    assert nice_ticks(0, 1) == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_no_external_references():
    svg = render_svg({"q": ([0, 1, 2], [1, 4, 9])})
    assert "href" not in svg and "<script" not in svg


@pytest.mark.parametrize("series", [{}, {"q": ([], [])}, {"q": ([0, 1], [1])}])
def test_empty_or_mismatched_series(series):
    with pytest.raises(EmptySeries):
        render_svg(series)


def test_emit_svg_writes_file(tmp_path):
    path = emit_svg({"q": ([0, 1], [2, 3])}, tmp_path / "f.svg")
    assert path.read_text().startswith("<svg")
