"""Hypothesis strategies shared across test modules."""

from hypothesis import strategies as st

from gazetrack.geometry import BBox

coord = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
extent = st.floats(0.5, 500.0, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw, cx=coord, size=extent):
    return BBox(draw(cx), draw(cx), draw(size), draw(size))
