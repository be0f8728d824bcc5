"""Deterministic SVG figures: the Love plot and the observed bias plot.

Figures are assembled as SVG 1.1 text. Coordinates are written with two
decimals and elements are emitted in a fixed order, so identical input
always produces identical bytes.
"""

import logging
import math
import re
from dataclasses import asdict, dataclass
from typing import Any, List, Mapping, Optional, Sequence, Tuple
from xml.sax.saxutils import escape, quoteattr

from obsbias.document import JsonDocument
from obsbias.exceptions import ConfigValidationError, SchemaError
from obsbias.pipeline import (
    KIND_COVARIATE,
    KIND_GROUP,
    KIND_TIP,
    BalanceRecord,
    ObservedBiasRecord,
)

logger = logging.getLogger(__name__)

PANEL_A_TITLE = "A. Most influential covariates"
PANEL_B_TITLE = "B. Sensitivity to unmeasured confounding"
EFFECT_AXIS_LABEL = "Effect modeled without variable(s) of interest"
EVALUE_AXIS_LABEL = "E-value"
LEGEND_LABELS = (
    (KIND_COVARIATE, "Observed Covariate E-value"),
    (KIND_GROUP, "Observed Covariate E-value (group)"),
    (KIND_TIP, "E-value"),
)
SMD_THRESHOLD = 0.1

_HEX_COLOR = re.compile(r"^#[0-9a-fA-F]{6}$")
_TOP = 50.0
_PADDING = 20.0


@dataclass(frozen=True)
class PlotTheme:
    """Sizes, fonts and colors of both figures.

    The canvas is ``width`` pixels wide and ``row_height * rows + margin``
    pixels tall.
    """

    width: int = 900
    row_height: int = 30
    margin: int = 120
    label_width: int = 270
    font_family: str = "Helvetica, Arial, sans-serif"
    font_size: int = 11
    title_size: int = 14
    text_color: str = "#000000"
    band_color: str = "#add8e6"
    full_line_color: str = "#4682b4"
    range_color: str = "#000000"
    null_color: str = "#000000"
    covariate_color: str = "#800080"
    group_color: str = "#ffa500"
    tip_color: str = "#ff0000"
    unweighted_color: str = "#ff0000"
    weighted_color: str = "#0000ff"
    threshold_color: str = "#808080"
    grid_color: str = "#e5e5e5"

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if name.endswith("_color"):
                if not isinstance(value, str) or not _HEX_COLOR.match(value):
                    raise ConfigValidationError(
                        f"Theme color '{name}' must be a 6-digit hex color like "
                        f"#1a2b3c, got {value!r}",
                        field=f"theme.{name}",
                    )
            elif name == "font_family":
                if not isinstance(value, str) or not value.strip():
                    raise ConfigValidationError(
                        "Theme font_family must be a non-empty string",
                        field="theme.font_family",
                    )
            elif isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigValidationError(
                    f"Theme '{name}' must be a positive integer, got {value!r}",
                    field=f"theme.{name}",
                )
        if self.label_width >= self.width * 2 // 3:
            raise ConfigValidationError(
                "Theme label_width must leave room for panel A",
                field="theme.label_width",
            )

    @classmethod
    def from_mapping(cls, overrides: Optional[Mapping[str, Any]] = None) -> "PlotTheme":
        """Default theme with ``overrides`` merged in.

        Raises:
            ConfigValidationError: On unknown keys or invalid values
        """
        doc = JsonDocument(asdict(cls()))
        overrides = dict(overrides or {})
        for key in sorted(overrides):
            if key not in doc:
                raise ConfigValidationError(
                    f"Unknown theme key '{key}'", field=f"theme.{key}"
                )
        doc.merge(overrides)
        return cls(**doc.to_dict())

    def height(self, rows: int) -> int:
        return self.row_height * rows + self.margin

    def kind_color(self, kind: str) -> str:
        return {
            KIND_COVARIATE: self.covariate_color,
            KIND_GROUP: self.group_color,
            KIND_TIP: self.tip_color,
        }.get(kind, self.range_color)


@dataclass(frozen=True)
class LinearScale:
    """Affine map from a data domain onto a pixel range."""

    domain: Tuple[float, float]
    range: Tuple[float, float]

    def _transform(self, value: float) -> float:
        return value

    def __call__(self, value: float) -> float:
        d0, d1 = (self._transform(v) for v in self.domain)
        r0, r1 = self.range
        if d1 == d0:
            return (r0 + r1) / 2.0
        return r0 + (self._transform(value) - d0) * (r1 - r0) / (d1 - d0)

    def ticks(self, count: int = 5) -> List[float]:
        """Round tick values inside the domain."""
        lo, hi = self.domain
        if hi <= lo:
            return [lo]
        raw = (hi - lo) / count
        magnitude = 10.0 ** math.floor(math.log10(raw))
        step = next(
            m * magnitude for m in (1.0, 2.0, 2.5, 5.0, 10.0) if m * magnitude >= raw
        )
        first = math.ceil(lo / step)
        last = math.floor(hi / step)
        return [round(i * step, 10) for i in range(first, last + 1)]


@dataclass(frozen=True)
class LogScale(LinearScale):
    """Logarithmic map; domain and values must be positive."""

    def _transform(self, value: float) -> float:
        return math.log(value)


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _tick_label(value: float) -> str:
    return f"{value:g}"


class _Svg:
    """Accumulates SVG elements as text."""

    def __init__(self, width: int, height: int, theme: PlotTheme):
        self.theme = theme
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
            '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" '
            '"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">',
            f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" '
            f'width="{width}" height="{height}" viewBox="0 0 {width} {height}" '
            f'font-family={quoteattr(theme.font_family)} font-size="{theme.font_size}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        ]

    def line(self, x1, y1, x2, y2, stroke, width=1.0, dash=None, cls=None, ident=None):
        attrs = ""
        if ident:
            attrs += f' id="{ident}"'
        if cls:
            attrs += f' class="{cls}"'
        attrs += (
            f' x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}"'
            f' stroke="{stroke}" stroke-width="{width:g}"'
        )
        if dash:
            attrs += f' stroke-dasharray="{dash}"'
        self.parts.append(f"<line{attrs}/>")

    def rect(self, x, y, width, height, fill, opacity=1.0, cls=None):
        attrs = f' class="{cls}"' if cls else ""
        self.parts.append(
            f'<rect{attrs} x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(width)}" '
            f'height="{_fmt(height)}" fill="{fill}" fill-opacity="{opacity:g}"/>'
        )

    def circle(self, cx, cy, r, fill, cls=None, ident=None):
        attrs = ""
        if ident:
            attrs += f' id="{ident}"'
        if cls:
            attrs += f' class="{cls}"'
        self.parts.append(
            f'<circle{attrs} cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{r:g}" fill="{fill}"/>'
        )

    def text(self, x, y, content, anchor="start", size=None, weight=None, fill=None):
        attrs = f' x="{_fmt(x)}" y="{_fmt(y)}" text-anchor="{anchor}"'
        if size:
            attrs += f' font-size="{size}"'
        if weight:
            attrs += f' font-weight="{weight}"'
        attrs += f' fill="{fill or self.theme.text_color}"'
        self.parts.append(f"<text{attrs}>{escape(str(content))}</text>")

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _axis(svg: _Svg, scale: LinearScale, y_top: float, y_bottom: float, label: str):
    theme = svg.theme
    x0, x1 = scale.range
    svg.line(x0, y_bottom, x1, y_bottom, theme.text_color)
    for tick in scale.ticks():
        x = scale(tick)
        svg.line(x, y_top, x, y_bottom, theme.grid_color, cls="grid")
        svg.line(x, y_bottom, x, y_bottom + 4, theme.text_color)
        svg.text(x, y_bottom + 16, _tick_label(tick), anchor="middle")
    svg.text((x0 + x1) / 2.0, y_bottom + 32, label, anchor="middle")


def display_label(
    record: ObservedBiasRecord, labels: Optional[Mapping[str, str]] = None
) -> str:
    """Row label: "Dropped <label>" for covariates and groups, as-is for tips."""
    name = (labels or {}).get(record.label, record.label)
    if record.kind in (KIND_COVARIATE, KIND_GROUP):
        return f"Dropped {name}"
    return name


class ObservedBiasLayout:
    """Geometry of the observed bias plot.

    Panel A spans the left two thirds of the canvas after the label column,
    panel B the right third. Row ``i`` is centred at
    ``50 + row_height * (i + 0.5)``. Panel B's axis starts exactly at 1.
    """

    def __init__(
        self,
        records: Sequence[ObservedBiasRecord],
        full: ObservedBiasRecord,
        theme: PlotTheme,
        log_axis: bool = False,
    ):
        self.theme = theme
        self.rows = len(records)
        self.height = theme.height(self.rows)
        split = theme.width * 2.0 / 3.0
        self.panel_a = (float(theme.label_width), split - _PADDING)
        self.panel_b = (split + _PADDING, theme.width - _PADDING)
        self.plot_top = _TOP
        self.plot_bottom = _TOP + theme.row_height * self.rows

        values = [1.0, full.lcl, full.ucl]
        for record in records:
            values.extend(v for v in (record.lcl, record.ucl) if math.isfinite(v))
        lo, hi = min(values), max(values)
        if log_axis:
            pad = (math.log(hi) - math.log(lo)) * 0.05 or 0.05
            domain = (math.exp(math.log(lo) - pad), math.exp(math.log(hi) + pad))
            self.effect_scale: LinearScale = LogScale(domain, self.panel_a)
        else:
            pad = (hi - lo) * 0.05 or 0.05
            self.effect_scale = LinearScale((lo - pad, hi + pad), self.panel_a)

        oces = [r.oce for r in records if r.oce is not None and math.isfinite(r.oce)]
        top = max(oces + [1.0])
        top = top + (top - 1.0) * 0.05 if top > 1.0 else 1.1
        self.oce_scale = LinearScale((1.0, top), self.panel_b)

    def row_y(self, index: int) -> float:
        return self.plot_top + self.theme.row_height * (index + 0.5)


def observed_bias_plot(
    records: Sequence[ObservedBiasRecord],
    full: ObservedBiasRecord,
    theme: Optional[PlotTheme] = None,
    log_axis: bool = False,
    labels: Optional[Mapping[str, str]] = None,
) -> str:
    """Two-panel observed bias plot as SVG text.

    Panel A draws each record's interval and estimate over the full-model
    band, the full estimate line and a dashed null line at 1. Panel B draws
    each record's Observed Covariate E-value colored by kind. Rows keep the
    order of ``records``; flagged records get an empty row.

    Args:
        records: Records in display order (see order_records)
        full: The full-model record
        theme: Plot theme, defaults to PlotTheme()
        log_axis: Use a logarithmic ratio axis in panel A
        labels: Display labels keyed by record label
    """
    theme = theme or PlotTheme()
    layout = ObservedBiasLayout(records, full, theme, log_axis=log_axis)
    svg = _Svg(theme.width, layout.height, theme)
    scale, oce_scale = layout.effect_scale, layout.oce_scale
    top, bottom = layout.plot_top, layout.plot_bottom

    svg.text(_PADDING, 24, PANEL_A_TITLE, size=theme.title_size, weight="bold")
    svg.text(
        layout.panel_b[1],
        24,
        PANEL_B_TITLE,
        anchor="end",
        size=theme.title_size,
        weight="bold",
    )
    _axis(svg, scale, top, bottom, EFFECT_AXIS_LABEL)
    _axis(svg, oce_scale, top, bottom, EVALUE_AXIS_LABEL)

    x_lcl, x_ucl = scale(full.lcl), scale(full.ucl)
    svg.rect(
        x_lcl, top, x_ucl - x_lcl, bottom - top, theme.band_color, 0.3, cls="band"
    )
    for bound in (x_lcl, x_ucl):
        svg.line(
            bound, top, bound, bottom, theme.band_color, dash="4,3", cls="band-edge"
        )
    x_full = scale(full.estimate)
    svg.line(x_full, top, x_full, bottom, theme.full_line_color, 2, cls="full-line")
    x_null = scale(1.0)
    svg.line(
        x_null, top, x_null, bottom, theme.null_color, dash="6,4", cls="null-line"
    )

    for i, record in enumerate(records):
        y = layout.row_y(i)
        label = display_label(record, labels)
        svg.text(theme.label_width - 8, y + 4, label, anchor="end")
        if not record.ok:
            svg.text(
                layout.panel_a[0] + 4, y + 4, "(refit failed)", fill=theme.threshold_color
            )
            continue
        svg.line(
            scale(record.lcl),
            y,
            scale(record.ucl),
            y,
            theme.range_color,
            1.5,
            cls="range",
            ident=f"range-{i}",
        )
        svg.circle(scale(record.estimate), y, 3.5, theme.range_color, cls="estimate")
        if record.oce is not None:
            svg.circle(
                oce_scale(record.oce),
                y,
                4,
                theme.kind_color(record.kind),
                cls=f"oce {record.kind}",
                ident=f"oce-{i}",
            )

    legend_y = bottom + 56
    for offset, (kind, text) in zip((0, 200, 450), LEGEND_LABELS):
        x = _PADDING + offset
        svg.circle(x + 4, legend_y - 4, 4, theme.kind_color(kind), cls="legend")
        svg.text(x + 12, legend_y, text)
    return svg.render()


def love_plot(
    balance: Sequence[BalanceRecord], theme: Optional[PlotTheme] = None
) -> str:
    """Love plot of absolute standardized mean differences as SVG text.

    Rows are sorted by unweighted |SMD|, largest first. Unweighted values
    are drawn with ``unweighted_color`` (red), overlap-weighted values with
    ``weighted_color`` (blue); a dashed line marks 0.1.

    Raises:
        SchemaError: If ``balance`` is empty
    """
    if not balance:
        raise SchemaError("Love plot needs at least one balance record")
    theme = theme or PlotTheme()
    rows = sorted(balance, key=lambda b: (-abs(b.smd_unweighted), b.covariate))
    height = theme.height(len(rows))
    svg = _Svg(theme.width, height, theme)

    top = _TOP
    bottom = _TOP + theme.row_height * len(rows)
    hi = max(
        [SMD_THRESHOLD]
        + [abs(b.smd_unweighted) for b in rows]
        + [abs(b.smd_weighted) for b in rows]
    )
    scale = LinearScale(
        (0.0, hi * 1.05), (float(theme.label_width), theme.width - _PADDING)
    )

    svg.text(_PADDING, 24, "Covariate balance", size=theme.title_size, weight="bold")
    _axis(svg, scale, top, bottom, "Absolute standardized mean difference")
    x_threshold = scale(SMD_THRESHOLD)
    svg.line(
        x_threshold,
        top,
        x_threshold,
        bottom,
        theme.threshold_color,
        dash="6,4",
        cls="threshold",
    )
    for i, row in enumerate(rows):
        y = top + theme.row_height * (i + 0.5)
        svg.text(theme.label_width - 8, y + 4, row.covariate, anchor="end")
        svg.circle(
            scale(abs(row.smd_unweighted)),
            y,
            4,
            theme.unweighted_color,
            cls="unweighted",
            ident=f"unweighted-{i}",
        )
        svg.circle(
            scale(abs(row.smd_weighted)),
            y,
            4,
            theme.weighted_color,
            cls="weighted",
            ident=f"weighted-{i}",
        )

    legend_y = bottom + 56
    for offset, (color, text) in zip(
        (0, 120),
        ((theme.unweighted_color, "Unweighted"), (theme.weighted_color, "Overlap weighted")),
    ):
        x = theme.label_width + offset
        svg.circle(x + 4, legend_y - 4, 4, color, cls="legend")
        svg.text(x + 12, legend_y, text)
    return svg.render()
