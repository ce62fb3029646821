"""Per-stack HTML QA reports.

Each report is self-contained: slice mosaic and through-plane views are
embedded as base64 PNGs (intensity-windowed at [p1, p99], mask contour
overlaid in red), so a report archive can be copied anywhere and still
render.  The rating widget mounts into a stamped placeholder div and loads
from ``assets/widget.js`` next to the reports.
"""

from __future__ import annotations

import base64
import html
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from stackqc.errors import RenderError
from stackqc.io.manifest import StackRecord
from stackqc.io.nifti import Mask, Volume

TILE_MAX = 160


def _window(data: np.ndarray) -> np.ndarray:
    lo, hi = np.percentile(data, [1.0, 99.0])
    if hi <= lo:
        return np.zeros(data.shape, dtype=np.uint8)
    arr = np.clip((data - lo) / (hi - lo), 0.0, 1.0)
    return (arr * 255).astype(np.uint8)


def _contour(mask2d: np.ndarray) -> np.ndarray:
    if mask2d is None or not mask2d.any():
        return np.zeros_like(mask2d, dtype=bool) if mask2d is not None else None
    eroded = mask2d.copy()
    eroded[1:, :] &= mask2d[:-1, :]
    eroded[:-1, :] &= mask2d[1:, :]
    eroded[:, 1:] &= mask2d[:, :-1]
    eroded[:, :-1] &= mask2d[:, 1:]
    return mask2d & ~eroded


def _tile(gray2d: np.ndarray, contour: np.ndarray | None, scale_xy=(1.0, 1.0)) -> Image.Image:
    rgb = np.stack([gray2d] * 3, axis=-1)
    if contour is not None and contour.any():
        rgb[contour] = (255, 64, 64)
    # a numpy (x, y) plane renders with x down; transpose to x-right, y-down
    img = Image.fromarray(np.transpose(rgb, (1, 0, 2)), mode="RGB")
    w = int(round(img.width * scale_xy[0]))
    h = int(round(img.height * scale_xy[1]))
    ratio = min(TILE_MAX / max(w, 1), TILE_MAX / max(h, 1), 4.0)
    return img.resize((max(int(w * ratio), 1), max(int(h * ratio), 1)), Image.NEAREST)


def _png_data_uri(img: Image.Image) -> str:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode()


def render_report(
    record: StackRecord,
    vol: Volume,
    mask: Mask | None,
    out_dir: str | Path,
    widget_src: str = "assets/widget.js",
) -> Path:
    """Write ``<out_dir>/reports/<stack_id>.html``; returns the path."""
    nx, ny, nz = vol.shape
    if nx < 8 or ny < 8 or nz < 3:
        raise RenderError(f"{record.stack_id}: dims {vol.shape} below report minimums (8, 8, 3)")
    out_dir = Path(out_dir)
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)

    gray = _window(np.asarray(vol.data, dtype=np.float64))
    sx, sy, sz = vol.spacing

    tiles = []
    for k in range(nz):
        contour = _contour(mask.data[:, :, k]) if mask is not None else None
        tiles.append(
            f'<figure class="tile"><figcaption>slice {k}</figcaption>'
            f'<img src="{_png_data_uri(_tile(gray[:, :, k], contour))}" alt="slice {k}"></figure>'
        )

    through = []
    for axis, label in ((0, "x cut"), (1, "y cut")):
        mid = vol.shape[axis] // 2
        if axis == 0:
            plane = gray[mid, :, :]
            mplane = mask.data[mid, :, :] if mask is not None else None
            scale = (sy / sy, sz / sy)
        else:
            plane = gray[:, mid, :]
            mplane = mask.data[:, mid, :] if mask is not None else None
            scale = (sx / sx, sz / sx)
        contour = _contour(mplane) if mplane is not None else None
        through.append(
            f'<figure class="tile"><figcaption>{label}</figcaption>'
            f'<img src="{_png_data_uri(_tile(plane, contour, scale))}" alt="{label}"></figure>'
        )

    meta_rows = [
        ("stack", record.stack_id),
        ("subject", record.subject_id),
        ("session / run", f"{record.session_id} / {record.run_id}"),
        ("scanner", record.scanner_id),
        ("site", record.site_id),
        ("split", record.split),
        ("dims", f"{nx} x {ny} x {nz}"),
        ("spacing [mm]", f"{sx:.3g} x {sy:.3g} x {sz:.3g}"),
        ("TR [ms]", "-" if record.tr_ms is None else f"{record.tr_ms:g}"),
        ("TE [ms]", "-" if record.te_ms is None else f"{record.te_ms:g}"),
    ]
    meta_html = "".join(
        f"<tr><th>{html.escape(k)}</th><td>{html.escape(v)}</td></tr>" for k, v in meta_rows
    )
    mask_note = "" if mask is not None else "<p class='note'>no brain mask: contour overlay omitted</p>"

    doc = f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>QA report - {html.escape(record.stack_id)}</title>
<style>
body {{ font-family: system-ui, sans-serif; margin: 1.5rem; background: #111; color: #eee; }}
h1 {{ font-size: 1.2rem; }}
table.meta {{ border-collapse: collapse; margin-bottom: 1rem; }}
table.meta th, table.meta td {{ border: 1px solid #444; padding: 2px 8px; text-align: left; font-size: 0.85rem; }}
.mosaic {{ display: flex; flex-wrap: wrap; gap: 6px; }}
.tile {{ margin: 0; text-align: center; }}
.tile figcaption {{ font-size: 0.7rem; color: #aaa; }}
.note {{ color: #fa0; }}
#rating-widget {{ position: sticky; bottom: 0; background: #1b1b1b; border-top: 2px solid #333;
                  padding: 0.5rem 1rem; margin-top: 1.5rem; }}
</style>
</head>
<body data-stack-id="{html.escape(record.stack_id)}">
<h1>QA report - {html.escape(record.stack_id)}</h1>
<table class="meta">{meta_html}</table>
{mask_note}
<h2>In-plane slices</h2>
<div class="mosaic">{''.join(tiles)}</div>
<h2>Through-plane views</h2>
<div class="mosaic">{''.join(through)}</div>
<div id="rating-widget" data-stack-id="{html.escape(record.stack_id)}"></div>
<script src="../{widget_src}"></script>
</body>
</html>
"""
    path = reports_dir / f"{record.stack_id}.html"
    path.write_text(doc)
    return path


WIDGET_STUB = """// stackqc widget stub: the interactive rating widget was not bundled.
// Build the frontend (frontend/README.md) and pass --widget-bundle to
// `stackqc report`, or POST ratings to /api/ratings directly.
(function () {
  var mount = document.getElementById('rating-widget');
  if (mount) {
    mount.textContent = 'Rating widget bundle not installed - see frontend/README.md';
  }
})();
"""


def render_reports(
    records: list[StackRecord],
    load_volume,
    load_mask,
    out_dir: str | Path,
    widget_bundle: str | Path | None = None,
) -> Path:
    """Render every stack's report plus the navigation index and stack list.

    ``load_volume`` / ``load_mask`` are callables mapping a record to its
    data, so callers control IO (and tests can feed volumes directly).
    """
    out_dir = Path(out_dir)
    (out_dir / "assets").mkdir(parents=True, exist_ok=True)
    widget_path = out_dir / "assets" / "widget.js"
    if widget_bundle is not None:
        widget_path.write_text(Path(widget_bundle).read_text())
    elif not widget_path.exists():
        widget_path.write_text(WIDGET_STUB)

    entries = []
    for record in records:
        vol = load_volume(record)
        mask = load_mask(record)
        render_report(record, vol, mask, out_dir)
        entries.append(
            {
                "stack_id": record.stack_id,
                "subject_id": record.subject_id,
                "scanner_id": record.scanner_id,
                "site_id": record.site_id,
                "split": record.split,
                "report": f"reports/{record.stack_id}.html",
            }
        )
    (out_dir / "stacks.json").write_text(json.dumps(entries, indent=1))

    rows = "".join(
        f'<tr><td><a href="{e["report"]}">{html.escape(e["stack_id"])}</a></td>'
        f'<td>{html.escape(e["subject_id"])}</td><td>{html.escape(e["scanner_id"])}</td>'
        f'<td>{html.escape(e["site_id"])}</td></tr>'
        for e in entries
    )
    index = f"""<!DOCTYPE html>
<html lang="en"><head><meta charset="utf-8"><title>QA reports</title>
<style>body {{ font-family: system-ui, sans-serif; margin: 2rem; }}
table {{ border-collapse: collapse; }} td, th {{ border: 1px solid #999; padding: 3px 10px; }}</style>
</head><body>
<h1>QA reports ({len(entries)} stacks)</h1>
<table><tr><th>stack</th><th>subject</th><th>scanner</th><th>site</th></tr>{rows}</table>
</body></html>
"""
    index_path = out_dir / "index.html"
    index_path.write_text(index)
    return index_path
