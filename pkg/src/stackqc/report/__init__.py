from stackqc.report.ratings import (
    RatingRecord,
    aggregate_ratings,
    append_rating,
    read_ratings,
    validate_rating_payload,
    write_labels_csv,
)
from stackqc.report.render import render_report, render_reports
from stackqc.report.server import make_server, serve, start_in_thread

__all__ = [
    "RatingRecord",
    "aggregate_ratings",
    "append_rating",
    "read_ratings",
    "validate_rating_payload",
    "write_labels_csv",
    "render_report",
    "render_reports",
    "make_server",
    "serve",
    "start_in_thread",
]
