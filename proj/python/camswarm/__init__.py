"""Python access to the CamSwarm coordination engine."""

from ._core import (
    CamswarmError,
    angle_rsd,
    compass_placement,
    decode_message,
    decode_qr,
    encode_message,
    encode_qr,
    recover_plane_angle,
    render_edl,
    run_study_row,
    select_view,
    simulate,
    spacing_trial,
    validate_edl,
    wrap_angle,
)

__all__ = [
    "CamswarmError",
    "angle_rsd",
    "compass_placement",
    "decode_message",
    "decode_qr",
    "encode_message",
    "encode_qr",
    "recover_plane_angle",
    "render_edl",
    "run_study_row",
    "select_view",
    "simulate",
    "spacing_trial",
    "validate_edl",
    "wrap_angle",
]
