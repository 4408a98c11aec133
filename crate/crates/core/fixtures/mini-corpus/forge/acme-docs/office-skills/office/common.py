"""Shared document helpers for office skills."""
import pathlib


def edited_copy(path, suffix="-edited"):
    p = pathlib.Path(path)
    return p.with_name(p.stem + suffix + p.suffix)


def document_kind(path):
    return pathlib.Path(path).suffix.lstrip(".").lower()
