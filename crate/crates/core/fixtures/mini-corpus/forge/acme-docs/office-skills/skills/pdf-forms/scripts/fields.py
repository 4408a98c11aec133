from pypdf import PdfReader


def fields(path):
    return sorted(PdfReader(path).get_fields() or {})
