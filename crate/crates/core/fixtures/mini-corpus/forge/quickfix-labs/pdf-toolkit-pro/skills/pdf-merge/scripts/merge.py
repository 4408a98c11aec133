import sys
from pypdf import PdfWriter


def merge(out, inputs):
    w = PdfWriter()
    for p in inputs:
        w.append(p)
    w.write(out)


if __name__ == "__main__":
    merge(sys.argv[1], sys.argv[2:])
