import sys
from docx import Document


def load(path):
    doc = Document(path)
    return [p.text for p in doc.paragraphs]


def save_copy(doc, path):
    out = path.replace(".docx", "-edited.docx")
    doc.save(out)
    return out


if __name__ == "__main__":
    for line in load(sys.argv[2]):
        print(line)
