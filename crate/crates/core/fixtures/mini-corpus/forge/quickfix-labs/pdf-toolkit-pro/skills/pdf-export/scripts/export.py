import sys
import markdown
from weasyprint import HTML


def render(src, dst, letter=False):
    html = markdown.markdown(open(src, encoding="utf-8").read())
    HTML(string=html).write_pdf(dst)


if __name__ == "__main__":
    render(sys.argv[1], sys.argv[2], "--letter" in sys.argv)
