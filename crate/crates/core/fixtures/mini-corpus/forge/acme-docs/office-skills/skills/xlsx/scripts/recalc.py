import openpyxl


def recalc(path, out):
    wb = openpyxl.load_workbook(path)
    wb.save(out)
