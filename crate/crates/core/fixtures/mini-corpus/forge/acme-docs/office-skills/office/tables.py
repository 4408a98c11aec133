def table_to_rows(table):
    return [[cell.text for cell in row.cells] for row in table.rows]
