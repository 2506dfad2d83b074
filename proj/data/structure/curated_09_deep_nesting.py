def grid_sum(rows):
    total = 0
    for row in rows:
        for cell in row:
            if cell > 0:
                if cell % 2:
                    total += cell
                else:
                    total -= cell
    return total
