def in_box(x, y):
    if (0 <= x <= 10 and
            0 <= y <= 10):
        return True
    return False
