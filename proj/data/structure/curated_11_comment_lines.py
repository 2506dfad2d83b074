def clamp(x, lo, hi):
    y = x
    # lower bound first
    if y < lo:
        y = lo
    # then the upper bound
    if y > hi:
        y = hi
    return y
