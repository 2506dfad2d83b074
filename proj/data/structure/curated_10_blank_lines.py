def spaced(x):

    y = x * 2

    if y > 10:

        y = 10
    return y
