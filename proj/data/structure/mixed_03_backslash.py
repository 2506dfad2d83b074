def long_sum(a, b, c):
    value = a + \
        b + c
    return value
