def first_positive(xs):
    for x in xs:  # scan in order
        if x > 0:  # found one
            return x
    return None
