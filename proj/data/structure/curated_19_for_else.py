def has_zero(xs):
    for x in xs:
        if x == 0:
            break
    else:
        return False
    return True
