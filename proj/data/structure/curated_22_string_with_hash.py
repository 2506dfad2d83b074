def tag(x):
    marker = "#:"
    if x:
        return marker + str(x)
    return marker
