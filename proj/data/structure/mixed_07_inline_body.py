def tiny(x):
    if x: return 1
    while x > 5: x -= 1
    return x
